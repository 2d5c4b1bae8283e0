//! Timing sweep over battery pack sizes.

use std::time::Instant;

use crate::battery::battery_model;
use crate::diagnosability::{analyze, DiagError};
use crate::mmdm::class_count;
use crate::model::{extract_structure, Approach, ModelError};

pub const CSV_HEADER: &str = "n,approach,wall_seconds,bool_var_count,class_count,bdd_node_peak";

/// Classes per independent component above which counting gives up.
const CLASS_CAP: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub approach: Approach,
    /// Structure extraction, decomposition(s) and matrix assembly; model
    /// generation and parsing are excluded.
    pub wall_seconds: f64,
    pub bool_var_count: usize,
    /// Structural classes of valid modes; `None` when too many to count.
    pub class_count: Option<u128>,
    pub bdd_node_peak: usize,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.6},{},{},{}",
            self.n,
            self.approach,
            self.wall_seconds,
            self.bool_var_count,
            self.class_count.map(|c| c.to_string()).unwrap_or_default(),
            self.bdd_node_peak
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diag(#[from] DiagError),
}

pub fn bench_one(n: usize, approach: Approach, jobs: usize) -> Result<BenchRow, BenchError> {
    let fm = battery_model(n, approach)?;
    let mut mgr = fm.new_manager();
    let start = Instant::now();
    let (_, stats) = analyze(&mut mgr, &fm, jobs)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut counting = fm.new_manager();
    let g = extract_structure(&fm, &mut counting).map_err(ModelError::from)?;
    Ok(BenchRow {
        n,
        approach,
        wall_seconds,
        bool_var_count: fm.boolean_variable_count(),
        class_count: class_count(&mut counting, &g, CLASS_CAP),
        bdd_node_peak: stats.bdd_node_peak,
    })
}

/// Rows for every `n` in `sizes` and both approaches, signal first.
pub fn sweep(sizes: &[usize], jobs: usize) -> Result<Vec<BenchRow>, BenchError> {
    let mut rows = Vec::new();
    for &n in sizes {
        for approach in [Approach::Signal, Approach::Boolean] {
            rows.push(bench_one(n, approach, jobs)?);
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}
