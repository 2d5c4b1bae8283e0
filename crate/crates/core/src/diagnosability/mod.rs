//! Multi-mode fault detectability and isolability.
//!
//! The result is a [`DiagnosabilityMatrix`]: one row per fault, a no-fault
//! column holding detectability, and one column per fault holding
//! isolability from that fault. Every entry is a set of valid system modes.
//!
//! With fault signals, detectability needs one decomposition and each
//! detectable fault's column one more, on the model without that fault's
//! equation. With Boolean faults, a single decomposition over system modes
//! and fault variables serves every entry through substitution.

pub mod render;

use std::thread;

use crate::boolfn::{BddError, BoolFn, Manager, VarId};
use crate::mmdm;
use crate::model::{extract_structure, Approach, FlatModel, LabeledGraph, ModelError};

pub use render::{MacroTable, Renderer};

#[derive(Debug, thiserror::Error)]
pub enum DiagError {
    #[error("analysis needs a {expected} model, got a {found} model")]
    WrongApproach { expected: Approach, found: Approach },
    #[error("unknown fault `{0}`")]
    UnknownFault(String),
    #[error("fault `{0}` cannot be isolated from a fault set that contains it")]
    FaultInSet(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bdd(#[from] BddError),
    #[error("malformed matrix document: {0}")]
    Document(String),
}

/// Column of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    NoFault,
    Fault(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagnosabilityMatrix {
    pub approach: Approach,
    pub faults: Vec<String>,
    /// `entries[i][0]` is detectability of fault `i`; `entries[i][j + 1]` its
    /// isolability from fault `j`.
    pub entries: Vec<Vec<BoolFn>>,
    /// Valid system modes; every entry implies it.
    pub invariant: BoolFn,
}

/// Bookkeeping of one analysis run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AnalysisStats {
    pub decompositions: usize,
    pub sweeps: usize,
    /// Largest node store among the managers used.
    pub bdd_node_peak: usize,
}

impl DiagnosabilityMatrix {
    pub fn get(&self, fault: usize, col: Column) -> BoolFn {
        match col {
            Column::NoFault => self.entries[fault][0],
            Column::Fault(j) => self.entries[fault][j + 1],
        }
    }

    pub fn fault_index(&self, name: &str) -> Option<usize> {
        self.faults.iter().position(|f| f == name)
    }

    /// Entry by fault names; `"NF"` selects the no-fault column.
    pub fn entry(&self, fault: &str, column: &str) -> Option<BoolFn> {
        let i = self.fault_index(fault)?;
        let col = if column == "NF" {
            Column::NoFault
        } else {
            Column::Fault(self.fault_index(column)?)
        };
        Some(self.get(i, col))
    }

    pub fn columns(&self) -> impl Iterator<Item = Column> {
        std::iter::once(Column::NoFault).chain((0..self.faults.len()).map(Column::Fault))
    }

    /// Whether the entry holds in every valid mode.
    pub fn always(&self, f: BoolFn) -> bool {
        f == self.invariant
    }

    /// Same matrix with the listed faults first, in the given order, and
    /// the others after them in their current order.
    pub fn reordered(&self, first: &[String]) -> Result<DiagnosabilityMatrix, DiagError> {
        let mut order = Vec::with_capacity(self.faults.len());
        for name in first {
            let i = self.fault_index(name).ok_or_else(|| DiagError::UnknownFault(name.clone()))?;
            if !order.contains(&i) {
                order.push(i);
            }
        }
        order.extend((0..self.faults.len()).filter(|i| !first.contains(&self.faults[*i])));
        let entries = order
            .iter()
            .map(|&i| {
                std::iter::once(self.entries[i][0])
                    .chain(order.iter().map(|&j| self.entries[i][j + 1]))
                    .collect()
            })
            .collect();
        Ok(DiagnosabilityMatrix {
            approach: self.approach,
            faults: order.iter().map(|&i| self.faults[i].clone()).collect(),
            entries,
            invariant: self.invariant,
        })
    }

    /// Copies the matrix into `dst`, matching variables by name.
    pub fn transfer(&self, src: &Manager, dst: &mut Manager) -> Result<DiagnosabilityMatrix, BddError> {
        let mut entries = Vec::with_capacity(self.entries.len());
        for row in &self.entries {
            let mut out = Vec::with_capacity(row.len());
            for &f in row {
                out.push(dst.transfer_from(src, f)?);
            }
            entries.push(out);
        }
        Ok(DiagnosabilityMatrix {
            approach: self.approach,
            faults: self.faults.clone(),
            entries,
            invariant: dst.transfer_from(src, self.invariant)?,
        })
    }

    /// `{ "approach", "faults", "invariant", "matrix": { f_i: { "NF": .., f_j: .. } } }`
    /// with entries as serialized diagrams.
    pub fn to_json(&self, mgr: &Manager) -> serde_json::Value {
        let mut matrix = serde_json::Map::new();
        for (i, f) in self.faults.iter().enumerate() {
            let mut row = serde_json::Map::new();
            for col in self.columns() {
                let key = match col {
                    Column::NoFault => "NF".to_string(),
                    Column::Fault(j) => self.faults[j].clone(),
                };
                row.insert(key, mgr.serialize(self.get(i, col)).into());
            }
            matrix.insert(f.clone(), row.into());
        }
        serde_json::json!({
            "approach": self.approach.to_string(),
            "faults": self.faults,
            "invariant": mgr.serialize(self.invariant),
            "matrix": matrix,
        })
    }

    pub fn from_json(mgr: &mut Manager, doc: &serde_json::Value) -> Result<DiagnosabilityMatrix, DiagError> {
        let bad = |m: &str| DiagError::Document(m.to_string());
        let approach = doc["approach"]
            .as_str()
            .ok_or_else(|| bad("missing approach"))?
            .parse()
            .map_err(|e: String| DiagError::Document(e))?;
        let faults: Vec<String> = doc["faults"]
            .as_array()
            .ok_or_else(|| bad("missing faults"))?
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| bad("fault names must be strings")))
            .collect::<Result<_, _>>()?;
        let invariant = mgr.deserialize(doc["invariant"].as_str().ok_or_else(|| bad("missing invariant"))?)?;
        let mut entries = Vec::new();
        for f in &faults {
            let row = &doc["matrix"][f];
            let mut out = Vec::new();
            for key in std::iter::once("NF").chain(faults.iter().map(String::as_str)) {
                let text = row[key]
                    .as_str()
                    .ok_or_else(|| DiagError::Document(format!("missing entry ({f}, {key})")))?;
                out.push(mgr.deserialize(text)?);
            }
            entries.push(out);
        }
        Ok(DiagnosabilityMatrix {
            approach,
            faults,
            entries,
            invariant,
        })
    }
}

fn require(fm: &FlatModel, expected: Approach) -> Result<(), DiagError> {
    if fm.approach != expected {
        return Err(DiagError::WrongApproach {
            expected,
            found: fm.approach,
        });
    }
    Ok(())
}

/// Detectability of every fault signal from one decomposition. Faults
/// detectable in all valid modes get exactly the invariant.
pub fn detectability_signal(
    mgr: &mut Manager,
    fm: &FlatModel,
    g: &LabeledGraph,
) -> Result<(Vec<BoolFn>, AnalysisStats), DiagError> {
    require(fm, Approach::Signal)?;
    let d = mmdm::decompose(mgr, g);
    let column = fm
        .faults
        .iter()
        .map(|f| {
            let over = d.eq_over[f.equation];
            if mgr.entails(g.invariant, over) {
                g.invariant
            } else {
                over
            }
        })
        .collect();
    let stats = AnalysisStats {
        decompositions: 1,
        sweeps: d.sweeps,
        bdd_node_peak: mgr.total_nodes(),
    };
    Ok((column, stats))
}

/// Full matrix for fault signals. Columns of faults detectable somewhere are
/// computed on the model without the fault's equation; the other columns
/// copy the no-fault column. With `jobs > 1` the columns are spread over
/// threads, each with its own manager.
pub fn diagnosability_signal(
    mgr: &mut Manager,
    fm: &FlatModel,
    g: &LabeledGraph,
    jobs: usize,
) -> Result<(DiagnosabilityMatrix, AnalysisStats), DiagError> {
    let (nf, mut stats) = detectability_signal(mgr, fm, g)?;
    let n = fm.faults.len();
    let detectable: Vec<usize> = (0..n).filter(|&j| !mgr.is_false(nf[j])).collect();
    let mut columns: Vec<Option<Vec<BoolFn>>> = vec![None; n];

    let column_of = |mgr: &mut Manager, g: &LabeledGraph, j: usize| -> (Vec<BoolFn>, usize) {
        let h = g.without_equation(mgr, fm.faults[j].equation);
        let d = mmdm::decompose(mgr, &h);
        let col = fm.faults.iter().map(|f| d.eq_over[f.equation]).collect();
        (col, d.sweeps)
    };

    if jobs <= 1 || detectable.len() <= 1 {
        for &j in &detectable {
            let (col, sweeps) = column_of(mgr, g, j);
            stats.sweeps += sweeps;
            columns[j] = Some(col);
        }
    } else {
        let chunks: Vec<Vec<usize>> = (0..jobs.min(detectable.len()))
            .map(|t| detectable.iter().copied().skip(t).step_by(jobs).collect())
            .collect();
        let results = thread::scope(|s| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| {
                    s.spawn(move || -> Result<_, DiagError> {
                        let mut local = fm.new_manager();
                        let lg = extract_structure(fm, &mut local)?;
                        let mut out = Vec::new();
                        let mut sweeps = 0;
                        for &j in chunk {
                            let (col, sw) = column_of(&mut local, &lg, j);
                            sweeps += sw;
                            out.push((j, col));
                        }
                        Ok((local, out, sweeps))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("column worker panicked"))
                .collect::<Vec<_>>()
        });
        for r in results {
            let (local, out, sweeps) = r?;
            stats.sweeps += sweeps;
            stats.bdd_node_peak = stats.bdd_node_peak.max(local.total_nodes());
            for (j, col) in out {
                let mut moved = Vec::with_capacity(col.len());
                for f in col {
                    moved.push(mgr.transfer_from(&local, f)?);
                }
                columns[j] = Some(moved);
            }
        }
    }
    stats.decompositions += detectable.len();

    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![nf[i]];
        for (j, col) in columns.iter().enumerate() {
            let e = match col {
                Some(col) if i == j => mgr.ff(),
                Some(col) => simplify(mgr, g.invariant, col[i]),
                None => nf[i],
            };
            row.push(e);
        }
        entries.push(row);
    }
    stats.bdd_node_peak = stats.bdd_node_peak.max(mgr.total_nodes());
    Ok((
        DiagnosabilityMatrix {
            approach: Approach::Signal,
            faults: fm.faults.iter().map(|f| f.name.clone()).collect(),
            entries,
            invariant: g.invariant,
        },
        stats,
    ))
}

fn simplify(mgr: &mut Manager, invariant: BoolFn, f: BoolFn) -> BoolFn {
    if mgr.entails(invariant, f) {
        invariant
    } else {
        mgr.and(f, invariant)
    }
}

/// Result of the single decomposition of a Boolean-fault model, from which
/// all detectability and isolability conditions are obtained by
/// substitution.
#[derive(Debug, Clone)]
pub struct BooleanAnalysis {
    pub faults: Vec<String>,
    fault_vars: Vec<VarId>,
    fault_equations: Vec<usize>,
    /// Modes in which each equation is overdetermined, over system modes and
    /// fault variables.
    pub eq_over: Vec<BoolFn>,
    /// Valid system modes (fault variables projected out).
    pub invariant: BoolFn,
    pub stats: AnalysisStats,
}

impl BooleanAnalysis {
    pub fn new(mgr: &mut Manager, fm: &FlatModel, g: &LabeledGraph) -> Result<Self, DiagError> {
        require(fm, Approach::Boolean)?;
        let fault_vars: Vec<VarId> = fm
            .fault_vars
            .iter()
            .map(|n| mgr.var(n).ok_or_else(|| DiagError::UnknownFault(n.clone())))
            .collect::<Result<_, _>>()?;
        let d = mmdm::decompose(mgr, g);
        let invariant = mgr.exists(g.invariant, &fault_vars)?;
        let stats = AnalysisStats {
            decompositions: 1,
            sweeps: d.sweeps,
            bdd_node_peak: mgr.total_nodes(),
        };
        Ok(BooleanAnalysis {
            faults: fm.faults.iter().map(|f| f.name.clone()).collect(),
            fault_vars: fm
                .faults
                .iter()
                .map(|f| fault_vars[fm.fault_vars.iter().position(|v| *v == f.name).expect("fault variable")])
                .collect(),
            fault_equations: fm.faults.iter().map(|f| f.equation).collect(),
            eq_over: d.eq_over,
            invariant,
            stats,
        })
    }

    pub fn fault_index(&self, name: &str) -> Result<usize, DiagError> {
        self.faults
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| DiagError::UnknownFault(name.to_string()))
    }

    /// Overdetermination of the fault's equation over system modes and
    /// fault variables.
    pub fn overdetermined(&self, fault: usize) -> BoolFn {
        self.eq_over[self.fault_equations[fault]]
    }

    /// Modes where the fault is detectable, all faults absent.
    pub fn detectability(&self, mgr: &mut Manager, fault: usize) -> Result<BoolFn, DiagError> {
        self.isolability(mgr, fault, &[])
    }

    /// Modes where `fault` is isolable from the simultaneous faults `from`:
    /// those faults present, every other fault absent.
    pub fn isolability(&self, mgr: &mut Manager, fault: usize, from: &[usize]) -> Result<BoolFn, DiagError> {
        if from.contains(&fault) {
            return Err(DiagError::FaultInSet(self.faults[fault].clone()));
        }
        let assignment: Vec<(VarId, bool)> = self
            .fault_vars
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, from.contains(&k)))
            .collect();
        let f = mgr.restrict(self.overdetermined(fault), &assignment)?;
        Ok(simplify(mgr, self.invariant, f))
    }

    /// Detectability and single-fault isolability for every pair.
    pub fn matrix(&self, mgr: &mut Manager) -> Result<DiagnosabilityMatrix, DiagError> {
        let n = self.faults.len();
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = vec![self.detectability(mgr, i)?];
            for j in 0..n {
                row.push(if i == j { mgr.ff() } else { self.isolability(mgr, i, &[j])? });
            }
            entries.push(row);
        }
        Ok(DiagnosabilityMatrix {
            approach: Approach::Boolean,
            faults: self.faults.clone(),
            entries,
            invariant: self.invariant,
        })
    }
}

/// Matrix of the model's approach, with its statistics.
pub fn analyze(
    mgr: &mut Manager,
    fm: &FlatModel,
    jobs: usize,
) -> Result<(DiagnosabilityMatrix, AnalysisStats), DiagError> {
    let g = extract_structure(fm, mgr)?;
    match fm.approach {
        Approach::Signal => diagnosability_signal(mgr, fm, &g, jobs),
        Approach::Boolean => {
            let a = BooleanAnalysis::new(mgr, fm, &g)?;
            let m = a.matrix(mgr)?;
            let mut stats = a.stats;
            stats.bdd_node_peak = mgr.total_nodes();
            Ok((m, stats))
        }
    }
}

/// First disagreement between two matrices over the same system modes,
/// pairing faults by base name (`c[1].f_cell` with `c[1].F_cell`). Both
/// matrices must live in `mgr`.
pub fn first_disagreement(
    mgr: &mut Manager,
    a: &DiagnosabilityMatrix,
    b: &DiagnosabilityMatrix,
) -> Option<String> {
    use crate::model::flatten::base_fault_name;
    if a.faults.len() != b.faults.len() {
        return Some(format!("{} faults versus {}", a.faults.len(), b.faults.len()));
    }
    let index_b: Vec<Option<usize>> = a
        .faults
        .iter()
        .map(|f| {
            let base = base_fault_name(f);
            b.faults.iter().position(|g| base_fault_name(g) == base)
        })
        .collect();
    if let Some(i) = index_b.iter().position(Option::is_none) {
        return Some(format!("fault `{}` has no counterpart", a.faults[i]));
    }
    let index_b: Vec<usize> = index_b.into_iter().map(Option::unwrap).collect();
    let inv = mgr.and(a.invariant, b.invariant);
    for (i, fi) in a.faults.iter().enumerate() {
        for col in a.columns() {
            let col_b = match col {
                Column::NoFault => Column::NoFault,
                Column::Fault(j) => Column::Fault(index_b[j]),
            };
            let x = mgr.and(a.get(i, col), inv);
            let y = mgr.and(b.get(index_b[i], col_b), inv);
            if x != y {
                let name = match col {
                    Column::NoFault => "NF".to_string(),
                    Column::Fault(j) => a.faults[j].clone(),
                };
                return Some(format!("entry ({fi}, {name}) differs"));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{flatten, parse};
    use std::collections::BTreeMap;

    const SQUARE: &str = "x, y : real; constant f_a, f_b, u : real;\ne1 : x = u + f_a; e2 : y = x + f_b;";

    fn load(src: &str) -> FlatModel {
        flatten(&parse(src).unwrap(), &BTreeMap::new()).unwrap()
    }

    #[test]
    fn square_system_detects_nothing() {
        let fm = load(SQUARE);
        let mut mgr = fm.new_manager();
        let (m, stats) = analyze(&mut mgr, &fm, 1).unwrap();
        for i in 0..2 {
            for col in m.columns() {
                assert!(mgr.is_false(m.get(i, col)));
            }
        }
        assert_eq!(stats.decompositions, 1);
    }

    #[test]
    fn undetectable_columns_copy_the_no_fault_column() {
        let src = "x : real; constant f_a, f_b, f_c, u, w : real;\n\
                   e1 : x = u + f_a; e2 : w = x + f_b;\ne3 : u = w + f_c;";
        let fm = load(src);
        let mut mgr = fm.new_manager();
        let (m, _) = analyze(&mut mgr, &fm, 1).unwrap();
        // one unknown, three equations: everything detectable and isolable
        for i in 0..3 {
            assert!(m.always(m.get(i, Column::NoFault)));
            assert!(mgr.is_false(m.get(i, Column::Fault(i))));
        }
        let fm = load("x, y : real; constant f_a, f_b, u : real;\ne1 : x = u + f_a; e2 : y = x + f_b; e3 : y = u;");
        let mut mgr = fm.new_manager();
        let (m, stats) = analyze(&mut mgr, &fm, 1).unwrap();
        assert_eq!(stats.decompositions, 3);
        for j in 0..2 {
            if mgr.is_false(m.get(j, Column::NoFault)) {
                for i in 0..2 {
                    assert_eq!(m.get(i, Column::Fault(j)), m.get(i, Column::NoFault));
                }
            }
        }
    }

    #[test]
    fn parallel_columns_match_sequential() {
        let src = "m : boolean; x, z : real; constant f_a, f_b, f_c, u, w : real;\n\
                   e1 : x = u + f_a; e2 : w = (if m then x else z) + f_b;\ne3 : u = x + f_c; e4 : z = w;";
        let fm = load(src);
        let mut mgr = fm.new_manager();
        let (seq, _) = analyze(&mut mgr, &fm, 1).unwrap();
        let (par, _) = analyze(&mut mgr, &fm, 3).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn isolability_rejects_fault_in_its_own_set() {
        let src = "F_a, F_b : boolean; x : real; constant u, w : real;\n\
                   if !F_a then e1 : x = u end; if !F_b then e2 : x = w end;";
        let fm = load(src);
        let mut mgr = fm.new_manager();
        let g = extract_structure(&fm, &mut mgr).unwrap();
        let a = BooleanAnalysis::new(&mut mgr, &fm, &g).unwrap();
        assert!(matches!(a.isolability(&mut mgr, 0, &[0]), Err(DiagError::FaultInSet(_))));
        let det = a.detectability(&mut mgr, 0).unwrap();
        assert!(mgr.is_true(det));
        let iso = a.isolability(&mut mgr, 0, &[1]).unwrap();
        assert!(mgr.is_false(iso));
        assert_eq!(a.stats.decompositions, 1);
    }

    #[test]
    fn json_round_trip() {
        let src = "m : boolean; x, z : real; constant f_a, f_b, u, w : real;\n\
                   e1 : x = u + f_a; e2 : w = (if m then x else z) + f_b; e4 : z = x;";
        let fm = load(src);
        let mut mgr = fm.new_manager();
        let (m, _) = analyze(&mut mgr, &fm, 1).unwrap();
        let doc = m.to_json(&mgr);
        let text = serde_json::to_string(&doc).unwrap();
        let mut other = fm.new_manager();
        let back = DiagnosabilityMatrix::from_json(&mut other, &serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.transfer(&other, &mut mgr).unwrap(), m);
    }

    #[test]
    fn reordering_moves_rows_and_columns_together() {
        let fm = crate::battery::submodule_model(Approach::Signal).unwrap();
        let mut mgr = fm.new_manager();
        let (m, _) = analyze(&mut mgr, &fm, 1).unwrap();
        let r = m.reordered(&["f_v_cell".to_string()]).unwrap();
        assert_eq!(r.faults, vec!["f_v_cell", "f_cell", "f_i_cell"]);
        for a in &m.faults {
            for b in m.faults.iter().map(String::as_str).chain(["NF"]) {
                assert_eq!(r.entry(a, b), m.entry(a, b));
            }
        }
        assert!(matches!(m.reordered(&["nope".to_string()]), Err(DiagError::UnknownFault(_))));
    }

    #[test]
    fn wrong_approach_is_reported() {
        let fm = load(SQUARE);
        let mut mgr = fm.new_manager();
        let g = extract_structure(&fm, &mut mgr).unwrap();
        assert!(matches!(
            BooleanAnalysis::new(&mut mgr, &fm, &g),
            Err(DiagError::WrongApproach { .. })
        ));
    }
}
