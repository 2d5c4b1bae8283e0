//! Cross-checks the symbolic matrices against one ordinary decomposition
//! per valid mode, on the battery and on random guarded models.
//!
//! cargo run --release --example oracle_check -- 50

use mmdiag::battery::battery_model;
use mmdiag::diagnosability::analyze;
use mmdiag::model::{flatten, parser::parse, Approach, FlatModel};
use mmdiag::oracle::{compare, diagnosability_bruteforce, random_model_pair, RandomModelSpec, DEFAULT_MODE_CAP};

fn mismatches(fm: &FlatModel) -> Result<usize, Box<dyn std::error::Error>> {
    let mut mgr = fm.new_manager();
    let (m, _) = analyze(&mut mgr, fm, 1)?;
    let brute = diagnosability_bruteforce(fm, DEFAULT_MODE_CAP)?;
    let found = compare(&mgr, &m, &brute)?;
    for mm in found.iter().take(3) {
        println!("  {}", mm.json_line());
    }
    Ok(found.len())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);

    for n in 1..=2 {
        for approach in [Approach::Signal, Approach::Boolean] {
            let fm = battery_model(n, approach)?;
            let modes = diagnosability_bruteforce(&fm, DEFAULT_MODE_CAP)?.modes.len();
            println!("pack of {n}, {approach}: {modes} modes, {} mismatches", mismatches(&fm)?);
        }
    }

    let spec = RandomModelSpec::default();
    let mut total = 0;
    for seed in 0..seeds {
        let (s, b) = random_model_pair(seed, &spec);
        for text in [&s, &b] {
            let fm = flatten(&parse(text)?, &Default::default())?;
            total += mismatches(&fm)?;
        }
    }
    println!("{seeds} random models in both flavors: {total} mismatches");

    let (sample, _) = random_model_pair(0, &spec);
    println!("\nrandom model for seed 0:\n{sample}");
    Ok(())
}
