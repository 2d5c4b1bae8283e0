//! Diagnosability matrices of the battery pack under both fault models.
//!
//! cargo run --release --example battery_pack -- 3

use std::time::Instant;

use mmdiag::battery::{battery_model, submodule_model};
use mmdiag::diagnosability::{analyze, first_disagreement, MacroTable, Renderer};
use mmdiag::model::Approach;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2);

    let sm = submodule_model(Approach::Signal)?;
    let mut mgr = sm.new_manager();
    let (m, _) = analyze(&mut mgr, &sm, 1)?;
    let r = Renderer::new(&mut mgr, &MacroTable::battery())?;
    println!("one submodule, fault signals\n{}", r.table(&mut mgr, &m));

    let signal = battery_model(n, Approach::Signal)?;
    let boolean = battery_model(n, Approach::Boolean)?;
    let mut mgr = boolean.new_manager();
    for approach in [&signal, &boolean] {
        let t = Instant::now();
        let (m, stats) = analyze(&mut mgr, approach, 1)?;
        let r = Renderer::new(&mut mgr, &MacroTable::battery())?;
        println!(
            "pack of {n}, {} faults: {} decompositions, {:.3}s",
            approach.approach,
            stats.decompositions,
            t.elapsed().as_secs_f64()
        );
        println!("{}", r.table(&mut mgr, &m));
    }

    let (a, _) = analyze(&mut mgr, &signal, 1)?;
    let (b, _) = analyze(&mut mgr, &boolean, 1)?;
    match first_disagreement(&mut mgr, &a, &b) {
        None => println!("both fault models give the same matrix"),
        Some(d) => println!("fault models disagree: {d}"),
    }
    Ok(())
}
