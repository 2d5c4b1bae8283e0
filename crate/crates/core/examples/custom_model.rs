//! A hand-written model with its own mode variables and print macros: two
//! tanks joined by a valve, with a pump that only runs while the valve is
//! open.
//!
//! cargo run --example custom_model

use std::collections::BTreeMap;

use mmdiag::diagnosability::{analyze, MacroTable, Renderer};
use mmdiag::model::{flatten_with, parser::parse, FlattenOptions};

const TANKS: &str = "
open : boolean;
pump : boolean;
invariant !(pump & !open);

h1, h2, h1_der, h2_der, q, u : real;
constant y1, y2, y_q, y_u : real;
constant f_h1, f_h2, f_q, f_pump : real;

e1 : h1_der = (if pump then u else 0.) - q;
e2 : h2_der = q - h2;
e3 : h1_der = der(h1);
e4 : h2_der = der(h2);
e5 : q = if open then h1 - h2 else 0.;
e6 : y_u = u + f_pump;
e7 : y1 = h1 + f_h1;
e8 : y2 = h2 + f_h2;
e9 : y_q = q + f_q;
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fm = flatten_with(&parse(TANKS)?, &FlattenOptions::default())?;
    for w in &fm.warnings {
        println!("warning: {w}");
    }
    println!(
        "{} equations, {} unknowns, faults {:?}",
        fm.equations.len(),
        fm.unknowns.len(),
        fm.fault_vars
    );

    let mut mgr = fm.new_manager();
    let (m, _) = analyze(&mut mgr, &fm, 1)?;

    let plain = Renderer::new(&mut mgr, &MacroTable::default())?;
    println!("{}", plain.table(&mut mgr, &m));

    let mut names = BTreeMap::new();
    names.insert("running".to_string(), "pump".to_string());
    names.insert("idle".to_string(), "open & !pump".to_string());
    let named = Renderer::new(&mut mgr, &MacroTable::default().with(&names))?;
    println!("{}", named.table(&mut mgr, &m));
    print!("{}", named.csv(&mut mgr, &m));
    Ok(())
}
