//! One battery submodule: the fault-signal matrix, and the overdetermined
//! parts behind the Boolean-fault matrix.
//!
//! cargo run --example submodule

use mmdiag::battery::submodule_model;
use mmdiag::diagnosability::{analyze, BooleanAnalysis, MacroTable, Renderer};
use mmdiag::model::{extract_structure, Approach};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fm = submodule_model(Approach::Signal)?;
    let mut mgr = fm.new_manager();
    let (m, stats) = analyze(&mut mgr, &fm, 1)?;
    let r = Renderer::new(&mut mgr, &MacroTable::battery())?;
    println!("fault signals, {} decompositions", stats.decompositions);
    println!("{}", r.table(&mut mgr, &m));

    let fm = submodule_model(Approach::Boolean)?;
    let mut mgr = fm.new_manager();
    let g = extract_structure(&fm, &mut mgr)?;
    let a = BooleanAnalysis::new(&mut mgr, &fm, &g)?;
    let none = MacroTable::default();
    let r = Renderer::new(&mut mgr, &none)?;
    let tt = mgr.tt();
    for fault in ["F_cell", "F_i_cell", "F_v_cell"] {
        let i = a.fault_index(fault)?;
        let eq = &fm.equations[fm.fault(fault).expect("declared").equation].name;
        // over system modes and fault variables; only the system
        // invariant is a don't-care here
        let over = a.overdetermined(i);
        println!("{eq} ({fault}) overdetermined when {}", r.entry(&mut mgr, tt, over));
        let d = a.detectability(&mut mgr, i)?;
        println!("  faults absent: {}", r.entry(&mut mgr, a.invariant, d));
    }

    let cell = a.fault_index("F_cell")?;
    let others = [a.fault_index("F_i_cell")?, a.fault_index("F_v_cell")?];
    let double = a.isolability(&mut mgr, cell, &others)?;
    println!(
        "F_cell isolable from F_i_cell and F_v_cell together: {}",
        r.entry(&mut mgr, a.invariant, double)
    );
    Ok(())
}
