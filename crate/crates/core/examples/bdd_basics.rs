//! The decision diagram layer on its own: building mode sets, quantifying,
//! substituting and printing them as sums of products.
//!
//! cargo run --example bdd_basics

use mmdiag::boolfn::{Formula, Manager};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut mgr = Manager::new();
    let fw = mgr.mk_var("forward")?;
    let bw = mgr.mk_var("backward")?;
    let fault = mgr.mk_var("F_cell")?;

    let both = mgr.and(fw, bw);
    let valid = mgr.not(both);
    let either = mgr.or(fw, bw);
    let bypass = mgr.diff(valid, either);
    let modes = [mgr.var("forward").unwrap(), mgr.var("backward").unwrap()];
    println!("valid modes: {}", mgr.sat_count(valid, &modes)?);

    // same function built from text, so the two handles are identical
    let parsed = "!(forward & backward)".parse::<Formula>()?.build(&mut mgr)?;
    assert_eq!(parsed, valid);

    let no_fault = mgr.not(fault);
    let guarded = mgr.and(either, no_fault);
    let f_var = mgr.var("F_cell").unwrap();
    let healthy = mgr.restrict(guarded, &[(f_var, false)])?;
    let any = mgr.exists(guarded, &[f_var])?;
    let not_bypass = mgr.not(bypass);
    println!("restricted to F_cell = F equals ¬bypass: {}", mgr.equiv(healthy, not_bypass));
    println!("projection equals restriction: {}", mgr.equiv(any, healthy));

    let tt = mgr.tt();
    for (name, f) in [("guarded", guarded), ("bypass", bypass)] {
        let cubes = mgr.isop(f, f);
        let text: Vec<String> = cubes
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&(v, pos)| format!("{}{}", if pos { "" } else { "¬" }, mgr.var_name(v)))
                    .collect::<Vec<_>>()
                    .join(" ∧ ")
            })
            .collect();
        println!("{name} = {}", text.join(" ∨ "));
    }
    // invalid modes as don't-cares give a shorter cover
    let not_bw = mgr.not(bw);
    let fw_only = mgr.and(fw, not_bw);
    let upper = mgr.implies(valid, fw_only);
    println!(
        "forward ∧ ¬backward: {} literals, {} over valid modes",
        mgr.isop(fw_only, fw_only)[0].len(),
        mgr.isop(fw_only, upper)[0].len()
    );

    let text = mgr.serialize(guarded);
    let mut other = Manager::new();
    for n in ["forward", "backward", "F_cell"] {
        other.declare(n)?;
    }
    let copy = other.deserialize(&text)?;
    println!("serialized: {text}");
    println!("round trip nodes: {} and {}", mgr.node_count(guarded), other.node_count(copy));
    println!("total nodes: {}, tautology: {}", mgr.total_nodes(), mgr.is_true(tt));
    Ok(())
}
