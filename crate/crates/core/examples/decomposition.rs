//! Dulmage-Mendelsohn decomposition of a plain bipartite graph, then the
//! multi-mode version on the submodule, where each part becomes a set of
//! modes.
//!
//! cargo run --example decomposition

use mmdiag::battery::submodule_model;
use mmdiag::dmcore::{self, Bipartite, Part};
use mmdiag::mmdm::{self, class_count};
use mmdiag::model::{extract_structure, Approach};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // e0 and e1 both determine x0; e2, e3 share x1, x2, x3
    let g = Bipartite::new(4, 4, [(0, 0), (1, 0), (2, 1), (2, 2), (3, 2), (3, 3)]);
    let m = dmcore::max_matching(&g);
    println!("matching of size {}: {:?}", m.size(), m.pairs().collect::<Vec<_>>());
    let d = dmcore::dm_decompose(&g, &m)?;
    for part in [Part::Over, Part::Just, Part::Under] {
        println!("{part:?}: equations {:?}, variables {:?}", d.equations_in(part), d.variables_in(part));
    }
    for e in 0..4 {
        let smaller = dmcore::max_matching(&g.without_equation(e)).size();
        println!("e{e}: overdetermined {}, matching without it {smaller}", d.is_overdetermined(e));
    }

    let fm = submodule_model(Approach::Signal)?;
    let mut mgr = fm.new_manager();
    let sm = extract_structure(&fm, &mut mgr)?;
    println!(
        "\nsubmodule: {} equations, {} variables, {} edges, {:?} structural classes",
        sm.equations.len(),
        sm.variables.len(),
        sm.edges.len(),
        class_count(&mut mgr, &sm, 64)
    );
    let d = mmdm::decompose(&mut mgr, &sm);
    println!("fixpoint reached after {} sweeps", d.sweeps);
    let tt = mgr.tt();
    for (e, name) in sm.equations.iter().enumerate() {
        let over = d.eq_over[e];
        let text = if over == sm.invariant || over == tt {
            "every mode".to_string()
        } else if mgr.is_false(over) {
            "never".to_string()
        } else {
            let upper = mgr.implies(sm.invariant, over);
            mgr.isop(over, upper)
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|&(v, pos)| format!("{}{}", if pos { "" } else { "¬" }, mgr.var_name(v)))
                        .collect::<Vec<_>>()
                        .join(" ∧ ")
                })
                .collect::<Vec<_>>()
                .join(" ∨ ")
        };
        println!("  {name} overdetermined: {text}");
    }
    Ok(())
}
