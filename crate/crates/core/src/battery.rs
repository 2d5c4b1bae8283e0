//! Model text of the modular switched battery: full-bridge submodules with
//! cell, cell current and cell voltage faults, and a pack with current and
//! voltage sensors.

use std::collections::BTreeMap;

use crate::model::{flatten, parse, Approach, FlatModel, ModelError};

fn submodule(approach: Approach) -> String {
    let mut s = String::from(
        "module SM()
  // mode variables
  forward : boolean;
  backward : boolean;
  invariant !(forward & backward);
  v_p_der, v_p, i_cell, v_cell, v_sm, i_pack : real;
  constant Cp, Rp, R0, v_ocv, y_i_cell, y_v_cell : real;
",
    );
    match approach {
        Approach::Signal => s.push_str(
            "  // faults
  constant f_cell : real;
  constant f_i_cell : real;
  constant f_v_cell : real;
  e1 : v_p_der = i_cell / Cp - v_p / (Rp * Cp);
  e2 : v_cell = v_p + R0 * i_cell + v_ocv + f_cell;
  e3 : v_p_der = der(v_p);
  e4 : v_sm =
       if forward then v_cell else
       if backward then - v_cell
       else 0.;
  e5 : i_cell =
       if forward then i_pack else
       if backward then - i_pack
       else 0.;
  e6 : y_i_cell = i_cell + f_i_cell;
  e7 : y_v_cell = v_cell + f_v_cell;
end
",
        ),
        Approach::Boolean => s.push_str(
            "  // faults
  F_cell : boolean;
  F_i_cell : boolean;
  F_v_cell : boolean;
  e1 : v_p_der = i_cell / Cp - v_p / (Rp * Cp);
  if !F_cell then e2 : v_cell = v_p + R0 * i_cell + v_ocv end;
  e3 : v_p_der = der(v_p);
  e4 : v_sm =
       if forward then v_cell else
       if backward then - v_cell
       else 0.;
  e5 : i_cell =
       if forward then i_pack else
       if backward then - i_pack
       else 0.;
  if !F_i_cell then e6 : y_i_cell = i_cell end;
  if !F_v_cell then e7 : y_v_cell = v_cell end;
end
",
        ),
    }
    s
}

/// A single submodule on its own, without pack sensors.
pub fn generate_submodule(approach: Approach) -> String {
    format!("// One battery submodule, {approach} faults\n{}", submodule(approach))
}

/// A pack of `n` submodules.
pub fn generate_battery(n: usize, approach: Approach) -> String {
    let pack = match approach {
        Approach::Signal => {
            "v_pack, i_pack : real;
constant y_i_pack, y_v_pack : real;
constant f_i_pack, f_v_pack : real;
c[1 .. N] : SM();
g1 : v_pack = sum { k in 1 .. N : c[k].v_sm };
foreach k in 1 .. N do
  g2[k] : i_pack = c[k].i_pack;
done;
g3 : y_i_pack = i_pack + f_i_pack;
g4 : y_v_pack = v_pack + f_v_pack;
"
        }
        Approach::Boolean => {
            "v_pack, i_pack : real;
constant y_i_pack, y_v_pack : real;
F_i_pack : boolean;
F_v_pack : boolean;
c[1 .. N] : SM();
g1 : v_pack = sum { k in 1 .. N : c[k].v_sm };
foreach k in 1 .. N do
  g2[k] : i_pack = c[k].i_pack;
done;
if !F_i_pack then g3 : y_i_pack = i_pack end;
if !F_v_pack then g4 : y_v_pack = v_pack end;
"
        }
    };
    format!(
        "// Battery pack of N submodules, {approach} faults\nparameter N = {n};\n\n{}\n{pack}",
        submodule(approach)
    )
}

pub fn battery_model(n: usize, approach: Approach) -> Result<FlatModel, ModelError> {
    flatten(&parse(&generate_battery(n, approach))?, &BTreeMap::new())
}

pub fn submodule_model(approach: Approach) -> Result<FlatModel, ModelError> {
    flatten(&parse(&generate_submodule(approach))?, &BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_pack_size() {
        for n in 0..4 {
            let s = battery_model(n, Approach::Signal).unwrap();
            let b = battery_model(n, Approach::Boolean).unwrap();
            assert_eq!(s.equations.len(), 8 * n + 3);
            assert_eq!(b.equations.len(), 8 * n + 3);
            assert_eq!(s.faults.len(), 3 * n + 2);
            assert_eq!(b.faults.len(), 3 * n + 2);
            assert_eq!(s.boolean_variable_count(), 2 * n);
            assert_eq!(b.boolean_variable_count(), 5 * n + 2);
            assert!(s.warnings.is_empty());
        }
    }

    #[test]
    fn submodule_alone() {
        let fm = submodule_model(Approach::Signal).unwrap();
        assert_eq!(fm.equations.len(), 7);
        assert_eq!(fm.fault_vars, vec!["f_cell", "f_i_cell", "f_v_cell"]);
        assert_eq!(fm.system_mode_vars, vec!["forward", "backward"]);
        let fm = submodule_model(Approach::Boolean).unwrap();
        assert_eq!(fm.boolean_variables(), vec!["forward", "backward", "F_cell", "F_i_cell", "F_v_cell"]);
    }
}
