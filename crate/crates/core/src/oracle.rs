//! Mode-by-mode ground truth.
//!
//! Valid modes are enumerated from the invariant formula, the model is
//! specialized at each mode straight from its flattened equations, and
//! detectability and isolability are decided with the single-mode
//! decomposition. Nothing here uses the multi-mode decomposition.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::boolfn::{BoolFn, Formula, Manager};
use crate::diagnosability::{Column, DiagnosabilityMatrix};
use crate::dmcore::{self, Bipartite};
use crate::model::{Approach, FlatExpr, FlatModel, LabeledGraph};

pub const DEFAULT_MODE_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error(
        "{vars} system mode variables exceed the enumeration cap of {cap}; \
         raise it with --mode-cap or verify a smaller instance"
    )]
    CapExceeded { vars: usize, cap: usize },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
}

/// Values of the system mode variables, in model order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ModeAssignment {
    pub values: Vec<(String, bool)>,
}

impl ModeAssignment {
    pub fn get(&self, name: &str) -> Option<bool> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// This assignment extended with Boolean faults; faults not listed in
    /// `present` are absent.
    pub fn with_faults(&self, faults: &[String], present: &[&str]) -> ModeAssignment {
        let mut values = self.values.clone();
        values.extend(faults.iter().map(|f| (f.clone(), present.contains(&f.as_str()))));
        ModeAssignment { values }
    }

    fn lookup(&self) -> impl Fn(&str) -> bool + '_ {
        move |v| self.get(v).unwrap_or_else(|| panic!("mode variable `{v}` is not assigned"))
    }

    pub fn eval_fn(&self, mgr: &Manager, f: BoolFn) -> Result<bool, OracleError> {
        let mut values = Vec::with_capacity(mgr.var_count());
        for v in mgr.variables() {
            let name = mgr.var_name(v);
            values.push(self.get(name).ok_or_else(|| OracleError::UnknownVariable(name.to_string()))?);
        }
        // only variables in the support matter; unassigned ones above are errors
        Ok(mgr.eval(f, |v| values[v.index()]))
    }
}

impl fmt::Display for ModeAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .values
            .iter()
            .map(|(n, v)| format!("{n}={}", if *v { 'T' } else { 'F' }))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Assignments of the system mode variables satisfying the invariant, in
/// counting order (first variable least significant).
pub fn enumerate_valid_modes(fm: &FlatModel, cap: usize) -> Result<Vec<ModeAssignment>, OracleError> {
    let vars = &fm.system_mode_vars;
    if vars.len() > cap || vars.len() >= 64 {
        return Err(OracleError::CapExceeded { vars: vars.len(), cap });
    }
    let inv = fm.invariant();
    let faults = fm.boolean_faults();
    let mut out = Vec::new();
    for bits in 0u64..(1u64 << vars.len()) {
        let m = ModeAssignment {
            values: vars.iter().enumerate().map(|(i, v)| (v.clone(), bits >> i & 1 == 1)).collect(),
        };
        // an invariant mentioning faults is read with all faults absent
        let full = m.with_faults(faults, &[]);
        let ok = inv.eval(&full.lookup());
        if ok {
            out.push(m);
        }
    }
    Ok(out)
}

/// Specialization from the flattened equations: an equation is present when
/// its guard holds, and an unknown is incident when one of its occurrences
/// lies on the branches selected by the mode.
pub fn specialize_source(fm: &FlatModel, m: &ModeAssignment) -> Bipartite {
    fn walk(e: &FlatExpr, value: &dyn Fn(&str) -> bool, out: &mut Vec<usize>) {
        match e {
            FlatExpr::Num(_) | FlatExpr::Constant(_) => {}
            FlatExpr::Unknown(u) => out.push(*u),
            FlatExpr::Neg(a) | FlatExpr::Der(a) => walk(a, value, out),
            FlatExpr::Bin(_, a, b) => {
                walk(a, value, out);
                walk(b, value, out);
            }
            FlatExpr::If(c, t, f) => walk(if c.eval(value) { t } else { f }, value, out),
        }
    }
    let value = m.lookup();
    let valid = fm.invariant().eval(&value);
    let eq_present: Vec<bool> = fm.equations.iter().map(|e| valid && e.guard.eval(&value)).collect();
    let mut edges = Vec::new();
    for (i, eq) in fm.equations.iter().enumerate() {
        if !eq_present[i] {
            continue;
        }
        let mut vars = Vec::new();
        walk(&eq.lhs, &value, &mut vars);
        walk(&eq.rhs, &value, &mut vars);
        edges.extend(vars.into_iter().map(|x| (i, x)));
    }
    let mut var_present = vec![false; fm.unknowns.len()];
    for &(_, x) in &edges {
        var_present[x] = true;
    }
    Bipartite::with_presence(eq_present, var_present, edges)
}

/// Specialization of the labeled graph: vertices and edges whose condition
/// holds at `m`.
pub fn specialize_model(mgr: &Manager, g: &LabeledGraph, m: &ModeAssignment) -> Result<Bipartite, OracleError> {
    let at = |f: BoolFn| m.eval_fn(mgr, f);
    let eq_present = g.eq_guards.iter().map(|&f| at(f)).collect::<Result<Vec<_>, _>>()?;
    let var_present = g.var_guards.iter().map(|&f| at(f)).collect::<Result<Vec<_>, _>>()?;
    let mut edges = Vec::new();
    for a in &g.edges {
        if at(a.guard)? {
            edges.push((a.eq, a.var));
        }
    }
    Ok(Bipartite::with_presence(eq_present, var_present, edges))
}

/// Per-mode verdicts: `verdicts[mode][fault][col]`, column 0 being
/// detectability and column `j + 1` isolability from fault `j`.
#[derive(Debug, Clone)]
pub struct BruteForce {
    pub faults: Vec<String>,
    pub modes: Vec<ModeAssignment>,
    pub verdicts: Vec<Vec<Vec<bool>>>,
}

/// Detectability and isolability in every valid mode. With fault signals,
/// isolability from `f_j` is overdetermination after removing `f_j`'s
/// equation; with Boolean faults, the mode is taken with `F_j` present and
/// all other faults absent.
pub fn diagnosability_bruteforce(fm: &FlatModel, cap: usize) -> Result<BruteForce, OracleError> {
    let modes = enumerate_valid_modes(fm, cap)?;
    let n = fm.faults.len();
    let mut verdicts = Vec::with_capacity(modes.len());
    for m in &modes {
        let mut rows = vec![vec![false; n + 1]; n];
        match fm.approach {
            Approach::Signal => {
                let g = specialize_source(fm, m);
                let nf = dmcore::decompose(&g);
                for (i, f) in fm.faults.iter().enumerate() {
                    rows[i][0] = nf.is_overdetermined(f.equation);
                }
                for (j, fj) in fm.faults.iter().enumerate() {
                    let d = dmcore::decompose(&g.without_equation(fj.equation));
                    for (i, fi) in fm.faults.iter().enumerate() {
                        rows[i][j + 1] = i != j && d.is_overdetermined(fi.equation);
                    }
                }
            }
            Approach::Boolean => {
                let faults = fm.boolean_faults();
                let nf = dmcore::decompose(&specialize_source(fm, &m.with_faults(faults, &[])));
                for (i, f) in fm.faults.iter().enumerate() {
                    rows[i][0] = nf.is_overdetermined(f.equation);
                }
                for (j, fj) in fm.faults.iter().enumerate() {
                    let at = m.with_faults(faults, &[fj.name.as_str()]);
                    let d = dmcore::decompose(&specialize_source(fm, &at));
                    for (i, fi) in fm.faults.iter().enumerate() {
                        rows[i][j + 1] = i != j && d.is_overdetermined(fi.equation);
                    }
                }
            }
        }
        verdicts.push(rows);
    }
    Ok(BruteForce {
        faults: fm.faults.iter().map(|f| f.name.clone()).collect(),
        modes,
        verdicts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub mode: String,
    pub fault: String,
    pub column: String,
    pub symbolic: bool,
    pub brute_force: bool,
}

impl Mismatch {
    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

/// Every (mode, fault, column) where the symbolic matrix and the per-mode
/// verdicts disagree, in mode-major order.
pub fn compare(
    mgr: &Manager,
    symbolic: &DiagnosabilityMatrix,
    brute: &BruteForce,
) -> Result<Vec<Mismatch>, OracleError> {
    let mut out = Vec::new();
    for (m, rows) in brute.modes.iter().zip(&brute.verdicts) {
        for (i, fault) in brute.faults.iter().enumerate() {
            let si = symbolic
                .fault_index(fault)
                .ok_or_else(|| OracleError::UnknownVariable(fault.clone()))?;
            for (c, &verdict) in rows[i].iter().enumerate() {
                let col = if c == 0 {
                    Column::NoFault
                } else {
                    Column::Fault(
                        symbolic
                            .fault_index(&brute.faults[c - 1])
                            .ok_or_else(|| OracleError::UnknownVariable(brute.faults[c - 1].clone()))?,
                    )
                };
                let s = m.eval_fn_over_system(mgr, symbolic.get(si, col))?;
                if s != verdict {
                    out.push(Mismatch {
                        mode: m.to_string(),
                        fault: fault.clone(),
                        column: if c == 0 { "NF".to_string() } else { brute.faults[c - 1].clone() },
                        symbolic: s,
                        brute_force: verdict,
                    });
                }
            }
        }
    }
    Ok(out)
}

impl ModeAssignment {
    /// Evaluates a function of system mode variables only; other variables
    /// of the manager must not be in its support.
    fn eval_fn_over_system(&self, mgr: &Manager, f: BoolFn) -> Result<bool, OracleError> {
        for v in mgr.support(f) {
            if self.get(mgr.var_name(v)).is_none() {
                return Err(OracleError::UnknownVariable(mgr.var_name(v).to_string()));
            }
        }
        Ok(mgr.eval(f, |v| self.get(mgr.var_name(v)).unwrap_or(false)))
    }
}

/// Modes where the given overdetermination functions disagree with the
/// single-mode decomposition, as `(mode, equation)` pairs.
pub fn compare_overdetermined(
    mgr: &Manager,
    fm: &FlatModel,
    eq_over: &[BoolFn],
    cap: usize,
) -> Result<Vec<(ModeAssignment, String)>, OracleError> {
    let mut out = Vec::new();
    let faults = fm.boolean_faults();
    for m in enumerate_valid_modes(fm, cap)? {
        let m = m.with_faults(faults, &[]);
        let d = dmcore::decompose(&specialize_source(fm, &m));
        for (e, &f) in eq_over.iter().enumerate() {
            if m.eval_fn(mgr, f)? != d.is_overdetermined(e) {
                out.push((m.clone(), fm.equations[e].name.clone()));
            }
        }
    }
    Ok(out)
}

/// Parameters of the random guarded models.
#[derive(Debug, Clone, Copy)]
pub struct RandomModelSpec {
    pub max_equations: usize,
    pub max_unknowns: usize,
    pub max_mode_vars: usize,
    pub max_faults: usize,
    /// Probability of each unknown appearing in an equation.
    pub density: f64,
}

impl Default for RandomModelSpec {
    fn default() -> Self {
        RandomModelSpec {
            max_equations: 6,
            max_unknowns: 5,
            max_mode_vars: 3,
            max_faults: 3,
            density: 0.35,
        }
    }
}

fn random_guard(rng: &mut ChaCha8Rng, modes: &[String], depth: usize) -> String {
    let lit = |rng: &mut ChaCha8Rng| {
        let v = modes.choose(rng).expect("at least one mode variable");
        if rng.gen_bool(0.5) {
            format!("!{v}")
        } else {
            v.clone()
        }
    };
    if depth == 0 || rng.gen_bool(0.4) {
        return lit(rng);
    }
    let a = random_guard(rng, modes, depth - 1);
    let b = random_guard(rng, modes, depth - 1);
    match rng.gen_range(0..3) {
        0 => format!("({a} & {b})"),
        1 => format!("({a} | {b})"),
        _ => format!("!({a} & {b})"),
    }
}

/// Source text of a random model with mode-dependent incidence. The signal
/// flavor adds fault constants to distinct equations; the Boolean flavor
/// guards the same equations with `if !F_k then ... end`.
pub fn random_model(seed: u64, approach: Approach, spec: &RandomModelSpec) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ne = rng.gen_range(1..=spec.max_equations);
    let nx = rng.gen_range(1..=spec.max_unknowns);
    let nm = rng.gen_range(1..=spec.max_mode_vars);
    let nf = rng.gen_range(1..=spec.max_faults.min(ne));
    let modes: Vec<String> = (1..=nm).map(|i| format!("m{i}")).collect();
    let unknowns: Vec<String> = (1..=nx).map(|i| format!("x{i}")).collect();
    let mut fault_eqs: Vec<usize> = (0..ne).collect();
    fault_eqs.shuffle(&mut rng);
    fault_eqs.truncate(nf);
    fault_eqs.sort_unstable();

    let mut s = format!("// random model {seed}\n");
    s.push_str(&format!("{} : boolean;\n", modes.join(", ")));
    if nm >= 2 && rng.gen_bool(0.5) {
        // forbids one combination of two distinct variables, so stays satisfiable
        let mut pair = modes.clone();
        pair.shuffle(&mut rng);
        let lit = |rng: &mut ChaCha8Rng, v: &str| if rng.gen_bool(0.5) { format!("!{v}") } else { v.to_string() };
        let (a, b) = (lit(&mut rng, &pair[0]), lit(&mut rng, &pair[1]));
        s.push_str(&format!("invariant !({a} & {b});\n"));
    }
    s.push_str(&format!("{} : real;\n", unknowns.join(", ")));
    s.push_str("constant u : real;\n");
    let fault_name = |k: usize| match approach {
        Approach::Signal => format!("f_{}", k + 1),
        Approach::Boolean => format!("F_{}", k + 1),
    };
    match approach {
        Approach::Signal => {
            let fs: Vec<String> = (0..nf).map(fault_name).collect();
            s.push_str(&format!("constant {} : real;\n", fs.join(", ")));
        }
        Approach::Boolean => {
            let fs: Vec<String> = (0..nf).map(fault_name).collect();
            s.push_str(&format!("{} : boolean;\n", fs.join(", ")));
        }
    }
    for e in 0..ne {
        let mut terms = Vec::new();
        for x in &unknowns {
            if !rng.gen_bool(spec.density) {
                continue;
            }
            if rng.gen_bool(0.4) {
                let g = random_guard(&mut rng, &modes, 2);
                let other = if rng.gen_bool(0.5) {
                    "0.".to_string()
                } else {
                    unknowns.choose(&mut rng).unwrap().clone()
                };
                terms.push(format!("(if {g} then {x} else {other})"));
            } else {
                terms.push(x.clone());
            }
        }
        let fault = fault_eqs.iter().position(|&k| k == e);
        if let (Approach::Signal, Some(k)) = (approach, fault) {
            terms.push(fault_name(k));
        }
        if terms.is_empty() {
            terms.push(unknowns.choose(&mut rng).unwrap().clone());
        }
        let body = format!("e{} : u = {};", e + 1, terms.join(" + "));
        let mode_guard = rng.gen_bool(0.2).then(|| random_guard(&mut rng, &modes, 1));
        let mut guards = Vec::new();
        if let Some(g) = mode_guard {
            guards.push(g);
        }
        if let (Approach::Boolean, Some(k)) = (approach, fault) {
            guards.push(format!("!{}", fault_name(k)));
        }
        if guards.is_empty() {
            s.push_str(&format!("{body}\n"));
        } else {
            s.push_str(&format!("if {} then {body} end;\n", guards.join(" & ")));
        }
    }
    s
}

/// The same random model in both flavors, with faults paired by index.
pub fn random_model_pair(seed: u64, spec: &RandomModelSpec) -> (String, String) {
    (
        random_model(seed, Approach::Signal, spec),
        random_model(seed, Approach::Boolean, spec),
    )
}

/// Invariant of a model as a function in `mgr`.
pub fn invariant_fn(mgr: &mut Manager, fm: &FlatModel) -> BoolFn {
    fm.declare_variables(mgr).expect("model variables are unique");
    Formula::and(fm.invariants.iter().cloned())
        .build(mgr)
        .expect("invariant variables are declared")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::{battery_model, submodule_model};
    use crate::diagnosability::analyze;
    use crate::mmdm;
    use crate::model::{extract_structure, flatten, parse};
    use std::collections::BTreeMap;

    #[test]
    fn submodule_has_three_modes() {
        let fm = submodule_model(Approach::Signal).unwrap();
        let modes = enumerate_valid_modes(&fm, DEFAULT_MODE_CAP).unwrap();
        assert_eq!(modes.len(), 3);
        assert!(modes.iter().all(|m| !(m.get("forward").unwrap() && m.get("backward").unwrap())));
        let fm = battery_model(2, Approach::Signal).unwrap();
        assert_eq!(enumerate_valid_modes(&fm, DEFAULT_MODE_CAP).unwrap().len(), 9);
        assert!(matches!(
            enumerate_valid_modes(&fm, 3),
            Err(OracleError::CapExceeded { vars: 4, cap: 3 })
        ));
    }

    #[test]
    fn unsatisfiable_invariant_has_no_modes() {
        let src = "m, k : boolean; invariant m & k; invariant !m; x : real; e : x = 1;";
        // rejected at flatten time, so build the model by hand
        assert!(flatten(&parse(src).unwrap(), &BTreeMap::new()).is_err());
        let mut fm = flatten(&parse("m, k : boolean; x : real; e : x = 1;").unwrap(), &BTreeMap::new()).unwrap();
        fm.invariants = vec![Formula::var("m"), Formula::var("m").negated()];
        assert!(enumerate_valid_modes(&fm, 4).unwrap().is_empty());
    }

    #[test]
    fn bypass_drops_switch_edges() {
        let fm = submodule_model(Approach::Signal).unwrap();
        let bypass = ModeAssignment {
            values: vec![("forward".into(), false), ("backward".into(), false)],
        };
        let g = specialize_source(&fm, &bypass);
        let e4 = fm.equation_index("e4").unwrap();
        let e5 = fm.equation_index("e5").unwrap();
        let v_cell = fm.unknowns.iter().position(|u| u == "v_cell").unwrap();
        let i_pack = fm.unknowns.iter().position(|u| u == "i_pack").unwrap();
        assert!(!g.has_edge(e4, v_cell));
        assert!(!g.has_edge(e5, i_pack));
    }

    #[test]
    fn forward_and_backward_share_structure() {
        let fm = submodule_model(Approach::Signal).unwrap();
        let at = |f: bool, b: bool| {
            specialize_source(
                &fm,
                &ModeAssignment {
                    values: vec![("forward".into(), f), ("backward".into(), b)],
                },
            )
        };
        assert_eq!(at(true, false), at(false, true));
        assert_ne!(at(true, false), at(false, false));
    }

    #[test]
    fn source_and_graph_specializations_agree() {
        for approach in [Approach::Signal, Approach::Boolean] {
            let fm = battery_model(2, approach).unwrap();
            let mut mgr = fm.new_manager();
            let g = extract_structure(&fm, &mut mgr).unwrap();
            for m in enumerate_valid_modes(&fm, DEFAULT_MODE_CAP).unwrap() {
                let m = m.with_faults(fm.boolean_faults(), &[]);
                assert_eq!(specialize_source(&fm, &m), specialize_model(&mgr, &g, &m).unwrap());
            }
        }
    }

    #[test]
    fn submodule_matrix_matches_every_mode() {
        let fm = submodule_model(Approach::Signal).unwrap();
        let mut mgr = fm.new_manager();
        let (m, _) = analyze(&mut mgr, &fm, 1).unwrap();
        let brute = diagnosability_bruteforce(&fm, DEFAULT_MODE_CAP).unwrap();
        assert_eq!(brute.modes.len() * 3 * 4, 36);
        assert!(compare(&mgr, &m, &brute).unwrap().is_empty());
    }

    #[test]
    fn corrupted_matching_is_caught() {
        let fm = submodule_model(Approach::Signal).unwrap();
        let mut mgr = fm.new_manager();
        let g = extract_structure(&fm, &mut mgr).unwrap();
        let t = mmdm::symbolic_matching(&mut mgr, &g);
        // flipping a matched edge breaks the matching in the modes where it was used
        let mut caught = 0;
        for a in 0..g.edges.len() {
            if mgr.is_false(t.edge_matched[a]) {
                continue;
            }
            let mut bad = t.clone();
            bad.edge_matched[a] = mgr.diff(g.edges[a].guard, t.edge_matched[a]);
            let d = mmdm::mm_decompose(&mut mgr, &g, &bad);
            if !compare_overdetermined(&mgr, &fm, &d.eq_over, DEFAULT_MODE_CAP).unwrap().is_empty() {
                caught += 1;
            }
        }
        assert!(caught > 0);
        let d = mmdm::decompose(&mut mgr, &g);
        assert!(compare_overdetermined(&mgr, &fm, &d.eq_over, DEFAULT_MODE_CAP).unwrap().is_empty());
    }

    #[test]
    fn random_models_parse_in_both_flavors() {
        for seed in 0..20 {
            let (s, b) = random_model_pair(seed, &RandomModelSpec::default());
            let fs = flatten(&parse(&s).unwrap(), &BTreeMap::new()).unwrap();
            let fb = flatten(&parse(&b).unwrap(), &BTreeMap::new()).unwrap();
            assert_eq!(fs.approach, Approach::Signal);
            assert_eq!(fb.approach, Approach::Boolean);
            assert_eq!(fs.faults.len(), fb.faults.len());
            assert!(fs.equations.len() <= 6 && fs.system_mode_vars.len() <= 3);
            assert_eq!(random_model(seed, Approach::Signal, &RandomModelSpec::default()), s);
        }
    }
}
