//! Mode-labeled bipartite structure of a flattened model.

use crate::boolfn::{BddError, BoolFn, Formula, Manager};

use super::flatten::FlatModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub eq: usize,
    pub var: usize,
    /// Modes in which the variable occurs in the equation.
    pub guard: BoolFn,
    /// The occurrence condition alone, before conjoining the equation guard
    /// and the invariant.
    pub local: BoolFn,
}

/// Equations and unknowns with their enabling conditions. All conditions are
/// conjoined with the invariant, so they never hold in an invalid mode.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub equations: Vec<String>,
    pub eq_guards: Vec<BoolFn>,
    /// Equation guards before conjoining the invariant.
    pub eq_local_guards: Vec<BoolFn>,
    pub variables: Vec<String>,
    pub var_guards: Vec<BoolFn>,
    pub edges: Vec<Edge>,
    /// Edge indices per equation, in edge order.
    pub eq_edges: Vec<Vec<usize>>,
    /// Edge indices per variable, in edge order.
    pub var_edges: Vec<Vec<usize>>,
    pub invariant: BoolFn,
    /// Conjuncts of the invariant, one per invariant statement instance.
    pub invariant_parts: Vec<BoolFn>,
}

impl LabeledGraph {
    /// Builds a graph from raw labels. Equation and edge guards are conjoined
    /// with the invariant, edge guards with their equation guard, and
    /// variable guards are derived from the edges. The invariant is the
    /// conjunction of `invariant_parts`.
    pub fn new(
        mgr: &mut Manager,
        equations: Vec<String>,
        eq_local_guards: Vec<BoolFn>,
        variables: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize, BoolFn)>,
        invariant_parts: Vec<BoolFn>,
    ) -> Self {
        assert_eq!(equations.len(), eq_local_guards.len());
        let invariant = mgr.and_all(invariant_parts.iter().copied());
        let eq_guards: Vec<BoolFn> = eq_local_guards.iter().map(|&g| mgr.and(g, invariant)).collect();
        let edges = edges
            .into_iter()
            .map(|(eq, var, g)| {
                assert!(eq < equations.len() && var < variables.len(), "edge endpoint out of range");
                Edge {
                    eq,
                    var,
                    guard: mgr.and(g, eq_guards[eq]),
                    local: g,
                }
            })
            .collect();
        let mut g = LabeledGraph {
            var_guards: vec![mgr.ff(); variables.len()],
            eq_edges: Vec::new(),
            var_edges: Vec::new(),
            equations,
            eq_guards,
            eq_local_guards,
            variables,
            edges,
            invariant,
            invariant_parts,
        };
        g.rebuild(mgr);
        g
    }

    fn rebuild(&mut self, mgr: &mut Manager) {
        self.eq_edges = vec![Vec::new(); self.equations.len()];
        self.var_edges = vec![Vec::new(); self.variables.len()];
        for (i, a) in self.edges.iter().enumerate() {
            self.eq_edges[a.eq].push(i);
            self.var_edges[a.var].push(i);
        }
        self.var_guards = self
            .var_edges
            .iter()
            .map(|es| {
                let gs: Vec<BoolFn> = es.iter().map(|&i| self.edges[i].guard).collect();
                mgr.or_all(gs)
            })
            .collect();
    }

    pub fn equation_index(&self, name: &str) -> Option<usize> {
        self.equations.iter().position(|e| e == name)
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|x| x == name)
    }

    /// The same graph with equation `eq` disabled in every mode. Indices are
    /// kept, so results stay comparable with the full graph.
    pub fn without_equation(&self, mgr: &mut Manager, eq: usize) -> LabeledGraph {
        let mut g = self.clone();
        g.eq_guards[eq] = mgr.ff();
        g.eq_local_guards[eq] = mgr.ff();
        for a in &mut g.edges {
            if a.eq == eq {
                a.guard = mgr.ff();
                a.local = mgr.ff();
            }
        }
        g.rebuild(mgr);
        g
    }

    /// The same graph with edges listed in `order` (a permutation of edge
    /// indices).
    pub fn with_edge_order(&self, mgr: &mut Manager, order: &[usize]) -> LabeledGraph {
        assert_eq!(order.len(), self.edges.len());
        let mut g = self.clone();
        g.edges = order.iter().map(|&i| self.edges[i]).collect();
        g.rebuild(mgr);
        g
    }

    /// Checks the labeling invariants: every edge guard implies its equation
    /// guard, every guard implies the invariant, variable guards are the
    /// disjunction of their edge guards.
    pub fn check(&self, mgr: &mut Manager) -> Result<(), String> {
        for a in &self.edges {
            if !mgr.entails(a.guard, self.eq_guards[a.eq]) {
                return Err(format!(
                    "edge ({}, {}) is active outside its equation",
                    self.equations[a.eq], self.variables[a.var]
                ));
            }
        }
        for (e, &g) in self.eq_guards.iter().enumerate() {
            if !mgr.entails(g, self.invariant) {
                return Err(format!("equation {} is active in an invalid mode", self.equations[e]));
            }
        }
        for (x, es) in self.var_edges.iter().enumerate() {
            let gs: Vec<BoolFn> = es.iter().map(|&i| self.edges[i].guard).collect();
            let any = mgr.or_all(gs);
            if any != self.var_guards[x] {
                return Err(format!("guard of {} is not the union of its edges", self.variables[x]));
            }
        }
        Ok(())
    }
}

/// Builds the labeled graph of `fm` in `mgr`, declaring the model's Boolean
/// variables first if needed.
pub fn extract_structure(fm: &FlatModel, mgr: &mut Manager) -> Result<LabeledGraph, BddError> {
    fm.declare_variables(mgr)?;
    let mut invariant_parts = Vec::with_capacity(fm.invariants.len());
    for part in &fm.invariants {
        invariant_parts.push(part.build(mgr)?);
    }
    let mut eq_guards = Vec::with_capacity(fm.equations.len());
    let mut edges = Vec::new();
    for (ei, eq) in fm.equations.iter().enumerate() {
        eq_guards.push(eq.guard.build(mgr)?);
        // per unknown, the disjunction of its occurrence paths, in first-occurrence order
        let mut occurrences: Vec<(usize, Vec<Formula>)> = Vec::new();
        let mut path = Vec::new();
        for side in [&eq.lhs, &eq.rhs] {
            side.visit_unknowns(&mut path, &mut |u, conds| {
                let cond = Formula::and(conds.iter().cloned());
                match occurrences.iter_mut().find(|(x, _)| *x == u) {
                    Some((_, alts)) => alts.push(cond),
                    None => occurrences.push((u, vec![cond])),
                }
            });
        }
        for (u, alts) in occurrences {
            let g = Formula::or(alts).build(mgr)?;
            edges.push((ei, u, g));
        }
    }
    let names = fm.equations.iter().map(|e| e.name.clone()).collect();
    let mut g = LabeledGraph::new(mgr, names, eq_guards, fm.unknowns.clone(), edges, invariant_parts);
    // occurrences that can never be active are not edges
    g.edges.retain(|a| !mgr.is_false(a.guard));
    g.rebuild(mgr);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{flatten, parse};
    use std::collections::BTreeMap;

    const SM: &str = r#"
module SM()
  forward : boolean; backward : boolean;
  invariant !(forward & backward);
  v_p_der, v_p, i_cell, v_cell, v_sm, i_pack : real;
  constant Cp, Rp, R0, v_ocv, y_i_cell, y_v_cell : real;
  constant f_cell : real; constant f_i_cell : real; constant f_v_cell : real;
  e1 : v_p_der = i_cell / Cp - v_p / (Rp * Cp);
  e2 : v_cell = v_p + R0 * i_cell + v_ocv + f_cell;
  e3 : v_p_der = der(v_p);
  e4 : v_sm = if forward then v_cell else if backward then - v_cell else 0.;
  e5 : i_cell = if forward then i_pack else if backward then - i_pack else 0.;
  e6 : y_i_cell = i_cell + f_i_cell;
  e7 : y_v_cell = v_cell + f_v_cell;
end
"#;

    fn sm() -> (Manager, LabeledGraph) {
        let fm = flatten(&parse(SM).unwrap(), &BTreeMap::new()).unwrap();
        let mut mgr = fm.new_manager();
        let g = extract_structure(&fm, &mut mgr).unwrap();
        (mgr, g)
    }

    fn edge(g: &LabeledGraph, e: &str, x: &str) -> Option<BoolFn> {
        let (e, x) = (g.equation_index(e).unwrap(), g.variable_index(x).unwrap());
        g.edges.iter().find(|a| a.eq == e && a.var == x).map(|a| a.guard)
    }

    #[test]
    fn conditional_occurrence_guards() {
        let (mut mgr, g) = sm();
        let fw = mgr.named("forward").unwrap();
        let bw = mgr.named("backward").unwrap();
        let both = mgr.and(fw, bw);
        let inv = mgr.not(both);
        let either = mgr.or(fw, bw);
        let expect = mgr.and(either, inv);
        assert_eq!(edge(&g, "e4", "v_cell"), Some(expect));
        assert_eq!(edge(&g, "e4", "v_sm"), Some(inv));
        assert_eq!(edge(&g, "e1", "v_p"), Some(inv));
        // der(v_p) counts as v_p
        assert_eq!(edge(&g, "e3", "v_p"), Some(inv));
        g.check(&mut mgr).unwrap();
    }

    #[test]
    fn guarded_equation_label() {
        let src = "F_cell, m : boolean; invariant !(m & F_cell) | m; x, y : real; constant c : real;\n\
                   if !F_cell then e2 : x = c end; e3 : y = if m then x else c;";
        let fm = flatten(&parse(src).unwrap(), &BTreeMap::new()).unwrap();
        let mut mgr = fm.new_manager();
        let g = extract_structure(&fm, &mut mgr).unwrap();
        let f = mgr.named("F_cell").unwrap();
        let expect = mgr.not(f);
        let expect = mgr.and(expect, g.invariant);
        assert_eq!(g.eq_guards[0], expect);
        assert_eq!(edge(&g, "e2", "x"), Some(expect));
        let m = mgr.named("m").unwrap();
        let ey = edge(&g, "e3", "x").unwrap();
        let expect = mgr.and(m, g.invariant);
        assert_eq!(ey, expect);
        assert_eq!(g.var_guards[g.variable_index("y").unwrap()], g.invariant);
    }

    #[test]
    fn removing_an_equation_keeps_indices() {
        let (mut mgr, g) = sm();
        let e6 = g.equation_index("e6").unwrap();
        let h = g.without_equation(&mut mgr, e6);
        assert_eq!(h.equations, g.equations);
        assert!(mgr.is_false(h.eq_guards[e6]));
        assert!(h.eq_edges[e6].iter().all(|&a| mgr.is_false(h.edges[a].guard)));
        h.check(&mut mgr).unwrap();
    }
}
