//! Multi-mode Dulmage-Mendelsohn decomposition.
//!
//! A multi-mode matching assigns each edge the set of modes in which it is
//! matched. From it, the overdetermined part is propagated along alternating
//! paths for all modes at once.

use crate::boolfn::{BoolFn, Manager};
use crate::dmcore::{max_matching, Bipartite};
use crate::model::LabeledGraph;

/// Per-edge matching conditions, indexed like [`LabeledGraph::edges`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiModeMatching {
    pub edge_matched: Vec<BoolFn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiModeDecomposition {
    /// Modes in which each equation is overdetermined.
    pub eq_over: Vec<BoolFn>,
    /// Modes in which each variable is overdetermined.
    pub var_over: Vec<BoolFn>,
    /// Propagation sweeps until nothing changed, including the final one.
    pub sweeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchingStrategy {
    /// Augmenting-path search carried out on mode sets.
    #[default]
    SymbolicAugmenting,
    /// One concrete matching per structural-signature class.
    SignatureClasses,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MmError {
    #[error("more than {0} structural classes")]
    TooManyClasses(usize),
}

/// A set of modes sharing one specialized structure.
#[derive(Debug, Clone)]
pub struct SignatureClass {
    pub modes: BoolFn,
    pub graph: Bipartite,
}

/// Partitions the valid modes into classes with identical active equations
/// and edges. Fails when more than `cap` classes arise.
pub fn signature_classes(mgr: &mut Manager, g: &LabeledGraph, cap: usize) -> Result<Vec<SignatureClass>, MmError> {
    let splitters: Vec<BoolFn> = g
        .eq_guards
        .iter()
        .copied()
        .chain(g.edges.iter().map(|a| a.guard))
        .collect();
    let classes = split_classes(mgr, g.invariant, &splitters, cap)?;
    Ok(classes
        .into_iter()
        .map(|modes| {
            let eq_present = g.eq_guards.iter().map(|&e| mgr.entails(modes, e)).collect();
            let var_present = g.var_guards.iter().map(|&x| mgr.entails(modes, x)).collect();
            let edges: Vec<(usize, usize)> = g
                .edges
                .iter()
                .filter(|a| mgr.entails(modes, a.guard))
                .map(|a| (a.eq, a.var))
                .collect();
            SignatureClass {
                modes,
                graph: Bipartite::with_presence(eq_present, var_present, edges),
            }
        })
        .collect())
}

/// Splits `domain` by each splitter in turn, dropping empty parts.
fn split_classes(mgr: &mut Manager, domain: BoolFn, splitters: &[BoolFn], cap: usize) -> Result<Vec<BoolFn>, MmError> {
    if mgr.is_false(domain) {
        return Ok(Vec::new());
    }
    let mut classes = vec![domain];
    for &s in splitters {
        let mut next = Vec::with_capacity(classes.len());
        for c in classes {
            let inside = mgr.and(c, s);
            if inside == c || mgr.is_false(inside) {
                next.push(c);
                continue;
            }
            next.push(inside);
            next.push(mgr.diff(c, s));
        }
        if next.len() > cap {
            return Err(MmError::TooManyClasses(cap));
        }
        classes = next;
    }
    Ok(classes)
}

/// Number of structural classes, computed without enumerating them jointly:
/// mode variables are grouped into components that no guard or invariant
/// conjunct connects, and the per-component counts are multiplied.
/// Returns `None` when a component exceeds `cap` classes.
pub fn class_count(mgr: &mut Manager, g: &LabeledGraph, cap: usize) -> Option<u128> {
    let nv = mgr.var_count();
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    // an edge is active under local ∧ equation guard ∧ invariant
    let mut pieces: Vec<BoolFn> = g.invariant_parts.clone();
    pieces.extend(g.eq_local_guards.iter().copied());
    let edge_pieces: Vec<BoolFn> = g
        .edges
        .iter()
        .map(|a| mgr.and(a.local, g.eq_local_guards[a.eq]))
        .collect();
    pieces.extend(edge_pieces.iter().copied());
    for &f in &pieces {
        let sup = mgr.support(f);
        for w in sup.windows(2) {
            let (a, b) = (find(&mut parent, w[0].index()), find(&mut parent, w[1].index()));
            parent[a] = b;
        }
    }
    let used: Vec<usize> = pieces
        .iter()
        .flat_map(|&f| mgr.support(f))
        .map(|v| v.index())
        .collect();
    let mut roots: Vec<usize> = used.iter().map(|&v| find(&mut parent, v)).collect();
    roots.sort_unstable();
    roots.dedup();

    let mut total: u128 = 1;
    for root in roots {
        let in_comp = |mgr: &Manager, f: BoolFn, parent: &mut Vec<usize>| {
            let sup = mgr.support(f);
            !sup.is_empty() && find(parent, sup[0].index()) == root
        };
        let mut domain = mgr.tt();
        for &p in &g.invariant_parts {
            if in_comp(mgr, p, &mut parent) {
                domain = mgr.and(domain, p);
            }
        }
        let mut splitters = Vec::new();
        for &f in g.eq_local_guards.iter().chain(edge_pieces.iter()) {
            if in_comp(mgr, f, &mut parent) {
                splitters.push(f);
            }
        }
        total = total.checked_mul(split_classes(mgr, domain, &splitters, cap).ok()?.len() as u128)?;
    }
    // an unsatisfiable invariant leaves no class at all
    if mgr.is_false(g.invariant) {
        return Some(0);
    }
    Some(total)
}

pub fn mm_matching(mgr: &mut Manager, g: &LabeledGraph, strategy: MatchingStrategy) -> Result<MultiModeMatching, MmError> {
    match strategy {
        MatchingStrategy::SymbolicAugmenting => Ok(symbolic_matching(mgr, g)),
        MatchingStrategy::SignatureClasses => class_matching(mgr, g, usize::MAX),
    }
}

/// Matching assembled from one concrete maximum matching per class.
pub fn class_matching(mgr: &mut Manager, g: &LabeledGraph, cap: usize) -> Result<MultiModeMatching, MmError> {
    let classes = signature_classes(mgr, g, cap)?;
    let mut edge_matched = vec![mgr.ff(); g.edges.len()];
    for class in &classes {
        let m = max_matching(&class.graph);
        for (i, a) in g.edges.iter().enumerate() {
            if m.eq_to_var[a.eq] == Some(a.var) {
                edge_matched[i] = mgr.or(edge_matched[i], class.modes);
            }
        }
    }
    Ok(MultiModeMatching { edge_matched })
}

struct Augmenter<'g> {
    g: &'g LabeledGraph,
    matched: Vec<BoolFn>,
    eq_matched: Vec<BoolFn>,
    var_matched: Vec<BoolFn>,
    visited: Vec<BoolFn>,
}

/// Kuhn's augmenting-path algorithm run on mode sets: every operation acts
/// pointwise on modes, so restricted to a single mode this is the concrete
/// algorithm with the same visiting order, and yields a maximum matching.
pub fn symbolic_matching(mgr: &mut Manager, g: &LabeledGraph) -> MultiModeMatching {
    let ff = mgr.ff();
    let mut st = Augmenter {
        g,
        matched: vec![ff; g.edges.len()],
        eq_matched: vec![ff; g.equations.len()],
        var_matched: vec![ff; g.variables.len()],
        visited: vec![ff; g.variables.len()],
    };
    // greedy start
    for e in 0..g.equations.len() {
        for &a in &g.eq_edges[e] {
            let x = g.edges[a].var;
            let taken = mgr.or(st.eq_matched[e], st.var_matched[x]);
            let free = mgr.diff(g.edges[a].guard, taken);
            if mgr.is_false(free) {
                continue;
            }
            st.matched[a] = mgr.or(st.matched[a], free);
            st.eq_matched[e] = mgr.or(st.eq_matched[e], free);
            st.var_matched[x] = mgr.or(st.var_matched[x], free);
        }
    }
    for e in 0..g.equations.len() {
        let open = mgr.diff(g.eq_guards[e], st.eq_matched[e]);
        if mgr.is_false(open) {
            continue;
        }
        st.visited.iter_mut().for_each(|v| *v = ff);
        st.augment(mgr, e, open);
    }
    MultiModeMatching {
        edge_matched: st.matched,
    }
}

impl Augmenter<'_> {
    /// Tries to find augmenting paths from `e` in the modes `modes`; returns
    /// the modes where one was found and applied.
    fn augment(&mut self, mgr: &mut Manager, e: usize, modes: BoolFn) -> BoolFn {
        let g = self.g;
        let mut remaining = modes;
        for &a in &g.eq_edges[e] {
            if mgr.is_false(remaining) {
                break;
            }
            let x = g.edges[a].var;
            let reach = mgr.and(remaining, g.edges[a].guard);
            let reach = mgr.diff(reach, self.visited[x]);
            let reach = mgr.diff(reach, self.matched[a]);
            if mgr.is_false(reach) {
                continue;
            }
            self.visited[x] = mgr.or(self.visited[x], reach);
            let free = mgr.diff(reach, self.var_matched[x]);
            let busy = mgr.and(reach, self.var_matched[x]);
            let mut done = free;
            if !mgr.is_false(busy) {
                for &a2 in &g.var_edges[x] {
                    if a2 == a {
                        continue;
                    }
                    let sub = mgr.and(busy, self.matched[a2]);
                    if mgr.is_false(sub) {
                        continue;
                    }
                    let moved = self.augment(mgr, g.edges[a2].eq, sub);
                    if !mgr.is_false(moved) {
                        self.matched[a2] = mgr.diff(self.matched[a2], moved);
                        done = mgr.or(done, moved);
                    }
                }
            }
            if mgr.is_false(done) {
                continue;
            }
            self.matched[a] = mgr.or(self.matched[a], done);
            self.eq_matched[e] = mgr.or(self.eq_matched[e], done);
            self.var_matched[x] = mgr.or(self.var_matched[x], free);
            remaining = mgr.diff(remaining, done);
        }
        mgr.diff(modes, remaining)
    }
}

/// Alternating-path fixpoint from the modes in which each equation is
/// unmatched.
pub fn mm_decompose(mgr: &mut Manager, g: &LabeledGraph, t: &MultiModeMatching) -> MultiModeDecomposition {
    assert_eq!(t.edge_matched.len(), g.edges.len(), "matching does not belong to this graph");
    let ff = mgr.ff();
    let unmatched_edge: Vec<BoolFn> = g
        .edges
        .iter()
        .zip(&t.edge_matched)
        .map(|(a, &m)| mgr.diff(a.guard, m))
        .collect();
    let mut eq_over: Vec<BoolFn> = (0..g.equations.len())
        .map(|e| {
            let matched = mgr.or_all(g.eq_edges[e].iter().map(|&a| t.edge_matched[a]));
            mgr.diff(g.eq_guards[e], matched)
        })
        .collect();
    let mut var_over = vec![ff; g.variables.len()];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut changed = false;
        for (x, over) in var_over.iter_mut().enumerate() {
            let mut reach = ff;
            for &a in &g.var_edges[x] {
                let step = mgr.and(unmatched_edge[a], eq_over[g.edges[a].eq]);
                reach = mgr.or(reach, step);
            }
            let reach = mgr.and(reach, g.var_guards[x]);
            let next = mgr.or(*over, reach);
            if next != *over {
                *over = next;
                changed = true;
            }
        }
        for (e, over) in eq_over.iter_mut().enumerate() {
            let mut reach = ff;
            for &a in &g.eq_edges[e] {
                let step = mgr.and(t.edge_matched[a], var_over[g.edges[a].var]);
                reach = mgr.or(reach, step);
            }
            let reach = mgr.and(reach, g.eq_guards[e]);
            let next = mgr.or(*over, reach);
            if next != *over {
                *over = next;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    MultiModeDecomposition {
        eq_over,
        var_over,
        sweeps,
    }
}

/// Matching and decomposition with the default strategy.
pub fn decompose(mgr: &mut Manager, g: &LabeledGraph) -> MultiModeDecomposition {
    let t = symbolic_matching(mgr, g);
    mm_decompose(mgr, g, &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmcore;
    use crate::model::{extract_structure, flatten, parse};
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

    /// All assignments over the manager's variables that satisfy `f`.
    fn points(mgr: &Manager, f: BoolFn) -> Vec<Vec<bool>> {
        let n = mgr.var_count();
        (0..1u32 << n)
            .map(|bits| (0..n).map(|i| bits >> i & 1 == 1).collect::<Vec<_>>())
            .filter(|p| mgr.eval(f, |v| p[v.index()]))
            .collect()
    }

    fn specialize(mgr: &Manager, g: &LabeledGraph, p: &[bool]) -> Bipartite {
        let at = |f: BoolFn| mgr.eval(f, |v| p[v.index()]);
        Bipartite::with_presence(
            g.eq_guards.iter().map(|&f| at(f)).collect(),
            g.var_guards.iter().map(|&f| at(f)).collect(),
            g.edges.iter().filter(|a| at(a.guard)).map(|a| (a.eq, a.var)),
        )
    }

    #[test]
    fn sm_has_two_classes() {
        let (mut mgr, g) = sm();
        let classes = signature_classes(&mut mgr, &g, 100).unwrap();
        assert_eq!(classes.len(), 2);
        let union = mgr.or_all(classes.iter().map(|c| c.modes));
        assert_eq!(union, g.invariant);
        assert_eq!(class_count(&mut mgr, &g, 100), Some(2));
    }

    #[test]
    fn mode_free_model_is_one_class() {
        let mut mgr = Manager::new();
        let tt = mgr.tt();
        let g = LabeledGraph::new(&mut mgr, vec!["e".into()], vec![tt], vec!["x".into()], [(0, 0, tt)], vec![]);
        let classes = signature_classes(&mut mgr, &g, 10).unwrap();
        assert_eq!(classes.len(), 1);
        assert!(mgr.is_true(classes[0].modes));
        let t = symbolic_matching(&mut mgr, &g);
        assert!(mgr.is_true(t.edge_matched[0]));
    }

    #[test]
    fn matchings_are_maximum_per_mode() {
        let (mut mgr, g) = sm();
        for strategy in [MatchingStrategy::SymbolicAugmenting, MatchingStrategy::SignatureClasses] {
            let t = mm_matching(&mut mgr, &g, strategy).unwrap();
            for (a, &m) in g.edges.iter().zip(&t.edge_matched) {
                assert!(mgr.entails(m, a.guard));
            }
            for p in points(&mgr, g.invariant) {
                let b = specialize(&mgr, &g, &p);
                let pairs: Vec<_> = g
                    .edges
                    .iter()
                    .zip(&t.edge_matched)
                    .filter(|(_, &m)| mgr.eval(m, |v| p[v.index()]))
                    .map(|(a, _)| (a.eq, a.var))
                    .collect();
                let m = dmcore::Matching::from_pairs(&b, pairs).unwrap();
                assert_eq!(m.size(), max_matching(&b).size());
            }
        }
    }

    #[test]
    fn sm_overdetermined_parts() {
        let (mut mgr, g) = sm();
        let d = decompose(&mut mgr, &g);
        let e2 = g.equation_index("e2").unwrap();
        assert_eq!(d.eq_over[e2], g.invariant);

        let e6 = g.equation_index("e6").unwrap();
        let h = g.without_equation(&mut mgr, e6);
        let d = decompose(&mut mgr, &h);
        let fw = mgr.named("forward").unwrap();
        let bw = mgr.named("backward").unwrap();
        let either = mgr.or(fw, bw);
        let bypass = mgr.not(either);
        assert_eq!(d.eq_over[e2], bypass);
    }

    #[test]
    fn fixpoint_agrees_with_single_mode_decomposition() {
        let (mut mgr, g) = sm();
        let d = decompose(&mut mgr, &g);
        for (e, &f) in d.eq_over.iter().enumerate() {
            assert!(mgr.entails(f, g.eq_guards[e]));
        }
        for p in points(&mgr, g.invariant) {
            let single = dmcore::decompose(&specialize(&mgr, &g, &p));
            for e in 0..g.equations.len() {
                assert_eq!(mgr.eval(d.eq_over[e], |v| p[v.index()]), single.is_overdetermined(e));
            }
        }
        assert!(d.sweeps <= g.equations.len() + g.variables.len() + 1);
    }

    #[test]
    fn class_cap_is_enforced() {
        let mut mgr = Manager::new();
        let vars: Vec<BoolFn> = (0..4).map(|i| mgr.mk_var(&format!("m{i}")).unwrap()).collect();
        let tt = mgr.tt();
        let edges: Vec<_> = vars.iter().enumerate().map(|(i, &v)| (0, i, v)).collect();
        let names = (0..4).map(|i| format!("x{i}")).collect();
        let g = LabeledGraph::new(&mut mgr, vec!["e".into()], vec![tt], names, edges, vec![]);
        assert_eq!(signature_classes(&mut mgr, &g, 16).unwrap().len(), 16);
        assert!(signature_classes(&mut mgr, &g, 15).is_err());
        assert_eq!(class_count(&mut mgr, &g, 16), Some(16));
    }
}
