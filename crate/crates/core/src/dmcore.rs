//! Single-mode Dulmage-Mendelsohn decomposition (coarse part only).

use std::collections::VecDeque;

/// Bipartite graph of equations and variables. Vertices can be marked absent,
/// which removes them together with their edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bipartite {
    eq_present: Vec<bool>,
    var_present: Vec<bool>,
    /// Edges in insertion order.
    edges: Vec<(usize, usize)>,
    eq_adj: Vec<Vec<usize>>,
    var_adj: Vec<Vec<usize>>,
}

impl Bipartite {
    pub fn new(equations: usize, variables: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self::with_presence(vec![true; equations], vec![true; variables], edges)
    }

    /// Edges touching an absent vertex are dropped.
    pub fn with_presence(
        eq_present: Vec<bool>,
        var_present: Vec<bool>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut eq_adj = vec![Vec::new(); eq_present.len()];
        let mut var_adj = vec![Vec::new(); var_present.len()];
        let mut kept = Vec::new();
        for (e, x) in edges {
            assert!(e < eq_present.len() && x < var_present.len(), "edge ({e}, {x}) out of range");
            if !eq_present[e] || !var_present[x] || eq_adj[e].contains(&x) {
                continue;
            }
            eq_adj[e].push(x);
            var_adj[x].push(e);
            kept.push((e, x));
        }
        Bipartite {
            eq_present,
            var_present,
            edges: kept,
            eq_adj,
            var_adj,
        }
    }

    pub fn equation_count(&self) -> usize {
        self.eq_present.len()
    }

    pub fn variable_count(&self) -> usize {
        self.var_present.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, e: usize, x: usize) -> bool {
        self.eq_adj[e].contains(&x)
    }

    pub fn equation_present(&self, e: usize) -> bool {
        self.eq_present[e]
    }

    pub fn variable_present(&self, x: usize) -> bool {
        self.var_present[x]
    }

    /// Neighbouring variables of `e`, in edge order.
    pub fn neighbors(&self, e: usize) -> &[usize] {
        &self.eq_adj[e]
    }

    /// The same graph with equation `e` absent.
    pub fn without_equation(&self, e: usize) -> Bipartite {
        let mut present = self.eq_present.clone();
        present[e] = false;
        Bipartite::with_presence(present, self.var_present.clone(), self.edges.iter().copied())
    }
}

/// Partial injective map from equations to variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub eq_to_var: Vec<Option<usize>>,
    pub var_to_eq: Vec<Option<usize>>,
}

impl Matching {
    pub fn empty(g: &Bipartite) -> Self {
        Matching {
            eq_to_var: vec![None; g.equation_count()],
            var_to_eq: vec![None; g.variable_count()],
        }
    }

    pub fn size(&self) -> usize {
        self.eq_to_var.iter().filter(|m| m.is_some()).count()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.eq_to_var.iter().enumerate().filter_map(|(e, x)| x.map(|x| (e, x)))
    }

    /// Builds a matching from pairs, checking that it is one in `g`.
    pub fn from_pairs(g: &Bipartite, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, DmError> {
        let mut m = Matching::empty(g);
        for (e, x) in pairs {
            if !g.has_edge(e, x) {
                return Err(DmError::InvalidMatching(format!("({e}, {x}) is not an edge")));
            }
            if m.eq_to_var[e].is_some() || m.var_to_eq[x].is_some() {
                return Err(DmError::InvalidMatching(format!("({e}, {x}) reuses a matched vertex")));
            }
            m.eq_to_var[e] = Some(x);
            m.var_to_eq[x] = Some(e);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DmError {
    #[error("matching is not maximum (augmenting path through equation {0})")]
    NotMaximum(usize),
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
}

/// Which part of the decomposition a vertex belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Under,
    Just,
    Over,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    /// Part per equation; `None` for absent equations.
    pub equations: Vec<Option<Part>>,
    pub variables: Vec<Option<Part>>,
}

impl Decomposition {
    pub fn equations_in(&self, part: Part) -> Vec<usize> {
        indices_of(&self.equations, part)
    }

    pub fn variables_in(&self, part: Part) -> Vec<usize> {
        indices_of(&self.variables, part)
    }

    pub fn is_overdetermined(&self, e: usize) -> bool {
        self.equations[e] == Some(Part::Over)
    }
}

fn indices_of(parts: &[Option<Part>], part: Part) -> Vec<usize> {
    parts
        .iter()
        .enumerate()
        .filter(|(_, p)| **p == Some(part))
        .map(|(i, _)| i)
        .collect()
}

/// Maximum matching by Hopcroft-Karp. Searches visit equations in index order
/// and neighbours in edge order, so the result depends only on the graph.
pub fn max_matching(g: &Bipartite) -> Matching {
    let mut m = Matching::empty(g);
    let ne = g.equation_count();
    const INF: usize = usize::MAX;
    let mut dist = vec![INF; ne];
    loop {
        // layered BFS from free equations
        let mut queue = VecDeque::new();
        for (e, d) in dist.iter_mut().enumerate() {
            if g.eq_present[e] && m.eq_to_var[e].is_none() {
                *d = 0;
                queue.push_back(e);
            } else {
                *d = INF;
            }
        }
        let mut found = false;
        while let Some(e) = queue.pop_front() {
            for &x in &g.eq_adj[e] {
                match m.var_to_eq[x] {
                    None => found = true,
                    Some(e2) if dist[e2] == INF => {
                        dist[e2] = dist[e] + 1;
                        queue.push_back(e2);
                    }
                    _ => {}
                }
            }
        }
        if !found {
            return m;
        }
        let mut next = vec![0usize; ne];
        for e in 0..ne {
            if g.eq_present[e] && m.eq_to_var[e].is_none() {
                augment(g, &mut m, &mut dist, &mut next, e);
            }
        }
    }
}

fn augment(g: &Bipartite, m: &mut Matching, dist: &mut [usize], next: &mut [usize], e: usize) -> bool {
    while next[e] < g.eq_adj[e].len() {
        let x = g.eq_adj[e][next[e]];
        next[e] += 1;
        let ok = match m.var_to_eq[x] {
            None => true,
            Some(e2) => dist[e2] == dist[e].wrapping_add(1) && augment(g, m, dist, next, e2),
        };
        if ok {
            m.eq_to_var[e] = Some(x);
            m.var_to_eq[x] = Some(e);
            return true;
        }
    }
    dist[e] = usize::MAX;
    false
}

/// Coarse decomposition from a maximum matching: the overdetermined part is
/// reached by alternating paths from unmatched equations, the
/// underdetermined part from unmatched variables.
pub fn dm_decompose(g: &Bipartite, m: &Matching) -> Result<Decomposition, DmError> {
    for (e, x) in m.pairs() {
        if !g.has_edge(e, x) || m.var_to_eq[x] != Some(e) {
            return Err(DmError::InvalidMatching(format!("({e}, {x})")));
        }
    }
    let (ne, nx) = (g.equation_count(), g.variable_count());
    let mut eq_over = vec![false; ne];
    let mut var_over = vec![false; nx];
    let mut queue: VecDeque<usize> = (0..ne)
        .filter(|&e| g.eq_present[e] && m.eq_to_var[e].is_none())
        .collect();
    for &e in &queue {
        eq_over[e] = true;
    }
    while let Some(e) = queue.pop_front() {
        for &x in &g.eq_adj[e] {
            if var_over[x] || m.eq_to_var[e] == Some(x) {
                continue;
            }
            var_over[x] = true;
            match m.var_to_eq[x] {
                None => return Err(DmError::NotMaximum(e)),
                Some(e2) if !eq_over[e2] => {
                    eq_over[e2] = true;
                    queue.push_back(e2);
                }
                _ => {}
            }
        }
    }

    let mut eq_under = vec![false; ne];
    let mut var_under = vec![false; nx];
    let mut queue: VecDeque<usize> = (0..nx)
        .filter(|&x| g.var_present[x] && m.var_to_eq[x].is_none())
        .collect();
    for &x in &queue {
        var_under[x] = true;
    }
    while let Some(x) = queue.pop_front() {
        for &e in &g.var_adj[x] {
            if eq_under[e] || m.var_to_eq[x] == Some(e) {
                continue;
            }
            eq_under[e] = true;
            if let Some(x2) = m.eq_to_var[e] {
                if !var_under[x2] {
                    var_under[x2] = true;
                    queue.push_back(x2);
                }
            }
        }
    }
    if let Some(e) = (0..ne).find(|&e| eq_over[e] && eq_under[e]) {
        return Err(DmError::NotMaximum(e));
    }

    let classify = |present: bool, over: bool, under: bool| {
        present.then_some(match (over, under) {
            (true, _) => Part::Over,
            (_, true) => Part::Under,
            _ => Part::Just,
        })
    };
    Ok(Decomposition {
        equations: (0..ne).map(|e| classify(g.eq_present[e], eq_over[e], eq_under[e])).collect(),
        variables: (0..nx).map(|x| classify(g.var_present[x], var_over[x], var_under[x])).collect(),
    })
}

/// Maximum matching followed by decomposition.
pub fn decompose(g: &Bipartite) -> Decomposition {
    dm_decompose(g, &max_matching(g)).expect("Hopcroft-Karp yields a maximum matching")
}
