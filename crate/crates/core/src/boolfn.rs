//! Reduced ordered binary decision diagrams.
//!
//! A [`Manager`] owns a node store, a unique table and an operation cache.
//! Functions are [`BoolFn`] handles into that store; two handles of the same
//! manager are equal iff the functions are semantically equal. Variables are
//! ordered by declaration, which fixes the diagram shape for a given
//! declaration sequence.
//!
//! The fallible entry points ([`Manager::apply`], [`Manager::restrict`], ...)
//! report a handle from another manager as [`BddError::ForeignFunction`]. The
//! shorthand combinators ([`Manager::and`], [`Manager::not`], ...) panic in
//! that case instead, since mixing managers there is a programming error.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};

const FALSE_NODE: u32 = 0;
const TRUE_NODE: u32 = 1;
const TERMINAL_VAR: u32 = u32::MAX;

static NEXT_MANAGER_ID: AtomicU32 = AtomicU32::new(1);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BddError {
    #[error("variable `{0}` is already declared")]
    DuplicateVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("function handle belongs to a different manager")]
    ForeignFunction,
    #[error("function depends on variable `{0}` outside the enumeration set")]
    SupportNotCovered(String),
    #[error("malformed serialized diagram: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, BddError>;

/// Position of a variable in its manager's order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Handle to a function stored in a [`Manager`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoolFn {
    mgr: u32,
    node: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    And,
    Or,
    Xor,
    Implies,
    Iff,
}

impl BinOp {
    fn code(self) -> u8 {
        match self {
            BinOp::And => 0,
            BinOp::Or => 1,
            BinOp::Xor => 2,
            BinOp::Implies => 3,
            BinOp::Iff => 4,
        }
    }

    fn commutative(self) -> bool {
        !matches!(self, BinOp::Implies)
    }
}

const NOT_CODE: u8 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Node {
    var: u32,
    low: u32,
    high: u32,
}

/// A partial or total assignment, as produced by [`Manager::models`].
pub type Assignment = Vec<(VarId, bool)>;

/// A product term of literals.
pub type Cube = Vec<(VarId, bool)>;

pub struct Manager {
    id: u32,
    names: Vec<String>,
    by_name: HashMap<String, VarId>,
    nodes: Vec<Node>,
    unique: HashMap<Node, u32>,
    cache: HashMap<(u8, u32, u32), u32>,
}

impl Default for Manager {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Manager {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Manager")
            .field("id", &self.id)
            .field("variables", &self.names)
            .field("nodes", &self.nodes.len())
            .finish()
    }
}

impl Manager {
    pub fn new() -> Self {
        let terminal = |v| Node {
            var: TERMINAL_VAR,
            low: v,
            high: v,
        };
        Manager {
            id: NEXT_MANAGER_ID.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            by_name: HashMap::new(),
            nodes: vec![terminal(FALSE_NODE), terminal(TRUE_NODE)],
            unique: HashMap::new(),
            cache: HashMap::new(),
        }
    }

    pub fn constant(&self, value: bool) -> BoolFn {
        self.handle(if value { TRUE_NODE } else { FALSE_NODE })
    }

    pub fn tt(&self) -> BoolFn {
        self.constant(true)
    }

    pub fn ff(&self) -> BoolFn {
        self.constant(false)
    }

    /// Declares `name` at the end of the variable order.
    pub fn declare(&mut self, name: &str) -> Result<VarId> {
        if self.by_name.contains_key(name) {
            return Err(BddError::DuplicateVariable(name.to_string()));
        }
        let id = VarId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Declares a fresh variable and returns its projection function.
    pub fn mk_var(&mut self, name: &str) -> Result<BoolFn> {
        let v = self.declare(name)?;
        Ok(self.var_fn(v))
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.names[v.index()]
    }

    pub fn var_count(&self) -> usize {
        self.names.len()
    }

    pub fn variables(&self) -> impl Iterator<Item = VarId> {
        (0..self.names.len() as u32).map(VarId)
    }

    /// Projection function of `v`.
    pub fn var_fn(&mut self, v: VarId) -> BoolFn {
        let n = self.mk(v.0, FALSE_NODE, TRUE_NODE);
        self.handle(n)
    }

    /// Projection function of the variable called `name`.
    pub fn named(&mut self, name: &str) -> Result<BoolFn> {
        let v = self
            .var(name)
            .ok_or_else(|| BddError::UnknownVariable(name.to_string()))?;
        Ok(self.var_fn(v))
    }

    /// Number of nodes ever created, terminals included. Nodes are never
    /// freed, so this is also the peak.
    pub fn total_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn owns(&self, f: BoolFn) -> bool {
        f.mgr == self.id && (f.node as usize) < self.nodes.len()
    }

    fn handle(&self, node: u32) -> BoolFn {
        BoolFn { mgr: self.id, node }
    }

    fn check(&self, f: BoolFn) -> Result<u32> {
        if self.owns(f) {
            Ok(f.node)
        } else {
            Err(BddError::ForeignFunction)
        }
    }

    fn expect_own(&self, f: BoolFn) -> u32 {
        match self.check(f) {
            Ok(n) => n,
            Err(_) => panic!("BoolFn used with a manager that does not own it"),
        }
    }

    fn mk(&mut self, var: u32, low: u32, high: u32) -> u32 {
        if low == high {
            return low;
        }
        let node = Node { var, low, high };
        if let Some(&id) = self.unique.get(&node) {
            return id;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(node);
        self.unique.insert(node, id);
        id
    }

    fn var_of(&self, n: u32) -> u32 {
        self.nodes[n as usize].var
    }

    fn cofactors(&self, n: u32, var: u32) -> (u32, u32) {
        let node = self.nodes[n as usize];
        if node.var == var {
            (node.low, node.high)
        } else {
            (n, n)
        }
    }

    pub fn apply(&mut self, op: BinOp, f: BoolFn, g: BoolFn) -> Result<BoolFn> {
        let (a, b) = (self.check(f)?, self.check(g)?);
        let r = self.apply_rec(op, a, b);
        Ok(self.handle(r))
    }

    pub fn negate(&mut self, f: BoolFn) -> Result<BoolFn> {
        let a = self.check(f)?;
        let r = self.not_rec(a);
        Ok(self.handle(r))
    }

    fn not_rec(&mut self, f: u32) -> u32 {
        match f {
            FALSE_NODE => return TRUE_NODE,
            TRUE_NODE => return FALSE_NODE,
            _ => {}
        }
        if let Some(&r) = self.cache.get(&(NOT_CODE, f, 0)) {
            return r;
        }
        let Node { var, low, high } = self.nodes[f as usize];
        let l = self.not_rec(low);
        let h = self.not_rec(high);
        let r = self.mk(var, l, h);
        self.cache.insert((NOT_CODE, f, 0), r);
        r
    }

    fn apply_rec(&mut self, op: BinOp, f: u32, g: u32) -> u32 {
        use BinOp::*;
        match op {
            And => {
                if f == FALSE_NODE || g == FALSE_NODE {
                    return FALSE_NODE;
                }
                if f == TRUE_NODE || f == g {
                    return g;
                }
                if g == TRUE_NODE {
                    return f;
                }
            }
            Or => {
                if f == TRUE_NODE || g == TRUE_NODE {
                    return TRUE_NODE;
                }
                if f == FALSE_NODE || f == g {
                    return g;
                }
                if g == FALSE_NODE {
                    return f;
                }
            }
            Xor => {
                if f == g {
                    return FALSE_NODE;
                }
                if f == FALSE_NODE {
                    return g;
                }
                if g == FALSE_NODE {
                    return f;
                }
                if f == TRUE_NODE {
                    return self.not_rec(g);
                }
                if g == TRUE_NODE {
                    return self.not_rec(f);
                }
            }
            Implies => {
                if f == FALSE_NODE || g == TRUE_NODE || f == g {
                    return TRUE_NODE;
                }
                if f == TRUE_NODE {
                    return g;
                }
                if g == FALSE_NODE {
                    return self.not_rec(f);
                }
            }
            Iff => {
                if f == g {
                    return TRUE_NODE;
                }
                if f == TRUE_NODE {
                    return g;
                }
                if g == TRUE_NODE {
                    return f;
                }
                if f == FALSE_NODE {
                    return self.not_rec(g);
                }
                if g == FALSE_NODE {
                    return self.not_rec(f);
                }
            }
        }
        let (f, g) = if op.commutative() && g < f { (g, f) } else { (f, g) };
        let key = (op.code(), f, g);
        if let Some(&r) = self.cache.get(&key) {
            return r;
        }
        let var = self.var_of(f).min(self.var_of(g));
        let (f0, f1) = self.cofactors(f, var);
        let (g0, g1) = self.cofactors(g, var);
        let low = self.apply_rec(op, f0, g0);
        let high = self.apply_rec(op, f1, g1);
        let r = self.mk(var, low, high);
        self.cache.insert(key, r);
        r
    }

    pub fn and(&mut self, f: BoolFn, g: BoolFn) -> BoolFn {
        let (a, b) = (self.expect_own(f), self.expect_own(g));
        let r = self.apply_rec(BinOp::And, a, b);
        self.handle(r)
    }

    pub fn or(&mut self, f: BoolFn, g: BoolFn) -> BoolFn {
        let (a, b) = (self.expect_own(f), self.expect_own(g));
        let r = self.apply_rec(BinOp::Or, a, b);
        self.handle(r)
    }

    pub fn xor(&mut self, f: BoolFn, g: BoolFn) -> BoolFn {
        let (a, b) = (self.expect_own(f), self.expect_own(g));
        let r = self.apply_rec(BinOp::Xor, a, b);
        self.handle(r)
    }

    pub fn implies(&mut self, f: BoolFn, g: BoolFn) -> BoolFn {
        let (a, b) = (self.expect_own(f), self.expect_own(g));
        let r = self.apply_rec(BinOp::Implies, a, b);
        self.handle(r)
    }

    pub fn iff(&mut self, f: BoolFn, g: BoolFn) -> BoolFn {
        let (a, b) = (self.expect_own(f), self.expect_own(g));
        let r = self.apply_rec(BinOp::Iff, a, b);
        self.handle(r)
    }

    pub fn not(&mut self, f: BoolFn) -> BoolFn {
        let a = self.expect_own(f);
        let r = self.not_rec(a);
        self.handle(r)
    }

    /// `f ∧ ¬g`
    pub fn diff(&mut self, f: BoolFn, g: BoolFn) -> BoolFn {
        let ng = self.not(g);
        self.and(f, ng)
    }

    pub fn and_all(&mut self, fs: impl IntoIterator<Item = BoolFn>) -> BoolFn {
        let mut acc = self.tt();
        for f in fs {
            acc = self.and(acc, f);
        }
        acc
    }

    pub fn or_all(&mut self, fs: impl IntoIterator<Item = BoolFn>) -> BoolFn {
        let mut acc = self.ff();
        for f in fs {
            acc = self.or(acc, f);
        }
        acc
    }

    /// `Some(value)` for the constants, `None` otherwise.
    pub fn is_const(&self, f: BoolFn) -> Option<bool> {
        match self.expect_own(f) {
            FALSE_NODE => Some(false),
            TRUE_NODE => Some(true),
            _ => None,
        }
    }

    pub fn is_true(&self, f: BoolFn) -> bool {
        self.is_const(f) == Some(true)
    }

    pub fn is_false(&self, f: BoolFn) -> bool {
        self.is_const(f) == Some(false)
    }

    pub fn equiv(&self, f: BoolFn, g: BoolFn) -> bool {
        self.expect_own(f) == self.expect_own(g)
    }

    /// Whether `f → g` is a tautology.
    pub fn entails(&mut self, f: BoolFn, g: BoolFn) -> bool {
        let i = self.implies(f, g);
        self.is_true(i)
    }

    /// Cofactor of `f` under a partial assignment.
    pub fn restrict(&mut self, f: BoolFn, assignment: &[(VarId, bool)]) -> Result<BoolFn> {
        let root = self.check(f)?;
        let mut values = vec![None; self.names.len()];
        for &(v, b) in assignment {
            let slot = values
                .get_mut(v.index())
                .ok_or_else(|| BddError::UnknownVariable(format!("#{}", v.0)))?;
            *slot = Some(b);
        }
        let mut memo = HashMap::new();
        let r = self.restrict_rec(root, &values, &mut memo);
        Ok(self.handle(r))
    }

    fn restrict_rec(
        &mut self,
        n: u32,
        values: &[Option<bool>],
        memo: &mut HashMap<u32, u32>,
    ) -> u32 {
        if n <= TRUE_NODE {
            return n;
        }
        if let Some(&r) = memo.get(&n) {
            return r;
        }
        let Node { var, low, high } = self.nodes[n as usize];
        let r = match values[var as usize] {
            Some(false) => self.restrict_rec(low, values, memo),
            Some(true) => self.restrict_rec(high, values, memo),
            None => {
                let l = self.restrict_rec(low, values, memo);
                let h = self.restrict_rec(high, values, memo);
                self.mk(var, l, h)
            }
        };
        memo.insert(n, r);
        r
    }

    /// Existential quantification of `vars` in `f`.
    pub fn exists(&mut self, f: BoolFn, vars: &[VarId]) -> Result<BoolFn> {
        let root = self.check(f)?;
        let mut quantified = vec![false; self.names.len()];
        for v in vars {
            *quantified
                .get_mut(v.index())
                .ok_or_else(|| BddError::UnknownVariable(format!("#{}", v.0)))? = true;
        }
        let mut memo = HashMap::new();
        let r = self.exists_rec(root, &quantified, &mut memo);
        Ok(self.handle(r))
    }

    fn exists_rec(&mut self, n: u32, quantified: &[bool], memo: &mut HashMap<u32, u32>) -> u32 {
        if n <= TRUE_NODE {
            return n;
        }
        if let Some(&r) = memo.get(&n) {
            return r;
        }
        let Node { var, low, high } = self.nodes[n as usize];
        let l = self.exists_rec(low, quantified, memo);
        let r = if quantified[var as usize] && l == TRUE_NODE {
            TRUE_NODE
        } else {
            let h = self.exists_rec(high, quantified, memo);
            if quantified[var as usize] {
                self.apply_rec(BinOp::Or, l, h)
            } else {
                self.mk(var, l, h)
            }
        };
        memo.insert(n, r);
        r
    }

    /// Evaluates `f` under a total assignment given as a predicate.
    pub fn eval(&self, f: BoolFn, value: impl Fn(VarId) -> bool) -> bool {
        let mut n = self.expect_own(f);
        while n > TRUE_NODE {
            let node = self.nodes[n as usize];
            n = if value(VarId(node.var)) {
                node.high
            } else {
                node.low
            };
        }
        n == TRUE_NODE
    }

    /// Variables `f` depends on, in order.
    pub fn support(&self, f: BoolFn) -> Vec<VarId> {
        let root = self.expect_own(f);
        let mut seen = vec![false; self.nodes.len()];
        let mut in_support = vec![false; self.names.len()];
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if n <= TRUE_NODE || seen[n as usize] {
                continue;
            }
            seen[n as usize] = true;
            let node = self.nodes[n as usize];
            in_support[node.var as usize] = true;
            stack.push(node.low);
            stack.push(node.high);
        }
        in_support
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| VarId(i as u32))
            .collect()
    }

    /// Number of internal nodes reachable from `f`.
    pub fn node_count(&self, f: BoolFn) -> usize {
        let root = self.expect_own(f);
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if n <= TRUE_NODE || !seen.insert(n) {
                continue;
            }
            let node = self.nodes[n as usize];
            stack.push(node.low);
            stack.push(node.high);
        }
        seen.len()
    }

    fn ensure_covered(&self, f: BoolFn, over: &[VarId]) -> Result<Vec<VarId>> {
        self.check(f)?;
        let mut over = over.to_vec();
        over.sort();
        over.dedup();
        for v in self.support(f) {
            if over.binary_search(&v).is_err() {
                return Err(BddError::SupportNotCovered(self.var_name(v).to_string()));
            }
        }
        Ok(over)
    }

    /// Enumerates the satisfying assignments of `f` over `over`, in
    /// lexicographic order with `false < true` along the variable order.
    pub fn models(
        &self,
        f: BoolFn,
        over: &[VarId],
    ) -> Result<std::vec::IntoIter<Assignment>> {
        let over = self.ensure_covered(f, over)?;
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(over.len());
        self.models_rec(f.node, &over, 0, &mut current, &mut out);
        Ok(out.into_iter())
    }

    fn models_rec(
        &self,
        n: u32,
        over: &[VarId],
        pos: usize,
        current: &mut Assignment,
        out: &mut Vec<Assignment>,
    ) {
        if n == FALSE_NODE {
            return;
        }
        if pos == over.len() {
            out.push(current.clone());
            return;
        }
        let v = over[pos];
        let (lo, hi) = self.cofactors(n, v.0);
        for (b, child) in [(false, lo), (true, hi)] {
            current.push((v, b));
            self.models_rec(child, over, pos + 1, current, out);
            current.pop();
        }
    }

    /// Number of satisfying assignments of `f` over `over`.
    pub fn sat_count(&self, f: BoolFn, over: &[VarId]) -> Result<u128> {
        let over = self.ensure_covered(f, over)?;
        let mut memo = HashMap::new();
        Ok(self.count_rec(f.node, &over, 0, &mut memo))
    }

    fn count_rec(
        &self,
        n: u32,
        over: &[VarId],
        pos: usize,
        memo: &mut HashMap<(u32, usize), u128>,
    ) -> u128 {
        if n == FALSE_NODE {
            return 0;
        }
        if n == TRUE_NODE {
            return 1u128 << (over.len() - pos);
        }
        if let Some(&c) = memo.get(&(n, pos)) {
            return c;
        }
        let v = over[pos];
        let (lo, hi) = self.cofactors(n, v.0);
        let c = self.count_rec(lo, over, pos + 1, memo) + self.count_rec(hi, over, pos + 1, memo);
        memo.insert((n, pos), c);
        c
    }

    /// One satisfying assignment of the support of `f`, preferring `false`.
    pub fn pick_model(&self, f: BoolFn) -> Option<Assignment> {
        let mut n = self.expect_own(f);
        if n == FALSE_NODE {
            return None;
        }
        let mut out = Vec::new();
        while n > TRUE_NODE {
            let node = self.nodes[n as usize];
            if node.low != FALSE_NODE {
                out.push((VarId(node.var), false));
                n = node.low;
            } else {
                out.push((VarId(node.var), true));
                n = node.high;
            }
        }
        Some(out)
    }

    /// Stable text form: `root R: (id, var, low, high) ...` with nodes
    /// numbered in post-order from 2 (0 and 1 are the constants).
    pub fn serialize(&self, f: BoolFn) -> String {
        let root = self.expect_own(f);
        let mut ids: HashMap<u32, u32> = HashMap::new();
        ids.insert(FALSE_NODE, 0);
        ids.insert(TRUE_NODE, 1);
        let mut lines = Vec::new();
        self.serialize_rec(root, &mut ids, &mut lines);
        let mut out = format!("root {}", ids[&root]);
        if !lines.is_empty() {
            out.push(':');
            for l in lines {
                out.push(' ');
                out.push_str(&l);
            }
        }
        out
    }

    fn serialize_rec(&self, n: u32, ids: &mut HashMap<u32, u32>, lines: &mut Vec<String>) {
        if ids.contains_key(&n) {
            return;
        }
        let node = self.nodes[n as usize];
        self.serialize_rec(node.low, ids, lines);
        self.serialize_rec(node.high, ids, lines);
        let id = ids.len() as u32;
        ids.insert(n, id);
        lines.push(format!(
            "({}, {}, {}, {})",
            id,
            self.names[node.var as usize],
            ids[&node.low],
            ids[&node.high]
        ));
    }

    /// Rebuilds a function from [`Manager::serialize`] output. Variables are
    /// matched by name and must already be declared here.
    pub fn deserialize(&mut self, text: &str) -> Result<BoolFn> {
        let malformed = |m: &str| BddError::Malformed(m.to_string());
        let text = text.trim();
        let rest = text
            .strip_prefix("root ")
            .ok_or_else(|| malformed("missing `root` header"))?;
        let (root_str, body) = match rest.split_once(':') {
            Some((r, b)) => (r.trim(), b.trim()),
            None => (rest.trim(), ""),
        };
        let root_id: u32 = root_str
            .parse()
            .map_err(|_| malformed("root id is not an integer"))?;
        let mut built: Vec<u32> = vec![FALSE_NODE, TRUE_NODE];
        let mut body = body;
        while !body.is_empty() {
            let open = body
                .strip_prefix('(')
                .ok_or_else(|| malformed("expected `(`"))?;
            let close = open.find(')').ok_or_else(|| malformed("expected `)`"))?;
            let fields: Vec<&str> = open[..close].split(',').map(str::trim).collect();
            body = open[close + 1..].trim_start();
            if fields.len() != 4 {
                return Err(malformed("node needs four fields"));
            }
            let id: usize = fields[0].parse().map_err(|_| malformed("bad node id"))?;
            if id != built.len() {
                return Err(malformed("node ids must be consecutive from 2"));
            }
            let var = self
                .var(fields[1])
                .ok_or_else(|| BddError::UnknownVariable(fields[1].to_string()))?;
            let child = |s: &str| -> Result<u32> {
                let c: usize = s.parse().map_err(|_| malformed("bad child id"))?;
                built
                    .get(c)
                    .copied()
                    .ok_or_else(|| malformed("child refers to a later node"))
            };
            let (low, high) = (child(fields[2])?, child(fields[3])?);
            let v = self.var_fn(var);
            let r = self.ite_raw(v.node, high, low);
            built.push(r);
        }
        let r = built
            .get(root_id as usize)
            .copied()
            .ok_or_else(|| malformed("root refers to a missing node"))?;
        Ok(self.handle(r))
    }

    fn ite_raw(&mut self, c: u32, t: u32, e: u32) -> u32 {
        let ct = self.apply_rec(BinOp::And, c, t);
        let nc = self.not_rec(c);
        let ce = self.apply_rec(BinOp::And, nc, e);
        self.apply_rec(BinOp::Or, ct, ce)
    }

    /// If-then-else.
    pub fn ite(&mut self, c: BoolFn, t: BoolFn, e: BoolFn) -> BoolFn {
        let (c, t, e) = (self.expect_own(c), self.expect_own(t), self.expect_own(e));
        let r = self.ite_raw(c, t, e);
        self.handle(r)
    }

    /// Copies `f` from `src` into `self`, matching variables by name.
    pub fn transfer_from(&mut self, src: &Manager, f: BoolFn) -> Result<BoolFn> {
        let root = src.check(f)?;
        let mut memo: HashMap<u32, u32> = HashMap::new();
        memo.insert(FALSE_NODE, FALSE_NODE);
        memo.insert(TRUE_NODE, TRUE_NODE);
        let r = self.transfer_rec(src, root, &mut memo)?;
        Ok(self.handle(r))
    }

    fn transfer_rec(&mut self, src: &Manager, n: u32, memo: &mut HashMap<u32, u32>) -> Result<u32> {
        if let Some(&r) = memo.get(&n) {
            return Ok(r);
        }
        let node = src.nodes[n as usize];
        let name = &src.names[node.var as usize];
        let v = self
            .var(name)
            .ok_or_else(|| BddError::UnknownVariable(name.clone()))?;
        let low = self.transfer_rec(src, node.low, memo)?;
        let high = self.transfer_rec(src, node.high, memo)?;
        let vf = self.var_fn(v);
        let r = self.ite_raw(vf.node, high, low);
        memo.insert(n, r);
        Ok(r)
    }

    /// Irredundant sum-of-products cover of some function between `lower`
    /// and `upper` (Minato-Morreale). Requires `lower → upper`.
    pub fn isop(&mut self, lower: BoolFn, upper: BoolFn) -> Vec<Cube> {
        let (l, u) = (self.expect_own(lower), self.expect_own(upper));
        assert!(
            self.entails(lower, upper),
            "isop requires the lower bound to imply the upper bound"
        );
        let mut memo = HashMap::new();
        let (cubes, _) = self.isop_rec(l, u, &mut memo);
        cubes
    }

    fn isop_rec(
        &mut self,
        l: u32,
        u: u32,
        memo: &mut HashMap<(u32, u32), (Vec<Cube>, u32)>,
    ) -> (Vec<Cube>, u32) {
        if l == FALSE_NODE {
            return (Vec::new(), FALSE_NODE);
        }
        if u == TRUE_NODE {
            return (vec![Vec::new()], TRUE_NODE);
        }
        if let Some(r) = memo.get(&(l, u)) {
            return r.clone();
        }
        let var = self.var_of(l).min(self.var_of(u));
        let (l0, l1) = self.cofactors(l, var);
        let (u0, u1) = self.cofactors(u, var);
        let nu1 = self.not_rec(u1);
        let nu0 = self.not_rec(u0);
        let l0_only = self.apply_rec(BinOp::And, l0, nu1);
        let l1_only = self.apply_rec(BinOp::And, l1, nu0);
        let (c0, f0) = self.isop_rec(l0_only, u0, memo);
        let (c1, f1) = self.isop_rec(l1_only, u1, memo);
        let nf0 = self.not_rec(f0);
        let nf1 = self.not_rec(f1);
        let r0 = self.apply_rec(BinOp::And, l0, nf0);
        let r1 = self.apply_rec(BinOp::And, l1, nf1);
        let rest = self.apply_rec(BinOp::Or, r0, r1);
        let both = self.apply_rec(BinOp::And, u0, u1);
        let (cs, fs) = self.isop_rec(rest, both, memo);
        let mut cubes = Vec::with_capacity(c0.len() + c1.len() + cs.len());
        for mut c in c0 {
            c.insert(0, (VarId(var), false));
            cubes.push(c);
        }
        for mut c in c1 {
            c.insert(0, (VarId(var), true));
            cubes.push(c);
        }
        cubes.extend(cs);
        let v = self.mk(var, FALSE_NODE, TRUE_NODE);
        let nv = self.not_rec(v);
        let a = self.apply_rec(BinOp::And, nv, f0);
        let b = self.apply_rec(BinOp::And, v, f1);
        let ab = self.apply_rec(BinOp::Or, a, b);
        let f = self.apply_rec(BinOp::Or, ab, fs);
        memo.insert((l, u), (cubes.clone(), f));
        (cubes, f)
    }

    /// Builds the function of a cube.
    pub fn cube_fn(&mut self, cube: &[(VarId, bool)]) -> BoolFn {
        let mut acc = self.tt();
        for &(v, b) in cube {
            let lit = self.var_fn(v);
            let lit = if b { lit } else { self.not(lit) };
            acc = self.and(acc, lit);
        }
        acc
    }
}

/// Boolean formula over named variables; the manager-independent form of a
/// mode condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Const(bool),
    Var(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn var(name: impl Into<String>) -> Self {
        Formula::Var(name.into())
    }

    pub fn negated(self) -> Self {
        match self {
            Formula::Const(b) => Formula::Const(!b),
            Formula::Not(inner) => *inner,
            other => Formula::Not(Box::new(other)),
        }
    }

    /// Conjunction with constant folding and flattening.
    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Self {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::Const(true) => {}
                Formula::Const(false) => return Formula::Const(false),
                Formula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::Const(true),
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Self {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::Const(false) => {}
                Formula::Const(true) => return Formula::Const(true),
                Formula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::Const(false),
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    pub fn build(&self, mgr: &mut Manager) -> Result<BoolFn> {
        Ok(match self {
            Formula::Const(b) => mgr.constant(*b),
            Formula::Var(name) => mgr.named(name)?,
            Formula::Not(inner) => {
                let f = inner.build(mgr)?;
                mgr.not(f)
            }
            Formula::And(parts) => {
                let mut acc = mgr.tt();
                for p in parts {
                    let f = p.build(mgr)?;
                    acc = mgr.and(acc, f);
                }
                acc
            }
            Formula::Or(parts) => {
                let mut acc = mgr.ff();
                for p in parts {
                    let f = p.build(mgr)?;
                    acc = mgr.or(acc, f);
                }
                acc
            }
        })
    }

    pub fn eval(&self, value: &dyn Fn(&str) -> bool) -> bool {
        match self {
            Formula::Const(b) => *b,
            Formula::Var(name) => value(name),
            Formula::Not(inner) => !inner.eval(value),
            Formula::And(parts) => parts.iter().all(|p| p.eval(value)),
            Formula::Or(parts) => parts.iter().any(|p| p.eval(value)),
        }
    }

    /// Variable names in first-occurrence order.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Formula::Const(_) => {}
            Formula::Var(n) => {
                if !out.contains(n) {
                    out.push(n.clone());
                }
            }
            Formula::Not(inner) => inner.collect_vars(out),
            Formula::And(ps) | Formula::Or(ps) => ps.iter().for_each(|p| p.collect_vars(out)),
        }
    }
}

impl std::str::FromStr for Formula {
    type Err = String;

    /// Parses `!`, `&`, `|`, parentheses, `true`/`false` and variable names
    /// such as `c[2].forward`. `&` binds tighter than `|`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        struct P<'a> {
            s: &'a [u8],
            i: usize,
        }
        impl P<'_> {
            fn ws(&mut self) {
                while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
                    self.i += 1;
                }
            }
            fn eat(&mut self, c: u8) -> bool {
                self.ws();
                if self.s.get(self.i) == Some(&c) {
                    self.i += 1;
                    true
                } else {
                    false
                }
            }
            fn or(&mut self) -> std::result::Result<Formula, String> {
                let mut parts = vec![self.and()?];
                while self.eat(b'|') {
                    parts.push(self.and()?);
                }
                Ok(Formula::or(parts))
            }
            fn and(&mut self) -> std::result::Result<Formula, String> {
                let mut parts = vec![self.unary()?];
                while self.eat(b'&') {
                    parts.push(self.unary()?);
                }
                Ok(Formula::and(parts))
            }
            fn unary(&mut self) -> std::result::Result<Formula, String> {
                if self.eat(b'!') {
                    return Ok(self.unary()?.negated());
                }
                if self.eat(b'(') {
                    let f = self.or()?;
                    if !self.eat(b')') {
                        return Err(format!("expected `)` at offset {}", self.i));
                    }
                    return Ok(f);
                }
                self.ws();
                let start = self.i;
                while self.i < self.s.len()
                    && (self.s[self.i].is_ascii_alphanumeric() || b"_[].".contains(&self.s[self.i]))
                {
                    self.i += 1;
                }
                if start == self.i {
                    return Err(format!("expected a variable at offset {start}"));
                }
                let name = std::str::from_utf8(&self.s[start..self.i]).expect("ascii");
                Ok(match name {
                    "true" => Formula::Const(true),
                    "false" => Formula::Const(false),
                    _ => Formula::Var(name.to_string()),
                })
            }
        }
        let mut p = P { s: s.as_bytes(), i: 0 };
        let f = p.or()?;
        p.ws();
        if p.i != p.s.len() {
            return Err(format!("unexpected input at offset {}", p.i));
        }
        Ok(f)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write_part(p: &Formula, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match p {
                Formula::And(_) | Formula::Or(_) => write!(f, "({p})"),
                _ => write!(f, "{p}"),
            }
        }
        match self {
            Formula::Const(true) => write!(f, "true"),
            Formula::Const(false) => write!(f, "false"),
            Formula::Var(n) => write!(f, "{n}"),
            Formula::Not(inner) => {
                write!(f, "!")?;
                write_part(inner, f)
            }
            Formula::And(ps) | Formula::Or(ps) => {
                let sep = if matches!(self, Formula::And(_)) {
                    " & "
                } else {
                    " | "
                };
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{sep}")?;
                    }
                    write_part(p, f)?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> (Manager, BoolFn, BoolFn) {
        let mut m = Manager::new();
        let a = m.mk_var("a").unwrap();
        let b = m.mk_var("b").unwrap();
        (m, a, b)
    }

    #[test]
    fn formula_text_round_trip() {
        let f: Formula = "!c[1].forward & (a | !b) | true & x".parse().unwrap();
        assert_eq!(f.to_string().parse::<Formula>().unwrap(), f);
        assert!("a & ".parse::<Formula>().is_err());
        assert!("(a".parse::<Formula>().is_err());
    }

    #[test]
    fn duplicate_declaration_is_rejected() {
        let mut m = Manager::new();
        m.mk_var("forward").unwrap();
        assert_eq!(
            m.mk_var("forward"),
            Err(BddError::DuplicateVariable("forward".into()))
        );
    }

    #[test]
    fn projection_evaluates_to_its_variable() {
        let (m, a, _) = two();
        let va = m.var("a").unwrap();
        assert!(m.eval(a, |v| v == va));
        assert!(!m.eval(a, |_| false));
    }

    #[test]
    fn basic_identities() {
        let (mut m, a, b) = two();
        let na = m.not(a);
        let c = m.and(a, na);
        assert!(m.is_false(c));
        let t = m.tt();
        let o = m.or(a, t);
        assert!(m.is_true(o));
        let imp = m.implies(a, b);
        let alt = m.or(na, b);
        let same = m.iff(imp, alt);
        assert!(m.is_true(same));
        let ab = m.and(a, b);
        let ba = m.and(b, a);
        assert!(m.equiv(ab, ba));
    }

    #[test]
    fn restrict_and_exists() {
        let (mut m, a, b) = two();
        let (va, vb) = (m.var("a").unwrap(), m.var("b").unwrap());
        let ab = m.or(a, b);
        let r = m.restrict(ab, &[(va, true)]).unwrap();
        assert!(m.is_true(r));
        let ab = m.and(a, b);
        let r = m.restrict(ab, &[(vb, false)]).unwrap();
        assert!(m.is_false(r));
        let e = m.exists(ab, &[vb]).unwrap();
        assert!(m.equiv(e, a));
        let f = m.ff();
        let e = m.exists(f, &[va, vb]).unwrap();
        assert!(m.is_false(e));
    }

    #[test]
    fn models_over_superset_of_support() {
        let (m, a, _) = two();
        let (va, vb) = (m.var("a").unwrap(), m.var("b").unwrap());
        let ms: Vec<_> = m.models(a, &[va, vb]).unwrap().collect();
        assert_eq!(ms, vec![vec![(va, true), (vb, false)], vec![(va, true), (vb, true)]]);
        assert_eq!(
            m.models(a, &[vb]).unwrap_err(),
            BddError::SupportNotCovered("a".into())
        );
    }

    #[test]
    fn foreign_handles_are_reported() {
        let (mut m, a, _) = two();
        let (mut other, x, _) = two();
        assert_eq!(m.apply(BinOp::And, a, x), Err(BddError::ForeignFunction));
        assert_eq!(other.negate(a), Err(BddError::ForeignFunction));
    }

    #[test]
    fn serialize_roundtrip_and_transfer() {
        let (mut m, a, b) = two();
        let f = m.xor(a, b);
        let text = m.serialize(f);
        assert_eq!(text, "root 4: (2, b, 0, 1) (3, b, 1, 0) (4, a, 2, 3)");
        let g = m.deserialize(&text).unwrap();
        assert!(m.equiv(f, g));

        let mut n = Manager::new();
        n.declare("b").unwrap();
        n.declare("a").unwrap();
        let h = n.deserialize(&text).unwrap();
        let moved = n.transfer_from(&m, f).unwrap();
        assert!(n.equiv(h, moved));
        assert_eq!(m.serialize(m.tt()), "root 1");
        assert!(m.deserialize("root 3: (2, zz, 0, 1)").is_err());
    }

    #[test]
    fn isop_covers_exactly_within_bounds() {
        let mut m = Manager::new();
        let fw = m.mk_var("forward").unwrap();
        let bw = m.mk_var("backward").unwrap();
        let both = m.and(fw, bw);
        let inv = m.not(both);
        let cubes = m.isop(inv, inv);
        let mut cover = m.ff();
        for c in &cubes {
            let cf = m.cube_fn(c);
            cover = m.or(cover, cf);
        }
        assert!(m.equiv(cover, inv));
        assert_eq!(cubes.len(), 2);
    }

    #[test]
    fn formula_display_and_build() {
        let f = Formula::and([
            Formula::var("a"),
            Formula::or([Formula::var("b"), Formula::var("c").negated()]),
        ]);
        assert_eq!(f.to_string(), "a & (b | !c)");
        let mut m = Manager::new();
        for v in ["a", "b", "c"] {
            m.declare(v).unwrap();
        }
        let built = f.build(&mut m).unwrap();
        assert!(m.eval(built, |v| m.var_name(v) == "a"));
    }
}
