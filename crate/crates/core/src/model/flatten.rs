use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::lexer::Pos;
use super::ModelError;
use crate::boolfn::{BddError, Formula, Manager};

/// How faults enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    /// Faults are real constants added to equations.
    Signal,
    /// Faults are Boolean variables whose truth disables an equation.
    Boolean,
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::Signal => "signal",
            Approach::Boolean => "boolean",
        })
    }
}

impl std::str::FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "signal" => Ok(Approach::Signal),
            "boolean" => Ok(Approach::Boolean),
            other => Err(format!("unknown approach `{other}` (expected signal or boolean)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Equation expression after instance expansion. Symbols are indices into
/// [`FlatModel::unknowns`] or [`FlatModel::constants`].
#[derive(Debug, Clone, PartialEq)]
pub enum FlatExpr {
    Num(f64),
    Unknown(usize),
    Constant(usize),
    Neg(Box<FlatExpr>),
    Bin(ArithOp, Box<FlatExpr>, Box<FlatExpr>),
    If(Formula, Box<FlatExpr>, Box<FlatExpr>),
    Der(Box<FlatExpr>),
}

impl FlatExpr {
    /// Calls `f(unknown, path_condition)` for each syntactic occurrence of an
    /// unknown, with the branch conditions leading to it.
    pub fn visit_unknowns(&self, path: &mut Vec<Formula>, f: &mut dyn FnMut(usize, &[Formula])) {
        match self {
            FlatExpr::Num(_) | FlatExpr::Constant(_) => {}
            FlatExpr::Unknown(u) => f(*u, path),
            FlatExpr::Neg(a) | FlatExpr::Der(a) => a.visit_unknowns(path, f),
            FlatExpr::Bin(_, a, b) => {
                a.visit_unknowns(path, f);
                b.visit_unknowns(path, f);
            }
            FlatExpr::If(c, t, e) => {
                path.push(c.clone());
                t.visit_unknowns(path, f);
                path.pop();
                path.push(c.clone().negated());
                e.visit_unknowns(path, f);
                path.pop();
            }
        }
    }

    pub fn mentions_constant(&self, idx: usize) -> bool {
        match self {
            FlatExpr::Constant(c) => *c == idx,
            FlatExpr::Num(_) | FlatExpr::Unknown(_) => false,
            FlatExpr::Neg(a) | FlatExpr::Der(a) => a.mentions_constant(idx),
            FlatExpr::Bin(_, a, b) => a.mentions_constant(idx) || b.mentions_constant(idx),
            FlatExpr::If(_, t, e) => t.mentions_constant(idx) || e.mentions_constant(idx),
        }
    }

    /// Mode variables used in if-then-else conditions.
    pub fn condition_variables(&self, out: &mut Vec<String>) {
        match self {
            FlatExpr::Num(_) | FlatExpr::Unknown(_) | FlatExpr::Constant(_) => {}
            FlatExpr::Neg(a) | FlatExpr::Der(a) => a.condition_variables(out),
            FlatExpr::Bin(_, a, b) => {
                a.condition_variables(out);
                b.condition_variables(out);
            }
            FlatExpr::If(c, t, e) => {
                for v in c.variables() {
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
                t.condition_variables(out);
                e.condition_variables(out);
            }
        }
    }

    pub fn render(&self, fm: &FlatModel) -> String {
        match self {
            FlatExpr::Num(n) => format!("{n}"),
            FlatExpr::Unknown(u) => fm.unknowns[*u].clone(),
            FlatExpr::Constant(c) => fm.constants[*c].clone(),
            FlatExpr::Neg(a) => format!("-({})", a.render(fm)),
            FlatExpr::Der(a) => format!("der({})", a.render(fm)),
            FlatExpr::Bin(op, a, b) => {
                let s = match op {
                    ArithOp::Add => "+",
                    ArithOp::Sub => "-",
                    ArithOp::Mul => "*",
                    ArithOp::Div => "/",
                    ArithOp::Pow => "^",
                };
                format!("({} {s} {})", a.render(fm), b.render(fm))
            }
            FlatExpr::If(c, t, e) => {
                format!("(if {c} then {} else {})", t.render(fm), e.render(fm))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatEquation {
    pub name: String,
    /// Conjunction of the enclosing `if G then ... end` guards.
    pub guard: Formula,
    pub lhs: FlatExpr,
    pub rhs: FlatExpr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultInfo {
    pub name: String,
    pub approach: Approach,
    /// Index of the fault's equation in [`FlatModel::equations`].
    pub equation: usize,
}

impl FaultInfo {
    /// Name without the instance prefix and without the `f_`/`F_` marker,
    /// e.g. `c[2].cell` for `c[2].f_cell`. Used to pair faults across the two
    /// modeling approaches.
    pub fn base_name(&self) -> String {
        base_fault_name(&self.name)
    }
}

pub fn base_fault_name(name: &str) -> String {
    let (prefix, local) = match name.rfind('.') {
        Some(i) => name.split_at(i + 1),
        None => ("", name),
    };
    let stripped = local
        .strip_prefix("f_")
        .or_else(|| local.strip_prefix("F_"))
        .unwrap_or(local);
    format!("{prefix}{stripped}")
}

/// A flattened equation system.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatModel {
    pub equations: Vec<FlatEquation>,
    pub unknowns: Vec<String>,
    pub constants: Vec<String>,
    /// System mode variables `S`, in textual order.
    pub system_mode_vars: Vec<String>,
    /// Fault names, in textual order: Boolean fault variables or fault-signal
    /// constants depending on [`FlatModel::approach`].
    pub fault_vars: Vec<String>,
    pub faults: Vec<FaultInfo>,
    pub approach: Approach,
    /// Invariant conjuncts, one per `invariant` statement instance.
    pub invariants: Vec<Formula>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FlattenOptions {
    pub params: BTreeMap<String, i64>,
    pub fault_prefixes: Vec<String>,
    /// Explicit fault list (full or local names); replaces prefix detection.
    pub faults: Option<Vec<String>>,
}

impl Default for FlattenOptions {
    fn default() -> Self {
        FlattenOptions {
            params: BTreeMap::new(),
            fault_prefixes: vec!["f_".into(), "F_".into()],
            faults: None,
        }
    }
}

impl FlattenOptions {
    pub fn with_params(params: BTreeMap<String, i64>) -> Self {
        FlattenOptions {
            params,
            ..Default::default()
        }
    }
}

pub fn flatten(ast: &SourceModel, params: &BTreeMap<String, i64>) -> Result<FlatModel, ModelError> {
    flatten_with(ast, &FlattenOptions::with_params(params.clone()))
}

pub fn flatten_with(ast: &SourceModel, opts: &FlattenOptions) -> Result<FlatModel, ModelError> {
    let mut fl = Flattener {
        ast,
        opts,
        symbols: Vec::new(),
        symbol_index: HashMap::new(),
        equations: Vec::new(),
        invariants: Vec::new(),
        module_decls: HashMap::new(),
        interned: RefCell::new(Vec::new()),
    };
    for m in &ast.modules {
        fl.module_decls.insert(m.name.clone(), collect_decls(&m.body));
    }
    let scope = Scope {
        prefix: String::new(),
        decls: collect_decls(ast.root()),
        params: collect_params(ast.root(), &opts.params),
        loops: Vec::new(),
        guards: Vec::new(),
    };
    fl.scope(ast.root(), scope)?;
    fl.finish()
}

#[derive(Debug, Clone, Default)]
struct Decls {
    symbols: HashMap<String, DeclKind>,
    /// instance name -> (module, optional (lo, hi) range expressions)
    instances: HashMap<String, (String, Option<(Expr, Expr)>)>,
}

fn collect_decls(stmts: &[Stmt]) -> Decls {
    fn walk(stmts: &[Stmt], d: &mut Decls) {
        for s in stmts {
            match s {
                Stmt::Decl { names, kind } => {
                    for (n, _) in names {
                        d.symbols.insert(n.clone(), *kind);
                    }
                }
                Stmt::Instance {
                    name,
                    range,
                    module,
                    ..
                } => {
                    d.instances.insert(name.clone(), (module.clone(), range.clone()));
                }
                Stmt::Guarded { body, .. } | Stmt::Foreach { body, .. } => walk(body, d),
                _ => {}
            }
        }
    }
    let mut d = Decls::default();
    walk(stmts, &mut d);
    d
}

/// File parameters, overridden by externally supplied ones.
fn collect_params(stmts: &[Stmt], external: &BTreeMap<String, i64>) -> HashMap<String, i64> {
    let mut out: HashMap<String, i64> = external.iter().map(|(k, v)| (k.clone(), *v)).collect();
    for s in stmts {
        if let Stmt::Parameter { name, value, .. } = s {
            out.entry(name.clone()).or_insert(*value);
        }
    }
    out
}

struct Scope {
    prefix: String,
    decls: Decls,
    params: HashMap<String, i64>,
    loops: Vec<(String, i64)>,
    guards: Vec<Formula>,
}

#[derive(Debug, Clone)]
struct Symbol {
    name: String,
    kind: DeclKind,
}

struct Flattener<'a> {
    ast: &'a SourceModel,
    opts: &'a FlattenOptions,
    symbols: Vec<Symbol>,
    symbol_index: HashMap<String, usize>,
    equations: Vec<(FlatEquation, Pos)>,
    invariants: Vec<Formula>,
    module_decls: HashMap<String, Decls>,
    /// Symbol names referenced by equations, bound to indices in `finish`.
    interned: RefCell<Vec<String>>,
}

fn semantic(pos: Pos, message: impl Into<String>) -> ModelError {
    ModelError::Semantic {
        message: message.into(),
        pos,
    }
}

impl<'a> Flattener<'a> {
    fn scope(&mut self, stmts: &'a [Stmt], mut scope: Scope) -> Result<(), ModelError> {
        self.stmts(stmts, &mut scope)
    }

    fn stmts(&mut self, stmts: &'a [Stmt], scope: &mut Scope) -> Result<(), ModelError> {
        for s in stmts {
            self.stmt(s, scope)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &'a Stmt, scope: &mut Scope) -> Result<(), ModelError> {
        match s {
            Stmt::Decl { names, kind } => {
                if !scope.loops.is_empty() {
                    return Err(semantic(names[0].1, "declarations are not allowed inside foreach"));
                }
                for (n, pos) in names {
                    let full = format!("{}{}", scope.prefix, n);
                    if self.symbol_index.contains_key(&full) {
                        return Err(semantic(*pos, format!("`{full}` declared twice")));
                    }
                    self.symbol_index.insert(full.clone(), self.symbols.len());
                    self.symbols.push(Symbol {
                        name: full,
                        kind: *kind,
                    });
                }
            }
            Stmt::Parameter { .. } => {}
            Stmt::Invariant(e) => {
                let inv = self.cond(e, scope)?;
                let guard = Formula::and(scope.guards.iter().cloned());
                self.invariants.push(Formula::or([guard.negated(), inv]));
            }
            Stmt::Equation(eq) => {
                let mut name = format!("{}{}", scope.prefix, eq.name);
                if let Some(ix) = &eq.index {
                    let i = self.int(ix, scope)?;
                    name = format!("{name}[{i}]");
                }
                let lhs = self.value(&eq.lhs, scope)?;
                let rhs = self.value(&eq.rhs, scope)?;
                let guard = Formula::and(scope.guards.iter().cloned());
                self.equations.push((
                    FlatEquation {
                        name,
                        guard,
                        lhs,
                        rhs,
                    },
                    eq.pos,
                ));
            }
            Stmt::Guarded { guard, body, .. } => {
                let g = self.cond(guard, scope)?;
                scope.guards.push(g);
                let r = self.stmts(body, scope);
                scope.guards.pop();
                r?;
            }
            Stmt::Foreach {
                var, lo, hi, body, ..
            } => {
                let (lo, hi) = (self.int(lo, scope)?, self.int(hi, scope)?);
                for k in lo..=hi {
                    scope.loops.push((var.clone(), k));
                    let r = self.stmts(body, scope);
                    scope.loops.pop();
                    r?;
                }
            }
            Stmt::Instance {
                name,
                range,
                module,
                pos,
            } => {
                let def = self
                    .ast
                    .module(module)
                    .ok_or_else(|| semantic(*pos, format!("unknown module `{module}`")))?;
                let indices: Vec<Option<i64>> = match range {
                    Some((lo, hi)) => {
                        let (lo, hi) = (self.int(lo, scope)?, self.int(hi, scope)?);
                        (lo..=hi).map(Some).collect()
                    }
                    None => vec![None],
                };
                for ix in indices {
                    let prefix = match ix {
                        Some(i) => format!("{}{}[{}].", scope.prefix, name, i),
                        None => format!("{}{}.", scope.prefix, name),
                    };
                    let inner = Scope {
                        prefix,
                        decls: self.module_decls[module].clone(),
                        params: collect_params(&def.body, &self.opts.params),
                        loops: Vec::new(),
                        guards: scope.guards.clone(),
                    };
                    self.scope(&def.body, inner)?;
                }
            }
        }
        Ok(())
    }

    fn intern(&self, name: String) -> usize {
        let mut names = self.interned.borrow_mut();
        names.push(name);
        names.len() - 1
    }

    fn int(&self, e: &Expr, scope: &Scope) -> Result<i64, ModelError> {
        Ok(match &e.kind {
            ExprKind::Int(i) => *i,
            ExprKind::Path(segs) if segs.len() == 1 && segs[0].index.is_none() => {
                let n = &segs[0].name;
                if let Some((_, v)) = scope.loops.iter().rev().find(|(l, _)| l == n) {
                    *v
                } else if let Some(v) = scope.params.get(n) {
                    *v
                } else {
                    return Err(ModelError::UnresolvedParameter {
                        name: n.clone(),
                        pos: e.pos,
                    });
                }
            }
            ExprKind::Unary(UnaryOp::Neg, a) => -self.int(a, scope)?,
            ExprKind::Binary(op @ (BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul), a, b) => {
                let (a, b) = (self.int(a, scope)?, self.int(b, scope)?);
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    _ => a * b,
                }
            }
            _ => return Err(semantic(e.pos, "expected an integer expression")),
        })
    }

    /// Resolves a path to a full symbol name and its declaration kind.
    fn resolve(&self, segs: &[Segment], pos: Pos, scope: &Scope) -> Result<(String, DeclKind), ModelError> {
        let first = &segs[0];
        if segs.len() == 1 {
            let kind = scope
                .decls
                .symbols
                .get(&first.name)
                .copied()
                .ok_or_else(|| semantic(pos, format!("undeclared identifier `{}`", first.name)))?;
            return Ok((format!("{}{}", scope.prefix, first.name), kind));
        }
        let (module, range) = scope
            .decls
            .instances
            .get(&first.name)
            .ok_or_else(|| semantic(pos, format!("undeclared instance `{}`", first.name)))?;
        let inst = match (&first.index, range) {
            (Some(ix), Some((lo, hi))) => {
                let i = self.int(ix, scope)?;
                let (lo, hi) = (self.int(lo, scope)?, self.int(hi, scope)?);
                if i < lo || i > hi {
                    return Err(ModelError::IndexOutOfRange {
                        name: first.name.clone(),
                        index: i,
                        lo,
                        hi,
                        pos,
                    });
                }
                format!("{}[{}]", first.name, i)
            }
            (None, None) => first.name.clone(),
            (Some(_), None) => return Err(semantic(pos, format!("`{}` is not an instance array", first.name))),
            (None, Some(_)) => return Err(semantic(pos, format!("`{}` needs an index", first.name))),
        };
        let member = &segs[1].name;
        let kind = self.module_decls[module]
            .symbols
            .get(member)
            .copied()
            .ok_or_else(|| semantic(pos, format!("unresolved port `{member}` of `{inst}`")))?;
        Ok((format!("{}{}.{}", scope.prefix, inst, member), kind))
    }

    fn value(&self, e: &Expr, scope: &Scope) -> Result<FlatExpr, ModelError> {
        Ok(match &e.kind {
            ExprKind::Int(i) => FlatExpr::Num(*i as f64),
            ExprKind::Real(r) => FlatExpr::Num(*r),
            ExprKind::Bool(_) => return Err(semantic(e.pos, "Boolean literal in a real-valued position")),
            ExprKind::Path(segs) => {
                if segs.len() == 1 && segs[0].index.is_none() {
                    let n = &segs[0].name;
                    if !scope.decls.symbols.contains_key(n) {
                        if let Some((_, v)) = scope.loops.iter().rev().find(|(l, _)| l == n) {
                            return Ok(FlatExpr::Num(*v as f64));
                        }
                        if let Some(v) = scope.params.get(n) {
                            return Ok(FlatExpr::Num(*v as f64));
                        }
                    }
                }
                let (full, kind) = self.resolve(segs, e.pos, scope)?;
                match kind {
                    DeclKind::Real => FlatExpr::Unknown(self.intern(full)),
                    DeclKind::ConstantReal => FlatExpr::Constant(self.intern(full)),
                    DeclKind::Boolean => {
                        return Err(semantic(
                            e.pos,
                            format!("mode variable `{full}` used as a value; use it in a condition"),
                        ))
                    }
                }
            }
            ExprKind::Unary(UnaryOp::Neg, a) => FlatExpr::Neg(Box::new(self.value(a, scope)?)),
            ExprKind::Unary(UnaryOp::Not, _) | ExprKind::Binary(BinaryOp::And | BinaryOp::Or, _, _) => {
                return Err(semantic(e.pos, "Boolean operator in a real-valued position"))
            }
            ExprKind::Binary(op, a, b) => {
                let op = match op {
                    BinaryOp::Add => ArithOp::Add,
                    BinaryOp::Sub => ArithOp::Sub,
                    BinaryOp::Mul => ArithOp::Mul,
                    BinaryOp::Div => ArithOp::Div,
                    BinaryOp::Pow => ArithOp::Pow,
                    _ => unreachable!(),
                };
                FlatExpr::Bin(op, Box::new(self.value(a, scope)?), Box::new(self.value(b, scope)?))
            }
            ExprKind::If(c, t, f) => FlatExpr::If(
                self.cond(c, scope)?,
                Box::new(self.value(t, scope)?),
                Box::new(self.value(f, scope)?),
            ),
            ExprKind::Der(a) => FlatExpr::Der(Box::new(self.value(a, scope)?)),
            ExprKind::Sum { var, lo, hi, body } => {
                let (lo, hi) = (self.int(lo, scope)?, self.int(hi, scope)?);
                let mut acc: Option<FlatExpr> = None;
                for k in lo..=hi {
                    // loop variables are looked up through `scope.loops`
                    let scope = ScopeWithLoop::new(scope, var, k);
                    let term = self.value(body, scope.get())?;
                    acc = Some(match acc {
                        None => term,
                        Some(prev) => FlatExpr::Bin(ArithOp::Add, Box::new(prev), Box::new(term)),
                    });
                }
                acc.unwrap_or(FlatExpr::Num(0.0))
            }
        })
    }

    fn cond(&self, e: &Expr, scope: &Scope) -> Result<Formula, ModelError> {
        Ok(match &e.kind {
            ExprKind::Bool(b) => Formula::Const(*b),
            ExprKind::Path(segs) => {
                let (full, kind) = self.resolve(segs, e.pos, scope)?;
                if kind != DeclKind::Boolean {
                    return Err(semantic(
                        e.pos,
                        format!("condition uses `{full}`, which is not a mode variable"),
                    ));
                }
                Formula::Var(full)
            }
            ExprKind::Unary(UnaryOp::Not, a) => self.cond(a, scope)?.negated(),
            ExprKind::Binary(BinaryOp::And, a, b) => Formula::and([self.cond(a, scope)?, self.cond(b, scope)?]),
            ExprKind::Binary(BinaryOp::Or, a, b) => Formula::or([self.cond(a, scope)?, self.cond(b, scope)?]),
            ExprKind::If(c, t, f) => {
                let c = self.cond(c, scope)?;
                Formula::or([
                    Formula::and([c.clone(), self.cond(t, scope)?]),
                    Formula::and([c.negated(), self.cond(f, scope)?]),
                ])
            }
            _ => {
                return Err(semantic(
                    e.pos,
                    "conditions must be Boolean expressions over mode variables",
                ))
            }
        })
    }

    fn finish(self) -> Result<FlatModel, ModelError> {
        let Flattener {
            opts,
            symbols,
            equations,
            invariants,
            interned,
            ..
        } = self;
        let names = interned.into_inner();

        let mut unknowns = Vec::new();
        let mut constants = Vec::new();
        let mut booleans = Vec::new();
        for s in &symbols {
            match s.kind {
                DeclKind::Real => unknowns.push(s.name.clone()),
                DeclKind::ConstantReal => constants.push(s.name.clone()),
                DeclKind::Boolean => booleans.push(s.name.clone()),
            }
        }
        let unknown_ix: HashMap<&str, usize> = unknowns.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let constant_ix: HashMap<&str, usize> =
            constants.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

        let mut seen = HashSet::new();
        let mut flat_eqs = Vec::with_capacity(equations.len());
        for (mut eq, pos) in equations {
            if !seen.insert(eq.name.clone()) {
                return Err(semantic(pos, format!("duplicate equation name `{}`", eq.name)));
            }
            eq.lhs = eq.lhs.bind(&names, &unknown_ix, &constant_ix);
            eq.rhs = eq.rhs.bind(&names, &unknown_ix, &constant_ix);
            flat_eqs.push(eq);
        }

        let local = |n: &str| n.rsplit('.').next().unwrap_or(n).to_string();
        let is_fault = |n: &str| match &opts.faults {
            Some(list) => list.iter().any(|f| f == n || *f == local(n)),
            None => opts.fault_prefixes.iter().any(|p| local(n).starts_with(p.as_str())),
        };
        let fault_syms: Vec<&Symbol> = symbols.iter().filter(|s| is_fault(&s.name)).collect();
        if let Some(list) = &opts.faults {
            for f in list {
                if !symbols.iter().any(|s| s.name == *f || local(&s.name) == *f) {
                    return Err(ModelError::Invalid(format!("configured fault `{f}` is not declared")));
                }
            }
        }
        let mut approach = None;
        for s in &fault_syms {
            let a = match s.kind {
                DeclKind::ConstantReal => Approach::Signal,
                DeclKind::Boolean => Approach::Boolean,
                DeclKind::Real => {
                    return Err(ModelError::Invalid(format!(
                        "fault `{}` must be declared as a constant or a boolean",
                        s.name
                    )))
                }
            };
            if approach.is_some_and(|prev| prev != a) {
                return Err(ModelError::Invalid(
                    "model mixes fault signals and Boolean faults".to_string(),
                ));
            }
            approach = Some(a);
        }
        let approach = approach.unwrap_or(Approach::Signal);

        let mut warnings = Vec::new();
        let mut faults = Vec::new();
        for s in &fault_syms {
            let hosts: Vec<usize> = match approach {
                Approach::Signal => {
                    let c = constant_ix[s.name.as_str()];
                    flat_eqs
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| e.lhs.mentions_constant(c) || e.rhs.mentions_constant(c))
                        .map(|(i, _)| i)
                        .collect()
                }
                Approach::Boolean => flat_eqs
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| {
                        let mut vars = e.guard.variables();
                        e.lhs.condition_variables(&mut vars);
                        e.rhs.condition_variables(&mut vars);
                        vars.contains(&s.name)
                    })
                    .map(|(i, _)| i)
                    .collect(),
            };
            match hosts.as_slice() {
                [] => return Err(ModelError::Invalid(format!("fault `{}` occurs in no equation", s.name))),
                [e] => {
                    if approach == Approach::Signal {
                        let eq = &flat_eqs[*e];
                        let mut conds = eq.guard.variables();
                        eq.lhs.condition_variables(&mut conds);
                        eq.rhs.condition_variables(&mut conds);
                        if !conds.is_empty() {
                            warnings.push(format!(
                                "fault `{}` sits in `{}`, whose incidence depends on mode variables",
                                s.name, eq.name
                            ));
                        }
                    }
                    faults.push(FaultInfo {
                        name: s.name.clone(),
                        approach,
                        equation: *e,
                    });
                }
                many => {
                    let names: Vec<&str> = many.iter().map(|&i| flat_eqs[i].name.as_str()).collect();
                    return Err(ModelError::Invalid(format!(
                        "fault `{}` occurs in more than one equation ({})",
                        s.name,
                        names.join(", ")
                    )));
                }
            }
        }
        let mut hosted = HashMap::new();
        for f in &faults {
            if let Some(other) = hosted.insert(f.equation, f.name.clone()) {
                return Err(ModelError::Invalid(format!(
                    "equation `{}` carries two faults (`{other}` and `{}`)",
                    flat_eqs[f.equation].name, f.name
                )));
            }
        }

        let fault_vars: Vec<String> = fault_syms.iter().map(|s| s.name.clone()).collect();
        let system_mode_vars: Vec<String> =
            booleans.into_iter().filter(|b| !fault_vars.contains(b)).collect();

        let fm = FlatModel {
            equations: flat_eqs,
            unknowns,
            constants,
            system_mode_vars,
            fault_vars,
            faults,
            approach,
            invariants,
            warnings,
        };
        if !fm.invariant_satisfiable() {
            return Err(ModelError::Invalid("the model invariant is unsatisfiable".to_string()));
        }
        Ok(fm)
    }
}

/// Temporary scope view with one extra loop binding.
struct ScopeWithLoop<'s> {
    inner: Scope,
    _parent: std::marker::PhantomData<&'s Scope>,
}

impl<'s> ScopeWithLoop<'s> {
    fn new(parent: &'s Scope, var: &str, value: i64) -> Self {
        let mut loops = parent.loops.clone();
        loops.push((var.to_string(), value));
        ScopeWithLoop {
            inner: Scope {
                prefix: parent.prefix.clone(),
                decls: parent.decls.clone(),
                params: parent.params.clone(),
                loops,
                guards: Vec::new(),
            },
            _parent: std::marker::PhantomData,
        }
    }

    fn get(&self) -> &Scope {
        &self.inner
    }
}

impl FlatExpr {
    /// Maps interned symbol names to unknown/constant indices.
    fn bind(self, names: &[String], unknowns: &HashMap<&str, usize>, constants: &HashMap<&str, usize>) -> FlatExpr {
        match self {
            FlatExpr::Unknown(i) => FlatExpr::Unknown(unknowns[names[i].as_str()]),
            FlatExpr::Constant(i) => FlatExpr::Constant(constants[names[i].as_str()]),
            FlatExpr::Neg(a) => FlatExpr::Neg(Box::new(a.bind(names, unknowns, constants))),
            FlatExpr::Der(a) => FlatExpr::Der(Box::new(a.bind(names, unknowns, constants))),
            FlatExpr::Bin(op, a, b) => FlatExpr::Bin(
                op,
                Box::new(a.bind(names, unknowns, constants)),
                Box::new(b.bind(names, unknowns, constants)),
            ),
            FlatExpr::If(c, t, e) => FlatExpr::If(
                c,
                Box::new(t.bind(names, unknowns, constants)),
                Box::new(e.bind(names, unknowns, constants)),
            ),
            other => other,
        }
    }
}

impl FlatModel {
    pub fn invariant(&self) -> Formula {
        Formula::and(self.invariants.iter().cloned())
    }

    /// Boolean fault variables (empty for the signal approach).
    pub fn boolean_faults(&self) -> &[String] {
        match self.approach {
            Approach::Boolean => &self.fault_vars,
            Approach::Signal => &[],
        }
    }

    /// All Boolean variables: system mode variables then Boolean faults.
    pub fn boolean_variables(&self) -> Vec<String> {
        let mut out = self.system_mode_vars.clone();
        out.extend(self.boolean_faults().iter().cloned());
        out
    }

    pub fn boolean_variable_count(&self) -> usize {
        self.system_mode_vars.len() + self.boolean_faults().len()
    }

    /// Declares the model's Boolean variables in canonical order; variables
    /// already present are kept.
    pub fn declare_variables(&self, mgr: &mut Manager) -> Result<(), BddError> {
        for v in self.boolean_variables() {
            if mgr.var(&v).is_none() {
                mgr.declare(&v)?;
            }
        }
        Ok(())
    }

    pub fn new_manager(&self) -> Manager {
        let mut mgr = Manager::new();
        self.declare_variables(&mut mgr)
            .expect("model variables are unique");
        mgr
    }

    pub fn equation_index(&self, name: &str) -> Option<usize> {
        self.equations.iter().position(|e| e.name == name)
    }

    pub fn fault(&self, name: &str) -> Option<&FaultInfo> {
        self.faults.iter().find(|f| f.name == name)
    }

    fn invariant_satisfiable(&self) -> bool {
        let inv = self.invariant();
        let vars = inv.variables();
        if vars.len() <= 20 {
            let n = vars.len();
            return (0u64..(1u64 << n)).any(|bits| {
                inv.eval(&|v| {
                    let i = vars.iter().position(|x| x == v).unwrap();
                    bits >> i & 1 == 1
                })
            });
        }
        let mut mgr = Manager::new();
        for v in &vars {
            let _ = mgr.declare(v);
        }
        inv.build(&mut mgr).map(|f| !mgr.is_false(f)).unwrap_or(false)
    }

    /// JSON dump: equations with guards as serialized diagrams, symbol
    /// classes, faults and invariant.
    pub fn to_json(&self, mgr: &mut Manager) -> Result<serde_json::Value, BddError> {
        let mut eqs = Vec::new();
        for e in &self.equations {
            let g = e.guard.build(mgr)?;
            eqs.push(serde_json::json!({
                "name": e.name,
                "guard": mgr.serialize(g),
                "lhs": e.lhs.render(self),
                "rhs": e.rhs.render(self),
            }));
        }
        let inv = self.invariant().build(mgr)?;
        Ok(serde_json::json!({
            "approach": self.approach.to_string(),
            "equations": eqs,
            "unknowns": self.unknowns,
            "constants": self.constants,
            "system_mode_variables": self.system_mode_vars,
            "faults": self.faults.iter().map(|f| serde_json::json!({
                "name": f.name,
                "equation": self.equations[f.equation].name,
            })).collect::<Vec<_>>(),
            "invariant": mgr.serialize(inv),
            "warnings": self.warnings,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse;

    fn params(n: i64) -> BTreeMap<String, i64> {
        BTreeMap::from([("N".to_string(), n)])
    }

    const PACK: &str = r#"
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
v_pack, i_pack : real;
constant y_i_pack, y_v_pack, f_i_pack, f_v_pack : real;
c[1 .. N] : SM();
g1 : v_pack = sum { k in 1 .. N : c[k].v_sm };
foreach k in 1 .. N do
  g2[k] : i_pack = c[k].i_pack;
done;
g3 : y_i_pack = i_pack + f_i_pack;
g4 : y_v_pack = v_pack + f_v_pack
"#;

    #[test]
    fn pack_expansion_counts() {
        let ast = parse(PACK).unwrap();
        let fm = flatten(&ast, &params(2)).unwrap();
        assert_eq!(fm.equations.len(), 19);
        assert_eq!(fm.faults.len(), 3 * 2 + 2);
        assert_eq!(fm.system_mode_vars, vec!["c[1].forward", "c[1].backward", "c[2].forward", "c[2].backward"]);
        assert_eq!(fm.equations[7].name, "c[2].e1");
        assert!(fm.equation_index("g2[2]").is_some());
        assert_eq!(fm.invariants.len(), 2);

        let fm1 = flatten(&ast, &params(1)).unwrap();
        assert_eq!(fm1.faults.len(), 5);
        assert_eq!(fm1.equations.len(), 11);
    }

    #[test]
    fn empty_pack_keeps_sensor_equations() {
        let ast = parse(PACK).unwrap();
        let fm = flatten(&ast, &params(0)).unwrap();
        let names: Vec<_> = fm.equations.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, vec!["g1", "g3", "g4"]);
        assert_eq!(fm.equations[0].rhs, FlatExpr::Num(0.0));
    }

    #[test]
    fn unresolved_parameter() {
        let ast = parse(PACK).unwrap();
        let err = flatten(&ast, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ModelError::UnresolvedParameter { ref name, .. } if name == "N"), "{err}");
    }

    #[test]
    fn index_out_of_range() {
        let src = "module A() a : real; e : a = 1; end\nc[1 .. 2] : A();\ny : real;\ng : y = c[3].a;";
        let err = flatten(&parse(src).unwrap(), &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ModelError::IndexOutOfRange { index: 3, .. }), "{err}");
    }

    #[test]
    fn flatten_is_deterministic() {
        let ast = parse(PACK).unwrap();
        let a = flatten(&ast, &params(3)).unwrap();
        let b = flatten(&ast, &params(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fault_in_two_equations_is_rejected() {
        let src = "x, y : real; constant f_a : real;\ne1 : x = f_a; e2 : y = x + f_a;";
        let err = flatten(&parse(src).unwrap(), &BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("more than one equation"), "{err}");
    }

    #[test]
    fn signal_fault_in_mode_dependent_equation_warns() {
        let src = "m : boolean; x : real; constant f_a, y : real;\ne1 : y = (if m then x else 0.) + f_a;";
        let fm = flatten(&parse(src).unwrap(), &BTreeMap::new()).unwrap();
        assert_eq!(fm.warnings.len(), 1);
    }

    #[test]
    fn boolean_faults_are_ordered_after_system_modes() {
        let src = "F_a : boolean; m : boolean; x : real; constant y : real;\n\
                   if !F_a then e1 : y = x end; e2 : x = if m then y else 0.;";
        let fm = flatten(&parse(src).unwrap(), &BTreeMap::new()).unwrap();
        assert_eq!(fm.approach, Approach::Boolean);
        assert_eq!(fm.boolean_variables(), vec!["m", "F_a"]);
        assert_eq!(fm.faults[0].equation, 0);
        assert_eq!(fm.equations[0].guard, Formula::var("F_a").negated());
    }

    #[test]
    fn explicit_fault_list_replaces_prefixes() {
        let src = "x : real; constant bias, f_noise, y : real;\ne1 : y = x + bias + f_noise;";
        let opts = FlattenOptions {
            faults: Some(vec!["bias".into()]),
            ..Default::default()
        };
        let fm = flatten_with(&parse(src).unwrap(), &opts).unwrap();
        assert_eq!(fm.fault_vars, vec!["bias"]);
    }

    #[test]
    fn unsatisfiable_invariant_is_rejected() {
        let src = "m : boolean; invariant m & !m; x : real; e : x = 1;";
        assert!(flatten(&parse(src).unwrap(), &BTreeMap::new()).is_err());
    }

    #[test]
    fn base_names_pair_the_two_approaches() {
        assert_eq!(base_fault_name("c[2].f_cell"), "c[2].cell");
        assert_eq!(base_fault_name("c[2].F_cell"), "c[2].cell");
        assert_eq!(base_fault_name("F_i_pack"), "i_pack");
    }
}
