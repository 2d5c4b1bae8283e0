use super::lexer::Pos;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceModel {
    pub modules: Vec<ModuleDef>,
    /// Top-level statements. When empty, the last module is the model root.
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleDef {
    pub name: String,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclKind {
    Boolean,
    Real,
    ConstantReal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Decl {
        names: Vec<(String, Pos)>,
        kind: DeclKind,
    },
    Parameter {
        name: String,
        value: i64,
        pos: Pos,
    },
    Invariant(Expr),
    Equation(Equation),
    Guarded {
        guard: Expr,
        body: Vec<Stmt>,
        pos: Pos,
    },
    Foreach {
        var: String,
        lo: Expr,
        hi: Expr,
        body: Vec<Stmt>,
        pos: Pos,
    },
    Instance {
        name: String,
        range: Option<(Expr, Expr)>,
        module: String,
        pos: Pos,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub name: String,
    pub index: Option<Expr>,
    pub lhs: Expr,
    pub rhs: Expr,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub index: Option<Box<Expr>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Real(f64),
    Bool(bool),
    /// `a`, `c[k].v_sm`, ...
    Path(Vec<Segment>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Der(Box<Expr>),
    Sum {
        var: String,
        lo: Box<Expr>,
        hi: Box<Expr>,
        body: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }
}

impl SourceModel {
    pub fn module(&self, name: &str) -> Option<&ModuleDef> {
        self.modules.iter().find(|m| m.name == name)
    }

    /// Statements of the model root.
    pub fn root(&self) -> &[Stmt] {
        if self.body.is_empty() {
            self.modules.last().map(|m| m.body.as_slice()).unwrap_or(&[])
        } else {
            &self.body
        }
    }

    /// Number of equation statements written in the root scope, counting
    /// guarded and loop bodies once each.
    pub fn root_equation_count(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Stmt::Equation(_) => 1,
                    Stmt::Guarded { body, .. } | Stmt::Foreach { body, .. } => count(body),
                    _ => 0,
                })
                .sum()
        }
        count(self.root())
    }

    /// Root-scope declarations of the given kind.
    pub fn root_declarations(&self, kind: DeclKind) -> Vec<&str> {
        fn collect<'a>(stmts: &'a [Stmt], kind: DeclKind, out: &mut Vec<&'a str>) {
            for s in stmts {
                match s {
                    Stmt::Decl { names, kind: k } if *k == kind => {
                        out.extend(names.iter().map(|(n, _)| n.as_str()))
                    }
                    Stmt::Guarded { body, .. } | Stmt::Foreach { body, .. } => {
                        collect(body, kind, out)
                    }
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        collect(self.root(), kind, &mut out);
        out
    }
}
