//! Recursive-descent parser for the model language.
//!
//! ```text
//! file      = { module | include | stmt } ;
//! module    = "module" IDENT "(" ")" { stmt } "end" [";"] ;
//! include   = "#include" STRING [";"] ;
//! stmt      = ( decl | param | invariant | equation | guarded | foreach | instance ) [";"] ;
//! decl      = ["constant"] IDENT { "," IDENT } ":" ( "real" | "boolean" ) ;
//! param     = "parameter" IDENT "=" INT ;
//! invariant = "invariant" expr ;
//! equation  = IDENT [ "[" expr "]" ] ":" expr "=" expr ;
//! guarded   = "if" expr "then" { stmt } "end" ;
//! foreach   = "foreach" IDENT "in" expr ".." expr "do" { stmt } "done" ;
//! instance  = IDENT [ "[" expr ".." expr "]" ] ":" IDENT "(" ")" ;
//! expr      = "if" expr "then" expr "else" expr | or ;
//! or        = and { "|" and } ;
//! and       = sum { "&" sum } ;
//! sum       = term { ("+" | "-") term } ;
//! term      = unary { ("*" | "/") unary } ;
//! unary     = ("-" | "+" | "!") unary | power ;
//! power     = primary [ "^" unary ] ;
//! primary   = INT | REAL | "true" | "false" | "(" expr ")" | "der" "(" expr ")"
//!           | "sum" "{" IDENT "in" expr ".." expr ":" expr "}" | path ;
//! path      = IDENT [ "[" expr "]" ] { "." IDENT [ "[" expr "]" ] } ;
//! ```

use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::ast::*;
use super::lexer::{tokenize, Pos, Tok, Token};
use super::ParseError;

const KEYWORDS: &[&str] = &[
    "module",
    "end",
    "constant",
    "parameter",
    "invariant",
    "if",
    "then",
    "else",
    "foreach",
    "in",
    "do",
    "done",
    "sum",
    "der",
    "true",
    "false",
    "real",
    "boolean",
];

/// Parses a self-contained model. `#include` directives are rejected; use
/// [`parse_file`] to resolve them relative to a file.
pub fn parse(src: &str) -> Result<SourceModel, ParseError> {
    let mut model = SourceModel::default();
    let includes = parse_into(src, &mut model)?;
    if let Some((_, pos)) = includes.first() {
        return Err(ParseError::new(
            *pos,
            "`#include` needs a file context; use parse_file",
        ));
    }
    validate(&model)?;
    Ok(model)
}

/// Parses a model file, splicing the modules of included files.
pub fn parse_file(path: &Path) -> Result<SourceModel, super::ModelError> {
    let mut model = SourceModel::default();
    let mut seen = HashSet::new();
    load(path, &mut model, &mut seen)?;
    validate(&model)?;
    Ok(model)
}

fn load(
    path: &Path,
    model: &mut SourceModel,
    seen: &mut HashSet<std::path::PathBuf>,
) -> Result<(), super::ModelError> {
    let canon = path.canonicalize().unwrap_or_else(|_| path.to_path_buf());
    if !seen.insert(canon) {
        return Ok(());
    }
    let src = std::fs::read_to_string(path).map_err(|e| super::ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut here = SourceModel::default();
    let includes = parse_into(&src, &mut here).map_err(|e| e.in_file(path))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for (inc, _) in includes {
        let mut included = SourceModel::default();
        load(&dir.join(inc), &mut included, seen)?;
        model.modules.extend(included.modules);
        model.body.extend(included.body);
    }
    model.modules.extend(here.modules);
    model.body.extend(here.body);
    Ok(())
}

fn parse_into(src: &str, model: &mut SourceModel) -> Result<Vec<(String, Pos)>, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, at: 0 };
    let mut includes = Vec::new();
    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Include => {
                let pos = p.pos();
                p.bump();
                match p.bump().tok {
                    Tok::Str(s) => includes.push((s, pos)),
                    other => return Err(p.error_at(pos, format!("expected file name, found {other}"))),
                }
                p.eat(&Tok::Semi);
            }
            Tok::Ident(ref s) if s == "module" => {
                let m = p.module()?;
                model.modules.push(m);
            }
            _ => {
                let s = p.stmt()?;
                model.body.push(s);
            }
        }
    }
    Ok(includes)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.at + k).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at < self.tokens.len() - 1 {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn error_at(&self, pos: Pos, msg: impl Into<String>) -> ParseError {
        ParseError::new(pos, msg)
    }

    fn unexpected(&self, what: &str) -> ParseError {
        ParseError::new(self.pos(), format!("expected {what}, found {}", self.peek()))
    }

    fn expect(&mut self, t: Tok) -> Result<Pos, ParseError> {
        if *self.peek() == t {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(&t.to_string()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let pos = self.bump().pos;
                Ok((s, pos))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn module(&mut self) -> Result<ModuleDef, ParseError> {
        let pos = self.pos();
        self.expect_kw("module")?;
        let (name, _) = self.ident()?;
        self.expect(Tok::LParen)?;
        self.expect(Tok::RParen)?;
        let body = self.block(&["end"])?;
        self.expect_kw("end")?;
        self.eat(&Tok::Semi);
        Ok(ModuleDef { name, body, pos })
    }

    fn block(&mut self, terminators: &[&str]) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        while !terminators.iter().any(|t| self.is_kw(t)) {
            if *self.peek() == Tok::Eof {
                return Err(self.unexpected(&format!("`{}`", terminators[0])));
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let pos = self.pos();
        let s = if self.is_kw("constant") {
            self.bump();
            let names = self.name_list()?;
            self.expect(Tok::Colon)?;
            self.expect_kw("real")
                .map_err(|_| self.error_at(self.pos(), "constants must be declared `real`"))?;
            Stmt::Decl {
                names,
                kind: DeclKind::ConstantReal,
            }
        } else if self.is_kw("parameter") {
            self.bump();
            let (name, _) = self.ident()?;
            self.expect(Tok::Eq)?;
            let neg = self.eat(&Tok::Minus);
            let value = match self.bump().tok {
                Tok::Int(i) => {
                    if neg {
                        -i
                    } else {
                        i
                    }
                }
                _ => return Err(self.error_at(pos, "parameter value must be an integer")),
            };
            Stmt::Parameter { name, value, pos }
        } else if self.is_kw("invariant") {
            self.bump();
            Stmt::Invariant(self.expr()?)
        } else if self.is_kw("if") {
            self.bump();
            let guard = self.expr()?;
            self.expect_kw("then")?;
            let body = self.block(&["end"])?;
            self.expect_kw("end")?;
            Stmt::Guarded { guard, body, pos }
        } else if self.is_kw("foreach") {
            self.bump();
            let (var, _) = self.ident()?;
            self.expect_kw("in")?;
            let lo = self.expr()?;
            self.expect(Tok::DotDot)?;
            let hi = self.expr()?;
            self.expect_kw("do")?;
            let body = self.block(&["done"])?;
            self.expect_kw("done")?;
            Stmt::Foreach {
                var,
                lo,
                hi,
                body,
                pos,
            }
        } else {
            self.named_stmt()?
        };
        self.eat(&Tok::Semi);
        Ok(s)
    }

    fn name_list(&mut self) -> Result<Vec<(String, Pos)>, ParseError> {
        let mut names = vec![self.ident()?];
        while self.eat(&Tok::Comma) {
            names.push(self.ident()?);
        }
        Ok(names)
    }

    /// Declarations, instances and equations all start with `IDENT`.
    fn named_stmt(&mut self) -> Result<Stmt, ParseError> {
        let (name, pos) = self.ident()?;
        if *self.peek() == Tok::Comma {
            let mut names = vec![(name, pos)];
            while self.eat(&Tok::Comma) {
                names.push(self.ident()?);
            }
            self.expect(Tok::Colon)?;
            let kind = self.decl_type()?;
            return Ok(Stmt::Decl { names, kind });
        }
        let mut index = None;
        let mut range = None;
        if self.eat(&Tok::LBracket) {
            let first = self.expr()?;
            if self.eat(&Tok::DotDot) {
                let hi = self.expr()?;
                range = Some((first, hi));
            } else {
                index = Some(first);
            }
            self.expect(Tok::RBracket)?;
        }
        self.expect(Tok::Colon)?;
        if range.is_none() && index.is_none() && (self.is_kw("real") || self.is_kw("boolean")) {
            let kind = self.decl_type()?;
            return Ok(Stmt::Decl {
                names: vec![(name, pos)],
                kind,
            });
        }
        let is_instance = matches!(self.peek(), Tok::Ident(s) if s != "der" && !KEYWORDS.contains(&s.as_str()))
            && *self.peek_at(1) == Tok::LParen
            && *self.peek_at(2) == Tok::RParen;
        if is_instance || range.is_some() {
            if index.is_some() {
                return Err(self.error_at(pos, "instance arrays take a range `[lo .. hi]`"));
            }
            let (module, _) = self.ident()?;
            self.expect(Tok::LParen)?;
            self.expect(Tok::RParen)?;
            return Ok(Stmt::Instance {
                name,
                range,
                module,
                pos,
            });
        }
        let lhs = self.expr()?;
        self.expect(Tok::Eq)?;
        let rhs = self.expr()?;
        Ok(Stmt::Equation(Equation {
            name,
            index,
            lhs,
            rhs,
            pos,
        }))
    }

    fn decl_type(&mut self) -> Result<DeclKind, ParseError> {
        if self.is_kw("real") {
            self.bump();
            Ok(DeclKind::Real)
        } else if self.is_kw("boolean") {
            self.bump();
            Ok(DeclKind::Boolean)
        } else {
            Err(self.unexpected("`real` or `boolean`"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        if self.is_kw("if") {
            let pos = self.bump().pos;
            let c = self.expr()?;
            self.expect_kw("then")?;
            let t = self.expr()?;
            self.expect_kw("else")?;
            let e = self.expr()?;
            return Ok(Expr::new(
                ExprKind::If(Box::new(c), Box::new(t), Box::new(e)),
                pos,
            ));
        }
        self.or_expr()
    }

    fn binary_level(
        &mut self,
        next: fn(&mut Self) -> Result<Expr, ParseError>,
        ops: &[(Tok, BinaryOp)],
    ) -> Result<Expr, ParseError> {
        let mut lhs = next(self)?;
        'outer: loop {
            for (t, op) in ops {
                if self.peek() == t {
                    let pos = self.bump().pos;
                    let rhs = next(self)?;
                    lhs = Expr::new(ExprKind::Binary(*op, Box::new(lhs), Box::new(rhs)), pos);
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(Self::and_expr, &[(Tok::Pipe, BinaryOp::Or)])
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(Self::sum_expr, &[(Tok::Amp, BinaryOp::And)])
    }

    fn sum_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(
            Self::term_expr,
            &[(Tok::Plus, BinaryOp::Add), (Tok::Minus, BinaryOp::Sub)],
        )
    }

    fn term_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(
            Self::unary_expr,
            &[(Tok::Star, BinaryOp::Mul), (Tok::Slash, BinaryOp::Div)],
        )
    }

    fn unary_expr(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.peek() {
            Tok::Minus => {
                self.bump();
                let e = self.unary_expr()?;
                Ok(Expr::new(ExprKind::Unary(UnaryOp::Neg, Box::new(e)), pos))
            }
            Tok::Plus => {
                self.bump();
                self.unary_expr()
            }
            Tok::Bang => {
                self.bump();
                let e = self.unary_expr()?;
                Ok(Expr::new(ExprKind::Unary(UnaryOp::Not, Box::new(e)), pos))
            }
            _ => {
                let base = self.primary()?;
                if self.eat(&Tok::Caret) {
                    let exp = self.unary_expr()?;
                    Ok(Expr::new(
                        ExprKind::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)),
                        pos,
                    ))
                } else {
                    Ok(base)
                }
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::new(ExprKind::Int(i), pos))
            }
            Tok::Real(r) => {
                self.bump();
                Ok(Expr::new(ExprKind::Real(r), pos))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) if s == "if" => self.expr(),
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::new(ExprKind::Bool(s == "true"), pos))
            }
            Tok::Ident(s) if s == "der" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(Expr::new(ExprKind::Der(Box::new(e)), pos))
            }
            Tok::Ident(s) if s == "sum" => {
                self.bump();
                self.expect(Tok::LBrace)?;
                let (var, _) = self.ident()?;
                self.expect_kw("in")?;
                let lo = self.expr()?;
                self.expect(Tok::DotDot)?;
                let hi = self.expr()?;
                self.expect(Tok::Colon)?;
                let body = self.expr()?;
                self.expect(Tok::RBrace)?;
                Ok(Expr::new(
                    ExprKind::Sum {
                        var,
                        lo: Box::new(lo),
                        hi: Box::new(hi),
                        body: Box::new(body),
                    },
                    pos,
                ))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let mut segments = Vec::new();
                loop {
                    let (name, _) = self.ident()?;
                    let index = if self.eat(&Tok::LBracket) {
                        let e = self.expr()?;
                        self.expect(Tok::RBracket)?;
                        Some(Box::new(e))
                    } else {
                        None
                    };
                    segments.push(Segment { name, index });
                    if !self.eat(&Tok::Dot) {
                        break;
                    }
                }
                Ok(Expr::new(ExprKind::Path(segments), pos))
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

/// Scope-level checks: declared identifiers, unique names, known modules.
fn validate(model: &SourceModel) -> Result<(), ParseError> {
    let mut module_names = HashSet::new();
    for m in &model.modules {
        if !module_names.insert(m.name.as_str()) {
            return Err(ParseError::new(m.pos, format!("module `{}` defined twice", m.name)));
        }
    }
    let mut scopes: HashMap<&str, Scope> = HashMap::new();
    for m in &model.modules {
        scopes.insert(m.name.as_str(), Scope::collect(&m.body)?);
    }
    for m in &model.modules {
        check_scope(&m.body, &scopes[m.name.as_str()], &scopes, model)?;
    }
    if !model.body.is_empty() {
        let root = Scope::collect(&model.body)?;
        check_scope(&model.body, &root, &scopes, model)?;
    }
    Ok(())
}

#[derive(Default)]
struct Scope<'a> {
    symbols: HashMap<&'a str, DeclKind>,
    params: HashSet<&'a str>,
    instances: HashMap<&'a str, &'a str>,
}

impl<'a> Scope<'a> {
    fn collect(stmts: &'a [Stmt]) -> Result<Self, ParseError> {
        let mut scope = Scope::default();
        let mut equations: HashMap<&str, Pos> = HashMap::new();
        scope.walk(stmts, &mut equations)?;
        Ok(scope)
    }

    fn walk(&mut self, stmts: &'a [Stmt], equations: &mut HashMap<&'a str, Pos>) -> Result<(), ParseError> {
        for s in stmts {
            match s {
                Stmt::Decl { names, kind } => {
                    for (n, pos) in names {
                        if self.symbols.insert(n, *kind).is_some() || self.instances.contains_key(n.as_str()) {
                            return Err(ParseError::new(*pos, format!("`{n}` declared twice")));
                        }
                    }
                }
                Stmt::Parameter { name, .. } => {
                    self.params.insert(name);
                }
                Stmt::Instance { name, module, pos, .. } => {
                    if self.instances.insert(name, module).is_some() || self.symbols.contains_key(name.as_str()) {
                        return Err(ParseError::new(*pos, format!("`{name}` declared twice")));
                    }
                }
                Stmt::Equation(eq) => {
                    if eq.index.is_none() {
                        if let Some(first) = equations.insert(&eq.name, eq.pos) {
                            return Err(ParseError::new(
                                eq.pos,
                                format!("duplicate equation name `{}` (first at {first})", eq.name),
                            ));
                        }
                    }
                }
                Stmt::Guarded { body, .. } | Stmt::Foreach { body, .. } => self.walk(body, equations)?,
                Stmt::Invariant(_) => {}
            }
        }
        Ok(())
    }
}

fn check_scope(
    stmts: &[Stmt],
    scope: &Scope,
    modules: &HashMap<&str, Scope>,
    model: &SourceModel,
) -> Result<(), ParseError> {
    let mut bound: Vec<String> = Vec::new();
    check_stmts(stmts, scope, modules, model, &mut bound)
}

fn check_stmts(
    stmts: &[Stmt],
    scope: &Scope,
    modules: &HashMap<&str, Scope>,
    model: &SourceModel,
    bound: &mut Vec<String>,
) -> Result<(), ParseError> {
    for s in stmts {
        match s {
            Stmt::Instance { module, pos, .. } => {
                if model.module(module).is_none() {
                    return Err(ParseError::new(*pos, format!("unknown module `{module}`")));
                }
            }
            Stmt::Invariant(e) => check_expr(e, scope, modules, bound)?,
            Stmt::Equation(eq) => {
                check_expr(&eq.lhs, scope, modules, bound)?;
                check_expr(&eq.rhs, scope, modules, bound)?;
            }
            Stmt::Guarded { guard, body, .. } => {
                check_expr(guard, scope, modules, bound)?;
                check_stmts(body, scope, modules, model, bound)?;
            }
            Stmt::Foreach { var, body, .. } => {
                bound.push(var.clone());
                check_stmts(body, scope, modules, model, bound)?;
                bound.pop();
            }
            Stmt::Decl { .. } | Stmt::Parameter { .. } => {}
        }
    }
    Ok(())
}

/// Value positions must name declared symbols; index positions may also use
/// loop variables and parameters (possibly supplied externally).
fn check_expr(
    e: &Expr,
    scope: &Scope,
    modules: &HashMap<&str, Scope>,
    bound: &mut Vec<String>,
) -> Result<(), ParseError> {
    match &e.kind {
        ExprKind::Int(_) | ExprKind::Real(_) | ExprKind::Bool(_) => Ok(()),
        ExprKind::Path(segs) => {
            let first = &segs[0];
            if segs.len() == 1 {
                if first.index.is_some() {
                    return Err(ParseError::new(e.pos, format!("`{}` is not an instance array", first.name)));
                }
                let n = first.name.as_str();
                if scope.symbols.contains_key(n)
                    || bound.iter().any(|b| b == n)
                    || scope.params.contains(n)
                {
                    return Ok(());
                }
                return Err(ParseError::new(e.pos, format!("undeclared identifier `{n}`")));
            }
            let Some(module) = scope.instances.get(first.name.as_str()) else {
                return Err(ParseError::new(e.pos, format!("undeclared instance `{}`", first.name)));
            };
            if let Some(ix) = &first.index {
                check_index(ix)?;
            }
            if segs.len() > 2 {
                return Err(ParseError::new(e.pos, "nested instance access is not supported"));
            }
            let member = &segs[1];
            if member.index.is_some() {
                return Err(ParseError::new(e.pos, "members cannot be indexed"));
            }
            match modules.get(module) {
                Some(ms) if ms.symbols.contains_key(member.name.as_str()) => Ok(()),
                Some(_) => Err(ParseError::new(
                    e.pos,
                    format!("unresolved port `{}` of `{}` (module `{module}`)", member.name, first.name),
                )),
                None => Err(ParseError::new(e.pos, format!("unknown module `{module}`"))),
            }
        }
        ExprKind::Unary(_, a) | ExprKind::Der(a) => check_expr(a, scope, modules, bound),
        ExprKind::Binary(_, a, b) => {
            check_expr(a, scope, modules, bound)?;
            check_expr(b, scope, modules, bound)
        }
        ExprKind::If(c, t, f) => {
            check_expr(c, scope, modules, bound)?;
            check_expr(t, scope, modules, bound)?;
            check_expr(f, scope, modules, bound)
        }
        ExprKind::Sum { var, lo, hi, body } => {
            check_index(lo)?;
            check_index(hi)?;
            bound.push(var.clone());
            let r = check_expr(body, scope, modules, bound);
            bound.pop();
            r
        }
    }
}

fn check_index(e: &Expr) -> Result<(), ParseError> {
    match &e.kind {
        ExprKind::Int(_) => Ok(()),
        ExprKind::Path(segs) if segs.len() == 1 && segs[0].index.is_none() => Ok(()),
        ExprKind::Unary(UnaryOp::Neg, a) => check_index(a),
        ExprKind::Binary(BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul, a, b) => {
            check_index(a)?;
            check_index(b)
        }
        _ => Err(ParseError::new(e.pos, "index expressions must be integer arithmetic")),
    }
}
