//! Concrete syntax: lexer, recursive-descent parser and pretty-printer.

use crate::labels::{Label, LabelOrder, BOT_NAME};
use crate::syntax::*;
use serde::Serialize;
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Child-index path from the root of `main` to a node.
pub type NodePath = Vec<u8>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug)]
pub struct ProgramFile {
    pub order: LabelOrder,
    pub hypotheses: Vec<(Var, TyEff)>,
    pub main: Process,
    pub positions: HashMap<NodePath, Pos>,
}

impl ProgramFile {
    pub fn new(order: LabelOrder, hypotheses: Vec<(Var, TyEff)>, main: Process) -> Self {
        ProgramFile { order, hypotheses, main, positions: HashMap::new() }
    }

    pub fn pos(&self, path: &[u8]) -> Option<Pos> {
        let mut p = path.to_vec();
        loop {
            if let Some(pos) = self.positions.get(&p) {
                return Some(*pos);
            }
            p.pop()?;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ErrorCode {
    #[serde(rename = "E-LEX")]
    Lex,
    #[serde(rename = "E-SYNTAX")]
    Syntax,
    #[serde(rename = "E-UNKNOWN-LABEL")]
    UnknownLabel,
    #[serde(rename = "E-DUP-LABEL")]
    DuplicateLabel,
    #[serde(rename = "E-DUP-HYP")]
    DuplicateHypothesis,
    #[serde(rename = "E-NESTED-PACK")]
    NestedPack,
    #[serde(rename = "E-PACK-BODY")]
    PackBody,
    #[serde(rename = "E-SCOPE")]
    Scope,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Lex => "E-LEX",
            ErrorCode::Syntax => "E-SYNTAX",
            ErrorCode::UnknownLabel => "E-UNKNOWN-LABEL",
            ErrorCode::DuplicateLabel => "E-DUP-LABEL",
            ErrorCode::DuplicateHypothesis => "E-DUP-HYP",
            ErrorCode::NestedPack => "E-NESTED-PACK",
            ErrorCode::PackBody => "E-PACK-BODY",
            ErrorCode::Scope => "E-SCOPE",
        }
    }
}

#[derive(Clone, Debug, Error, Serialize)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub code: ErrorCode,
    pub line: usize,
    pub col: usize,
    pub message: String,
    pub expected: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: Pos,
}

const SYMBOLS: [&str; 17] = [
    ":=", "|->", "<", ">", ";", ":", "^", "(", ")", "[", "]", "{", "}", "=", "#", "!", "@",
];

fn ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.' || c == '-' || c == '\''
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let pos = Pos { line, col };
        if ident_char(c) && c != '-' && c != '\'' {
            let start = i;
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Token { tok: Tok::Ident(s), pos });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push(Token { tok: Tok::Sym(s), pos });
            }
            None => {
                return Err(ParseError {
                    code: ErrorCode::Lex,
                    line,
                    col,
                    message: format!("unexpected character `{c}`"),
                    expected: vec![],
                })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

const KEYWORDS: [&str; 13] =
    ["labels", "assume", "do", "fork", "let", "in", "new", "exec", "pack", "unit", "Unit", "Obj", "Bin"];

struct Parser {
    toks: Vec<Token>,
    i: usize,
    order: LabelOrder,
    scope: Vec<String>,
    positions: HashMap<NodePath, Pos>,
    path: NodePath,
}

fn err(code: ErrorCode, pos: Pos, message: String, expected: &[&str]) -> ParseError {
    ParseError {
        code,
        line: pos.line,
        col: pos.col,
        message,
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.i + 1).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i < self.toks.len() - 1 {
            self.i += 1;
        }
        t
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        err(
            ErrorCode::Syntax,
            self.pos(),
            format!("unexpected {}, expected {}", Self::describe(self.peek()), expected.join(" or ")),
            expected,
        )
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == k)
    }

    fn sym(&mut self, s: &'static str) -> Result<(), ParseError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&[s]))
        }
    }

    fn kw(&mut self, k: &'static str) -> Result<(), ParseError> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&[k]))
        }
    }

    fn name(&mut self, what: &'static str) -> Result<(String, Pos), ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok((s, pos))
            }
            _ => Err(self.unexpected(&[what])),
        }
    }

    fn label(&mut self) -> Result<Label, ParseError> {
        let pos = self.pos();
        let (n, _) = self.name("label")?;
        self.order
            .lookup(&n)
            .ok_or_else(|| err(ErrorCode::UnknownLabel, pos, format!("unknown label `{n}`"), &[]))
    }

    fn use_var(&mut self) -> Result<Var, ParseError> {
        let (n, pos) = self.name("identifier")?;
        if !self.scope.contains(&n) {
            return Err(err(ErrorCode::Scope, pos, format!("unbound variable `{n}`"), &[]));
        }
        Ok(Var::named(&n))
    }

    fn res(&mut self) -> Result<Res, ParseError> {
        if self.is_kw("unit") {
            self.bump();
            Ok(Res::Unit)
        } else {
            Ok(Res::Var(self.use_var()?))
        }
    }

    fn ty(&mut self) -> Result<TyEff, ParseError> {
        let ty = if self.is_kw("Unit") {
            self.bump();
            Ty::Unit
        } else if self.is_kw("Obj") {
            self.bump();
            self.sym("(")?;
            let t = self.ty()?;
            self.sym(")")?;
            Ty::Obj(Box::new(t))
        } else if self.is_kw("Bin") {
            self.bump();
            self.sym("[")?;
            let l = self.label()?;
            self.sym("]")?;
            self.sym("(")?;
            let t = self.ty()?;
            self.sym(")")?;
            Ty::Bin(l, Box::new(t))
        } else {
            return Err(self.unexpected(&["Unit", "Obj", "Bin"]));
        };
        self.sym("^")?;
        let eff = self.label()?;
        Ok(TyEff { ty, eff })
    }

    fn child(&mut self, idx: u8) -> Result<Process, ParseError> {
        self.path.push(idx);
        let r = self.proc();
        self.path.pop();
        r
    }

    fn proc(&mut self) -> Result<Process, ParseError> {
        let pos = self.pos();
        self.positions.insert(self.path.clone(), pos);
        let tok = self.peek().clone();
        match tok {
            Tok::Ident(k) if k == "fork" => {
                self.bump();
                self.sym("{")?;
                let a = self.child(0)?;
                self.sym("}")?;
                let b = self.child(1)?;
                Ok(fork(a, b))
            }
            Tok::Ident(k) if k == "let" => {
                self.bump();
                let (x, _) = self.name("identifier")?;
                self.sym("=")?;
                let a = self.child(0)?;
                self.kw("in")?;
                self.scope.push(x.clone());
                let b = self.child(1);
                self.scope.pop();
                Ok(let_(&Var::named(&x), a, b?))
            }
            Tok::Sym("[") => {
                self.bump();
                let l = self.label()?;
                self.sym("]")?;
                Ok(limit(l, self.child(0)?))
            }
            Tok::Ident(k) if k == "new" => {
                self.bump();
                self.sym("(")?;
                let r = self.res()?;
                self.sym("#")?;
                let s = self.label()?;
                self.sym(")")?;
                Ok(Process::New(r, s))
            }
            Tok::Sym("<") => {
                self.bump();
                let o = self.label()?;
                self.sym(">")?;
                Ok(Process::Relabel(o, self.use_var()?))
            }
            Tok::Sym("!") => {
                self.bump();
                Ok(Process::Read(self.use_var()?))
            }
            Tok::Ident(k) if k == "exec" => {
                self.bump();
                Ok(Process::Exec(self.use_var()?))
            }
            Tok::Ident(k) if k == "pack" => {
                self.bump();
                self.sym("{")?;
                let body_pos = self.pos();
                let f = self.child(0)?;
                self.sym("}")?;
                if matches!(f, Process::Pack(_)) {
                    return Err(err(ErrorCode::NestedPack, body_pos, "nested pack".into(), &[]));
                }
                if !is_expression(&f) {
                    return Err(err(
                        ErrorCode::PackBody,
                        body_pos,
                        "pack body not an expression".into(),
                        &[],
                    ));
                }
                Ok(pack(f))
            }
            Tok::Ident(k) if k == "unit" => {
                self.bump();
                Ok(unit())
            }
            Tok::Sym("(") => {
                self.bump();
                let p = self.proc()?;
                self.sym(")")?;
                Ok(p)
            }
            Tok::Ident(k) if !KEYWORDS.contains(&k.as_str()) => {
                if matches!(self.peek2(), Tok::Sym(":=")) {
                    let w = self.use_var()?;
                    self.bump();
                    let r = self.res()?;
                    Ok(Process::Write(w, r))
                } else {
                    Ok(var(&self.use_var()?))
                }
            }
            _ => Err(self.unexpected(&[
                "fork", "let", "[", "new", "<", "!", "exec", "pack", "unit", "(", "identifier",
            ])),
        }
    }

    fn header(&mut self) -> Result<(), ParseError> {
        self.kw("labels")?;
        let mut names = Vec::new();
        loop {
            let pos = self.pos();
            let (n, _) = self.name("label name")?;
            if n == BOT_NAME || names.contains(&n) {
                return Err(err(ErrorCode::DuplicateLabel, pos, format!("duplicate label `{n}`"), &[]));
            }
            names.push(n);
            if self.is_sym("<") {
                self.bump();
            } else {
                break;
            }
        }
        self.sym(";")?;
        self.order = LabelOrder::new(&names).map_err(|e| err(ErrorCode::DuplicateLabel, self.pos(), e.to_string(), &[]))?;
        Ok(())
    }
}

pub fn parse(text: &str) -> Result<ProgramFile, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        i: 0,
        order: LabelOrder::new::<&str>(&[]).expect("empty order"),
        scope: Vec::new(),
        positions: HashMap::new(),
        path: Vec::new(),
    };
    p.header()?;
    let mut hyps: Vec<(Var, TyEff)> = Vec::new();
    while p.is_kw("assume") {
        p.bump();
        let (x, pos) = p.name("identifier")?;
        if hyps.iter().any(|(v, _)| *v.name == *x) {
            return Err(err(ErrorCode::DuplicateHypothesis, pos, format!("duplicate hypothesis `{x}`"), &[]));
        }
        p.sym(":")?;
        let t = p.ty()?;
        p.sym(";")?;
        p.scope.push(x.clone());
        hyps.push((Var::named(&x), t));
    }
    p.kw("do")?;
    let main = p.proc()?;
    if p.peek() != &Tok::Eof {
        return Err(p.unexpected(&["end of input"]));
    }
    Ok(ProgramFile { order: p.order, hypotheses: hyps, main, positions: p.positions })
}

pub fn print_ty(t: &TyEff, order: &LabelOrder) -> String {
    let base = match &t.ty {
        Ty::Unit => "Unit".to_string(),
        Ty::Obj(c) => format!("Obj({})", print_ty(c, order)),
        Ty::Bin(l, c) => format!("Bin[{}]({})", order.name(*l), print_ty(c, order)),
    };
    format!("{base}^{}", order.name(t.eff))
}

pub fn print_approx(a: &Approx, order: &LabelOrder) -> String {
    match a {
        Approx::Stuck => "Stuck".into(),
        Approx::Typed(t) => print_ty(t, order),
    }
}

fn res_str(r: &Res) -> String {
    match r {
        Res::Unit => "unit".into(),
        Res::Var(v) => v.to_string(),
    }
}

struct Printer<'a> {
    order: &'a LabelOrder,
    out: String,
    multiline: bool,
}

impl Printer<'_> {
    fn newline(&mut self, indent: usize) {
        if self.multiline {
            self.out.push('\n');
            for _ in 0..indent {
                self.out.push_str("  ");
            }
        } else {
            self.out.push(' ');
        }
    }

    fn p(&mut self, p: &Process, indent: usize) {
        let o = self.order;
        match p {
            Process::Fork(a, b) => {
                self.out.push_str("fork {");
                self.newline(indent + 1);
                self.p(a, indent + 1);
                self.newline(indent);
                self.out.push('}');
                self.newline(indent);
                self.p(b, indent);
            }
            Process::Let(x, a, b) => {
                let _ = write!(self.out, "let {x} = ");
                self.p(a, indent + 1);
                self.out.push_str(" in");
                self.newline(indent);
                self.p(b, indent);
            }
            Process::Limit(l, a) => {
                let _ = write!(self.out, "[{}] ", o.name(*l));
                self.p(a, indent);
            }
            Process::New(r, s) => {
                let _ = write!(self.out, "new({} # {})", res_str(r), o.name(*s));
            }
            Process::Relabel(l, x) => {
                let _ = write!(self.out, "<{}> {x}", o.name(*l));
            }
            Process::Read(x) => {
                let _ = write!(self.out, "!{x}");
            }
            Process::Write(x, r) => {
                let _ = write!(self.out, "{x} := {}", res_str(r));
            }
            Process::Exec(x) => {
                let _ = write!(self.out, "exec {x}");
            }
            Process::Pack(f) => {
                self.out.push_str("pack { ");
                self.p(f, indent + 1);
                self.out.push_str(" }");
            }
            Process::Result(r) => self.out.push_str(&res_str(r)),
            Process::Store(w, l, x) => {
                let _ = write!(self.out, "{w} |->[{}] {x}", o.name(*l));
            }
            Process::Subst(x, mu, l, a) => {
                let _ = write!(self.out, "nu {x} = ");
                self.mu(mu, indent);
                let _ = write!(self.out, " @ {} in", o.name(*l));
                self.newline(indent);
                self.p(a, indent);
            }
        }
    }

    fn mu(&mut self, mu: &Mu, indent: usize) {
        match mu {
            Mu::Value(Value::Unit) => self.out.push_str("unit"),
            Mu::Value(Value::Var(v)) => {
                let _ = write!(self.out, "{v}");
            }
            Mu::Value(Value::Pack(f)) => self.p(&Process::Pack(f.clone()), indent),
            Mu::ObjectInit(r, s) => {
                let _ = write!(self.out, "new({} # {})", res_str(r), self.order.name(*s));
            }
        }
    }
}

pub fn print_process(p: &Process, order: &LabelOrder) -> String {
    let mut pr = Printer { order, out: String::new(), multiline: true };
    pr.p(p, 0);
    pr.out
}

/// Single-line rendering for diagnostics and traces.
pub fn show(p: &Process, order: &LabelOrder) -> String {
    let mut pr = Printer { order, out: String::new(), multiline: false };
    pr.p(p, 0);
    pr.out
}

pub fn show_mu(mu: &Mu, order: &LabelOrder) -> String {
    let mut pr = Printer { order, out: String::new(), multiline: false };
    pr.mu(mu, 0);
    pr.out
}

pub fn print(file: &ProgramFile) -> String {
    let o = &file.order;
    let mut s = format!("labels {};\n", o.declared().join(" < "));
    for (x, t) in &file.hypotheses {
        let _ = writeln!(s, "assume {x} : {};", print_ty(t, o));
    }
    s.push_str("do\n");
    s.push_str(&print_process(&file.main, o));
    s.push('\n');
    s
}
