//! Abstract syntax of processes, values and static approximations.

use crate::labels::{Label, LabelOrder};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

/// A variable. Source identifiers have `id == 0`; the machine allocates
/// positive ids, so fresh variables never collide with source names.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var {
    pub name: Arc<str>,
    pub id: u32,
}

impl Var {
    pub fn named(name: &str) -> Var {
        Var { name: Arc::from(name), id: 0 }
    }

    pub fn fresh(&self, id: u32) -> Var {
        Var { name: self.name.clone(), id }
    }

    pub fn is_source(&self) -> bool {
        self.id == 0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.id == 0 {
            f.write_str(&self.name)
        } else {
            write!(f, "{}${}", self.name, self.id)
        }
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Res {
    Unit,
    Var(Var),
}

impl Res {
    pub fn var(&self) -> Option<&Var> {
        match self {
            Res::Unit => None,
            Res::Var(v) => Some(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Value {
    Unit,
    Var(Var),
    Pack(Box<Process>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mu {
    Value(Value),
    ObjectInit(Res, Label),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Process {
    Fork(Box<Process>, Box<Process>),
    Let(Var, Box<Process>, Box<Process>),
    Limit(Label, Box<Process>),
    New(Res, Label),
    Relabel(Label, Var),
    Read(Var),
    Write(Var, Res),
    Exec(Var),
    Pack(Box<Process>),
    Result(Res),
    Store(Var, Label, Var),
    Subst(Var, Mu, Label, Box<Process>),
}

use Process::*;

pub fn unit() -> Process {
    Result(Res::Unit)
}

pub fn var(v: &Var) -> Process {
    Result(Res::Var(v.clone()))
}

pub fn fork(a: Process, b: Process) -> Process {
    Fork(Box::new(a), Box::new(b))
}

pub fn let_(x: &Var, a: Process, b: Process) -> Process {
    Let(x.clone(), Box::new(a), Box::new(b))
}

pub fn limit(l: Label, a: Process) -> Process {
    Limit(l, Box::new(a))
}

pub fn pack(f: Process) -> Process {
    Pack(Box::new(f))
}

impl Process {
    /// The value this process denotes, if it is already a value.
    pub fn as_value(&self) -> Option<Value> {
        match self {
            Result(Res::Unit) => Some(Value::Unit),
            Result(Res::Var(v)) => Some(Value::Var(v.clone())),
            Pack(f) => Some(Value::Pack(f.clone())),
            _ => None,
        }
    }

    pub fn children(&self) -> Vec<&Process> {
        match self {
            Fork(a, b) | Let(_, a, b) => vec![a, b],
            Limit(_, a) | Pack(a) | Subst(_, _, _, a) => vec![a],
            _ => vec![],
        }
    }

    /// Number of process constructors.
    pub fn node_count(&self) -> usize {
        let mut n = 0;
        let mut stack = vec![self];
        while let Some(p) = stack.pop() {
            n += 1;
            if let Subst(_, Mu::Value(Value::Pack(f)), _, _) = p {
                stack.push(f);
            }
            stack.extend(p.children());
        }
        n
    }
}

/// Expression-hood: a bare `pack` is a process, not an expression.
pub fn is_expression(p: &Process) -> bool {
    match p {
        Fork(a, b) | Let(_, a, b) => is_expression(a) && is_expression(b),
        Limit(..) | New(..) | Relabel(..) | Read(_) | Write(..) | Exec(_) | Result(_) => true,
        Pack(_) | Store(..) | Subst(..) => false,
    }
}

/// Every `new` outside a limit carries the least label.
pub fn box_pred(f: &Process, order: &LabelOrder) -> bool {
    match f {
        New(_, s) => order.same(*s, Label::BOT),
        Fork(a, b) | Let(_, a, b) => box_pred(a, order) && box_pred(b, order),
        _ => true,
    }
}

fn res_fv(r: &Res, out: &mut BTreeSet<Var>) {
    if let Res::Var(v) = r {
        out.insert(v.clone());
    }
}

fn fv_into(p: &Process, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
    let add = |v: &Var, bound: &Vec<Var>, out: &mut BTreeSet<Var>| {
        if !bound.contains(v) {
            out.insert(v.clone());
        }
    };
    match p {
        Fork(a, b) => {
            fv_into(a, bound, out);
            fv_into(b, bound, out);
        }
        Let(x, a, b) => {
            fv_into(a, bound, out);
            bound.push(x.clone());
            fv_into(b, bound, out);
            bound.pop();
        }
        Limit(_, a) | Pack(a) => fv_into(a, bound, out),
        New(r, _) | Result(r) => {
            if let Res::Var(v) = r {
                add(v, bound, out)
            }
        }
        Relabel(_, v) | Read(v) | Exec(v) => add(v, bound, out),
        Write(w, r) => {
            add(w, bound, out);
            if let Res::Var(v) = r {
                add(v, bound, out)
            }
        }
        Store(w, _, x) => {
            add(w, bound, out);
            add(x, bound, out);
        }
        Subst(x, mu, _, body) => {
            let mut m = BTreeSet::new();
            mu_fv(mu, &mut m);
            for v in &m {
                add(v, bound, out);
            }
            bound.push(x.clone());
            fv_into(body, bound, out);
            bound.pop();
        }
    }
}

fn mu_fv(mu: &Mu, out: &mut BTreeSet<Var>) {
    match mu {
        Mu::Value(Value::Unit) => {}
        Mu::Value(Value::Var(v)) => {
            out.insert(v.clone());
        }
        Mu::Value(Value::Pack(f)) => out.extend(free_vars(f)),
        Mu::ObjectInit(r, _) => res_fv(r, out),
    }
}

pub fn free_vars(p: &Process) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    fv_into(p, &mut Vec::new(), &mut out);
    out
}

pub fn bound_vars(p: &Process) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    let mut stack = vec![p];
    while let Some(q) = stack.pop() {
        match q {
            Let(x, ..) | Subst(x, ..) => {
                out.insert(x.clone());
            }
            _ => {}
        }
        if let Subst(_, Mu::Value(Value::Pack(f)), _, _) = q {
            stack.push(f);
        }
        stack.extend(q.children());
    }
    out
}

fn rn(v: &Var, map: &HashMap<Var, Var>) -> Var {
    map.get(v).cloned().unwrap_or_else(|| v.clone())
}

fn rn_res(r: &Res, map: &HashMap<Var, Var>) -> Res {
    match r {
        Res::Unit => Res::Unit,
        Res::Var(v) => Res::Var(rn(v, map)),
    }
}

/// Capture-free renaming of free variables (targets are machine-fresh).
pub fn rename(p: &Process, map: &HashMap<Var, Var>) -> Process {
    if map.is_empty() {
        return p.clone();
    }
    match p {
        Fork(a, b) => fork(rename(a, map), rename(b, map)),
        Let(x, a, b) => {
            let a2 = rename(a, map);
            if map.contains_key(x) {
                let mut inner = map.clone();
                inner.remove(x);
                let_(x, a2, rename(b, &inner))
            } else {
                let_(x, a2, rename(b, map))
            }
        }
        Limit(l, a) => limit(*l, rename(a, map)),
        New(r, s) => New(rn_res(r, map), *s),
        Relabel(o, v) => Relabel(*o, rn(v, map)),
        Read(v) => Read(rn(v, map)),
        Write(w, r) => Write(rn(w, map), rn_res(r, map)),
        Exec(v) => Exec(rn(v, map)),
        Pack(f) => pack(rename(f, map)),
        Result(r) => Result(rn_res(r, map)),
        Store(w, o, x) => Store(rn(w, map), *o, rn(x, map)),
        Subst(x, mu, l, body) => {
            let mu2 = match mu {
                Mu::Value(Value::Unit) => Mu::Value(Value::Unit),
                Mu::Value(Value::Var(v)) => Mu::Value(Value::Var(rn(v, map))),
                Mu::Value(Value::Pack(f)) => Mu::Value(Value::Pack(Box::new(rename(f, map)))),
                Mu::ObjectInit(r, s) => Mu::ObjectInit(rn_res(r, map), *s),
            };
            let body2 = if map.contains_key(x) {
                let mut inner = map.clone();
                inner.remove(x);
                rename(body, &inner)
            } else {
                rename(body, map)
            };
            Subst(x.clone(), mu2, *l, Box::new(body2))
        }
    }
}

/// Apply `f` to every label occurring in the process.
pub fn map_labels(p: &Process, f: &impl Fn(Label) -> Label) -> Process {
    match p {
        Fork(a, b) => fork(map_labels(a, f), map_labels(b, f)),
        Let(x, a, b) => let_(x, map_labels(a, f), map_labels(b, f)),
        Limit(l, a) => limit(f(*l), map_labels(a, f)),
        New(r, s) => New(r.clone(), f(*s)),
        Relabel(o, v) => Relabel(f(*o), v.clone()),
        Pack(a) => pack(map_labels(a, f)),
        Store(w, o, x) => Store(w.clone(), f(*o), x.clone()),
        Subst(x, mu, l, body) => {
            let mu2 = match mu {
                Mu::Value(Value::Pack(g)) => Mu::Value(Value::Pack(Box::new(map_labels(g, f)))),
                Mu::ObjectInit(r, s) => Mu::ObjectInit(r.clone(), f(*s)),
                other => other.clone(),
            };
            Subst(x.clone(), mu2, f(*l), Box::new(map_labels(body, f)))
        }
        other => other.clone(),
    }
}

/// Types of the declarative system.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ty {
    Unit,
    Obj(Box<TyEff>),
    Bin(Label, Box<TyEff>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TyEff {
    pub ty: Ty,
    pub eff: Label,
}

impl TyEff {
    pub fn new(ty: Ty, eff: Label) -> TyEff {
        TyEff { ty, eff }
    }

    pub fn unit(eff: Label) -> TyEff {
        TyEff { ty: Ty::Unit, eff }
    }

    pub fn obj(content: TyEff, eff: Label) -> TyEff {
        TyEff { ty: Ty::Obj(Box::new(content)), eff }
    }

    pub fn bin(run: Label, inner: TyEff, eff: Label) -> TyEff {
        TyEff { ty: Ty::Bin(run, Box::new(inner)), eff }
    }

    pub fn map_labels(&self, f: &impl Fn(Label) -> Label) -> TyEff {
        TyEff { ty: self.ty.map_labels(f), eff: f(self.eff) }
    }
}

impl Ty {
    pub fn map_labels(&self, f: &impl Fn(Label) -> Label) -> Ty {
        match self {
            Ty::Unit => Ty::Unit,
            Ty::Obj(t) => Ty::Obj(Box::new(t.map_labels(f))),
            Ty::Bin(p, t) => Ty::Bin(f(*p), Box::new(t.map_labels(f))),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Ty::Unit => 0,
            Ty::Obj(t) | Ty::Bin(_, t) => 1 + t.ty.depth(),
        }
    }
}

/// A static approximation: a type and effect, or `Stuck`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approx {
    Stuck,
    Typed(TyEff),
}

impl Approx {
    pub fn map_labels(&self, f: &impl Fn(Label) -> Label) -> Approx {
        match self {
            Approx::Stuck => Approx::Stuck,
            Approx::Typed(t) => Approx::Typed(t.map_labels(f)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Var {
        Var::named(s)
    }

    #[test]
    fn expression_hood() {
        let f = unit();
        assert!(!is_expression(&pack(f.clone())));
        assert!(is_expression(&limit(Label(1), pack(f.clone()))));
        assert!(is_expression(&let_(&v("x"), Read(v("w")), Write(v("w"), Res::Var(v("x"))))));
        assert!(!is_expression(&let_(&v("x"), pack(f), unit())));
    }

    #[test]
    fn box_predicate() {
        let o = LabelOrder::new(&["Low", "High"]).unwrap();
        assert!(box_pred(&New(Res::Var(v("x")), Label::BOT), &o));
        assert!(!box_pred(&New(Res::Var(v("x")), Label(1)), &o));
        assert!(box_pred(&let_(&v("x"), Read(v("w")), Write(v("w"), Res::Var(v("x")))), &o));
        assert!(box_pred(&limit(Label(2), New(Res::Unit, Label(2))), &o));
        let c = o.compromise(Label(1)).unwrap();
        assert!(box_pred(&New(Res::Unit, Label(1)), &c));
    }

    #[test]
    fn free_and_bound() {
        let fvs = free_vars(&Write(v("w"), Res::Var(v("x"))));
        assert_eq!(fvs, [v("w"), v("x")].into_iter().collect());
        assert!(free_vars(&let_(&v("x"), unit(), var(&v("x")))).is_empty());
        let s = Subst(v("x"), Mu::Value(Value::Var(v("y"))), Label(1), Box::new(var(&v("x"))));
        assert_eq!(free_vars(&s), [v("y")].into_iter().collect());
        assert_eq!(bound_vars(&s), [v("x")].into_iter().collect());
    }

    #[test]
    fn renaming_respects_shadowing() {
        let p = fork(var(&v("x")), let_(&v("x"), unit(), var(&v("x"))));
        let map: HashMap<Var, Var> = [(v("x"), v("x").fresh(4))].into_iter().collect();
        let q = rename(&p, &map);
        assert_eq!(q, fork(var(&v("x").fresh(4)), let_(&v("x"), unit(), var(&v("x")))));
    }
}
