//! Declarative typing as exhaustive proof search.
//!
//! Every rule alternative (core, stuck, bogus, subsumption) is explored by
//! backtracking over a trail-undone substitution. Choices the rules leave
//! open (the run label of a pack, the type of stuck code, the shape of an
//! unconstrained hypothesis) are enumerated.

use crate::labels::{Label, LabelOrder};
use crate::machine::Config;
use crate::syntax::*;
use std::collections::BTreeSet;
use std::rc::Rc;
use thiserror::Error;

pub const DEFAULT_BUDGET: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeclError {
    #[error("search budget exhausted")]
    BudgetExhausted,
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum DTy {
    Unit,
    Obj(Box<DTe>),
    Bin(Label, Box<DTe>),
    Var(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct DTe {
    ty: DTy,
    eff: Label,
}

#[derive(Clone, Debug)]
enum DRes {
    Stuck,
    Typed(DTe),
}

enum View {
    Bot,
    NotObj,
    Obj(DTy, Label),
}

struct Node {
    x: Var,
    t: DTe,
    next: Env,
}

type Env = Option<Rc<Node>>;

fn push(env: &Env, x: &Var, t: DTe) -> Env {
    Some(Rc::new(Node { x: x.clone(), t, next: env.clone() }))
}

fn lookup(env: &Env, x: &Var) -> Option<DTe> {
    let mut cur = env;
    while let Some(n) = cur {
        if n.x == *x {
            return Some(n.t.clone());
        }
        cur = &n.next;
    }
    None
}

type K<'k, 'o> = &'k mut dyn FnMut(&mut Search<'o>, DRes) -> bool;

struct Search<'o> {
    order: &'o LabelOrder,
    subst: Vec<Option<DTy>>,
    trail: Vec<usize>,
    steps: usize,
    budget: usize,
    exhausted: bool,
}

const BOT: Label = Label::BOT;

fn te(ty: DTy, eff: Label) -> DRes {
    DRes::Typed(DTe { ty, eff })
}

impl<'o> Search<'o> {
    fn new(order: &'o LabelOrder, budget: usize) -> Self {
        Search { order, subst: Vec::new(), trail: Vec::new(), steps: 0, budget, exhausted: false }
    }

    fn labels_desc(&self) -> Vec<Label> {
        self.order.distinct().rev().collect()
    }

    fn below_desc(&self, p: Label) -> Vec<Label> {
        self.order.distinct().rev().filter(|l| self.order.leq(*l, p)).collect()
    }

    fn fresh(&mut self) -> DTy {
        self.subst.push(None);
        DTy::Var(self.subst.len() - 1)
    }

    fn bind(&mut self, v: usize, t: DTy) {
        self.subst[v] = Some(t);
        self.trail.push(v);
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let v = self.trail.pop().expect("nonempty");
            self.subst[v] = None;
        }
    }

    /// Run one alternative, undoing its bindings if it fails.
    fn alt(&mut self, f: impl FnOnce(&mut Self) -> bool) -> bool {
        if self.exhausted {
            return false;
        }
        let mark = self.trail.len();
        if f(self) {
            true
        } else {
            self.undo(mark);
            false
        }
    }

    fn resolve(&self, t: &DTy) -> DTy {
        let mut cur = t.clone();
        while let DTy::Var(v) = cur {
            match &self.subst[v] {
                Some(b) => cur = b.clone(),
                None => return DTy::Var(v),
            }
        }
        cur
    }

    fn occurs(&self, v: usize, t: &DTy) -> bool {
        match self.resolve(t) {
            DTy::Var(w) => v == w,
            DTy::Unit => false,
            DTy::Obj(c) | DTy::Bin(_, c) => self.occurs(v, &c.ty),
        }
    }

    fn unify(&mut self, a: &DTy, b: &DTy) -> bool {
        let (a, b) = (self.resolve(a), self.resolve(b));
        match (&a, &b) {
            (DTy::Var(x), DTy::Var(y)) if x == y => true,
            (DTy::Var(x), t) | (t, DTy::Var(x)) => {
                if self.occurs(*x, t) {
                    return false;
                }
                self.bind(*x, t.clone());
                true
            }
            (DTy::Unit, DTy::Unit) => true,
            (DTy::Obj(c), DTy::Obj(d)) => c.eff == d.eff && self.unify(&c.ty, &d.ty),
            (DTy::Bin(p, c), DTy::Bin(q, d)) => p == q && c.eff == d.eff && self.unify(&c.ty, &d.ty),
            _ => false,
        }
    }

    fn tick(&mut self) -> bool {
        self.steps += 1;
        if self.steps > self.budget {
            self.exhausted = true;
        }
        !self.exhausted
    }

    fn value(&mut self, env: &Env, x: &Var, p: Label) -> DTe {
        let t = lookup(env, x).expect("scope checked");
        if t.eff == BOT {
            DTe { ty: self.fresh(), eff: BOT }
        } else {
            DTe { ty: t.ty, eff: self.order.meet(t.eff, p) }
        }
    }

    fn res(&mut self, env: &Env, r: &Res, p: Label) -> DTe {
        match r {
            Res::Unit => DTe { ty: DTy::Unit, eff: p },
            Res::Var(x) => self.value(env, x, p),
        }
    }

    /// The ways a hypothesis can be read as an object.
    fn views(&mut self, t: DTe, k: &mut dyn FnMut(&mut Self, View) -> bool) -> bool {
        if t.eff == BOT {
            return k(self, View::Bot);
        }
        match self.resolve(&t.ty) {
            DTy::Obj(c) => k(self, View::Obj(c.ty, c.eff)),
            DTy::Unit | DTy::Bin(..) => k(self, View::NotObj),
            DTy::Var(v) => {
                if self.alt(|s| {
                    s.bind(v, DTy::Unit);
                    k(s, View::NotObj)
                }) {
                    return true;
                }
                for l in self.labels_desc() {
                    for e in self.below_desc(l) {
                        if self.alt(|s| {
                            let inner = s.fresh();
                            s.bind(v, DTy::Bin(l, Box::new(DTe { ty: inner, eff: e })));
                            k(s, View::NotObj)
                        }) {
                            return true;
                        }
                    }
                }
                for sl in self.labels_desc() {
                    if self.alt(|s| {
                        let c = s.fresh();
                        s.bind(v, DTy::Obj(Box::new(DTe { ty: c.clone(), eff: sl })));
                        k(s, View::Obj(c, sl))
                    }) {
                        return true;
                    }
                }
                false
            }
        }
    }

    fn pack(&mut self, env: &Env, f: &Process, p: Label, k: K<'_, 'o>) -> bool {
        if !box_pred(f, self.order) {
            return false;
        }
        for q in self.labels_desc() {
            let found = self.alt(|s| {
                s.infer(env, q, f, &mut |s, r| match r {
                    DRes::Typed(t) => k(s, te(DTy::Bin(q, Box::new(t)), p)),
                    DRes::Stuck => {
                        for e in s.below_desc(q) {
                            if s.alt(|s| {
                                let inner = s.fresh();
                                k(s, te(DTy::Bin(q, Box::new(DTe { ty: inner, eff: e })), p))
                            }) {
                                return true;
                            }
                        }
                        false
                    }
                })
            });
            if found {
                return true;
            }
        }
        false
    }

    fn new_obj(&mut self, env: &Env, r: &Res, sl: Label, p: Label, k: K<'_, 'o>) -> bool {
        let t = self.res(env, r, p);
        if !self.order.leq(sl, t.eff) {
            return false;
        }
        k(self, te(DTy::Obj(Box::new(DTe { ty: t.ty, eff: sl })), p))
    }

    fn infer(&mut self, env: &Env, p: Label, proc: &Process, k: K<'_, 'o>) -> bool {
        if !self.tick() {
            return false;
        }
        let o = self.order;
        match proc {
            Process::Result(r) => {
                let t = self.res(env, r, p);
                k(self, DRes::Typed(t))
            }
            Process::Fork(a, b) => self.infer(env, p, a, &mut |s, _| s.infer(env, p, b, k)),
            Process::Let(x, a, b) => self.infer(env, p, a, &mut |s, r| match r {
                DRes::Stuck => k(s, DRes::Stuck),
                DRes::Typed(t) => {
                    let env2 = push(env, x, t);
                    s.infer(&env2, p, b, k)
                }
            }),
            Process::Limit(q, a) => {
                if o.lt(p, *q) {
                    return k(self, DRes::Stuck);
                }
                self.alt(|s| s.infer(env, *q, a, k))
            }
            Process::New(r, sl) => self.new_obj(env, r, *sl, p, k),
            Process::Pack(f) => self.pack(env, f, p, k),
            Process::Relabel(ol, w) => {
                let t = lookup(env, w).expect("scope checked");
                self.views(t, &mut |s, v| match v {
                    View::Bot => p == BOT && k(s, te(DTy::Unit, BOT)),
                    View::NotObj => k(s, DRes::Stuck),
                    View::Obj(_, sl) => {
                        if o.lt(p, o.join(sl, *ol)) && s.alt(|s| k(s, DRes::Stuck)) {
                            return true;
                        }
                        o.leq(sl, *ol) && s.alt(|s| k(s, te(DTy::Unit, p)))
                    }
                })
            }
            Process::Write(w, r) => {
                let t = lookup(env, w).expect("scope checked");
                self.views(t, &mut |s, v| match v {
                    View::Bot => p == BOT && k(s, te(DTy::Unit, BOT)),
                    View::NotObj => k(s, DRes::Stuck),
                    View::Obj(c, sl) => {
                        if o.lt(p, sl) && s.alt(|s| k(s, DRes::Stuck)) {
                            return true;
                        }
                        s.alt(|s| {
                            let x = s.res(env, r, p);
                            o.leq(sl, x.eff) && (sl == BOT || s.unify(&c, &x.ty)) && k(s, te(DTy::Unit, p))
                        })
                    }
                })
            }
            Process::Read(w) => {
                let t = lookup(env, w).expect("scope checked");
                self.views(t, &mut |s, v| match v {
                    View::Bot => {
                        let ty = s.fresh();
                        k(s, te(ty, BOT))
                    }
                    View::NotObj => k(s, DRes::Stuck),
                    View::Obj(c, sl) => {
                        let ty = if sl == BOT { s.fresh() } else { c };
                        k(s, te(ty, o.meet(sl, p)))
                    }
                })
            }
            Process::Exec(w) => {
                let t = lookup(env, w).expect("scope checked");
                self.views(t, &mut |s, v| match v {
                    View::Bot => {
                        let ty = s.fresh();
                        p == BOT && k(s, te(ty, BOT))
                    }
                    View::NotObj => k(s, DRes::Stuck),
                    View::Obj(_, BOT) => {
                        let ty = s.fresh();
                        p == BOT && k(s, te(ty, BOT))
                    }
                    View::Obj(c, sl) => s.exec_content(c, sl, p, k),
                })
            }
            Process::Store(w, ol, x) => {
                let tw = lookup(env, w).expect("scope checked");
                let tx = lookup(env, x).expect("scope checked");
                if tw.eff == BOT {
                    let ty = self.fresh();
                    return k(self, te(ty, p));
                }
                let mut check = |s: &mut Self, c: DTy, sl: Label| {
                    o.leq(sl, o.meet(*ol, tx.eff))
                        && (sl == BOT || s.unify(&c, &tx.ty))
                        && {
                            let ty = s.fresh();
                            k(s, te(ty, p))
                        }
                };
                match self.resolve(&tw.ty) {
                    DTy::Obj(c) => self.alt(|s| check(s, c.ty, c.eff)),
                    DTy::Var(v) => {
                        for sl in self.labels_desc() {
                            if self.alt(|s| {
                                let c = s.fresh();
                                s.bind(v, DTy::Obj(Box::new(DTe { ty: c.clone(), eff: sl })));
                                check(s, c, sl)
                            }) {
                                return true;
                            }
                        }
                        false
                    }
                    _ => false,
                }
            }
            Process::Subst(x, mu, q, a) => {
                let q = *q;
                let mut body = |s: &mut Self, r: DRes| match r {
                    DRes::Stuck => k(s, DRes::Stuck),
                    DRes::Typed(t) => {
                        let env2 = push(env, x, t);
                        s.infer(&env2, p, a, k)
                    }
                };
                match mu {
                    Mu::Value(Value::Unit) => body(self, te(DTy::Unit, q)),
                    Mu::Value(Value::Var(y)) => {
                        let t = self.value(env, y, q);
                        body(self, DRes::Typed(t))
                    }
                    Mu::Value(Value::Pack(f)) => self.pack(env, f, q, &mut body),
                    Mu::ObjectInit(r, sl) => self.new_obj(env, r, *sl, q, &mut body),
                }
            }
        }
    }

    fn exec_content(&mut self, c: DTy, sl: Label, p: Label, k: K<'_, 'o>) -> bool {
        let o = self.order;
        match self.resolve(&c) {
            DTy::Bin(q, inner) => o.leq(p, o.meet(q, sl)) && k(self, te(inner.ty, o.meet(inner.eff, p))),
            DTy::Unit | DTy::Obj(_) => k(self, DRes::Stuck),
            DTy::Var(v) => {
                if self.alt(|s| {
                    s.bind(v, DTy::Unit);
                    k(s, DRes::Stuck)
                }) {
                    return true;
                }
                if !o.leq(p, sl) {
                    return false;
                }
                for q in self.labels_desc() {
                    if !o.leq(p, q) {
                        continue;
                    }
                    for e in self.below_desc(q) {
                        if self.alt(|s| {
                            let inner = s.fresh();
                            s.bind(v, DTy::Bin(q, Box::new(DTe { ty: inner.clone(), eff: e })));
                            k(s, te(inner, o.meet(e, p)))
                        }) {
                            return true;
                        }
                    }
                }
                false
            }
        }
    }

    fn ground(&self, t: &DTe) -> TyEff {
        let ty = match self.resolve(&t.ty) {
            DTy::Unit | DTy::Var(_) => Ty::Unit,
            DTy::Obj(c) => Ty::Obj(Box::new(self.ground(&c))),
            DTy::Bin(q, c) => Ty::Bin(q, Box::new(self.ground(&c))),
        };
        TyEff { ty, eff: t.eff }
    }
}

fn lift(t: &TyEff) -> DTe {
    let ty = match &t.ty {
        Ty::Unit => DTy::Unit,
        Ty::Obj(c) => DTy::Obj(Box::new(lift(c))),
        Ty::Bin(q, c) => DTy::Bin(*q, Box::new(lift(c))),
    };
    DTe { ty, eff: t.eff }
}

fn prepare(order: &LabelOrder, env: &[(Var, TyEff)], p: &Process) -> Result<(Env, Process), DeclError> {
    let canon = |l: Label| order.canon(l);
    let mut e: Env = None;
    let mut dom = BTreeSet::new();
    for (x, t) in env {
        e = push(&e, x, lift(&t.map_labels(&canon)));
        dom.insert(x.clone());
    }
    if let Some(x) = free_vars(p).into_iter().find(|x| !dom.contains(x)) {
        return Err(DeclError::Unbound(x.to_string()));
    }
    Ok((e, map_labels(p, &canon)))
}

fn run(
    order: &LabelOrder,
    env: &[(Var, TyEff)],
    plabel: Label,
    p: &Process,
    budget: usize,
    mut k: impl FnMut(&mut Search, DRes) -> bool,
) -> Result<bool, DeclError> {
    let (e, p) = prepare(order, env, p)?;
    let mut s = Search::new(order, budget);
    let found = s.infer(&e, order.canon(plabel), &p, &mut k);
    if !found && s.exhausted {
        return Err(DeclError::BudgetExhausted);
    }
    Ok(found)
}

/// Whether some approximation is derivable for `p` at `plabel`.
pub fn typable(
    order: &LabelOrder,
    env: &[(Var, TyEff)],
    plabel: Label,
    p: &Process,
    budget: usize,
) -> Result<bool, DeclError> {
    run(order, env, plabel, p, budget, |_, _| true)
}

/// All derivable approximations, with unconstrained types read as `Unit`.
pub fn check_decl(
    order: &LabelOrder,
    env: &[(Var, TyEff)],
    plabel: Label,
    p: &Process,
    budget: usize,
) -> Result<Vec<Approx>, DeclError> {
    let mut out: Vec<Approx> = Vec::new();
    run(order, env, plabel, p, budget, |s, r| {
        let a = match r {
            DRes::Stuck => Approx::Stuck,
            DRes::Typed(t) => Approx::Typed(s.ground(&t)),
        };
        if !out.contains(&a) {
            out.push(a);
        }
        false
    })?;
    Ok(out)
}

/// Whether `target` itself is derivable (directly or from `Stuck`).
pub fn derives(
    order: &LabelOrder,
    env: &[(Var, TyEff)],
    plabel: Label,
    p: &Process,
    target: &TyEff,
    budget: usize,
) -> Result<bool, DeclError> {
    let want = lift(&target.map_labels(&|l| order.canon(l)));
    run(order, env, plabel, p, budget, |s, r| match r {
        DRes::Stuck => true,
        DRes::Typed(t) => t.eff == want.eff && s.alt(|s| s.unify(&t.ty, &want.ty)),
    })
}

/// Typability at the top label with `c` and everything below it compromised.
pub fn check_despite(
    order: &LabelOrder,
    env: &[(Var, TyEff)],
    p: &Process,
    c: Label,
    budget: usize,
) -> Result<bool, DeclError> {
    let o = order.compromise(c).map_err(|_| DeclError::Unbound(format!("label #{}", c.0)))?;
    typable(&o, env, o.top(), p, budget)
}

/// The configuration as a single process: substitutions in σ order around
/// stores and threads, each thread wrapped by its let-frames.
pub fn reconstitute(cfg: &Config) -> Process {
    let mut body = unit();
    for t in cfg.threads.iter().rev() {
        let mut th = limit(t.plabel, t.redex.clone());
        for f in t.frames.iter().rev() {
            th = limit(f.resume, Process::Let(f.x.clone(), Box::new(th), Box::new(f.cont.clone())));
        }
        body = fork(th, body);
    }
    for (w, s) in cfg.stores.iter().rev() {
        body = fork(Process::Store(w.clone(), s.olabel, s.content.clone()), body);
    }
    for e in cfg.sigma.iter().rev() {
        body = Process::Subst(e.x.clone(), e.mu.clone(), e.src, Box::new(body));
    }
    body
}

/// Typability of a runtime configuration at the top label.
pub fn check_runtime(cfg: &Config, despite: Option<Label>, budget: usize) -> Result<bool, DeclError> {
    let order = match despite {
        Some(c) => cfg.order.compromise(c).map_err(|_| DeclError::Unbound(format!("label #{}", c.0)))?,
        None => (*cfg.order).clone(),
    };
    typable(&order, &cfg.hypotheses, order.top(), &reconstitute(cfg), budget)
}
