//! Constraint-based typechecking.
//!
//! Types carry unification variables; constraints are solved eagerly by a
//! trail-based unifier. Packed code is checked once per label, giving a
//! family of candidate `Bin` types; a family commits to one member when it is
//! first used, replaying the bindings that member's check produced.

use crate::labels::{Label, LabelOrder};
use crate::parser::{NodePath, ProgramFile};
use crate::syntax::*;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq)]
enum ATy {
    Unit,
    Obj(Box<ATy>, Label),
    Bin(Label, Box<ATy>, AEff),
    Var(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum AEff {
    L(Label),
    V(u32),
}

#[derive(Clone, Debug)]
enum ARes {
    Stuck,
    Typed(ATy, Label),
}

#[derive(Clone, Debug)]
enum Trail {
    Ty(u32, ATy),
    Eff(u32, AEff),
    Chose(usize, Label),
}

#[derive(Clone, Debug)]
struct Member {
    res: ARes,
    log: Vec<Trail>,
}

#[derive(Clone, Debug)]
struct Family {
    /// Descending by label.
    members: Vec<(Label, Result<Member, TypeError>)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TypeError {
    pub rule: &'static str,
    #[serde(skip)]
    pub path: NodePath,
    pub message: String,
}

type Out = Result<ARes, TypeError>;

struct Checker<'o> {
    order: &'o LabelOrder,
    tys: Vec<Option<ATy>>,
    fam_of: Vec<Option<usize>>,
    effs: Vec<(Option<AEff>, Label)>,
    families: Vec<Family>,
    chosen: Vec<Option<Label>>,
    trail: Vec<Trail>,
    env: Vec<(Var, ATy, Label)>,
}

const BOT: Label = Label::BOT;

impl<'o> Checker<'o> {
    fn new(order: &'o LabelOrder) -> Self {
        Checker {
            order,
            tys: Vec::new(),
            fam_of: Vec::new(),
            effs: Vec::new(),
            families: Vec::new(),
            chosen: Vec::new(),
            trail: Vec::new(),
            env: Vec::new(),
        }
    }

    fn name(&self, l: Label) -> &str {
        self.order.name(l)
    }

    fn err(&self, rule: &'static str, path: &[u8], message: String) -> TypeError {
        TypeError { rule, path: path.to_vec(), message }
    }

    fn fresh(&mut self) -> ATy {
        self.tys.push(None);
        self.fam_of.push(None);
        ATy::Var(self.tys.len() as u32 - 1)
    }

    fn fresh_eff(&mut self, cap: Label) -> AEff {
        self.effs.push((None, cap));
        AEff::V(self.effs.len() as u32 - 1)
    }

    fn bind(&mut self, v: u32, t: ATy) {
        self.tys[v as usize] = Some(t.clone());
        self.trail.push(Trail::Ty(v, t));
    }

    fn bind_eff(&mut self, v: u32, e: AEff) {
        self.effs[v as usize].0 = Some(e);
        self.trail.push(Trail::Eff(v, e));
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            match self.trail.pop().expect("nonempty") {
                Trail::Ty(v, _) => self.tys[v as usize] = None,
                Trail::Eff(v, _) => self.effs[v as usize].0 = None,
                Trail::Chose(f, _) => self.chosen[f] = None,
            }
        }
    }

    fn attempt(&mut self, f: impl FnOnce(&mut Self) -> bool) -> bool {
        let mark = self.trail.len();
        let ok = f(self);
        if !ok {
            self.undo(mark);
        }
        ok
    }

    fn resolve(&self, t: &ATy) -> ATy {
        let mut cur = t.clone();
        while let ATy::Var(v) = cur {
            match &self.tys[v as usize] {
                Some(b) => cur = b.clone(),
                None => return ATy::Var(v),
            }
        }
        cur
    }

    fn resolve_eff(&self, e: AEff) -> AEff {
        let mut cur = e;
        while let AEff::V(v) = cur {
            match self.effs[v as usize].0 {
                Some(b) => cur = b,
                None => return cur,
            }
        }
        cur
    }

    fn family(&self, v: u32) -> Option<usize> {
        self.fam_of[v as usize]
    }

    fn occurs(&self, v: u32, t: &ATy) -> bool {
        match self.resolve(t) {
            ATy::Var(w) => v == w,
            ATy::Unit => false,
            ATy::Obj(c, _) | ATy::Bin(_, c, _) => self.occurs(v, &c),
        }
    }

    fn unify_eff(&mut self, a: AEff, b: AEff) -> bool {
        match (self.resolve_eff(a), self.resolve_eff(b)) {
            (AEff::L(x), AEff::L(y)) => x == y,
            (AEff::V(x), AEff::V(y)) if x == y => true,
            (AEff::V(x), AEff::L(l)) | (AEff::L(l), AEff::V(x)) => {
                if !self.order.leq(l, self.effs[x as usize].1) {
                    return false;
                }
                self.bind_eff(x, AEff::L(l));
                true
            }
            (AEff::V(x), other) => {
                self.bind_eff(x, other);
                true
            }
        }
    }

    /// Commit the family of `v` to its member at `q`.
    fn select(&mut self, v: u32, q: Label) -> bool {
        let f = self.family(v).expect("family variable");
        if let Some(c) = self.chosen[f] {
            return c == q;
        }
        let Some(Ok(m)) = self.families[f].members.iter().find(|(l, _)| *l == q).map(|(_, m)| m.clone()) else {
            return false;
        };
        self.chosen[f] = Some(q);
        self.trail.push(Trail::Chose(f, q));
        for entry in &m.log {
            let ok = match entry {
                Trail::Ty(x, t) => match self.tys[*x as usize].clone() {
                    None => {
                        self.bind(*x, t.clone());
                        true
                    }
                    Some(cur) => self.unify(&cur, t),
                },
                Trail::Eff(x, e) => match self.effs[*x as usize].0 {
                    None => {
                        self.bind_eff(*x, *e);
                        true
                    }
                    Some(cur) => self.unify_eff(cur, *e),
                },
                Trail::Chose(g, l) => match self.chosen[*g] {
                    None => {
                        self.chosen[*g] = Some(*l);
                        self.trail.push(Trail::Chose(*g, *l));
                        true
                    }
                    Some(c) => c == *l,
                },
            };
            if !ok {
                return false;
            }
        }
        let (inner, e) = match m.res {
            ARes::Typed(t, e) => (t, AEff::L(e)),
            ARes::Stuck => (self.fresh(), self.fresh_eff(q)),
        };
        self.bind(v, ATy::Bin(q, Box::new(inner), e));
        true
    }

    fn ok_members(&self, v: u32) -> Vec<Label> {
        let f = self.family(v).expect("family variable");
        self.families[f].members.iter().filter(|(_, m)| m.is_ok()).map(|(l, _)| *l).collect()
    }

    fn unify(&mut self, a: &ATy, b: &ATy) -> bool {
        let (a, b) = (self.resolve(a), self.resolve(b));
        match (&a, &b) {
            (ATy::Var(x), ATy::Var(y)) if x == y => true,
            (ATy::Var(x), ATy::Var(y)) => match (self.family(*x), self.family(*y)) {
                (Some(_), Some(_)) => {
                    let (x, y) = (*x, *y);
                    let theirs = self.ok_members(y);
                    for q in self.ok_members(x) {
                        if theirs.contains(&q)
                            && self.attempt(|c| c.select(x, q) && c.select(y, q) && c.unify(&ATy::Var(x), &ATy::Var(y)))
                        {
                            return true;
                        }
                    }
                    false
                }
                (Some(_), None) => {
                    self.bind(*y, a.clone());
                    true
                }
                _ => {
                    self.bind(*x, b.clone());
                    true
                }
            },
            (ATy::Var(x), t) | (t, ATy::Var(x)) => {
                if self.family(*x).is_some() {
                    return match t {
                        ATy::Bin(q, ..) => self.select(*x, *q) && self.unify(&ATy::Var(*x), t),
                        _ => false,
                    };
                }
                if self.occurs(*x, t) {
                    return false;
                }
                self.bind(*x, t.clone());
                true
            }
            (ATy::Unit, ATy::Unit) => true,
            (ATy::Obj(c, s), ATy::Obj(d, t)) => s == t && self.unify(c, d),
            (ATy::Bin(p, c, e), ATy::Bin(q, d, f)) => p == q && self.unify_eff(*e, *f) && self.unify(c, d),
            _ => false,
        }
    }

    /// An effect inside packed code, fixing an open one at its upper bound.
    fn concrete_eff(&mut self, e: AEff) -> Label {
        match self.resolve_eff(e) {
            AEff::L(l) => l,
            AEff::V(v) => {
                let cap = self.effs[v as usize].1;
                self.bind_eff(v, AEff::L(cap));
                cap
            }
        }
    }

    fn hyp(&self, x: &Var) -> (ATy, Label) {
        let (_, t, e) = self.env.iter().rev().find(|(y, _, _)| y == x).expect("scope checked");
        (t.clone(), *e)
    }

    fn value(&mut self, x: &Var, p: Label) -> (ATy, Label) {
        let (t, e) = self.hyp(x);
        if e == BOT {
            (self.fresh(), BOT)
        } else {
            (t, self.order.meet(e, p))
        }
    }

    fn res(&mut self, r: &Res, p: Label) -> (ATy, Label) {
        match r {
            Res::Unit => (ATy::Unit, p),
            Res::Var(x) => self.value(x, p),
        }
    }

    /// `Some(content, trust)` for an object; `None` when the value is
    /// provably not an object (after fixing an open shape to `Unit`).
    fn as_object(&mut self, t: &ATy) -> Option<(ATy, Label)> {
        match self.resolve(t) {
            ATy::Obj(c, s) => Some((*c, s)),
            ATy::Var(v) if self.family(v).is_none() => {
                self.bind(v, ATy::Unit);
                None
            }
            _ => None,
        }
    }

    fn scoped(&mut self, f: impl FnOnce(&mut Self) -> Out) -> Out {
        let n = self.env.len();
        let r = f(self);
        self.env.truncate(n);
        r
    }

    fn infer(&mut self, proc: &Process, p: Label, path: &mut NodePath) -> Out {
        let o = self.order;
        match proc {
            Process::Result(r) => {
                let (t, e) = self.res(r, p);
                Ok(ARes::Typed(t, e))
            }
            Process::Fork(a, b) => {
                self.child(a, p, path, 0)?;
                self.child(b, p, path, 1)
            }
            Process::Let(x, a, b) => match self.child(a, p, path, 0)? {
                ARes::Stuck => Ok(ARes::Stuck),
                ARes::Typed(t, e) => self.scoped(|c| {
                    c.env.push((x.clone(), t, e));
                    c.child(b, p, path, 1)
                }),
            },
            Process::Limit(q, a) => {
                if o.lt(p, *q) {
                    Ok(ARes::Stuck)
                } else {
                    self.child(a, *q, path, 0)
                }
            }
            Process::New(r, s) => {
                let (t, e) = self.res(r, p);
                if !o.leq(*s, e) {
                    return Err(self.err(
                        "Typ new",
                        path,
                        format!("initial content has effect {} below the declared trust {}", self.name(e), self.name(*s)),
                    ));
                }
                Ok(ARes::Typed(ATy::Obj(Box::new(t), *s), p))
            }
            Process::Pack(f) => self.pack(f, p, path),
            Process::Relabel(ol, w) => {
                let (t, e) = self.hyp(w);
                if e == BOT {
                    return if p == BOT {
                        Ok(ARes::Typed(ATy::Unit, BOT))
                    } else {
                        Err(self.err("Typ un/protect", path, format!("`{w}` has an untrusted effect")))
                    };
                }
                let Some((_, s)) = self.as_object(&t) else { return Ok(ARes::Stuck) };
                if o.lt(p, o.join(s, *ol)) {
                    Ok(ARes::Stuck)
                } else if o.leq(s, *ol) {
                    Ok(ARes::Typed(ATy::Unit, p))
                } else {
                    Err(self.err(
                        "Typ un/protect",
                        path,
                        format!("relabelling `{w}` to {} falls below its content trust {}", self.name(*ol), self.name(s)),
                    ))
                }
            }
            Process::Write(w, r) => {
                let (t, e) = self.hyp(w);
                if e == BOT {
                    return if p == BOT {
                        Ok(ARes::Typed(ATy::Unit, BOT))
                    } else {
                        Err(self.err("Typ write", path, format!("`{w}` has an untrusted effect")))
                    };
                }
                let Some((c, s)) = self.as_object(&t) else { return Ok(ARes::Stuck) };
                if o.lt(p, s) {
                    return Ok(ARes::Stuck);
                }
                let (xt, xe) = self.res(r, p);
                if !o.leq(s, xe) {
                    return Err(self.err(
                        "Typ write",
                        path,
                        format!("value has effect {} below the content trust {} of `{w}`", self.name(xe), self.name(s)),
                    ));
                }
                if s != BOT && !self.unify(&c, &xt) {
                    return Err(self.err("Typ write", path, format!("value type does not match the contents of `{w}`")));
                }
                Ok(ARes::Typed(ATy::Unit, p))
            }
            Process::Read(w) => {
                let (t, e) = self.hyp(w);
                if e == BOT {
                    return Ok(ARes::Typed(self.fresh(), BOT));
                }
                let Some((c, s)) = self.as_object(&t) else { return Ok(ARes::Stuck) };
                let ty = if s == BOT { self.fresh() } else { c };
                Ok(ARes::Typed(ty, o.meet(s, p)))
            }
            Process::Exec(w) => self.exec(w, p, path),
            Process::Store(..) | Process::Subst(..) => {
                Err(self.err("Typ substitute", path, "runtime forms are not checked here".into()))
            }
        }
    }

    fn child(&mut self, a: &Process, p: Label, path: &mut NodePath, i: u8) -> Out {
        path.push(i);
        let r = self.infer(a, p, path);
        path.pop();
        r
    }

    fn exec(&mut self, w: &Var, p: Label, path: &mut NodePath) -> Out {
        let o = self.order;
        let (t, e) = self.hyp(w);
        let denied = |c: &Self, why: String| Err(c.err("Typ execute", path, why));
        if e == BOT {
            return if p == BOT {
                Ok(ARes::Typed(self.fresh(), BOT))
            } else {
                denied(self, format!("`{w}` has an untrusted effect"))
            };
        }
        let Some((c, s)) = self.as_object(&t) else { return Ok(ARes::Stuck) };
        if s == BOT {
            return if p == BOT {
                Ok(ARes::Typed(self.fresh(), BOT))
            } else {
                denied(self, format!("contents of `{w}` are untrusted but the process label is {}", self.name(p)))
            };
        }
        match self.resolve(&c) {
            ATy::Unit | ATy::Obj(..) => Ok(ARes::Stuck),
            ATy::Var(v) if self.family(v).is_none() => {
                self.bind(v, ATy::Unit);
                Ok(ARes::Stuck)
            }
            ATy::Var(v) => {
                if !o.leq(p, s) {
                    return denied(
                        self,
                        format!("process label {} exceeds the content trust {} of `{w}`", self.name(p), self.name(s)),
                    );
                }
                for q in self.ok_members(v) {
                    if o.leq(p, q) && self.attempt(|c| c.select(v, q)) {
                        return self.exec_bin(w, &ATy::Var(v), s, p, path);
                    }
                }
                denied(self, format!("no label at which the code in `{w}` typechecks admits {}", self.name(p)))
            }
            bin @ ATy::Bin(..) => self.exec_bin(w, &bin, s, p, path),
        }
    }

    fn exec_bin(&mut self, w: &Var, bin: &ATy, s: Label, p: Label, path: &[u8]) -> Out {
        let o = self.order;
        let ATy::Bin(q, inner, e) = self.resolve(bin) else { unreachable!("selected family is Bin") };
        if !o.leq(p, o.meet(q, s)) {
            return Err(self.err(
                "Typ execute",
                path,
                format!(
                    "process label {} exceeds the code label {} or content trust {} of `{w}`",
                    self.name(p),
                    self.name(q),
                    self.name(s)
                ),
            ));
        }
        let e = self.concrete_eff(e);
        Ok(ARes::Typed(*inner, o.meet(e, p)))
    }

    fn pack(&mut self, f: &Process, p: Label, path: &mut NodePath) -> Out {
        if !box_pred(f, self.order) {
            return Err(self.err("Typ pack", path, "an unguarded `new` in packed code must carry the least label".into()));
        }
        let mut members = Vec::new();
        for q in self.order.distinct().rev() {
            members.push((q, self.trial(f, q, path)));
        }
        if let Some(first) = members.iter().find_map(|(_, m)| m.as_ref().err()).filter(|_| members.iter().all(|(_, m)| m.is_err())) {
            return Err(first.clone());
        }
        let v = self.fresh();
        let ATy::Var(id) = v else { unreachable!() };
        self.families.push(Family { members });
        self.chosen.push(None);
        self.fam_of[id as usize] = Some(self.families.len() - 1);
        Ok(ARes::Typed(v, p))
    }

    fn trial(&mut self, f: &Process, q: Label, path: &mut NodePath) -> Result<Member, TypeError> {
        let mark = self.trail.len();
        let r = self.scoped(|c| c.child(f, q, path, 0));
        let log = self.trail[mark..].to_vec();
        self.undo(mark);
        r.map(|res| Member { res, log })
    }

    /// Fix remaining family choices and read off a ground type.
    fn ground(&mut self, t: &ATy) -> Ty {
        match self.resolve(t) {
            ATy::Unit => Ty::Unit,
            ATy::Var(v) if self.family(v).is_some() => {
                for q in self.ok_members(v) {
                    if self.attempt(|c| c.select(v, q)) {
                        return self.ground(&ATy::Var(v));
                    }
                }
                Ty::Unit
            }
            ATy::Var(_) => Ty::Unit,
            ATy::Obj(c, s) => Ty::Obj(Box::new(TyEff::new(self.ground(&c), s))),
            ATy::Bin(q, c, e) => {
                let e = self.concrete_eff(e);
                Ty::Bin(q, Box::new(TyEff::new(self.ground(&c), e)))
            }
        }
    }

    fn ground_res(&mut self, r: &ARes) -> Approx {
        match r {
            ARes::Stuck => Approx::Stuck,
            ARes::Typed(t, e) => Approx::Typed(TyEff::new(self.ground(t), *e)),
        }
    }

    fn load(&mut self, env: &[(Var, TyEff)]) {
        for (x, t) in env {
            let ty = self.lift(&t.ty);
            self.env.push((x.clone(), ty, t.eff));
        }
    }

    fn lift(&self, t: &Ty) -> ATy {
        match t {
            Ty::Unit => ATy::Unit,
            Ty::Obj(c) => ATy::Obj(Box::new(self.lift(&c.ty)), c.eff),
            Ty::Bin(q, c) => ATy::Bin(*q, Box::new(self.lift(&c.ty)), AEff::L(c.eff)),
        }
    }
}

fn canonical(order: &LabelOrder, env: &[(Var, TyEff)], p: &Process) -> (Vec<(Var, TyEff)>, Process) {
    let canon = |l: Label| order.canon(l);
    (env.iter().map(|(x, t)| (x.clone(), t.map_labels(&canon))).collect(), map_labels(p, &canon))
}

/// Most general approximation of `p` at `plabel`, with open types read as `Unit`.
pub fn infer_process(
    order: &LabelOrder,
    env: &[(Var, TyEff)],
    plabel: Label,
    p: &Process,
) -> Result<Approx, TypeError> {
    let (env, p) = canonical(order, env, p);
    let mut c = Checker::new(order);
    c.load(&env);
    let r = c.infer(&p, order.canon(plabel), &mut Vec::new())?;
    Ok(c.ground_res(&r))
}

/// A label-constraint term: a known label or the unknown process label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LTerm {
    Unknown,
    L(Label),
}

/// Boolean formula over atoms `a ⊑ b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelFormula {
    True,
    False,
    Leq(LTerm, LTerm),
    And(Vec<LabelFormula>),
    Or(Vec<LabelFormula>),
    Not(Box<LabelFormula>),
}

impl LabelFormula {
    pub fn eval(&self, order: &LabelOrder, q: Label) -> bool {
        let at = |t: &LTerm| match t {
            LTerm::Unknown => q,
            LTerm::L(l) => *l,
        };
        match self {
            LabelFormula::True => true,
            LabelFormula::False => false,
            LabelFormula::Leq(a, b) => order.leq(at(a), at(b)),
            LabelFormula::And(fs) => fs.iter().all(|f| f.eval(order, q)),
            LabelFormula::Or(fs) => fs.iter().any(|f| f.eval(order, q)),
            LabelFormula::Not(f) => !f.eval(order, q),
        }
    }
}

/// The highest label satisfying `f`.
pub fn models(f: &LabelFormula, order: &LabelOrder) -> Option<Label> {
    order.distinct().rev().find(|q| f.eval(order, *q))
}

#[derive(Clone, Debug)]
pub struct ExprInference {
    /// Descending by label.
    pub members: Vec<(Label, Result<Approx, TypeError>)>,
    pub constraint: LabelFormula,
}

/// Check an expression at every label; the constraint holds exactly at the
/// labels where it typechecks.
pub fn infer_expression(order: &LabelOrder, env: &[(Var, TyEff)], f: &Process) -> ExprInference {
    let mut members = Vec::new();
    let mut ok = Vec::new();
    for q in order.distinct().rev() {
        let r = infer_process(order, env, q, f);
        if r.is_ok() {
            ok.push(LabelFormula::And(vec![
                LabelFormula::Leq(LTerm::Unknown, LTerm::L(q)),
                LabelFormula::Leq(LTerm::L(q), LTerm::Unknown),
            ]));
        }
        members.push((q, r));
    }
    let box_ok = box_pred(f, order);
    let constraint = if box_ok { LabelFormula::Or(ok) } else { LabelFormula::False };
    ExprInference { members, constraint }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: String,
    pub rule: String,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub accepted: bool,
    #[serde(rename = "type")]
    pub ty: Option<String>,
    pub effect: Option<String>,
    pub diagnostics: Vec<Diagnostic>,
}

fn show_ty(t: &Ty, order: &LabelOrder) -> String {
    match t {
        Ty::Unit => "Unit".into(),
        Ty::Obj(c) => format!("Obj({}^{})", show_ty(&c.ty, order), order.name(c.eff)),
        Ty::Bin(q, c) => format!("Bin[{}]({}^{})", order.name(*q), show_ty(&c.ty, order), order.name(c.eff)),
    }
}

/// Typecheck a program at the top label, optionally despite a compromised label.
pub fn typecheck(file: &ProgramFile, despite: Option<Label>) -> Verdict {
    let order = match despite {
        Some(c) => match file.order.compromise(c) {
            Ok(o) => o,
            Err(e) => {
                return Verdict {
                    accepted: false,
                    ty: None,
                    effect: None,
                    diagnostics: vec![Diagnostic {
                        code: "E-UNKNOWN-LABEL".into(),
                        rule: "despite".into(),
                        line: 0,
                        col: 0,
                        message: e.to_string(),
                    }],
                }
            }
        },
        None => file.order.clone(),
    };
    match infer_process(&order, &file.hypotheses, order.top(), &file.main) {
        Ok(Approx::Stuck) => Verdict { accepted: true, ty: Some("Stuck".into()), effect: None, diagnostics: vec![] },
        Ok(Approx::Typed(t)) => Verdict {
            accepted: true,
            ty: Some(show_ty(&t.ty, &order)),
            effect: Some(order.name(t.eff).to_string()),
            diagnostics: vec![],
        },
        Err(e) => {
            let pos = file.pos(&e.path).unwrap_or(crate::parser::Pos { line: 0, col: 0 });
            Verdict {
                accepted: false,
                ty: None,
                effect: None,
                diagnostics: vec![Diagnostic {
                    code: "E-TYPE".into(),
                    rule: e.rule.into(),
                    line: pos.line,
                    col: pos.col,
                    message: e.message,
                }],
            }
        }
    }
}
