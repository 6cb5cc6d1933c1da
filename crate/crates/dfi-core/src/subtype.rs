//! Satisfiability of subtype constraints over types with variables.
//!
//! `Obj` is invariant. `Bin_P(τ^E) <: Bin_Q(τ'^E')` holds when `Q ⊑ P`,
//! `E' = E ⊓ Q` and `τ <: τ'`. Ground `Bin` types are well formed when their
//! result effect is at most their run label, which makes `<:` a partial order.
//!
//! Variables are given shapes by propagating concrete bounds along variable
//! edges, expanded into structures with label unknowns, and the remaining label
//! problem is solved over the finite order. Expansion that keeps feeding back
//! into itself is a cycle through a constructor and has no finite solution.

use crate::labels::{Label, LabelOrder, LabelSet};
use crate::syntax::{Ty, TyEff};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SType {
    Unit,
    Obj(Box<SType>, Label),
    Bin(Label, Box<SType>, Label),
    Var(u32),
}

/// `lhs <: rhs`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sub(pub SType, pub SType);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unsat {
    pub reason: String,
    /// The input constraints involved, printed.
    pub chain: Vec<String>,
}

impl fmt::Display for Unsat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason, self.chain.join(", "))
    }
}

pub fn show(t: &SType, order: &LabelOrder) -> String {
    match t {
        SType::Unit => "Unit".into(),
        SType::Var(v) => format!("χ{v}"),
        SType::Obj(c, s) => format!("Obj({}^{})", show(c, order), order.name(*s)),
        SType::Bin(p, c, e) => format!("Bin[{}]({}^{})", order.name(*p), show(c, order), order.name(*e)),
    }
}

fn show_sub(s: &Sub, order: &LabelOrder) -> String {
    format!("{} <: {}", show(&s.0, order), show(&s.1, order))
}

/// The ground relation on well-formed types.
pub fn ground_sub(a: &Ty, b: &Ty, order: &LabelOrder) -> bool {
    match (a, b) {
        (Ty::Unit, Ty::Unit) => true,
        (Ty::Obj(c), Ty::Obj(d)) => same(c, d, order),
        (Ty::Bin(p, c), Ty::Bin(q, d)) => {
            order.leq(*q, *p) && order.same(d.eff, order.meet(c.eff, *q)) && ground_sub(&c.ty, &d.ty, order)
        }
        _ => false,
    }
}

fn same(a: &TyEff, b: &TyEff, order: &LabelOrder) -> bool {
    order.same(a.eff, b.eff)
        && match (&a.ty, &b.ty) {
            (Ty::Unit, Ty::Unit) => true,
            (Ty::Obj(c), Ty::Obj(d)) => same(c, d, order),
            (Ty::Bin(p, c), Ty::Bin(q, d)) => order.same(*p, *q) && same(c, d, order),
            _ => false,
        }
}

pub fn well_formed(t: &Ty, order: &LabelOrder) -> bool {
    match t {
        Ty::Unit => true,
        Ty::Obj(c) => well_formed(&c.ty, order),
        Ty::Bin(p, c) => order.leq(c.eff, *p) && well_formed(&c.ty, order),
    }
}

/// Substitute a ground assignment for the variables of `t`.
pub fn instantiate(t: &SType, assign: &[(u32, Ty)]) -> Option<Ty> {
    Some(match t {
        SType::Unit => Ty::Unit,
        SType::Var(v) => assign.iter().find(|(w, _)| w == v)?.1.clone(),
        SType::Obj(c, s) => Ty::Obj(Box::new(TyEff::new(instantiate(c, assign)?, *s))),
        SType::Bin(p, c, e) => Ty::Bin(*p, Box::new(TyEff::new(instantiate(c, assign)?, *e))),
    })
}

pub fn holds(subs: &[Sub], assign: &[(u32, Ty)], order: &LabelOrder) -> bool {
    subs.iter().all(|Sub(a, b)| match (instantiate(a, assign), instantiate(b, assign)) {
        (Some(a), Some(b)) => ground_sub(&a, &b, order),
        _ => false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LT {
    C(Label),
    V(usize),
}

#[derive(Clone, Debug)]
enum IType {
    Unit,
    Obj(Box<IType>, LT),
    Bin(LT, Box<IType>, LT),
    Var(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Unit,
    Obj,
    Bin,
}

#[derive(Clone, Copy, Debug)]
enum LC {
    Leq(LT, LT),
    Eq(LT, LT),
    /// The first equals the meet of the other two.
    Meet(LT, LT, LT),
}

struct Solver<'o> {
    order: &'o LabelOrder,
    input: &'o [Sub],
    parent: Vec<usize>,
    kind: Vec<Option<Kind>>,
    depth: Vec<usize>,
    expansion: Vec<Option<IType>>,
    var_edges: Vec<(usize, usize, usize)>,
    work: Vec<(IType, IType, bool, usize)>,
    labels: usize,
    lcs: Vec<(LC, usize)>,
    max_depth: usize,
    originals: Vec<(u32, usize)>,
}

impl<'o> Solver<'o> {
    fn fail(&self, reason: impl Into<String>, origins: &[usize]) -> Unsat {
        let mut o = origins.to_vec();
        o.sort_unstable();
        o.dedup();
        Unsat { reason: reason.into(), chain: o.iter().map(|&i| show_sub(&self.input[i], self.order)).collect() }
    }

    fn new_var(&mut self, depth: usize) -> usize {
        self.parent.push(self.parent.len());
        self.kind.push(None);
        self.depth.push(depth);
        self.expansion.push(None);
        self.parent.len() - 1
    }

    fn new_label(&mut self) -> LT {
        self.labels += 1;
        LT::V(self.labels - 1)
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let n = self.parent[c];
            self.parent[c] = r;
            c = n;
        }
        r
    }

    fn lower(&mut self, t: &SType) -> IType {
        match t {
            SType::Unit => IType::Unit,
            SType::Var(v) => {
                let i = match self.originals.iter().find(|(w, _)| w == v) {
                    Some((_, i)) => *i,
                    None => {
                        let i = self.new_var(0);
                        self.originals.push((*v, i));
                        i
                    }
                };
                IType::Var(i)
            }
            SType::Obj(c, s) => IType::Obj(Box::new(self.lower(c)), LT::C(self.order.canon(*s))),
            SType::Bin(p, c, e) => {
                IType::Bin(LT::C(self.order.canon(*p)), Box::new(self.lower(c)), LT::C(self.order.canon(*e)))
            }
        }
    }

    fn set_kind(&mut self, x: usize, k: Kind, origin: usize) -> Result<(), Unsat> {
        let r = self.find(x);
        match self.kind[r] {
            Some(j) if j != k => Err(self.fail("a variable is required to have two different shapes", &[origin])),
            _ => {
                self.kind[r] = Some(k);
                Ok(())
            }
        }
    }

    fn union(&mut self, x: usize, y: usize, origin: usize) -> Result<(), Unsat> {
        let (a, b) = (self.find(x), self.find(y));
        if a == b {
            return Ok(());
        }
        let k = match (self.kind[a], self.kind[b]) {
            (Some(i), Some(j)) if i != j => {
                return Err(self.fail("related variables are required to have different shapes", &[origin]))
            }
            (i, j) => i.or(j),
        };
        self.parent[a] = b;
        self.kind[b] = k;
        Ok(())
    }

    fn expand(&mut self, x: usize, origin: usize) -> Result<IType, Unsat> {
        if let Some(t) = &self.expansion[x] {
            return Ok(t.clone());
        }
        let r = self.find(x);
        let d = self.depth[x] + 1;
        if d > self.max_depth {
            return Err(self.fail("cyclic constraint: a variable must contain itself", &[origin]));
        }
        let t = match self.kind[r].expect("expanding a shaped variable") {
            Kind::Unit => IType::Unit,
            Kind::Obj => {
                let c = self.new_var(d);
                IType::Obj(Box::new(IType::Var(c)), self.new_label())
            }
            Kind::Bin => {
                let c = self.new_var(d);
                let (p, e) = (self.new_label(), self.new_label());
                self.lcs.push((LC::Leq(e, p), origin));
                IType::Bin(p, Box::new(IType::Var(c)), e)
            }
        };
        self.expansion[x] = Some(t.clone());
        Ok(t)
    }

    fn kind_of(t: &IType) -> Option<Kind> {
        match t {
            IType::Unit => Some(Kind::Unit),
            IType::Obj(..) => Some(Kind::Obj),
            IType::Bin(..) => Some(Kind::Bin),
            IType::Var(_) => None,
        }
    }

    /// Relate `a` and `b` by subtyping, or by equality when `eq` is set.
    fn step(&mut self, a: IType, b: IType, eq: bool, origin: usize) -> Result<(), Unsat> {
        let deref = |s: &Self, t: IType| match t {
            IType::Var(x) => s.expansion[x].clone().unwrap_or(IType::Var(x)),
            t => t,
        };
        let (a, b) = (deref(self, a), deref(self, b));
        match (a, b) {
            (IType::Var(x), IType::Var(y)) => {
                self.union(x, y, origin)?;
                self.var_edges.push((x, y, origin));
                if eq {
                    self.var_edges.push((y, x, origin));
                }
            }
            (IType::Var(x), t) => {
                self.set_kind(x, Self::kind_of(&t).expect("structural"), origin)?;
                let e = self.expand(x, origin)?;
                self.work.push((e, t, eq, origin));
            }
            (t, IType::Var(x)) => {
                self.set_kind(x, Self::kind_of(&t).expect("structural"), origin)?;
                let e = self.expand(x, origin)?;
                self.work.push((t, e, eq, origin));
            }
            (IType::Unit, IType::Unit) => {}
            (IType::Obj(c, s), IType::Obj(d, t)) => {
                self.lcs.push((LC::Eq(s, t), origin));
                self.work.push((*c, *d, true, origin));
            }
            (IType::Bin(p, c, e), IType::Bin(q, d, f)) => {
                if eq {
                    self.lcs.push((LC::Eq(p, q), origin));
                    self.lcs.push((LC::Eq(e, f), origin));
                } else {
                    self.lcs.push((LC::Leq(q, p), origin));
                    self.lcs.push((LC::Meet(f, e, q), origin));
                }
                self.work.push((*c, *d, eq, origin));
            }
            _ => return Err(self.fail("shape mismatch", &[origin])),
        }
        Ok(())
    }

    fn close(&mut self) -> Result<(), Unsat> {
        loop {
            while let Some((a, b, eq, o)) = self.work.pop() {
                self.step(a, b, eq, o)?;
            }
            let mut progressed = false;
            let edges = std::mem::take(&mut self.var_edges);
            for (x, y, o) in edges {
                let r = self.find(x);
                if self.kind[r].is_some() {
                    let (ex, ey) = (self.expand(x, o)?, self.expand(y, o)?);
                    self.work.push((ex, ey, false, o));
                    progressed = true;
                } else {
                    self.var_edges.push((x, y, o));
                }
            }
            if !progressed {
                return Ok(());
            }
        }
    }

    fn value(&self, t: LT, asg: &[Option<Label>]) -> Option<Label> {
        match t {
            LT::C(l) => Some(l),
            LT::V(i) => asg[i],
        }
    }

    fn check(&self, c: &LC, asg: &[Option<Label>]) -> Option<bool> {
        let o = self.order;
        Some(match *c {
            LC::Leq(a, b) => o.leq(self.value(a, asg)?, self.value(b, asg)?),
            LC::Eq(a, b) => o.same(self.value(a, asg)?, self.value(b, asg)?),
            LC::Meet(z, x, y) => o.same(self.value(z, asg)?, o.meet(self.value(x, asg)?, self.value(y, asg)?)),
        })
    }

    fn vars_of(c: &LC) -> Vec<usize> {
        let ts = match *c {
            LC::Leq(a, b) | LC::Eq(a, b) => vec![a, b],
            LC::Meet(a, b, d) => vec![a, b, d],
        };
        ts.into_iter().filter_map(|t| if let LT::V(i) = t { Some(i) } else { None }).collect()
    }

    fn search(&self, watch: &[Vec<usize>], asg: &mut Vec<Option<Label>>, i: usize) -> bool {
        if i == asg.len() {
            return true;
        }
        for l in LabelSet::full(self.order).descending() {
            asg[i] = Some(l);
            if watch[i].iter().all(|&c| self.check(&self.lcs[c].0, asg) != Some(false)) && self.search(watch, asg, i + 1) {
                return true;
            }
        }
        asg[i] = None;
        false
    }

    fn solve_labels(&self) -> Result<Vec<Label>, Unsat> {
        let mut watch = vec![Vec::new(); self.labels];
        for (ci, (c, origin)) in self.lcs.iter().enumerate() {
            match Self::vars_of(c).into_iter().max() {
                Some(v) => watch[v].push(ci),
                None => {
                    if self.check(c, &[]) != Some(true) {
                        return Err(self.fail("label condition fails", &[*origin]));
                    }
                }
            }
        }
        let mut asg = vec![None; self.labels];
        if self.search(&watch, &mut asg, 0) {
            Ok(asg.into_iter().map(|l| l.expect("assigned")).collect())
        } else {
            let origins: Vec<usize> = self.lcs.iter().map(|(_, o)| *o).collect();
            Err(self.fail("no choice of labels satisfies the run-label and effect conditions", &origins))
        }
    }

    fn ground(&self, x: usize, labels: &[Label]) -> Ty {
        let lab = |t: LT| match t {
            LT::C(l) => l,
            LT::V(i) => labels[i],
        };
        match &self.expansion[x] {
            None | Some(IType::Unit) => Ty::Unit,
            Some(IType::Obj(c, s)) => Ty::Obj(Box::new(TyEff::new(self.ground_it(c, labels), lab(*s)))),
            Some(IType::Bin(p, c, e)) => Ty::Bin(lab(*p), Box::new(TyEff::new(self.ground_it(c, labels), lab(*e)))),
            Some(IType::Var(_)) => unreachable!("expansions are structural"),
        }
    }

    fn ground_it(&self, t: &IType, labels: &[Label]) -> Ty {
        match t {
            IType::Var(x) => self.ground(*x, labels),
            IType::Unit => Ty::Unit,
            IType::Obj(c, s) => {
                let LT::C(s) = s else { unreachable!("inner structures come from input") };
                Ty::Obj(Box::new(TyEff::new(self.ground_it(c, labels), *s)))
            }
            IType::Bin(p, c, e) => {
                let (LT::C(p), LT::C(e)) = (p, e) else { unreachable!("inner structures come from input") };
                Ty::Bin(*p, Box::new(TyEff::new(self.ground_it(c, labels), *e)))
            }
        }
    }
}

fn size(t: &SType) -> usize {
    match t {
        SType::Unit | SType::Var(_) => 1,
        SType::Obj(c, _) | SType::Bin(_, c, _) => 1 + size(c),
    }
}

/// Decide whether some ground assignment to the variables satisfies every
/// constraint; on success return one.
pub fn satisfiable(subs: &[Sub], order: &LabelOrder) -> Result<Vec<(u32, Ty)>, Unsat> {
    let total: usize = subs.iter().map(|Sub(a, b)| size(a) + size(b)).sum();
    let mut s = Solver {
        order,
        input: subs,
        parent: Vec::new(),
        kind: Vec::new(),
        depth: Vec::new(),
        expansion: Vec::new(),
        var_edges: Vec::new(),
        work: Vec::new(),
        labels: 0,
        lcs: Vec::new(),
        max_depth: total + 1,
        originals: Vec::new(),
    };
    for (i, Sub(a, b)) in subs.iter().enumerate() {
        let (a, b) = (s.lower(a), s.lower(b));
        s.work.push((a, b, false, i));
    }
    s.close()?;
    let labels = s.solve_labels()?;
    let mut out: Vec<(u32, Ty)> = s.originals.iter().map(|&(v, i)| (v, s.ground(i, &labels))).collect();
    out.sort_by_key(|(v, _)| *v);
    Ok(out)
}
