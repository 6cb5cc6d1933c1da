//! Program generators, property suites and the scaling benchmark.

use crate::algo::infer_process;
use crate::decl::{check_runtime, derives, typable, DeclError};
use crate::dfi::MonitorPolicy;
use crate::labels::{Label, LabelOrder};
use crate::machine::{explore, load, run, run_with, Config, Scheduler};
use crate::parser::ProgramFile;
use crate::syntax::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    /// Passed within an exhausted search or state budget.
    BoundedPass,
    Fail,
    /// Failed on an input that does not meet the property's hypothesis.
    ExpectedFail,
}

/// One line of a suite report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Record {
    pub suite: String,
    pub case: String,
    pub seed: u64,
    pub result: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl Record {
    fn new(suite: &str, case: impl Into<String>, seed: u64, result: Outcome, witness: Option<String>) -> Self {
        Record { suite: suite.into(), case: case.into(), seed, result, witness }
    }
}

pub fn count(records: &[Record], o: Outcome) -> usize {
    records.iter().filter(|r| r.result == o).count()
}

pub fn to_json_lines(records: &[Record]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect()
}

/// Random process generator over a fixed scope.
pub struct Gen<'a> {
    rng: ChaCha8Rng,
    order: &'a LabelOrder,
    scope: Vec<Var>,
    /// Preferred targets of object operations.
    objects: Vec<Var>,
    prefix: String,
    next: u32,
    max_trust: Label,
    /// Limits go above this label only occasionally.
    limit_cap: Label,
}

#[derive(Clone, Copy)]
enum Leaf {
    Unit,
    Var,
    Read,
    Write,
    Exec,
    Relabel,
    New,
}

impl<'a> Gen<'a> {
    pub fn new(seed: u64, order: &'a LabelOrder, scope: &[Var], prefix: &str, max_trust: Label) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order,
            scope: scope.to_vec(),
            objects: Vec::new(),
            prefix: prefix.into(),
            next: 0,
            max_trust,
            limit_cap: order.top(),
        }
    }

    pub fn with_objects(mut self, objects: &[Var]) -> Self {
        self.objects = objects.to_vec();
        self
    }

    fn target(&mut self) -> Var {
        if self.objects.is_empty() || self.rng.gen_bool(0.15) {
            self.pick()
        } else {
            self.objects[self.rng.gen_range(0..self.objects.len())].clone()
        }
    }

    fn limit_label(&mut self) -> Label {
        if self.rng.gen_bool(0.9) {
            let ls: Vec<Label> = self.order.distinct().filter(|l| self.order.leq(*l, self.limit_cap)).collect();
            ls[self.rng.gen_range(0..ls.len())]
        } else {
            self.label()
        }
    }

    fn fresh(&mut self) -> Var {
        self.next += 1;
        Var::named(&format!("{}{}", self.prefix, self.next))
    }

    fn pick(&mut self) -> Var {
        self.scope[self.rng.gen_range(0..self.scope.len())].clone()
    }

    fn res(&mut self) -> Res {
        if self.scope.is_empty() || self.rng.gen_bool(0.4) {
            Res::Unit
        } else {
            Res::Var(self.pick())
        }
    }

    fn label(&mut self) -> Label {
        let ls: Vec<Label> = self.order.distinct().collect();
        ls[self.rng.gen_range(0..ls.len())]
    }

    fn trust(&mut self, guarded: bool) -> Label {
        if guarded {
            return Label::BOT;
        }
        let ls: Vec<Label> = self.order.distinct().filter(|l| self.order.leq(*l, self.max_trust)).collect();
        ls[self.rng.gen_range(0..ls.len())]
    }

    fn leaf(&mut self, guarded: bool) -> Process {
        let kinds: &[Leaf] = if self.scope.is_empty() {
            &[Leaf::Unit, Leaf::New]
        } else {
            &[Leaf::Unit, Leaf::Var, Leaf::Read, Leaf::Write, Leaf::Exec, Leaf::Relabel, Leaf::New]
        };
        match kinds[self.rng.gen_range(0..kinds.len())] {
            Leaf::Unit => unit(),
            Leaf::Var => var(&self.pick()),
            Leaf::Read => Process::Read(self.target()),
            Leaf::Write => {
                let w = self.target();
                Process::Write(w, self.res())
            }
            Leaf::Exec => Process::Exec(self.target()),
            Leaf::Relabel => {
                let o = self.label();
                Process::Relabel(o, self.target())
            }
            Leaf::New => {
                let r = self.res();
                Process::New(r, self.trust(guarded))
            }
        }
    }

    /// A process of roughly `size` constructors. With `expr` set the result
    /// is an expression whose unguarded `new`s carry the least label.
    pub fn process(&mut self, size: usize, expr: bool) -> Process {
        if size <= 1 {
            return self.leaf(expr);
        }
        let pick = if size >= 3 { self.rng.gen_range(0..6) } else { 5 };
        match pick {
            0..=2 => {
                let k = self.rng.gen_range(1..size - 1);
                let a = if !expr && k >= 2 && self.rng.gen_bool(0.25) {
                    pack(self.process(k - 1, true))
                } else {
                    self.process(k, expr)
                };
                let x = self.fresh();
                let is_obj = creates_object(&a);
                self.scope.push(x.clone());
                if is_obj {
                    self.objects.push(x.clone());
                }
                let b = self.process(size - 1 - k, expr);
                self.scope.pop();
                if is_obj {
                    self.objects.pop();
                }
                let_(&x, a, b)
            }
            3 | 4 => {
                let k = self.rng.gen_range(1..size - 1);
                let a = self.process(k, expr);
                fork(a, self.process(size - 1 - k, expr))
            }
            _ => {
                let l = self.limit_label();
                limit(l, self.process(size - 1, false))
            }
        }
    }
}

fn env_objects(env: &[(Var, TyEff)]) -> Vec<Var> {
    env.iter().filter(|(_, t)| matches!(t.ty, Ty::Obj(_))).map(|(x, _)| x.clone()).collect()
}

fn creates_object(p: &Process) -> bool {
    match p {
        Process::New(..) => true,
        Process::Limit(_, a) => creates_object(a),
        _ => false,
    }
}

/// Parameters of a generated adversary `[C] _`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AdversarySpec {
    pub clabel: Label,
    /// Upper bound on the number of constructors below the outer limit.
    pub size: usize,
    pub seed: u64,
}

pub const ADVERSARY_SIZE: usize = 40;

/// A C-adversary over `scope`: no stores, no substitutions, trust annotations at most C.
pub fn gen_adversary(spec: AdversarySpec, scope: &[Var], objects: &[Var], order: &LabelOrder) -> Process {
    if spec.size <= 1 {
        return limit(spec.clabel, unit());
    }
    let mut g = Gen::new(spec.seed, order, scope, "adv_", spec.clabel).with_objects(objects);
    g.limit_cap = spec.clabel;
    let size = g.rng.gen_range(1..=spec.size);
    limit(spec.clabel, g.process(size, false))
}

pub fn gen_box_expression(seed: u64, order: &LabelOrder, scope: &[Var], objects: &[Var], size: usize) -> Process {
    let mut g = Gen::new(seed, order, scope, "e_", order.top()).with_objects(objects);
    g.process(size, true)
}

/// A closed program that creates a few objects and then runs random code
/// over them.
pub fn gen_program(seed: u64, order: &LabelOrder, size: usize) -> Process {
    let mut g = Gen::new(seed, order, &[], "g_", order.top());
    let v = Var::named("v");
    g.scope.push(v.clone());
    let mut prelude: Vec<(Var, Process)> = vec![(v.clone(), unit())];
    for i in 0..g.rng.gen_range(1..=3) {
        let o = Var::named(&format!("o{i}"));
        let s = g.label();
        let at = g.label();
        let body = Process::New(Res::Var(v.clone()), s);
        prelude.push((o.clone(), if at == order.top() { body } else { limit(at, body) }));
        g.scope.push(o.clone());
        g.objects.push(o);
    }
    if g.rng.gen_bool(0.7) {
        let p = Var::named("code");
        let n = g.rng.gen_range(1..=4);
        let f = g.process(n, true);
        prelude.push((p.clone(), pack(f)));
        g.scope.push(p.clone());
        let c = Var::named("prog");
        let s = g.label();
        prelude.push((c.clone(), Process::New(Res::Var(p), s)));
        g.scope.push(c.clone());
        g.objects.push(c);
    }
    let mut body = g.process(size, false);
    for (x, a) in prelude.into_iter().rev() {
        body = let_(&x, a, body);
    }
    body
}

/// Names bound by hypotheses and by the top-level let spine.
pub fn spine_scope(file: &ProgramFile) -> Vec<Var> {
    let mut out: Vec<Var> = file.hypotheses.iter().map(|(x, _)| x.clone()).collect();
    let mut p = &file.main;
    while let Process::Let(x, _, b) = p {
        out.push(x.clone());
        p = b;
    }
    out
}

/// Names in [`spine_scope`] that denote objects.
pub fn spine_objects(file: &ProgramFile) -> Vec<Var> {
    let mut out = env_objects(&file.hypotheses);
    let mut p = &file.main;
    while let Process::Let(x, a, b) = p {
        if creates_object(a) {
            out.push(x.clone());
        }
        p = b;
    }
    out
}

/// `file` with `adv` forked at the end of its top-level let spine.
pub fn compose(file: &ProgramFile, adv: &Process) -> ProgramFile {
    fn go(p: &Process, adv: &Process) -> Process {
        match p {
            Process::Let(x, a, b) => Process::Let(x.clone(), a.clone(), Box::new(go(b, adv))),
            other => fork(adv.clone(), other.clone()),
        }
    }
    ProgramFile::new(file.order.clone(), file.hypotheses.clone(), go(&file.main, adv))
}

pub fn accepted_despite(file: &ProgramFile, c: Option<Label>) -> bool {
    let order = match c {
        Some(c) => match file.order.compromise(c) {
            Ok(o) => o,
            Err(_) => return false,
        },
        None => file.order.clone(),
    };
    infer_process(&order, &file.hypotheses, order.top(), &file.main).is_ok()
}

/// Every generated C-adversary typechecks despite C.
pub fn prop_adversary_completeness(
    env: &[(Var, TyEff)],
    order: &LabelOrder,
    c: Label,
    n: usize,
    seed: u64,
) -> Vec<Record> {
    let scope: Vec<Var> = env.iter().map(|(x, _)| x.clone()).collect();
    let objects = env_objects(env);
    let o = order.compromise(c).expect("label in order");
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let adv = gen_adversary(AdversarySpec { clabel: c, size: ADVERSARY_SIZE, seed: s }, &scope, &objects, order);
            match infer_process(&o, env, o.top(), &adv) {
                Ok(_) => Record::new("adversary-completeness", order.name(c), s, Outcome::Pass, None),
                Err(e) => Record::new(
                    "adversary-completeness",
                    order.name(c),
                    s,
                    Outcome::Fail,
                    Some(format!("{}: {} in {}", e.rule, e.message, crate::parser::show(&adv, order))),
                ),
            }
        })
        .collect()
}

/// Typability of a □-expression at a label carries over to every lower label,
/// with the effect cut down by the meet.
pub fn prop_monotonicity(env: &[(Var, TyEff)], order: &LabelOrder, n: usize, seed: u64) -> Vec<Record> {
    prop_monotonicity_down_to(env, order, n, seed, Label::BOT)
}

/// [`prop_monotonicity`] checking only lower labels at or above `floor`.
pub fn prop_monotonicity_down_to(
    env: &[(Var, TyEff)],
    order: &LabelOrder,
    n: usize,
    seed: u64,
    floor: Label,
) -> Vec<Record> {
    let scope: Vec<Var> = env.iter().map(|(x, _)| x.clone()).collect();
    let objects = env_objects(env);
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let size = 1 + (s % 8) as usize;
            let f = gen_box_expression(s, order, &scope, &objects, size);
            monotonicity_case(env, order, &f, s, floor)
        })
        .collect()
}

fn monotonicity_case(env: &[(Var, TyEff)], order: &LabelOrder, f: &Process, seed: u64, floor: Label) -> Record {
    let shown = crate::parser::show(f, order);
    let mut bounded = false;
    for hi in order.distinct() {
        let Ok(a) = infer_process(order, env, hi, f) else { continue };
        for lo in order.distinct().filter(|l| order.lt(*l, hi) && order.leq(floor, *l)) {
            let r = match &a {
                Approx::Stuck => typable(order, env, lo, f, crate::decl::DEFAULT_BUDGET),
                Approx::Typed(t) => {
                    let want = TyEff::new(t.ty.clone(), order.meet(t.eff, lo));
                    derives(order, env, lo, f, &want, crate::decl::DEFAULT_BUDGET)
                }
            };
            match r {
                Ok(true) => {}
                Err(DeclError::BudgetExhausted) => bounded = true,
                _ => {
                    return Record::new(
                        "monotonicity",
                        shown,
                        seed,
                        Outcome::Fail,
                        Some(format!(
                            "{} at {} but not {} at {}",
                            crate::parser::print_approx(&a, order),
                            order.name(hi),
                            crate::parser::print_approx(&a.map_labels(&|l| order.meet(l, lo)), order),
                            order.name(lo)
                        )),
                    )
                }
            }
        }
    }
    Record::new("monotonicity", shown, seed, if bounded { Outcome::BoundedPass } else { Outcome::Pass }, None)
}

/// Runtime typability is preserved by every step of seeded runs.
pub fn prop_preservation(
    name: &str,
    file: &ProgramFile,
    despite: Option<Label>,
    steps: usize,
    seeds: &[u64],
    budget: usize,
) -> Vec<Record> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = load(file);
            let mut failure: Option<String> = None;
            let mut bounded = false;
            let mut rules: Vec<&'static str> = Vec::new();
            match check_runtime(&cfg, despite, budget) {
                Ok(true) => {}
                Ok(false) => failure = Some("initial configuration untypable".into()),
                Err(_) => bounded = true,
            }
            if failure.is_none() {
                run_with(&mut cfg, Scheduler::Seeded(seed), steps, None, |c, ev| {
                    if failure.is_some() {
                        return;
                    }
                    rules.push(ev.rule);
                    match check_runtime(c, despite, budget) {
                        Ok(true) => {}
                        Ok(false) => failure = Some(format!("untypable after step {} ({})", rules.len(), rules.join(" "))),
                        Err(_) => bounded = true,
                    }
                });
            }
            let result = match (&failure, bounded) {
                (Some(_), _) => Outcome::Fail,
                (None, true) => Outcome::BoundedPass,
                (None, false) => Outcome::Pass,
            };
            Record::new("preservation", name, seed, result, failure)
        })
        .collect()
}

/// Raise the static trust of the object created by entry `x` to `s`.
pub fn raise_trust(cfg: &Config, x: &Var, s: Label) -> Config {
    let mut c = cfg.clone();
    for e in c.sigma.iter_mut() {
        if e.x == *x {
            if let Mu::ObjectInit(r, _) = &e.mu {
                let mut ne = (**e).clone();
                ne.mu = Mu::ObjectInit(r.clone(), s);
                *e = std::sync::Arc::new(ne);
            }
        }
    }
    c
}

/// Run `file` and, after each step, raise the trust of each created object to
/// the top label until the result no longer typechecks.
pub fn preservation_negative_control(file: &ProgramFile, steps: usize, seed: u64, budget: usize) -> Record {
    let mut cfg = load(file);
    let mut found: Option<String> = None;
    let top = file.order.top();
    run_with(&mut cfg, Scheduler::Seeded(seed), steps, None, |c, ev| {
        if found.is_some() || ev.rule != "new" {
            return;
        }
        for e in c.sigma.iter() {
            if let Mu::ObjectInit(_, s) = &e.mu {
                if *s != top && check_runtime(&raise_trust(c, &e.x, top), None, budget) == Ok(false) {
                    found = Some(format!("Typ store: trust of {} raised to {}", e.x, file.order.name(top)));
                    return;
                }
            }
        }
    });
    let result = if found.is_some() { Outcome::ExpectedFail } else { Outcome::Fail };
    Record::new("preservation-mutant", "raised-trust", seed, result, found)
}

/// Bounded exploration of `file` composed with generated C-adversaries.
#[allow(clippy::too_many_arguments)]
pub fn prop_strong_dfi(
    name: &str,
    file: &ProgramFile,
    c: Label,
    policy: &MonitorPolicy,
    n_adv: usize,
    depth: usize,
    budget: usize,
    seed: u64,
) -> Vec<Record> {
    let scope = spine_scope(file);
    let objects = spine_objects(file);
    (0..n_adv as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let adv = gen_adversary(AdversarySpec { clabel: c, size: ADVERSARY_SIZE, seed: s }, &scope, &objects, &file.order);
            let r = explore(&load(&compose(file, &adv)), depth, budget, Some(policy), None);
            let (result, witness) = match r.violations.first() {
                Some(v) => (
                    Outcome::Fail,
                    Some(format!("{} holds {} via {}", v.store, v.instance, v.witness.join(" <- "))),
                ),
                None if r.proved() => (Outcome::Pass, None),
                None => (Outcome::BoundedPass, None),
            };
            Record::new("strong-dfi", name, s, result, witness)
        })
        .collect()
}

/// Trusted execs never need the label drop, and dropping it changes nothing.
#[allow(clippy::too_many_arguments)]
pub fn prop_exec_redundancy(
    name: &str,
    file: &ProgramFile,
    c: Label,
    policy: &MonitorPolicy,
    seeds: &[u64],
    n_adv: usize,
    depth: usize,
    budget: usize,
) -> Vec<Record> {
    let mut out: Vec<Record> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = load(file);
            let mut opt = cfg.clone();
            opt.optimized = true;
            let a = run(&cfg, Scheduler::Seeded(seed), 200, Some(policy));
            let b = run(&opt, Scheduler::Seeded(seed), 200, Some(policy));
            let esc = a.exec_labels.iter().find(|(p, o)| file.order.lt(c, *p) && !file.order.leq(*p, *o));
            let same = serde_json::to_string(&a).ok() == serde_json::to_string(&b).ok();
            let witness = match (esc, same) {
                (Some((p, o)), _) => {
                    Some(format!("exec at {} on an object labelled {}", file.order.name(*p), file.order.name(*o)))
                }
                (None, false) => Some("optimized run diverged".into()),
                (None, true) => None,
            };
            let result = if witness.is_some() { Outcome::Fail } else { Outcome::Pass };
            Record::new("exec-redundancy-trace", name, seed, result, witness)
        })
        .collect();
    let scope = spine_scope(file);
    let objects = spine_objects(file);
    let explored: Vec<Record> = (0..n_adv as u64).into_par_iter().map(|i| {
        let s = seeds.first().copied().unwrap_or(0).wrapping_add(i);
        let adv = gen_adversary(AdversarySpec { clabel: c, size: ADVERSARY_SIZE, seed: s }, &scope, &objects, &file.order);
        let cfg = load(&compose(file, &adv));
        let mut opt = cfg.clone();
        opt.optimized = true;
        let a = explore(&cfg, depth, budget, Some(policy), Some(c));
        let b = explore(&opt, depth, budget, Some(policy), Some(c));
        let key = |r: &crate::machine::ExploreReport| {
            let mut v: Vec<(String, String)> = r.violations.iter().map(|v| (v.store.clone(), v.instance.clone())).collect();
            v.sort();
            v
        };
        let witness = if a.exec_escalations > 0 {
            Some(format!("{} trusted execs above their object's label", a.exec_escalations))
        } else if key(&a) != key(&b) {
            Some("optimized exploration reached different verdicts".into())
        } else {
            None
        };
        let result = match (&witness, a.proved() && b.proved()) {
            (Some(_), _) => Outcome::Fail,
            (None, true) => Outcome::Pass,
            (None, false) => Outcome::BoundedPass,
        };
        Record::new("exec-redundancy-explore", name, s, result, witness)
    }).collect();
    out.extend(explored);
    out
}

/// A well-typed program of about `n` constructors: a balanced fork tree whose
/// leaves create an object, pack code writing it, store the code and run it.
pub fn synth_program(n: usize, order: &LabelOrder) -> Process {
    const BLOCK: usize = 9;
    let low = order.distinct().nth(1).unwrap_or(Label::BOT);
    let leaves = (n / BLOCK).max(1);
    fn tree(lo: usize, hi: usize, low: Label) -> Process {
        if hi - lo == 1 {
            let x = Var::named(&format!("x{lo}"));
            let c = Var::named(&format!("c{lo}"));
            let o = Var::named(&format!("o{lo}"));
            let r = Var::named(&format!("r{lo}"));
            return let_(
                &x,
                Process::New(Res::Unit, low),
                let_(
                    &c,
                    pack(Process::Write(x.clone(), Res::Unit)),
                    let_(
                        &o,
                        Process::New(Res::Var(c.clone()), low),
                        let_(&r, limit(low, Process::Exec(o.clone())), Process::Read(x.clone())),
                    ),
                ),
            );
        }
        let mid = (lo + hi) / 2;
        fork(tree(lo, mid, low), tree(mid, hi, low))
    }
    tree(0, leaves, low)
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub nodes: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub labels: usize,
    pub rows: Vec<BenchRow>,
    pub exponent: f64,
}

/// Least-squares slope of log time against log size.
pub fn fit_exponent(rows: &[BenchRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.nodes as f64).ln(), r.seconds.max(1e-9).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Time the checker on synthesized programs; each size takes the best of three runs.
pub fn bench_scaling(sizes: &[usize], labels: usize) -> BenchReport {
    let order = LabelOrder::numbered(labels.saturating_sub(1).max(1));
    let rows = sizes
        .iter()
        .map(|&n| {
            let p = synth_program(n, &order);
            let nodes = p.node_count();
            let seconds = (0..3)
                .map(|_| {
                    let t = Instant::now();
                    let r = infer_process(&order, &[], order.top(), &p);
                    let dt = t.elapsed().as_secs_f64();
                    assert!(r.is_ok(), "synthesized program rejected");
                    dt
                })
                .fold(f64::INFINITY, f64::min);
            BenchRow { nodes, seconds }
        })
        .collect::<Vec<_>>();
    let exponent = fit_exponent(&rows);
    BenchReport { labels: order.distinct().count(), rows, exponent }
}

/// Hypothesis types for the exhaustive corpus over `bot < Low < High`.
pub fn corpus_types(order: &LabelOrder) -> Vec<TyEff> {
    let (b, l, h) = (Label::BOT, Label(1), order.top());
    let u = TyEff::unit;
    let obj = TyEff::obj;
    let bin = TyEff::bin;
    vec![
        u(h),
        u(b),
        obj(u(l), h),
        obj(u(h), h),
        obj(u(b), h),
        obj(u(h), b),
        obj(bin(h, u(h), h), h),
        obj(bin(l, u(l), h), h),
        obj(bin(h, u(l), l), h),
        bin(h, u(h), h),
        obj(obj(u(h), h), h),
        obj(u(l), l),
    ]
}

pub const CORPUS_NODES: usize = 9;

/// Nodes: one per constructor plus one per operand (variable, label, or
/// `unit` inside an action).
pub fn corpus_size(p: &Process) -> usize {
    match p {
        Process::Result(_) => 1,
        Process::Read(_) | Process::Exec(_) => 2,
        Process::New(..) | Process::Relabel(..) | Process::Write(..) => 3,
        Process::Fork(a, b) | Process::Let(_, a, b) => 1 + corpus_size(a) + corpus_size(b),
        Process::Limit(_, a) => 2 + corpus_size(a),
        Process::Pack(a) => 1 + corpus_size(a),
        Process::Store(..) | Process::Subst(..) => usize::MAX / 4,
    }
}

fn exact(labels: &[Label], scope: &[Var], s: usize, expr: bool, k: &mut dyn FnMut(Process)) {
    let res = || std::iter::once(Res::Unit).chain(scope.iter().cloned().map(Res::Var));
    match s {
        1 => res().for_each(|r| k(Process::Result(r))),
        2 => {
            for w in scope {
                k(Process::Read(w.clone()));
                k(Process::Exec(w.clone()));
            }
        }
        3 => {
            for r in res() {
                for &l in labels {
                    k(Process::New(r.clone(), l));
                }
            }
            for w in scope {
                for &l in labels {
                    k(Process::Relabel(l, w.clone()));
                }
                for r in res() {
                    k(Process::Write(w.clone(), r));
                }
            }
        }
        _ => {}
    }
    let x = Var::named(&format!("x{}", scope.len()));
    let inner: Vec<Var> = scope.iter().cloned().chain(std::iter::once(x.clone())).collect();
    for a in 1..s.saturating_sub(1) {
        let b = s - 1 - a;
        exact(labels, scope, a, expr, &mut |pa: Process| {
            exact(labels, scope, b, expr, &mut |pb| k(fork(pa.clone(), pb)));
            exact(labels, &inner, b, expr, &mut |pb| k(let_(&x, pa.clone(), pb)));
        });
    }
    if s >= 3 {
        for &l in labels {
            exact(labels, scope, s - 2, false, &mut |a| k(limit(l, a)));
        }
    }
    if !expr && s >= 2 {
        exact(labels, scope, s - 1, true, &mut |a| k(pack(a)));
    }
}

/// Every program with at most `max` nodes over free variables `h0`, `h1`.
pub fn enumerate_corpus(order: &LabelOrder, max: usize, mut k: impl FnMut(Process)) {
    let labels: Vec<Label> = order.distinct().collect();
    let scope = [Var::named("h0"), Var::named("h1")];
    for s in 1..=max {
        exact(&labels, &scope, s, false, &mut k);
    }
}

/// The environment assigned to the `i`-th corpus program.
pub fn corpus_env(i: usize, types: &[TyEff]) -> Vec<(Var, TyEff)> {
    let n = types.len();
    vec![(Var::named("h0"), types[i % n].clone()), (Var::named("h1"), types[(i / n + i) % n].clone())]
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OracleReport {
    pub programs: usize,
    pub accepted: usize,
    pub agree: usize,
    pub budget_exhausted: usize,
    pub disagreements: Vec<String>,
}

/// Compare both checkers on one program.
pub fn oracle_case(order: &LabelOrder, env: &[(Var, TyEff)], p: &Process, budget: usize) -> Result<(bool, bool), DeclError> {
    let a = infer_process(order, env, order.top(), p).is_ok();
    let d = typable(order, env, order.top(), p, budget)?;
    Ok((a, d))
}

/// Exhaustive agreement of the two checkers on the small corpus.
pub fn oracle_equivalence(max: usize, budget: usize, keep: usize) -> OracleReport {
    let order = LabelOrder::new(&["Low", "High"]).expect("valid labels");
    let types = corpus_types(&order);
    let mut rep = OracleReport::default();
    let mut i = 0usize;
    enumerate_corpus(&order, max, |p| {
        let env = corpus_env(i, &types);
        i += 1;
        rep.programs += 1;
        match oracle_case(&order, &env, &p, budget) {
            Err(_) => rep.budget_exhausted += 1,
            Ok((a, d)) => {
                if a == d {
                    rep.agree += 1;
                    rep.accepted += usize::from(a);
                } else if rep.disagreements.len() < keep {
                    let hyps: Vec<String> = env
                        .iter()
                        .map(|(x, t)| format!("{x} : {}", crate::parser::print_ty(t, &order)))
                        .collect();
                    rep.disagreements.push(format!(
                        "algo {} decl {}: {} |- {}",
                        a,
                        d,
                        hyps.join(", "),
                        crate::parser::show(&p, &order)
                    ));
                }
            }
        }
    });
    rep
}
