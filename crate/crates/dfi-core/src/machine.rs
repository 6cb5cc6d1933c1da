//! Abstract machine: a global append-only substitution environment, a store
//! table and a soup of threads with explicit let-frames.

use crate::dfi::{self, MonitorPolicy, Violation};
use crate::labels::{Label, LabelOrder};
use crate::parser::{show, show_mu, ProgramFile};
use crate::syntax::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Entry {
    pub x: Var,
    pub mu: Mu,
    pub src: Label,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreRec {
    pub olabel: Label,
    pub content: Var,
    pub trust: Label,
    pub creator: Label,
    pub aliases: BTreeSet<Arc<str>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub x: Var,
    pub cont: Process,
    pub resume: Label,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Thread {
    pub plabel: Label,
    pub frames: Vec<Frame>,
    pub redex: Process,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub order: Arc<LabelOrder>,
    pub hypotheses: Arc<Vec<(Var, TyEff)>>,
    pub sigma: Vec<Arc<Entry>>,
    pub stores: BTreeMap<Var, StoreRec>,
    pub threads: Vec<Thread>,
    pub next: u32,
    pub optimized: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BlockReason {
    EscalationDenied,
    AccessDenied,
    NoSuchObject,
    NotExecutable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Let { x: String },
    Evaluate { x: String, instance: String, alias_of: Option<String> },
    New { store: String, content: String, trust: String },
    Limit { to: String },
    Relabel { store: String, from: String, to: String },
    Read { store: String, content: String },
    Write { store: String, value: String },
    Execute { store: String, olabel: String, label_after: String },
    Fork { child: usize },
}

/// One reduction. `store`/`value` carry the machine variables involved so
/// observers need not parse `kind`.
#[derive(Clone, Debug, Serialize)]
pub struct Event {
    pub thread: usize,
    pub rule: &'static str,
    pub plabel: String,
    pub kind: EventKind,
    #[serde(skip)]
    pub label_before: Label,
    #[serde(skip)]
    pub store: Option<Var>,
    #[serde(skip)]
    pub value: Option<Var>,
    #[serde(skip)]
    pub olabel: Option<Label>,
    #[serde(skip)]
    pub visible: bool,
}

#[derive(Clone, Debug)]
pub enum StepOutcome {
    Next(Box<Config>, Box<Event>),
    Blocked(BlockReason),
    Terminal,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MachineError {
    #[error("no thread with index {0}")]
    BadThread(usize),
}

enum Local {
    Stepped(Event),
    Blocked(BlockReason),
    Terminal,
}

pub fn load(file: &ProgramFile) -> Config {
    Config {
        order: Arc::new(file.order.clone()),
        hypotheses: Arc::new(file.hypotheses.clone()),
        sigma: Vec::new(),
        stores: BTreeMap::new(),
        threads: vec![Thread { plabel: file.order.top(), frames: Vec::new(), redex: file.main.clone() }],
        next: 1,
        optimized: false,
    }
}

pub fn sigma_values(sigma: &[Arc<Entry>], x: &Var) -> Vec<Mu> {
    let mut out = vec![Mu::Value(Value::Var(x.clone()))];
    let mut cur = x.clone();
    let mut seen = HashSet::new();
    while seen.insert(cur.clone()) {
        match sigma.iter().find(|e| e.x == cur) {
            Some(e) => {
                out.push(e.mu.clone());
                match &e.mu {
                    Mu::Value(Value::Var(y)) => cur = y.clone(),
                    _ => break,
                }
            }
            None => break,
        }
    }
    out
}

fn value_key(mu: &Mu) -> Option<&Mu> {
    match mu {
        Mu::Value(_) => Some(mu),
        Mu::ObjectInit(..) => None,
    }
}

pub fn same_object(sigma: &[Arc<Entry>], w1: &Var, w2: &Var) -> bool {
    let a = sigma_values(sigma, w1);
    let b = sigma_values(sigma, w2);
    a.iter().filter_map(value_key).any(|m| b.iter().filter_map(value_key).any(|n| m == n))
}

impl Config {
    pub fn entry(&self, x: &Var) -> Option<&Entry> {
        self.sigma.iter().rev().find(|e| e.x == *x).map(|e| e.as_ref())
    }

    fn fresh(&mut self, name: &str) -> Var {
        let v = Var { name: Arc::from(name), id: self.next };
        self.next += 1;
        v
    }

    fn fresh_like(&mut self, x: &Var) -> Var {
        let v = x.fresh(self.next);
        self.next += 1;
        v
    }

    /// The store `w` denotes, following variable instances.
    pub fn resolve_store(&self, w: &Var) -> Option<Var> {
        let mut cur = w.clone();
        for _ in 0..=self.sigma.len() {
            if self.stores.contains_key(&cur) {
                return Some(cur);
            }
            match self.entry(&cur).map(|e| &e.mu) {
                Some(Mu::Value(Value::Var(y))) => cur = y.clone(),
                _ => return None,
            }
        }
        None
    }

    /// The packed code `x` is an instance of, if any.
    pub fn resolve_pack(&self, x: &Var) -> Option<Process> {
        let mut cur = x.clone();
        for _ in 0..=self.sigma.len() {
            match self.entry(&cur).map(|e| &e.mu) {
                Some(Mu::Value(Value::Var(y))) => cur = y.clone(),
                Some(Mu::Value(Value::Pack(f))) => return Some((**f).clone()),
                _ => return None,
            }
        }
        None
    }

    fn push(&mut self, x: Var, mu: Mu, src: Label) {
        self.sigma.push(Arc::new(Entry { x, mu, src }));
    }

    fn bind_res(&mut self, r: &Res, plabel: Label) -> Var {
        match r {
            Res::Var(v) => v.clone(),
            Res::Unit => {
                let u = self.fresh("u");
                self.push(u.clone(), Mu::Value(Value::Unit), plabel);
                u
            }
        }
    }

    fn lname(&self, l: Label) -> String {
        self.order.name(l).to_string()
    }

    fn event(&self, thread: usize, rule: &'static str, before: Label, kind: EventKind) -> Event {
        Event {
            thread,
            rule,
            plabel: self.lname(before),
            kind,
            label_before: before,
            store: None,
            value: None,
            olabel: None,
            visible: false,
        }
    }

    fn step_mut(&mut self, i: usize) -> Local {
        let order = self.order.clone();
        let t = &mut self.threads[i];
        let p = t.plabel;
        let redex = std::mem::replace(&mut t.redex, unit());
        let put_back = |cfg: &mut Config, r: Process| cfg.threads[i].redex = r;
        match redex {
            Process::Fork(a, b) => {
                let child = Thread { plabel: p, frames: Vec::new(), redex: *a };
                self.threads.push(child);
                let n = self.threads.len() - 1;
                self.threads[i].redex = *b;
                Local::Stepped(self.event(i, "fork", p, EventKind::Fork { child: n }))
            }
            Process::Let(x, a, b) => {
                let ev = self.event(i, "let", p, EventKind::Let { x: x.to_string() });
                let t = &mut self.threads[i];
                t.frames.push(Frame { x, cont: *b, resume: p });
                t.redex = *a;
                Local::Stepped(ev)
            }
            Process::Limit(l, a) => {
                if order.leq(l, p) {
                    let t = &mut self.threads[i];
                    t.plabel = l;
                    t.redex = *a;
                    Local::Stepped(self.event(i, "limit", p, EventKind::Limit { to: self.lname(l) }))
                } else {
                    put_back(self, Process::Limit(l, a));
                    Local::Blocked(BlockReason::EscalationDenied)
                }
            }
            Process::New(r, s) => {
                let content = self.bind_res(&r, p);
                let w = self.fresh("obj");
                self.push(w.clone(), Mu::ObjectInit(r, s), p);
                self.stores.insert(
                    w.clone(),
                    StoreRec { olabel: p, content: content.clone(), trust: s, creator: p, aliases: BTreeSet::new() },
                );
                self.threads[i].redex = var(&w);
                let mut ev = self.event(
                    i,
                    "new",
                    p,
                    EventKind::New { store: w.to_string(), content: content.to_string(), trust: self.lname(s) },
                );
                ev.store = Some(w);
                ev.value = Some(content);
                Local::Stepped(ev)
            }
            Process::Relabel(o2, w) => {
                let Some(st) = self.resolve_store(&w) else {
                    put_back(self, Process::Relabel(o2, w));
                    return Local::Blocked(BlockReason::NoSuchObject);
                };
                let o = self.stores[&st].olabel;
                if order.leq(order.join(o, o2), p) {
                    self.stores.get_mut(&st).expect("resolved").olabel = o2;
                    self.threads[i].redex = unit();
                    let mut ev = self.event(
                        i,
                        "un/protect",
                        p,
                        EventKind::Relabel { store: st.to_string(), from: self.lname(o), to: self.lname(o2) },
                    );
                    ev.store = Some(st);
                    ev.visible = true;
                    Local::Stepped(ev)
                } else {
                    put_back(self, Process::Relabel(o2, w));
                    Local::Blocked(BlockReason::AccessDenied)
                }
            }
            Process::Read(w) => {
                let Some(st) = self.resolve_store(&w) else {
                    put_back(self, Process::Read(w));
                    return Local::Blocked(BlockReason::NoSuchObject);
                };
                let c = self.stores[&st].content.clone();
                self.threads[i].redex = var(&c);
                let mut ev =
                    self.event(i, "read", p, EventKind::Read { store: st.to_string(), content: c.to_string() });
                ev.store = Some(st);
                ev.value = Some(c);
                ev.visible = true;
                Local::Stepped(ev)
            }
            Process::Write(w, r) => {
                let Some(st) = self.resolve_store(&w) else {
                    put_back(self, Process::Write(w, r));
                    return Local::Blocked(BlockReason::NoSuchObject);
                };
                let o = self.stores[&st].olabel;
                if !order.leq(o, p) {
                    put_back(self, Process::Write(w, r));
                    return Local::Blocked(BlockReason::AccessDenied);
                }
                let x = self.bind_res(&r, p);
                self.stores.get_mut(&st).expect("resolved").content = x.clone();
                self.threads[i].redex = unit();
                let mut ev =
                    self.event(i, "write", p, EventKind::Write { store: st.to_string(), value: x.to_string() });
                ev.store = Some(st);
                ev.value = Some(x);
                ev.visible = true;
                Local::Stepped(ev)
            }
            Process::Exec(w) => {
                let Some(st) = self.resolve_store(&w) else {
                    put_back(self, Process::Exec(w));
                    return Local::Blocked(BlockReason::NoSuchObject);
                };
                let rec = &self.stores[&st];
                let o = rec.olabel;
                let Some(f) = self.resolve_pack(&rec.content.clone()) else {
                    put_back(self, Process::Exec(w));
                    return Local::Blocked(BlockReason::NotExecutable);
                };
                let after = if self.optimized { p } else { order.meet(p, o) };
                let t = &mut self.threads[i];
                t.plabel = after;
                t.redex = f;
                let mut ev = self.event(
                    i,
                    "execute",
                    p,
                    EventKind::Execute { store: st.to_string(), olabel: self.lname(o), label_after: self.lname(after) },
                );
                ev.store = Some(st);
                ev.olabel = Some(o);
                ev.visible = true;
                Local::Stepped(ev)
            }
            Process::Result(_) | Process::Pack(_) if self.threads[i].frames.is_empty() => {
                put_back(self, redex);
                Local::Terminal
            }
            Process::Result(r) => {
                let u = match r {
                    Res::Unit => Value::Unit,
                    Res::Var(v) => Value::Var(v),
                };
                self.pop_frame(i, u)
            }
            Process::Pack(f) => self.pop_frame(i, Value::Pack(f)),
            other @ (Process::Store(..) | Process::Subst(..)) => {
                put_back(self, other);
                Local::Terminal
            }
        }
    }

    fn pop_frame(&mut self, i: usize, u: Value) -> Local {
        let p = self.threads[i].plabel;
        let Frame { x, cont, resume } = self.threads[i].frames.pop().expect("frame present");
        let x2 = self.fresh_like(&x);
        let mu = match u {
            Value::Pack(f) => {
                let mut map = HashMap::new();
                for y in free_vars(&f) {
                    let z = self.fresh_like(&y);
                    self.push(z.clone(), Mu::Value(Value::Var(y.clone())), p);
                    map.insert(y, z);
                }
                Mu::Value(Value::Pack(Box::new(rename(&f, &map))))
            }
            other => Mu::Value(other),
        };
        let shown = show_mu(&mu, &self.order);
        self.push(x2.clone(), mu, p);
        let map: HashMap<Var, Var> = [(x.clone(), x2.clone())].into_iter().collect();
        let t = &mut self.threads[i];
        t.redex = rename(&cont, &map);
        t.plabel = resume;
        let mut alias = None;
        if x.is_source() {
            if let Some(st) = self.resolve_store(&x2) {
                self.stores.get_mut(&st).expect("resolved").aliases.insert(x.name.clone());
                alias = Some(st);
            }
        }
        let mut ev = self.event(
            i,
            "evaluate",
            p,
            EventKind::Evaluate { x: x2.to_string(), instance: shown, alias_of: alias.as_ref().map(|s| s.to_string()) },
        );
        ev.store = alias;
        Local::Stepped(ev)
    }

    /// One reduction of thread `i`.
    pub fn step(&self, i: usize) -> Result<StepOutcome, MachineError> {
        if i >= self.threads.len() {
            return Err(MachineError::BadThread(i));
        }
        let mut next = self.clone();
        Ok(match next.step_mut(i) {
            Local::Stepped(ev) => StepOutcome::Next(Box::new(next), Box::new(ev)),
            Local::Blocked(r) => StepOutcome::Blocked(r),
            Local::Terminal => StepOutcome::Terminal,
        })
    }

    fn is_visible_redex(p: &Process) -> bool {
        matches!(p, Process::Relabel(..) | Process::Read(_) | Process::Write(..) | Process::Exec(_))
    }

    /// Run every thread's thread-local steps to completion.
    fn normalize(&mut self, events: &mut Vec<Event>) {
        let mut i = 0;
        while i < self.threads.len() {
            loop {
                if Self::is_visible_redex(&self.threads[i].redex) {
                    break;
                }
                match self.step_mut(i) {
                    Local::Stepped(ev) => events.push(ev),
                    _ => break,
                }
            }
            i += 1;
        }
    }

    /// Printable rendering of a thread as a nested process.
    pub fn show_thread(&self, i: usize) -> String {
        let t = &self.threads[i];
        let mut s = format!("[{}] {}", self.order.name(t.plabel), show(&t.redex, &self.order));
        for f in t.frames.iter().rev() {
            s = format!("[{}] let {} = {} in {}", self.order.name(f.resume), f.x, s, show(&f.cont, &self.order));
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Terminal,
    AllBlocked,
    StepLimit,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub blocked: Vec<(usize, BlockReason)>,
    pub violations: Vec<Violation>,
    pub stop: StopReason,
    #[serde(skip)]
    pub exec_labels: Vec<(Label, Label)>,
}

#[derive(Clone, Copy, Debug)]
pub enum Scheduler {
    Seeded(u64),
    RoundRobin,
}

/// One in this many seeded steps re-draws a random thread's priority.
const PRIORITY_CHANGE: u32 = 8;

/// Run with a scheduler, checking `on_step` after every reduction. The
/// seeded scheduler always steps the runnable thread of highest random
/// priority.
pub fn run_with(
    cfg: &mut Config,
    scheduler: Scheduler,
    max_steps: usize,
    policy: Option<&MonitorPolicy>,
    mut on_step: impl FnMut(&Config, &Event),
) -> Trace {
    let mut rng = match scheduler {
        Scheduler::Seeded(s) => Some(ChaCha8Rng::seed_from_u64(s)),
        Scheduler::RoundRobin => None,
    };
    let mut trace =
        Trace { records: Vec::new(), blocked: Vec::new(), violations: Vec::new(), stop: StopReason::StepLimit, exec_labels: Vec::new() };
    let mut rr = 0usize;
    let mut prio: Vec<u32> = Vec::new();
    let mut step = 0;
    while step < max_steps {
        let n = cfg.threads.len();
        let candidates: Vec<usize> = match &mut rng {
            Some(r) => {
                while prio.len() < n {
                    prio.push(r.gen());
                }
                if r.gen_ratio(1, PRIORITY_CHANGE) {
                    let k = r.gen_range(0..n);
                    prio[k] = r.gen();
                }
                let mut v: Vec<usize> = (0..n).collect();
                v.sort_by_key(|&i| std::cmp::Reverse(prio[i]));
                v
            }
            None => (0..n).map(|k| (rr + k) % n).collect(),
        };
        let mut progressed = false;
        let mut any_blocked = false;
        for i in candidates {
            let mut next = cfg.clone();
            match next.step_mut(i) {
                Local::Stepped(ev) => {
                    *cfg = next;
                    if let (Some(b), Some(o)) = (Some(ev.label_before), ev.olabel) {
                        trace.exec_labels.push((b, o));
                    }
                    if let Some(pol) = policy {
                        trace.violations.extend(dfi::monitor(&ev, cfg, pol));
                    }
                    on_step(cfg, &ev);
                    trace.records.push(TraceRecord { step, event: ev });
                    progressed = true;
                    break;
                }
                Local::Blocked(r) => {
                    any_blocked = true;
                    if trace.blocked.last() != Some(&(i, r)) {
                        trace.blocked.push((i, r));
                    }
                }
                Local::Terminal => {}
            }
        }
        rr += 1;
        if !progressed {
            trace.stop = if any_blocked { StopReason::AllBlocked } else { StopReason::Terminal };
            return trace;
        }
        step += 1;
    }
    trace
}

pub fn run(cfg: &Config, scheduler: Scheduler, max_steps: usize, policy: Option<&MonitorPolicy>) -> Trace {
    let mut c = cfg.clone();
    run_with(&mut c, scheduler, max_steps, policy, |_, _| {})
}

#[derive(Clone, Debug, Serialize)]
pub struct ExploreReport {
    pub states: usize,
    pub violations: Vec<Violation>,
    pub budget_exhausted: bool,
    pub depth_reached: usize,
    /// Exec steps by a thread above the given label whose label exceeded the store's.
    pub exec_escalations: usize,
    pub exec_count: usize,
}

impl ExploreReport {
    pub fn proved(&self) -> bool {
        !self.budget_exhausted
    }
}

/// Breadth-first exploration of visible-step interleavings up to `depth`.
///
/// Thread-local steps (let, evaluate, fork, limit, new) commute with every
/// other step and are taken eagerly; only reads, writes, relabels and execs
/// count towards the depth.
pub fn explore(
    cfg: &Config,
    depth: usize,
    budget: usize,
    policy: Option<&MonitorPolicy>,
    exec_above: Option<Label>,
) -> ExploreReport {
    let mut report = ExploreReport {
        states: 0,
        violations: Vec::new(),
        budget_exhausted: false,
        depth_reached: 0,
        exec_escalations: 0,
        exec_count: 0,
    };
    let mut seen_viol: HashSet<(String, String)> = HashSet::new();
    let mut record = |report: &mut ExploreReport, cfg: &Config, events: &[Event]| {
        for ev in events {
            if let Some(o) = ev.olabel {
                report.exec_count += 1;
                if let Some(c) = exec_above {
                    if cfg.order.lt(c, ev.label_before) && !cfg.order.leq(ev.label_before, o) {
                        report.exec_escalations += 1;
                    }
                }
            }
            if let Some(pol) = policy {
                for v in dfi::monitor(ev, cfg, pol) {
                    if seen_viol.insert((v.store.clone(), v.instance.clone())) {
                        report.violations.push(v);
                    }
                }
            }
        }
    };
    let mut start = cfg.clone();
    let mut evs = Vec::new();
    start.normalize(&mut evs);
    record(&mut report, &start, &evs);
    let mut seen: HashSet<u128> = HashSet::new();
    seen.insert(canonical_key(&start));
    let mut queue = VecDeque::from([(start, 0usize)]);
    report.states = 1;
    while let Some((c, d)) = queue.pop_front() {
        report.depth_reached = report.depth_reached.max(d);
        if d >= depth {
            continue;
        }
        for i in 0..c.threads.len() {
            if !Config::is_visible_redex(&c.threads[i].redex) {
                continue;
            }
            let mut next = c.clone();
            let mut evs = Vec::new();
            match next.step_mut(i) {
                Local::Stepped(ev) => evs.push(ev),
                _ => continue,
            }
            next.normalize(&mut evs);
            record(&mut report, &next, &evs);
            if seen.insert(canonical_key(&next)) {
                report.states += 1;
                if report.states >= budget {
                    report.budget_exhausted = true;
                    return report;
                }
                queue.push_back((next, d + 1));
            }
        }
    }
    report
}

/// Fingerprints of every state `explore` visits at the same depth and budget.
pub fn reachable_keys(cfg: &Config, depth: usize, budget: usize) -> HashSet<u128> {
    let mut start = cfg.clone();
    start.normalize(&mut Vec::new());
    let mut seen = HashSet::from([canonical_key(&start)]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((c, d)) = queue.pop_front() {
        if d >= depth || seen.len() >= budget {
            continue;
        }
        for i in 0..c.threads.len() {
            if !Config::is_visible_redex(&c.threads[i].redex) {
                continue;
            }
            let mut next = c.clone();
            if !matches!(next.step_mut(i), Local::Stepped(_)) {
                continue;
            }
            next.normalize(&mut Vec::new());
            if seen.insert(canonical_key(&next)) {
                queue.push_back((next, d + 1));
            }
        }
    }
    seen
}

impl Config {
    /// A copy with every thread-local step taken.
    pub fn normalized(&self) -> Config {
        let mut c = self.clone();
        c.normalize(&mut Vec::new());
        c
    }
}

/// α-canonical fingerprint of the reachable part of a configuration.
pub fn canonical_key(cfg: &Config) -> u128 {
    let mut order: Vec<usize> = (0..cfg.threads.len()).collect();
    let shapes: Vec<u64> = cfg.threads.iter().map(erased_hash).collect();
    order.sort_by_key(|&i| shapes[i]);
    let mut c = Canon { cfg, names: HashMap::new(), work: VecDeque::new(), out: Vec::new() };
    for &i in &order {
        let t = &cfg.threads[i];
        c.tok(b'T');
        c.label(t.plabel);
        for f in &t.frames {
            c.tok(b'F');
            c.var(&f.x);
            c.label(f.resume);
            c.proc(&f.cont);
        }
        c.tok(b'R');
        c.proc(&t.redex);
    }
    while let Some(v) = c.work.pop_front() {
        c.tok(b'V');
        c.var(&v);
        if let Some(e) = cfg.entry(&v) {
            c.tok(b'E');
            c.label(e.src);
            c.mu(&e.mu);
        }
        if let Some(s) = cfg.stores.get(&v) {
            c.tok(b'S');
            c.label(s.olabel);
            c.label(s.trust);
            c.label(s.creator);
            c.var(&s.content);
            for a in &s.aliases {
                c.out.extend_from_slice(a.as_bytes());
                c.tok(0);
            }
        }
    }
    let mut h1 = DefaultHasher::new();
    c.out.hash(&mut h1);
    let mut h2 = DefaultHasher::new();
    0xa5u8.hash(&mut h2);
    c.out.hash(&mut h2);
    ((h1.finish() as u128) << 64) | h2.finish() as u128
}

fn erased_hash(t: &Thread) -> u64 {
    fn erase(p: &Process) -> Process {
        let mut map = HashMap::new();
        for v in free_vars(p).into_iter().chain(bound_vars(p)) {
            if !v.is_source() {
                map.insert(v.clone(), Var::named(&v.name));
            }
        }
        rename(p, &map)
    }
    let mut h = DefaultHasher::new();
    t.plabel.hash(&mut h);
    for f in &t.frames {
        f.x.name.hash(&mut h);
        f.resume.hash(&mut h);
        erase(&f.cont).hash(&mut h);
    }
    erase(&t.redex).hash(&mut h);
    h.finish()
}

struct Canon<'a> {
    cfg: &'a Config,
    names: HashMap<Var, u32>,
    work: VecDeque<Var>,
    out: Vec<u8>,
}

impl Canon<'_> {
    fn tok(&mut self, b: u8) {
        self.out.push(b);
    }

    fn label(&mut self, l: Label) {
        self.out.extend_from_slice(&l.0.to_le_bytes());
    }

    fn var(&mut self, v: &Var) {
        if v.is_source() && self.cfg.entry(v).is_none() && !self.cfg.stores.contains_key(v) {
            self.tok(b's');
            self.out.extend_from_slice(v.name.as_bytes());
            self.tok(0);
            return;
        }
        let n = self.names.len() as u32;
        let id = *self.names.entry(v.clone()).or_insert_with(|| {
            self.work.push_back(v.clone());
            n
        });
        self.tok(b'm');
        self.out.extend_from_slice(v.name.as_bytes());
        self.tok(0);
        self.out.extend_from_slice(&id.to_le_bytes());
    }

    fn res(&mut self, r: &Res) {
        match r {
            Res::Unit => self.tok(b'u'),
            Res::Var(v) => self.var(v),
        }
    }

    fn mu(&mut self, mu: &Mu) {
        match mu {
            Mu::Value(Value::Unit) => self.tok(b'u'),
            Mu::Value(Value::Var(v)) => self.var(v),
            Mu::Value(Value::Pack(f)) => {
                self.tok(b'P');
                self.proc(f);
            }
            Mu::ObjectInit(r, s) => {
                self.tok(b'N');
                self.res(r);
                self.label(*s);
            }
        }
    }

    fn proc(&mut self, p: &Process) {
        match p {
            Process::Fork(a, b) => {
                self.tok(b'f');
                self.proc(a);
                self.proc(b);
            }
            Process::Let(x, a, b) => {
                self.tok(b'l');
                self.out.extend_from_slice(x.name.as_bytes());
                self.out.extend_from_slice(&x.id.to_le_bytes());
                self.proc(a);
                self.proc(b);
            }
            Process::Limit(l, a) => {
                self.tok(b'[');
                self.label(*l);
                self.proc(a);
            }
            Process::New(r, s) => {
                self.tok(b'n');
                self.res(r);
                self.label(*s);
            }
            Process::Relabel(o, w) => {
                self.tok(b'<');
                self.label(*o);
                self.var(w);
            }
            Process::Read(w) => {
                self.tok(b'!');
                self.var(w);
            }
            Process::Write(w, r) => {
                self.tok(b'=');
                self.var(w);
                self.res(r);
            }
            Process::Exec(w) => {
                self.tok(b'x');
                self.var(w);
            }
            Process::Pack(f) => {
                self.tok(b'p');
                self.proc(f);
            }
            Process::Result(r) => {
                self.tok(b'r');
                self.res(r);
            }
            Process::Store(w, o, x) => {
                self.tok(b'S');
                self.var(w);
                self.label(*o);
                self.var(x);
            }
            Process::Subst(x, mu, l, a) => {
                self.tok(b'v');
                self.var(x);
                self.mu(mu);
                self.label(*l);
                self.proc(a);
            }
        }
    }
}
