use dfi_core::algo::typecheck;
use dfi_core::decl::{check_decl, typable, DEFAULT_BUDGET};
use dfi_core::dfi::{flows_from, is_watched, MonitorPolicy};
use dfi_core::harness::*;
use dfi_core::labels::{Label, LabelOrder};
use dfi_core::machine::{canonical_key, explore, load, reachable_keys, run, run_with, Config, Entry, Scheduler, StepOutcome};
use dfi_core::parser::{parse, print, ProgramFile};
use dfi_core::syntax::*;
use proptest::prelude::*;
use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

#[path = "support/subtype_oracle.rs"]
mod subtype_oracle;

fn four() -> LabelOrder {
    LabelOrder::new(&["Low", "Medium", "High", "Top"]).unwrap()
}

fn numbered(n: usize) -> LabelOrder {
    LabelOrder::numbered(n)
}

fn generated(seed: u64, size: usize) -> ProgramFile {
    let order = four();
    let main = gen_program(seed, &order, size);
    ProgramFile::new(order, vec![], main)
}

fn walk<'a>(p: &'a Process, out: &mut Vec<&'a Process>) {
    out.push(p);
    for c in p.children() {
        walk(c, out);
    }
}

fn nodes(p: &Process) -> Vec<&Process> {
    let mut v = Vec::new();
    walk(p, &mut v);
    v
}

#[test]
fn label_order_laws() {
    for n in 0..=7 {
        let base = numbered(n);
        for c in base.all() {
            let o = base.compromise(c).unwrap();
            let ls: Vec<Label> = o.all().collect();
            for &a in &ls {
                assert!(o.leq(a, a));
                for &b in &ls {
                    assert!(o.leq(a, b) || o.leq(b, a));
                    if o.leq(a, b) && o.leq(b, a) {
                        assert!(o.same(a, b));
                    }
                    assert_eq!(o.same(o.meet(a, b), a), o.leq(a, b));
                    assert_eq!(o.same(o.join(a, b), b), o.leq(a, b));
                    for &d in &ls {
                        if o.leq(a, b) && o.leq(b, d) {
                            assert!(o.leq(a, d));
                        }
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn compromise_only_collapses(n in 1usize..8, c in 0u16..8, l in 0u16..8) {
        let base = numbered(n);
        let c = Label(c % (n as u16 + 1));
        let l = Label(l % (n as u16 + 1));
        let o = base.compromise(c).unwrap();
        if o.star(l) {
            prop_assert!(base.star(l));
        }
        if base.leq(l, c) {
            prop_assert!(!o.star(l));
            prop_assert!(o.same(l, Label::BOT));
        } else {
            prop_assert!(o.star(l));
        }
    }

    #[test]
    fn parser_round_trip(seed in any::<u64>(), size in 1usize..20) {
        let f = generated(seed, size);
        let text = print(&f);
        let g = parse(&text).unwrap();
        prop_assert_eq!(&g.main, &f.main);
        prop_assert_eq!(print(&g), text);
    }

    #[test]
    fn parsed_programs_are_source_terms(seed in any::<u64>(), size in 1usize..20) {
        let g = parse(&print(&generated(seed, size))).unwrap();
        for p in nodes(&g.main) {
            prop_assert!(!matches!(p, Process::Store(..) | Process::Subst(..)));
            if let Process::Pack(f) = p {
                prop_assert!(is_expression(f));
            }
        }
    }

    #[test]
    fn parse_errors_carry_position(seed in any::<u64>(), cut in any::<prop::sample::Index>(), junk in "[{}();#<>\\[\\]=!:]") {
        let text = print(&generated(seed, 6));
        let at = cut.index(text.len());
        let at = (0..=at).rev().find(|i| text.is_char_boundary(*i)).unwrap();
        let broken = format!("{}{}{}", &text[..at], junk, &text[at..]);
        if let Err(e) = parse(&broken) {
            prop_assert!(e.line >= 1 && e.col >= 1);
            prop_assert!(e.code.as_str().starts_with("E-"));
        }
    }

    #[test]
    fn box_pred_distributes(s1 in any::<u64>(), s2 in any::<u64>(), x in "[a-z]{1,3}") {
        let order = four();
        let a = gen_program(s1, &order, 5);
        let b = gen_program(s2, &order, 5);
        let both = box_pred(&a, &order) && box_pred(&b, &order);
        prop_assert_eq!(box_pred(&fork(a.clone(), b.clone()), &order), both);
        prop_assert_eq!(box_pred(&let_(&Var::named(&x), a, b), &order), both);
    }
}

fn store_contents_are_vars(cfg: &Config) -> bool {
    cfg.stores.values().all(|s| cfg.sigma.iter().any(|e| e.x == s.content) || cfg.hypotheses.iter().any(|(x, _)| *x == s.content))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn machine_step_invariants(seed in any::<u64>(), sched in any::<u64>()) {
        let f = generated(seed, 12);
        let mut cfg = load(&f);
        let mut prev: Vec<Arc<Entry>> = Vec::new();
        let mut ok = true;
        let mut why = String::new();
        run_with(&mut cfg, Scheduler::Seeded(sched), 150, None, |c, ev| {
            if !ok {
                return;
            }
            if c.sigma.len() < prev.len() || c.sigma[..prev.len()] != prev[..] {
                ok = false;
                why = "sigma shrank or changed".into();
            }
            prev = c.sigma.clone();
            if !store_contents_are_vars(c) {
                ok = false;
                why = "store content is not a bound variable".into();
            }
            if matches!(ev.rule, "limit" | "execute") {
                let after = c.order.lookup(&ev.plabel).unwrap();
                if !c.order.leq(after, ev.label_before) {
                    ok = false;
                    why = format!("{} raised the process label", ev.rule);
                }
            }
        });
        prop_assert!(ok, "{}", why);
    }

    #[test]
    fn step_is_deterministic(seed in any::<u64>(), sched in any::<u64>(), k in 0usize..60) {
        let f = generated(seed, 10);
        let mut cfg = load(&f);
        run_with(&mut cfg, Scheduler::Seeded(sched), k, None, |_, _| {});
        for i in 0..cfg.threads.len() {
            let a = cfg.step(i).unwrap();
            let b = cfg.step(i).unwrap();
            match (a, b) {
                (StepOutcome::Next(x, e1), StepOutcome::Next(y, e2)) => {
                    prop_assert_eq!(canonical_key(&x), canonical_key(&y));
                    prop_assert_eq!(&x.sigma, &y.sigma);
                    prop_assert_eq!(e1.kind, e2.kind);
                }
                (StepOutcome::Blocked(r1), StepOutcome::Blocked(r2)) => prop_assert_eq!(r1, r2),
                (StepOutcome::Terminal, StepOutcome::Terminal) => {}
                _ => prop_assert!(false, "outcomes differ"),
            }
        }
    }

    #[test]
    fn runs_stay_inside_explored_graph(seed in any::<u64>(), sched in any::<u64>()) {
        let f = generated(seed, 10);
        let cfg = load(&f);
        let depth = 8;
        let keys = reachable_keys(&cfg, depth, 200_000);
        prop_assume!(keys.len() < 200_000);
        let mut c = cfg.clone();
        let mut visible = 0;
        let mut missing = None;
        run_with(&mut c, Scheduler::Seeded(sched), 200, None, |c, ev| {
            if ev.visible {
                visible += 1;
            }
            if visible <= depth && missing.is_none() && !keys.contains(&canonical_key(&c.normalized())) {
                missing = Some(visible);
            }
        });
        prop_assert!(missing.is_none(), "state after {:?} visible steps not explored", missing);
    }
}

fn sigma_chain(len: usize, srcs: &[u16], links: &[usize]) -> Vec<Arc<Entry>> {
    (0..len)
        .map(|i| {
            let x = Var::named(&format!("x{i}"));
            let mu = if i == 0 || links[i].is_multiple_of(3) {
                Mu::Value(Value::Unit)
            } else {
                Mu::Value(Value::Var(Var::named(&format!("x{}", links[i] % i))))
            };
            Arc::new(Entry { x, mu, src: Label(srcs[i]) })
        })
        .collect()
}

proptest! {
    #[test]
    fn flows_from_monotone_and_stable(
        srcs in prop::collection::vec(0u16..4, 12),
        links in prop::collection::vec(0usize..50, 12),
        len in 1usize..12,
        q in 0usize..12,
    ) {
        let order = numbered(3);
        let sigma = sigma_chain(12, &srcs, &links);
        let x = Var::named(&format!("x{}", q % len));
        let prefix = &sigma[..len];
        for l in order.all() {
            for l2 in order.all() {
                if order.leq(l, l2) && flows_from(prefix, &order, &x, l) {
                    prop_assert!(flows_from(prefix, &order, &x, l2));
                }
            }
            // extending σ with fresh names never changes an existing verdict
            let mut ext = prefix.to_vec();
            for (i, entry) in sigma.iter().enumerate().skip(len) {
                let mut e = (**entry).clone();
                e.x = Var::named(&format!("y{i}"));
                ext.push(Arc::new(e));
            }
            prop_assert_eq!(flows_from(prefix, &order, &x, l), flows_from(&ext, &order, &x, l));
        }
    }
}

/// Whether some state reachable under any interleaving holds a watched
/// store whose content flows from the threshold. `None` if the cap is hit.
fn brute_force_violation(cfg: &Config, policy: &MonitorPolicy, cap: usize) -> Option<bool> {
    let bad = |c: &Config| {
        c.stores
            .iter()
            .any(|(w, s)| is_watched(c, w, policy) && flows_from(&c.sigma, &c.order, &s.content, policy.threshold))
    };
    if bad(cfg) {
        return Some(true);
    }
    let mut seen = HashSet::from([canonical_key(cfg)]);
    let mut queue = VecDeque::from([cfg.clone()]);
    while let Some(c) = queue.pop_front() {
        for i in 0..c.threads.len() {
            if let Ok(StepOutcome::Next(n, _)) = c.step(i) {
                if bad(&n) {
                    return Some(true);
                }
                if seen.insert(canonical_key(&n)) {
                    if seen.len() > cap {
                        return None;
                    }
                    queue.push_back(*n);
                }
            }
        }
    }
    Some(false)
}

fn golden(name: &str) -> ProgramFile {
    let path = format!("{}/programs/{name}.dfi", env!("CARGO_MANIFEST_DIR"));
    parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn monitor_matches_state_scan_on_goldens() {
    for name in ["example1", "example2", "example2_low_exec", "attack_write_copy", "attack_copy_execute"] {
        let f = golden(name);
        let low = f.order.label("Low").unwrap();
        let policy = MonitorPolicy::trusted(&f.hypotheses, &f.order, low);
        let cfg = load(&f);
        let Some(expected) = brute_force_violation(&cfg, &policy, 300_000) else { continue };
        let r = explore(&cfg, 64, 1_000_000, Some(&policy), None);
        assert!(r.proved(), "{name}");
        assert_eq!(!r.violations.is_empty(), expected, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn monitor_matches_state_scan(seed in any::<u64>(), adv in any::<u64>(), t in 0u16..4) {
        let f = generated(seed, 6);
        let low = f.order.label("Low").unwrap();
        let f = compose(&f, &gen_adversary(AdversarySpec { clabel: low, size: 6, seed: adv }, &spine_scope(&f), &spine_objects(&f), &f.order));
        let policy = MonitorPolicy::trusted(&f.hypotheses, &f.order, Label(t));
        let cfg = load(&f);
        let expected = brute_force_violation(&cfg, &policy, 100_000);
        prop_assume!(expected.is_some());
        let r = explore(&cfg, 64, 1_000_000, Some(&policy), None);
        prop_assume!(r.proved());
        prop_assert_eq!(!r.violations.is_empty(), expected.unwrap());
    }

    #[test]
    fn decl_effects_bounded_by_process_label(seed in any::<u64>(), p in 0u16..5) {
        let order = four();
        let f = gen_program(seed, &order, 6);
        let pl = Label(p);
        for a in check_decl(&order, &[], pl, &f, DEFAULT_BUDGET).unwrap() {
            if let Approx::Typed(t) = a {
                prop_assert!(order.leq(t.eff, pl));
            }
        }
    }

    #[test]
    fn monotonicity_suite(seed in any::<u64>()) {
        let order = numbered(3);
        let r = prop_monotonicity(&mono_env(&order), &order, 5, seed);
        prop_assert_eq!(count(&r, Outcome::Fail), 0, "{}", to_json_lines(&r));
    }

    #[test]
    fn monotonicity_above_bot(seed in any::<u64>()) {
        let order = numbered(3);
        let r = prop_monotonicity_down_to(&mono_env(&order), &order, 5, seed, Label(1));
        prop_assert_eq!(count(&r, Outcome::Fail), 0, "{}", to_json_lines(&r));
    }

    #[test]
    fn adversaries_typecheck(seed in any::<u64>(), c in 0u16..4) {
        let f = golden("example1");
        let r = prop_adversary_completeness(&spine_env(&f), &f.order, Label(c), 5, seed);
        prop_assert_eq!(count(&r, Outcome::Fail), 0, "{}", to_json_lines(&r));
    }

    #[test]
    fn preservation_on_generated(seed in any::<u64>()) {
        let f = generated(seed, 8);
        let low = f.order.label("Low").unwrap();
        prop_assume!(accepted_despite(&f, Some(low)));
        let r = prop_preservation("gen", &f, Some(low), 60, &[seed, seed ^ 1], DEFAULT_BUDGET);
        prop_assert_eq!(count(&r, Outcome::Fail), 0, "{}", to_json_lines(&r));
    }

    #[test]
    fn typecheck_is_deterministic(seed in any::<u64>(), c in 0u16..5) {
        let f = generated(seed, 10);
        let c = (c < 4).then_some(Label(c));
        let a = serde_json::to_string(&typecheck(&f, c)).unwrap();
        let b = serde_json::to_string(&typecheck(&f, c)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn generators_are_deterministic(seed in any::<u64>(), size in 1usize..30) {
        let order = four();
        prop_assert_eq!(gen_program(seed, &order, size), gen_program(seed, &order, size));
        let scope = [Var::named("a"), Var::named("b")];
        let spec = AdversarySpec { clabel: Label(2), size, seed };
        prop_assert_eq!(gen_adversary(spec, &scope, &scope, &order), gen_adversary(spec, &scope, &scope, &order));
    }

    #[test]
    fn adversary_shape(seed in any::<u64>(), c in 0u16..5, size in 1usize..60) {
        let order = four();
        let c = Label(c);
        let scope = [Var::named("a"), Var::named("b")];
        let adv = gen_adversary(AdversarySpec { clabel: c, size, seed }, &scope, &scope[..1], &order);
        prop_assert!(matches!(&adv, Process::Limit(l, _) if *l == c));
        for p in nodes(&adv) {
            prop_assert!(!matches!(p, Process::Store(..) | Process::Subst(..)));
            if let Process::New(_, s) = p {
                prop_assert!(order.leq(*s, c));
            }
        }
    }
}

fn mono_env(order: &LabelOrder) -> Vec<(Var, TyEff)> {
    let t = corpus_types(order);
    vec![(Var::named("h0"), t[4].clone()), (Var::named("h1"), t[7].clone())]
}

/// Typed (hence any type) at L1 through a stuck head, untypable at bot where
/// the read value's effect is no longer trusted.
#[test]
fn monotonicity_stuck_head_at_bot() {
    let f = parse(
        "labels L1 < L2 < L3;\nassume h : Obj(Obj(Unit^L3)^L3)^L3;\ndo let e = !h in let u = <L1> e in [bot] new(e # L2)",
    )
    .unwrap();
    let l1 = f.order.label("L1").unwrap();
    assert!(box_pred(&f.main, &f.order));
    assert!(typable(&f.order, &f.hypotheses, l1, &f.main, DEFAULT_BUDGET).unwrap());
    assert!(
        typable(&f.order, &f.hypotheses, Label::BOT, &f.main, DEFAULT_BUDGET).unwrap(),
        "typable at L1 but not at bot"
    );
}

/// The example's top-level bindings as an environment of trusted and
/// untrusted objects, for adversary generation.
fn spine_env(f: &ProgramFile) -> Vec<(Var, TyEff)> {
    let low = f.order.label("Low").unwrap();
    let top = f.order.top();
    let unit_at = |l| TyEff::unit(l);
    vec![
        (Var::named("trusted"), TyEff::obj(unit_at(top), top)),
        (Var::named("shared"), TyEff::obj(unit_at(low), top)),
        (Var::named("code"), TyEff::obj(TyEff::bin(low, unit_at(low), low), low)),
    ]
}

#[test]
fn run_is_reproducible() {
    let f = golden("example2");
    let cfg = load(&f);
    let low = f.order.label("Low").unwrap();
    let pol = MonitorPolicy::trusted(&f.hypotheses, &f.order, low);
    for s in 0..10 {
        let a = serde_json::to_string(&run(&cfg, Scheduler::Seeded(s), 200, Some(&pol))).unwrap();
        let b = serde_json::to_string(&run(&cfg, Scheduler::Seeded(s), 200, Some(&pol))).unwrap();
        assert_eq!(a, b);
    }
}
