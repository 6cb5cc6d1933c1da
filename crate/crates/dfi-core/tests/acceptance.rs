use dfi_core::algo::typecheck;
use dfi_core::decl::DEFAULT_BUDGET;
use dfi_core::dfi::MonitorPolicy;
use dfi_core::harness::*;
use dfi_core::labels::{Label, LabelOrder};
use dfi_core::machine::{explore, load};
use dfi_core::parser::{parse, ProgramFile};
use dfi_core::syntax::{TyEff, Var};
use std::time::{Duration, Instant};

const GOLDEN_LIMIT: Duration = Duration::from_secs(1);
const VARIANT_LIMIT: Duration = Duration::from_secs(120);
const COMPLETENESS_LIMIT: Duration = Duration::from_secs(60);
const BENCH_LIMIT: Duration = Duration::from_secs(60);
const MAX_EXPONENT: f64 = 1.3;
const DEPTH: usize = 12;
const STATE_BUDGET: usize = 1_000_000;
const VARIANT_ADVERSARIES: usize = 100;
const ADVERSARIES: usize = 1000;
const MONOTONICITY_CASES: usize = 500;
const GENERATED_PROGRAMS: usize = 50;
const GENERATED_SIZE: usize = 8;
const RUN_SEEDS: u64 = 20;
const RUN_STEPS: usize = 100;
const REDUNDANCY_ADVERSARIES: usize = 100;
const BENCH_SIZES: [usize; 3] = [1_000, 10_000, 100_000];
const BENCH_LABELS: usize = 4;
const ORACLE_NODES: usize = 9;

const ATTACKS: [(&str, &str); 4] = [
    ("attack_write_copy", "Typ write"),
    ("attack_copy_execute", "Typ execute"),
    ("attack_unprotect_write_protect", "Typ un/protect"),
    ("attack_copy_protect_execute", "Typ execute"),
];
const ACCEPTED_GOLDENS: [&str; 3] = ["example1", "example2_low_exec", "example2_high_setup"];

fn program(name: &str) -> ProgramFile {
    let path = format!("{}/programs/{name}.dfi", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    parse(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn source_line(name: &str, line: usize) -> String {
    let path = format!("{}/programs/{name}.dfi", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap().lines().nth(line.saturating_sub(1)).unwrap_or("").to_string()
}

fn low(f: &ProgramFile) -> Label {
    f.order.label("Low").unwrap()
}

fn four() -> LabelOrder {
    LabelOrder::new(&["Low", "Medium", "High", "Top"]).unwrap()
}

/// Objects and code at every level of the four-label order.
fn mixed_env(order: &LabelOrder) -> Vec<(Var, TyEff)> {
    let l = |n: &str| order.label(n).unwrap();
    let (lo, me, hi, top) = (l("Low"), l("Medium"), l("High"), l("Top"));
    vec![
        (Var::named("sys"), TyEff::obj(TyEff::unit(top), top)),
        (Var::named("home"), TyEff::obj(TyEff::unit(me), top)),
        (Var::named("url"), TyEff::obj(TyEff::unit(lo), top)),
        (Var::named("tmp"), TyEff::obj(TyEff::unit(lo), lo)),
        (Var::named("tool"), TyEff::obj(TyEff::bin(hi, TyEff::unit(hi), hi), hi)),
        (Var::named("app"), TyEff::obj(TyEff::bin(lo, TyEff::unit(lo), lo), me)),
        (Var::named("cfg"), TyEff::unit(hi)),
    ]
}

fn generated_corpus(c: Label) -> Vec<ProgramFile> {
    let order = four();
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < GENERATED_PROGRAMS {
        let f = ProgramFile::new(order.clone(), vec![], gen_program(seed, &order, GENERATED_SIZE));
        if accepted_despite(&f, Some(c)) {
            out.push(f);
        }
        seed += 1;
    }
    out
}

fn accepted_corpus() -> Vec<(String, ProgramFile)> {
    let mut v: Vec<(String, ProgramFile)> = ACCEPTED_GOLDENS.iter().map(|n| (n.to_string(), program(n))).collect();
    let c = low(&v[0].1);
    v.extend(generated_corpus(c).into_iter().enumerate().map(|(i, f)| (format!("generated{i}"), f)));
    v
}

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn first_failure(records: &[Record]) -> Option<String> {
    records
        .iter()
        .find(|r| r.result == Outcome::Fail)
        .map(|r| format!("{} {} seed {}: {}", r.suite, r.case, r.seed, r.witness.clone().unwrap_or_default()))
}

fn c1_goldens() -> Check {
    let t = Instant::now();
    let e1 = program("example1");
    let v1 = typecheck(&e1, Some(low(&e1)));
    let d1 = t.elapsed();
    if !v1.accepted {
        return Err(format!("example1 rejected: {:?}", v1.diagnostics));
    }
    let t = Instant::now();
    let e2 = program("example2");
    let v2 = typecheck(&e2, Some(low(&e2)));
    let d2 = t.elapsed();
    let Some(d) = v2.diagnostics.first().filter(|_| !v2.accepted) else {
        return Err("example2 accepted".into());
    };
    let line = source_line("example2", d.line);
    let at = line.get(d.col.saturating_sub(1)..).unwrap_or("");
    if !at.starts_with("exec setup.exe") {
        return Err(format!("example2 diagnostic at {}:{} ({at:?})", d.line, d.col));
    }
    if d1 > GOLDEN_LIMIT || d2 > GOLDEN_LIMIT {
        return Err(format!("too slow: {d1:?}, {d2:?}"));
    }
    Ok(format!("example1 accepted in {d1:?}; example2 rejected by {} at {}:{} in {d2:?}", d.rule, d.line, d.col))
}

fn c2_variants() -> Check {
    let t = Instant::now();
    let mut bounded = 0;
    for name in ["example2_low_exec", "example2_high_setup"] {
        let f = program(name);
        let c = low(&f);
        if !typecheck(&f, Some(c)).accepted {
            return Err(format!("{name} rejected"));
        }
        let medium = f.order.label("Medium").unwrap();
        for policy in [MonitorPolicy::names(&["home"], medium), MonitorPolicy::trusted(&f.hypotheses, &f.order, c)] {
            let r = prop_strong_dfi(name, &f, c, &policy, VARIANT_ADVERSARIES, DEPTH, STATE_BUDGET, 0);
            if let Some(w) = first_failure(&r) {
                return Err(w);
            }
            bounded += count(&r, Outcome::BoundedPass);
        }
    }
    let d = t.elapsed();
    if d > VARIANT_LIMIT {
        return Err(format!("too slow: {d:?}"));
    }
    Ok(format!("both variants accepted; 0 violations over 2x2x{VARIANT_ADVERSARIES} explorations ({bounded} bounded) in {d:?}"))
}

fn c3_attacks() -> Check {
    for (name, rule) in ATTACKS {
        let f = program(name);
        let c = low(&f);
        let v = typecheck(&f, Some(c));
        let got = v.diagnostics.first().map(|d| d.rule.as_str()).unwrap_or("");
        if v.accepted || got != rule {
            return Err(format!("{name}: expected rejection by {rule}, got accepted={} rule={got:?}", v.accepted));
        }
        let policy = MonitorPolicy::trusted(&f.hypotheses, &f.order, c);
        let r = explore(&load(&f), DEPTH, STATE_BUDGET, Some(&policy), None);
        if r.violations.is_empty() {
            return Err(format!("{name}: no violation within depth {DEPTH}"));
        }
    }
    Ok("4/4 attacks rejected with the expected rule and violate at runtime".into())
}

fn c4_completeness() -> Check {
    let order = four();
    let env = mixed_env(&order);
    let t = Instant::now();
    let mut n = 0;
    for c in [Label::BOT, order.label("Low").unwrap(), order.label("Medium").unwrap()] {
        let r = prop_adversary_completeness(&env, &order, c, ADVERSARIES, 1);
        if let Some(w) = first_failure(&r) {
            return Err(w);
        }
        n += r.len();
    }
    let d = t.elapsed();
    if d > COMPLETENESS_LIMIT {
        return Err(format!("too slow: {d:?}"));
    }
    Ok(format!("{n}/{n} adversaries typecheck in {d:?}"))
}

fn c5_monotonicity() -> Check {
    let order = four();
    let r = prop_monotonicity(&mixed_env(&order), &order, MONOTONICITY_CASES, 5);
    match first_failure(&r) {
        Some(w) => Err(w),
        None => Ok(format!("{} cases, 0 failures", r.len())),
    }
}

fn c6_preservation() -> Check {
    let seeds: Vec<u64> = (0..RUN_SEEDS).collect();
    let mut runs = 0;
    for (name, f) in accepted_corpus() {
        let r = prop_preservation(&name, &f, Some(low(&f)), RUN_STEPS, &seeds, DEFAULT_BUDGET);
        if let Some(w) = first_failure(&r) {
            return Err(w);
        }
        runs += r.len();
    }
    let ctl = preservation_negative_control(&program("example1"), RUN_STEPS, 0, DEFAULT_BUDGET);
    if ctl.result != Outcome::ExpectedFail {
        return Err("negative control: raising an object's trust went unnoticed".into());
    }
    Ok(format!("{runs} runs preserved; negative control caught ({})", ctl.witness.unwrap_or_default()))
}

fn c7_strong_dfi() -> Check {
    let t = Instant::now();
    let mut total = 0;
    let mut bounded = 0;
    for (name, f) in accepted_corpus() {
        let c = low(&f);
        let policy = MonitorPolicy::trusted(&f.hypotheses, &f.order, c);
        let r = prop_strong_dfi(&name, &f, c, &policy, ADVERSARIES, DEPTH, STATE_BUDGET, 0);
        if let Some(w) = first_failure(&r) {
            return Err(w);
        }
        total += r.len();
        bounded += count(&r, Outcome::BoundedPass);
    }
    let e2 = program("example2");
    let policy = MonitorPolicy::trusted(&e2.hypotheses, &e2.order, low(&e2));
    let r = explore(&load(&e2), DEPTH, STATE_BUDGET, Some(&policy), None);
    let Some(v) = r.violations.first() else {
        return Err("negative control: example2 shows no violation".into());
    };
    Ok(format!(
        "{total} compositions, 0 violations ({bounded} bounded) in {:?}; example2 violates {} via {}",
        t.elapsed(),
        v.store,
        v.witness.join(" <- ")
    ))
}

fn c8_exec_redundancy() -> Check {
    let seeds: Vec<u64> = (0..RUN_SEEDS).collect();
    let mut n = 0;
    for (name, f) in accepted_corpus() {
        let c = low(&f);
        let policy = MonitorPolicy::trusted(&f.hypotheses, &f.order, c);
        let r = prop_exec_redundancy(&name, &f, c, &policy, &seeds, REDUNDANCY_ADVERSARIES, DEPTH, STATE_BUDGET);
        if let Some(w) = first_failure(&r) {
            return Err(w);
        }
        n += r.len();
    }
    Ok(format!("{n} runs and explorations: no trusted exec above its object, optimized verdicts identical"))
}

fn c9_bench() -> Check {
    let t = Instant::now();
    let r = bench_scaling(&BENCH_SIZES, BENCH_LABELS);
    let d = t.elapsed();
    let rows: Vec<String> = r.rows.iter().map(|x| format!("{}:{:.4}s", x.nodes, x.seconds)).collect();
    let msg = format!("exponent {:.3} [{}] total {d:?}", r.exponent, rows.join(" "));
    if r.exponent > MAX_EXPONENT || d > BENCH_LIMIT {
        Err(msg)
    } else {
        Ok(msg)
    }
}

fn c10_oracle() -> Check {
    let t = Instant::now();
    let r = oracle_equivalence(ORACLE_NODES, DEFAULT_BUDGET, 5);
    let msg = format!(
        "{} programs, {} agree, {} accepted, {} budget-exhausted in {:?}",
        r.programs,
        r.agree,
        r.accepted,
        r.budget_exhausted,
        t.elapsed()
    );
    if r.agree == r.programs && r.budget_exhausted == 0 {
        Ok(msg)
    } else {
        Err(format!("{msg}; {}", r.disagreements.join("; ")))
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 golden examples", c1_goldens),
        ("2 example 2 variants", c2_variants),
        ("3 attack corpus", c3_attacks),
        ("4 adversary completeness", c4_completeness),
        ("5 monotonicity", c5_monotonicity),
        ("6 preservation", c6_preservation),
        ("7 strong DFI", c7_strong_dfi),
        ("8 exec redundancy", c8_exec_redundancy),
        ("9 checker scaling", c9_bench),
        ("10 oracle equivalence", c10_oracle),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(m) => println!("criterion {name}: PASS - {m}"),
            Err(m) => {
                failed += 1;
                println!("criterion {name}: FAIL - {m}");
            }
        }
    }
    println!("acceptance: {}/10 passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
