use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn program(name: &str) -> String {
    root().join(format!("crates/dfi-core/programs/{name}.dfi")).display().to_string()
}

fn dfi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfi")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn validator(name: &str) -> jsonschema::JSONSchema {
    let path = root().join(format!("schemas/{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&schema).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn check(name: &str, line: &str) {
    let v: Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"));
    let schema = validator(name);
    let msgs: Vec<String> = match schema.validate(&v) {
        Ok(()) => return,
        Err(errs) => errs.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    panic!("{line} does not match {name}: {}", msgs.join("; "));
}

#[test]
fn typecheck_example2_points_at_exec() {
    let o = dfi(&["typecheck", &program("example2"), "--despite", "Low"]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains(":14:39:") && out.contains("Typ execute"), "{out}");
    let src = std::fs::read_to_string(program("example2")).unwrap();
    assert!(src.lines().nth(13).unwrap()[38..].starts_with("exec setup.exe"));
}

#[test]
fn typecheck_json_verdicts() {
    let o = dfi(&["typecheck", &program("example1"), "--despite", "Low", "--json"]);
    assert_eq!(code(&o), 0);
    check("verdict", stdout(&o).trim());
    let o = dfi(&["typecheck", &program("example2"), "--despite", "Low", "--json"]);
    assert_eq!(code(&o), 1);
    check("verdict", stdout(&o).trim());
}

#[test]
fn fuzz_example1_is_clean() {
    let o = dfi(&["fuzz", &program("example1"), "--despite", "Low", "--monitor", "Low", "--adversaries", "1000", "--depth", "12", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains(", 0 fail"));
}

#[test]
fn fuzz_json_records() {
    let o = dfi(&["fuzz", &program("example2"), "--adversaries", "5", "--json"]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 5);
    for l in out.lines() {
        check("suite-record", l);
    }
}

#[test]
fn run_example2_violates() {
    let o = dfi(&["run", &program("example2"), "--monitor", "Low", "--seed", "5", "--max-steps", "200"]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    let v = out.lines().find(|l| l.starts_with("violation:")).expect("violation line");
    assert!(v.contains("home") && v.ends_with("@Low"), "{v}");
}

#[test]
fn run_json_stream() {
    let o = dfi(&["run", &program("example2"), "--monitor", "Low", "--seed", "5", "--max-steps", "200", "--json"]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    let (last, records) = lines.split_last().unwrap();
    for (i, l) in records.iter().enumerate() {
        check("trace-record", l);
        let v: Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["step"], i);
    }
    check("run-summary", last);
    let s: Value = serde_json::from_str(last).unwrap();
    assert_eq!(s["steps"], records.len());
}

#[test]
fn run_without_monitor_and_optimized_exec() {
    let a = dfi(&["run", &program("example1"), "--seed", "2", "--json"]);
    let b = dfi(&["run", &program("example1"), "--seed", "2", "--json", "--optimized-exec"]);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn explore_reports() {
    let o = dfi(&["explore", &program("attack_write_copy"), "--monitor", "Low", "--depth", "12", "--json"]);
    assert_eq!(code(&o), 1);
    check("explore-report", stdout(&o).trim());
    let o = dfi(&["explore", &program("example1"), "--monitor", "Low"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn oracle_single_file() {
    for (name, agree) in [("example1", true), ("example2", true), ("attack_copy_execute", true)] {
        let o = dfi(&["oracle", &program(name), "--despite", "Low", "--json"]);
        check("oracle-verdict", stdout(&o).trim());
        let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
        assert_eq!(v["agree"], agree, "{name}");
        assert_eq!(code(&o), 0);
    }
    let o = dfi(&["oracle", &program("example1"), "--oracle-budget", "1", "--json"]);
    assert_eq!(code(&o), 2);
    check("error", stdout(&o).trim());
}

#[test]
fn fmt_round_trips() {
    let o = dfi(&["fmt", &program("example2")]);
    assert_eq!(code(&o), 0);
    let dir = std::env::temp_dir().join(format!("dfi-fmt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("f.dfi");
    std::fs::write(&p, stdout(&o)).unwrap();
    let again = dfi(&["fmt", p.to_str().unwrap()]);
    assert_eq!(stdout(&again), stdout(&o));
    let j = dfi(&["fmt", p.to_str().unwrap(), "--json"]);
    check("formatted", stdout(&j).trim());
}

#[test]
fn bench_json() {
    let o = dfi(&["bench", "--json"]);
    assert_eq!(code(&o), 0);
    check("bench-report", stdout(&o).trim());
}

#[test]
fn errors_exit_2() {
    let dir = std::env::temp_dir().join(format!("dfi-err-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.dfi");
    std::fs::write(&bad, "labels A;\ndo let x = in x").unwrap();
    let bad = bad.to_str().unwrap();

    let o = dfi(&["typecheck", bad]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));

    for args in [
        vec!["typecheck", bad, "--json"],
        vec!["run", "/nonexistent.dfi", "--json"],
        vec!["typecheck", &program("example1"), "--despite", "Nope", "--json"],
        vec!["frobnicate", "--json"],
        vec!["run", &program("example1"), "--depth", "3", "--json"],
    ] {
        let o = dfi(&args);
        assert_eq!(code(&o), 2, "{args:?}");
        check("error", stdout(&o).trim());
    }
    assert_eq!(code(&dfi(&[])), 2);
    assert_eq!(code(&dfi(&["--help"])), 0);
}

#[test]
fn schemas_reject_malformed_records() {
    let bad = [
        ("verdict", r#"{"accepted":"yes","type":null,"effect":null,"diagnostics":[]}"#),
        ("trace-record", r#"{"step":0,"thread":0,"rule":"let","plabel":"Top","kind":{"Let":{}}}"#),
        ("suite-record", r#"{"suite":"s","case":"c","seed":1,"result":"maybe"}"#),
        ("error", r#"{"error":"x","code":"oops"}"#),
    ];
    for (name, line) in bad {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(!validator(name).is_valid(&v), "{name} accepted {line}");
    }
}
