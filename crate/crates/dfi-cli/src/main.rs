//! `dfi`: typecheck, run and explore programs of the integrity calculus.
//!
//! Exit codes: 0 accepted / no violation, 1 rejected / violation found,
//! 2 usage, I/O or parse error, unknown label, or exhausted search budget.

use clap::{Args, Parser, Subcommand};
use dfi_core::algo::typecheck;
use dfi_core::decl::{DeclError, DEFAULT_BUDGET};
use dfi_core::dfi::{MonitorPolicy, Violation};
use dfi_core::harness::{
    bench_scaling, count, oracle_case, oracle_equivalence, prop_strong_dfi, to_json_lines, Outcome, ADVERSARY_SIZE,
};
use dfi_core::labels::Label;
use dfi_core::machine::{explore, load, run, BlockReason, Scheduler, StopReason};
use dfi_core::parser::{parse, print, ParseError, ProgramFile};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const STATE_BUDGET: usize = 1_000_000;
const BENCH_SIZES: [usize; 3] = [1_000, 10_000, 100_000];
const BENCH_LABELS: usize = 4;
const ORACLE_NODES: usize = 9;

#[derive(Parser)]
#[command(name = "dfi", version, about = "Integrity type checker and abstract machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Emit machine-readable JSON records instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Typecheck a program at the top label.
    Typecheck {
        file: PathBuf,
        /// Typecheck despite this label and everything below it.
        #[arg(long)]
        despite: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one seeded interleaving.
    Run {
        file: PathBuf,
        /// Watch trusted objects against flows from this label or lower.
        #[arg(long)]
        monitor: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        max_steps: usize,
        #[arg(long)]
        optimized_exec: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Explore all interleavings up to a depth of visible steps.
    Explore {
        file: PathBuf,
        #[arg(long)]
        monitor: Option<String>,
        #[arg(long, default_value_t = 12)]
        depth: usize,
        #[arg(long)]
        optimized_exec: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Compose the program with random adversaries and explore each composition.
    Fuzz {
        file: PathBuf,
        /// Adversary label.
        #[arg(long, default_value = "Low")]
        despite: String,
        /// Monitor threshold; defaults to the adversary label.
        #[arg(long)]
        monitor: Option<String>,
        #[arg(long, default_value_t = 100)]
        adversaries: usize,
        #[arg(long, default_value_t = 12)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Time the algorithmic checker on synthesized programs of growing size.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the algorithmic checker with bounded proof search, on one
    /// file or on every small program.
    Oracle {
        file: Option<PathBuf>,
        #[arg(long)]
        despite: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        oracle_budget: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Pretty-print a program.
    Fmt {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{source}")]
    Parse { path: String, source: ParseError },
    #[error("unknown label {0}")]
    Label(String),
    #[error("declarative search: {0}")]
    Search(DeclError),
}

#[derive(Serialize)]
struct ErrorRecord {
    error: String,
    code: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    col: Option<usize>,
}

impl CliError {
    fn record(&self) -> ErrorRecord {
        match self {
            CliError::Io { .. } => ErrorRecord { error: self.to_string(), code: "E-IO", line: None, col: None },
            CliError::Parse { source, .. } => ErrorRecord {
                error: self.to_string(),
                code: source.code.as_str(),
                line: Some(source.line),
                col: Some(source.col),
            },
            CliError::Label(_) => ErrorRecord { error: self.to_string(), code: "E-UNKNOWN-LABEL", line: None, col: None },
            CliError::Search(_) => ErrorRecord { error: self.to_string(), code: "E-BUDGET", line: None, col: None },
        }
    }
}

#[derive(Serialize)]
struct RunSummary {
    stop: StopReason,
    steps: usize,
    blocked: Vec<(usize, BlockReason)>,
    violations: Vec<Violation>,
}

#[derive(Serialize)]
struct FuzzSummary {
    adversaries: usize,
    pass: usize,
    bounded_pass: usize,
    fail: usize,
}

#[derive(Serialize)]
struct OracleVerdict {
    algo: bool,
    decl: bool,
    agree: bool,
}

#[derive(Serialize)]
struct Formatted {
    text: String,
}

fn load_file(path: &Path) -> Result<ProgramFile, CliError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: shown.clone(), source })?;
    parse(&text).map_err(|source| CliError::Parse { path: shown, source })
}

fn label(file: &ProgramFile, name: &str) -> Result<Label, CliError> {
    file.order.label(name).map_err(|_| CliError::Label(name.to_string()))
}

fn emit<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn violation_line(v: &Violation) -> String {
    format!(
        "violation: {} [{}] holds {} flowing from {} or lower: {}",
        v.store,
        v.names.join(", "),
        v.instance,
        v.threshold,
        v.witness.join(" <- ")
    )
}

fn code(bad: bool) -> u8 {
    u8::from(bad)
}

fn execute(cmd: Command) -> Result<(u8, bool), (CliError, bool)> {
    match cmd {
        Command::Typecheck { file, despite, common } => {
            let json = common.json;
            let f = load_file(&file).map_err(|e| (e, json))?;
            let c = despite.map(|d| label(&f, &d)).transpose().map_err(|e| (e, json))?;
            let v = typecheck(&f, c);
            if json {
                emit(&v);
            } else if v.accepted {
                println!("accepted: {} ! {}", v.ty.as_deref().unwrap_or("?"), v.effect.as_deref().unwrap_or("-"));
            } else {
                for d in &v.diagnostics {
                    println!("{}:{}:{}: {} ({}): {}", file.display(), d.line, d.col, d.code, d.rule, d.message);
                }
            }
            Ok((code(!v.accepted), json))
        }
        Command::Run { file, monitor, seed, max_steps, optimized_exec, common } => {
            let json = common.json;
            let f = load_file(&file).map_err(|e| (e, json))?;
            let policy = monitor
                .map(|m| label(&f, &m).map(|l| MonitorPolicy::trusted(&f.hypotheses, &f.order, l)))
                .transpose()
                .map_err(|e| (e, json))?;
            let mut cfg = load(&f);
            cfg.optimized = optimized_exec;
            let t = run(&cfg, Scheduler::Seeded(seed), max_steps, policy.as_ref());
            if json {
                for r in &t.records {
                    emit(r);
                }
                emit(&RunSummary {
                    stop: t.stop,
                    steps: t.records.len(),
                    blocked: t.blocked.clone(),
                    violations: t.violations.clone(),
                });
            } else {
                for r in &t.records {
                    println!("{:>4} t{} {:<9} [{}] {:?}", r.step, r.event.thread, r.event.rule, r.event.plabel, r.event.kind);
                }
                for (i, b) in &t.blocked {
                    println!("blocked: thread {i}: {b:?}");
                }
                println!("stopped: {:?} after {} steps", t.stop, t.records.len());
                for v in &t.violations {
                    println!("{}", violation_line(v));
                }
            }
            Ok((code(!t.violations.is_empty()), json))
        }
        Command::Explore { file, monitor, depth, optimized_exec, common } => {
            let json = common.json;
            let f = load_file(&file).map_err(|e| (e, json))?;
            let policy = monitor
                .map(|m| label(&f, &m).map(|l| MonitorPolicy::trusted(&f.hypotheses, &f.order, l)))
                .transpose()
                .map_err(|e| (e, json))?;
            let mut cfg = load(&f);
            cfg.optimized = optimized_exec;
            let r = explore(&cfg, depth, STATE_BUDGET, policy.as_ref(), None);
            if json {
                emit(&r);
            } else {
                println!(
                    "{} states, depth {} reached{}",
                    r.states,
                    r.depth_reached,
                    if r.budget_exhausted { ", state budget exhausted" } else { "" }
                );
                for v in &r.violations {
                    println!("{}", violation_line(v));
                }
            }
            Ok((code(!r.violations.is_empty()), json))
        }
        Command::Fuzz { file, despite, monitor, adversaries, depth, seed, common } => {
            let json = common.json;
            let f = load_file(&file).map_err(|e| (e, json))?;
            let c = label(&f, &despite).map_err(|e| (e, json))?;
            let t = match monitor {
                Some(m) => label(&f, &m).map_err(|e| (e, json))?,
                None => c,
            };
            let policy = MonitorPolicy::trusted(&f.hypotheses, &f.order, t);
            let name = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let records = prop_strong_dfi(&name, &f, c, &policy, adversaries, depth, STATE_BUDGET, seed);
            let fail = count(&records, Outcome::Fail);
            if json {
                print!("{}", to_json_lines(&records));
            } else {
                let s = FuzzSummary {
                    adversaries: records.len(),
                    pass: count(&records, Outcome::Pass),
                    bounded_pass: count(&records, Outcome::BoundedPass),
                    fail,
                };
                println!(
                    "{} adversaries (size <= {ADVERSARY_SIZE}): {} pass, {} bounded pass, {} fail",
                    s.adversaries, s.pass, s.bounded_pass, s.fail
                );
                for r in records.iter().filter(|r| r.result == Outcome::Fail).take(5) {
                    println!("seed {}: {}", r.seed, r.witness.as_deref().unwrap_or(""));
                }
            }
            Ok((code(fail > 0), json))
        }
        Command::Bench { common } => {
            let r = bench_scaling(&BENCH_SIZES, BENCH_LABELS);
            if common.json {
                emit(&r);
            } else {
                for row in &r.rows {
                    println!("{:>8} nodes {:.6} s", row.nodes, row.seconds);
                }
                println!("fitted exponent {:.3} over {} labels", r.exponent, r.labels);
            }
            Ok((0, common.json))
        }
        Command::Oracle { file: Some(file), despite, oracle_budget, common } => {
            let json = common.json;
            let f = load_file(&file).map_err(|e| (e, json))?;
            let order = match despite {
                Some(d) => f.order.compromise(label(&f, &d).map_err(|e| (e, json))?).expect("label from order"),
                None => f.order.clone(),
            };
            let (algo, decl) =
                oracle_case(&order, &f.hypotheses, &f.main, oracle_budget).map_err(|e| (CliError::Search(e), json))?;
            let v = OracleVerdict { algo, decl, agree: algo == decl };
            if json {
                emit(&v);
            } else {
                println!("algorithmic: {algo}, declarative: {decl}{}", if v.agree { "" } else { " (DISAGREE)" });
            }
            Ok((code(!v.agree), json))
        }
        Command::Oracle { file: None, oracle_budget, common, .. } => {
            let r = oracle_equivalence(ORACLE_NODES, oracle_budget, 10);
            if common.json {
                emit(&r);
            } else {
                println!(
                    "{} programs, {} agree, {} accepted, {} budget exhausted",
                    r.programs, r.agree, r.accepted, r.budget_exhausted
                );
                for d in &r.disagreements {
                    println!("{d}");
                }
            }
            Ok((code(r.agree != r.programs || r.budget_exhausted > 0), common.json))
        }
        Command::Fmt { file, common } => {
            let f = load_file(&file).map_err(|e| (e, common.json))?;
            let text = print(&f);
            if common.json {
                emit(&Formatted { text });
            } else {
                print!("{text}");
            }
            Ok((0, common.json))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if std::env::args().any(|a| a == "--json") {
                let msg = e.kind().to_string();
                emit(&ErrorRecord { error: msg, code: "E-USAGE", line: None, col: None });
            } else {
                let _ = e.print();
            }
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok((c, _)) => ExitCode::from(c),
        Err((e, json)) => {
            if json {
                emit(&e.record());
            } else {
                eprintln!("dfi: {e}");
            }
            ExitCode::from(2)
        }
    }
}
