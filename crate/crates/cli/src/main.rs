use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use oesem::calculus::{loop_invariant_sem, program_sem, LoopSpec, Reduction, SemOptions, Strategy, Trace};
use oesem::diag::Diagnostic;
use oesem::expr::Value;
use oesem::funcsem::{hanoi_moves_parallel, hanoi_nth_move, hanoi_sequence, Registry};
use oesem::interp::{
    differential_check, fuzz_programs_with, minimize, run, CheckOptions, CheckReport, FuzzOptions, RunOptions,
    Store,
};
use oesem::syntax::{parse, pretty_print, Program};
use serde_json::{json, Value as Json};

const EXIT_DIAGNOSTICS: u8 = 1;
const EXIT_ERROR: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

/// Registry file picked up from the input's directory when `--registry` is absent.
const DEFAULT_REGISTRY: &str = "functions.decl";

#[derive(Parser)]
#[command(name = "oesem", version, about = "Symbolic semantics and interpretation of OE programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 100)]
    samples: usize,
    #[arg(long, global = true, default_value_t = oesem::calculus::DEFAULT_UNROLL_CAP)]
    unroll_cap: usize,
    #[arg(long, global = true, default_value_t = oesem::semantics::DEFAULT_BRANCH_BUDGET)]
    branch_budget: usize,
    #[arg(long, global = true, default_value_t = oesem::interp::DEFAULT_LOOP_CAP)]
    loop_cap: usize,
    /// Print each reduction step.
    #[arg(long, global = true)]
    trace: bool,
    /// Function definitions file.
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Fold,
    Tree,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a program to its conditional semantic predicate.
    Sem {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = StrategyArg::Fold)]
        strategy: StrategyArg,
        /// Loop invariant for the final loop, over `x'` and plain names.
        #[arg(long, requires = "termination")]
        invariant: Option<String>,
        /// Termination condition paired with `--invariant`.
        #[arg(long, requires = "invariant")]
        termination: Option<String>,
        /// Values held fixed while sampling the invariant, e.g. `N=6`.
        #[arg(long, value_delimiter = ',')]
        fixed: Vec<String>,
    },
    /// Execute a program from an initial store.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "")]
        state: String,
    },
    /// Compare the reduced semantics against the interpreter on random stores.
    Check { file: PathBuf },
    /// Generate random programs and check each one.
    Fuzz {
        #[arg(long, default_value_t = 100)]
        programs: usize,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        /// Random stores per program.
        #[arg(long, default_value_t = 20)]
        stores: usize,
        /// Include bounded `^N` loops.
        #[arg(long)]
        loops: bool,
    },
    /// Towers of Hanoi moves.
    Hanoi {
        #[arg(long)]
        disks: u32,
        #[arg(long = "move", conflicts_with = "all")]
        nth: Option<u64>,
        /// Compute every move independently from its index.
        #[arg(long)]
        all: bool,
    },
    /// Pretty-print a program.
    Fmt { file: PathBuf },
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

struct Report {
    command: &'static str,
    input: String,
    text: String,
    result: Json,
    diagnostics: Vec<Diagnostic>,
    trace: Trace,
    code: u8,
}

impl Report {
    fn new(command: &'static str, input: impl Into<String>) -> Self {
        Report {
            command,
            input: input.into(),
            text: String::new(),
            result: Json::Null,
            diagnostics: Vec::new(),
            trace: Trace::default(),
            code: 0,
        }
    }

    fn emit(&self, cli: &Cli) {
        match cli.format {
            Format::Json => {
                let out = json!({
                    "command": self.command,
                    "input": self.input,
                    "result": self.result,
                    "diagnostics": self.diagnostics,
                    "trace": self.trace.steps,
                });
                println!("{}", serde_json::to_string_pretty(&out).expect("json output"));
            }
            Format::Text => {
                if cli.trace {
                    for s in &self.trace.steps {
                        println!("{}", s.render());
                    }
                }
                if !self.text.is_empty() {
                    println!("{}", self.text);
                }
                for d in &self.diagnostics {
                    println!("{:?}: {}", d.kind, d.message);
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, input) = describe(&cli.command);
    match execute(&cli) {
        Ok(r) => {
            r.emit(&cli);
            ExitCode::from(r.code)
        }
        Err(Failure(msg)) => {
            match cli.format {
                Format::Json => {
                    let out = json!({ "command": command, "input": input, "error": msg });
                    eprintln!("{out}");
                }
                Format::Text => eprintln!("error: {msg}"),
            }
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn describe(c: &Command) -> (&'static str, String) {
    match c {
        Command::Sem { file, .. } => ("sem", file.display().to_string()),
        Command::Run { file, .. } => ("run", file.display().to_string()),
        Command::Check { file } => ("check", file.display().to_string()),
        Command::Fuzz { .. } => ("fuzz", String::new()),
        Command::Hanoi { disks, .. } => ("hanoi", disks.to_string()),
        Command::Fmt { file } => ("fmt", file.display().to_string()),
    }
}

fn execute(cli: &Cli) -> Result<Report, Failure> {
    match &cli.command {
        Command::Sem {
            file,
            strategy,
            invariant,
            termination,
            fixed,
        } => {
            let p = load(file)?;
            let reg = registry(cli, Some(file))?;
            let mut r = Report::new("sem", file.display().to_string());
            let red = match (invariant, termination) {
                (Some(h), Some(k)) => {
                    let mut spec = LoopSpec::parse(h, k)?;
                    for kv in fixed {
                        let (name, v) = kv
                            .split_once('=')
                            .ok_or_else(|| Failure(format!("expected name=value, got `{kv}`")))?;
                        let v: i64 = v.trim().parse().map_err(|_| Failure(format!("bad value in `{kv}`")))?;
                        spec = spec.with_fixed(name.trim(), Value::Int(v));
                    }
                    Reduction {
                        csp: loop_invariant_sem(&p, &spec, cli.samples, cli.seed)?,
                        trace: Trace::default(),
                    }
                }
                _ => {
                    let mut opts = sem_options(cli, reg.as_ref());
                    opts.strategy = match strategy {
                        StrategyArg::Fold => Strategy::LeftFold,
                        StrategyArg::Tree => Strategy::PairwiseTree,
                    };
                    program_sem(&p, &opts)?
                }
            };
            r.text = red.csp.render();
            r.result = json!({ "branches": red.csp.to_json()["branches"] });
            r.diagnostics = red.csp.diagnostics();
            r.trace = red.trace;
            r.code = if r.diagnostics.is_empty() { 0 } else { EXIT_DIAGNOSTICS };
            Ok(r)
        }
        Command::Run { file, state } => {
            let p = load(file)?;
            let reg = registry(cli, Some(file))?;
            let s0: Store = state.parse()?;
            let opts = RunOptions {
                loop_cap: cli.loop_cap,
                registry: reg.as_ref(),
            };
            let res = run(&p, &s0, &opts)?;
            let mut r = Report::new("run", file.display().to_string());
            r.text = res.final_store.to_string();
            r.result = json!({ "store": res.final_store, "iterations": res.iterations });
            r.code = if res.diagnostics.is_empty() { 0 } else { EXIT_DIAGNOSTICS };
            r.diagnostics = res.diagnostics;
            Ok(r)
        }
        Command::Check { file } => {
            let p = load(file)?;
            let reg = registry(cli, Some(file))?;
            let opts = check_options(cli, reg.as_ref(), cli.samples);
            let report = differential_check(&p, &opts)?;
            let sem = program_sem(&p, &opts.sem)?;
            let mut r = Report::new("check", file.display().to_string());
            r.diagnostics = sem.csp.diagnostics();
            r.code = check_code(&report, &r.diagnostics);
            r.text = report.render();
            r.result = json!({ "report": report });
            Ok(r)
        }
        Command::Fuzz {
            programs,
            depth,
            stores,
            loops,
        } => {
            let reg = registry(cli, None)?;
            let opts = check_options(cli, reg.as_ref(), *stores);
            let fuzz = FuzzOptions {
                count: *programs,
                depth: *depth,
                seed: cli.seed,
                loops: *loops,
                parallel: true,
            };
            let mut r = Report::new("fuzz", format!("{programs} programs, depth {depth}"));
            let fails = |p: &Program| matches!(differential_check(p, &opts), Ok(rep) if !rep.mismatches.is_empty());
            let mut checked = 0;
            let mut skipped = 0;
            for p in fuzz_programs_with(&fuzz) {
                let report = match differential_check(&p, &opts) {
                    Ok(rep) => rep,
                    // Programs the engine rejects (budget, overlap) are not counterexamples.
                    Err(_) => {
                        skipped += 1;
                        continue;
                    }
                };
                checked += 1;
                if !report.mismatches.is_empty() {
                    let small = minimize(&p, &fails);
                    let reduced = differential_check(&small, &opts)?;
                    r.text = format!(
                        "counterexample after {checked} programs:\n{}\nminimized:\n{}\n{}",
                        pretty_print(&p),
                        pretty_print(&small),
                        reduced.render()
                    );
                    r.result = json!({
                        "report": {
                            "programs": checked,
                            "skipped": skipped,
                            "counterexample": pretty_print(&p),
                            "minimized": pretty_print(&small),
                            "mismatches": reduced.mismatches,
                        }
                    });
                    r.code = EXIT_MISMATCH;
                    return Ok(r);
                }
            }
            r.text = format!("programs: {checked}, rejected: {skipped}, mismatches: 0");
            r.result = json!({ "report": { "programs": checked, "skipped": skipped, "mismatches": [] } });
            Ok(r)
        }
        Command::Hanoi { disks, nth, all } => {
            let mut r = Report::new("hanoi", disks.to_string());
            if let Some(k) = nth {
                let m = hanoi_nth_move(*disks, *k)?;
                r.text = m.to_string();
                r.result = json!({ "move": m, "n": k });
            } else {
                let moves = if *all {
                    hanoi_moves_parallel(*disks, true)?
                } else {
                    hanoi_sequence(*disks)?
                };
                r.text = moves
                    .iter()
                    .enumerate()
                    .map(|(i, m)| format!("{}: {m}", i + 1))
                    .collect::<Vec<_>>()
                    .join("\n");
                r.result = json!({ "moves": moves });
            }
            Ok(r)
        }
        Command::Fmt { file } => {
            let p = load(file)?;
            let mut r = Report::new("fmt", file.display().to_string());
            r.text = pretty_print(&p).trim_end().to_string();
            r.result = json!({ "program": r.text });
            Ok(r)
        }
    }
}

fn check_code(report: &CheckReport, diagnostics: &[Diagnostic]) -> u8 {
    if !report.mismatches.is_empty() {
        EXIT_MISMATCH
    } else if !diagnostics.is_empty() || report.note.is_some() {
        EXIT_DIAGNOSTICS
    } else {
        0
    }
}

fn load(file: &Path) -> Result<Program, Failure> {
    let text = fs::read_to_string(file).map_err(|e| Failure(format!("{}: {e}", file.display())))?;
    Ok(parse(&text)?)
}

fn registry(cli: &Cli, input: Option<&Path>) -> Result<Option<Registry>, Failure> {
    let path = match (&cli.registry, input) {
        (Some(p), _) => p.clone(),
        (None, Some(f)) => {
            let beside = f.parent().unwrap_or(Path::new(".")).join(DEFAULT_REGISTRY);
            if !beside.exists() {
                return Ok(None);
            }
            beside
        }
        (None, None) => return Ok(None),
    };
    let text = fs::read_to_string(&path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    Ok(Some(Registry::load(&text)?))
}

fn sem_options<'a>(cli: &Cli, reg: Option<&'a Registry>) -> SemOptions<'a> {
    SemOptions {
        strategy: Strategy::LeftFold,
        branch_budget: cli.branch_budget,
        unroll_cap: cli.unroll_cap,
        registry: reg,
    }
}

fn check_options<'a>(cli: &Cli, reg: Option<&'a Registry>, samples: usize) -> CheckOptions<'a> {
    CheckOptions {
        samples,
        seed: cli.seed,
        parallel: true,
        loop_cap: cli.loop_cap,
        registry: reg,
        sem: sem_options(cli, reg),
    }
}
