//! Command line: `prove`, `bench` and `diffcheck`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

use nonterm_core::monotonicity::partition_guard;
use nonterm_core::oracle::differential_accelerate_check;
use nonterm_core::processors::accelerate;
use nonterm_core::recurrence::solve_update;
use nonterm_core::strategy::{preprocess_simple_loop, prove, Outcome, ProverConfig, Verdict};
use nonterm_core::{Program, Var};

use crate::frontend::parse;
use crate::solver::{solver_path, Session, WallClock, DEFAULT_SMT_TIMEOUT_MS};

pub const EXIT_NO: i32 = 0;
pub const EXIT_MAYBE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "nonterm", version, about = "Proves non-termination of integer transition systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(clap::Args, Debug, Clone)]
pub struct SolverArgs {
    /// Per-query solver timeout in milliseconds.
    #[arg(long, default_value_t = DEFAULT_SMT_TIMEOUT_MS)]
    pub smt_timeout: u64,
    /// SMT-LIB 2 solver binary; defaults to $NONTERM_SOLVER, then `z3`.
    #[arg(long)]
    pub solver: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProofLevel {
    None,
    Steps,
    Full,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Tries to prove that a KoAT file does not terminate.
    Prove {
        file: PathBuf,
        /// Wall-clock budget in seconds.
        #[arg(long, default_value_t = 60)]
        timeout: u64,
        /// Invariant-inference rounds allowed per derivation.
        #[arg(long, default_value_t = 3)]
        strengthen_budget: u32,
        /// Original steps of the final loop replayed when validating a witness.
        #[arg(long, default_value_t = 1000)]
        validate_steps: usize,
        /// Unused by `prove`; accepted so all subcommands share flags.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = ProofLevel::Steps)]
        proof: ProofLevel,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Runs `prove` on each file (or each `.koat` file below a directory) in
    /// its own process and tabulates the verdicts.
    Bench {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value_t = 60)]
        timeout: u64,
        /// Parallel child processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Differentially tests acceleration on every simple loop of a file.
    Diffcheck {
        file: PathBuf,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{}", e) } else { write!(out, "{}", e) };
            return code;
        }
    };
    match cli.command {
        Cmd::Prove { file, timeout, strengthen_budget, validate_steps, seed: _, proof, solver } => {
            let cfg = ProverConfig { strengthen_budget, validate_steps, ..ProverConfig::default() };
            prove_file(&file, cfg, Duration::from_secs(timeout), proof, &solver, out, err)
        }
        Cmd::Bench { paths, timeout, jobs, solver } => bench(&paths, timeout, jobs, &solver, out, err),
        Cmd::Diffcheck { file, trials, seed, solver } => diffcheck(&file, trials, seed, &solver, out, err),
    }
}

fn load(file: &Path, err: &mut dyn Write) -> Result<Program, i32> {
    let text = std::fs::read_to_string(file).map_err(|e| {
        let _ = writeln!(err, "{}: {}", file.display(), e);
        EXIT_USAGE
    })?;
    parse(&text).map_err(|e| {
        let _ = writeln!(err, "{}:{}", file.display(), e);
        EXIT_USAGE
    })
}

fn open_session(s: &SolverArgs, err: &mut dyn Write) -> Result<Session, i32> {
    Session::spawn(&solver_path(s.solver.as_deref()), s.smt_timeout).map_err(|e| {
        let _ = writeln!(err, "{}", e);
        EXIT_INTERNAL
    })
}

/// Writes the verdict block: `NO`/`MAYBE` on the first line, then witness,
/// model and trace, then the proof log.
pub fn render(outcome: &Outcome, level: ProofLevel, out: &mut dyn Write) -> std::io::Result<()> {
    match &outcome.verdict {
        Verdict::No(proof) => {
            writeln!(out, "NO")?;
            writeln!(out, "witness: {}", proof.witness)?;
            writeln!(out, "model:")?;
            for (v, n) in &proof.model {
                writeln!(out, "  {} = {}", v, n)?;
            }
            writeln!(out, "trace:")?;
            for line in proof.plan.to_string().lines() {
                writeln!(out, "  {}", line)?;
            }
            if level == ProofLevel::Full {
                writeln!(out, "final transition:")?;
                writeln!(out, "  {}", proof.transition)?;
                writeln!(out, "  by {}", proof.transition.origin_label())?;
            }
        }
        Verdict::Maybe(reason) => {
            writeln!(out, "MAYBE")?;
            writeln!(out, "reason: {}", reason)?;
        }
    }
    if level != ProofLevel::None && !outcome.log.is_empty() {
        writeln!(out, "proof:")?;
        for line in &outcome.log {
            writeln!(out, "  {}", line)?;
        }
    }
    Ok(())
}

fn prove_file(
    file: &Path,
    cfg: ProverConfig,
    budget: Duration,
    level: ProofLevel,
    solver: &SolverArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let program = match load(file, err) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let mut session = match open_session(solver, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let outcome = prove(&mut session, &program, cfg, &WallClock::new(budget));
    if render(&outcome, level, out).is_err() {
        return EXIT_INTERNAL;
    }
    if outcome.verdict.is_no() {
        EXIT_NO
    } else {
        EXIT_MAYBE
    }
}

/// `.koat` files below `path`, sorted, or `path` itself if it is a file.
pub fn collect_inputs(path: &Path) -> Vec<PathBuf> {
    if path.is_file() {
        return vec![path.to_path_buf()];
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&dir) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "koat") {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

/// Result of one `bench` child.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub file: PathBuf,
    pub verdict: String,
    pub exit: Option<i32>,
    pub seconds: f64,
}

fn bench_one(exe: &Path, file: &Path, timeout: u64, solver: &SolverArgs) -> BenchRow {
    let t0 = Instant::now();
    let mut cmd = Command::new(exe);
    cmd.arg("prove")
        .arg(file)
        .arg("--timeout")
        .arg(timeout.to_string())
        .arg("--smt-timeout")
        .arg(solver.smt_timeout.to_string())
        .arg("--proof")
        .arg("none");
    if let Some(s) = &solver.solver {
        cmd.arg("--solver").arg(s);
    }
    let (verdict, exit) = match cmd.output() {
        Ok(o) => {
            let stdout = String::from_utf8_lossy(&o.stdout);
            let first = stdout.lines().next().unwrap_or("").trim().to_owned();
            let verdict = match (o.status.code(), first.as_str()) {
                (Some(EXIT_NO), "NO") => "NO".to_owned(),
                (Some(EXIT_MAYBE), "MAYBE") => "MAYBE".to_owned(),
                (Some(EXIT_USAGE), _) => "ERROR(parse)".to_owned(),
                (code, _) => format!("ERROR(exit {:?})", code),
            };
            (verdict, o.status.code())
        }
        Err(e) => (format!("ERROR({})", e), None),
    };
    BenchRow { file: file.to_path_buf(), verdict, exit, seconds: t0.elapsed().as_secs_f64() }
}

fn bench(
    paths: &[PathBuf],
    timeout: u64,
    jobs: usize,
    solver: &SolverArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let files: Vec<PathBuf> = paths.iter().flat_map(|p| collect_inputs(p)).collect();
    if files.is_empty() {
        let _ = writeln!(err, "no input files");
        return EXIT_USAGE;
    }
    let exe = match std::env::current_exe() {
        Ok(e) => e,
        Err(e) => {
            let _ = writeln!(err, "cannot locate own executable: {}", e);
            return EXIT_INTERNAL;
        }
    };
    let jobs = jobs.max(1);
    let mut rows: Vec<Option<BenchRow>> = vec![None; files.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut rows);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= files.len() {
                    break;
                }
                let row = bench_one(&exe, &files[i], timeout, solver);
                results.lock().unwrap()[i] = Some(row);
            });
        }
    });
    let rows: Vec<BenchRow> = rows.into_iter().map(|r| r.expect("every file benchmarked")).collect();
    let count = |v: &str| rows.iter().filter(|r| r.verdict == v).count();
    for r in &rows {
        let _ = writeln!(out, "{}\t{}\t{:.2}s", r.file.display(), r.verdict, r.seconds);
    }
    let errors = rows.len() - count("NO") - count("MAYBE");
    let _ = writeln!(out, "total {}: NO {}, MAYBE {}, errors {}", rows.len(), count("NO"), count("MAYBE"), errors);
    if rows.iter().any(|r| r.verdict.starts_with("ERROR(exit") || r.verdict.starts_with("ERROR(") && r.exit.is_none()) {
        EXIT_INTERNAL
    } else {
        0
    }
}

fn diffcheck(file: &Path, trials: usize, seed: u64, solver: &SolverArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let program = match load(file, err) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let mut s = match open_session(solver, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mut failed = false;
    for t in program.iter().filter(|t| t.is_simple_loop()) {
        let alpha = preprocess_simple_loop(t);
        let part = match partition_guard(&mut s, &alpha) {
            Ok(p) => p,
            Err(e) => {
                let _ = writeln!(err, "{}", e);
                return EXIT_INTERNAL;
            }
        };
        let vs = alpha.vars();
        let k = Var::fresh("k", |v| vs.contains(v));
        let accel = solve_update(&alpha.update, &alpha.args, &k)
            .ok()
            .and_then(|cf| accelerate(&alpha, &part, &cf, &k).ok());
        let Some(accel) = accel else {
            let _ = writeln!(out, "{}: not accelerable", t.id);
            continue;
        };
        match differential_accelerate_check(&mut s, &alpha, &accel, trials, seed) {
            Ok(r) => {
                let _ = writeln!(out, "{}: passed {}, failed {}, skipped {}", t.id, r.passed, r.failed, r.skipped);
                for f in &r.failures {
                    let _ = writeln!(out, "  {}", f);
                }
                failed |= r.failed > 0;
            }
            Err(e) => {
                let _ = writeln!(err, "{}", e);
                return EXIT_INTERNAL;
            }
        }
    }
    if failed {
        EXIT_MAYBE
    } else {
        0
    }
}
