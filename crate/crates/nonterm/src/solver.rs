//! SMT-LIB 2 over a pipe to an external solver process.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::{Duration, Instant};

use nonterm_core::smt::{Deadline, Formula, SmtError, SmtSolver, SolverVerdict};
use nonterm_core::smtlib::{paren_depth, parse_model, Script};

/// Solver binary used when neither `--solver` nor `NONTERM_SOLVER` is given.
pub const DEFAULT_SOLVER: &str = "z3";

/// Default per-query timeout in milliseconds.
pub const DEFAULT_SMT_TIMEOUT_MS: u64 = 2000;

/// Resolves the solver binary: explicit path, then `NONTERM_SOLVER`, then `z3`.
pub fn solver_path(explicit: Option<&str>) -> String {
    explicit
        .map(str::to_owned)
        .or_else(|| std::env::var("NONTERM_SOLVER").ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| DEFAULT_SOLVER.to_owned())
}

/// One solver process. Every command is answered (`:print-success`), so a
/// reply can always be matched to the command that caused it.
pub struct Session {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    script: Script,
    transcript: Option<Vec<String>>,
}

impl Session {
    /// Spawns `path -in -smt2` with the given per-query timeout.
    pub fn spawn(path: &str, timeout_ms: u64) -> Result<Session, SmtError> {
        let mut child = Command::new(path)
            .args(["-in", "-smt2"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SmtError::SolverUnavailable(format!("{}: {}", path, e)))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut s = Session { child, stdin, stdout, script: Script::new(), transcript: None };
        s.command("(set-option :print-success true)")?;
        s.command(&format!("(set-option :timeout {})", timeout_ms))?;
        for cmd in Script::prelude() {
            s.command(&cmd)?;
        }
        Ok(s)
    }

    /// Starts recording every command sent from now on.
    pub fn record(&mut self) {
        self.transcript = Some(Vec::new());
    }

    pub fn transcript(&self) -> &[String] {
        self.transcript.as_deref().unwrap_or(&[])
    }

    fn send(&mut self, cmd: &str) -> Result<(), SmtError> {
        if let Some(t) = &mut self.transcript {
            t.push(cmd.to_owned());
        }
        writeln!(self.stdin, "{}", cmd)
            .and_then(|_| self.stdin.flush())
            .map_err(|e| SmtError::SolverUnavailable(format!("write failed: {}", e)))
    }

    /// Reads one complete reply: a bare token or a balanced s-expression.
    fn reply(&mut self) -> Result<String, SmtError> {
        let mut text = String::new();
        loop {
            let mut line = String::new();
            let n = self
                .stdout
                .read_line(&mut line)
                .map_err(|e| SmtError::SolverUnavailable(format!("read failed: {}", e)))?;
            if n == 0 {
                return Err(SmtError::SolverUnavailable("solver exited".into()));
            }
            text.push_str(&line);
            if !text.trim().is_empty() && paren_depth(&text) == 0 {
                let t = text.trim();
                if t.starts_with("(error") {
                    return Err(SmtError::Protocol(t.to_owned()));
                }
                return Ok(t.to_owned());
            }
        }
    }

    fn command(&mut self, cmd: &str) -> Result<(), SmtError> {
        self.send(cmd)?;
        match self.reply()?.as_str() {
            "success" => Ok(()),
            other => Err(SmtError::Protocol(format!("expected success after {}, got {}", cmd, other))),
        }
    }
}

impl SmtSolver for Session {
    fn push(&mut self) -> Result<(), SmtError> {
        let cmd = self.script.push();
        self.command(&cmd)
    }

    fn pop(&mut self) -> Result<(), SmtError> {
        let cmd = self.script.pop()?;
        self.command(&cmd)
    }

    fn assert(&mut self, f: &Formula) -> Result<(), SmtError> {
        for cmd in self.script.assert(f) {
            self.command(&cmd)?;
        }
        Ok(())
    }

    fn check(&mut self) -> Result<SolverVerdict, SmtError> {
        self.send("(check-sat)")?;
        match self.reply()?.as_str() {
            "sat" => {
                self.send(&Script::get_model())?;
                let text = self.reply()?;
                let model = parse_model(&text).map_err(|e| SmtError::Protocol(e.0))?;
                Ok(SolverVerdict::Sat(self.script.complete_model(model)))
            }
            "unsat" => Ok(SolverVerdict::Unsat),
            "unknown" | "timeout" => Ok(SolverVerdict::Unknown),
            other => Err(SmtError::Protocol(format!("unexpected check-sat reply {}", other))),
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "(exit)");
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Wall-clock budget for one run.
#[derive(Clone, Copy, Debug)]
pub struct WallClock {
    end: Instant,
}

impl WallClock {
    pub fn new(budget: Duration) -> Self {
        WallClock { end: Instant::now() + budget }
    }
}

impl Deadline for WallClock {
    fn expired(&self) -> bool {
        Instant::now() >= self.end
    }
}
