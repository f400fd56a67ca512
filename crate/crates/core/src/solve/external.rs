//! External PB solver backend: OPB out, competition answer lines in.
//!
//! The solver command is invoked as a subprocess with the OPB file path
//! appended to its arguments. Expected output: an `s SATISFIABLE` /
//! `s UNSATISFIABLE` status line and, for satisfiable answers, `v` lines
//! listing every variable as `x12` / `-x12` (a leading `+` is tolerated).

use crate::error::{Error, Result};
use std::io::Read;
use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

static FILE_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalAnswer {
    Sat,
    Unsat,
    Unknown,
    Timeout,
}

/// Run the external solver on an OPB document.
///
/// Returns the answer and, for Sat, the assignment indexed by OPB
/// variable (x1 at index 0); variables the solver does not mention default
/// to false.
pub fn solve_external(
    cmd: &str,
    opb_text: &str,
    n_vars: usize,
    timeout: Duration,
) -> Result<(ExternalAnswer, Option<Vec<bool>>)> {
    let mut parts = cmd.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| Error::BackendUnavailable("empty solver command".into()))?;
    let args: Vec<&str> = parts.collect();

    let path = std::env::temp_dir().join(format!(
        "porogen-{}-{}.opb",
        std::process::id(),
        FILE_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::File::create(&path)?.write_all(opb_text.as_bytes())?;

    let spawned = Command::new(program)
        .args(&args)
        .arg(&path)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn();
    let mut child = match spawned {
        Ok(c) => c,
        Err(e) => {
            let _ = std::fs::remove_file(&path);
            return Err(Error::BackendUnavailable(format!("{program}: {e}")));
        }
    };

    // Drain stdout on a helper thread so a chatty solver cannot deadlock
    // against the poll loop.
    let mut stdout = child.stdout.take().expect("stdout piped");
    let reader = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stdout.read_to_string(&mut buf);
        buf
    });

    let deadline = Instant::now() + timeout;
    let timed_out = loop {
        match child.try_wait()? {
            Some(_) => break false,
            None => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    break true;
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        }
    };
    let output = reader.join().unwrap_or_default();
    let _ = std::fs::remove_file(&path);
    if timed_out {
        return Ok((ExternalAnswer::Timeout, None));
    }
    Ok(parse_answer(&output, n_vars))
}

/// Parse PB-competition answer lines.
pub fn parse_answer(output: &str, n_vars: usize) -> (ExternalAnswer, Option<Vec<bool>>) {
    let mut answer = ExternalAnswer::Unknown;
    let mut values = vec![false; n_vars];
    let mut saw_values = false;
    for line in output.lines() {
        if let Some(rest) = line.strip_prefix("s ") {
            answer = match rest.trim() {
                "SATISFIABLE" => ExternalAnswer::Sat,
                "UNSATISFIABLE" => ExternalAnswer::Unsat,
                _ => ExternalAnswer::Unknown,
            };
        } else if let Some(rest) = line.strip_prefix("v ") {
            for tok in rest.split_whitespace() {
                let (neg, name) = match tok.strip_prefix('-') {
                    Some(n) => (true, n),
                    None => (false, tok.strip_prefix('+').unwrap_or(tok)),
                };
                if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    if idx >= 1 && idx <= n_vars {
                        values[idx - 1] = !neg;
                        saw_values = true;
                    }
                }
            }
        }
    }
    match answer {
        ExternalAnswer::Sat => {
            let _ = saw_values;
            (ExternalAnswer::Sat, Some(values))
        }
        other => (other, None),
    }
}
