//! Reference model server for the prediction protocol: replies with row sums.
//!
//! Usage: `echo-sum-adapter [--n-features P] [--short] [--die-after N] [--silent] [--bad-id]`
//!
//! The fault flags exist to exercise client error handling: `--short` drops the
//! last prediction of every reply, `--die-after N` exits without answering the
//! (N+1)-th predict request, `--silent` never answers, and `--bad-id` echoes
//! the wrong id.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

#[derive(Default)]
struct Faults {
    short: bool,
    die_after: Option<usize>,
    silent: bool,
    bad_id: bool,
}

fn main() -> ExitCode {
    let mut n_features = 2usize;
    let mut faults = Faults::default();
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        let mut value = |name: &str| {
            args.next()
                .and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| format!("{name} needs a non-negative integer"))
        };
        let parsed = match arg.as_str() {
            "--n-features" => value("--n-features").map(|v| n_features = v),
            "--die-after" => value("--die-after").map(|v| faults.die_after = Some(v)),
            "--short" => {
                faults.short = true;
                Ok(())
            }
            "--silent" => {
                faults.silent = true;
                Ok(())
            }
            "--bad-id" => {
                faults.bad_id = true;
                Ok(())
            }
            other => Err(format!("unknown argument '{other}'")),
        };
        if let Err(msg) = parsed {
            eprintln!("echo-sum-adapter: {msg}");
            return ExitCode::from(2);
        }
    }

    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    let result = if faults.short || faults.silent || faults.bad_id || faults.die_after.is_some() {
        serve_faulty(stdin, stdout, n_features, &faults)
    } else {
        icescope::wire::serve_echo_sum(stdin, stdout, n_features)
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("echo-sum-adapter: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve_faulty(input: impl BufRead, mut out: impl Write, n_features: usize, faults: &Faults) -> io::Result<()> {
    use serde_json::{json, Value};
    let mut served = 0usize;
    for line in input.lines() {
        let line = line?;
        if faults.silent {
            continue;
        }
        let Ok(msg) = serde_json::from_str::<Value>(&line) else {
            writeln!(out, "{}", json!({"op": "error", "id": null, "msg": "bad json"}))?;
            out.flush()?;
            continue;
        };
        let reply = match msg["op"].as_str() {
            Some("hello") => json!({"op": "hello", "n_features": n_features, "name": "echo-sum"}),
            Some("predict") => {
                if faults.die_after == Some(served) {
                    std::process::exit(3);
                }
                served += 1;
                let mut y: Vec<f64> = msg["X"]
                    .as_array()
                    .map(|rows| {
                        rows.iter()
                            .map(|r| r.as_array().map_or(0.0, |r| r.iter().filter_map(Value::as_f64).sum()))
                            .collect()
                    })
                    .unwrap_or_default();
                if faults.short {
                    y.pop();
                }
                let id = msg["id"].as_u64().unwrap_or(0) + u64::from(faults.bad_id) * 1000;
                json!({"op": "predict", "id": id, "y": y})
            }
            _ => json!({"op": "error", "id": msg["id"], "msg": "unknown op"}),
        };
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    Ok(())
}
