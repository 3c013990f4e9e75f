//! Small external classifier speaking the NDJSON stdio protocol; used by the
//! adapter tests and handy as a template for wiring in real models.
//!
//! Modes:
//!   mean           softmax([m, -m]) of the series mean
//!   fixed P0 P1..  always reply with the given probabilities
//!   die            exit with an error after reading one request
//!   empty          reply with an empty line
//!   hang           never reply

use std::io::{BufRead, Write};

use serde::Deserialize;

#[derive(Deserialize)]
struct Request {
    id: u64,
    series: Vec<f64>,
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("mean");
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();

    for line in stdin.lock().lines() {
        let line = match line {
            Ok(l) => l,
            Err(_) => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("mock-model: bad request: {e}");
                std::process::exit(2);
            }
        };
        match mode {
            "mean" => {
                let m = req.series.iter().sum::<f64>() / req.series.len().max(1) as f64;
                let e0 = m.exp();
                let e1 = (-m).exp();
                let p0 = e0 / (e0 + e1);
                let p1 = e1 / (e0 + e1);
                let _ = writeln!(
                    stdout,
                    "{{\"id\":{},\"probs\":[{:.16e},{:.16e}]}}",
                    req.id, p0, p1
                );
            }
            "fixed" => {
                let probs: Vec<String> = args[1..]
                    .iter()
                    .map(|a| format!("{:.16e}", a.parse::<f64>().expect("fixed probs")))
                    .collect();
                let _ = writeln!(stdout, "{{\"id\":{},\"probs\":[{}]}}", req.id, probs.join(","));
            }
            "die" => {
                eprintln!("mock-model: giving up on purpose");
                std::process::exit(3);
            }
            "empty" => {
                let _ = writeln!(stdout);
            }
            "hang" => loop {
                std::thread::sleep(std::time::Duration::from_secs(3600));
            },
            other => {
                eprintln!("mock-model: unknown mode {other:?}");
                std::process::exit(2);
            }
        }
        let _ = stdout.flush();
    }
}
