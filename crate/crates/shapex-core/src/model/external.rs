//! Adapter for an external classifier process.
//!
//! The child speaks newline-delimited JSON on its standard streams: one
//! request `{"id":k,"series":[...]}` per line, one response
//! `{"id":k,"probs":[...]}` per line. Calls are serialized per handle; the
//! child's stderr is captured for error reports.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde::Deserialize;

use super::{Classifier, ClassifierKind};
use crate::error::{Error, Result};
use crate::jsonfmt::fmt_f64;

#[derive(Deserialize)]
struct Response {
    id: u64,
    probs: Vec<f64>,
}

struct Io {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// Handle to an external classifier process.
pub struct ExternalModel {
    command: String,
    io: Mutex<Io>,
    stderr: Arc<Mutex<String>>,
    num_classes: OnceLock<usize>,
    timeout: Duration,
}

impl ExternalModel {
    /// Spawn `command` through `/bin/sh -c` with the default 30 s timeout.
    pub fn spawn(command: &str) -> Result<Self> {
        Self::spawn_with_timeout(command, Duration::from_secs(30))
    }

    pub fn spawn_with_timeout(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("/bin/sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Adapter {
                msg: format!("failed to spawn {:?}: {}", command, e),
                stderr: String::new(),
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr_pipe = child.stderr.take().expect("piped stderr");

        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let stderr = Arc::new(Mutex::new(String::new()));
        let stderr_buf = Arc::clone(&stderr);
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stderr_pipe);
            let mut buf = String::new();
            if reader.read_to_string(&mut buf).is_ok() {
                *stderr_buf.lock().unwrap() = buf;
            }
        });

        Ok(Self {
            command: command.to_string(),
            io: Mutex::new(Io {
                child,
                stdin,
                lines: rx,
                next_id: 0,
            }),
            stderr,
            num_classes: OnceLock::new(),
            timeout,
        })
    }

    fn captured_stderr(&self) -> String {
        self.stderr.lock().unwrap().clone()
    }

    fn round_trip(&self, io: &mut Io, x: &[f64]) -> Result<Vec<f64>> {
        let id = io.next_id;
        io.next_id += 1;
        // Floats go out with 17 significant digits so the child sees the
        // exact values.
        let series: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
        let line = format!("{{\"id\":{},\"series\":[{}]}}\n", id, series.join(","));
        io.stdin
            .write_all(line.as_bytes())
            .and_then(|_| io.stdin.flush())
            .map_err(|e| Error::Adapter {
                msg: format!("write to child failed: {}", e),
                stderr: self.captured_stderr(),
            })?;

        let reply = match io.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                return Err(Error::Adapter {
                    msg: format!("read from child failed: {}", e),
                    stderr: self.captured_stderr(),
                })
            }
            Err(RecvTimeoutError::Timeout) => return Err(Error::AdapterTimeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                // Give the stderr thread a moment to finish capturing.
                let status = io.child.wait().ok();
                std::thread::sleep(Duration::from_millis(20));
                return Err(Error::Adapter {
                    msg: format!("child exited ({:?}) before replying", status),
                    stderr: self.captured_stderr(),
                });
            }
        };

        if reply.trim().is_empty() {
            return Err(Error::Protocol("empty reply line".to_string()));
        }
        let resp: Response = serde_json::from_str(&reply)
            .map_err(|e| Error::Protocol(format!("bad reply {:?}: {}", reply, e)))?;
        if resp.id != id {
            return Err(Error::Protocol(format!(
                "reply id {} does not match request id {}",
                resp.id, id
            )));
        }
        if resp.probs.is_empty() {
            return Err(Error::Protocol("reply carries no probabilities".to_string()));
        }
        let sum: f64 = resp.probs.iter().sum();
        if resp.probs.iter().any(|&p| !p.is_finite() || p < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Protocol(format!(
                "reply is not a probability vector: {:?}",
                resp.probs
            )));
        }
        if let Some(&c) = self.num_classes.get() {
            if resp.probs.len() != c {
                return Err(Error::Protocol(format!(
                    "class count changed from {} to {}",
                    c,
                    resp.probs.len()
                )));
            }
        } else {
            let _ = self.num_classes.set(resp.probs.len());
        }
        Ok(resp.probs)
    }
}

impl Classifier for ExternalModel {
    fn kind(&self) -> ClassifierKind {
        ClassifierKind::External
    }

    /// Zero until the first successful prediction fixes the class count.
    fn num_classes(&self) -> usize {
        self.num_classes.get().copied().unwrap_or(0)
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut io = self.io.lock().unwrap();
        self.round_trip(&mut io, x)
    }

    fn predict_proba_batch(&self, xs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let mut io = self.io.lock().unwrap();
        xs.iter().map(|x| self.round_trip(&mut io, x)).collect()
    }

    fn describe(&self) -> String {
        format!("external({:?})", self.command)
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        if let Ok(mut io) = self.io.lock() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}
