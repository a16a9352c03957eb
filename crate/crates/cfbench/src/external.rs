//! Adapter for models running in a separate process.
//!
//! Line protocol over stdin/stdout: the toolkit sends `HELLO cf-bench 1` and
//! waits for `READY`; each request is `dv ds a_prev v_prev` and the reply is
//! a single acceleration; `BYE` ends the session. `dv` is leader speed minus
//! follower speed.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use cfbench_core::models::{CarFollowingModel, ModelError};
use cfbench_core::CarFollowingState;

use crate::config::ExternalSpec;

pub const HELLO: &str = "HELLO cf-bench 1";
pub const READY: &str = "READY";
pub const BYE: &str = "BYE";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(1);
pub const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExternalError {
    #[error("could not start `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("process exited ({status})")]
    Exited { status: String },
    #[error("malformed reply `{line}`")]
    Malformed { line: String },
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("handshake failed: {0}")]
    Handshake(String),
}

impl From<ExternalError> for ModelError {
    fn from(e: ExternalError) -> Self {
        ModelError::Backend(Box::new(e))
    }
}

pub struct ExternalModel {
    name: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    /// Set after the first failure; later requests fail immediately.
    poisoned: Option<ExternalError>,
}

fn describe(status: Option<ExitStatus>) -> String {
    match status {
        Some(s) => s.to_string(),
        None => "stdout closed".into(),
    }
}

impl ExternalModel {
    pub fn spawn(spec: &ExternalSpec) -> Result<Self, ExternalError> {
        let (program, args) = spec.command.split_first().ok_or_else(|| ExternalError::Spawn {
            command: String::new(),
            message: "empty command".into(),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ExternalError::Spawn {
                command: spec.command.join(" "),
                message: e.to_string(),
            })?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut m = Self {
            name: spec.name.clone(),
            child,
            stdin,
            lines: rx,
            timeout: Duration::from_millis(spec.timeout_ms),
            poisoned: None,
        };
        m.send(HELLO).map_err(|e| ExternalError::Handshake(e.to_string()))?;
        match m.receive(HANDSHAKE_TIMEOUT.max(m.timeout)) {
            Ok(line) if line.trim() == READY => Ok(m),
            Ok(line) => Err(ExternalError::Handshake(format!("expected {READY}, got `{line}`"))),
            Err(e) => Err(ExternalError::Handshake(e.to_string())),
        }
    }

    fn exited(&mut self) -> ExternalError {
        // give a closing process a moment to be reaped
        let mut status = None;
        for _ in 0..20 {
            if let Ok(Some(s)) = self.child.try_wait() {
                status = Some(s);
                break;
            }
            thread::sleep(Duration::from_millis(5));
        }
        ExternalError::Exited {
            status: describe(status),
        }
    }

    fn send(&mut self, line: &str) -> Result<(), ExternalError> {
        let ok = match self.stdin.as_mut() {
            Some(w) => writeln!(w, "{line}").and_then(|_| w.flush()).is_ok(),
            None => false,
        };
        if ok {
            Ok(())
        } else {
            Err(self.exited())
        }
    }

    fn receive(&mut self, timeout: Duration) -> Result<String, ExternalError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => Err(self.exited()),
            Err(RecvTimeoutError::Timeout) => Err(ExternalError::Timeout(timeout)),
        }
    }

    fn request(&mut self, s: &CarFollowingState) -> Result<f64, ExternalError> {
        if let Some(e) = &self.poisoned {
            return Err(e.clone());
        }
        let result = self
            .send(&format!("{} {} {} {}", s.dv, s.ds, s.a_prev, s.v_prev))
            .and_then(|_| self.receive(self.timeout))
            .and_then(|line| {
                line.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or(ExternalError::Malformed { line })
            });
        if let Err(e) = &result {
            self.poisoned = Some(e.clone());
        }
        result
    }
}

impl CarFollowingModel for ExternalModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&mut self, state: &CarFollowingState) -> Result<f64, ModelError> {
        Ok(self.request(state)?)
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        if let Some(mut w) = self.stdin.take() {
            let _ = writeln!(w, "{BYE}").and_then(|_| w.flush());
        }
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
