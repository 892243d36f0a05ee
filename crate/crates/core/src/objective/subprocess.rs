//! Objective served by a child process over a line-delimited JSON protocol.
//!
//! ```text
//! parent -> child   {"x":[0.2,0.7],"z":0.5}
//! child  -> parent  {"y":1.23}            or  {"y":1.23,"cost":4.0}
//! ```
//!
//! One request is in flight at a time and answers are read in order.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{check_fidelity, EvalError, MultiFidelityObjective, Observation};
use crate::fidelity::CostFunction;
use crate::partition::BoxDomain;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(3600);

#[derive(Serialize)]
struct Request<'a> {
    x: &'a [f64],
    z: f64,
}

#[derive(Deserialize)]
struct Response {
    y: f64,
    cost: Option<f64>,
}

struct Channel {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    broken: bool,
}

impl Channel {
    fn shut_down(&mut self) {
        self.broken = true;
        self.stdin.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct SubprocessObjective {
    command: String,
    domain: BoxDomain,
    cost: CostFunction,
    sigma: f64,
    timeout: Duration,
    channel: Mutex<Channel>,
}

impl SubprocessObjective {
    /// Launches `command` through `sh -c`.
    ///
    /// `sigma` is the noise scale assumed by the search; the child adds its own
    /// noise, if any.
    pub fn spawn(
        command: &str,
        domain: BoxDomain,
        cost: CostFunction,
        sigma: f64,
    ) -> Result<Self, EvalError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            command: command.to_string(),
            domain,
            cost,
            sigma,
            timeout: DEFAULT_TIMEOUT,
            channel: Mutex::new(Channel {
                child,
                stdin,
                lines: rx,
                broken: false,
            }),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn round_trip(&self, channel: &mut Channel, x: &[f64], z: f64) -> Result<Response, EvalError> {
        if channel.broken {
            return Err(EvalError::Protocol("child is no longer usable".into()));
        }
        let mut line = serde_json::to_string(&Request { x, z })
            .map_err(|e| EvalError::Protocol(e.to_string()))?;
        line.push('\n');
        let stdin = channel
            .stdin
            .as_mut()
            .ok_or_else(|| EvalError::Protocol("child stdin closed".into()))?;
        stdin.write_all(line.as_bytes())?;
        stdin.flush()?;
        let reply = match channel.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(e.into()),
            Err(RecvTimeoutError::Timeout) => return Err(EvalError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(EvalError::Protocol("child closed its output".into()))
            }
        };
        let resp: Response = serde_json::from_str(reply.trim())
            .map_err(|e| EvalError::Protocol(format!("malformed response {reply:?}: {e}")))?;
        if !resp.y.is_finite() || resp.cost.is_some_and(|c| !(c >= 0.0 && c.is_finite())) {
            return Err(EvalError::Protocol(format!(
                "invalid values in response {reply:?}"
            )));
        }
        Ok(resp)
    }
}

impl MultiFidelityObjective for SubprocessObjective {
    fn name(&self) -> &str {
        "subprocess"
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn cost_model(&self) -> &CostFunction {
        &self.cost
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn mean(&self, _x: &[f64], _z: f64) -> Option<f64> {
        None
    }

    fn concurrent(&self) -> bool {
        false
    }

    fn evaluate(
        &self,
        x: &[f64],
        z: f64,
        _rng: &mut dyn RngCore,
    ) -> Result<Observation, EvalError> {
        self.domain.check(x)?;
        check_fidelity(z)?;
        let mut channel = self.channel.lock().unwrap_or_else(|e| e.into_inner());
        match self.round_trip(&mut channel, x, z) {
            Ok(resp) => Ok(Observation {
                x: x.to_vec(),
                z,
                y: resp.y,
                cost: resp.cost.unwrap_or_else(|| self.cost.eval(z)),
                seq: 0,
            }),
            Err(e) => {
                channel.shut_down();
                Err(e)
            }
        }
    }
}

impl Drop for SubprocessObjective {
    fn drop(&mut self) {
        let channel = self.channel.get_mut().unwrap_or_else(|e| e.into_inner());
        if !channel.broken {
            channel.shut_down();
        }
    }
}
