use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::protocol::{Request, Response};
use super::{ClassLabel, ClassScores, Classifier, Segmenter};
use crate::error::{Error, ModelError, Result};
use crate::volume::{read_svol, write_svol, Volume};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

fn default_timeout_secs() -> f64 {
    DEFAULT_TIMEOUT.as_secs_f64()
}

/// How to launch an out-of-process model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpec {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default)]
    pub working_dir: Option<PathBuf>,
    /// Labels a classifier may emit; empty for segmenters.
    #[serde(default)]
    pub labels: Vec<ClassLabel>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

impl ExternalSpec {
    pub fn new(command: Vec<String>) -> Self {
        ExternalSpec {
            command,
            working_dir: None,
            labels: Vec::new(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<ClassLabel>) -> Self {
        self.labels = labels;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout_secs = timeout.as_secs_f64();
        self
    }

    fn display(&self) -> String {
        self.command.join(" ")
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Session {
    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Client for one model process. Calls are serialized; the process is
/// reused across calls and told to shut down on [`ExternalModel::close`]
/// or drop.
pub struct ExternalModel {
    spec: ExternalSpec,
    session: Mutex<Option<Session>>,
    scratch: tempfile::TempDir,
    counter: AtomicU64,
}

impl ExternalModel {
    pub fn launch(spec: ExternalSpec) -> Result<Self> {
        let (program, args) = spec
            .command
            .split_first()
            .ok_or_else(|| ModelError::Invalid("empty model command".into()))?;
        if !(spec.timeout_secs > 0.0 && spec.timeout_secs.is_finite()) {
            return Err(ModelError::Invalid("timeout must be positive".into()).into());
        }
        let mut cmd = Command::new(program);
        cmd.args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(dir) = &spec.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|source| ModelError::Spawn {
            command: spec.display(),
            source,
        })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let scratch = tempfile::Builder::new().prefix("segroute-model").tempdir()?;
        Ok(ExternalModel {
            spec,
            session: Mutex::new(Some(Session {
                child,
                stdin,
                lines: rx,
            })),
            scratch,
            counter: AtomicU64::new(0),
        })
    }

    pub fn spec(&self) -> &ExternalSpec {
        &self.spec
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.spec.timeout_secs)
    }

    /// Sends one request and waits for its response line.
    pub fn call(&self, request: &Request) -> std::result::Result<Response, ModelError> {
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        let session = guard.as_mut().ok_or(ModelError::Closed)?;
        let mut line = serde_json::to_string(request).map_err(|e| ModelError::Invalid(e.to_string()))?;
        line.push('\n');
        let sent = session
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| session.stdin.flush());
        if let Err(e) = sent {
            session.kill();
            *guard = None;
            return Err(ModelError::Io(e));
        }
        match session.lines.recv_timeout(self.timeout()) {
            Ok(Ok(reply)) => Response::parse(&reply),
            Ok(Err(e)) => Err(ModelError::Io(e)),
            Err(RecvTimeoutError::Timeout) => {
                session.kill();
                *guard = None;
                Err(ModelError::Timeout(self.timeout()))
            }
            Err(RecvTimeoutError::Disconnected) => {
                session.kill();
                *guard = None;
                Err(ModelError::Closed)
            }
        }
    }

    /// Sends `shutdown` and reaps the process. Idempotent.
    pub fn close(&self) -> std::result::Result<(), ModelError> {
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        let Some(mut session) = guard.take() else {
            return Ok(());
        };
        let mut line = serde_json::to_string(&Request::Shutdown).expect("static request");
        line.push('\n');
        let reply = session
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| session.stdin.flush())
            .map_err(ModelError::Io)
            .and_then(|_| match session.lines.recv_timeout(self.timeout()) {
                Ok(Ok(reply)) => Response::parse(&reply).map(|_| ()),
                Ok(Err(e)) => Err(ModelError::Io(e)),
                Err(RecvTimeoutError::Timeout) => Err(ModelError::Timeout(self.timeout())),
                Err(RecvTimeoutError::Disconnected) => Err(ModelError::Closed),
            });
        drop(session.stdin);
        // Give the process a moment to exit on its own before killing it.
        for _ in 0..50 {
            if let Ok(Some(_)) = session.child.try_wait() {
                return reply;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        let _ = session.child.kill();
        let _ = session.child.wait();
        reply
    }

    fn scratch_path(&self, stem: &str) -> PathBuf {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        self.scratch.path().join(format!("{stem}-{n}.svol"))
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        let _ = self.close();
    }
}

impl Classifier for ExternalModel {
    fn labels(&self) -> Vec<ClassLabel> {
        self.spec.labels.clone()
    }

    fn classify(&self, v: &Volume) -> Result<ClassScores> {
        let input = self.scratch_path("classify");
        write_svol(v, &input)?;
        let reply = self.call(&Request::Classify {
            volume: input.clone(),
        });
        let _ = std::fs::remove_file(&input);
        let scores = reply?.scores.ok_or_else(|| ModelError::Protocol {
            line: String::new(),
            reason: "classify response has no scores".into(),
        })?;
        if !self.spec.labels.is_empty() {
            let mut got: Vec<&ClassLabel> = scores.labels().collect();
            let mut want: Vec<&ClassLabel> = self.spec.labels.iter().collect();
            got.sort();
            want.sort();
            if got != want {
                return Err(ModelError::Protocol {
                    line: serde_json::to_string(&scores).unwrap_or_default(),
                    reason: format!("score labels {got:?} differ from declared {want:?}"),
                }
                .into());
            }
        }
        Ok(scores)
    }
}

impl Segmenter for ExternalModel {
    fn segment(&self, v: &Volume) -> Result<Volume> {
        let input = self.scratch_path("segment-in");
        let output = self.scratch_path("segment-out");
        write_svol(v, &input)?;
        let reply = self.call(&Request::Segment {
            volume: input.clone(),
            output: output.clone(),
        });
        let _ = std::fs::remove_file(&input);
        reply?;
        let mask = read_svol(&output);
        let _ = std::fs::remove_file(&output);
        let mask = mask?;
        mask.as_mask()?;
        if mask.dims() != v.dims() {
            return Err(Error::Geometry(format!(
                "model returned a {} mask for a {} volume",
                mask.dims(),
                v.dims()
            )));
        }
        Ok(mask)
    }
}
