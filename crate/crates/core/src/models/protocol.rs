//! Newline-delimited JSON protocol spoken with model processes.
//!
//! ```text
//! -> {"op":"classify","volume":"/abs/in.svol"}
//! <- {"ok":true,"scores":{"PLD":0.7,"MCC":0.3}}
//! -> {"op":"segment","volume":"/abs/in.svol","output":"/abs/out.svol"}
//! <- {"ok":true}
//! -> {"op":"shutdown"}
//! <- {"ok":true}
//! failures: {"ok":false,"error":"<message>"}
//! ```

use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{ClassScores, Classifier, Segmenter};
use crate::error::{Error, ModelError, Result};
use crate::volume::{read_svol, write_svol};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Classify { volume: PathBuf },
    Segment { volume: PathBuf, output: PathBuf },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ClassScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn ok() -> Self {
        Response {
            ok: true,
            scores: None,
            error: None,
        }
    }

    pub fn scores(scores: ClassScores) -> Self {
        Response {
            ok: true,
            scores: Some(scores),
            error: None,
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Response {
            ok: false,
            scores: None,
            error: Some(message.into()),
        }
    }

    /// Parses one response line. `ok:false` becomes [`ModelError::Remote`].
    pub fn parse(line: &str) -> std::result::Result<Response, ModelError> {
        let resp: Response = serde_json::from_str(line.trim_end()).map_err(|e| ModelError::Protocol {
            line: line.trim_end().to_string(),
            reason: e.to_string(),
        })?;
        if !resp.ok {
            return Err(ModelError::Remote(
                resp.error.unwrap_or_else(|| "unspecified error".into()),
            ));
        }
        Ok(resp)
    }
}

/// In-process models exposed through the protocol.
#[derive(Default)]
pub struct Handler<'a> {
    pub classifier: Option<&'a dyn Classifier>,
    pub segmenter: Option<&'a dyn Segmenter>,
}

impl Handler<'_> {
    fn handle(&self, req: &Request) -> Result<Response> {
        match req {
            Request::Classify { volume } => {
                let c = self
                    .classifier
                    .ok_or_else(|| Error::Validation("this model does not classify".into()))?;
                Ok(Response::scores(c.classify(&read_svol(volume)?)?))
            }
            Request::Segment { volume, output } => {
                let s = self
                    .segmenter
                    .ok_or_else(|| Error::Validation("this model does not segment".into()))?;
                write_svol(&s.segment(&read_svol(volume)?)?, output)?;
                Ok(Response::ok())
            }
            Request::Shutdown => Ok(Response::ok()),
        }
    }
}

/// Serves requests until `shutdown` or end of input. Request failures are
/// answered in-band and never end the loop.
pub fn serve<R: BufRead, W: Write>(handler: &Handler<'_>, input: R, mut output: W) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (resp, stop) = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                let stop = req == Request::Shutdown;
                let resp = handler.handle(&req).unwrap_or_else(|e| Response::failure(e.to_string()));
                (resp, stop)
            }
            Err(e) => (Response::failure(format!("bad request: {e}")), false),
        };
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
        if stop {
            break;
        }
    }
    Ok(())
}
