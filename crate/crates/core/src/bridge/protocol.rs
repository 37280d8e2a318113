//! Line-delimited JSON framing: one message per line, tagged by `"type"`.

use serde::{Deserialize, Serialize};

use super::{GenerateRequest, GenerateResponse, Handshake, ScoreRequest, ScoreResponse};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireRequest {
    Handshake { id: u64 },
    Score(ScoreRequest),
    Generate(GenerateRequest),
}

impl WireRequest {
    pub fn id(&self) -> u64 {
        match self {
            WireRequest::Handshake { id } => *id,
            WireRequest::Score(r) => r.id,
            WireRequest::Generate(r) => r.id,
        }
    }

    pub fn set_id(&mut self, new_id: u64) {
        match self {
            WireRequest::Handshake { id } => *id = new_id,
            WireRequest::Score(r) => r.id = new_id,
            WireRequest::Generate(r) => r.id = new_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Protocol,
    Transport,
    InvalidInput,
    Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireResponse {
    Handshake {
        id: u64,
        #[serde(flatten)]
        info: Handshake,
    },
    Score(ScoreResponse),
    Generate(GenerateResponse),
    Error {
        #[serde(default)]
        id: Option<u64>,
        kind: ErrorKind,
        message: String,
    },
}

impl WireResponse {
    pub fn id(&self) -> Option<u64> {
        match self {
            WireResponse::Handshake { id, .. } => Some(*id),
            WireResponse::Score(r) => Some(r.id),
            WireResponse::Generate(r) => Some(r.id),
            WireResponse::Error { id, .. } => *id,
        }
    }

    pub fn set_id(&mut self, new_id: u64) {
        match self {
            WireResponse::Handshake { id, .. } => *id = new_id,
            WireResponse::Score(r) => r.id = new_id,
            WireResponse::Generate(r) => r.id = new_id,
            WireResponse::Error { id, .. } => *id = Some(new_id),
        }
    }

    pub fn from_error(id: Option<u64>, err: &Error) -> Self {
        let kind = match err {
            Error::Protocol { .. } => ErrorKind::Protocol,
            Error::Transport { .. } => ErrorKind::Transport,
            Error::InvalidInput(_) => ErrorKind::InvalidInput,
            _ => ErrorKind::Backend,
        };
        let message = match err {
            Error::Protocol { message, .. } | Error::Transport { message, .. } => message.clone(),
            Error::InvalidInput(m) => m.clone(),
            other => other.to_string(),
        };
        WireResponse::Error { id, kind, message }
    }

    /// Converts an error message back into the engine's error type.
    pub fn into_error(id: Option<u64>, kind: ErrorKind, message: String) -> Error {
        match kind {
            ErrorKind::Protocol => Error::protocol(id, message),
            ErrorKind::InvalidInput => Error::InvalidInput(message),
            ErrorKind::Transport | ErrorKind::Backend => Error::transport(id, message),
        }
    }
}

pub fn encode<T: Serialize>(msg: &T) -> Result<String> {
    let mut line = serde_json::to_string(msg)?;
    line.push('\n');
    Ok(line)
}

pub fn decode<'a, T: Deserialize<'a>>(line: &'a str) -> Result<T> {
    serde_json::from_str(line.trim_end()).map_err(|e| Error::protocol(None, format!("malformed message: {e}")))
}
