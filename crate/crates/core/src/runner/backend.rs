use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bridge::{Backend, LineClient};
use crate::error::{Error, Result};
use crate::mock::{LinearLogitModel, ScriptedModel, TextOnlyModel};

pub const BRIDGE_CMD_ENV: &str = "SHAPCHECK_BRIDGE_CMD";

/// Which backend a run talks to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BackendSpec {
    MockLinear,
    MockScripted,
    MockTextOnly,
    /// External process; `None` reads the command from `SHAPCHECK_BRIDGE_CMD`.
    Bridge(Option<String>),
    Tcp(String),
}

impl std::str::FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock:linear" => Ok(Self::MockLinear),
            "mock:scripted" => Ok(Self::MockScripted),
            "mock:textonly" => Ok(Self::MockTextOnly),
            "bridge" => Ok(Self::Bridge(None)),
            _ => {
                if let Some(cmd) = s.strip_prefix("bridge:") {
                    Ok(Self::Bridge(Some(cmd.to_string())))
                } else if let Some(addr) = s.strip_prefix("tcp:") {
                    Ok(Self::Tcp(addr.to_string()))
                } else {
                    Err(Error::invalid(format!(
                        "unknown backend {s:?}; expected mock:linear, mock:scripted, mock:textonly, bridge[:cmd] or tcp:addr"
                    )))
                }
            }
        }
    }
}

impl std::fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::MockLinear => f.write_str("mock:linear"),
            Self::MockScripted => f.write_str("mock:scripted"),
            Self::MockTextOnly => f.write_str("mock:textonly"),
            Self::Bridge(None) => f.write_str("bridge"),
            Self::Bridge(Some(cmd)) => write!(f, "bridge:{cmd}"),
            Self::Tcp(addr) => write!(f, "tcp:{addr}"),
        }
    }
}

impl From<BackendSpec> for String {
    fn from(s: BackendSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for BackendSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

fn fixture<'a>(spec: &BackendSpec, path: Option<&'a Path>) -> Result<&'a Path> {
    path.ok_or_else(|| Error::BackendLaunch(format!("{spec} needs a fixture file")))
}

fn launch<T>(what: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::BackendLaunch(m) => Error::BackendLaunch(m),
        other => Error::BackendLaunch(format!("{what}: {other}")),
    })
}

/// Builds the backend named by `spec`. Mocks read their model from `fixture`.
pub fn open_backend(spec: &BackendSpec, fixture_path: Option<&Path>) -> Result<Box<dyn Backend>> {
    Ok(match spec {
        BackendSpec::MockLinear => {
            let path = fixture(spec, fixture_path)?;
            Box::new(launch("linear fixture", LinearLogitModel::from_json_file(path))?)
        }
        BackendSpec::MockTextOnly => {
            let path = fixture(spec, fixture_path)?;
            let linear = launch("linear fixture", LinearLogitModel::from_json_file(path))?;
            Box::new(TextOnlyModel::from_linear(linear))
        }
        BackendSpec::MockScripted => {
            let path = fixture(spec, fixture_path)?;
            Box::new(launch("scripted fixture", ScriptedModel::from_json_file(path))?)
        }
        BackendSpec::Bridge(cmd) => {
            let cmd = match cmd {
                Some(c) => c.clone(),
                None => std::env::var(BRIDGE_CMD_ENV)
                    .map_err(|_| Error::BackendLaunch(format!("{BRIDGE_CMD_ENV} is not set")))?,
            };
            Box::new(LineClient::spawn(&cmd)?)
        }
        BackendSpec::Tcp(addr) => Box::new(launch("tcp connect", LineClient::connect_tcp(addr))?),
    })
}
