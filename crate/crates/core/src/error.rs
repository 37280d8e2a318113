use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid budget: {budget} evaluations cannot cover {features} features (need at least {needed})")]
    InvalidBudget {
        budget: usize,
        features: usize,
        needed: usize,
    },

    #[error("protocol error{}: {message}", fmt_id(.request_id))]
    Protocol {
        request_id: Option<u64>,
        message: String,
    },

    #[error("transport error{}: {message}", fmt_id(.request_id))]
    Transport {
        request_id: Option<u64>,
        message: String,
    },

    #[error("scoring coalition {mask_index} failed: {source}")]
    Coalition {
        mask_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("oracle refused: {0}")]
    OracleRefused(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("backend launch failed: {0}")]
    BackendLaunch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_id(id: &Option<u64>) -> String {
    match id {
        Some(id) => format!(" (request {id})"),
        None => String::new(),
    }
}

impl Error {
    pub fn protocol(request_id: impl Into<Option<u64>>, message: impl Into<String>) -> Self {
        Error::Protocol {
            request_id: request_id.into(),
            message: message.into(),
        }
    }

    pub fn transport(request_id: impl Into<Option<u64>>, message: impl Into<String>) -> Self {
        Error::Transport {
            request_id: request_id.into(),
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BackendLaunch(_) => 2,
            Error::Manifest(_) => 3,
            _ => 1,
        }
    }
}
