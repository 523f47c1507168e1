use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GrbmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GrbmError {
    /// A caller broke an operation's precondition (shapes, empty inputs, ranges).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure{}: {what}", position(*epoch, *batch))]
    Numeric {
        epoch: Option<usize>,
        batch: Option<usize>,
        what: String,
    },

    /// Requested exact computation is too large to enumerate.
    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("format error in {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("no checkpoint for epoch {epoch}; re-run training with denser checkpointing (checkpoint_every=1)")]
    Resolution { epoch: usize },

    #[error("checkpoint {id}: {reason}")]
    Checkpoint { id: String, reason: String },

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GrbmError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        GrbmError::Contract(msg.into())
    }

    pub(crate) fn numeric(what: impl Into<String>) -> Self {
        GrbmError::Numeric {
            epoch: None,
            batch: None,
            what: what.into(),
        }
    }

    /// Attaches the training position to a numeric failure; other errors pass through.
    pub fn at(self, at_epoch: usize, at_batch: usize) -> Self {
        match self {
            GrbmError::Numeric { what, .. } => GrbmError::Numeric {
                epoch: Some(at_epoch),
                batch: Some(at_batch),
                what,
            },
            other => other,
        }
    }
}

fn position(epoch: Option<usize>, batch: Option<usize>) -> String {
    match (epoch, batch) {
        (Some(e), Some(b)) => format!(" at epoch {e}, batch {b}"),
        (Some(e), None) => format!(" at epoch {e}"),
        _ => String::new(),
    }
}

pub(crate) fn ensure_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(GrbmError::contract(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}
