use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("action id {0} is outside 0..=4")]
    InvalidAction(u8),

    #[error("episode already finished at step {0}")]
    EpisodeOver(usize),

    #[error("state cannot complete mission {mission}: target unreachable")]
    Unsolvable { mission: u8 },

    #[error("mixing coefficient {0} is outside [0, 1]")]
    Coefficient(f64),

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("episode {episode}, step {step}: {source}")]
    AtStep {
        episode: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, episode: usize, step: usize) -> Self {
        Error::AtStep {
            episode,
            step,
            source: Box::new(self),
        }
    }
}
