use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Model(#[from] hvsim_core::Error),
    /// A descriptor or table file that parses but does not describe a valid model.
    #[error("invalid model description: {0}")]
    Descriptor(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("toml: {0}")]
    TomlParse(#[from] toml::de::Error),
    #[error("toml: {0}")]
    TomlWrite(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> HarnessError {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration errors, 3 for model validation and infeasible transforms.
    pub fn exit_code(&self) -> i32 {
        use hvsim_core::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::TomlParse(_) | HarnessError::Io { .. } => 2,
            HarnessError::Model(e) => match e {
                E::UnknownZooEntry(_)
                | E::InvalidTolerance(_)
                | E::InvalidSchedule(_)
                | E::ZeroTrials
                | E::UnsupportedSize(_) => 2,
                _ => 3,
            },
            HarnessError::Descriptor(_) | HarnessError::Csv(_) => 3,
            HarnessError::TomlWrite(_) => 1,
        }
    }
}
