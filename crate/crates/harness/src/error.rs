use std::path::PathBuf;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("missing input {0}; run `ctrecon simulate` first")]
    MissingInput(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Core(#[from] ctrecon::Error),
}

impl HarnessError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 config, 2 numeric failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        use ctrecon::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::Parse { .. } => 1,
            HarnessError::MissingInput(_) | HarnessError::Io { .. } | HarnessError::Csv { .. } => 3,
            HarnessError::Core(e) => match e {
                E::NonFinite { .. } => 2,
                E::Io { .. } | E::Format { .. } => 3,
                E::Dimension(_) | E::Geometry(_) | E::InvalidArgument(_) => 1,
            },
        }
    }
}
