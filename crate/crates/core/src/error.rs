use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The denominator Clebsch–Gordan factor of a channel weight vanishes, so
    /// the Zeeman channel does not couple.
    #[error("undefined channel weight: {0}")]
    UndefinedWeight(String),

    #[error("no spin-wave channel couples for this level scheme and population")]
    NoCoupling,

    #[error(
        "field point ({:.4e}, {:.4e}, {:.4e}) m lies {distance:.3e} m from a coil wire \
         (quadrature needs at least {min_distance:.3e} m)",
        point[0], point[1], point[2]
    )]
    NearSingularity {
        point: [f64; 3],
        distance: f64,
        min_distance: f64,
    },

    #[error("bracket failure: {0}")]
    BracketFailure(String),

    #[error("{}", config_message(*line, message))]
    Config { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

fn config_message(line: usize, message: &str) -> String {
    if line == 0 {
        format!("config: {message}")
    } else {
        format!("config line {line}: {message}")
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command-line tool: 2 config, 3 numeric
    /// or domain, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config { .. } => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}

pub trait ResultExt<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| Error::Context {
            context: ctx(),
            source: Box::new(e),
        })
    }
}
