use std::fmt;

use wgom::WgomError;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or experiment file. Exit code 2.
    Config(String),
    /// Unreadable or malformed data. Exit code 3.
    Data(String),
    /// The data are well formed but numerically degenerate. Exit code 4.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    /// Classifies an error raised while loading or validating a config.
    pub fn config(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        Failure::Config(format!("{context}: {err}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<WgomError> for Failure {
    fn from(err: WgomError) -> Self {
        if err.is_numerical() {
            Failure::Numerical(err.to_string())
        } else {
            Failure::Data(err.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::Data(err.to_string())
    }
}
