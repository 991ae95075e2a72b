use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<pnr_core::Error> for CliError {
    fn from(e: pnr_core::Error) -> Self {
        use pnr_core::Error as E;
        let msg = e.to_string();
        match e {
            // Invalid arguments reach the library from configuration values.
            E::Argument(_) => CliError::Config(msg),
            E::Data(_) | E::Io(_) => CliError::Data(msg),
            E::Domain(_) | E::Fit { .. } | E::Degenerate(_) | E::Numerical(_) => {
                CliError::Numerical(msg)
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
