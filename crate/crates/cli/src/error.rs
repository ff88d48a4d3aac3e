use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ADIABATIC: u8 = 3;
pub const EXIT_RESOURCE: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error{}:\n  {}", if .0.len() > 1 { "s" } else { "" }, .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{0}")]
    Core(#[from] geodeph_core::Error),

    #[error("adiabaticity violated: {0}")]
    Adiabaticity(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use geodeph_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Adiabaticity(_) => EXIT_ADIABATIC,
            CliError::Core(E::Adiabaticity(_)) => EXIT_ADIABATIC,
            CliError::Core(E::Resource { .. }) => EXIT_RESOURCE,
            CliError::Core(_) => EXIT_CONFIG,
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => EXIT_IO,
        }
    }

    /// Messages of a config error, empty for other kinds.
    pub fn messages(&self) -> &[String] {
        match self {
            CliError::Config(m) => m,
            _ => &[],
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
