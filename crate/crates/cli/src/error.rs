use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ttpes::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use ttpes::Error as E;
        match self {
            Self::Config(_) | Self::Io(_) => EXIT_CONFIG,
            Self::NotConverged(_) => EXIT_NOT_CONVERGED,
            Self::Core(e) => match e {
                E::NonFinite(_)
                | E::Diverged { .. }
                | E::RankDeficient(_)
                | E::NotBoundedBelow(_)
                | E::ZeroAcceptance(_)
                | E::NonSymmetric(_) => EXIT_NUMERIC,
                E::NotConverged(_) => EXIT_NOT_CONVERGED,
                _ => EXIT_CONFIG,
            },
        }
    }
}
