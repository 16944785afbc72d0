use thiserror::Error;

/// Failures of a CLI run, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("unknown table '{0}' (expected T1 to T14)")]
    UnknownTable(String),

    #[error(transparent)]
    Pricing(#[from] basket_gpr::Error),

    #[error("output error: {0}")]
    Io(#[from] std::io::Error),

    #[error("output error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// 1 for rejected inputs, 2 for numerical and output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::UnknownTable(_) => 1,
            CliError::Pricing(e) => {
                if is_input_error(e) {
                    1
                } else {
                    2
                }
            }
            CliError::Io(_) | CliError::Csv(_) => 2,
        }
    }
}

fn is_input_error(e: &basket_gpr::Error) -> bool {
    use basket_gpr::Error as E;
    match e {
        E::InvalidInput(_) | E::WrongPayoff(_) | E::DimensionTooLarge { .. } | E::LeapNotCoprime { .. } => true,
        E::AtDate { source, .. } => is_input_error(source),
        _ => false,
    }
}
