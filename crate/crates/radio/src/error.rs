use thiserror::Error;

pub type Result<T> = std::result::Result<T, RadioError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible: {reason} (devices {devices:?})")]
    Infeasible { devices: Vec<usize>, reason: String },

    #[error("non-finite value for device {device} in {equation}")]
    NonFinite { device: usize, equation: &'static str },

    #[error("brute-force allocation refused for {devices} devices (at most {max})")]
    TooLarge { devices: usize, max: usize },
}

impl RadioError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        RadioError::Domain(msg.into())
    }
}
