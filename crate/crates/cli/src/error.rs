use std::fmt;

/// Exit status 1: the computation itself failed.
pub const EXIT_COMPUTE: u8 = 1;
/// Exit status 2: bad flags, configuration or input files.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn compute(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_COMPUTE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<zscl_core::Error> for CliError {
    fn from(e: zscl_core::Error) -> Self {
        use zscl_core::Error as E;
        let code = match e {
            E::Divergence { .. } | E::Undefined(_) => EXIT_COMPUTE,
            E::Dimension(_) | E::Usage(_) | E::Parse { .. } | E::Io { .. } | E::NoLiveTraces => {
                EXIT_USAGE
            }
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}
