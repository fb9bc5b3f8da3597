//! Exit-code contract: 0 success, 1 usage or config, 2 runtime divergence,
//! 3 audit failure.

use std::fmt;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_AUDIT: u8 = 3;

/// Bad flags, config fields or inputs. The message names the field.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// An audit ran and at least one check failed; `detail` is the JSON report.
#[derive(Debug)]
pub struct AuditFailed {
    pub detail: String,
}

impl fmt::Display for AuditFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "audit failed: {}", self.detail)
    }
}

impl std::error::Error for AuditFailed {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<AuditFailed>() {
            return EXIT_AUDIT;
        }
        if let Some(core) = cause.downcast_ref::<bpr_core::Error>() {
            return match core {
                bpr_core::Error::RejectedInput(_) | bpr_core::Error::Format(_) | bpr_core::Error::Json(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}
