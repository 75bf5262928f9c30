use std::fmt;

use thiserror::Error;

/// Where a numeric failure happened: owning module plus the observation `x`
/// and action/parameter `a` being evaluated, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericContext {
    pub module: &'static str,
    pub x: Option<u64>,
    pub a: Option<f64>,
}

impl NumericContext {
    pub fn new(module: &'static str) -> Self {
        Self {
            module,
            x: None,
            a: None,
        }
    }

    pub fn at_x(mut self, x: u64) -> Self {
        self.x = Some(x);
        self
    }

    pub fn at_a(mut self, a: f64) -> Self {
        self.a = Some(a);
        self
    }
}

impl fmt::Display for NumericContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "module={}", self.module)?;
        if let Some(x) = self.x {
            write!(f, " x={x}")?;
        }
        if let Some(a) = self.a {
            write!(f, " a={a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent inputs from the caller (mismatched tables, bad config).
    #[error("usage error: {0}")]
    Usage(String),

    /// Iteration caps, cancellation, underflow where a value was required.
    #[error("numeric error ({context}): {detail}")]
    Numeric {
        context: NumericContext,
        detail: String,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn numeric(context: NumericContext, detail: impl Into<String>) -> Self {
        Error::Numeric {
            context,
            detail: detail.into(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. })
    }

    /// Attach `x` to a numeric error that does not carry one yet.
    pub(crate) fn with_x(self, x: u64) -> Self {
        match self {
            Error::Numeric {
                mut context,
                detail,
            } => {
                if context.x.is_none() {
                    context.x = Some(x);
                }
                Error::Numeric { context, detail }
            }
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
