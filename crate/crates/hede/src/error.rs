//! Error type shared across the crate.

/// Errors produced by estimation, simulation and I/O routines.
#[derive(Debug, thiserror::Error)]
pub enum HedeError {
    /// A genotype column is monomorphic; normalization would divide by zero.
    #[error("column {0} is constant; cannot normalize a monomorphic column")]
    ConstantColumn(usize),

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The iterative solver ran out of iterations. Diagnostics are attached so
    /// the caller can decide whether the partial solution is usable.
    #[error(
        "solver did not converge after {iters} iterations \
         (max parameter change {max_change:.3e}, residual {residual:.3e})"
    )]
    NotConverged {
        iters: usize,
        max_change: f64,
        residual: f64,
    },

    /// n - df is zero or below the safety floor; the tuning parameter must be
    /// filtered out rather than divided by.
    #[error("degenerate degrees of freedom: n - df = {remaining:.3} with n = {n}")]
    DegenerateDf { remaining: f64, n: usize },

    /// No (lambda_L, lambda_R) survived the df/n window.
    #[error(
        "no admissible tuning parameters: lasso df/n spanned [{lasso_lo:.4}, {lasso_hi:.4}], \
         ridge df/n spanned [{ridge_lo:.4}, {ridge_hi:.4}], required window [{t_min}, {t_max}]"
    )]
    EmptyGrid {
        lasso_lo: f64,
        lasso_hi: f64,
        ridge_lo: f64,
        ridge_hi: f64,
        t_min: f64,
        t_max: f64,
    },

    #[error("covariance block {0} is numerically singular")]
    SingularBlock(usize),

    /// A 1-D root bracket contained no sign change.
    #[error("no sign change while bracketing {context} (inputs: {inputs})")]
    NoBracket {
        context: &'static str,
        inputs: String,
    },

    /// A signal draw produced an all-zero coefficient vector.
    #[error("signal draw produced no nonzero coefficients")]
    NoNonzeros,

    #[error("invalid parameter: {0}")]
    BadParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, HedeError>;
