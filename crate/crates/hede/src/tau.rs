//! Variance and covariance estimation for the debiased estimators.
//!
//! From two fits on the same data,
//!
//! ```text
//! tau_L^2  = ||r_L||^2 / (n - df_L)^2
//! tau_R^2  = ||r_R||^2 / (n - df_R)^2
//! tau_LR   = <r_L, r_R> / ((n - df_L)(n - df_R))
//! ```
//!
//! with `r_k = y - X b_k`. The cross denominator is the product of both
//! df-corrected counts, matching the diagonal terms.

use crate::debias::df_remainder;
use crate::error::{HedeError, Result};
use crate::model::{FitResult, TauEstimates};

/// Estimate the (tau_L^2, tau_R^2, tau_LR) triple from a pair of fits.
pub fn estimate_taus(fit_l: &FitResult, fit_r: &FitResult, n: usize) -> Result<TauEstimates> {
    if fit_l.residual.len() != n || fit_r.residual.len() != n {
        return Err(HedeError::DimensionMismatch(format!(
            "residual lengths {} and {} do not match n = {n}",
            fit_l.residual.len(),
            fit_r.residual.len()
        )));
    }
    let rem_l = df_remainder(n, fit_l.df_hat)?;
    let rem_r = df_remainder(n, fit_r.df_hat)?;
    let rss_l = fit_l.residual.dot(&fit_l.residual);
    let rss_r = fit_r.residual.dot(&fit_r.residual);
    let cross = fit_l.residual.dot(&fit_r.residual);
    Ok(TauEstimates {
        tau_l2: rss_l / (rem_l * rem_l),
        tau_r2: rss_r / (rem_r * rem_r),
        tau_lr: cross / (rem_l * rem_r),
    })
}

impl TauEstimates {
    /// Cauchy-Schwarz on the shared residual inner product:
    /// tau_LR^2 <= tau_L^2 tau_R^2 (up to roundoff).
    pub fn satisfies_cauchy_schwarz(&self, slack: f64) -> bool {
        self.tau_lr * self.tau_lr <= self.tau_l2 * self.tau_r2 + slack
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PenaltyKind;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    fn synthetic_fit(residual: Vec<f64>, df: f64) -> FitResult {
        FitResult {
            lambda: 0.5,
            penalty_kind: PenaltyKind::L1,
            beta_hat: Array1::zeros(3),
            beta_debiased: None,
            df_hat: df,
            residual: Array1::from_vec(residual),
        }
    }

    #[test]
    fn identical_fits_attain_cauchy_schwarz_equality() {
        let fit = synthetic_fit(vec![1.0, -2.0, 0.5, 3.0], 1.0);
        let taus = estimate_taus(&fit, &fit, 4).unwrap();
        assert_abs_diff_eq!(taus.tau_lr * taus.tau_lr, taus.tau_l2 * taus.tau_r2, epsilon = 1e-14);
        assert!(taus.satisfies_cauchy_schwarz(1e-10));
    }

    #[test]
    fn zero_residuals_give_zero_taus() {
        let fit = synthetic_fit(vec![0.0; 5], 2.0);
        let taus = estimate_taus(&fit, &fit, 5).unwrap();
        assert_eq!(taus.tau_l2, 0.0);
        assert_eq!(taus.tau_r2, 0.0);
        assert_eq!(taus.tau_lr, 0.0);
    }

    #[test]
    fn diagonal_entries_are_nonnegative() {
        let a = synthetic_fit(vec![0.3, -0.7, 1.1, 0.2, -0.5], 1.0);
        let b = synthetic_fit(vec![-0.4, 0.6, -1.0, 0.1, 0.9], 2.0);
        let taus = estimate_taus(&a, &b, 5).unwrap();
        assert!(taus.tau_l2 >= 0.0 && taus.tau_r2 >= 0.0);
        assert!(taus.satisfies_cauchy_schwarz(1e-10));
    }

    #[test]
    fn degenerate_df_propagates() {
        let a = synthetic_fit(vec![1.0; 5], 5.0);
        let b = synthetic_fit(vec![1.0; 5], 1.0);
        assert!(matches!(
            estimate_taus(&a, &b, 5),
            Err(HedeError::DegenerateDf { .. })
        ));
    }
}
