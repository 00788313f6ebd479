//! Degrees-of-freedom-corrected debiasing.
//!
//! A penalized fit shrinks coefficients toward zero; adding the rescaled
//! correlation of the design with the residuals,
//! `X'(y - X b) / (n - df)`, removes that bias. The divisor is the
//! df-corrected sample count: `n - ||b||_0` for the lasso and
//! `n - Tr((X'X/n + lambda I)^{-1} X'X/n)` for the ridge, both carried on the
//! incoming [`FitResult`].

use crate::error::{HedeError, Result};
use crate::model::{DataSet, FitResult};

/// Fraction of n below which `n - df` is considered degenerate. The grid
/// filter already caps df/n at 0.5, so this floor only guards pathological
/// inputs.
pub const DF_REMAINDER_FLOOR: f64 = 0.005;

pub(crate) fn df_remainder(n: usize, df: f64) -> Result<f64> {
    let remaining = n as f64 - df;
    if remaining <= 0.0 || remaining < DF_REMAINDER_FLOOR * n as f64 {
        return Err(HedeError::DegenerateDf { remaining, n });
    }
    Ok(remaining)
}

/// Fill `beta_debiased = beta_hat + X' residual / (n - df)`.
pub fn debias_fit(data: &DataSet, fit: &FitResult) -> Result<FitResult> {
    if fit.beta_hat.len() != data.p() || fit.residual.len() != data.n() {
        return Err(HedeError::DimensionMismatch(format!(
            "fit has {} coefficients and {} residuals, data is {}x{}",
            fit.beta_hat.len(),
            fit.residual.len(),
            data.n(),
            data.p()
        )));
    }
    let remaining = df_remainder(data.n(), fit.df_hat)?;
    let correction = data.x().t().dot(&fit.residual) / remaining;
    let mut out = fit.clone();
    out.beta_debiased = Some(&fit.beta_hat + &correction);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DataSet, PenaltyKind};
    use crate::rng::Stream;
    use crate::solvers::{build_ridge_cache, fit_lasso, fit_ridge, LassoConfig};
    use approx::assert_abs_diff_eq;
    use ndarray::{Array1, Array2};

    fn random_data(n: usize, p: usize, seed: u64) -> DataSet {
        let s = Stream::new(seed, "debias-test");
        let mut x = Array2::<f64>::zeros((n, p));
        for j in 0..p {
            let mut c = s.child(j as u64);
            for i in 0..n {
                x[[i, j]] = c.next_normal();
            }
        }
        let mut ys = s.child(u64::MAX);
        let y = Array1::from_iter((0..n).map(|_| ys.next_normal()));
        DataSet::new(y, x).unwrap()
    }

    #[test]
    fn null_fit_debiases_to_marginal_correlations() {
        // with beta = 0 and df = 0 the correction is X'y / n
        let data = random_data(10, 6, 2);
        let huge = data.n() as f64 * 10.0;
        let fit = fit_lasso(&data, huge, &LassoConfig::default(), None).unwrap();
        assert_eq!(fit.df_hat, 0.0);
        let out = debias_fit(&data, &fit).unwrap();
        let expect = data.x().t().dot(data.y()) / data.n() as f64;
        let got = out.beta_debiased.unwrap();
        for j in 0..6 {
            assert_abs_diff_eq!(got[j], expect[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn ridge_debias_matches_straight_line_formula_reevaluation() {
        // second, independent evaluation of the debias formula on an
        // isotropic design where every quantity has a closed form
        let n = 8;
        let mut x = Array2::<f64>::zeros((n, 4));
        for j in 0..4 {
            x[[j, j]] = (n as f64).sqrt();
        }
        let mut s = Stream::new(4, "y");
        let y = Array1::from_iter((0..n).map(|_| s.next_normal()));
        let data = DataSet::new(y.clone(), x.clone()).unwrap();
        let cache = build_ridge_cache(&data).unwrap();
        let lambda = 0.9;
        let fit = fit_ridge(&data, lambda, &cache).unwrap();
        let out = debias_fit(&data, &fit).unwrap();

        // straight-line re-evaluation: b = X'y/(n(1+lambda)); df = 4/(1+lambda);
        // debiased = b + X'(y - Xb)/(n - df)
        let bt = x.t().dot(&y) / (n as f64 * (1.0 + lambda));
        let df = 4.0 / (1.0 + lambda);
        let corr = x.t().dot(&(&y - &x.dot(&bt))) / (n as f64 - df);
        let expect = &bt + &corr;
        let got = out.beta_debiased.unwrap();
        for j in 0..4 {
            assert_abs_diff_eq!(got[j], expect[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn lasso_debias_matches_hand_computed_correction() {
        let data = random_data(8, 4, 11);
        // find a lambda giving exactly 2 active coordinates
        let mut lambda = data
            .x()
            .t()
            .dot(data.y())
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max)
            / (data.n() as f64).sqrt();
        let fit = loop {
            lambda *= 0.93;
            let fit = fit_lasso(&data, lambda, &LassoConfig::default(), None).unwrap();
            assert!(lambda > 1e-8, "never reached 2 active coordinates");
            if fit.df_hat == 2.0 {
                break fit;
            }
        };
        let out = debias_fit(&data, &fit).unwrap();
        let resid = data.y() - &data.x().dot(&fit.beta_hat);
        let correction = data.x().t().dot(&resid) / (data.n() as f64 - 2.0);
        let got = out.beta_debiased.unwrap();
        for j in 0..4 {
            assert_abs_diff_eq!(got[j], fit.beta_hat[j] + correction[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn debiasing_is_exactly_invertible() {
        let data = random_data(30, 20, 5);
        let cache = build_ridge_cache(&data).unwrap();
        let fit = fit_ridge(&data, 0.6, &cache).unwrap();
        let out = debias_fit(&data, &fit).unwrap();
        let remaining = data.n() as f64 - fit.df_hat;
        let lhs = (out.beta_debiased.as_ref().unwrap() - &fit.beta_hat) * remaining;
        let rhs = data.x().t().dot(&fit.residual);
        for j in 0..data.p() {
            let scale = rhs[j].abs().max(1.0);
            assert!(
                (lhs[j] - rhs[j]).abs() <= 1e-10 * scale,
                "coord {j}: {} vs {}",
                lhs[j],
                rhs[j]
            );
        }
    }

    #[test]
    fn ridge_debias_approaches_marginal_correlations_for_huge_lambda() {
        let data = random_data(40, 25, 8);
        let cache = build_ridge_cache(&data).unwrap();
        let fit = fit_ridge(&data, 1e8, &cache).unwrap();
        let out = debias_fit(&data, &fit).unwrap();
        let expect = data.x().t().dot(data.y()) / data.n() as f64;
        let got = out.beta_debiased.unwrap();
        for j in 0..data.p() {
            assert!((got[j] - expect[j]).abs() <= 1e-4, "coord {j}");
        }
    }

    #[test]
    fn degenerate_df_is_rejected() {
        let data = random_data(10, 6, 3);
        let fit = FitResult {
            lambda: 0.1,
            penalty_kind: PenaltyKind::L1,
            beta_hat: Array1::zeros(6),
            beta_debiased: None,
            df_hat: 9.96, // n - df = 0.04, below the floor 0.005 * 10 = 0.05
            residual: data.y().clone(),
        };
        assert!(matches!(
            debias_fit(&data, &fit),
            Err(HedeError::DegenerateDf { .. })
        ));
    }
}
