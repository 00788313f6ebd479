//! Core domain types of the linear model and the estimation pipeline.
//!
//! A phenotype vector `y` and a column-standardized design `X` form a
//! [`DataSet`]; penalized fits are [`FitResult`]s; the residual-based variance
//! estimates live in [`TauEstimates`]; the selected ensemble and the final
//! clipped heritability are [`EnsembleChoice`] and [`HeritabilityEstimate`].
//! All types are immutable after construction and safe to share across
//! parallel workers.

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::error::{HedeError, Result};

/// Response vector plus design matrix with dimension metadata.
#[derive(Clone, Debug)]
pub struct DataSet {
    y: Array1<f64>,
    x: Array2<f64>,
    n: usize,
    p: usize,
    delta: f64,
}

impl DataSet {
    /// Bundle a response and a design. Requires `n >= 2`, `p >= 1` and
    /// matching shapes; does not itself standardize columns.
    pub fn new(y: Array1<f64>, x: Array2<f64>) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if n < 2 {
            return Err(HedeError::TooFewSamples(n));
        }
        if p < 1 {
            return Err(HedeError::DimensionMismatch("design has zero columns".into()));
        }
        if y.len() != n {
            return Err(HedeError::DimensionMismatch(format!(
                "y has {} entries but X has {} rows",
                y.len(),
                n
            )));
        }
        let delta = p as f64 / n as f64;
        Ok(DataSet { y, x, n, p, delta })
    }

    /// Normalize a raw genotype count matrix and attach the response.
    pub fn from_genotypes(y: Array1<f64>, g: &Array2<f64>) -> Result<Self> {
        Self::new(y, normalize_genotypes(g)?)
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// The aspect ratio p/n.
    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Ground truth attached to a simulated data set.
#[derive(Clone, Debug, Serialize)]
pub struct GroundTruth {
    /// True coefficient vector.
    pub beta: Vec<f64>,
    /// Noise variance used to generate the response.
    pub sigma2: f64,
    /// Population heritability beta' Sigma beta / (beta' Sigma beta + sigma2),
    /// with Sigma = identity when no covariance model is attached.
    pub h2_true: f64,
    /// Realized fixed-effects heritability computed with the empirical design
    /// covariance; filled once a design has been drawn.
    pub h2_realized: Option<f64>,
    /// Optional population covariance (dense); omitted from serialized output.
    #[serde(skip)]
    pub sigma: Option<Array2<f64>>,
}

impl GroundTruth {
    /// beta' Sigma beta with Sigma = identity when absent.
    pub fn genetic_variance(&self) -> f64 {
        match &self.sigma {
            None => self.beta.iter().map(|b| b * b).sum(),
            Some(sig) => {
                let b = Array1::from_vec(self.beta.clone());
                b.dot(&sig.dot(&b))
            }
        }
    }
}

/// Which penalty produced a fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PenaltyKind {
    L1,
    L2,
}

/// A penalized solution for one tuning parameter, with its degrees of freedom
/// and residuals; `beta_debiased` is filled by the debiasing step.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub lambda: f64,
    pub penalty_kind: PenaltyKind,
    pub beta_hat: Array1<f64>,
    pub beta_debiased: Option<Array1<f64>>,
    /// Support size for L1 (exact count of nonzeros), ridge trace for L2.
    pub df_hat: f64,
    pub residual: Array1<f64>,
}

impl FitResult {
    /// df/n, the quantity the grid filter thresholds.
    pub fn df_fraction(&self, n: usize) -> f64 {
        self.df_hat / n as f64
    }
}

/// The (tau_L^2, tau_R^2, tau_LR) triple estimated from one pair of fits.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TauEstimates {
    pub tau_l2: f64,
    pub tau_r2: f64,
    pub tau_lr: f64,
}

/// The ensemble selected by grid minimization.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleChoice {
    /// Ensembling weight on the debiased lasso, clamped to [0, 1].
    pub alpha_l: f64,
    pub lambda_l: f64,
    pub lambda_r: f64,
    /// Minimized ensemble variance over the grid.
    pub tau_c2_min: f64,
    #[serde(skip)]
    pub beta_c_debiased: Array1<f64>,
}

/// Final clipped heritability estimate together with its ingredients.
#[derive(Clone, Debug, Serialize)]
pub struct HeritabilityEstimate {
    /// clamp(raw_numerator / sample_var_y, 0, 1).
    pub h2: f64,
    /// ||beta_C^d||^2 - p * tau_C_min^2, before clamping.
    pub raw_numerator: f64,
    pub sample_var_y: f64,
    pub choice: EnsembleChoice,
}

/// Standardize a genotype count matrix.
///
/// Centers column j by twice the sample allele frequency
/// `G_bar_j = sum_i G_ij / (2n)` (which is exactly the column mean of the
/// counts), scales by the binomial standard deviation
/// `sqrt(2 G_bar_j (1 - G_bar_j))`, then rescales to unit column variance
/// (1/n convention) so downstream estimators see exactly standardized
/// columns. Entries must lie in {0, 1, 2}; a monomorphic column is an error.
pub fn normalize_genotypes(g: &Array2<f64>) -> Result<Array2<f64>> {
    let n = g.nrows();
    if n < 2 {
        return Err(HedeError::TooFewSamples(n));
    }
    for (idx, v) in g.iter().enumerate() {
        if *v != 0.0 && *v != 1.0 && *v != 2.0 {
            let (i, j) = (idx / g.ncols(), idx % g.ncols());
            return Err(HedeError::BadParameter(format!(
                "genotype entry ({i}, {j}) = {v} is not in {{0, 1, 2}}"
            )));
        }
    }
    let mut x = g.clone();
    for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
        let sum: f64 = col.iter().sum();
        let freq = sum / (2.0 * n as f64);
        let center = 2.0 * freq;
        let scale = (2.0 * freq * (1.0 - freq)).sqrt();
        if scale == 0.0 {
            return Err(HedeError::ConstantColumn(j));
        }
        col.mapv_inplace(|v| (v - center) / scale);
        // binomial variance is not the sample variance; rescale so each
        // column has exactly unit variance
        let var: f64 = col.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if var == 0.0 {
            return Err(HedeError::ConstantColumn(j));
        }
        let sd = var.sqrt();
        col.mapv_inplace(|v| v / sd);
    }
    Ok(x)
}

/// Unbiased sample variance with the n-1 denominator.
pub fn sample_variance(y: &Array1<f64>) -> Result<f64> {
    let n = y.len();
    if n < 2 {
        return Err(HedeError::TooFewSamples(n));
    }
    let mean = y.sum() / n as f64;
    Ok(y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
}

/// Population-convention column standardization (mean 0, 1/n variance 1),
/// used for non-genotype designs and after whitening.
pub fn standardize_columns(x: &mut Array2<f64>) -> Result<()> {
    let n = x.nrows();
    if n < 2 {
        return Err(HedeError::TooFewSamples(n));
    }
    for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        col.mapv_inplace(|v| v - mean);
        let var = col.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if var == 0.0 {
            return Err(HedeError::ConstantColumn(j));
        }
        let sd = var.sqrt();
        col.mapv_inplace(|v| v / sd);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};
    use proptest::prelude::*;

    #[test]
    fn two_sample_symmetric_column_normalizes_to_unit() {
        // counts (0, 2): G_bar = 0.5, symmetry forces (-1, 1)
        let g = arr2(&[[0.0], [2.0]]);
        let x = normalize_genotypes(&g).unwrap();
        assert_abs_diff_eq!(x[[0, 0]], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[[1, 0]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_column_is_rejected() {
        let g = arr2(&[[1.0], [1.0], [1.0]]);
        match normalize_genotypes(&g) {
            Err(HedeError::ConstantColumn(0)) => {}
            other => panic!("expected ConstantColumn(0), got {other:?}"),
        }
    }

    #[test]
    fn column_matches_entrywise_recomputation() {
        // independent spreadsheet-style recomputation of the normalization
        // for counts (0, 1, 2, 1)
        let g = arr2(&[[0.0], [1.0], [2.0], [1.0]]);
        let x = normalize_genotypes(&g).unwrap();
        let counts = [0.0, 1.0, 2.0, 1.0];
        let freq: f64 = counts.iter().sum::<f64>() / 8.0;
        assert_abs_diff_eq!(freq, 0.5, epsilon = 1e-15);
        let centered: Vec<f64> = counts.iter().map(|c| c - 2.0 * freq).collect();
        let scale = (2.0 * freq * (1.0 - freq)).sqrt();
        let pre: Vec<f64> = centered.iter().map(|c| c / scale).collect();
        let var = pre.iter().map(|v| v * v).sum::<f64>() / 4.0;
        for i in 0..4 {
            assert_abs_diff_eq!(x[[i, 0]], pre[i] / var.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn normalized_columns_have_zero_mean_unit_variance() {
        let s = crate::rng::Stream::new(11, "g");
        let n = 40;
        let p = 7;
        let mut g = Array2::<f64>::zeros((n, p));
        for j in 0..p {
            let mut col = s.child(j as u64);
            for i in 0..n {
                g[[i, j]] = col.next_genotype(0.3) as f64;
            }
        }
        let x = normalize_genotypes(&g).unwrap();
        for col in x.axis_iter(Axis(1)) {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| v * v).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 1e-10, "mean {mean}");
            assert!((var - 1.0).abs() <= 1e-8, "var {var}");
        }
    }

    #[test]
    fn sample_variance_basics() {
        assert_abs_diff_eq!(sample_variance(&arr1(&[1.0, 1.0, 1.0])).unwrap(), 0.0);
        assert_abs_diff_eq!(sample_variance(&arr1(&[0.0, 2.0])).unwrap(), 2.0);
        assert!(matches!(
            sample_variance(&arr1(&[1.0])),
            Err(HedeError::TooFewSamples(1))
        ));
    }

    #[test]
    fn sample_variance_of_standard_normal_draw_is_in_chi_square_band() {
        // For n=100, (n-1) S^2 ~ chi^2_99; P(S^2 in (0.5, 1.7)) > 0.999
        // (chi-square quantiles: P(chi2_99 < 49.5) ~ 2.6e-6,
        //  P(chi2_99 > 168.3) ~ 2.7e-5).
        let mut s = crate::rng::Stream::new(2024, "chi");
        let y = Array1::from_iter((0..100).map(|_| s.next_normal()));
        let v = sample_variance(&y).unwrap();
        assert!(v > 0.5 && v < 1.7, "sample variance {v} out of band");
    }

    #[test]
    fn dataset_validates_shapes() {
        let y = arr1(&[1.0, 2.0]);
        let x = arr2(&[[1.0], [2.0], [3.0]]);
        assert!(matches!(
            DataSet::new(y, x),
            Err(HedeError::DimensionMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn sample_variance_is_translation_invariant(
            ys in proptest::collection::vec(-50.0f64..50.0, 2..40),
            c in -10.0f64..10.0,
        ) {
            let y = Array1::from_vec(ys);
            let shifted = &y + c;
            let v0 = sample_variance(&y).unwrap();
            let v1 = sample_variance(&shifted).unwrap();
            // 1e-12 relative, with the usual cancellation allowance ~ eps*c^2
            prop_assert!((v0 - v1).abs() <= 1e-12 * (1.0 + v0 + c * c),
                "v0={v0} v1={v1}");
        }
    }
}
