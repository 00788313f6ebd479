//! End-to-end heritability estimation: grid construction with df filtering,
//! ensemble weight selection, tuning-parameter selection by minimizing the
//! ensemble variance, and the final clipped estimate
//!
//! ```text
//! h2 = clamp((||beta_C^d||^2 - p * tau_C_min^2) / Var(y), 0, 1).
//! ```
//!
//! Only `m_L + m_R` penalized fits are computed for the `m_L * m_R` candidate
//! pairs: the lasso path is solved once with warm starts and the ridge path
//! reuses one spectral factorization.

use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;

use crate::debias::debias_fit;
use crate::error::{HedeError, Result};
use crate::model::{
    sample_variance, DataSet, EnsembleChoice, FitResult, HeritabilityEstimate, TauEstimates,
};
use crate::solvers::{build_ridge_cache, fit_lasso, fit_ridge, LassoConfig, RidgePathCache};
use crate::tau::estimate_taus;

/// Grid construction controls. Defaults follow the df/n window
/// `[0.01, 0.5]` with natural-log spacing 0.1.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridConfig {
    pub t_min: f64,
    pub t_max: f64,
    /// Natural-log spacing between consecutive lambda values.
    pub log_step: f64,
    /// Optional explicit (low, high) lambda range for both margins; when
    /// absent the range is auto-detected from the data.
    pub lambda_seed_range: Option<(f64, f64)>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            t_min: 0.01,
            t_max: 0.5,
            log_step: 0.1,
            lambda_seed_range: None,
        }
    }
}

impl GridConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0 < self.t_min && self.t_min < self.t_max && self.t_max < 1.0) {
            return Err(HedeError::BadParameter(format!(
                "df window must satisfy 0 < t_min < t_max < 1, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if !(self.log_step > 0.0) {
            return Err(HedeError::BadParameter(format!(
                "log_step = {} must be > 0",
                self.log_step
            )));
        }
        if let Some((lo, hi)) = self.lambda_seed_range {
            if !(lo > 0.0 && hi >= lo) {
                return Err(HedeError::BadParameter(format!(
                    "lambda seed range ({lo}, {hi}) must be positive and ordered"
                )));
            }
        }
        Ok(())
    }
}

/// Admissible tuning parameters for each margin.
#[derive(Clone, Debug)]
pub struct LambdaGrid {
    pub lambda_l: Vec<f64>,
    pub lambda_r: Vec<f64>,
}

/// Counts and df ranges observed while scanning the grid.
#[derive(Clone, Debug, Serialize)]
pub struct GridDiagnostics {
    pub lasso_retained: usize,
    pub lasso_dropped: usize,
    pub ridge_retained: usize,
    pub ridge_dropped: usize,
    /// df/n span over all scanned lasso fits.
    pub lasso_df_over_n: (f64, f64),
    /// df/n span over all scanned ridge grid points.
    pub ridge_df_over_n: (f64, f64),
    /// df of the selected pair.
    pub df_l_selected: f64,
    pub df_r_selected: f64,
}

/// Fits retained after the per-margin df filter. Each margin is filtered on
/// its own, so any retained lambda_L pairs with any retained lambda_R.
pub(crate) struct GridScan {
    pub lasso_fits: Vec<FitResult>,
    pub ridge_fits: Vec<FitResult>,
    pub lasso_dropped: usize,
    pub ridge_dropped: usize,
    pub lasso_df_range: (f64, f64),
    pub ridge_df_range: (f64, f64),
}

// Hard caps keeping auto-detected grids finite on adversarial inputs: both
// margins span at most this many natural logs below their upper endpoint.
const MAX_GRID_SPAN_LOGS: f64 = 25.0;

pub(crate) fn scan_grid(
    data: &DataSet,
    cfg: &GridConfig,
    cache: &RidgePathCache,
) -> Result<GridScan> {
    cfg.validate()?;
    let n = data.n();
    let nf = n as f64;

    // ---- lasso margin: walk down from the null threshold with warm starts
    let lasso_lambdas: Vec<f64> = match cfg.lambda_seed_range {
        Some((lo, hi)) => log_grid(hi, lo, cfg.log_step),
        None => {
            let lambda_max = data
                .x()
                .columns()
                .into_iter()
                .map(|c| c.dot(data.y()).abs())
                .fold(0.0f64, f64::max)
                / nf.sqrt();
            if !(lambda_max > 0.0) || !lambda_max.is_finite() {
                return Err(HedeError::EmptyGrid {
                    lasso_lo: 0.0,
                    lasso_hi: 0.0,
                    ridge_lo: 0.0,
                    ridge_hi: 0.0,
                    t_min: cfg.t_min,
                    t_max: cfg.t_max,
                });
            }
            // the null threshold itself has df = 0; start one step below
            let steps = (MAX_GRID_SPAN_LOGS / cfg.log_step).ceil() as usize;
            (1..=steps.max(1))
                .map(|t| lambda_max * (-(t as f64) * cfg.log_step).exp())
                .collect()
        }
    };

    let lasso_cfg = LassoConfig::default();
    let mut lasso_fits = Vec::new();
    let mut lasso_dropped = 0usize;
    let mut lasso_df_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut init: Option<Array1<f64>> = None;
    let df_ceiling = n.min(data.p()) as f64;
    for &lambda in &lasso_lambdas {
        let fit = fit_lasso(data, lambda, &lasso_cfg, init.as_ref())?;
        init = Some(fit.beta_hat.clone());
        let frac = fit.df_hat / nf;
        lasso_df_range.0 = lasso_df_range.0.min(frac);
        lasso_df_range.1 = lasso_df_range.1.max(frac);
        let saturated = fit.df_hat >= df_ceiling;
        if frac > cfg.t_max {
            lasso_dropped += 1;
            if cfg.lambda_seed_range.is_none() {
                break; // support only grows further down the path
            }
        } else if frac >= cfg.t_min {
            lasso_fits.push(fit);
        } else {
            lasso_dropped += 1;
        }
        if saturated && cfg.lambda_seed_range.is_none() {
            break; // support cannot grow past min(n, p)
        }
    }

    // ---- ridge margin: span the df window by bisection on the cached trace
    let ridge_lambdas: Vec<f64> = match cfg.lambda_seed_range {
        Some((lo, hi)) => log_grid(hi, lo, cfg.log_step),
        None => {
            let df_at = |lambda: f64| cache.df_ridge(lambda) / nf;
            match bisect_df(&df_at, cfg.t_min) {
                None => Vec::new(),
                Some(hi) => {
                    let lo = bisect_df(&df_at, cfg.t_max)
                        .unwrap_or(hi * (-MAX_GRID_SPAN_LOGS).exp())
                        .max(hi * (-MAX_GRID_SPAN_LOGS).exp());
                    log_grid(hi, lo, cfg.log_step)
                }
            }
        }
    };

    let mut ridge_kept = Vec::new();
    let mut ridge_dropped = 0usize;
    let mut ridge_df_range = (f64::INFINITY, f64::NEG_INFINITY);
    for &lambda in &ridge_lambdas {
        let frac = cache.df_ridge(lambda) / nf;
        ridge_df_range.0 = ridge_df_range.0.min(frac);
        ridge_df_range.1 = ridge_df_range.1.max(frac);
        if frac >= cfg.t_min && frac <= cfg.t_max {
            ridge_kept.push(lambda);
        } else {
            ridge_dropped += 1;
        }
    }
    let ridge_fits: Vec<FitResult> = ridge_kept
        .par_iter()
        .map(|&lambda| fit_ridge(data, lambda, cache))
        .collect::<Result<_>>()?;

    if lasso_fits.is_empty() || ridge_fits.is_empty() {
        let clean = |r: (f64, f64)| {
            if r.0.is_finite() {
                r
            } else {
                (f64::NAN, f64::NAN)
            }
        };
        let (ll, lh) = clean(lasso_df_range);
        let (rl, rh) = clean(ridge_df_range);
        return Err(HedeError::EmptyGrid {
            lasso_lo: ll,
            lasso_hi: lh,
            ridge_lo: rl,
            ridge_hi: rh,
            t_min: cfg.t_min,
            t_max: cfg.t_max,
        });
    }

    Ok(GridScan {
        lasso_fits,
        ridge_fits,
        lasso_dropped,
        ridge_dropped,
        lasso_df_range,
        ridge_df_range,
    })
}

/// Log-spaced grid from `hi` down to `lo` (inclusive up to rounding).
fn log_grid(hi: f64, lo: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut lambda = hi;
    while lambda >= lo * (1.0 - 1e-12) && out.len() < 4000 {
        out.push(lambda);
        lambda *= (-step).exp();
    }
    out
}

/// Decreasing-df bisection: find lambda with df(lambda) = target, or None if
/// the target is unreachable from above.
fn bisect_df(df_at: &dyn Fn(f64) -> f64, target: f64) -> Option<f64> {
    let (mut lo, mut hi) = (1e-10f64, 1e10f64);
    if df_at(lo) < target {
        return None;
    }
    if df_at(hi) > target {
        return Some(hi);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if df_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo * hi).sqrt())
}

/// Admissible lambda values per margin (the fits themselves are discarded).
pub fn build_grid(data: &DataSet, cfg: &GridConfig, cache: &RidgePathCache) -> Result<LambdaGrid> {
    let scan = scan_grid(data, cfg, cache)?;
    Ok(LambdaGrid {
        lambda_l: scan.lasso_fits.iter().map(|f| f.lambda).collect(),
        lambda_r: scan.ridge_fits.iter().map(|f| f.lambda).collect(),
    })
}

/// Ensemble weight minimizing the ensemble variance,
/// `clamp((tau_R^2 - tau_LR) / (tau_R^2 - 2 tau_LR + tau_L^2), 0, 1)`;
/// a degenerate denominator falls back to the pure ridge (every weight is
/// equivalent there).
pub fn select_alpha(taus: &TauEstimates) -> f64 {
    let denom = taus.tau_r2 - 2.0 * taus.tau_lr + taus.tau_l2;
    if !(denom >= 1e-12) {
        return 0.0;
    }
    ((taus.tau_r2 - taus.tau_lr) / denom).clamp(0.0, 1.0)
}

/// Ensemble variance `alpha^2 tau_L^2 + 2 alpha (1-alpha) tau_LR +
/// (1-alpha)^2 tau_R^2`.
pub fn ensemble_tau(taus: &TauEstimates, alpha: f64) -> f64 {
    let a = alpha;
    let b = 1.0 - alpha;
    a * a * taus.tau_l2 + 2.0 * a * b * taus.tau_lr + b * b * taus.tau_r2
}

struct PairChoice {
    tau_c2: f64,
    alpha: f64,
    lambda_l: f64,
    lambda_r: f64,
    il: usize,
    ir: usize,
}

/// Run the whole pipeline and return the estimate together with grid
/// diagnostics.
pub fn run_hede_detailed(
    data: &DataSet,
    cfg: &GridConfig,
) -> Result<(HeritabilityEstimate, GridDiagnostics)> {
    let cache = build_ridge_cache(data)?;
    let scan = scan_grid(data, cfg, &cache)?;
    let n = data.n();
    let p = data.p();

    // evaluate every admissible pair; each cell is independent, so the
    // parallel map is deterministic regardless of scheduling
    let m_l = scan.lasso_fits.len();
    let m_r = scan.ridge_fits.len();
    let cells: Vec<PairChoice> = (0..m_l * m_r)
        .into_par_iter()
        .map(|idx| {
            let il = idx / m_r;
            let ir = idx % m_r;
            let fit_l = &scan.lasso_fits[il];
            let fit_r = &scan.ridge_fits[ir];
            let taus = estimate_taus(fit_l, fit_r, n)?;
            debug_assert!(taus.satisfies_cauchy_schwarz(1e-10));
            let alpha = select_alpha(&taus);
            Ok(PairChoice {
                tau_c2: ensemble_tau(&taus, alpha),
                alpha,
                lambda_l: fit_l.lambda,
                lambda_r: fit_r.lambda,
                il,
                ir,
            })
        })
        .collect::<Result<_>>()?;

    // ordered reduction; ties broken by smaller lambda_L, then smaller
    // lambda_R, for determinism
    let best = cells
        .into_iter()
        .min_by(|a, b| {
            (a.tau_c2, a.lambda_l, a.lambda_r)
                .partial_cmp(&(b.tau_c2, b.lambda_l, b.lambda_r))
                .expect("tau_C^2 is finite on admissible pairs")
        })
        .expect("grid is non-empty");

    let fit_l = debias_fit(data, &scan.lasso_fits[best.il])?;
    let fit_r = debias_fit(data, &scan.ridge_fits[best.ir])?;
    let bl = fit_l.beta_debiased.as_ref().expect("just debiased");
    let br = fit_r.beta_debiased.as_ref().expect("just debiased");
    let beta_c = bl * best.alpha + br * (1.0 - best.alpha);

    let var_y = sample_variance(data.y())?;
    if !(var_y > 0.0) {
        return Err(HedeError::BadParameter(
            "response has zero sample variance".into(),
        ));
    }
    let raw = beta_c.dot(&beta_c) - p as f64 * best.tau_c2;
    let h2 = (raw / var_y).clamp(0.0, 1.0);

    let estimate = HeritabilityEstimate {
        h2,
        raw_numerator: raw,
        sample_var_y: var_y,
        choice: EnsembleChoice {
            alpha_l: best.alpha,
            lambda_l: best.lambda_l,
            lambda_r: best.lambda_r,
            tau_c2_min: best.tau_c2,
            beta_c_debiased: beta_c,
        },
    };
    let diagnostics = GridDiagnostics {
        lasso_retained: m_l,
        lasso_dropped: scan.lasso_dropped,
        ridge_retained: m_r,
        ridge_dropped: scan.ridge_dropped,
        lasso_df_over_n: scan.lasso_df_range,
        ridge_df_over_n: scan.ridge_df_range,
        df_l_selected: scan.lasso_fits[best.il].df_hat,
        df_r_selected: scan.ridge_fits[best.ir].df_hat,
    };
    Ok((estimate, diagnostics))
}

/// Run the whole pipeline: grid scan, per-pair ensemble variance, selection,
/// debiasing, and the clipped heritability estimate.
pub fn run_hede(data: &DataSet, cfg: &GridConfig) -> Result<HeritabilityEstimate> {
    run_hede_detailed(data, cfg).map(|(est, _)| est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TauEstimates;
    use crate::rng::Stream;
    use approx::assert_abs_diff_eq;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;

    #[test]
    fn select_alpha_formula_arithmetic() {
        let taus = TauEstimates {
            tau_l2: 2.0,
            tau_r2: 1.0,
            tau_lr: 0.5,
        };
        assert_abs_diff_eq!(select_alpha(&taus), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn select_alpha_degenerate_denominator_is_pure_ridge() {
        let taus = TauEstimates {
            tau_l2: 1.5,
            tau_r2: 1.5,
            tau_lr: 1.5,
        };
        assert_eq!(select_alpha(&taus), 0.0);
    }

    #[test]
    fn select_alpha_clamps_and_minimizes_over_dense_grid() {
        let taus = TauEstimates {
            tau_l2: 1.0,
            tau_r2: 4.0,
            tau_lr: 0.0,
        };
        let alpha = select_alpha(&taus);
        assert_abs_diff_eq!(alpha, 0.8, epsilon = 1e-15);
        let at_hat = ensemble_tau(&taus, alpha);
        for k in 0..=1000 {
            let a = k as f64 / 1000.0;
            assert!(at_hat <= ensemble_tau(&taus, a) + 1e-12);
        }
    }

    #[test]
    fn ensemble_tau_endpoints_and_midpoint() {
        let taus = TauEstimates {
            tau_l2: 2.0,
            tau_r2: 1.0,
            tau_lr: 0.5,
        };
        assert_abs_diff_eq!(ensemble_tau(&taus, 1.0), 2.0);
        assert_abs_diff_eq!(ensemble_tau(&taus, 0.0), 1.0);
        assert_abs_diff_eq!(ensemble_tau(&taus, 0.25), 0.875, epsilon = 1e-15);
    }

    fn gaussian_data(n: usize, p: usize, seed: u64) -> DataSet {
        let s = Stream::new(seed, "grid-test");
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
    fn seeded_grid_with_only_null_lambdas_is_empty() {
        let data = gaussian_data(30, 20, 1);
        let cache = build_ridge_cache(&data).unwrap();
        let cfg = GridConfig {
            lambda_seed_range: Some((5e3, 1e4)),
            ..GridConfig::default()
        };
        assert!(matches!(
            build_grid(&data, &cfg, &cache),
            Err(HedeError::EmptyGrid { .. })
        ));
    }

    #[test]
    fn ridge_margin_isotropic_interval_is_exact() {
        // X'X = n I with p = 8, n = 20: df/n = (p/n)/(1+lambda), so the
        // admissible lambda interval is [(p/n)/t_max - 1, (p/n)/t_min - 1]
        let n = 20;
        let p = 8;
        let mut x = Array2::<f64>::zeros((n, p));
        for j in 0..p {
            x[[j, j]] = (n as f64).sqrt();
        }
        let mut s = Stream::new(8, "y");
        let y = Array1::from_iter((0..n).map(|_| s.next_normal()));
        let data = DataSet::new(y, x).unwrap();
        let cache = build_ridge_cache(&data).unwrap();
        let cfg = GridConfig {
            t_min: 0.05,
            t_max: 0.3,
            ..GridConfig::default()
        };
        let grid = build_grid(&data, &cfg, &cache).unwrap();
        let ratio = p as f64 / n as f64; // 0.4
        let lo = ratio / cfg.t_max - 1.0; // 1/3
        let hi = ratio / cfg.t_min - 1.0; // 7
        assert!(!grid.lambda_r.is_empty());
        for &lam in &grid.lambda_r {
            assert!(
                lam >= lo - 1e-9 && lam <= hi + 1e-9,
                "lambda_R {lam} outside [{lo}, {hi}]"
            );
        }
    }

    #[test]
    fn retained_ridge_dfs_verified_exhaustively() {
        let data = gaussian_data(300, 600, 42);
        let cache = build_ridge_cache(&data).unwrap();
        let cfg = GridConfig::default();
        let grid = build_grid(&data, &cfg, &cache).unwrap();
        assert!(!grid.lambda_r.is_empty());
        for &lam in &grid.lambda_r {
            let frac = cache.df_ridge(lam) / 300.0;
            assert!(
                (cfg.t_min..=cfg.t_max).contains(&frac),
                "lambda_R {lam} has df/n {frac}"
            );
        }
        for &lam in &grid.lambda_l {
            let fit = fit_lasso(&data, lam, &LassoConfig::default(), None).unwrap();
            let frac = fit.df_hat / 300.0;
            assert!(
                (cfg.t_min..=cfg.t_max).contains(&frac),
                "lambda_L {lam} has df/n {frac}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn alpha_is_always_in_unit_interval(
            tl2 in 0.0f64..10.0,
            tr2 in 0.0f64..10.0,
            tlr in -10.0f64..10.0,
        ) {
            let taus = TauEstimates { tau_l2: tl2, tau_r2: tr2, tau_lr: tlr };
            let a = select_alpha(&taus);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn clamped_alpha_is_the_grid_minimum_for_valid_taus(
            tl2 in 0.01f64..5.0,
            tr2 in 0.01f64..5.0,
            corr in -0.999f64..0.999,
        ) {
            // build a triple satisfying Cauchy-Schwarz by construction
            let tlr = corr * (tl2 * tr2).sqrt();
            let taus = TauEstimates { tau_l2: tl2, tau_r2: tr2, tau_lr: tlr };
            let a_hat = select_alpha(&taus);
            let at_hat = ensemble_tau(&taus, a_hat);
            for k in 0..=1000 {
                let a = k as f64 / 1000.0;
                prop_assert!(at_hat <= ensemble_tau(&taus, a) + 1e-12,
                    "alpha {a} beats {a_hat}");
            }
        }
    }
}
