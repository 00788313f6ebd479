//! Synthetic data generation: binomial genotype designs, zero-inflated-normal
//! and stratified-mixture signals, optional AR-correlated Gaussian designs.
//!
//! Everything is a pure function of the seed through per-column counter-based
//! substreams ([`crate::rng::Stream`]), so generation order and worker count
//! never change the output.

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HedeError, Result};
use crate::model::{normalize_genotypes, DataSet, GroundTruth};
use crate::rng::Stream;

/// Signal families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalKind {
    /// Each coordinate nonzero with probability kappa, values
    /// N(0, h2 / (p kappa (1 - h2))). Targets population h2 when the noise
    /// variance is 1.
    ZeroInflatedNormal,
    /// Nonzero locations drawn per stratum with alternating low/high
    /// concentrations; values an equal mixture of two symmetric normals with
    /// entrywise variance h2 / K. Targets h2 when the noise variance is
    /// 1 - h2.
    StratifiedMixture,
}

/// Stratification for [`SignalKind::StratifiedMixture`]: contiguous equal
/// column chunks, stratum s using the low concentration when s is even and
/// the high one when odd.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StratConfig {
    pub num_strata: usize,
    pub c_low: f64,
    pub c_high: f64,
}

impl Default for StratConfig {
    fn default() -> Self {
        StratConfig {
            num_strata: 2,
            c_low: 0.05,
            c_high: 0.5,
        }
    }
}

/// Correlated-design mode: rows `z Sigma^{1/2}` with Sigma block-diagonal,
/// AR(rho) within each block.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ArBlockConfig {
    pub rho: f64,
    pub block_size: usize,
}

/// Full simulation configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub h2: f64,
    pub kappa: f64,
    pub maf_range: (f64, f64),
    pub noise_sigma2: f64,
    pub seed: u64,
    pub signal_kind: SignalKind,
    #[serde(default)]
    pub strat: Option<StratConfig>,
    #[serde(default)]
    pub ar_blocks: Option<ArBlockConfig>,
    /// Redraw instead of failing when a signal draw comes out all-zero.
    #[serde(default)]
    pub resample_empty_signal: bool,
}

impl SimConfig {
    /// Sensible defaults for a given shape; tweak fields afterwards.
    pub fn new(n: usize, p: usize, h2: f64, kappa: f64, seed: u64) -> Self {
        SimConfig {
            n,
            p,
            h2,
            kappa,
            maf_range: (0.01, 0.5),
            noise_sigma2: 1.0,
            seed,
            signal_kind: SignalKind::ZeroInflatedNormal,
            strat: None,
            ar_blocks: None,
            resample_empty_signal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 1 {
            return Err(HedeError::BadParameter(format!(
                "need n >= 2 and p >= 1, got n={}, p={}",
                self.n, self.p
            )));
        }
        if !(0.0..1.0).contains(&self.h2) {
            return Err(HedeError::BadParameter(format!(
                "h2 = {} must lie in [0, 1)",
                self.h2
            )));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(HedeError::BadParameter(format!(
                "kappa = {} must lie in (0, 1]",
                self.kappa
            )));
        }
        let (lo, hi) = self.maf_range;
        if !(lo >= 0.005 && hi <= 0.5 && lo <= hi) {
            return Err(HedeError::BadParameter(format!(
                "maf range ({lo}, {hi}) must satisfy 0.005 <= low <= high <= 0.5"
            )));
        }
        if !(self.noise_sigma2 >= 0.0) {
            return Err(HedeError::BadParameter(format!(
                "noise variance {} must be nonnegative",
                self.noise_sigma2
            )));
        }
        if let Some(ar) = self.ar_blocks {
            if !(ar.rho.abs() < 1.0) || ar.block_size == 0 {
                return Err(HedeError::BadParameter(format!(
                    "AR blocks need |rho| < 1 and positive block size, got rho={}, size={}",
                    ar.rho, ar.block_size
                )));
            }
        }
        Ok(())
    }

    /// Parse a flat `key=value` configuration (one pair per line, `#`
    /// comments allowed).
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::new(0, 0, 0.5, 0.1, 0);
        let mut saw_n = false;
        let mut saw_p = false;
        let mut strat = StratConfig::default();
        let mut saw_strat = false;
        let mut ar = ArBlockConfig {
            rho: 0.0,
            block_size: 0,
        };
        let mut saw_ar = false;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HedeError::BadParameter(format!("line {}: expected key=value, got '{line}'", ln + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                HedeError::BadParameter(format!("line {}: cannot parse {what} '{value}'", ln + 1))
            };
            match key {
                "n" => {
                    cfg.n = value.parse().map_err(|_| bad("n"))?;
                    saw_n = true;
                }
                "p" => {
                    cfg.p = value.parse().map_err(|_| bad("p"))?;
                    saw_p = true;
                }
                "h2" => cfg.h2 = value.parse().map_err(|_| bad("h2"))?,
                "kappa" => cfg.kappa = value.parse().map_err(|_| bad("kappa"))?,
                "maf_low" => cfg.maf_range.0 = value.parse().map_err(|_| bad("maf_low"))?,
                "maf_high" => cfg.maf_range.1 = value.parse().map_err(|_| bad("maf_high"))?,
                "noise_sigma2" => {
                    cfg.noise_sigma2 = value.parse().map_err(|_| bad("noise_sigma2"))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "signal_kind" => {
                    cfg.signal_kind = match value {
                        "zero_inflated_normal" | "zin" => SignalKind::ZeroInflatedNormal,
                        "stratified_mixture" | "stratified" => SignalKind::StratifiedMixture,
                        _ => return Err(bad("signal_kind")),
                    }
                }
                "num_strata" => {
                    strat.num_strata = value.parse().map_err(|_| bad("num_strata"))?;
                    saw_strat = true;
                }
                "c_low" => {
                    strat.c_low = value.parse().map_err(|_| bad("c_low"))?;
                    saw_strat = true;
                }
                "c_high" => {
                    strat.c_high = value.parse().map_err(|_| bad("c_high"))?;
                    saw_strat = true;
                }
                "ar_rho" => {
                    ar.rho = value.parse().map_err(|_| bad("ar_rho"))?;
                    saw_ar = true;
                }
                "ar_block_size" => {
                    ar.block_size = value.parse().map_err(|_| bad("ar_block_size"))?;
                    saw_ar = true;
                }
                "resample_empty_signal" => {
                    cfg.resample_empty_signal = value.parse().map_err(|_| bad("flag"))?
                }
                _ => {
                    return Err(HedeError::BadParameter(format!(
                        "line {}: unknown key '{key}'",
                        ln + 1
                    )))
                }
            }
        }
        if !saw_n || !saw_p {
            return Err(HedeError::BadParameter("config must set n and p".into()));
        }
        if saw_strat {
            cfg.strat = Some(strat);
        }
        if saw_ar {
            cfg.ar_blocks = Some(ar);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Draw the raw genotype count matrix: per-column minor allele frequencies
/// `pi_j ~ Uniform(maf_range)` and counts `G_ij ~ Binomial(2, pi_j)`.
/// A column that comes out monomorphic is redrawn from a fresh substream so
/// normalization cannot fail (rare, but possible at low frequencies).
pub fn simulate_genotypes(cfg: &SimConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let maf = Stream::new(cfg.seed, "maf");
    let geno = Stream::new(cfg.seed, "genotypes");
    let n = cfg.n;
    let mut g = Array2::<f64>::zeros((n, cfg.p));
    let columns: Vec<Vec<f64>> = (0..cfg.p)
        .into_par_iter()
        .map(|j| {
            let pi = maf.child(j as u64).next_uniform(cfg.maf_range.0, cfg.maf_range.1);
            let mut col = vec![0.0f64; n];
            for attempt in 0..100u64 {
                let mut s = geno.child(j as u64).child(attempt);
                for v in col.iter_mut() {
                    *v = s.next_genotype(pi) as f64;
                }
                let first = col[0];
                if col.iter().any(|v| *v != first) {
                    break;
                }
            }
            col
        })
        .collect();
    for (j, col) in columns.into_iter().enumerate() {
        g.slice_mut(s![.., j]).assign(&Array1::from_vec(col));
    }
    Ok(g)
}

/// Draw the true coefficient vector and record the population heritability.
pub fn simulate_signal(cfg: &SimConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let p = cfg.p;
    let mut beta = vec![0.0f64; p];
    let stream = Stream::new(cfg.seed, "signal");

    match cfg.signal_kind {
        SignalKind::ZeroInflatedNormal => {
            if cfg.h2 > 0.0 {
                let sd = (cfg.h2 / (p as f64 * cfg.kappa * (1.0 - cfg.h2))).sqrt();
                for attempt in 0..100u64 {
                    for (j, b) in beta.iter_mut().enumerate() {
                        let mut s = stream.child(j as u64).child(attempt);
                        *b = if s.next_f64() < cfg.kappa {
                            sd * s.next_normal()
                        } else {
                            0.0
                        };
                    }
                    if beta.iter().any(|b| *b != 0.0) {
                        break;
                    }
                    if !cfg.resample_empty_signal {
                        return Err(HedeError::NoNonzeros);
                    }
                }
                if beta.iter().all(|b| *b == 0.0) {
                    return Err(HedeError::NoNonzeros);
                }
            }
        }
        SignalKind::StratifiedMixture => {
            if cfg.h2 > 0.0 {
                let strat = cfg.strat.unwrap_or_default();
                if strat.num_strata == 0 {
                    return Err(HedeError::BadParameter("num_strata must be positive".into()));
                }
                let chunk = p.div_ceil(strat.num_strata);
                let mut active = vec![false; p];
                for attempt in 0..100u64 {
                    let mut count = 0usize;
                    for (j, a) in active.iter_mut().enumerate() {
                        let stratum = j / chunk;
                        // alternate low/high concentration in stratum order
                        let conc = if stratum % 2 == 0 {
                            strat.c_low
                        } else {
                            strat.c_high
                        };
                        let mut s = stream.child(j as u64).child(attempt);
                        *a = s.next_f64() < conc;
                        count += *a as usize;
                    }
                    if count > 0 {
                        break;
                    }
                    if !cfg.resample_empty_signal {
                        return Err(HedeError::NoNonzeros);
                    }
                }
                let k = active.iter().filter(|a| **a).count();
                if k == 0 {
                    return Err(HedeError::NoNonzeros);
                }
                let var_plus = cfg.h2 / k as f64;
                // equal mixture of N(+-sigma_+/sqrt(10), 9 sigma_+^2 / 10):
                // total entrywise variance sigma_+^2 / 10 + 9 sigma_+^2 / 10
                let mean_mag = (var_plus / 10.0).sqrt();
                let comp_sd = (9.0 * var_plus / 10.0).sqrt();
                let values = Stream::new(cfg.seed, "signal-values");
                for (j, b) in beta.iter_mut().enumerate() {
                    if active[j] {
                        let mut s = values.child(j as u64);
                        let sign = if s.next_f64() < 0.5 { 1.0 } else { -1.0 };
                        *b = sign * mean_mag + comp_sd * s.next_normal();
                    }
                }
            }
        }
    }

    let sigma = cfg.ar_blocks.map(|ar| ar_block_covariance(p, ar));
    let mut truth = GroundTruth {
        beta,
        sigma2: cfg.noise_sigma2,
        h2_true: 0.0,
        h2_realized: None,
        sigma,
    };
    let g = truth.genetic_variance();
    truth.h2_true = if g + truth.sigma2 > 0.0 {
        g / (g + truth.sigma2)
    } else {
        0.0
    };
    Ok(truth)
}

fn ar_block_covariance(p: usize, ar: ArBlockConfig) -> Array2<f64> {
    let mut sigma = Array2::<f64>::zeros((p, p));
    let mut start = 0usize;
    while start < p {
        let end = (start + ar.block_size).min(p);
        for i in start..end {
            for j in start..end {
                sigma[[i, j]] = ar.rho.powi((i as i32 - j as i32).abs());
            }
        }
        start = end;
    }
    sigma
}

/// Draw a full data set: design, noise, response. Re-uses `truth` when given
/// (e.g. fixed signal across design draws), otherwise draws a fresh signal.
/// Fills `h2_realized` with the fixed-effects quantity
/// `beta' Sigma_emp beta / (beta' Sigma_emp beta + sigma2)` computed from the
/// realized design.
pub fn simulate_dataset(
    cfg: &SimConfig,
    truth: Option<GroundTruth>,
) -> Result<(DataSet, GroundTruth)> {
    cfg.validate()?;
    let mut truth = match truth {
        Some(t) => {
            if t.beta.len() != cfg.p {
                return Err(HedeError::DimensionMismatch(format!(
                    "truth has {} coefficients, config wants p = {}",
                    t.beta.len(),
                    cfg.p
                )));
            }
            t
        }
        None => simulate_signal(cfg)?,
    };

    let (x, standardize_after) = match cfg.ar_blocks {
        None => {
            let g = simulate_genotypes(cfg)?;
            (normalize_genotypes(&g)?, false)
        }
        Some(ar) => (gaussian_ar_design(cfg, ar)?, true),
    };

    let beta = Array1::from_vec(truth.beta.clone());
    let noise = Stream::new(cfg.seed, "noise");
    let sd = cfg.noise_sigma2.sqrt();
    let eps = Array1::from_iter((0..cfg.n).map(|i| {
        if sd == 0.0 {
            0.0
        } else {
            sd * noise.child(i as u64).next_normal()
        }
    }));
    let xb = x.dot(&beta);
    let y = &xb + &eps;

    // standardizing columns after the response is drawn reparametrizes the
    // coefficients but leaves y and the heritability target untouched
    let x = if standardize_after {
        let mut xs = x;
        crate::model::standardize_columns(&mut xs)?;
        xs
    } else {
        x
    };

    // realized fixed-effects heritability from the empirical design covariance
    let mean_xb = xb.sum() / cfg.n as f64;
    let genetic = xb.iter().map(|v| (v - mean_xb) * (v - mean_xb)).sum::<f64>() / cfg.n as f64;
    truth.h2_realized = Some(if genetic + cfg.noise_sigma2 > 0.0 {
        genetic / (genetic + cfg.noise_sigma2)
    } else {
        0.0
    });

    Ok((DataSet::new(y, x)?, truth))
}

/// Standard-normal rows times the blockwise AR square root; the caller
/// standardizes columns after forming the response.
fn gaussian_ar_design(cfg: &SimConfig, ar: ArBlockConfig) -> Result<Array2<f64>> {
    let n = cfg.n;
    let p = cfg.p;
    let stream = Stream::new(cfg.seed, "design");
    let mut z = Array2::<f64>::zeros((n, p));
    let cols: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut s = stream.child(j as u64);
            (0..n).map(|_| s.next_normal()).collect()
        })
        .collect();
    for (j, col) in cols.into_iter().enumerate() {
        z.slice_mut(s![.., j]).assign(&Array1::from_vec(col));
    }

    // sqrt of one AR block via symmetric eigendecomposition, reused across
    // equal-size blocks
    let mut x = Array2::<f64>::zeros((n, p));
    let mut start = 0usize;
    let mut cached: Option<(usize, Array2<f64>)> = None;
    while start < p {
        let end = (start + ar.block_size).min(p);
        let m = end - start;
        let sqrt_block = match &cached {
            Some((size, s)) if *size == m => s.clone(),
            _ => {
                let mut block = Array2::<f64>::zeros((m, m));
                for i in 0..m {
                    for j in 0..m {
                        block[[i, j]] = ar.rho.powi((i as i32 - j as i32).abs());
                    }
                }
                let s = matrix_sqrt(&block);
                cached = Some((m, s.clone()));
                s
            }
        };
        let zb = z.slice(s![.., start..end]);
        x.slice_mut(s![.., start..end]).assign(&zb.dot(&sqrt_block));
        start = end;
    }
    Ok(x)
}

fn matrix_sqrt(a: &Array2<f64>) -> Array2<f64> {
    let m = a.nrows();
    let d = nalgebra::DMatrix::from_fn(m, m, |i, j| a[[i, j]]);
    let eig = nalgebra::SymmetricEigen::new(d);
    let mut out = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += eig.eigenvectors[(i, k)]
                    * eig.eigenvalues[k].max(0.0).sqrt()
                    * eig.eigenvectors[(j, k)];
            }
            out[[i, j]] = acc;
        }
    }
    out
}
