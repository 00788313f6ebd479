//! Fixed-point oracle for Gaussian designs.
//!
//! Solves the scalar system characterizing the limiting behavior of the
//! debiased lasso and ridge: with `delta = p/n`, working variables scaled so
//! `tau_k` here denotes `sqrt(n) * tau_k` and the signal prior describes the
//! coordinates of `sqrt(n) * beta`,
//!
//! ```text
//! tau_L^2 = sigma^2 + delta E[(eta_soft(b + tau_L Z; lambda_L/zeta_L) - b)^2]
//! zeta_L  = 1 - delta P(|b + tau_L Z| > lambda_L/zeta_L)
//! tau_R^2 = sigma^2 + delta E[(eta_ridge(b + tau_R Z; zeta_R) - b)^2]
//! zeta_R  = 1 - delta zeta_R / (zeta_R + lambda_R)
//! tau_L tau_R rho = sigma^2
//!     + delta E[(eta_soft err)(eta_ridge err)]  over rho-correlated (Z_L, Z_R)
//! ```
//!
//! with `df_k = n (1 - zeta_k)`. The ridge proximal map is linear, so its two
//! equations reduce to a quadratic in `zeta_R` and a linear equation in
//! `tau_R^2`, solved exactly. The lasso margin runs a damped fixed-point
//! iteration on exact truncated-Gaussian moments; the cross equation is
//! iterated innermost with tensor quadrature, after the margins have
//! converged (they do not depend on `rho`).
//!
//! The same system doubles as a saddle point: the ridge margin equals the
//! solution of the scalar max-min problem [`solve_ridge_scalar`], which this
//! module solves by independent nested 1-D optimization as a cross-check.

pub mod moments;
pub mod quad;

use serde::Serialize;

use crate::error::{HedeError, Result};
use moments::{soft_threshold, soft_threshold_moments};
use quad::{gauss_hermite, GaussHermite};

/// Solution of the fixed-point system.
///
/// `tau_l`/`tau_r` carry the sqrt(n) scaling (so `tau_l^2` estimates
/// `n * tau_L^2` of the unscaled system); `df_l`/`df_r` are fractions of p,
/// so `zeta_k = 1 - delta * df_k` exactly.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FixedPointSolution {
    pub tau_l: f64,
    pub tau_r: f64,
    pub rho: f64,
    pub zeta_l: f64,
    pub zeta_r: f64,
    pub df_l: f64,
    pub df_r: f64,
}

/// Coordinate distribution of the scaled signal `sqrt(n) * beta`.
#[derive(Clone, Debug)]
pub enum SignalPrior {
    /// Discrete atoms `(value, weight)`; weights must sum to 1.
    PointMasses(Vec<(f64, f64)>),
    /// Zero with probability `1 - kappa`, else N(0, variance).
    ZeroInflatedNormal { kappa: f64, variance: f64 },
    /// The empirical distribution of an explicit coefficient vector.
    Empirical(Vec<f64>),
}

impl SignalPrior {
    /// Point mass at zero (null signal).
    pub fn null() -> Self {
        SignalPrior::PointMasses(vec![(0.0, 1.0)])
    }

    /// Empirical prior of `sqrt(n) * beta` for a concrete instance.
    pub fn from_coefficients(beta: &[f64], n: usize) -> Self {
        let scale = (n as f64).sqrt();
        SignalPrior::Empirical(beta.iter().map(|b| b * scale).collect())
    }

    /// E[b^2]; `sigma_beta^2 = delta * second_moment()`.
    pub fn second_moment(&self) -> f64 {
        match self {
            SignalPrior::PointMasses(atoms) => atoms.iter().map(|(b, w)| w * b * b).sum(),
            SignalPrior::ZeroInflatedNormal { kappa, variance } => kappa * variance,
            SignalPrior::Empirical(bs) => {
                bs.iter().map(|b| b * b).sum::<f64>() / bs.len().max(1) as f64
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SignalPrior::PointMasses(atoms) => {
                if atoms.is_empty() {
                    return Err(HedeError::BadParameter("prior has no atoms".into()));
                }
                let total: f64 = atoms.iter().map(|(_, w)| w).sum();
                if atoms.iter().any(|(_, w)| *w < 0.0) || (total - 1.0).abs() > 1e-8 {
                    return Err(HedeError::BadParameter(format!(
                        "prior weights must be nonnegative and sum to 1, got {total}"
                    )));
                }
                Ok(())
            }
            SignalPrior::ZeroInflatedNormal { kappa, variance } => {
                if !(*kappa > 0.0 && *kappa <= 1.0) || !(*variance >= 0.0) {
                    return Err(HedeError::BadParameter(format!(
                        "zero-inflated normal needs kappa in (0,1] and variance >= 0, \
                         got kappa={kappa}, variance={variance}"
                    )));
                }
                Ok(())
            }
            SignalPrior::Empirical(bs) => {
                if bs.is_empty() {
                    return Err(HedeError::BadParameter("empirical prior is empty".into()));
                }
                Ok(())
            }
        }
    }

    /// Expand to discrete atoms; the normal component of a zero-inflated
    /// prior uses a nested quadrature (the integrands downstream are smooth
    /// in b, so this converges spectrally).
    fn atoms(&self, rule: &GaussHermite) -> Vec<(f64, f64)> {
        match self {
            SignalPrior::PointMasses(atoms) => atoms.clone(),
            SignalPrior::ZeroInflatedNormal { kappa, variance } => {
                let mut out = vec![(0.0, 1.0 - kappa)];
                let sd = variance.sqrt();
                let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    out.push((
                        std::f64::consts::SQRT_2 * sd * x,
                        kappa * w * inv_sqrt_pi,
                    ));
                }
                out
            }
            SignalPrior::Empirical(bs) => {
                let w = 1.0 / bs.len() as f64;
                bs.iter().map(|b| (*b, w)).collect()
            }
        }
    }
}

const MAX_FIXED_POINT_ITERS: usize = 10_000;
const PARAM_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-7;

/// Active-set probability at noise scale `tau` once the zeta equation is
/// enforced: the map `zeta -> 1 - delta P(|b + tau Z| > lambda/zeta)` is
/// strictly decreasing through zeta, so its fixed point is the unique root of
/// a monotone function and bisection is exact.
fn zeta_given_tau(delta: f64, atoms: &[(f64, f64)], lambda_l: f64, tau: f64) -> f64 {
    let g = |zeta: f64| -> f64 {
        let theta = lambda_l / zeta;
        let act: f64 = atoms
            .iter()
            .map(|&(b, w)| w * soft_threshold_moments(b, tau, theta).active)
            .sum();
        zeta - 1.0 + delta * act
    };
    let (mut lo, mut hi) = (1e-12f64, 1.0f64);
    if g(hi) <= 0.0 {
        return 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lasso margin of the system: returns (tau_l, zeta_l, df_l/p). A damped
/// iteration on tau with the zeta equation solved exactly inside each step.
fn solve_lasso_margin(
    delta: f64,
    sigma2: f64,
    atoms: &[(f64, f64)],
    lambda_l: f64,
) -> Result<(f64, f64, f64)> {
    let sigma_b2: f64 = delta * atoms.iter().map(|(b, w)| w * b * b).sum::<f64>();
    let mut tau = (sigma2 + sigma_b2).sqrt();
    let mut damping = 0.5f64;
    let mut last_sign = 0i8;
    let mut flips = 0usize;
    let mut last_change = f64::INFINITY;

    for _ in 0..MAX_FIXED_POINT_ITERS {
        let zeta = zeta_given_tau(delta, atoms, lambda_l, tau);
        let theta = lambda_l / zeta;
        let m2: f64 = atoms
            .iter()
            .map(|&(b, w)| w * soft_threshold_moments(b, tau, theta).m2)
            .sum();
        let tau_new = (sigma2 + delta * m2).sqrt();
        let d_tau = tau_new - tau;
        last_change = d_tau.abs();
        if last_change < PARAM_TOL {
            tau = tau_new;
            let zeta = zeta_given_tau(delta, atoms, lambda_l, tau);
            let theta = lambda_l / zeta;
            let mut m2 = 0.0;
            let mut act = 0.0;
            for &(b, w) in atoms {
                let m = soft_threshold_moments(b, tau, theta);
                m2 += w * m.m2;
                act += w * m.active;
            }
            let r1 = (tau * tau - sigma2 - delta * m2).abs();
            let r2 = (zeta - 1.0 + delta * act).abs();
            if r1.max(r2) > RESIDUAL_TOL {
                return Err(HedeError::NotConverged {
                    iters: MAX_FIXED_POINT_ITERS,
                    max_change: last_change,
                    residual: r1.max(r2),
                });
            }
            return Ok((tau, zeta, act));
        }
        // halve the damping when updates oscillate
        let sign = if d_tau > 0.0 { 1 } else { -1 };
        if sign == -last_sign {
            flips += 1;
            if flips >= 2 {
                damping = (damping * 0.5).max(0.01);
                flips = 0;
            }
        } else {
            flips = 0;
        }
        last_sign = sign;
        tau += damping * d_tau;
    }
    Err(HedeError::NotConverged {
        iters: MAX_FIXED_POINT_ITERS,
        max_change: last_change,
        residual: f64::NAN,
    })
}

/// Ridge margin in closed form: the linear proximal map collapses the two
/// ridge equations to a quadratic in zeta_R and a linear equation in tau_R^2.
fn solve_ridge_margin(delta: f64, sigma2: f64, sigma_b2: f64, lambda_r: f64) -> (f64, f64, f64) {
    let b = lambda_r + delta - 1.0;
    let zeta = (-b + (b * b + 4.0 * lambda_r).sqrt()) / 2.0;
    let denom = zeta + lambda_r;
    let shrink = delta * zeta * zeta / (denom * denom);
    let tau2 = (sigma2 + lambda_r * lambda_r * sigma_b2 / (denom * denom)) / (1.0 - shrink);
    (tau2.sqrt(), zeta, zeta / denom)
}

/// Solve the joint fixed-point system for one `(lambda_L, lambda_R)` pair.
///
/// Marginal expectations use exact truncated-Gaussian moments per prior atom;
/// the cross expectation uses a tensor Gauss-Hermite rule over the correlated
/// pair `(Z_L, Z_R)`. `quad_nodes` controls the 1-D prior expansion (the 2-D
/// tensor is capped at 41 nodes per axis).
pub fn solve_joint_fixed_point(
    delta: f64,
    sigma2: f64,
    prior: &SignalPrior,
    lambda_l: f64,
    lambda_r: f64,
    quad_nodes: usize,
) -> Result<FixedPointSolution> {
    if !(delta > 0.0) || !(sigma2 > 0.0) || !(lambda_l > 0.0) || !(lambda_r > 0.0) {
        return Err(HedeError::BadParameter(format!(
            "delta={delta}, sigma2={sigma2}, lambda_L={lambda_l}, lambda_R={lambda_r} \
             must all be positive"
        )));
    }
    if quad_nodes < 20 {
        return Err(HedeError::BadParameter(format!(
            "quad_nodes = {quad_nodes} must be at least 20"
        )));
    }
    prior.validate()?;

    let rule_1d = gauss_hermite(quad_nodes);
    let atoms = prior.atoms(&rule_1d);
    let sigma_b2 = delta * atoms.iter().map(|(b, w)| w * b * b).sum::<f64>();

    let (tau_l, zeta_l, df_l) = solve_lasso_margin(delta, sigma2, &atoms, lambda_l)?;
    let (tau_r, zeta_r, df_r) = solve_ridge_margin(delta, sigma2, sigma_b2, lambda_r);

    // cross equation, innermost: the margins are already fixed
    let tensor = gauss_hermite(quad_nodes.min(41));
    let theta_l = lambda_l / zeta_l;
    let cross_expectation = |rho: f64| -> f64 {
        let sqrt2 = std::f64::consts::SQRT_2;
        let comp = (1.0 - rho * rho).max(0.0).sqrt();
        let inv_pi = 1.0 / std::f64::consts::PI;
        let mut total = 0.0;
        for &(b, w) in &atoms {
            let mut acc = 0.0;
            for (xi, wi) in tensor.nodes.iter().zip(&tensor.weights) {
                let z_l = sqrt2 * xi;
                let err_l = soft_threshold(b + tau_l * z_l, theta_l) - b;
                if err_l == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for (xj, wj) in tensor.nodes.iter().zip(&tensor.weights) {
                    let z_r = rho * z_l + comp * sqrt2 * xj;
                    let err_r = (zeta_r * tau_r * z_r - lambda_r * b) / (zeta_r + lambda_r);
                    inner += wj * err_r;
                }
                acc += wi * err_l * inner;
            }
            total += w * acc * inv_pi;
        }
        total
    };

    let mut rho = 0.0f64;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let target = (sigma2 + delta * cross_expectation(rho)) / (tau_l * tau_r);
        let target = target.clamp(-0.999_999_999, 0.999_999_999);
        let d = target - rho;
        last_change = d.abs();
        rho += 0.5 * d;
        if last_change < PARAM_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(HedeError::NotConverged {
            iters: MAX_FIXED_POINT_ITERS,
            max_change: last_change,
            residual: f64::NAN,
        });
    }
    let cross_residual =
        (tau_l * tau_r * rho - sigma2 - delta * cross_expectation(rho)).abs();
    if cross_residual > RESIDUAL_TOL.max(1e-9 * tau_l * tau_r) {
        return Err(HedeError::NotConverged {
            iters: MAX_FIXED_POINT_ITERS,
            max_change: last_change,
            residual: cross_residual,
        });
    }

    Ok(FixedPointSolution {
        tau_l,
        tau_r,
        rho,
        zeta_l,
        zeta_r,
        df_l,
        df_r,
    })
}

/// Saddle point of the scalar problem
///
/// ```text
/// psi(alpha, tau) = alpha sigma^2 / (2 tau) + alpha tau / 2 - alpha^2 / 2
///                   - alpha^2 tau delta / (2 (alpha + tau lambda))
///                   + alpha lambda sigma_beta^2 / (2 (alpha + tau lambda))
/// ```
///
/// solved by nested 1-D optimization: an inner minimization over `tau` (psi is
/// strictly convex and coercive in tau) inside an outer maximization over
/// `alpha` (strictly concave). Returns `(alpha_star, tau_star)`; these relate
/// to the ridge margin as `tau_star = sqrt(n) tau_R`, `alpha_star = tau_star
/// zeta_R`.
pub fn solve_ridge_scalar(
    delta: f64,
    sigma2: f64,
    sigma_beta2: f64,
    lambda_r: f64,
) -> Result<(f64, f64)> {
    if !(delta > 0.0) || !(sigma2 > 0.0) || !(lambda_r > 0.0) || !(sigma_beta2 >= 0.0) {
        return Err(HedeError::BadParameter(format!(
            "delta={delta}, sigma2={sigma2}, lambda_R={lambda_r} must be positive \
             and sigma_beta2={sigma_beta2} nonnegative"
        )));
    }
    let lam = lambda_r;
    let dpsi_dtau = |alpha: f64, tau: f64| -> f64 {
        let denom = alpha + tau * lam;
        -alpha * sigma2 / (2.0 * tau * tau) + alpha / 2.0
            - alpha.powi(3) * delta / (2.0 * denom * denom)
            - alpha * lam * lam * sigma_beta2 / (2.0 * denom * denom)
    };
    let inner_tau = |alpha: f64| -> Result<f64> {
        bisect_root(
            &|tau| dpsi_dtau(alpha, tau),
            1e-6,
            1e3,
            "inner tau stationarity",
            || format!("alpha={alpha}, delta={delta}, sigma2={sigma2}, lambda={lam}"),
        )
    };
    // envelope theorem: d/dalpha of the inner value is psi_alpha at tau*(alpha)
    let dpsi_dalpha = |alpha: f64| -> Result<f64> {
        let tau = inner_tau(alpha)?;
        let denom = alpha + tau * lam;
        Ok(sigma2 / (2.0 * tau) + tau / 2.0 - alpha
            - (delta / 2.0) * alpha * tau * (alpha + 2.0 * tau * lam) / (denom * denom)
            + (lam * sigma_beta2 / 2.0) * tau * lam / (denom * denom))
    };
    let alpha_star = bisect_root_fallible(
        &dpsi_dalpha,
        1e-6,
        1e3,
        "outer alpha stationarity",
        || format!("delta={delta}, sigma2={sigma2}, sigma_beta2={sigma_beta2}, lambda={lam}"),
    )?;
    let tau_star = inner_tau(alpha_star)?;

    let r_tau = dpsi_dtau(alpha_star, tau_star).abs();
    let r_alpha = dpsi_dalpha(alpha_star)?.abs();
    if r_tau.max(r_alpha) > 1e-9 * (1.0 + alpha_star.max(tau_star)) {
        return Err(HedeError::NotConverged {
            iters: 0,
            max_change: 0.0,
            residual: r_tau.max(r_alpha),
        });
    }
    Ok((alpha_star, tau_star))
}

/// Bisection on a decreasing-through-zero bracket; the upper end doubles past
/// `hi0` when the sign change lies beyond it (the stationary point always
/// exists, the starting interval is just a guess).
fn bisect_root(
    f: &dyn Fn(f64) -> f64,
    lo0: f64,
    hi0: f64,
    context: &'static str,
    inputs: impl Fn() -> String,
) -> Result<f64> {
    let f_lo = f(lo0);
    if f_lo > 0.0 {
        return Err(HedeError::NoBracket {
            context,
            inputs: inputs(),
        });
    }
    let mut hi = hi0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(HedeError::NoBracket {
                context,
                inputs: inputs(),
            });
        }
    }
    let mut lo = lo0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn bisect_root_fallible(
    f: &dyn Fn(f64) -> Result<f64>,
    lo0: f64,
    hi0: f64,
    context: &'static str,
    inputs: impl Fn() -> String,
) -> Result<f64> {
    // outer derivative is positive at small alpha and negative at large alpha
    if f(lo0)? < 0.0 {
        return Err(HedeError::NoBracket {
            context,
            inputs: inputs(),
        });
    }
    let mut hi = hi0;
    while f(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(HedeError::NoBracket {
                context,
                inputs: inputs(),
            });
        }
    }
    let mut lo = lo0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use moments::{normal_cdf, normal_pdf};

    #[test]
    fn scalar_solution_satisfies_stationarity() {
        let (alpha, tau) = solve_ridge_scalar(0.5, 1.0, 1.0, 0.5).unwrap();
        // residual check of both first-order conditions, written out again
        let lam = 0.5;
        let (delta, s2, sb2) = (0.5, 1.0, 1.0);
        let denom = alpha + tau * lam;
        let d_tau = -alpha * s2 / (2.0 * tau * tau) + alpha / 2.0
            - alpha.powi(3) * delta / (2.0 * denom * denom)
            - alpha * lam * lam * sb2 / (2.0 * denom * denom);
        let d_alpha = s2 / (2.0 * tau) + tau / 2.0 - alpha
            - (delta / 2.0) * alpha * tau * (alpha + 2.0 * tau * lam) / (denom * denom)
            + (lam * sb2 / 2.0) * tau * lam / (denom * denom);
        assert!(d_tau.abs() <= 1e-8, "d psi / d tau = {d_tau}");
        assert!(d_alpha.abs() <= 1e-8, "d psi / d alpha = {d_alpha}");
    }

    #[test]
    fn scalar_no_signal_low_dimension_limit_recovers_sigma() {
        let (_, tau) = solve_ridge_scalar(1e-4, 1.0, 0.0, 0.5).unwrap();
        assert!((tau - 1.0).abs() < 1e-2, "tau = {tau}");
    }

    #[test]
    fn joint_ridge_margin_matches_scalar_solver() {
        let cases: [(f64, f64, f64, f64); 4] = [
            (0.5, 1.0, 1.0, 0.5),
            (2.0, 1.0, 0.5, 0.3),
            (10.0, 2.0, 1.0, 1.0),
            (0.25, 0.5, 2.0, 0.05),
        ];
        for &(delta, s2, sb2, lam) in &cases {
            // a point-mass prior with the requested second moment
            let b = (sb2 / delta).sqrt();
            let prior = SignalPrior::PointMasses(vec![(b, 0.5), (-b, 0.5)]);
            let sol = solve_joint_fixed_point(delta, s2, &prior, 0.5, lam, 61).unwrap();
            let (alpha_star, tau_star) = solve_ridge_scalar(delta, s2, sb2, lam).unwrap();
            assert!(
                (sol.tau_r - tau_star).abs() <= 1e-6,
                "tau_R {} vs tau* {tau_star}",
                sol.tau_r
            );
            assert!(
                (sol.zeta_r - alpha_star / tau_star).abs() <= 1e-6,
                "zeta_R {} vs alpha*/tau* {}",
                sol.zeta_r,
                alpha_star / tau_star
            );
        }
    }

    #[test]
    fn null_prior_lasso_margin_matches_closed_form_gaussian_moments() {
        // independent re-derivation: E[soft(tau Z; theta)^2]
        //   = (tau^2 + theta^2) 2 Phi(-theta/tau) - 2 tau theta phi(theta/tau)
        for &(delta, s2, lam) in &[(0.5, 1.0, 0.5), (2.0, 1.0, 1.0), (1.0, 2.0, 0.7)] {
            let sol =
                solve_joint_fixed_point(delta, s2, &SignalPrior::null(), lam, 0.5, 61).unwrap();
            let theta = lam / sol.zeta_l;
            let c = theta / sol.tau_l;
            let second_moment = 2.0 * (sol.tau_l * sol.tau_l + theta * theta) * normal_cdf(-c)
                - 2.0 * sol.tau_l * theta * normal_pdf(c);
            let resid = sol.tau_l * sol.tau_l - s2 - delta * second_moment;
            assert!(resid.abs() <= 1e-7, "lasso margin residual {resid}");
            // df consistency: for the null prior the active probability is
            // 2 Phi(-theta/tau)
            let df_expect = 2.0 * normal_cdf(-c);
            assert!((sol.df_l - df_expect).abs() <= 1e-9);
        }
    }

    #[test]
    fn ridge_df_is_the_prox_divergence_identity() {
        let prior = SignalPrior::ZeroInflatedNormal {
            kappa: 0.3,
            variance: 2.0,
        };
        let sol = solve_joint_fixed_point(0.8, 1.0, &prior, 0.6, 0.9, 61).unwrap();
        assert_abs_diff_eq!(
            sol.df_r,
            sol.zeta_r / (sol.zeta_r + 0.9),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(sol.zeta_r, 1.0 - 0.8 * sol.df_r, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.zeta_l, 1.0 - 0.8 * sol.df_l, epsilon = 1e-7);
    }

    #[test]
    fn solution_bounds_hold_over_a_parameter_sweep() {
        let mut s = crate::rng::Stream::new(17, "sweep");
        for _ in 0..20 {
            let delta = s.next_uniform(0.2, 4.0);
            let sigma2 = s.next_uniform(0.3, 2.0);
            let kappa = s.next_uniform(0.05, 1.0);
            let variance = s.next_uniform(0.1, 3.0);
            let lambda_l = s.next_uniform(0.2, 2.0);
            let lambda_r = s.next_uniform(0.05, 2.0);
            let prior = SignalPrior::ZeroInflatedNormal { kappa, variance };
            let sol =
                solve_joint_fixed_point(delta, sigma2, &prior, lambda_l, lambda_r, 41).unwrap();
            assert!(sol.rho.abs() < 1.0, "rho {}", sol.rho);
            assert!(sol.zeta_l > 0.0 && sol.zeta_l <= 1.0, "zeta_L {}", sol.zeta_l);
            assert!(sol.zeta_r > 0.0 && sol.zeta_r <= 1.0, "zeta_R {}", sol.zeta_r);
            assert!(sol.tau_l * sol.tau_l >= sigma2 - 1e-12);
            assert!(sol.tau_r * sol.tau_r >= sigma2 - 1e-12);
        }
    }

    #[test]
    fn lasso_variance_is_nondecreasing_in_noise() {
        let prior = SignalPrior::ZeroInflatedNormal {
            kappa: 0.2,
            variance: 1.5,
        };
        let mut prev = 0.0;
        for &s2 in &[0.5, 1.0, 2.0] {
            let sol = solve_joint_fixed_point(0.5, s2, &prior, 0.5, 0.5, 41).unwrap();
            assert!(
                sol.tau_l * sol.tau_l >= prev,
                "tau_L^2 decreased at sigma2 {s2}"
            );
            prev = sol.tau_l * sol.tau_l;
        }
    }

    #[test]
    fn cross_term_matches_linear_reduction_oracle() {
        // the ridge prox error is linear in Z_R, so conditioning on Z_L
        // collapses the cross expectation to 1-D soft-threshold moments:
        // rho (tauL tauR - delta zR tauR A / (zR+lam)) = sigma2 - delta lam B / (zR+lam)
        // with A = E[err_L Z], B = E[err_L] b averaged over the prior
        let delta = 0.5;
        let sigma2 = 1.0;
        let (ll, lr) = (0.5, 0.3);
        let b0 = std::f64::consts::SQRT_2;
        let prior = SignalPrior::PointMasses(vec![(0.0, 0.7), (b0, 0.15), (-b0, 0.15)]);
        let sol = solve_joint_fixed_point(delta, sigma2, &prior, ll, lr, 41).unwrap();

        let theta = ll / sol.zeta_l;
        let mut a_term = 0.0;
        let mut b_term = 0.0;
        for &(b, w) in &[(0.0, 0.7), (b0, 0.15), (-b0, 0.15)] {
            let m = soft_threshold_moments(b, sol.tau_l, theta);
            a_term += w * m.mz;
            b_term += w * m.m1 * b;
        }
        let denom = sol.zeta_r + lr;
        let rho_expect = (sigma2 - delta * lr * b_term / denom)
            / (sol.tau_l * sol.tau_r - delta * sol.zeta_r * sol.tau_r * a_term / denom);
        assert!(
            (sol.rho - rho_expect).abs() <= 2e-3,
            "rho {} vs linear-reduction {rho_expect}",
            sol.rho
        );
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(
            solve_joint_fixed_point(0.5, 1.0, &SignalPrior::null(), -0.1, 0.5, 61),
            Err(HedeError::BadParameter(_))
        ));
        assert!(matches!(
            solve_joint_fixed_point(0.5, 1.0, &SignalPrior::null(), 0.5, 0.5, 10),
            Err(HedeError::BadParameter(_))
        ));
        assert!(matches!(
            solve_ridge_scalar(0.5, -1.0, 1.0, 0.5),
            Err(HedeError::BadParameter(_))
        ));
    }
}
