//! Consistent heritability (signal-to-noise ratio) estimation in
//! high-dimensional linear models by ensembling degrees-of-freedom-corrected
//! debiased lasso and ridge estimators.
//!
//! Given a phenotype `y` and a column-standardized design `X` with `p/n`
//! bounded away from 0, the pipeline
//!
//! 1. solves a lasso path and a ridge path, keeping tuning parameters whose
//!    degrees of freedom fall in a fixed `df/n` window,
//! 2. estimates the joint fluctuation scales of the two debiased estimators
//!    from residuals, picks the ensemble weight and the tuning pair that
//!    minimize the ensemble variance, and
//! 3. returns `clamp((||beta_C^d||^2 - p tau_C^2) / Var(y), 0, 1)`.
//!
//! Supporting subsystems: block-diagonal covariance estimation and whitening
//! for correlated designs ([`covariance`]), a deterministic GWAS-style
//! simulation engine ([`simulation`]), and a fixed-point state-evolution
//! oracle for verifying the empirical quantities on Gaussian designs
//! ([`state_evolution`]).
//!
//! ```
//! use hede::{run_hede, GridConfig, SimConfig};
//!
//! let cfg = SimConfig::new(120, 60, 0.4, 0.3, 7);
//! let (data, truth) = hede::simulate_dataset(&cfg, None)?;
//! let est = run_hede(&data, &GridConfig::default())?;
//! assert!((0.0..=1.0).contains(&est.h2));
//! assert!(truth.h2_realized.is_some());
//! # Ok::<(), hede::HedeError>(())
//! ```

pub mod covariance;
pub mod debias;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod model;
pub mod rng;
pub mod simulation;
pub mod solvers;
pub mod state_evolution;
pub mod tau;

pub use covariance::{estimate_block_covariance, whiten, BlockCovariance, BlockSpec};
pub use debias::debias_fit;
pub use ensemble::{
    build_grid, ensemble_tau, run_hede, run_hede_detailed, select_alpha, GridConfig,
    GridDiagnostics, LambdaGrid,
};
pub use error::{HedeError, Result};
pub use model::{
    normalize_genotypes, sample_variance, DataSet, EnsembleChoice, FitResult, GroundTruth,
    HeritabilityEstimate, PenaltyKind, TauEstimates,
};
pub use simulation::{simulate_dataset, simulate_genotypes, simulate_signal, SimConfig, SignalKind};
pub use solvers::{build_ridge_cache, fit_lasso, fit_lasso_path, fit_ridge, LassoConfig, RidgePathCache};
pub use state_evolution::{solve_joint_fixed_point, solve_ridge_scalar, FixedPointSolution, SignalPrior};
pub use tau::estimate_taus;

// The guide chapters double as doc-tests so their snippets stay in sync with
// the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct ModelChapter;
    #[doc = include_str!("../../../book/src/estimators.md")]
    pub struct EstimatorsChapter;
    #[doc = include_str!("../../../book/src/ensemble.md")]
    pub struct EnsembleChapter;
    #[doc = include_str!("../../../book/src/correlated.md")]
    pub struct CorrelatedChapter;
    #[doc = include_str!("../../../book/src/oracle.md")]
    pub struct OracleChapter;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct SimulationChapter;
}
