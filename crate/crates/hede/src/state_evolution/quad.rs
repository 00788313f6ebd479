//! Gauss-Hermite quadrature rules via the Golub-Welsch algorithm.
//!
//! Physicists' convention: nodes and weights integrate against exp(-x^2), so
//! the weights sum to sqrt(pi) and a standard-normal expectation is
//! `sum_i w_i f(sqrt(2) x_i) / sqrt(pi)`.

use nalgebra::DMatrix;

#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Standard-normal expectation of `f`.
    pub fn normal_expectation(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let sqrt2 = std::f64::consts::SQRT_2;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(sqrt2 * x))
            .sum::<f64>()
            * inv_sqrt_pi
    }
}

/// Build the n-point rule from the eigen-decomposition of the Jacobi matrix
/// of the Hermite recurrence (off-diagonal sqrt(k/2)).
pub fn gauss_hermite(n: usize) -> GaussHermite {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let v = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = v;
        jacobi[(k, k - 1)] = v;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    GaussHermite {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}
