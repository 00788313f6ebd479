//! Block-diagonal covariance estimation and whitening for correlated designs.
//!
//! When nearby columns are correlated in small blocks (LD blocks in GWAS),
//! stitching block-wise sample covariances gives an operator-norm-consistent
//! estimate of the population covariance. Right-multiplying the design by the
//! blockwise inverse square root then restores approximately independent
//! columns, after which the independent-column estimator applies unchanged.

use nalgebra::DMatrix;
use ndarray::{s, Array2};
use rayon::prelude::*;

use crate::error::{HedeError, Result};
use crate::model::{standardize_columns, DataSet};

/// Largest admissible block; sample covariance of a block wider than the
/// sample count is not invertible in any meaningful sense.
pub const DEFAULT_BLOCK_CAP: usize = 2048;

/// Contiguous, disjoint column ranges covering 1..p. Stored 0-based
/// half-open.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    bounds: Vec<(usize, usize)>,
}

impl BlockSpec {
    /// Validate ranges: sorted, non-overlapping, covering all `p` columns,
    /// each no wider than `DEFAULT_BLOCK_CAP`.
    pub fn new(bounds: Vec<(usize, usize)>, p: usize) -> Result<Self> {
        if bounds.is_empty() {
            return Err(HedeError::BadParameter("no blocks given".into()));
        }
        let mut cursor = 0usize;
        for (i, &(start, end)) in bounds.iter().enumerate() {
            if start != cursor || end <= start {
                return Err(HedeError::BadParameter(format!(
                    "block {i} spans [{start}, {end}); blocks must be contiguous and non-empty"
                )));
            }
            if end - start > DEFAULT_BLOCK_CAP {
                return Err(HedeError::BadParameter(format!(
                    "block {i} has {} columns, cap is {DEFAULT_BLOCK_CAP}",
                    end - start
                )));
            }
            cursor = end;
        }
        if cursor != p {
            return Err(HedeError::BadParameter(format!(
                "blocks cover {cursor} columns, design has {p}"
            )));
        }
        Ok(BlockSpec { bounds })
    }

    /// Equal blocks of `size` covering `p` columns; the last block may be
    /// smaller.
    pub fn uniform(p: usize, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(HedeError::BadParameter("block size must be positive".into()));
        }
        let mut bounds = Vec::new();
        let mut start = 0;
        while start < p {
            bounds.push((start, (start + size).min(p)));
            start += size;
        }
        Self::new(bounds, p)
    }

    /// Parse the plain-text block format: either one `start:end` line per
    /// block (1-based inclusive) or a single integer block size repeated to
    /// cover `p` columns.
    pub fn parse(text: &str, p: usize) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        if lines.is_empty() {
            return Err(HedeError::BadParameter("block file is empty".into()));
        }
        if lines.len() == 1 && !lines[0].contains(':') {
            let size: usize = lines[0].parse().map_err(|_| {
                HedeError::BadParameter(format!("cannot parse block size '{}'", lines[0]))
            })?;
            return Self::uniform(p, size);
        }
        let mut bounds = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            let (a, b) = line.split_once(':').ok_or_else(|| {
                HedeError::BadParameter(format!("line {}: expected start:end, got '{line}'", i + 1))
            })?;
            let start: usize = a.trim().parse().map_err(|_| {
                HedeError::BadParameter(format!("line {}: bad start '{a}'", i + 1))
            })?;
            let end: usize = b.trim().parse().map_err(|_| {
                HedeError::BadParameter(format!("line {}: bad end '{b}'", i + 1))
            })?;
            if start == 0 || end < start {
                return Err(HedeError::BadParameter(format!(
                    "line {}: 1-based inclusive range required, got {start}:{end}",
                    i + 1
                )));
            }
            bounds.push((start - 1, end));
        }
        Self::new(bounds, p)
    }

    pub fn bounds(&self) -> &[(usize, usize)] {
        &self.bounds
    }

    pub fn max_block_size(&self) -> usize {
        self.bounds.iter().map(|(s, e)| e - s).max().unwrap_or(0)
    }
}

/// Blockwise covariance estimate with precomputed inverse square roots.
#[derive(Clone, Debug)]
pub struct BlockCovariance {
    pub spec: BlockSpec,
    pub blocks: Vec<Array2<f64>>,
    pub inverse_sqrt_blocks: Vec<Array2<f64>>,
}

impl BlockCovariance {
    /// Exact identity covariance (p singleton blocks); whitening with it is a
    /// bit-exact no-op.
    pub fn identity(p: usize) -> Result<Self> {
        let spec = BlockSpec::uniform(p, 1)?;
        let one = Array2::from_elem((1, 1), 1.0);
        Ok(BlockCovariance {
            spec,
            blocks: vec![one.clone(); p],
            inverse_sqrt_blocks: vec![one; p],
        })
    }

    /// True when every inverse-sqrt block is exactly the identity.
    pub fn is_identity(&self) -> bool {
        self.inverse_sqrt_blocks.iter().all(|b| {
            let m = b.nrows();
            b.indexed_iter()
                .all(|((i, j), v)| *v == if i == j { 1.0 } else { 0.0 } || m == 0)
        })
    }

    /// Largest operator-norm deviation of Sigma-hat from a reference
    /// block-diagonal covariance with identical block structure.
    pub fn max_block_op_distance(&self, reference: &BlockCovariance) -> Result<f64> {
        if self.spec != reference.spec {
            return Err(HedeError::DimensionMismatch(
                "block structures differ".into(),
            ));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.blocks.iter().zip(&reference.blocks) {
            worst = worst.max(symmetric_op_norm(&(a - b)));
        }
        Ok(worst)
    }
}

fn symmetric_op_norm(a: &Array2<f64>) -> f64 {
    let m = a.nrows();
    let d = DMatrix::from_fn(m, m, |i, j| (a[[i, j]] + a[[j, i]]) / 2.0);
    nalgebra::SymmetricEigen::new(d)
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
}

/// Options for block covariance estimation.
#[derive(Clone, Copy, Debug)]
pub struct CovOptions {
    /// Floor eigenvalues at `1e-6 * trace/blocksize` before inverting. With
    /// the floor disabled a non-positive block is an error.
    pub floor_eigenvalues: bool,
}

impl Default for CovOptions {
    fn default() -> Self {
        CovOptions {
            floor_eigenvalues: true,
        }
    }
}

/// Blockwise sample covariance (1/n, columns assumed centered) with inverse
/// square roots via symmetric eigendecomposition per block.
pub fn estimate_block_covariance(data: &DataSet, spec: &BlockSpec) -> Result<BlockCovariance> {
    estimate_block_covariance_opts(data, spec, CovOptions::default())
}

pub fn estimate_block_covariance_opts(
    data: &DataSet,
    spec: &BlockSpec,
    opts: CovOptions,
) -> Result<BlockCovariance> {
    if spec.bounds().last().map(|b| b.1) != Some(data.p()) {
        return Err(HedeError::DimensionMismatch(format!(
            "blocks cover {:?} columns, design has {}",
            spec.bounds().last(),
            data.p()
        )));
    }
    let x = data.x();
    let n = data.n() as f64;
    let results: Vec<Result<(Array2<f64>, Array2<f64>)>> = spec
        .bounds()
        .par_iter()
        .enumerate()
        .map(|(bi, &(start, end))| {
            let xb = x.slice(s![.., start..end]);
            let cov = xb.t().dot(&xb) / n;
            let inv_sqrt = inverse_sqrt(&cov, bi, opts.floor_eigenvalues)?;
            Ok((cov, inv_sqrt))
        })
        .collect();
    let mut blocks = Vec::with_capacity(results.len());
    let mut inverse_sqrt_blocks = Vec::with_capacity(results.len());
    for r in results {
        let (c, i) = r?;
        blocks.push(c);
        inverse_sqrt_blocks.push(i);
    }
    Ok(BlockCovariance {
        spec: spec.clone(),
        blocks,
        inverse_sqrt_blocks,
    })
}

fn inverse_sqrt(cov: &Array2<f64>, block_index: usize, floor: bool) -> Result<Array2<f64>> {
    let m = cov.nrows();
    let d = DMatrix::from_fn(m, m, |i, j| cov[[i, j]]);
    let eig = nalgebra::SymmetricEigen::new(d);
    let trace: f64 = (0..m).map(|i| cov[[i, i]]).sum();
    let floor_value = 1e-6 * trace / m as f64;
    let mut inv_sqrt_vals = Vec::with_capacity(m);
    for ev in eig.eigenvalues.iter() {
        let v = if floor { ev.max(floor_value) } else { *ev };
        if v <= 0.0 {
            return Err(HedeError::SingularBlock(block_index));
        }
        inv_sqrt_vals.push(1.0 / v.sqrt());
    }
    let mut out = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += eig.eigenvectors[(i, k)] * inv_sqrt_vals[k] * eig.eigenvectors[(j, k)];
            }
            out[[i, j]] = acc;
        }
    }
    Ok(out)
}

/// Right-multiply the design by the blockwise inverse square root, then
/// re-standardize columns so the normalization invariant of [`DataSet`] is
/// preserved. Whitening with an exact identity covariance returns the input
/// unchanged.
pub fn whiten(data: &DataSet, cov: &BlockCovariance) -> Result<DataSet> {
    if cov.spec.bounds().last().map(|b| b.1) != Some(data.p()) {
        return Err(HedeError::DimensionMismatch(format!(
            "covariance covers {:?} columns, design has {}",
            cov.spec.bounds().last(),
            data.p()
        )));
    }
    if cov.is_identity() {
        return Ok(data.clone());
    }
    let x = data.x();
    let mut out = Array2::<f64>::zeros((data.n(), data.p()));
    for (bi, &(start, end)) in cov.spec.bounds().iter().enumerate() {
        let xb = x.slice(s![.., start..end]);
        let wb = xb.dot(&cov.inverse_sqrt_blocks[bi]);
        out.slice_mut(s![.., start..end]).assign(&wb);
    }
    standardize_columns(&mut out)?;
    DataSet::new(data.y().clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use ndarray::{arr2, Array1};

    fn standard_data(n: usize, p: usize, seed: u64) -> DataSet {
        let s = Stream::new(seed, "cov-test");
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
    fn spec_validation_rejects_gaps_and_overlap() {
        assert!(BlockSpec::new(vec![(0, 3), (4, 6)], 6).is_err());
        assert!(BlockSpec::new(vec![(0, 3), (2, 6)], 6).is_err());
        assert!(BlockSpec::new(vec![(0, 3), (3, 6)], 7).is_err());
        assert!(BlockSpec::new(vec![(0, 3), (3, 6)], 6).is_ok());
    }

    #[test]
    fn parse_accepts_ranges_and_uniform_size() {
        let spec = BlockSpec::parse("1:3\n4:6\n", 6).unwrap();
        assert_eq!(spec.bounds(), &[(0, 3), (3, 6)]);
        let spec = BlockSpec::parse("4\n", 10).unwrap();
        assert_eq!(spec.bounds(), &[(0, 4), (4, 8), (8, 10)]);
        assert!(BlockSpec::parse("0:3\n", 3).is_err());
        assert!(BlockSpec::parse("", 3).is_err());
    }

    #[test]
    fn singleton_block_is_the_column_variance() {
        let data = standard_data(200, 1, 3);
        let spec = BlockSpec::uniform(1, 1).unwrap();
        let cov = estimate_block_covariance(&data, &spec).unwrap();
        let v: f64 = data.x().column(0).iter().map(|x| x * x).sum::<f64>() / 200.0;
        assert!((cov.blocks[0][[0, 0]] - v).abs() < 1e-12);
    }

    #[test]
    fn block_matches_naive_two_pass_loop() {
        let data = standard_data(50, 4, 9);
        let spec = BlockSpec::uniform(4, 4).unwrap();
        let cov = estimate_block_covariance(&data, &spec).unwrap();
        let x = data.x();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for r in 0..50 {
                    acc += x[[r, i]] * x[[r, j]];
                }
                acc /= 50.0;
                assert!(
                    (cov.blocks[0][[i, j]] - acc).abs() <= 1e-10,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn independent_columns_concentrate_to_identity() {
        let data = standard_data(100_000, 2, 17);
        let spec = BlockSpec::uniform(2, 2).unwrap();
        let cov = estimate_block_covariance(&data, &spec).unwrap();
        let id = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let err = symmetric_op_norm(&(&cov.blocks[0] - &id));
        assert!(err < 0.05, "operator norm error {err}");
    }

    #[test]
    fn whiten_with_identity_is_bit_exact() {
        let data = standard_data(30, 6, 21);
        let cov = BlockCovariance::identity(6).unwrap();
        let out = whiten(&data, &cov).unwrap();
        assert_eq!(data.x(), out.x());
        assert_eq!(data.y(), out.y());
    }

    #[test]
    fn true_two_by_two_block_whitens_exactly_in_population() {
        // Sigma^{-1/2} Sigma Sigma^{-1/2} = I is an algebraic identity
        let sigma = arr2(&[[1.0, 0.9], [0.9, 1.0]]);
        let inv_sqrt = inverse_sqrt(&sigma, 0, true).unwrap();
        let prod = inv_sqrt.dot(&sigma).dot(&inv_sqrt);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - expect).abs() <= 1e-6, "({i},{j})");
            }
        }
    }

    #[test]
    fn inverse_sqrt_inverts_the_block() {
        let data = standard_data(500, 5, 33);
        let spec = BlockSpec::uniform(5, 5).unwrap();
        let cov = estimate_block_covariance(&data, &spec).unwrap();
        let prod = cov.inverse_sqrt_blocks[0]
            .dot(&cov.blocks[0])
            .dot(&cov.inverse_sqrt_blocks[0]);
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - expect).abs() <= 1e-6, "({i},{j})");
            }
        }
    }

    #[test]
    fn blocks_are_symmetric() {
        let data = standard_data(80, 6, 41);
        let spec = BlockSpec::uniform(6, 3).unwrap();
        let cov = estimate_block_covariance(&data, &spec).unwrap();
        for b in &cov.blocks {
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    assert!((b[[i, j]] - b[[j, i]]).abs() <= 1e-10);
                }
            }
        }
    }
}
