//! Kolmogorov-Smirnov checks of standardized samples against `N(0, Sigma)`.
//!
//! Per-coordinate distances are diagnostic only: the statistics are
//! integer-valued, so their standardized marginals live on a lattice and
//! the one-dimensional KS distance is dominated by the lattice steps. The
//! gate is the distance between the empirical law of the Mahalanobis form
//! `d^2 = z' Sigma^+ z` and chi-square with `rank(Sigma)` degrees of freedom.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Relative eigenvalue cut-off for the rank of `Sigma`.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub samples: usize,
    pub marginal_ks: Vec<f64>,
    pub rank: usize,
    pub mahalanobis_ks: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Two-sided KS distance between the empirical law of `xs` and `cdf`.
pub fn ks_distance(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        // Ties form one jump of the empirical CDF.
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let f = cdf(sorted[i]);
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    d
}

/// Orthonormal basis of the range of a symmetric PSD matrix, with the
/// matching eigenvalues.
pub fn range_basis(sigma: &Matrix<f64>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if !sigma.is_square() {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    let eig = sigma.to_nalgebra().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(Error::Rank("covariance has no positive eigenvalue".into()));
    }
    let mut basis = Vec::new();
    let mut values = Vec::new();
    for (k, &mu) in eig.eigenvalues.iter().enumerate() {
        if mu > RANK_TOLERANCE * max {
            basis.push(eig.eigenvectors.column(k).iter().copied().collect());
            values.push(mu);
        }
    }
    Ok((basis, values))
}

/// `z' Sigma^+ z` for each sample, restricted to the range of `Sigma`.
pub fn mahalanobis(samples: &[Vec<f64>], sigma: &Matrix<f64>) -> Result<(Vec<f64>, usize)> {
    let (basis, values) = range_basis(sigma)?;
    let d2 = samples
        .iter()
        .map(|z| {
            basis
                .iter()
                .zip(&values)
                .map(|(q, mu)| {
                    let y: f64 = q.iter().zip(z).map(|(a, b)| a * b).sum();
                    y * y / mu
                })
                .sum()
        })
        .collect();
    Ok((d2, basis.len()))
}

pub fn normality_test(samples: &[Vec<f64>], sigma: &Matrix<f64>, ks_coefficient: f64) -> Result<NormalityReport> {
    let d = sigma.rows();
    if samples.iter().any(|z| z.len() != d) {
        return Err(Error::Dimension(format!("samples do not match {d}-dimensional covariance")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidRange("no samples".into()));
    }
    let marginal_ks = (0..d)
        .map(|i| {
            let var = sigma[(i, i)];
            let xs: Vec<f64> = samples.iter().map(|z| z[i]).collect();
            if var <= 0.0 {
                return if xs.iter().all(|&x| x == 0.0) { 0.0 } else { 1.0 };
            }
            let normal = Normal::new(0.0, var.sqrt()).expect("positive sd");
            ks_distance(&xs, |x| normal.cdf(x))
        })
        .collect();
    let (d2, rank) = mahalanobis(samples, sigma)?;
    let chi = ChiSquared::new(rank as f64).expect("positive degrees of freedom");
    let mahalanobis_ks = ks_distance(&d2, |x| chi.cdf(x));
    let threshold = ks_coefficient / (samples.len() as f64).sqrt();
    Ok(NormalityReport {
        samples: samples.len(),
        marginal_ks,
        rank,
        mahalanobis_ks,
        threshold,
        passed: mahalanobis_ks < threshold,
    })
}

/// Draws `N(0, Sigma)` samples via a symmetric square root; test helper for
/// self-consistency checks.
pub fn gaussian_samples(sigma: &Matrix<f64>, count: usize, rng: &mut crate::rng::Rng) -> Vec<Vec<f64>> {
    use rand::Rng as _;
    let eig = sigma.to_nalgebra().symmetric_eigen();
    let d = sigma.rows();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root: DMatrix<f64> = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..count)
        .map(|_| {
            let g: Vec<f64> = (0..d)
                .map(|_| {
                    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                    normal.inverse_cdf(u)
                })
                .collect();
            (0..d).map(|i| (0..d).map(|k| root[(i, k)] * g[k]).sum()).collect()
        })
        .collect()
}
