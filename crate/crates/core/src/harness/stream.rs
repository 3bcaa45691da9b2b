//! Streaming mean and covariance (Welford), mergeable across workers.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Sum of outer products of deviations from the running mean.
    pub comoment: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        self.count += 1;
        let n = self.count as f64;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, dx) in self.mean.iter_mut().zip(&before) {
            *m += dx / n;
        }
        for i in 0..d {
            let after_i = x[i] - self.mean[i];
            for j in 0..d {
                self.comoment[i * d + j] += before[j] * after_i;
            }
        }
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let d = self.dim();
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..d {
            for j in 0..d {
                self.comoment[i * d + j] += other.comoment[i * d + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for (m, dx) in self.mean.iter_mut().zip(&delta) {
            *m += dx * nb / n;
        }
        self.count += other.count;
    }

    /// Unbiased sample covariance; zero when fewer than two samples.
    /// Symmetrized, since the Welford update accumulates `c_ij` and `c_ji`
    /// with different rounding.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let den = if self.count > 1 { (self.count - 1) as f64 } else { f64::INFINITY };
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| 0.5 * (self.comoment[i * d + j] + self.comoment[j * d + i]) / den)
                    .collect()
            })
            .collect()
    }

    /// Standard error of each coordinate of the sample mean.
    pub fn standard_errors(&self) -> Vec<f64> {
        let cov = self.covariance();
        (0..self.dim())
            .map(|i| (cov[i][i].max(0.0) / self.count.max(1) as f64).sqrt())
            .collect()
    }
}

/// Merges per-chunk accumulators along a fixed balanced binary tree, so the
/// floating-point result depends only on the chunking.
pub fn merge_tree(mut parts: Vec<Moments>, dim: usize) -> Moments {
    if parts.is_empty() {
        return Moments::new(dim);
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.merge(&b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().expect("non-empty")
}
