//! Gaussian mixtures over 3D points, EM fitting, evaluation on a 2D
//! probability grid and grid-based KL divergence.

mod em;
mod grid;
mod kl;

pub use em::{fit_em, EmConfig, EmFit, EmInit};
pub use grid::{eval_on_grid, DensityGrid, GridSpec};
pub use kl::kl_divergence;

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::sensor::ClusterResult;
use crate::Point3;

/// Eigenvalue floor used when none is configured: the square of a 4.2 cm
/// range resolution.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 0.042 * 0.042;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Point3,
    pub covariance: Matrix3<f64>,
    /// Number of points this component represents.
    pub point_count: u64,
}

impl GaussianComponent {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight.is_finite() && (0.0..=1.0).contains(&self.weight)) {
            return Err(Error::InvalidMixture(format!("weight {} outside [0, 1]", self.weight)));
        }
        if !self.mean.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidMixture("non-finite mean".into()));
        }
        if !is_spd(&self.covariance) {
            return Err(Error::InvalidMixture(
                "covariance is not symmetric positive-definite".into(),
            ));
        }
        Ok(())
    }

    /// Marginal over z: mean and covariance in the ground plane.
    pub fn marginal_xy(&self) -> (Vector2<f64>, Matrix2<f64>) {
        let c = &self.covariance;
        (
            Vector2::new(self.mean.x, self.mean.y),
            Matrix2::new(c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]),
        )
    }
}

pub(crate) fn is_spd(c: &Matrix3<f64>) -> bool {
    if !c.iter().all(|v| v.is_finite()) {
        return false;
    }
    let scale = c.abs().max().max(f64::MIN_POSITIVE);
    if (c - c.transpose()).abs().max() > 1e-9 * scale {
        return false;
    }
    c.cholesky().is_some()
}

/// Symmetrize and clip eigenvalues from below. This is the constrained
/// maximum-likelihood covariance for a given scatter matrix.
pub fn floor_covariance(c: &Matrix3<f64>, floor: f64) -> Matrix3<f64> {
    let sym = (c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let v = eig.eigenvectors;
    let out = v * Matrix3::from_diagonal(&clipped) * v.transpose();
    (out + out.transpose()) * 0.5
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
    /// Total number of points represented (`Q_k`).
    pub total_points: u64,
}

impl GaussianMixture {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            c.validate()?;
        }
        if !self.is_empty() && (self.weight_sum() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMixture(format!(
                "weights sum to {}, expected 1",
                self.weight_sum()
            )));
        }
        Ok(())
    }

    /// Full 3D density at `x`.
    pub fn density(&self, x: &Point3) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let chol = c.covariance.cholesky().expect("SPD covariance");
                let d = x - c.mean;
                let m = d.dot(&chol.solve(&d));
                let det = chol.determinant();
                c.weight * (-0.5 * m).exp() / ((2.0 * PI).powi(3) * det).sqrt()
            })
            .sum()
    }

    pub fn log_likelihood(&self, points: &[Point3]) -> f64 {
        points.iter().map(|p| self.density(p).ln()).sum()
    }
}

/// Number of mixture components for a clustered cloud: one per surviving
/// cluster, capped at `m_max`.
pub fn choose_components(clusters: &ClusterResult, m_max: usize) -> usize {
    assert!(m_max >= 1, "m_max must be at least 1");
    clusters.n_clusters.min(m_max)
}

/// Largest-remainder split of `total` proportional to `weights`; the parts
/// always sum to `total`.
pub fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    if weights.is_empty() {
        return Vec::new();
    }
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        let mut out = vec![0; weights.len()];
        out[0] = total;
        return out;
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned) as usize) {
        out[i] += 1;
    }
    out
}

pub(crate) fn sample_moments(points: &[Point3], idx: &[usize]) -> (Point3, Matrix3<f64>) {
    let n = idx.len() as f64;
    let mean = idx.iter().fold(Vector3::zeros(), |acc, &i| acc + points[i].coords) / n;
    let cov = idx.iter().fold(Matrix3::zeros(), |acc, &i| {
        let d = points[i].coords - mean;
        acc + d * d.transpose()
    }) / n;
    (Point3::from(mean), cov)
}
