use std::f64::consts::PI;

use log::{debug, warn};
use nalgebra::{Matrix3, Vector3};

use super::{apportion, floor_covariance, sample_moments, GaussianComponent, GaussianMixture};
use crate::sensor::ClusterResult;
use crate::Point3;

#[derive(Clone, Debug, PartialEq)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the mean per-point log-likelihood improves by less than this.
    pub tol: f64,
    /// Lower bound on covariance eigenvalues, m².
    pub variance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            variance_floor: super::DEFAULT_VARIANCE_FLOOR,
        }
    }
}

/// Starting point for EM. When covariances are missing, every point is
/// hard-assigned to its nearest mean and the group moments seed the
/// covariances (and the weights, if those are missing too).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmInit {
    pub means: Vec<Point3>,
    pub covariances: Option<Vec<Matrix3<f64>>>,
    pub weights: Option<Vec<f64>>,
}

impl EmInit {
    pub fn from_means(means: Vec<Point3>) -> Self {
        Self {
            means,
            covariances: None,
            weights: None,
        }
    }

    /// Centroids, covariances and relative sizes of the `m` largest clusters
    /// (ties broken by lower label).
    pub fn from_clusters(points: &[Point3], clusters: &ClusterResult, m: usize) -> Self {
        let sizes = clusters.sizes();
        let mut order: Vec<usize> = (0..clusters.n_clusters).collect();
        order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
        order.truncate(m);
        let mut means = Vec::with_capacity(order.len());
        let mut covs = Vec::with_capacity(order.len());
        let mut weights = Vec::with_capacity(order.len());
        for &c in &order {
            let idx = clusters.members(c);
            let (mean, cov) = sample_moments(points, &idx);
            means.push(mean);
            covs.push(cov);
            weights.push(idx.len() as f64);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self {
            means,
            covariances: Some(covs),
            weights: Some(weights),
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Concatenate initializations (e.g. one per radar), reweighting each
    /// part by `part_weights`.
    pub fn concat(parts: &[(EmInit, f64)]) -> Self {
        let mut out = EmInit {
            means: Vec::new(),
            covariances: Some(Vec::new()),
            weights: Some(Vec::new()),
        };
        for (init, scale) in parts {
            let m = init.len();
            out.means.extend_from_slice(&init.means);
            let covs = out.covariances.as_mut().unwrap();
            match &init.covariances {
                Some(c) => covs.extend_from_slice(c),
                None => {
                    out.covariances = None;
                }
            }
            if let Some(w) = out.weights.as_mut() {
                match &init.weights {
                    Some(iw) => w.extend(iw.iter().map(|x| x * scale)),
                    None => w.extend(std::iter::repeat_n(scale / m as f64, m)),
                }
            }
        }
        if let Some(w) = out.weights.as_mut() {
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                w.iter_mut().for_each(|x| *x /= total);
            } else {
                out.weights = None;
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    /// Weighted log-likelihood evaluated before every M-step, plus the final one.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Workspace {
    log_weight: f64,
    mean: Vector3<f64>,
    inv: Matrix3<f64>,
    log_norm: f64,
}

impl Workspace {
    fn new(weight: f64, mean: &Vector3<f64>, cov: &Matrix3<f64>) -> Self {
        let chol = cov.cholesky().expect("floored covariance is SPD");
        let det = chol.determinant();
        Self {
            log_weight: weight.ln(),
            mean: *mean,
            inv: chol.inverse(),
            log_norm: -0.5 * (det.ln() + 3.0 * (2.0 * PI).ln()),
        }
    }

    fn log_density(&self, x: &Vector3<f64>) -> f64 {
        let d = x - self.mean;
        self.log_weight + self.log_norm - 0.5 * d.dot(&(self.inv * d))
    }
}

/// Fit a Gaussian mixture by expectation-maximization.
///
/// `weights` optionally scales each point's contribution (all ones when
/// `None`). The number of components is `init.len()`, reduced to the
/// number of points when there are fewer points than components.
/// `total_points` is apportioned over the components by weight to give
/// the per-component point counts.
pub fn fit_em(points: &[Point3], weights: Option<&[f64]>, init: &EmInit, cfg: &EmConfig, total_points: u64) -> EmFit {
    let empty = |total| EmFit {
        mixture: GaussianMixture {
            components: Vec::new(),
            total_points: total,
        },
        log_likelihood: Vec::new(),
        iterations: 0,
        converged: true,
    };
    if points.is_empty() || init.is_empty() {
        return empty(total_points);
    }
    if let Some(w) = weights {
        assert_eq!(w.len(), points.len(), "one weight per point");
    }
    let point_weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total_weight: f64 = (0..points.len()).map(point_weight).sum();
    if !(total_weight > 0.0) {
        return empty(total_points);
    }

    let mut m = init.len();
    if points.len() < m {
        warn!("fit_em: {} points for {} components, reducing", points.len(), m);
        m = points.len();
    }
    let xs: Vec<Vector3<f64>> = points.iter().map(|p| p.coords).collect();

    let floor = cfg.variance_floor;
    let mut means: Vec<Vector3<f64>> = init.means[..m].iter().map(|p| p.coords).collect();
    let (mut covs, mut mix_weights) = match &init.covariances {
        Some(c) => {
            let covs: Vec<Matrix3<f64>> = c[..m].iter().map(|c| floor_covariance(c, floor)).collect();
            let w = match &init.weights {
                Some(w) => w[..m].to_vec(),
                None => vec![1.0; m],
            };
            (covs, w)
        }
        None => {
            let (covs, w) = nearest_mean_moments(points, &means, floor);
            (covs, init.weights.as_ref().map_or(w, |w| w[..m].to_vec()))
        }
    };
    let s: f64 = mix_weights.iter().sum();
    mix_weights.iter_mut().for_each(|w| *w /= s);

    let n = xs.len();
    let mut resp = vec![0.0; n * m];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        // E-step
        let ws: Vec<Option<Workspace>> = (0..m)
            .map(|j| (mix_weights[j] > 0.0).then(|| Workspace::new(mix_weights[j], &means[j], &covs[j])))
            .collect();
        let mut ll = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let row = &mut resp[i * m..(i + 1) * m];
            let mut max = f64::NEG_INFINITY;
            for (j, w) in ws.iter().enumerate() {
                row[j] = w.as_ref().map_or(f64::NEG_INFINITY, |w| w.log_density(x));
                max = max.max(row[j]);
            }
            let mut sum = 0.0;
            for r in row.iter_mut() {
                *r = (*r - max).exp();
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
            ll += point_weight(i) * (max + sum.ln());
        }
        if let Some(&prev) = trace.last() {
            if (ll - prev) / total_weight < cfg.tol {
                converged = true;
                trace.push(ll);
                break;
            }
        }
        trace.push(ll);
        if iterations == cfg.max_iters {
            break;
        }
        iterations += 1;

        // M-step
        for j in 0..m {
            let mut nj = 0.0;
            let mut sum = Vector3::zeros();
            for (i, x) in xs.iter().enumerate() {
                let r = point_weight(i) * resp[i * m + j];
                nj += r;
                sum += x * r;
            }
            if !(nj > total_weight * 1e-12) {
                mix_weights[j] = 0.0;
                continue;
            }
            let mean = sum / nj;
            let mut scatter = Matrix3::zeros();
            for (i, x) in xs.iter().enumerate() {
                let r = point_weight(i) * resp[i * m + j];
                if r > 0.0 {
                    let d = x - mean;
                    scatter += (d * d.transpose()) * r;
                }
            }
            means[j] = mean;
            covs[j] = floor_covariance(&(scatter / nj), floor);
            mix_weights[j] = nj / total_weight;
        }
    }

    debug!("fit_em: {m} components on {n} points, {iterations} iterations, converged {converged}");
    let keep: Vec<usize> = (0..m).filter(|&j| mix_weights[j] > 1e-12).collect();
    let kept_sum: f64 = keep.iter().map(|&j| mix_weights[j]).sum();
    let betas: Vec<f64> = keep.iter().map(|&j| mix_weights[j] / kept_sum).collect();
    let counts = apportion(total_points, &betas);
    let components = keep
        .iter()
        .zip(betas.iter().zip(counts))
        .map(|(&j, (&weight, point_count))| GaussianComponent {
            weight,
            mean: Point3::from(means[j]),
            covariance: covs[j],
            point_count,
        })
        .collect();

    EmFit {
        mixture: GaussianMixture {
            components,
            total_points,
        },
        log_likelihood: trace,
        iterations,
        converged,
    }
}

/// Covariance and relative size of the points nearest to each mean.
fn nearest_mean_moments(points: &[Point3], means: &[Vector3<f64>], floor: f64) -> (Vec<Matrix3<f64>>, Vec<f64>) {
    let all: Vec<usize> = (0..points.len()).collect();
    let pooled = floor_covariance(&sample_moments(points, &all).1, floor);
    let mut groups = vec![Vec::new(); means.len()];
    for (i, p) in points.iter().enumerate() {
        let nearest = (0..means.len())
            .min_by(|&a, &b| {
                (p.coords - means[a])
                    .norm_squared()
                    .total_cmp(&(p.coords - means[b]).norm_squared())
            })
            .unwrap();
        groups[nearest].push(i);
    }
    let covs = groups
        .iter()
        .map(|g| {
            if g.len() < 2 {
                pooled
            } else {
                floor_covariance(&sample_moments(points, g).1, floor)
            }
        })
        .collect();
    let weights = groups.iter().map(|g| g.len().max(1) as f64).collect();
    (covs, weights)
}
