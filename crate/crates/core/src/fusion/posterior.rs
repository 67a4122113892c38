use log::debug;

use super::FusionParams;
use crate::error::Result;
use crate::mixture::{
    choose_components, eval_on_grid, fit_em, DensityGrid, EmInit, GaussianComponent, GaussianMixture,
};
use crate::sensor::{ClusterResult, Frame, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosteriorKind {
    Local,
    Global,
    Federated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub grid: DensityGrid,
    /// Parametric summary: the transmitted `P_k` for local posteriors, the
    /// weighted union of received mixtures for federated ones.
    pub mixture: GaussianMixture,
    pub epoch: u64,
    pub kind: PosteriorKind,
}

/// Likelihood of one (or a pooled set of) preprocessed clouds.
#[derive(Clone, Debug, PartialEq)]
pub struct Likelihood {
    pub grid: DensityGrid,
    pub mixture: GaussianMixture,
    /// Whether the clouds carried any points at all.
    pub informative: bool,
}

fn em_init(cloud: &PointCloud, clusters: &ClusterResult, m_max: usize) -> EmInit {
    let m = choose_components(clusters, m_max);
    EmInit::from_clusters(&cloud.points, clusters, m)
}

/// Fit a mixture to one global-frame cloud with one component per cluster
/// (capped at `m_max`) and evaluate it on the grid. An empty cloud gives
/// the uniform grid and an empty mixture.
pub fn likelihood_from_cloud(
    cloud: &PointCloud,
    clusters: &ClusterResult,
    params: &FusionParams,
) -> Result<Likelihood> {
    pooled_likelihood(&[(cloud, clusters)], params)
}

/// Likelihood of the union of several clouds. The component count is the
/// sum of the per-cloud counts and EM starts from every cloud's clusters.
pub fn pooled_likelihood(ensemble: &[(&PointCloud, &ClusterResult)], params: &FusionParams) -> Result<Likelihood> {
    for (cloud, _) in ensemble {
        cloud.expect_frame(Frame::Global)?;
    }
    let total: usize = ensemble.iter().map(|(c, _)| c.len()).sum();
    let inits: Vec<(EmInit, f64)> = ensemble
        .iter()
        .filter(|(c, _)| !c.is_empty())
        .map(|(c, cl)| (em_init(c, cl, params.m_max), c.len() as f64))
        .filter(|(init, _)| !init.is_empty())
        .collect();
    if total == 0 || inits.is_empty() {
        return Ok(Likelihood {
            grid: DensityGrid::uniform(params.grid),
            mixture: GaussianMixture {
                components: Vec::new(),
                total_points: total as u64,
            },
            informative: total > 0,
        });
    }
    let init = if inits.len() == 1 {
        inits.into_iter().next().unwrap().0
    } else {
        EmInit::concat(&inits)
    };
    let points: Vec<_> = if ensemble.len() == 1 {
        ensemble[0].0.points.clone()
    } else {
        ensemble.iter().flat_map(|(c, _)| c.points.iter().copied()).collect()
    };
    let fit = fit_em(&points, None, &init, &params.em, total as u64);
    Ok(Likelihood {
        grid: eval_on_grid(&fit.mixture, &params.grid),
        mixture: fit.mixture,
        informative: true,
    })
}

/// Normalized `likelihood * prior`. If the product underflows everywhere
/// the evidence wins and the likelihood is returned.
fn bayes_update(likelihood: &DensityGrid, prior: &DensityGrid) -> Result<DensityGrid> {
    Ok(match likelihood.product(prior)? {
        Some(g) => g,
        None => {
            debug!("posterior vanished under the prior; falling back to the likelihood");
            likelihood.clone()
        }
    })
}

/// Global posterior from the cloud ensemble received by one radar.
/// Clouds are pooled in the given order.
pub fn coop_posterior(
    ensemble: &[(&PointCloud, &ClusterResult)],
    prior: &DensityGrid,
    params: &FusionParams,
    epoch: u64,
) -> Result<Posterior> {
    let lik = pooled_likelihood(ensemble, params)?;
    coop_posterior_from_likelihood(&lik, prior, epoch)
}

/// [`coop_posterior`] with a precomputed pooled likelihood.
pub fn coop_posterior_from_likelihood(lik: &Likelihood, prior: &DensityGrid, epoch: u64) -> Result<Posterior> {
    let grid = if lik.mixture.is_empty() {
        lik.grid.check_compatible(prior)?;
        prior.clone()
    } else {
        bayes_update(&lik.grid, prior)?
    };
    Ok(Posterior {
        grid,
        mixture: lik.mixture.clone(),
        epoch,
        kind: PosteriorKind::Global,
    })
}

/// A radar's own posterior plus the likelihood it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalPosterior {
    pub posterior: Posterior,
    pub likelihood: Likelihood,
}

/// Local posterior of one radar. The transmitted mixture `P_k` is refit on
/// the radar's own points weighted by the prior at each point, so that it
/// summarizes the posterior rather than the raw likelihood.
pub fn local_posterior(
    cloud: &PointCloud,
    clusters: &ClusterResult,
    prior: &DensityGrid,
    params: &FusionParams,
    epoch: u64,
) -> Result<LocalPosterior> {
    let likelihood = likelihood_from_cloud(cloud, clusters, params)?;
    if likelihood.mixture.is_empty() {
        likelihood.grid.check_compatible(prior)?;
        return Ok(LocalPosterior {
            posterior: Posterior {
                grid: prior.clone(),
                mixture: GaussianMixture {
                    components: Vec::new(),
                    total_points: cloud.len() as u64,
                },
                epoch,
                kind: PosteriorKind::Local,
            },
            likelihood,
        });
    }
    let grid = bayes_update(&likelihood.grid, prior)?;
    let mixture = posterior_mixture(cloud, &likelihood.mixture, prior, params);
    Ok(LocalPosterior {
        posterior: Posterior {
            grid,
            mixture,
            epoch,
            kind: PosteriorKind::Local,
        },
        likelihood,
    })
}

fn posterior_mixture(
    cloud: &PointCloud,
    lik_mixture: &GaussianMixture,
    prior: &DensityGrid,
    params: &FusionParams,
) -> GaussianMixture {
    if prior.is_flat() {
        return lik_mixture.clone();
    }
    let weights: Vec<f64> = cloud
        .points
        .iter()
        .map(|p| prior.value_at(p.x, p.y).unwrap_or(0.0))
        .collect();
    let max = weights.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        debug!("prior vanishes on every point; transmitting the likelihood mixture");
        return lik_mixture.clone();
    }
    let weights: Vec<f64> = weights.iter().map(|w| w / max).collect();
    let init = EmInit {
        means: lik_mixture.components.iter().map(|c| c.mean).collect(),
        covariances: Some(lik_mixture.components.iter().map(|c| c.covariance).collect()),
        weights: Some(lik_mixture.components.iter().map(|c| c.weight).collect()),
    };
    fit_em(&cloud.points, Some(&weights), &init, &params.em, cloud.len() as u64).mixture
}

/// Point-count proportional combination weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaWeights {
    pub weights: Vec<f64>,
    /// Every count was zero and uniform weights were substituted.
    pub degenerate: bool,
}

/// `alpha_k = Q_k / sum(Q)`, with the last weight closing the sum to one.
pub fn alpha_weights(counts: &[u64]) -> AlphaWeights {
    assert!(!counts.is_empty(), "alpha_weights needs at least one count");
    let total: u64 = counts.iter().sum();
    let n = counts.len();
    if total == 0 {
        let mut weights = vec![1.0 / n as f64; n];
        let head: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - head;
        return AlphaWeights {
            weights,
            degenerate: true,
        };
    }
    let mut weights: Vec<f64> = counts.iter().map(|&q| q as f64 / total as f64).collect();
    let head: f64 = weights[..n - 1].iter().sum();
    weights[n - 1] = (1.0 - head).max(0.0);
    AlphaWeights {
        weights,
        degenerate: false,
    }
}

/// Federated posterior at one radar: the `alpha`-weighted mixture of its
/// own local posterior (known exactly on the grid) and the received
/// mixtures `P_h` evaluated on the grid. `weights[0]` belongs to `own`,
/// `weights[1..]` to `received` in order.
pub fn federated_posterior(
    own: &Posterior,
    received: &[&GaussianMixture],
    weights: &[f64],
    params: &FusionParams,
    epoch: u64,
) -> Result<Posterior> {
    assert_eq!(weights.len(), received.len() + 1, "one weight per local posterior");
    own.grid.check_compatible(&DensityGrid::uniform(params.grid))?;
    let mut components = Vec::new();
    let mut total_points = own.mixture.total_points;
    for (mix, &alpha) in std::iter::once(&own.mixture)
        .chain(received.iter().copied())
        .zip(weights)
    {
        components.extend(mix.components.iter().map(|c| GaussianComponent {
            weight: c.weight * alpha,
            ..c.clone()
        }));
    }
    total_points += received.iter().map(|m| m.total_points).sum::<u64>();
    let mixture = GaussianMixture {
        components,
        total_points,
    };

    if own.mixture.is_empty() && received.iter().all(|m| m.is_empty()) {
        return Ok(Posterior {
            grid: DensityGrid::uniform(params.grid),
            mixture,
            epoch,
            kind: PosteriorKind::Federated,
        });
    }

    let evaluated: Vec<DensityGrid> = received
        .iter()
        .zip(&weights[1..])
        .map(|(m, &a)| {
            if a > 0.0 {
                eval_on_grid(m, &params.grid)
            } else {
                DensityGrid::uniform(params.grid)
            }
        })
        .collect();
    let mut parts: Vec<(f64, &DensityGrid)> = vec![(weights[0], &own.grid)];
    parts.extend(weights[1..].iter().copied().zip(evaluated.iter()));
    let grid = DensityGrid::combine(params.grid, &parts)?;
    Ok(Posterior {
        grid,
        mixture,
        epoch,
        kind: PosteriorKind::Federated,
    })
}
