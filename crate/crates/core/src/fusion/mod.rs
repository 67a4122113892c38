//! Bayesian grid fusion: per-radar likelihoods from Gaussian-mixture fits,
//! a random-walk motion prior built from the previous reconstructed scene,
//! cooperative (pooled-cloud) and federated (mixture-of-local-posteriors)
//! posteriors, threshold reconstruction and MAP target extraction.

mod estimate;
mod posterior;
mod prior;

pub use estimate::{extract_maxima, extract_targets, reconstruct_scene, ReconstructedScene, TargetEstimates};
pub use posterior::{
    alpha_weights, coop_posterior, coop_posterior_from_likelihood, federated_posterior, likelihood_from_cloud,
    local_posterior, pooled_likelihood, AlphaWeights, Likelihood, LocalPosterior, Posterior, PosteriorKind,
};
pub use prior::{motion_prior, random_walk_sigma, with_floor};

use crate::mixture::{EmConfig, GridSpec};

/// Parameters shared by every fusion step.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams {
    pub grid: GridSpec,
    pub em: EmConfig,
    /// Cap on mixture components per radar.
    pub m_max: usize,
}
