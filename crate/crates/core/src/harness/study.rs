use log::info;

use super::config::ExperimentConfig;
use super::metrics::Quantiles;
use super::record::EpochRecord;
use super::runner::run_experiment;
use super::summary::MetricsRecord;
use crate::error::Result;

/// Metrics of one configuration over many seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub runs: Vec<MetricsRecord>,
}

impl SweepResult {
    fn mean_of(&self, f: impl Fn(&MetricsRecord) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.runs.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean over seeds of the headline radar's MAE in x; seeds without a
    /// resolved epoch are skipped.
    pub fn mean_mae_x(&self) -> Option<f64> {
        self.mean_of(|m| m.headline().mae.map(|e| e.x))
    }

    pub fn mean_mae_y(&self) -> Option<f64> {
        self.mean_of(|m| m.headline().mae.map(|e| e.y))
    }

    pub fn mean_p_u(&self) -> Option<f64> {
        self.mean_of(|m| m.headline().p_u)
    }

    pub fn mean_rate_bps(&self) -> Option<f64> {
        self.mean_of(|m| Some(m.headline().rate_bps))
    }

    pub fn mean_cloud_points(&self) -> Option<f64> {
        self.mean_of(|m| m.headline().mean_cloud_points)
    }

    /// Seeds that produced no MAE.
    pub fn unresolved_runs(&self) -> usize {
        self.runs.iter().filter(|m| m.headline().mae.is_none()).count()
    }
}

/// Run `config` once per seed. Runs are independent; the result lists them
/// in seed order.
pub fn sweep(config: &ExperimentConfig, seeds: impl IntoIterator<Item = u64>) -> Result<SweepResult> {
    let mut runs = Vec::new();
    for seed in seeds {
        let mut cfg = config.clone();
        cfg.seed = seed;
        runs.push(run_experiment(&cfg)?.metrics);
    }
    info!("{} sweep over {} seeds done", config.mode, runs.len());
    Ok(SweepResult { runs })
}

/// Divergence distributions of a federation run with KL sampling enabled.
#[derive(Clone, Debug, PartialEq)]
pub struct KlStudy {
    /// `D_KL(global || federated)` over every radar and epoch.
    pub pooled_fed: Option<Quantiles>,
    /// Per radar: `D_KL(global || federated)` and `D_KL(global || local)`.
    pub per_radar: Vec<(Option<Quantiles>, Option<Quantiles>)>,
}

impl KlStudy {
    /// The pooled federated median is below every radar's local median.
    pub fn federation_closer(&self) -> bool {
        let Some(fed) = &self.pooled_fed else {
            return false;
        };
        self.per_radar
            .iter()
            .all(|(_, local)| local.as_ref().is_some_and(|l| fed.median() < l.median()))
    }
}

pub fn kl_study(records: &[EpochRecord]) -> KlStudy {
    let n = records.first().map_or(0, |r| r.radars.len());
    let pooled: Vec<f64> = records
        .iter()
        .flat_map(|r| r.radars.iter().filter_map(|x| x.kl_fed))
        .collect();
    let per_radar = (0..n)
        .map(|k| {
            let fed: Vec<f64> = records.iter().filter_map(|r| r.radars[k].kl_fed).collect();
            let local: Vec<f64> = records.iter().filter_map(|r| r.radars[k].kl_local).collect();
            (Quantiles::from_samples(&fed), Quantiles::from_samples(&local))
        })
        .collect();
    KlStudy {
        pooled_fed: Quantiles::from_samples(&pooled),
        per_radar,
    }
}
