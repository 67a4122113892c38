use std::collections::HashMap;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Mode};
use super::metrics::associate;
use super::record::{EpochRecord, RadarEpoch, TruthState};
use super::summary::MetricsRecord;
use crate::error::{Error, Result};
use crate::fusion::{
    alpha_weights, coop_posterior_from_likelihood, extract_targets, federated_posterior, local_posterior, motion_prior,
    pooled_likelihood, reconstruct_scene, with_floor, FusionParams, Likelihood, Posterior,
};
use crate::mixture::{kl_divergence, DensityGrid, GaussianMixture};
use crate::scene::{advance_scene, Scene, Target};
use crate::sensor::{dbscan, observe, preprocess, ClusterResult, PointCloud, Preprocessed};
use crate::sidelink::{
    decode_coop, decode_fed, deliver, encode_coop, encode_fed, Delivery, LinkStats, Message, MessageBuffer,
    ReplayWriter,
};
use crate::Point2;

/// Optional artifacts written while a run progresses.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Dump every radar's posterior grid each `n` epochs into the directory.
    pub grid_dump: Option<(PathBuf, u64)>,
    /// Log every broadcast message as JSON lines.
    pub replay: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<EpochRecord>,
    pub metrics: MetricsRecord,
    pub stats: LinkStats,
}

/// Independent random stream for one purpose of one run.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_with(config, &RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, options: &RunOptions) -> Result<RunOutput> {
    config.validate()?;
    let mut sim = Simulation::new(config, options)?;
    let mut records = Vec::with_capacity(config.n_epochs as usize);
    for t in 0..config.n_epochs {
        records.push(sim.step(t)?);
    }
    if let Some(w) = sim.replay.take() {
        w.finish()?;
    }
    let metrics = MetricsRecord::from_records(config.mode, config.seed, config.observer, &records, &sim.stats);
    info!(
        "{} run, seed {}: {} epochs, P_u {:?} at radar {}",
        config.mode,
        config.seed,
        records.len(),
        metrics.headline().p_u,
        config.observer
    );
    Ok(RunOutput {
        records,
        metrics,
        stats: sim.stats,
    })
}

struct Simulation<'a> {
    cfg: &'a ExperimentConfig,
    params: FusionParams,
    targets: Vec<Target>,
    poses: Vec<crate::sensor::RadarPose>,
    models: Vec<crate::sensor::RadarModel>,
    topology: crate::sidelink::Topology,
    scene_rng: ChaCha8Rng,
    radar_rngs: Vec<ChaCha8Rng>,
    link_rng: ChaCha8Rng,
    scene: Option<Scene>,
    priors: Vec<DensityGrid>,
    buffer: MessageBuffer,
    stats: LinkStats,
    speed: f64,
    replay: Option<ReplayWriter>,
    grid_dump: Option<(PathBuf, u64)>,
}

impl<'a> Simulation<'a> {
    fn new(cfg: &'a ExperimentConfig, options: &RunOptions) -> Result<Self> {
        let n = cfg.n_radars();
        let params = cfg.fusion_params()?;
        let max_lag = (0..n).map(|h| cfg.clock.lag_epochs(h, cfg.dt)).max().unwrap_or(0);
        if let Some((dir, every)) = &options.grid_dump {
            if *every == 0 {
                return Err(Error::config("grid dump interval must be >= 1"));
            }
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Self {
            cfg,
            targets: cfg.targets()?,
            poses: cfg.poses(),
            models: (0..n).map(|k| cfg.radar_model(k)).collect(),
            topology: cfg.topology()?,
            scene_rng: stream(cfg.seed, 0),
            radar_rngs: (0..n).map(|k| stream(cfg.seed, 1 + k as u64)).collect(),
            link_rng: stream(cfg.seed, 1 + n as u64),
            scene: None,
            priors: vec![DensityGrid::uniform(params.grid); n],
            buffer: MessageBuffer::new(n, max_lag),
            stats: LinkStats::new(n, cfg.dt)?,
            speed: cfg.prior_speed(),
            replay: options.replay.as_deref().map(ReplayWriter::create).transpose()?,
            grid_dump: options.grid_dump.clone(),
            params,
        })
    }

    fn step(&mut self, t: u64) -> Result<EpochRecord> {
        let scene = match &self.scene {
            None => Scene::initial(&self.targets, &mut self.scene_rng),
            Some(prev) => advance_scene(prev, &self.targets, self.cfg.dt, &mut self.scene_rng),
        };
        let n = self.cfg.n_radars();
        let mut raw_counts = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        for k in 0..n {
            let raw = observe(&scene, k, &self.poses[k], &self.models[k], &mut self.radar_rngs[k]);
            raw_counts.push(raw.len());
            pre.push(preprocess(
                &raw,
                &self.poses[k],
                self.cfg.dbscan.eps,
                self.cfg.dbscan.min_pts,
            )?);
        }

        let bits_before: Vec<u64> = (0..n).map(|k| self.stats.sent_bits(k)).collect();
        let fused = match self.cfg.mode {
            Mode::Isolated => self.isolated(&pre, t)?,
            Mode::Cooperation => self.cooperation(&pre, t)?,
            Mode::Federation => self.federation(&pre, t)?,
        };
        self.stats.tick();

        let truth = self.truth(&scene);
        let truth_xy: Vec<Point2> = truth.iter().map(|s| s.position).collect();
        let mut radars = Vec::with_capacity(n);
        for (k, f) in fused.into_iter().enumerate() {
            let recon = reconstruct_scene(&f.posterior, self.cfg.tau);
            let estimates = extract_targets(&f.posterior, self.cfg.tau, self.cfg.min_separation).positions;
            let prior = motion_prior(
                &recon,
                self.speed,
                self.cfg.dt,
                self.cfg.prior.sigma_floor,
                &self.params.grid,
            );
            self.priors[k] = with_floor(&prior, self.cfg.prior.floor);
            if let Some((dir, every)) = &self.grid_dump {
                if t.is_multiple_of(*every) {
                    f.posterior.grid.write_csv(&grid_path(dir, t, k))?;
                }
            }
            let assignment = associate(&estimates, &truth_xy);
            let assigned = match &assignment {
                Some(a) => a.iter().map(|&j| Some(estimates[j])).collect(),
                None => vec![None; truth.len()],
            };
            radars.push(RadarEpoch {
                radar: k,
                resolved: assignment.is_some(),
                estimates,
                assigned,
                raw_points: raw_counts[k],
                cloud_points: pre[k].cloud.len(),
                components: f.posterior.mixture.len(),
                bits_sent: self.stats.sent_bits(k) - bits_before[k],
                kl_fed: f.kl_fed,
                kl_local: f.kl_local,
            });
        }
        debug!(
            "epoch {t}: resolved {:?}",
            radars.iter().map(|r| r.resolved).collect::<Vec<_>>()
        );
        self.scene = Some(scene);
        Ok(EpochRecord {
            epoch: t,
            truth,
            radars,
        })
    }

    fn truth(&self, scene: &Scene) -> Vec<TruthState> {
        scene
            .targets
            .iter()
            .map(|st| {
                let target = self.targets.iter().find(|t| t.spec.id == st.id).expect("known target");
                let landmark = target
                    .path
                    .vertices()
                    .iter()
                    .zip(target.path.labels())
                    .min_by(|a, b| (a.0 - st.center).norm().total_cmp(&(b.0 - st.center).norm()))
                    .map(|(_, l)| l.clone())
                    .unwrap_or_default();
                TruthState {
                    id: st.id,
                    position: st.center,
                    landmark,
                }
            })
            .collect()
    }

    fn isolated(&mut self, pre: &[Preprocessed], t: u64) -> Result<Vec<Fused>> {
        pre.iter()
            .enumerate()
            .map(|(k, p)| {
                let local = local_posterior(&p.cloud, &p.clusters, &self.priors[k], &self.params, t)?;
                Ok(Fused::plain(local.posterior))
            })
            .collect()
    }

    fn broadcast(&mut self, msg: Message) -> Result<()> {
        self.stats.account(&msg);
        if let Some(w) = &mut self.replay {
            let bytes = w.write(&msg)?;
            self.stats.account_wire(msg.sender(), bytes);
        }
        self.buffer.push(msg);
        Ok(())
    }

    fn exchange(&mut self, t: u64) -> Vec<Vec<Delivery>> {
        let inboxes = deliver(
            &self.topology,
            &self.buffer,
            &self.cfg.clock,
            t,
            self.cfg.dt,
            self.speed,
            &mut self.link_rng,
        );
        for (k, inbox) in inboxes.iter().enumerate() {
            for d in inbox {
                self.stats.account_delivery(k, &d.message);
            }
        }
        inboxes
    }

    fn cooperation(&mut self, pre: &[Preprocessed], t: u64) -> Result<Vec<Fused>> {
        for p in pre {
            self.broadcast(Message::Coop(encode_coop(&p.cloud)?))?;
        }
        let inboxes = self.exchange(t);
        let exact = self.cfg.clock.jitter_std == 0.0;
        let mut received: HashMap<(usize, u64), (PointCloud, ClusterResult)> = HashMap::new();
        let mut cache = LikelihoodCache::default();
        let mut out = Vec::with_capacity(pre.len());
        for (k, inbox) in inboxes.iter().enumerate() {
            let mut decoded: Vec<(usize, u64, PointCloud, ClusterResult)> = Vec::with_capacity(inbox.len());
            for d in inbox {
                let Message::Coop(m) = &d.message else {
                    return Err(Error::Codec("federation payload on a cooperation link".into()));
                };
                let key = (m.sender, m.epoch);
                let (cloud, clusters) = match received.get(&key).filter(|_| exact) {
                    Some(c) => c.clone(),
                    None => {
                        let cloud = decode_coop(m);
                        let clusters = dbscan(&cloud.points, self.cfg.dbscan.eps, self.cfg.dbscan.min_pts);
                        if exact {
                            received.insert(key, (cloud.clone(), clusters.clone()));
                        }
                        (cloud, clusters)
                    }
                };
                decoded.push((m.sender, m.epoch, cloud, clusters));
            }
            let mut ensemble: Vec<(usize, u64, &PointCloud, &ClusterResult)> =
                decoded.iter().map(|(s, e, c, l)| (*s, *e, c, l)).collect();
            ensemble.push((k, t, &pre[k].cloud, &pre[k].clusters));
            ensemble.sort_by_key(|e| e.0);
            let lik = cache.get(exact, &ensemble, &self.params)?;
            out.push(Fused::plain(coop_posterior_from_likelihood(&lik, &self.priors[k], t)?));
        }
        Ok(out)
    }

    fn federation(&mut self, pre: &[Preprocessed], t: u64) -> Result<Vec<Fused>> {
        let locals = pre
            .iter()
            .enumerate()
            .map(|(k, p)| local_posterior(&p.cloud, &p.clusters, &self.priors[k], &self.params, t))
            .collect::<Result<Vec<_>>>()?;
        for (k, l) in locals.iter().enumerate() {
            self.broadcast(Message::Fed(encode_fed(&l.posterior.mixture, k, t)?))?;
        }
        let inboxes = self.exchange(t);
        let mut cache = LikelihoodCache::default();
        let mut out = Vec::with_capacity(pre.len());
        for (k, inbox) in inboxes.iter().enumerate() {
            let mut mixtures: Vec<GaussianMixture> = Vec::with_capacity(inbox.len());
            for d in inbox {
                let Message::Fed(m) = &d.message else {
                    return Err(Error::Codec("cooperation payload on a federation link".into()));
                };
                mixtures.push(decode_fed(m)?);
            }
            let own = &locals[k].posterior;
            let counts: Vec<u64> = std::iter::once(own.mixture.total_points)
                .chain(mixtures.iter().map(|m| m.total_points))
                .collect();
            let alpha = alpha_weights(&counts);
            if alpha.degenerate {
                debug!("radar {k}, epoch {t}: no points anywhere, uniform federation weights");
            }
            let refs: Vec<&GaussianMixture> = mixtures.iter().collect();
            let fed = federated_posterior(own, &refs, &alpha.weights, &self.params, t)?;

            let (kl_fed, kl_local) = if self.cfg.kl.enabled {
                // reference: what cooperation would give from the same epoch's clouds
                let mut senders: Vec<usize> = self.topology.neighbors(k).to_vec();
                senders.push(k);
                senders.sort_unstable();
                let ensemble: Vec<(usize, u64, &PointCloud, &ClusterResult)> = senders
                    .iter()
                    .map(|&h| (h, t, &pre[h].cloud, &pre[h].clusters))
                    .collect();
                let lik = cache.get(true, &ensemble, &self.params)?;
                let global = coop_posterior_from_likelihood(&lik, &self.priors[k], t)?;
                (
                    Some(kl_divergence(&global.grid, &fed.grid, self.cfg.kl.floor)?),
                    Some(kl_divergence(&global.grid, &own.grid, self.cfg.kl.floor)?),
                )
            } else {
                (None, None)
            };
            out.push(Fused {
                posterior: fed,
                kl_fed,
                kl_local,
            });
        }
        Ok(out)
    }
}

struct Fused {
    posterior: Posterior,
    kl_fed: Option<f64>,
    kl_local: Option<f64>,
}

impl Fused {
    fn plain(posterior: Posterior) -> Self {
        Self {
            posterior,
            kl_fed: None,
            kl_local: None,
        }
    }
}

/// Pooled likelihoods of one epoch keyed by the `(sender, epoch)` list of
/// the ensemble, so radars receiving the same clouds fit EM once.
#[derive(Default)]
struct LikelihoodCache {
    entries: HashMap<Vec<(usize, u64)>, std::rc::Rc<Likelihood>>,
}

impl LikelihoodCache {
    fn get(
        &mut self,
        cacheable: bool,
        ensemble: &[(usize, u64, &PointCloud, &ClusterResult)],
        params: &FusionParams,
    ) -> Result<std::rc::Rc<Likelihood>> {
        let key: Vec<(usize, u64)> = ensemble.iter().map(|e| (e.0, e.1)).collect();
        if cacheable {
            if let Some(l) = self.entries.get(&key) {
                return Ok(l.clone());
            }
        }
        let clouds: Vec<(&PointCloud, &ClusterResult)> = ensemble.iter().map(|e| (e.2, e.3)).collect();
        let lik = std::rc::Rc::new(pooled_likelihood(&clouds, params)?);
        if cacheable {
            self.entries.insert(key, lik.clone());
        }
        Ok(lik)
    }
}

pub fn grid_path(dir: &Path, epoch: u64, radar: usize) -> PathBuf {
    dir.join(format!("posterior_e{epoch:06}_r{radar}.csv"))
}
