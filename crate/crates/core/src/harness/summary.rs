use std::collections::BTreeMap;

use super::config::Mode;
use super::metrics::{compute_mae, unresolved_by_position, unresolved_probability, Mae, Quantiles};
use super::record::EpochRecord;
use crate::error::{Error, Result};
use crate::sidelink::{ratio_to_f64, LinkStats};

/// Per-radar run metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarMetrics {
    pub radar: usize,
    pub epochs: u64,
    pub resolved_epochs: u64,
    pub mae: Option<Mae>,
    pub mae_by_landmark: BTreeMap<String, Mae>,
    pub p_u: Option<f64>,
    pub p_u_by_position: BTreeMap<String, f64>,
    /// Broadcast payload bits over the run.
    pub bits: u64,
    /// Broadcast payload rate, bit/s.
    pub rate_bps: f64,
    pub mean_cloud_points: Option<f64>,
    pub mean_components: Option<f64>,
    pub kl_fed: Option<Quantiles>,
    pub kl_local: Option<Quantiles>,
}

/// Metrics of one run. `observer` selects the headline radar.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub mode: Mode,
    pub seed: u64,
    pub observer: usize,
    pub radars: Vec<RadarMetrics>,
    /// `D_KL(global || federated)` pooled over radars.
    pub kl_fed_pooled: Option<Quantiles>,
}

impl MetricsRecord {
    pub fn headline(&self) -> &RadarMetrics {
        &self.radars[self.observer]
    }

    pub fn from_records(mode: Mode, seed: u64, observer: usize, records: &[EpochRecord], stats: &LinkStats) -> Self {
        let n_radars = stats.n_radars();
        let radars = (0..n_radars)
            .map(|k| {
                let (mae, mae_by_landmark) = compute_mae(records, k);
                let mean = |f: &dyn Fn(&EpochRecord) -> f64| {
                    (!records.is_empty()).then(|| records.iter().map(f).sum::<f64>() / records.len() as f64)
                };
                let kl = |f: &dyn Fn(&EpochRecord) -> Option<f64>| {
                    Quantiles::from_samples(&records.iter().filter_map(f).collect::<Vec<_>>())
                };
                RadarMetrics {
                    radar: k,
                    epochs: records.len() as u64,
                    resolved_epochs: records.iter().filter(|r| r.radars[k].resolved).count() as u64,
                    mae,
                    mae_by_landmark,
                    p_u: unresolved_probability(records, k),
                    p_u_by_position: unresolved_by_position(records, k),
                    bits: stats.sent_bits(k),
                    rate_bps: ratio_to_f64(stats.rate_bps(k)),
                    mean_cloud_points: mean(&|r| r.radars[k].cloud_points as f64),
                    mean_components: mean(&|r| r.radars[k].components as f64),
                    kl_fed: kl(&|r| r.radars[k].kl_fed),
                    kl_local: kl(&|r| r.radars[k].kl_local),
                }
            })
            .collect();
        let pooled: Vec<f64> = records
            .iter()
            .flat_map(|r| r.radars.iter().filter_map(|x| x.kl_fed))
            .collect();
        MetricsRecord {
            mode,
            seed,
            observer,
            radars,
            kl_fed_pooled: Quantiles::from_samples(&pooled),
        }
    }

    /// Long-format rows `(radar, metric, key, value)`. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn to_rows(&self) -> Vec<[String; 4]> {
        let mut rows = Vec::new();
        let mut push = |radar: &str, metric: &str, key: &str, value: String| {
            rows.push([radar.to_string(), metric.to_string(), key.to_string(), value]);
        };
        push("all", "mode", "", self.mode.name().to_string());
        push("all", "seed", "", self.seed.to_string());
        push("all", "observer", "", self.observer.to_string());
        push("all", "radars", "", self.radars.len().to_string());
        if let Some(q) = &self.kl_fed_pooled {
            quantile_rows(&mut push, "all", "kl_fed", q);
        }
        for m in &self.radars {
            let r = m.radar.to_string();
            push(&r, "epochs", "", m.epochs.to_string());
            push(&r, "resolved_epochs", "", m.resolved_epochs.to_string());
            let mut mae = |key: &str, v: &Mae| {
                push(&r, "mae_x", key, v.x.to_string());
                push(&r, "mae_y", key, v.y.to_string());
                push(&r, "mae_samples", key, v.samples.to_string());
            };
            if let Some(v) = &m.mae {
                mae("all", v);
            }
            for (k, v) in &m.mae_by_landmark {
                mae(k, v);
            }
            if let Some(p) = m.p_u {
                push(&r, "p_u", "all", p.to_string());
            }
            for (k, p) in &m.p_u_by_position {
                push(&r, "p_u", k, p.to_string());
            }
            push(&r, "bits", "", m.bits.to_string());
            push(&r, "rate_bps", "", m.rate_bps.to_string());
            if let Some(v) = m.mean_cloud_points {
                push(&r, "mean_cloud_points", "", v.to_string());
            }
            if let Some(v) = m.mean_components {
                push(&r, "mean_components", "", v.to_string());
            }
            if let Some(q) = &m.kl_fed {
                quantile_rows(&mut push, &r, "kl_fed", q);
            }
            if let Some(q) = &m.kl_local {
                quantile_rows(&mut push, &r, "kl_local", q);
            }
        }
        rows
    }

    pub fn from_rows(rows: &[[String; 4]]) -> Result<Self> {
        let bad = |msg: String| Error::Codec(format!("summary: {msg}"));
        let mut global: BTreeMap<(&str, &str), &str> = BTreeMap::new();
        let mut per: BTreeMap<usize, Vec<(&str, &str, &str)>> = BTreeMap::new();
        for [radar, metric, key, value] in rows {
            if radar == "all" {
                global.insert((metric.as_str(), key.as_str()), value.as_str());
            } else {
                let k: usize = radar.parse().map_err(|_| bad(format!("bad radar id {radar:?}")))?;
                per.entry(k).or_default().push((metric, key, value));
            }
        }
        let get = |metric: &str| -> Result<&str> {
            global
                .get(&(metric, ""))
                .copied()
                .ok_or_else(|| bad(format!("missing {metric}")))
        };
        let mode: Mode = get("mode")?.parse()?;
        let seed = parse(get("seed")?)?;
        let observer = parse(get("observer")?)?;
        let n: usize = parse(get("radars")?)?;
        let kl_fed_pooled = quantiles_from(
            global
                .iter()
                .filter(|((m, _), _)| *m == "kl_fed")
                .map(|((_, k), v)| (*k, *v)),
        )?;
        let mut radars = Vec::with_capacity(n);
        for k in 0..n {
            let entries = per.remove(&k).unwrap_or_default();
            let scalar = |metric: &str| entries.iter().find(|(m, _, _)| *m == metric).map(|e| e.2);
            let mut mae_parts: BTreeMap<&str, [Option<&str>; 3]> = BTreeMap::new();
            let mut p_u = None;
            let mut p_u_by_position = BTreeMap::new();
            for &(m, key, v) in &entries {
                match m {
                    "mae_x" => mae_parts.entry(key).or_default()[0] = Some(v),
                    "mae_y" => mae_parts.entry(key).or_default()[1] = Some(v),
                    "mae_samples" => mae_parts.entry(key).or_default()[2] = Some(v),
                    "p_u" if key == "all" => p_u = Some(parse(v)?),
                    "p_u" => {
                        p_u_by_position.insert(key.to_string(), parse(v)?);
                    }
                    _ => {}
                }
            }
            let mut mae = None;
            let mut mae_by_landmark = BTreeMap::new();
            for (key, parts) in mae_parts {
                let [Some(x), Some(y), Some(s)] = parts else {
                    return Err(bad(format!("incomplete MAE for radar {k}, key {key:?}")));
                };
                let v = Mae {
                    x: parse(x)?,
                    y: parse(y)?,
                    samples: parse(s)?,
                };
                if key == "all" {
                    mae = Some(v);
                } else {
                    mae_by_landmark.insert(key.to_string(), v);
                }
            }
            let req = |metric: &str| scalar(metric).ok_or_else(|| bad(format!("radar {k}: missing {metric}")));
            let opt = |metric: &str| scalar(metric).map(parse::<f64>).transpose();
            let kl = |metric: &str| {
                quantiles_from(
                    entries
                        .iter()
                        .filter(|(m, _, _)| *m == metric)
                        .map(|&(_, key, v)| (key, v)),
                )
            };
            radars.push(RadarMetrics {
                radar: k,
                epochs: parse(req("epochs")?)?,
                resolved_epochs: parse(req("resolved_epochs")?)?,
                mae,
                mae_by_landmark,
                p_u,
                p_u_by_position,
                bits: parse(req("bits")?)?,
                rate_bps: parse(req("rate_bps")?)?,
                mean_cloud_points: opt("mean_cloud_points")?,
                mean_components: opt("mean_components")?,
                kl_fed: kl("kl_fed")?,
                kl_local: kl("kl_local")?,
            });
        }
        Ok(MetricsRecord {
            mode,
            seed,
            observer,
            radars,
            kl_fed_pooled,
        })
    }
}

const DECILE_KEYS: [&str; 9] = ["q10", "q20", "q30", "q40", "median", "q60", "q70", "q80", "q90"];

fn quantile_rows(push: &mut impl FnMut(&str, &str, &str, String), radar: &str, metric: &str, q: &Quantiles) {
    push(radar, metric, "count", q.count.to_string());
    push(radar, metric, "mean", q.mean.to_string());
    for (key, v) in DECILE_KEYS.iter().zip(q.deciles) {
        push(radar, metric, key, v.to_string());
    }
}

fn quantiles_from<'a>(entries: impl Iterator<Item = (&'a str, &'a str)>) -> Result<Option<Quantiles>> {
    let entries: BTreeMap<&str, &str> = entries.collect();
    if entries.is_empty() {
        return Ok(None);
    }
    let get = |k: &str| {
        entries
            .get(k)
            .copied()
            .ok_or_else(|| Error::Codec(format!("summary: quantile summary lacks {k}")))
    };
    let mut deciles = [0.0; 9];
    for (d, key) in deciles.iter_mut().zip(DECILE_KEYS) {
        *d = parse(get(key)?)?;
    }
    Ok(Some(Quantiles {
        count: parse(get("count")?)?,
        mean: parse(get("mean")?)?,
        deciles,
    }))
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Codec(format!("summary: cannot parse {s:?}")))
}
