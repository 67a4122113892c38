use std::collections::BTreeMap;

use super::record::EpochRecord;
use crate::Point2;

/// At most this many estimates take part in the assignment search.
const MAX_ASSIGNED_ESTIMATES: usize = 8;

/// Assignment of estimates to truths minimizing the summed Euclidean
/// distance. `None` when there are fewer estimates than truths.
pub fn associate(estimates: &[Point2], truth: &[Point2]) -> Option<Vec<usize>> {
    if estimates.len() < truth.len() {
        return None;
    }
    let est = &estimates[..estimates.len().min(MAX_ASSIGNED_ESTIMATES.max(truth.len()))];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut current = Vec::with_capacity(truth.len());
    let mut used = vec![false; est.len()];
    search(est, truth, &mut current, &mut used, 0.0, &mut best);
    best.map(|(_, a)| a)
}

fn search(
    est: &[Point2],
    truth: &[Point2],
    current: &mut Vec<usize>,
    used: &mut [bool],
    cost: f64,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    if let Some((b, _)) = best {
        if cost >= *b {
            return;
        }
    }
    let i = current.len();
    if i == truth.len() {
        *best = Some((cost, current.clone()));
        return;
    }
    for j in 0..est.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        current.push(j);
        search(est, truth, current, used, cost + (est[j] - truth[i]).norm(), best);
        current.pop();
        used[j] = false;
    }
}

/// Mean absolute error per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mae {
    pub x: f64,
    pub y: f64,
    /// Target-epochs averaged.
    pub samples: u64,
}

#[derive(Default)]
struct MaeAcc {
    x: f64,
    y: f64,
    n: u64,
}

impl MaeAcc {
    fn add(&mut self, est: Point2, truth: Point2) {
        self.x += (est.x - truth.x).abs();
        self.y += (est.y - truth.y).abs();
        self.n += 1;
    }

    fn finish(&self) -> Option<Mae> {
        (self.n > 0).then(|| Mae {
            x: self.x / self.n as f64,
            y: self.y / self.n as f64,
            samples: self.n,
        })
    }
}

/// MAE of `radar` over resolved epochs, overall and per nearest landmark.
/// Absent when no epoch resolved.
pub fn compute_mae(records: &[EpochRecord], radar: usize) -> (Option<Mae>, BTreeMap<String, Mae>) {
    let mut all = MaeAcc::default();
    let mut by: BTreeMap<String, MaeAcc> = BTreeMap::new();
    for rec in records {
        let r = &rec.radars[radar];
        if !r.resolved {
            continue;
        }
        for (truth, est) in rec.truth.iter().zip(&r.assigned) {
            let est = est.expect("resolved epoch carries an assignment");
            all.add(est, truth.position);
            by.entry(truth.landmark.clone()).or_default().add(est, truth.position);
        }
    }
    (
        all.finish(),
        by.into_iter().filter_map(|(k, a)| a.finish().map(|m| (k, m))).collect(),
    )
}

/// Fraction of epochs `radar` left unresolved; absent for an empty run.
pub fn unresolved_probability(records: &[EpochRecord], radar: usize) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let unresolved = records.iter().filter(|r| !r.radars[radar].resolved).count();
    Some(unresolved as f64 / records.len() as f64)
}

/// [`unresolved_probability`] split by the targets' joint landmark position.
pub fn unresolved_by_position(records: &[EpochRecord], radar: usize) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for rec in records {
        let e = counts.entry(rec.position_key()).or_default();
        e.1 += 1;
        if !rec.radars[radar].resolved {
            e.0 += 1;
        }
    }
    counts.into_iter().map(|(k, (u, n))| (k, u as f64 / n as f64)).collect()
}

/// Empirical distribution summary: count, mean and the nine deciles
/// (linear interpolation between order statistics).
#[derive(Clone, Debug, PartialEq)]
pub struct Quantiles {
    pub count: u64,
    pub mean: f64,
    pub deciles: [f64; 9],
}

impl Quantiles {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let mut deciles = [0.0; 9];
        for (i, d) in deciles.iter_mut().enumerate() {
            *d = quantile_sorted(&s, (i + 1) as f64 / 10.0);
        }
        Some(Self {
            count: s.len() as u64,
            mean: s.iter().sum::<f64>() / s.len() as f64,
            deciles,
        })
    }

    pub fn median(&self) -> f64 {
        self.deciles[4]
    }
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
