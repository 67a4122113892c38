use std::collections::HashMap;

use crate::Point3;

/// Density clustering labels. `None` marks an outlier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterResult {
    pub labels: Vec<Option<usize>>,
    pub n_clusters: usize,
}

impl ClusterResult {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for c in self.labels.iter().flatten() {
            sizes[*c] += 1;
        }
        sizes
    }

    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Indices of the points in cluster `c`, in input order.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(c))
            .map(|(i, _)| i)
            .collect()
    }
}

/// DBSCAN with Euclidean 3D distance. A point is core when at least
/// `min_pts` points (itself included) lie within `eps`. Core points that
/// are mutually reachable form a cluster; clusters are numbered by their
/// lowest-index core point. A non-core point joins the cluster of its
/// lowest-index core neighbor, or is an outlier if it has none.
pub fn dbscan(points: &[Point3], eps: f64, min_pts: usize) -> ClusterResult {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    let neighbors = neighbor_lists(points, eps);
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut n_clusters = 0;
    let mut stack = Vec::new();
    for seed in 0..n {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        let c = n_clusters;
        n_clusters += 1;
        labels[seed] = Some(c);
        stack.push(seed);
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if core[j] && labels[j].is_none() {
                    labels[j] = Some(c);
                    stack.push(j);
                }
            }
        }
    }

    for i in 0..n {
        if core[i] {
            continue;
        }
        labels[i] = neighbors[i]
            .iter()
            .copied()
            .filter(|&j| core[j])
            .min()
            .and_then(|j| labels[j]);
    }

    ClusterResult { labels, n_clusters }
}

/// Points within `eps` of each point (itself included), via a uniform hash grid.
fn neighbor_lists(points: &[Point3], eps: f64) -> Vec<Vec<usize>> {
    let key = |p: &Point3| {
        (
            (p.x / eps).floor() as i64,
            (p.y / eps).floor() as i64,
            (p.z / eps).floor() as i64,
        )
    };
    let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let eps2 = eps * eps;
    let mut out = vec![Vec::new(); points.len()];
    let mut candidates = Vec::new();
    for (&(cx, cy, cz), members) in &cells {
        candidates.clear();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        candidates.extend_from_slice(bucket);
                    }
                }
            }
        }
        candidates.sort_unstable();
        for &i in members {
            let p = points[i];
            out[i] = candidates
                .iter()
                .copied()
                .filter(|&j| (points[j] - p).norm_squared() <= eps2)
                .collect();
        }
    }
    out
}
