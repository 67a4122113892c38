use log::debug;

use super::Posterior;
use crate::mixture::DensityGrid;
use crate::Point2;

/// Cells whose peak-normalized posterior exceeds `tau`, at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructedScene {
    pub points: Vec<Point2>,
    pub tau: f64,
    pub epoch: u64,
}

impl ReconstructedScene {
    pub fn empty(tau: f64, epoch: u64) -> Self {
        ReconstructedScene {
            points: Vec::new(),
            tau,
            epoch,
        }
    }
}

/// MAP target positions, ordered by descending posterior value.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetEstimates {
    pub positions: Vec<Point2>,
    pub epoch: u64,
}

fn support(grid: &DensityGrid, tau: f64) -> Vec<bool> {
    let max = grid.max();
    if !(max > 0.0) {
        return vec![false; grid.mass.len()];
    }
    grid.mass.iter().map(|&m| m / max > tau).collect()
}

pub fn reconstruct_scene(posterior: &Posterior, tau: f64) -> ReconstructedScene {
    assert!(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
    let grid = &posterior.grid;
    if grid.is_flat() {
        debug!("epoch {}: flat posterior, whole grid reconstructed", posterior.epoch);
    }
    let points = support(grid, tau)
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| grid.spec.center_of(i))
        .collect();
    ReconstructedScene {
        points,
        tau,
        epoch: posterior.epoch,
    }
}

pub fn extract_targets(posterior: &Posterior, tau: f64, min_separation: f64) -> TargetEstimates {
    TargetEstimates {
        positions: extract_maxima(&posterior.grid, tau, min_separation),
        epoch: posterior.epoch,
    }
}

/// 8-neighborhood local maxima inside the `tau` support, accepted greedily
/// by descending value while keeping `min_separation` between picks.
/// Plateaus yield a single maximum at their lowest-index cell. A flat grid
/// has no maxima.
pub fn extract_maxima(grid: &DensityGrid, tau: f64, min_separation: f64) -> Vec<Point2> {
    if grid.is_flat() {
        return Vec::new();
    }
    let spec = grid.spec;
    let (nx, ny) = (spec.nx, spec.ny);
    let inside = support(grid, tau);
    let mut candidates = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            if !inside[i] {
                continue;
            }
            let v = grid.mass[i];
            let mut is_max = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                        continue;
                    }
                    let j = jy as usize * nx + jx as usize;
                    let w = grid.mass[j];
                    if (j < i && w >= v) || (j > i && w > v) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push(i);
            }
        }
    }
    candidates.sort_by(|&a, &b| grid.mass[b].total_cmp(&grid.mass[a]).then(a.cmp(&b)));
    let mut picked: Vec<Point2> = Vec::new();
    for i in candidates {
        let c = spec.center_of(i);
        if picked.iter().all(|p| (p - c).norm() >= min_separation) {
            picked.push(c);
        }
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::PosteriorKind;
    use crate::mixture::{eval_on_grid, GaussianComponent, GaussianMixture, GridSpec};
    use crate::Point3;
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    fn spec() -> GridSpec {
        GridSpec::new(0.0, 5.0, 0.0, 4.0, 0.05).unwrap()
    }

    fn mixture(comps: &[(f64, f64, f64, f64)]) -> GaussianMixture {
        GaussianMixture {
            components: comps
                .iter()
                .map(|&(w, x, y, s)| GaussianComponent {
                    weight: w,
                    mean: Point3::new(x, y, 1.0),
                    covariance: Matrix3::from_diagonal_element(s * s),
                    point_count: 100,
                })
                .collect(),
            total_points: 100 * comps.len() as u64,
        }
    }

    fn posterior(grid: DensityGrid) -> Posterior {
        Posterior {
            grid,
            mixture: GaussianMixture::empty(),
            epoch: 7,
            kind: PosteriorKind::Global,
        }
    }

    // brute-force oracle: a cell is a maximum if it is the first argmax of its
    // 3x3 window; greedy selection by repeated global argmax
    fn oracle(grid: &DensityGrid, tau: f64, sep: f64) -> Vec<Point2> {
        let s = grid.spec;
        let max = grid.max();
        let mut cand: Vec<(f64, usize)> = Vec::new();
        for i in 0..s.n_cells() {
            let (ix, iy) = ((i % s.nx) as i64, (i / s.nx) as i64);
            if grid.mass[i] / max <= tau {
                continue;
            }
            let mut best = None::<(f64, usize)>;
            for jy in iy - 1..=iy + 1 {
                for jx in ix - 1..=ix + 1 {
                    if jx < 0 || jy < 0 || jx >= s.nx as i64 || jy >= s.ny as i64 {
                        continue;
                    }
                    let j = jy as usize * s.nx + jx as usize;
                    let v = grid.mass[j];
                    if best.is_none_or(|(bv, bj)| v > bv || (v == bv && j < bj)) {
                        best = Some((v, j));
                    }
                }
            }
            if best.unwrap().1 == i {
                cand.push((grid.mass[i], i));
            }
        }
        let mut out: Vec<Point2> = Vec::new();
        while let Some(k) =
            (0..cand.len()).max_by(|&a, &b| cand[a].0.total_cmp(&cand[b].0).then(cand[b].1.cmp(&cand[a].1)))
        {
            let (_, i) = cand.remove(k);
            let c = s.center_of(i);
            if out.iter().all(|p| (p - c).norm() >= sep) {
                out.push(c);
            }
        }
        out
    }

    #[test]
    fn unimodal_blob_is_contiguous() {
        let g = eval_on_grid(&mixture(&[(1.0, 2.025, 2.025, 0.3)]), &spec());
        let scene = reconstruct_scene(&posterior(g), 0.45);
        assert!(!scene.points.is_empty());
        assert_eq!(scene.epoch, 7);
        // level set of an isotropic Gaussian: a disc of radius sigma*sqrt(-2 ln tau)
        let r = 0.3 * (-2.0 * 0.45f64.ln()).sqrt();
        for p in &scene.points {
            assert!((p - Point2::new(2.025, 2.025)).norm() <= r + 0.05);
        }
        let cells = std::f64::consts::PI * r * r / 0.0025;
        assert!((scene.points.len() as f64 - cells).abs() / cells < 0.1);
    }

    #[test]
    fn tight_threshold_keeps_argmax() {
        let g = eval_on_grid(&mixture(&[(1.0, 2.025, 2.025, 0.3)]), &spec());
        let scene = reconstruct_scene(&posterior(g), 0.999);
        assert_eq!(scene.points, vec![Point2::new(2.025, 2.025)]);
    }

    #[test]
    fn uniform_posterior_reconstructs_everything() {
        let scene = reconstruct_scene(&posterior(DensityGrid::uniform(spec())), 0.45);
        assert_eq!(scene.points.len(), spec().n_cells());
        assert!(extract_maxima(&DensityGrid::uniform(spec()), 0.45, 0.5).is_empty());
    }

    #[test]
    fn single_gaussian_single_estimate() {
        let g = eval_on_grid(&mixture(&[(1.0, 1.83, 2.61, 0.2)]), &spec());
        let est = extract_targets(&posterior(g), 0.45, 0.5);
        assert_eq!(est.positions.len(), 1);
        let p = est.positions[0];
        assert!((p.x - 1.83).abs() <= 0.05 && (p.y - 2.61).abs() <= 0.05);
    }

    #[test]
    fn two_separated_gaussians() {
        let g = eval_on_grid(&mixture(&[(0.5, 1.525, 2.025, 0.2), (0.5, 3.525, 2.025, 0.2)]), &spec());
        let est = extract_maxima(&g, 0.45, 0.5);
        assert_eq!(est, oracle(&g, 0.45, 0.5));
        assert_eq!(est.len(), 2);
        let mut xs: Vec<f64> = est.iter().map(|p| p.x).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] - 1.525).abs() < 1e-9 && (xs[1] - 3.525).abs() < 1e-9);
    }

    #[test]
    fn merged_peak_is_unresolved() {
        let g = eval_on_grid(&mixture(&[(0.5, 2.4, 2.0, 0.3), (0.5, 2.6, 2.0, 0.3)]), &spec());
        // the density along the joining line has a single maximum at the midpoint
        let line: Vec<f64> = (0..=40)
            .map(|i| {
                let x = 2.0 + 0.02 * i as f64;
                let d = |m: f64| (-(x - m).powi(2) / 0.18).exp();
                d(2.4) + d(2.6)
            })
            .collect();
        let peaks = (1..line.len() - 1)
            .filter(|&i| line[i] > line[i - 1] && line[i] > line[i + 1])
            .count();
        assert_eq!(peaks, 1);
        assert_eq!(extract_maxima(&g, 0.45, 0.5).len(), 1);
    }

    #[test]
    fn separation_suppresses_close_maxima() {
        let s = spec();
        let mut v = vec![0.0; s.n_cells()];
        v[s.cell_of(1.0, 1.0).unwrap()] = 1.0;
        v[s.cell_of(1.3, 1.0).unwrap()] = 0.9;
        v[s.cell_of(3.0, 1.0).unwrap()] = 0.8;
        let g = DensityGrid::from_values(s, v);
        let est = extract_maxima(&g, 0.45, 0.5);
        assert_eq!(est.len(), 2);
        assert_eq!(est, oracle(&g, 0.45, 0.5));
    }

    proptest! {
        #[test]
        fn matches_oracle(comps in prop::collection::vec((0.1f64..1.0, 0.3f64..4.7, 0.3f64..3.7, 0.1f64..0.5), 1..5),
                          tau in 0.05f64..0.95, sep in 0.0f64..1.5) {
            let g = eval_on_grid(&mixture(&comps), &spec());
            prop_assert_eq!(extract_maxima(&g, tau, sep), oracle(&g, tau, sep));
        }

        #[test]
        fn scale_invariant(comps in prop::collection::vec((0.1f64..1.0, 0.3f64..4.7, 0.3f64..3.7, 0.1f64..0.5), 1..4),
                           exp in -20i32..20) {
            let g = eval_on_grid(&mixture(&comps), &spec());
            let scaled = DensityGrid { spec: g.spec, mass: g.mass.iter().map(|m| m * 2f64.powi(exp)).collect() };
            prop_assert_eq!(extract_maxima(&g, 0.45, 0.5), extract_maxima(&scaled, 0.45, 0.5));
        }

        #[test]
        fn picks_are_separated(comps in prop::collection::vec((0.1f64..1.0, 0.3f64..4.7, 0.3f64..3.7, 0.05f64..0.3), 1..6),
                               sep in 0.1f64..1.5) {
            let g = eval_on_grid(&mixture(&comps), &spec());
            let est = extract_maxima(&g, 0.2, sep);
            for (i, a) in est.iter().enumerate() {
                for b in &est[i + 1..] {
                    prop_assert!((a - b).norm() >= sep);
                }
            }
        }
    }
}
