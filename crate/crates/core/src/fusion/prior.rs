use super::ReconstructedScene;
use crate::mixture::{DensityGrid, GridSpec};

/// Random-walk spread after one update: `v * dt + floor`.
pub fn random_walk_sigma(v: f64, dt: f64, sigma_floor: f64) -> f64 {
    v * dt + sigma_floor
}

/// Equal-weight superposition of isotropic Gaussians centered on the
/// previous reconstructed scene, with spread [`random_walk_sigma`].
/// An empty scene gives the uniform prior.
pub fn motion_prior(prev: &ReconstructedScene, v: f64, dt: f64, sigma_floor: f64, spec: &GridSpec) -> DensityGrid {
    assert!(dt > 0.0 && v >= 0.0, "motion_prior needs dt > 0 and v >= 0");
    let sigma = random_walk_sigma(v, dt, sigma_floor);
    if prev.points.is_empty() || !(sigma > 0.0) {
        return DensityGrid::uniform(*spec);
    }
    let mut mass = vec![0.0; spec.n_cells()];
    let norm = spec.cell_area() / (2.0 * std::f64::consts::PI * sigma * sigma * prev.points.len() as f64);
    let reach = 8.0 * sigma;
    let res = spec.resolution;
    let span = |c: f64, origin: f64, n: usize| {
        let lo = ((c - reach - origin) / res - 0.5).ceil().max(0.0);
        let hi = ((c + reach - origin) / res - 0.5).floor().min(n as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    };
    // separable kernel: one 1D profile per axis and point
    let mut gx = Vec::new();
    for p in &prev.points {
        let (Some((x0, x1)), Some((y0, y1))) = (span(p.x, spec.x_min, spec.nx), span(p.y, spec.y_min, spec.ny)) else {
            continue;
        };
        gx.clear();
        gx.extend((x0..=x1).map(|ix| {
            let dx = spec.x_min + (ix as f64 + 0.5) * res - p.x;
            (-0.5 * dx * dx / (sigma * sigma)).exp()
        }));
        for iy in y0..=y1 {
            let dy = spec.y_min + (iy as f64 + 0.5) * res - p.y;
            let fy = norm * (-0.5 * dy * dy / (sigma * sigma)).exp();
            let row = &mut mass[iy * spec.nx + x0..=iy * spec.nx + x1];
            for (cell, g) in row.iter_mut().zip(&gx) {
                *cell += fy * g;
            }
        }
    }
    DensityGrid::from_values(*spec, mass)
}

/// Lift every cell to at least `floor` times the peak:
/// `(1 - floor) * grid / max + floor`, renormalized. Keeps targets missing
/// from the previous scene recoverable.
pub fn with_floor(grid: &DensityGrid, floor: f64) -> DensityGrid {
    let max = grid.max();
    if floor <= 0.0 || !(max > 0.0) {
        return grid.clone();
    }
    let values = grid.mass.iter().map(|m| (1.0 - floor) * m / max + floor).collect();
    DensityGrid::from_values(grid.spec, values)
}
