use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GaussianMixture;
use crate::error::{Error, Result};
use crate::Point2;

/// Regular 2D lattice over the monitored area. Cells are indexed row-major
/// with `y` as the row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub y_min: f64,
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, resolution: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max, resolution].iter().all(|v| v.is_finite());
        if !finite || !(resolution > 0.0) || !(x_max > x_min) || !(y_max > y_min) {
            return Err(Error::config(
                "grid: need finite extent with max > min and resolution > 0",
            ));
        }
        let nx = ((x_max - x_min) / resolution).round().max(1.0) as usize;
        let ny = ((y_max - y_min) / resolution).round().max(1.0) as usize;
        Ok(Self {
            x_min,
            y_min,
            resolution,
            nx,
            ny,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.resolution * self.resolution
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.nx as f64 * self.resolution
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.ny as f64 * self.resolution
    }

    pub fn center(&self, ix: usize, iy: usize) -> Point2 {
        Point2::new(
            self.x_min + (ix as f64 + 0.5) * self.resolution,
            self.y_min + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn center_of(&self, index: usize) -> Point2 {
        self.center(index % self.nx, index / self.nx)
    }

    /// Cell containing `(x, y)`, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<usize> {
        let fx = (x - self.x_min) / self.resolution;
        let fy = (y - self.y_min) / self.resolution;
        if fx < 0.0 || fy < 0.0 || !fx.is_finite() || !fy.is_finite() {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.nx && iy < self.ny).then_some(iy * self.nx + ix)
    }

    fn same_as(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// Discrete probability mass over a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub mass: Vec<f64>,
}

impl DensityGrid {
    pub fn uniform(spec: GridSpec) -> Self {
        let n = spec.n_cells();
        Self {
            spec,
            mass: vec![1.0 / n as f64; n],
        }
    }

    /// Normalized copy of nonnegative `values`. An all-zero input yields
    /// the uniform grid.
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), spec.n_cells(), "one value per cell");
        let mut g = Self { spec, mass: values };
        if !g.normalize() {
            g = Self::uniform(spec);
        }
        g
    }

    /// Rescale to unit mass. Returns false (leaving the grid untouched)
    /// when the total is zero or not finite.
    pub fn normalize(&mut self) -> bool {
        let total: f64 = self.mass.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return false;
        }
        self.mass.iter_mut().for_each(|m| *m /= total);
        true
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.mass.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.mass.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// First cell holding the maximum.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > self.mass[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_flat(&self) -> bool {
        self.max() == self.min()
    }

    pub fn value_at(&self, x: f64, y: f64) -> Option<f64> {
        self.spec.cell_of(x, y).map(|i| self.mass[i])
    }

    pub fn check_compatible(&self, other: &DensityGrid) -> Result<()> {
        if self.spec.same_as(&other.spec) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.spec, other.spec)))
        }
    }

    /// Cell-wise product, normalized. `None` when the product vanishes
    /// everywhere.
    pub fn product(&self, other: &DensityGrid) -> Result<Option<DensityGrid>> {
        self.check_compatible(other)?;
        let values = self.mass.iter().zip(&other.mass).map(|(a, b)| a * b).collect();
        let mut g = DensityGrid {
            spec: self.spec,
            mass: values,
        };
        Ok(g.normalize().then_some(g))
    }

    /// Convex combination `sum_i w_i * grid_i`; weights must sum to one.
    pub fn combine(spec: GridSpec, parts: &[(f64, &DensityGrid)]) -> Result<DensityGrid> {
        let mut mass = vec![0.0; spec.n_cells()];
        for (w, g) in parts {
            if !g.spec.same_as(&spec) {
                return Err(Error::GridMismatch("combine: incompatible grids".into()));
            }
            if *w == 0.0 {
                continue;
            }
            for (acc, v) in mass.iter_mut().zip(&g.mass) {
                *acc += w * v;
            }
        }
        Ok(DensityGrid { spec, mass })
    }

    /// CSV matrix: a `#` header with the lattice geometry, then one row per
    /// `y` index of comma-separated masses.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let s = &self.spec;
        (|| -> std::io::Result<()> {
            writeln!(
                w,
                "# x_min={},y_min={},resolution={},nx={},ny={}",
                s.x_min, s.y_min, s.resolution, s.nx, s.ny
            )?;
            for row in self.mass.chunks(s.nx) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(","))?;
            }
            w.flush()
        })()
        .map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<DensityGrid> {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| Error::io(path, e))?;
        let header = header.strip_prefix("# ").ok_or_else(|| bad("missing header".into()))?;
        let mut fields = std::collections::HashMap::new();
        for kv in header.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header field {kv}")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| bad(format!("header lacks {k}")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(format!("bad {k}"))) };
        let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(format!("bad {k}"))) };
        let spec = GridSpec {
            x_min: num("x_min")?,
            y_min: num("y_min")?,
            resolution: num("resolution")?,
            nx: int("nx")?,
            ny: int("ny")?,
        };
        let mut mass = Vec::with_capacity(spec.n_cells());
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            for v in line.split(',') {
                mass.push(v.trim().parse::<f64>().map_err(|_| bad(format!("bad value {v}")))?);
            }
        }
        if mass.len() != spec.n_cells() {
            return Err(bad(format!("expected {} cells, found {}", spec.n_cells(), mass.len())));
        }
        Ok(DensityGrid { spec, mass })
    }
}

/// Mahalanobis radius beyond which component contributions are dropped;
/// the neglected density is below exp(-32) of the peak.
const TRUNCATION_SIGMAS: f64 = 8.0;

/// Unnormalized `density * cell_area` of the z-marginal of `mixture`.
pub(crate) fn raw_cell_mass(mixture: &GaussianMixture, spec: &GridSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.n_cells()];
    let area = spec.cell_area();
    for comp in &mixture.components {
        if comp.weight == 0.0 {
            continue;
        }
        let (mu, cov) = comp.marginal_xy();
        let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
        let (a, b, c) = (cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det);
        let scale = comp.weight * area / (2.0 * std::f64::consts::PI * det.sqrt());
        let hx = TRUNCATION_SIGMAS * cov[(0, 0)].sqrt();
        let hy = TRUNCATION_SIGMAS * cov[(1, 1)].sqrt();
        let Some((ix0, ix1)) = index_range(mu.x - hx, mu.x + hx, spec.x_min, spec.resolution, spec.nx) else {
            continue;
        };
        let Some((iy0, iy1)) = index_range(mu.y - hy, mu.y + hy, spec.y_min, spec.resolution, spec.ny) else {
            continue;
        };
        for iy in iy0..=iy1 {
            let dy = spec.y_min + (iy as f64 + 0.5) * spec.resolution - mu.y;
            let row = &mut out[iy * spec.nx..(iy + 1) * spec.nx];
            for (ix, cell) in row.iter_mut().enumerate().take(ix1 + 1).skip(ix0) {
                let dx = spec.x_min + (ix as f64 + 0.5) * spec.resolution - mu.x;
                let m = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
                *cell += scale * (-0.5 * m).exp();
            }
        }
    }
    out
}

fn index_range(lo: f64, hi: f64, origin: f64, res: f64, n: usize) -> Option<(usize, usize)> {
    let first = ((lo - origin) / res - 0.5).ceil().max(0.0);
    let last = ((hi - origin) / res - 0.5).floor().min(n as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

/// Evaluate the ground-plane marginal of `mixture` at every cell center,
/// times cell area, normalized to unit mass. Empty mixtures (and mixtures
/// with no mass on the grid) give the uniform grid.
pub fn eval_on_grid(mixture: &GaussianMixture, spec: &GridSpec) -> DensityGrid {
    if mixture.is_empty() {
        return DensityGrid::uniform(*spec);
    }
    let raw = raw_cell_mass(mixture, spec);
    let g = DensityGrid::from_values(*spec, raw);
    if g.is_flat() {
        log::debug!("eval_on_grid: mixture has no mass on the grid");
    }
    g
}
