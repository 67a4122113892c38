use super::DensityGrid;
use crate::error::Result;

/// `D(p || q)` between two grids. Both are floored at `floor` and
/// renormalized first so disjoint supports give a large finite value.
pub fn kl_divergence(p: &DensityGrid, q: &DensityGrid, floor: f64) -> Result<f64> {
    p.check_compatible(q)?;
    assert!(floor > 0.0, "floor must be positive");
    let floored = |g: &DensityGrid| {
        let v: Vec<f64> = g.mass.iter().map(|&m| m.max(floor)).collect();
        let total: f64 = v.iter().sum();
        (v, total)
    };
    let (pv, pt) = floored(p);
    let (qv, qt) = floored(q);
    let d: f64 = pv
        .iter()
        .zip(&qv)
        .map(|(&a, &b)| {
            let a = a / pt;
            a * (a / (b / qt)).ln()
        })
        .sum();
    // rounding can leave a tiny negative residue when p == q
    Ok(d.max(0.0))
}
