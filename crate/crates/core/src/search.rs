//! Grid-and-zoom maximization over a simplex.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::simplex::{self, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoomConfig {
    /// Resolution of the initial lattice.
    pub coarse: usize,
    /// Half-width, in steps, of each local lattice.
    pub radius: usize,
    /// Stop once the local step falls below this.
    pub min_step: f64,
}

impl Default for ZoomConfig {
    fn default() -> Self {
        Self { coarse: 25, radius: 4, min_step: 1e-10 }
    }
}

/// Maximizes `f` over Δ_dim: a full lattice pass, then repeated local passes
/// with the step divided by `radius` each time. Ties keep the earlier point,
/// so the coarse pass breaks them lexicographically. NaN counts as −∞.
pub fn zoom_maximize<F>(dim: usize, cfg: &ZoomConfig, mut f: F) -> Result<(ProbVector, f64)>
where
    F: FnMut(&ProbVector) -> f64,
{
    let mut eval = |p: &ProbVector| {
        let v = f(p);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    if dim == 1 {
        let p = ProbVector::from_raw(vec![1.0]);
        let v = eval(&p);
        return Ok((p, v));
    }
    let mut best: Option<(ProbVector, f64)> = None;
    for p in simplex::simplex_grid(dim, cfg.coarse, 0.0)? {
        let v = eval(&p);
        if best.as_ref().map_or(true, |(_, b)| v > *b) {
            best = Some((p, v));
        }
    }
    let (mut bp, mut bv) = best.expect("lattice is nonempty");
    let radius = cfg.radius.max(2);
    let mut step = 1.0 / cfg.coarse as f64;
    loop {
        step /= radius as f64;
        if step < cfg.min_step {
            break;
        }
        let center = bp.clone();
        for p in simplex::local_lattice(&center, step, radius) {
            if p == center {
                continue;
            }
            let v = eval(&p);
            if v > bv {
                bp = p;
                bv = v;
            }
        }
    }
    Ok((bp, bv))
}

/// Minimizing counterpart of [`zoom_maximize`].
pub fn zoom_minimize<F>(dim: usize, cfg: &ZoomConfig, mut f: F) -> Result<(ProbVector, f64)>
where
    F: FnMut(&ProbVector) -> f64,
{
    let (p, v) = zoom_maximize(dim, cfg, |q| -f(q))?;
    Ok((p, -v))
}
