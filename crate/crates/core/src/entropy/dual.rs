//! Solvers for the simplex-restricted convex conjugate at unit scale.
//!
//! Shannon and quadratic have direct solutions. Tsallis is separable and is
//! solved from its KKT conditions by a one-dimensional root search on the
//! multiplier. Rényi reduces to a Tsallis problem with a rescaled argument,
//! with the rescaling fixed by an outer root search. [`ascent_maximize`] is a
//! generic mirror-ascent solver used as an independent reference.

use super::{unit_value, EntropyKind};
use crate::error::{Error, Result};
use crate::simplex::{self, dot, ProbVector};

use super::DualEvalConfig;

pub(crate) fn unit_dual(kind: EntropyKind, u: &[f64], cfg: &DualEvalConfig) -> Result<(f64, ProbVector)> {
    if u.len() == 1 {
        let mu = ProbVector::from_raw(vec![1.0]);
        return Ok((u[0] - unit_value(kind, mu.as_slice()), mu));
    }
    let mu = match kind {
        EntropyKind::Shannon => return Ok(log_sum_exp(u)),
        EntropyKind::Quadratic => {
            let k = u.len() as f64;
            let y: Vec<f64> = u.iter().map(|x| 0.5 * x + 1.0 / k).collect();
            simplex::project_onto_simplex(&y)
        }
        EntropyKind::Tsallis { alpha } => tsallis_argmax(alpha, u, cfg)?,
        EntropyKind::Renyi { alpha } => renyi_argmax(alpha, u, cfg)?,
    };
    let val = dot(mu.as_slice(), u) - unit_value(kind, mu.as_slice());
    Ok((val, mu))
}

fn log_sum_exp(u: &[f64]) -> (f64, ProbVector) {
    let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let mu = ProbVector::from_raw(e.into_iter().map(|x| x / z).collect());
    (m + z.ln(), mu)
}

/// Maximizer of `⟨μ,u⟩ − α⁻¹(Σμ^{α+1} − 1)`.
///
/// Stationarity gives `μ_θ = inv(u_θ − λ)` with `inv = (φ′)⁻¹`,
/// `φ′(m) = (α+1)/α · m^α`, and λ chosen so the weights sum to one.
pub(crate) fn tsallis_argmax(alpha: f64, u: &[f64], cfg: &DualEvalConfig) -> Result<ProbVector> {
    let k = u.len() as f64;
    let c = (alpha + 1.0) / alpha;
    let umax = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // work relative to the largest coordinate
    let z: Vec<f64> = u.iter().map(|x| x - umax).collect();
    let inv = |y: f64| -> f64 {
        let r = y / c;
        if r <= 0.0 {
            0.0
        } else {
            r.powf(1.0 / alpha)
        }
    };
    let excess = |lam: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut ds = 0.0;
        for zi in &z {
            let y = zi - lam;
            let m = inv(y);
            s += m;
            if m > 0.0 {
                // d inv / dy = m / (α y); d/dλ flips the sign
                ds -= m / (alpha * y);
            }
        }
        (s - 1.0, ds)
    };
    let mut lo = -c;
    let mut hi = -c * k.powf(-alpha);
    if hi < lo {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut lam = 0.5 * (lo + hi);
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let (f, df) = excess(lam);
        if f.abs() <= 1e-15 {
            converged = true;
            break;
        }
        if f > 0.0 {
            lo = lam;
        } else {
            hi = lam;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            converged = true;
            break;
        }
        let newton = lam - f / df;
        lam = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    let w: Vec<f64> = z.iter().map(|zi| inv(zi - lam)).collect();
    let sum: f64 = w.iter().sum();
    if !converged && (sum - 1.0).abs() > cfg.tolerance {
        let mu = ProbVector::normalized(w).unwrap_or_else(|_| simplex::uniform(u.len()).unwrap());
        let best = dot(mu.as_slice(), u) - unit_value(EntropyKind::Tsallis { alpha }, mu.as_slice());
        return Err(Error::NumericalFailure { context: "tsallis dual".into(), best });
    }
    ProbVector::normalized(w).map_err(|_| Error::NumericalFailure {
        context: "tsallis dual (empty support)".into(),
        best: f64::NAN,
    })
}

/// Maximizer of `⟨μ,u⟩ − α⁻¹ log Σμ^{α+1}`.
///
/// With `s = Σμ^{α+1}` at the optimum, μ also maximizes the Tsallis problem
/// for `s·u`. The map `σ ↦ Σ μ(σu)^{α+1}` decreases in σ, so the consistent
/// `s ∈ [1, K^{−α}]` is found by a bracketed root search.
fn renyi_argmax(alpha: f64, u: &[f64], cfg: &DualEvalConfig) -> Result<ProbVector> {
    let k = u.len() as f64;
    let p = alpha + 1.0;
    let tsallis_at = |sigma: f64| -> Result<ProbVector> {
        let su: Vec<f64> = u.iter().map(|x| sigma * x).collect();
        tsallis_argmax(alpha, &su, cfg)
    };
    let g = |mu: &ProbVector, sigma: f64| -> f64 {
        mu.iter().map(|m| m.powf(p)).sum::<f64>() - sigma
    };
    let mut a = 1.0;
    let mut b = k.powf(-alpha);
    let mu_a = tsallis_at(a)?;
    let mut fa = g(&mu_a, a);
    if fa <= 0.0 {
        return Ok(mu_a);
    }
    let mu_b = tsallis_at(b)?;
    let mut fb = g(&mu_b, b);
    if fb >= 0.0 {
        return Ok(mu_b);
    }
    // Illinois variant of regula falsi
    let mut side = 0i8;
    let mut best = mu_a;
    for _ in 0..cfg.max_iterations {
        let c = (a * fb - b * fa) / (fb - fa);
        let mu_c = tsallis_at(c)?;
        let fc = g(&mu_c, c);
        best = mu_c;
        if fc == 0.0 || (b - a).abs() <= 4.0 * f64::EPSILON * c || fc.abs() <= 1e-15 * c {
            return Ok(best);
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    let val = dot(best.as_slice(), u) - unit_value(EntropyKind::Renyi { alpha }, best.as_slice());
    Err(Error::NumericalFailure { context: "renyi dual".into(), best: val })
}

/// Checks that no grid point beats the solver value by more than the tolerance.
pub(crate) fn certify_on_grid(kind: EntropyKind, u: &[f64], val: f64, cfg: &DualEvalConfig) -> Result<()> {
    let k = u.len();
    if k < 2 {
        return Ok(());
    }
    let mut res = cfg.fallback_grid_resolution.max(2);
    // keep the lattice below ~2e5 points
    while res > 2 && lattice_size(k, res) > 200_000.0 {
        res = res * 3 / 4;
    }
    let grid = simplex::simplex_grid(k, res, 0.0)?;
    let best = grid
        .iter()
        .map(|m| dot(m.as_slice(), u) - unit_value(kind, m.as_slice()))
        .fold(f64::NEG_INFINITY, f64::max);
    if best > val + cfg.tolerance.max(1e-12 * val.abs()) {
        return Err(Error::NumericalFailure { context: "dual certification".into(), best });
    }
    Ok(())
}

fn lattice_size(k: usize, res: usize) -> f64 {
    (1..k).fold(1.0, |acc, i| acc * (res + i) as f64 / i as f64)
}

/// Outcome of [`ascent_maximize`].
#[derive(Debug, Clone)]
pub struct AscentResult {
    pub value: f64,
    pub argmax: ProbVector,
    /// Frank–Wolfe gap `max_θ g_θ − ⟨μ,g⟩`, an upper bound on suboptimality.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes a concave function over the simplex by exponentiated-gradient
/// ascent with backtracking, stopping when the Frank–Wolfe gap drops to `tol`.
pub fn ascent_maximize<F, G>(f: F, grad: G, start: &ProbVector, tol: f64, max_iter: usize) -> AscentResult
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    const FLOOR: f64 = 1e-300;
    let mut mu: Vec<f64> = start.iter().map(|m| m.max(FLOOR)).collect();
    let s: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|m| *m /= s);
    let mut fv = f(&mu);
    let mut step = 1.0;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = 0;
    while iterations < max_iter {
        iterations += 1;
        let g = grad(&mu);
        let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        gap = gmax - dot(&mu, &g);
        if gap <= tol {
            converged = true;
            break;
        }
        let mut accepted = false;
        while step > 1e-30 {
            let mut next: Vec<f64> = mu
                .iter()
                .zip(&g)
                .map(|(m, gi)| m * (step * (gi - gmax)).exp())
                .collect();
            let z: f64 = next.iter().sum();
            next.iter_mut().for_each(|m| *m = (*m / z).max(FLOOR));
            let z: f64 = next.iter().sum();
            next.iter_mut().for_each(|m| *m /= z);
            let fn_ = f(&next);
            let lin: f64 = next.iter().zip(&mu).zip(&g).map(|((a, b), gi)| gi * (a - b)).sum();
            let kl: f64 = next.iter().zip(&mu).map(|(a, b)| a * (a / b).ln()).sum();
            let slack = 4.0 * f64::EPSILON * (1.0 + fv.abs());
            if fn_.is_finite() && fn_ >= fv + lin - kl / step - slack {
                stalled = if fn_ > fv { 0 } else { stalled + 1 };
                mu = next;
                fv = fn_;
                step = (step * 2.0).min(1e12);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        // no representable progress left
        if !accepted || stalled > 50 {
            break;
        }
    }
    AscentResult {
        value: fv,
        argmax: ProbVector::normalized(mu).expect("positive weights"),
        gap,
        iterations,
        converged,
    }
}
