//! Convex entropies on the simplex: values, gradients, entropic duals and
//! Bregman divergences.
//!
//! An [`EntropySpec`] carries its own scale `eta`, representing `Φ/η`. All
//! operations honour the scale, so `Φ_η*(v) = η⁻¹ Φ*(η v)` holds by
//! construction in the closed-form and KKT routes and is checked against the
//! generic ascent solver in tests.

mod dual;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{self, check_dims, dot, DualVector, ProbVector};

pub use dual::{ascent_maximize, AscentResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropyKind {
    Shannon,
    Quadratic,
    Tsallis { alpha: f64 },
    Renyi { alpha: f64 },
}

/// A scaled entropy `Φ/η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEntropySpec", into = "RawEntropySpec")]
pub struct EntropySpec {
    pub kind: EntropyKind,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntropySpec {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default = "one")]
    eta: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawEntropySpec> for EntropySpec {
    type Error = Error;
    fn try_from(raw: RawEntropySpec) -> Result<Self> {
        let need_alpha = |a: Option<f64>| {
            a.ok_or_else(|| Error::InvalidParameter(format!("{} entropy needs `alpha`", raw.kind)))
        };
        let kind = match raw.kind.as_str() {
            "shannon" => EntropyKind::Shannon,
            "quadratic" => EntropyKind::Quadratic,
            "tsallis" => EntropyKind::Tsallis { alpha: need_alpha(raw.alpha)? },
            "renyi" => EntropyKind::Renyi { alpha: need_alpha(raw.alpha)? },
            other => return Err(Error::InvalidParameter(format!("unknown entropy kind `{other}`"))),
        };
        if matches!(kind, EntropyKind::Shannon | EntropyKind::Quadratic) && raw.alpha.is_some() {
            return Err(Error::InvalidParameter(format!("{} entropy takes no `alpha`", raw.kind)));
        }
        EntropySpec::new(kind, raw.eta)
    }
}

impl From<EntropySpec> for RawEntropySpec {
    fn from(s: EntropySpec) -> Self {
        let (kind, alpha) = match s.kind {
            EntropyKind::Shannon => ("shannon", None),
            EntropyKind::Quadratic => ("quadratic", None),
            EntropyKind::Tsallis { alpha } => ("tsallis", Some(alpha)),
            EntropyKind::Renyi { alpha } => ("renyi", Some(alpha)),
        };
        RawEntropySpec { kind: kind.into(), alpha, eta: s.eta }
    }
}

impl EntropySpec {
    pub fn new(kind: EntropyKind, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidParameter(format!("scale eta = {eta} must be positive")));
        }
        match kind {
            EntropyKind::Tsallis { alpha } => {
                if !(alpha > -1.0 && alpha != 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "tsallis alpha = {alpha} outside (-1,0) ∪ (0,∞)"
                    )));
                }
            }
            EntropyKind::Renyi { alpha } => {
                if !(alpha > -1.0 && alpha < 0.0) {
                    return Err(Error::InvalidParameter(format!("renyi alpha = {alpha} outside (-1,0)")));
                }
            }
            _ => {}
        }
        Ok(Self { kind, eta })
    }

    pub fn shannon() -> Self {
        Self { kind: EntropyKind::Shannon, eta: 1.0 }
    }

    pub fn quadratic() -> Self {
        Self { kind: EntropyKind::Quadratic, eta: 1.0 }
    }

    pub fn tsallis(alpha: f64) -> Result<Self> {
        Self::new(EntropyKind::Tsallis { alpha }, 1.0)
    }

    pub fn renyi(alpha: f64) -> Result<Self> {
        Self::new(EntropyKind::Renyi { alpha }, 1.0)
    }

    /// The same entropy at scale `eta` (replacing the current scale).
    pub fn with_eta(self, eta: f64) -> Result<Self> {
        Self::new(self.kind, eta)
    }

    /// The entropy `η⁻¹·self`, composing scales.
    pub fn scaled(self, eta: f64) -> Result<Self> {
        Self::new(self.kind, self.eta * eta)
    }

    /// Unbounded gradient at the boundary (and strictly convex inside).
    pub fn is_legendre(&self) -> bool {
        match self.kind {
            EntropyKind::Shannon | EntropyKind::Renyi { .. } => true,
            EntropyKind::Tsallis { alpha } => alpha < 0.0,
            EntropyKind::Quadratic => false,
        }
    }

    /// Short label such as `H`, `Q`, `S-0.5`, `R-0.9`, with `/η` when scaled.
    pub fn label(&self) -> String {
        let base = match self.kind {
            EntropyKind::Shannon => "H".to_string(),
            EntropyKind::Quadratic => "Q".to_string(),
            EntropyKind::Tsallis { alpha } => format!("S{alpha}"),
            EntropyKind::Renyi { alpha } => format!("R{alpha}"),
        };
        if self.eta == 1.0 {
            base
        } else {
            format!("{base}/{}", self.eta)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("entropy spec serializes")
    }
}

impl fmt::Display for EntropySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Accepts the JSON form or the shorthands `H`, `Q`, `S<alpha>`, `R<alpha>`
/// (e.g. `S-0.5`), optionally followed by `/eta`.
impl FromStr for EntropySpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s)
                .map_err(|e| Error::InvalidParameter(format!("entropy spec `{s}`: {e}")));
        }
        let (body, eta) = match s.split_once('/') {
            Some((b, e)) => (
                b,
                e.parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad scale in `{s}`")))?,
            ),
            None => (s, 1.0),
        };
        let alpha = |rest: &str| {
            rest.parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad alpha in `{s}`")))
        };
        let kind = match body {
            "H" | "shannon" => EntropyKind::Shannon,
            "Q" | "quadratic" => EntropyKind::Quadratic,
            _ if body.starts_with('S') => EntropyKind::Tsallis { alpha: alpha(&body[1..])? },
            _ if body.starts_with('R') => EntropyKind::Renyi { alpha: alpha(&body[1..])? },
            _ => return Err(Error::InvalidParameter(format!("unknown entropy `{s}`"))),
        };
        EntropySpec::new(kind, eta)
    }
}

/// Controls the numerical entropic dual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualEvalConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub fallback_grid_resolution: usize,
    /// Compare every numerical dual against the fallback grid.
    pub certify: bool,
}

impl Default for DualEvalConfig {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_iterations: 200, fallback_grid_resolution: 400, certify: false }
    }
}

impl DualEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("dual tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Φ_η(μ). Uses `0·log 0 = 0`.
pub fn value(phi: &EntropySpec, mu: &ProbVector) -> f64 {
    unit_value(phi.kind, mu.as_slice()) / phi.eta
}

pub(crate) fn unit_value(kind: EntropyKind, mu: &[f64]) -> f64 {
    match kind {
        EntropyKind::Shannon => mu.iter().filter(|m| **m > 0.0).map(|m| m * m.ln()).sum(),
        EntropyKind::Quadratic => {
            let u = 1.0 / mu.len() as f64;
            mu.iter().map(|m| (m - u) * (m - u)).sum()
        }
        EntropyKind::Tsallis { alpha } => (power_sum(mu, alpha + 1.0) - 1.0) / alpha,
        EntropyKind::Renyi { alpha } => power_sum(mu, alpha + 1.0).ln() / alpha,
    }
}

fn power_sum(mu: &[f64], p: f64) -> f64 {
    mu.iter().filter(|m| **m > 0.0).map(|m| m.powf(p)).sum()
}

/// ∇Φ_η(μ). Legendre kinds reject points with a zero coordinate.
pub fn grad(phi: &EntropySpec, mu: &ProbVector) -> Result<DualVector> {
    if phi.is_legendre() {
        if let Some(index) = mu.iter().position(|m| *m <= 0.0) {
            return Err(Error::BoundaryGradient { entropy: phi.label(), index });
        }
    }
    let mut g = unit_grad(phi.kind, mu.as_slice());
    for gi in g.iter_mut() {
        *gi /= phi.eta;
    }
    Ok(DualVector::new(g))
}

/// ∇Φ_η at `clamp_interior(μ, ε)`.
pub fn grad_clamped(phi: &EntropySpec, mu: &ProbVector, eps: f64) -> DualVector {
    let m = if phi.is_legendre() { simplex::clamp_interior(mu, eps) } else { mu.clone() };
    grad(phi, &m).expect("clamped point is interior")
}

pub(crate) fn unit_grad(kind: EntropyKind, mu: &[f64]) -> Vec<f64> {
    match kind {
        EntropyKind::Shannon => mu.iter().map(|m| m.ln() + 1.0).collect(),
        EntropyKind::Quadratic => {
            let u = 1.0 / mu.len() as f64;
            mu.iter().map(|m| 2.0 * (m - u)).collect()
        }
        EntropyKind::Tsallis { alpha } => {
            let c = (alpha + 1.0) / alpha;
            mu.iter().map(|m| c * m.powf(alpha)).collect()
        }
        EntropyKind::Renyi { alpha } => {
            let c = (alpha + 1.0) / alpha / power_sum(mu, alpha + 1.0);
            mu.iter().map(|m| c * m.powf(alpha)).collect()
        }
    }
}

/// Φ_η*(v) = sup_μ ⟨μ,v⟩ − Φ_η(μ).
pub fn entropic_dual(phi: &EntropySpec, v: &DualVector, cfg: &DualEvalConfig) -> Result<f64> {
    Ok(dual_solve(phi, v, cfg)?.0)
}

/// ∇Φ_η*(v), the maximizer of the dual problem.
pub fn dual_grad(phi: &EntropySpec, v: &DualVector, cfg: &DualEvalConfig) -> Result<ProbVector> {
    Ok(dual_solve(phi, v, cfg)?.1)
}

/// Both the dual value and its maximizer.
pub fn dual_solve(
    phi: &EntropySpec,
    v: &DualVector,
    cfg: &DualEvalConfig,
) -> Result<(f64, ProbVector)> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("entropic dual needs a finite argument".into()));
    }
    if v.dim() == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let u: Vec<f64> = v.iter().map(|x| x * phi.eta).collect();
    let (val, mu) = dual::unit_dual(phi.kind, &u, cfg)?;
    if cfg.certify && !matches!(phi.kind, EntropyKind::Shannon) {
        dual::certify_on_grid(phi.kind, &u, val, cfg)?;
    }
    Ok((val / phi.eta, mu))
}

/// D_Φ(μ, μ′). Infinite when μ′ touches the boundary of a Legendre entropy
/// (unless μ = μ′).
pub fn bregman(phi: &EntropySpec, mu: &ProbVector, mu_prime: &ProbVector) -> Result<f64> {
    check_dims(mu.dim(), mu_prime.dim())?;
    if mu == mu_prime {
        return Ok(0.0);
    }
    if phi.is_legendre() && !mu_prime.is_interior() {
        return Ok(f64::INFINITY);
    }
    if let EntropyKind::Shannon = phi.kind {
        let kl: f64 = mu
            .iter()
            .zip(mu_prime.iter())
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, q)| m * (m / q).ln())
            .sum();
        return Ok(kl / phi.eta);
    }
    let g = grad(phi, mu_prime)?;
    let diff: Vec<f64> = mu.iter().zip(mu_prime.iter()).map(|(a, b)| a - b).collect();
    Ok(value(phi, mu) - value(phi, mu_prime) - dot(&diff, g.as_slice()))
}

/// D_Φ(δ_θ, uniform(K)) in closed form.
pub fn closed_form_regret(phi: &EntropySpec, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidDimension(k));
    }
    let kf = k as f64;
    let unit = match phi.kind {
        EntropyKind::Shannon | EntropyKind::Renyi { .. } => kf.ln(),
        EntropyKind::Quadratic => (kf - 1.0) / kf,
        EntropyKind::Tsallis { alpha } => (1.0 - kf.powf(-alpha)) / alpha,
    };
    Ok(unit / phi.eta)
}

/// Empirical evidence for the two Legendre conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendreProbe {
    pub strictly_convex: bool,
    pub boundary_gradient_unbounded: bool,
    /// Smallest midpoint gap `(Φ(a)+Φ(b))/2 − Φ((a+b)/2)` seen.
    pub min_midpoint_gap: f64,
    /// Mean-removed gradient norms along the path to δ_0, one per decade.
    pub gradient_norms: Vec<f64>,
}

/// Threshold on the gradient norm treated as divergence.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

const PROBE_PAIRS: usize = 500;
const PROBE_DECADES: i32 = 300;

/// Samples the midpoint inequality on random interior pairs and tracks the
/// gradient norm along `(1−t)·uniform + t·δ_0` for `1 − t = 10⁻¹ … 10⁻³⁰⁰`.
///
/// Divergence is declared when the norms are nondecreasing and either pass
/// [`BLOWUP_THRESHOLD`] or are still growing by more than one unit over the
/// last ten decades. The second clause catches logarithmic blow-up, which
/// cannot reach 1e6 in double precision.
pub fn legendre_probe(phi: &EntropySpec, k: usize, seed: u64) -> Result<LegendreProbe> {
    if k < 2 {
        return Err(Error::InvalidDimension(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_gap = f64::INFINITY;
    let mut tested = 0;
    while tested < PROBE_PAIRS {
        let a = simplex::random_point(&mut rng, k);
        let b = simplex::random_point(&mut rng, k);
        if a.max_abs_diff(&b) < 0.05 {
            continue;
        }
        let mid = a.mix(&b, 0.5)?;
        let gap = 0.5 * (value(phi, &a) + value(phi, &b)) - value(phi, &mid);
        min_gap = min_gap.min(gap);
        tested += 1;
    }
    let strictly_convex = min_gap > 0.0;

    let mut norms = Vec::with_capacity(PROBE_DECADES as usize);
    let kf = k as f64;
    for d in 1..=PROBE_DECADES {
        let s = 10f64.powi(-d);
        let mut w = vec![s / kf; k];
        w[0] = 1.0 - s * (kf - 1.0) / kf;
        let mu = ProbVector::from_raw(w);
        let g = grad(phi, &mu)?;
        let mean = g.iter().sum::<f64>() / kf;
        norms.push(g.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt());
    }
    let monotone = norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    let last = *norms.last().unwrap();
    let tail_growth = last - norms[norms.len() - 11];
    let unbounded = monotone && (last > BLOWUP_THRESHOLD || tail_growth > 1.0);
    Ok(LegendreProbe {
        strictly_convex,
        boundary_gradient_unbounded: unbounded,
        min_midpoint_gap: min_gap,
        gradient_norms: norms,
    })
}
