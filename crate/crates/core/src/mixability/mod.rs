//! The mixability bound, the three-term objective M(η), the mixability
//! constant, the entropic form of the mixability condition, and optimal
//! regret bounds.
//!
//! For an entropy Φ on Δ_K, a loss ℓ on Δ_X, expert predictions A and a
//! mixture π, the bound on outcome x is
//! `Mix_x = inf_μ ⟨μ, ℓ_x(A)⟩ + D_Φ(μ, π) = Φ*(∇Φ(π)) − Φ*(∇Φ(π) − ℓ_x(A))`.
//! The loss is Φ-mixable when some prediction p̂ has `ℓ_x(p̂) ≤ Mix_x` for all
//! x, for every (A, π). M(η) is the worst case over (A, π) of the best such
//! margin for Φ/η.

mod regret;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{self, ascent_maximize, DualEvalConfig, EntropySpec};
use crate::error::{Error, Result};
use crate::loss::{self, ExpertPredictionSet, LossSpec};
use crate::search::{zoom_maximize, ZoomConfig};
use crate::simplex::{self, check_dims, dot, DualVector, ProbVector};

pub use regret::{
    dominance, inf_sup_divergence, mixability_report, optimal_regret, DominanceReport, Dominance,
    GridMetadata, MixabilityReport, RegretReport,
};

/// Grid and tolerance settings for the mixability searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixSearchConfig {
    /// Number of experts K.
    pub experts: usize,
    /// Number of outcomes |X|.
    pub outcomes: usize,
    /// Coarse lattice resolution for each expert prediction.
    pub action_grid: usize,
    /// Coarse lattice resolution for the mixture π (and μ in regret searches).
    pub prior_grid: usize,
    /// Lattice resolution of the refinement pass.
    pub refine_resolution: usize,
    /// Half-width, in fine steps, of the refinement neighbourhood.
    pub refine_radius: usize,
    /// Search for the best response p̂.
    pub response: ZoomConfig,
    pub eta_lo: f64,
    pub eta_hi: f64,
    /// Relative tolerance of the bisection on η.
    pub eta_tol: f64,
    /// Values of M at or above `−band` count as nonnegative. Computed margins
    /// at mixable η sit within about 1e-10 of zero; a wider band biases η*
    /// upward where M leaves zero quadratically.
    pub band: f64,
    /// Clamping for mixtures of Legendre entropies.
    pub interior_eps: f64,
    pub dual: DualEvalConfig,
    pub seed: u64,
}

impl Default for MixSearchConfig {
    fn default() -> Self {
        Self {
            experts: 2,
            outcomes: 2,
            action_grid: 25,
            prior_grid: 25,
            refine_resolution: 200,
            refine_radius: 8,
            response: ZoomConfig::default(),
            eta_lo: 1e-3,
            eta_hi: 1e3,
            eta_tol: 1e-3,
            band: 1e-8,
            interior_eps: simplex::DEFAULT_INTERIOR_EPS,
            dual: DualEvalConfig::default(),
            seed: 20_240_601,
        }
    }
}

impl MixSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experts < 2 || self.outcomes < 2 {
            return Err(Error::InvalidDimension(self.experts.min(self.outcomes)));
        }
        if !(self.eta_lo > 0.0 && self.eta_hi > self.eta_lo) {
            return Err(Error::InvalidParameter(format!(
                "eta bracket [{}, {}] must satisfy 0 < lo < hi",
                self.eta_lo, self.eta_hi
            )));
        }
        if !(self.eta_tol > 0.0) || self.band < 0.0 {
            return Err(Error::InvalidParameter("eta tolerance must be positive".into()));
        }
        if self.action_grid < 2 || self.prior_grid < 2 || self.refine_resolution < 2 {
            return Err(Error::InvalidParameter("grid resolutions must be at least 2".into()));
        }
        self.dual.validate()
    }
}

/// A mixture π prepared for repeated bound evaluations.
#[derive(Debug, Clone)]
pub(crate) struct Prior {
    pub pi: ProbVector,
    pub grad: DualVector,
    /// Φ*(∇Φ(π)), by the Fenchel–Young equality.
    pub conj: f64,
}

impl Prior {
    pub fn new(phi: &EntropySpec, pi: ProbVector) -> Result<Self> {
        let grad = entropy::grad(phi, &pi)?;
        let conj = dot(pi.as_slice(), grad.as_slice()) - entropy::value(phi, &pi);
        Ok(Self { pi, grad, conj })
    }
}

/// `Φ*(w) − Φ*(w − row)` given `Φ*(w)`. A constant row returns its value
/// exactly, by translation invariance of the dual.
pub(crate) fn mix_from_dual(
    phi: &EntropySpec,
    w: &DualVector,
    conj_w: f64,
    row: &DualVector,
    cfg: &DualEvalConfig,
) -> Result<f64> {
    let first = row[0];
    if row.iter().all(|r| *r == first) {
        return Ok(first);
    }
    let shifted = w.sub(row)?;
    Ok(conj_w - entropy::entropic_dual(phi, &shifted, cfg)?)
}

fn bounds_for_rows(phi: &EntropySpec, prior: &Prior, rows: &[DualVector], cfg: &DualEvalConfig) -> Result<Vec<f64>> {
    rows.iter().map(|r| mix_from_dual(phi, &prior.grad, prior.conj, r, cfg)).collect()
}

/// The prediction maximizing `min_x (mix_x − ℓ_x(p̂))`, and that margin.
pub fn best_response_for_bounds(loss: &LossSpec, mix: &[f64], zoom: &ZoomConfig) -> Result<(ProbVector, f64)> {
    zoom_maximize(mix.len(), zoom, |q| match loss.loss_vector(q) {
        Ok(l) => mix.iter().zip(l.iter()).map(|(m, lx)| m - lx).fold(f64::INFINITY, f64::min),
        Err(_) => f64::NEG_INFINITY,
    })
}

fn loss_rows(loss: &LossSpec, a: &ExpertPredictionSet) -> Result<Vec<DualVector>> {
    let m = loss::loss_matrix(loss, a)?;
    Ok((0..m.outcomes()).map(|x| m.row(x).clone()).collect())
}

fn check_outcome(a: &ExpertPredictionSet, x: usize) -> Result<()> {
    if x >= a.outcomes() {
        return Err(Error::IndexOutOfRange { index: x, dim: a.outcomes() });
    }
    Ok(())
}

/// `Φ*(∇Φ(μ)) − Φ*(∇Φ(μ) − ℓ_x(A))`.
pub fn mix_dual(
    phi: &EntropySpec,
    loss: &LossSpec,
    a: &ExpertPredictionSet,
    mu: &ProbVector,
    x: usize,
    cfg: &DualEvalConfig,
) -> Result<f64> {
    check_dims(a.experts(), mu.dim())?;
    check_outcome(a, x)?;
    let prior = Prior::new(phi, mu.clone())?;
    let rows = loss_rows(loss, a)?;
    mix_from_dual(phi, &prior.grad, prior.conj, &rows[x], cfg)
}

/// `inf_{μ′} ⟨μ′, ℓ_x(A)⟩ + D_Φ(μ′, μ)`, minimized directly over the simplex.
pub fn mix_inf(
    phi: &EntropySpec,
    loss: &LossSpec,
    a: &ExpertPredictionSet,
    mu: &ProbVector,
    x: usize,
    cfg: &DualEvalConfig,
) -> Result<f64> {
    check_dims(a.experts(), mu.dim())?;
    check_outcome(a, x)?;
    let row = loss_rows(loss, a)?.swap_remove(x);
    mix_inf_row(phi, &row, mu, cfg)
}

pub(crate) fn mix_inf_row(phi: &EntropySpec, row: &DualVector, mu: &ProbVector, cfg: &DualEvalConfig) -> Result<f64> {
    let g = entropy::grad(phi, mu)?;
    let base = entropy::value(phi, mu);
    let objective = |m: &[f64]| -> f64 {
        let lin: f64 = m.iter().zip(mu.iter()).zip(g.iter()).map(|((a, b), gi)| (a - b) * gi).sum();
        dot(m, row.as_slice()) + entropy::unit_value(phi.kind, m) / phi.eta - base - lin
    };
    let res = ascent_maximize(
        |m| -objective(m),
        |m| {
            let gm = entropy::unit_grad(phi.kind, m);
            row.iter().zip(gm).zip(g.iter()).map(|((l, a), b)| -(l + a / phi.eta - b)).collect()
        },
        mu,
        cfg.tolerance * 1e-1,
        cfg.max_iterations * 100,
    );
    let mut best = -res.value;
    // vertices, which the multiplicative iteration approaches but never reaches
    for theta in 0..mu.dim() {
        let d = entropy::bregman(phi, &simplex::dirac(mu.dim(), theta)?, mu)?;
        best = best.min(row[theta] + d);
    }
    Ok(best)
}

/// The prediction witnessing the mixability inequality at (A, μ) and its margin
/// `min_x [Mix_x − ℓ_x(p̂)]`.
pub fn find_best_response(
    phi: &EntropySpec,
    loss: &LossSpec,
    a: &ExpertPredictionSet,
    mu: &ProbVector,
    cfg: &MixSearchConfig,
) -> Result<(ProbVector, f64)> {
    check_dims(a.experts(), mu.dim())?;
    let prior = Prior::new(phi, mu.clone())?;
    let mix = bounds_for_rows(phi, &prior, &loss_rows(loss, a)?, &cfg.dual)?;
    best_response_for_bounds(loss, &mix, &cfg.response)
}

/// Worst case found by a grid search over (A, π).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWitness {
    pub value: f64,
    pub actions: Vec<ProbVector>,
    pub prior: ProbVector,
    /// Number of (A, π) points evaluated.
    pub evaluated: usize,
}

/// One evaluation of M(η).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MEvaluation {
    pub eta: f64,
    pub value: f64,
    pub witness: GridWitness,
    /// Best response at the witness.
    pub response: ProbVector,
}

/// Multisets of size k from 0..n in nondecreasing order.
fn sorted_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn cartesian(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::with_capacity(sizes.len())];
    for &s in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..s).map(move |i| {
                    let mut p = prefix.clone();
                    p.push(i);
                    p
                })
            })
            .collect();
    }
    out
}

/// Minimizes `objective(expert loss vectors, prior)` over a coarse lattice of
/// (A, π), then over a fine lattice around the coarse minimizer.
///
/// Expert tuples on the coarse lattice are enumerated in sorted order only;
/// relabelling experts permutes π as well, and the π lattice is closed under
/// permutation, so nothing is lost. Values are computed in parallel and
/// reduced sequentially, keeping the first minimum.
fn grid_minimize<O>(phi: &EntropySpec, loss: &LossSpec, cfg: &MixSearchConfig, objective: O) -> Result<GridWitness>
where
    O: Fn(&[&DualVector], &Prior) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let (k, nx) = (cfg.experts, cfg.outcomes);
    let prepare_priors = |pts: Vec<ProbVector>| -> Result<Vec<Prior>> {
        pts.into_iter()
            .map(|p| {
                let p = if phi.is_legendre() { simplex::clamp_interior(&p, cfg.interior_eps) } else { p };
                Prior::new(phi, p)
            })
            .collect()
    };
    let loss_vectors = |pts: &[ProbVector]| -> Result<Vec<DualVector>> {
        pts.iter().map(|a| loss.loss_vector(a)).collect()
    };

    // coarse pass
    let actions = simplex::simplex_grid(nx, cfg.action_grid, 0.0)?;
    let losses = loss_vectors(&actions)?;
    let priors = prepare_priors(simplex::simplex_grid(k, cfg.prior_grid, 0.0)?)?;
    let tuples = sorted_tuples(actions.len(), k);
    let n = tuples.len() * priors.len();
    let values: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (t, p) = (&tuples[i / priors.len()], &priors[i % priors.len()]);
            let ls: Vec<&DualVector> = t.iter().map(|&j| &losses[j]).collect();
            objective(&ls, p)
        })
        .collect();
    let (best_i, best_v) = first_min(values)?;
    let coarse_t = &tuples[best_i / priors.len()];
    let coarse_p = &priors[best_i % priors.len()];
    let mut witness = GridWitness {
        value: best_v,
        actions: coarse_t.iter().map(|&j| actions[j].clone()).collect(),
        prior: coarse_p.pi.clone(),
        evaluated: n,
    };

    // refinement pass
    let step = 1.0 / cfg.refine_resolution as f64;
    let mut radius = cfg.refine_radius;
    let (local_actions, local_priors) = loop {
        let la: Vec<Vec<ProbVector>> =
            witness.actions.iter().map(|a| simplex::local_lattice(a, step, radius)).collect();
        let lp = simplex::local_lattice(&witness.prior, step, radius);
        let size = la.iter().map(|v| v.len()).product::<usize>() * lp.len();
        if size <= 250_000 || radius <= 1 {
            break (la, lp);
        }
        radius -= 1;
    };
    let local_losses = local_actions.iter().map(|v| loss_vectors(v)).collect::<Result<Vec<_>>>()?;
    let local_priors = prepare_priors(local_priors)?;
    let mut sizes: Vec<usize> = local_actions.iter().map(|v| v.len()).collect();
    sizes.push(local_priors.len());
    let combos = cartesian(&sizes);
    let values: Vec<Result<f64>> = combos
        .par_iter()
        .map(|c| {
            let ls: Vec<&DualVector> = (0..k).map(|t| &local_losses[t][c[t]]).collect();
            objective(&ls, &local_priors[c[k]])
        })
        .collect();
    witness.evaluated += combos.len();
    let (fi, fv) = first_min(values)?;
    if fv < witness.value {
        let c = &combos[fi];
        witness.value = fv;
        witness.actions = (0..k).map(|t| local_actions[t][c[t]].clone()).collect();
        witness.prior = local_priors[c[k]].pi.clone();
    }
    Ok(witness)
}

fn first_min(values: Vec<Result<f64>>) -> Result<(usize, f64)> {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        if v < best.1 {
            best = (i, v);
        }
    }
    Ok(best)
}

fn rows_from(ls: &[&DualVector]) -> Vec<DualVector> {
    (0..ls[0].dim()).map(|x| DualVector::new(ls.iter().map(|l| l[x]).collect())).collect()
}

/// M(η): the smallest, over the (A, π) lattices, of the best-response margin
/// under Φ/η.
pub fn m_eta(eta: f64, phi: &EntropySpec, loss: &LossSpec, cfg: &MixSearchConfig) -> Result<MEvaluation> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} must be positive")));
    }
    let phi_eta = phi.scaled(eta)?;
    let witness = grid_minimize(&phi_eta, loss, cfg, |ls, prior| {
        let mix = bounds_for_rows(&phi_eta, prior, &rows_from(ls), &cfg.dual)?;
        Ok(best_response_for_bounds(loss, &mix, &cfg.response)?.1)
    })?;
    let a = ExpertPredictionSet::new(witness.actions.clone())?;
    let (response, _) = find_best_response(&phi_eta, loss, &a, &witness.prior, cfg)?;
    Ok(MEvaluation { eta, value: witness.value, witness, response })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaStatus {
    /// The crossing lies inside the bracket.
    Found,
    /// M is already negative at the lower end: η* = 0.
    NotMixable,
    /// M is nonnegative at the upper end: only η* ≥ eta_hi is known.
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MSample {
    pub eta: f64,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSearch {
    pub eta_star: f64,
    pub status: EtaStatus,
    /// Final bracket: M(lo) ≥ −band > M(hi).
    pub lo: f64,
    pub hi: f64,
    /// Every evaluation of M, sorted by η.
    pub samples: Vec<MSample>,
}

/// Largest η with M(η) ≥ −band, by bisection on log η. The reported η* is
/// the largest evaluated η that passed.
pub fn eta_star(phi: &EntropySpec, loss: &LossSpec, cfg: &MixSearchConfig) -> Result<EtaSearch> {
    cfg.validate()?;
    let mut samples = Vec::new();
    let mut eval = |eta: f64| -> Result<bool> {
        let m = m_eta(eta, phi, loss, cfg)?.value;
        samples.push(MSample { eta, m });
        Ok(m >= -cfg.band)
    };
    let (mut lo, mut hi) = (cfg.eta_lo, cfg.eta_hi);
    let status = if !eval(lo)? {
        EtaStatus::NotMixable
    } else if eval(hi)? {
        EtaStatus::LowerBound
    } else {
        while hi / lo > 1.0 + cfg.eta_tol {
            let mid = (lo * hi).sqrt();
            if eval(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        EtaStatus::Found
    };
    let eta_star = match status {
        EtaStatus::NotMixable => 0.0,
        EtaStatus::LowerBound => hi,
        EtaStatus::Found => lo,
    };
    samples.sort_by(|a, b| a.eta.total_cmp(&b.eta));
    Ok(EtaSearch { eta_star, status, lo, hi, samples })
}

/// Result of the entropic-form mixability test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEvaluation {
    pub gap: f64,
    pub witness: GridWitness,
}

/// `sup_{P, μ} F*(−Mix(P, μ))` for the proper loss of F under Φ. F is
/// Φ-mixable exactly when this is nonpositive.
pub fn entropic_mixability_gap(f: &EntropySpec, phi: &EntropySpec, cfg: &MixSearchConfig) -> Result<GapEvaluation> {
    let loss = LossSpec::proper(*f);
    let mut witness = grid_minimize(phi, &loss, cfg, |ls, prior| {
        let mix = bounds_for_rows(phi, prior, &rows_from(ls), &cfg.dual)?;
        let u = DualVector::new(mix.iter().map(|m| -m).collect());
        Ok(-entropy::entropic_dual(f, &u, &cfg.dual)?)
    })?;
    witness.value = -witness.value;
    Ok(GapEvaluation { gap: witness.value, witness })
}
