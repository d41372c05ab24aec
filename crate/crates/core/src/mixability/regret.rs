//! Optimal regret bounds `η*⁻¹ · inf_μ sup_θ D_Φ(δ_θ, μ)` and the resulting
//! ordering of entropies for a fixed loss.

use serde::{Deserialize, Serialize};

use super::{eta_star, EtaSearch, EtaStatus, MSample, MixSearchConfig};
use crate::entropy::{self, EntropySpec};
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::search::{zoom_minimize, ZoomConfig};
use crate::simplex::{self, ProbVector};

/// `inf_μ max_θ D_Φ(δ_θ, μ)` by lattice-and-zoom search, with the minimizer.
pub fn inf_sup_divergence(phi: &EntropySpec, k: usize, cfg: &MixSearchConfig) -> Result<(ProbVector, f64)> {
    if k < 2 {
        return Err(Error::InvalidDimension(k));
    }
    let vertices: Vec<ProbVector> = (0..k).map(|t| simplex::dirac(k, t)).collect::<Result<_>>()?;
    let zoom = ZoomConfig { coarse: cfg.prior_grid, ..cfg.response };
    zoom_minimize(k, &zoom, |mu| {
        let mu = if phi.is_legendre() { simplex::clamp_interior(mu, cfg.interior_eps) } else { mu.clone() };
        vertices
            .iter()
            .map(|d| entropy::bregman(phi, d, &mu).unwrap_or(f64::INFINITY))
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub eta: EtaSearch,
    /// `η*⁻¹ inf_μ sup_θ D_Φ(δ_θ, μ)`.
    pub regret: f64,
    /// `η*⁻¹ sup_θ D_Φ(δ_θ, uniform)`.
    pub uniform_regret: f64,
    pub inf_sup_divergence: f64,
    pub uniform_divergence: f64,
    pub minimizing_prior: ProbVector,
}

/// The best constant-regret bound available for ℓ from Φ.
pub fn optimal_regret(phi: &EntropySpec, loss: &LossSpec, cfg: &MixSearchConfig) -> Result<RegretReport> {
    let eta = eta_star(phi, loss, cfg)?;
    regret_from_search(phi, loss, cfg, eta)
}

fn regret_from_search(phi: &EntropySpec, loss: &LossSpec, cfg: &MixSearchConfig, eta: EtaSearch) -> Result<RegretReport> {
    if eta.status == EtaStatus::NotMixable {
        return Err(Error::UndefinedRegret(format!("{loss} under {phi}")));
    }
    let (minimizing_prior, inf_div) = inf_sup_divergence(phi, cfg.experts, cfg)?;
    let uniform_divergence = entropy::bregman(phi, &simplex::dirac(cfg.experts, 0)?, &simplex::uniform(cfg.experts)?)?;
    let inf_div = inf_div.min(uniform_divergence);
    Ok(RegretReport {
        regret: inf_div / eta.eta_star,
        uniform_regret: uniform_divergence / eta.eta_star,
        inf_sup_divergence: inf_div,
        uniform_divergence,
        minimizing_prior,
        eta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    /// The first entropy gives the strictly smaller bound.
    FirstDominates,
    /// The second entropy gives the strictly smaller bound.
    SecondDominates,
    /// The bounds agree within their search uncertainty.
    Equivalent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub first: String,
    pub second: String,
    pub regret_first: f64,
    pub regret_second: f64,
    /// Half-widths from the η bracket.
    pub uncertainty_first: f64,
    pub uncertainty_second: f64,
    pub ordering: Dominance,
}

fn uncertainty(r: &RegretReport) -> f64 {
    // the crossing lies in [lo, hi]
    r.inf_sup_divergence * (1.0 / r.eta.lo - 1.0 / r.eta.hi).abs() * 0.5
}

/// Compares the optimal regret of two entropies for the same loss.
pub fn dominance(phi: &EntropySpec, psi: &EntropySpec, loss: &LossSpec, cfg: &MixSearchConfig) -> Result<DominanceReport> {
    let a = optimal_regret(phi, loss, cfg)?;
    let b = if phi == psi { a.clone() } else { optimal_regret(psi, loss, cfg)? };
    let (ua, ub) = (uncertainty(&a), uncertainty(&b));
    let ordering = if (a.regret - b.regret).abs() <= ua + ub {
        Dominance::Equivalent
    } else if a.regret < b.regret {
        Dominance::FirstDominates
    } else {
        Dominance::SecondDominates
    };
    Ok(DominanceReport {
        first: phi.label(),
        second: psi.label(),
        regret_first: a.regret,
        regret_second: b.regret,
        uncertainty_first: ua,
        uncertainty_second: ub,
        ordering,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub experts: usize,
    pub outcomes: usize,
    pub action_grid: usize,
    pub prior_grid: usize,
    pub refine_resolution: usize,
    pub refine_radius: usize,
    pub response_grid: usize,
    pub response_min_step: f64,
    pub eta_lo: f64,
    pub eta_hi: f64,
    pub eta_tol: f64,
    pub band: f64,
}

impl From<&MixSearchConfig> for GridMetadata {
    fn from(c: &MixSearchConfig) -> Self {
        Self {
            experts: c.experts,
            outcomes: c.outcomes,
            action_grid: c.action_grid,
            prior_grid: c.prior_grid,
            refine_resolution: c.refine_resolution,
            refine_radius: c.refine_radius,
            response_grid: c.response.coarse,
            response_min_step: c.response.min_step,
            eta_lo: c.eta_lo,
            eta_hi: c.eta_hi,
            eta_tol: c.eta_tol,
            band: c.band,
        }
    }
}

/// Everything known about one (loss, entropy) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixabilityReport {
    pub loss: LossSpec,
    pub entropy: EntropySpec,
    pub loss_id: String,
    pub entropy_id: String,
    pub eta_star: f64,
    pub status: EtaStatus,
    pub samples: Vec<MSample>,
    /// Whether the samples are nonincreasing in η within 1e-6.
    pub samples_monotone: bool,
    pub regret: Option<f64>,
    pub uniform_regret: Option<f64>,
    pub inf_sup_divergence: f64,
    pub uniform_divergence: f64,
    pub grid: GridMetadata,
    pub seed: u64,
}

pub fn mixability_report(phi: &EntropySpec, loss: &LossSpec, cfg: &MixSearchConfig) -> Result<MixabilityReport> {
    let search = eta_star(phi, loss, cfg)?;
    let samples = search.samples.clone();
    let samples_monotone = samples.windows(2).all(|w| w[1].m <= w[0].m + 1e-6);
    let (eta_star, status) = (search.eta_star, search.status);
    let (regret, uniform_regret, inf_div, uni_div) = if status == EtaStatus::NotMixable {
        let (_, d) = inf_sup_divergence(phi, cfg.experts, cfg)?;
        let u = entropy::bregman(phi, &simplex::dirac(cfg.experts, 0)?, &simplex::uniform(cfg.experts)?)?;
        (None, None, d.min(u), u)
    } else {
        let r = regret_from_search(phi, loss, cfg, search)?;
        (Some(r.regret), Some(r.uniform_regret), r.inf_sup_divergence, r.uniform_divergence)
    };
    Ok(MixabilityReport {
        loss: loss.clone(),
        entropy: *phi,
        loss_id: loss.label(),
        entropy_id: phi.label(),
        eta_star,
        status,
        samples,
        samples_monotone,
        regret,
        uniform_regret,
        inf_sup_divergence: inf_div,
        uniform_divergence: uni_div,
        grid: GridMetadata::from(cfg),
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_minimizes_worst_divergence_for_symmetric_entropies() {
        let cfg = MixSearchConfig::default();
        for phi in ["H", "Q", "S-0.5", "S-0.9", "R-0.5"] {
            let phi: EntropySpec = phi.parse().unwrap();
            for k in [2, 3] {
                let (mu, d) = inf_sup_divergence(&phi, k, &cfg).unwrap();
                let cf = entropy::closed_form_regret(&phi, k).unwrap();
                assert!((d - cf).abs() < 1e-8, "{phi} K={k}: {d} vs {cf}");
                assert!(mu.max_abs_diff(&simplex::uniform(k).unwrap()) < 1e-4);
            }
        }
    }

    #[test]
    fn reflexive_dominance() {
        let cfg = MixSearchConfig { action_grid: 8, prior_grid: 8, refine_radius: 2, eta_tol: 1e-2, ..Default::default() };
        let h = EntropySpec::shannon();
        let d = dominance(&h, &h, &LossSpec::Log, &cfg).unwrap();
        assert_eq!(d.ordering, Dominance::Equivalent);
        assert_eq!(d.regret_first, d.regret_second);
    }

    #[test]
    fn regret_undefined_when_not_mixable() {
        let cfg = MixSearchConfig { action_grid: 10, prior_grid: 10, refine_radius: 2, ..Default::default() };
        let r = optimal_regret(&EntropySpec::quadratic(), &LossSpec::Squared, &cfg);
        assert!(matches!(r, Err(Error::UndefinedRegret(_))), "{r:?}");
    }
}
