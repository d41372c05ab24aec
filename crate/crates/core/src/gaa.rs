//! The generalized aggregating algorithm.
//!
//! The state lives in the dual space: `w^t = ∇Φ(μ⁰) − Σ_{s≤t} ℓ_{x^s}(A^s)`
//! and `μ^t = ∇Φ*(w^t)`. Each prediction is the best-response witness for
//! the mixability bound `Φ*(w) − Φ*(w − ℓ_x(A))`.

use serde::{Deserialize, Serialize};

use crate::entropy::{self, ascent_maximize, DualEvalConfig, EntropySpec};
use crate::error::{Error, Result};
use crate::loss::{self, ExpertPredictionSet, LossSpec};
use crate::mixability::{best_response_for_bounds, mix_from_dual};
use crate::search::ZoomConfig;
use crate::simplex::{check_dims, dot, DualVector, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaaConfig {
    pub response: ZoomConfig,
    pub dual: DualEvalConfig,
    /// Rounds whose best margin falls below `−violation_tol` are flagged.
    pub violation_tol: f64,
    /// Also solve the primal update directly and compare mixtures.
    pub cross_check: bool,
    pub cross_check_tol: f64,
}

impl Default for GaaConfig {
    fn default() -> Self {
        Self {
            response: ZoomConfig::default(),
            dual: DualEvalConfig::default(),
            violation_tol: 1e-8,
            cross_check: false,
            cross_check_tol: 1e-5,
        }
    }
}

/// Player state after t rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaaState {
    pub entropy: EntropySpec,
    pub mu: ProbVector,
    pub w: DualVector,
    /// Φ*(w), kept so consecutive bounds telescope exactly.
    pub conj_w: f64,
    pub t: usize,
}

/// A prediction together with the bounds it was chosen against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub action: ProbVector,
    /// `min_x [Mix_x − ℓ_x(p̂)]`.
    pub slack: f64,
    /// `Mix_x` for every outcome x.
    pub bounds: Vec<f64>,
    pub flagged: bool,
}

impl GaaState {
    /// Starts from μ⁰ with `w⁰ = ∇Φ(μ⁰)`.
    pub fn init(entropy: EntropySpec, mu0: ProbVector) -> Result<Self> {
        let w = entropy::grad(&entropy, &mu0)?;
        let conj_w = dot(mu0.as_slice(), w.as_slice()) - entropy::value(&entropy, &mu0);
        Ok(Self { entropy, mu: mu0, w, conj_w, t: 0 })
    }

    pub fn experts(&self) -> usize {
        self.mu.dim()
    }

    /// The mixability witness for this round.
    pub fn predict(&self, a: &ExpertPredictionSet, loss: &LossSpec, cfg: &GaaConfig) -> Result<Prediction> {
        check_dims(self.experts(), a.experts())?;
        let m = loss::loss_matrix(loss, a)?;
        let bounds = (0..m.outcomes())
            .map(|x| mix_from_dual(&self.entropy, &self.w, self.conj_w, m.row(x), &cfg.dual))
            .collect::<Result<Vec<_>>>()?;
        let (action, slack) = best_response_for_bounds(loss, &bounds, &cfg.response)?;
        Ok(Prediction { action, slack, flagged: slack < -cfg.violation_tol, bounds })
    }

    /// `w ← w − ℓ_x(A)`, `μ ← ∇Φ*(w)`. Returns the largest coordinate gap to
    /// the directly minimized update when cross-checking is on.
    pub fn update(
        &mut self,
        a: &ExpertPredictionSet,
        loss: &LossSpec,
        x: usize,
        cfg: &GaaConfig,
    ) -> Result<Option<f64>> {
        check_dims(self.experts(), a.experts())?;
        if x >= a.outcomes() {
            return Err(Error::IndexOutOfRange { index: x, dim: a.outcomes() });
        }
        let row = loss::loss_matrix(loss, a)?.row(x).clone();
        self.update_with_losses(&row, cfg)
    }

    /// The update for an explicit vector of expert losses.
    pub fn update_with_losses(&mut self, row: &DualVector, cfg: &GaaConfig) -> Result<Option<f64>> {
        check_dims(self.experts(), row.dim())?;
        let w = self.w.sub(row)?;
        let (conj, mu) = entropy::dual_solve(&self.entropy, &w, &cfg.dual)?;
        let deviation = if cfg.cross_check {
            let direct = argmin_update(&self.entropy, row, &self.mu, &cfg.dual)?;
            let d = direct.max_abs_diff(&mu);
            if d > cfg.cross_check_tol {
                return Err(Error::NumericalFailure { context: "update cross-check".into(), best: d });
            }
            Some(d)
        } else {
            None
        };
        self.w = w;
        self.conj_w = conj;
        self.mu = mu;
        self.t += 1;
        Ok(deviation)
    }
}

/// `argmin_{μ′} ⟨μ′, ℓ⟩ + D_Φ(μ′, μ)` by direct minimization.
pub fn argmin_update(phi: &EntropySpec, row: &DualVector, mu: &ProbVector, cfg: &DualEvalConfig) -> Result<ProbVector> {
    if mu.dim() == 1 {
        return Ok(mu.clone());
    }
    let g = entropy::grad(phi, mu)?;
    let res = ascent_maximize(
        |m| {
            let lin: f64 = m.iter().zip(mu.iter()).zip(g.iter()).map(|((a, b), gi)| (a - b) * gi).sum();
            -(dot(m, row.as_slice()) + entropy::unit_value(phi.kind, m) / phi.eta - lin)
        },
        |m| {
            let gm = entropy::unit_grad(phi.kind, m);
            row.iter().zip(gm).zip(g.iter()).map(|((l, a), b)| -(l + a / phi.eta - b)).collect()
        },
        mu,
        cfg.tolerance * 1e-2,
        cfg.max_iterations * 100,
    );
    Ok(res.argmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{self, uniform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(w: &[f64]) -> ProbVector {
        ProbVector::new(w.to_vec()).unwrap()
    }

    #[test]
    fn initial_state() {
        let s = GaaState::init(EntropySpec::shannon(), uniform(2).unwrap()).unwrap();
        assert!((s.w[0] - (0.5f64.ln() + 1.0)).abs() < 1e-15);
        assert_eq!(s.mu, uniform(2).unwrap());
        for phi in ["Q", "S-0.5", "R-0.9"] {
            let s = GaaState::init(phi.parse().unwrap(), uniform(4).unwrap()).unwrap();
            assert_eq!(s.mu, uniform(4).unwrap());
        }
        assert!(matches!(
            GaaState::init(EntropySpec::shannon(), pv(&[1.0, 0.0])),
            Err(Error::BoundaryGradient { .. })
        ));
    }

    #[test]
    fn shannon_update_is_multiplicative() {
        let eta = 0.7;
        let h = EntropySpec::shannon().with_eta(eta).unwrap();
        let mut s = GaaState::init(h, pv(&[0.2, 0.3, 0.5])).unwrap();
        let prev = s.mu.clone();
        let l = DualVector::new(vec![0.4, 1.1, 0.0]);
        s.update_with_losses(&l, &GaaConfig::default()).unwrap();
        let raw: Vec<f64> = prev.iter().zip(l.iter()).map(|(m, x)| m * (-eta * x).exp()).collect();
        let z: f64 = raw.iter().sum();
        for (a, b) in s.mu.iter().zip(raw.iter()) {
            assert!((a - b / z).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_and_constant_losses_leave_mixture_unchanged() {
        for phi in ["H", "Q", "S-0.5", "R-0.5"] {
            let mut s = GaaState::init(phi.parse().unwrap(), pv(&[0.2, 0.3, 0.5])).unwrap();
            let mu0 = s.mu.clone();
            s.update_with_losses(&DualVector::zeros(3), &GaaConfig::default()).unwrap();
            assert!(s.mu.max_abs_diff(&mu0) < 1e-9, "{phi}");
            let mut a = s.clone();
            let mut b = s.clone();
            let l = DualVector::new(vec![0.3, 0.9, 0.1]);
            a.update_with_losses(&l, &GaaConfig::default()).unwrap();
            b.update_with_losses(&l.shift(2.5), &GaaConfig::default()).unwrap();
            assert!(a.mu.max_abs_diff(&b.mu) < 1e-9, "{phi}");
        }
    }

    #[test]
    fn dual_update_matches_direct_minimization() {
        let cfg = GaaConfig { cross_check: true, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for phi in ["H", "Q", "S-0.5", "S-0.9", "R-0.5", "H/2"] {
            let mut s = GaaState::init(phi.parse().unwrap(), uniform(3).unwrap()).unwrap();
            for _ in 0..10 {
                let l = DualVector::new((0..3).map(|_| rng.gen_range(0.0..0.5)).collect());
                let d = s.update_with_losses(&l, &cfg).unwrap().unwrap();
                assert!(d <= 1e-5, "{phi}: {d}");
            }
        }
    }

    #[test]
    fn agreeing_experts_and_single_expert() {
        let cfg = GaaConfig::default();
        let a = pv(&[0.3, 0.7]);
        for phi in ["H", "S-0.5"] {
            let s = GaaState::init(phi.parse().unwrap(), uniform(3).unwrap()).unwrap();
            let set = ExpertPredictionSet::constant(a.clone(), 3).unwrap();
            for loss in [LossSpec::Log, LossSpec::Squared] {
                let p = s.predict(&set, &loss, &cfg).unwrap();
                assert!(p.action.max_abs_diff(&a) < 1e-6, "{phi} {loss}: {:?}", p.action);
                assert!(p.slack.abs() < 1e-8);
            }
        }
        let s = GaaState::init(EntropySpec::shannon(), pv(&[1.0])).unwrap();
        let one = ExpertPredictionSet::new(vec![pv(&[0.8, 0.2])]).unwrap();
        let p = s.predict(&one, &LossSpec::Log, &cfg).unwrap();
        assert!(p.action.max_abs_diff(one.get(0)) < 1e-6);
    }

    #[test]
    fn shannon_log_prediction_is_bayes_mixture() {
        let cfg = GaaConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = GaaState::init(EntropySpec::shannon(), uniform(3).unwrap()).unwrap();
        for _ in 0..20 {
            let a = ExpertPredictionSet::new((0..3).map(|_| simplex::random_point(&mut rng, 2)).collect()).unwrap();
            let p = s.predict(&a, &LossSpec::Log, &cfg).unwrap();
            let mix: Vec<f64> =
                (0..2).map(|x| s.mu.iter().zip(a.actions()).map(|(m, q)| m * q[x]).sum()).collect();
            assert!((p.action[0] - mix[0]).abs() < 1e-6);
            assert!(!p.flagged);
            let x = rng.gen_range(0..2);
            let realized = LossSpec::Log.loss_vector(&p.action).unwrap()[x];
            assert!(realized <= p.bounds[x] + 1e-8);
            s.update(&a, &LossSpec::Log, x, &cfg).unwrap();
        }
    }
}
