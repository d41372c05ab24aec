//! Losses over probability predictions, loss matrices and Bayes risk.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::{self, DualEvalConfig, EntropySpec};
use crate::error::{Error, Result};
use crate::simplex::{self, check_dims, dot, DualVector, ProbVector};

/// Clamping constant applied to log-loss predictions.
pub const LOG_LOSS_EPS: f64 = 1e-12;
/// Clamping constant applied to predictions of proper losses built from a
/// Legendre entropy.
pub const PROPER_LOSS_EPS: f64 = 1e-9;

/// A loss `ℓ: Δ_X → R^X`.
pub trait Loss: Sync {
    fn eval(&self, action: &ProbVector) -> Result<DualVector>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    Log,
    Squared,
    /// The proper loss `ℓ^F(p) = F*(∇F(p))·1 − ∇F(p)`.
    Proper { entropy: EntropySpec },
    /// The same loss vector for every action.
    Constant { values: Vec<f64> },
}

impl LossSpec {
    pub fn proper(entropy: EntropySpec) -> Self {
        LossSpec::Proper { entropy }
    }

    pub fn label(&self) -> String {
        match self {
            LossSpec::Log => "log".into(),
            LossSpec::Squared => "squared".into(),
            LossSpec::Proper { entropy } => format!("l^{}", entropy.label()),
            LossSpec::Constant { .. } => "constant".into(),
        }
    }

    pub fn is_proper(&self) -> bool {
        matches!(self, LossSpec::Log | LossSpec::Squared | LossSpec::Proper { .. })
    }

    /// Loss vector with boundary predictions clamped into the interior.
    pub fn loss_vector(&self, a: &ProbVector) -> Result<DualVector> {
        match self {
            LossSpec::Log => Ok(DualVector::new(
                a.iter().map(|p| -p.max(LOG_LOSS_EPS).ln()).collect(),
            )),
            LossSpec::Proper { entropy } if entropy.is_legendre() => {
                proper_loss_from_entropy(entropy, &simplex::clamp_interior(a, PROPER_LOSS_EPS))
            }
            _ => self.loss_vector_unclamped(a),
        }
    }

    /// Loss vector without clamping; boundary predictions under log loss or
    /// a Legendre proper loss are errors.
    pub fn loss_vector_unclamped(&self, a: &ProbVector) -> Result<DualVector> {
        match self {
            LossSpec::Log => {
                if let Some(outcome) = a.iter().position(|p| *p <= 0.0) {
                    return Err(Error::InfiniteLoss { outcome });
                }
                Ok(DualVector::new(a.iter().map(|p| -p.ln()).collect()))
            }
            LossSpec::Squared => {
                let norm2: f64 = a.iter().map(|p| p * p).sum();
                Ok(DualVector::new(a.iter().map(|p| norm2 - 2.0 * p + 1.0).collect()))
            }
            LossSpec::Proper { entropy } => proper_loss_from_entropy(entropy, a),
            LossSpec::Constant { values } => {
                check_dims(values.len(), a.dim())?;
                Ok(DualVector::new(values.clone()))
            }
        }
    }
}

impl Loss for LossSpec {
    fn eval(&self, action: &ProbVector) -> Result<DualVector> {
        self.loss_vector(action)
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Accepts the JSON form or the shorthands `log`, `squared` and
/// `l^<entropy>` (e.g. `l^Q`, `l^S-0.5`).
impl FromStr for LossSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s)
                .map_err(|e| Error::InvalidParameter(format!("loss spec `{s}`: {e}")));
        }
        match s {
            "log" => Ok(LossSpec::Log),
            "squared" => Ok(LossSpec::Squared),
            _ => match s.strip_prefix("l^") {
                Some(e) => Ok(LossSpec::proper(e.parse()?)),
                None => Err(Error::InvalidParameter(format!("unknown loss `{s}`"))),
            },
        }
    }
}

/// `ℓ^F(p)` via the Fenchel–Young equality `F*(∇F(p)) = ⟨p,∇F(p)⟩ − F(p)`.
pub fn proper_loss_from_entropy(f: &EntropySpec, p: &ProbVector) -> Result<DualVector> {
    let g = entropy::grad(f, p)?;
    let conj = dot(p.as_slice(), g.as_slice()) - entropy::value(f, p);
    Ok(DualVector::new(g.iter().map(|gi| conj - gi).collect()))
}

/// `ℓ^F(p)` with `F*(∇F(p))` evaluated by the numerical dual solver.
pub fn proper_loss_via_dual(f: &EntropySpec, p: &ProbVector, cfg: &DualEvalConfig) -> Result<DualVector> {
    let g = entropy::grad(f, p)?;
    let conj = entropy::entropic_dual(f, &g, cfg)?;
    Ok(DualVector::new(g.iter().map(|gi| conj - gi).collect()))
}

/// One prediction per expert, all over the same outcome set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPredictionSet {
    actions: Vec<ProbVector>,
}

impl ExpertPredictionSet {
    pub fn new(actions: Vec<ProbVector>) -> Result<Self> {
        let first = actions.first().ok_or(Error::InvalidDimension(0))?;
        for a in &actions {
            check_dims(first.dim(), a.dim())?;
        }
        Ok(Self { actions })
    }

    /// All experts predict the same action.
    pub fn constant(a: ProbVector, experts: usize) -> Result<Self> {
        Self::new(vec![a; experts])
    }

    pub fn experts(&self) -> usize {
        self.actions.len()
    }

    pub fn outcomes(&self) -> usize {
        self.actions[0].dim()
    }

    pub fn actions(&self) -> &[ProbVector] {
        &self.actions
    }

    pub fn get(&self, theta: usize) -> &ProbVector {
        &self.actions[theta]
    }
}

/// Entries `ℓ_x(A_θ)` stored by outcome, then expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    rows: Vec<DualVector>,
}

impl LossMatrix {
    pub fn outcomes(&self) -> usize {
        self.rows.len()
    }

    pub fn experts(&self) -> usize {
        self.rows[0].dim()
    }

    /// `ℓ_x(A)`, the loss of every expert on outcome x.
    pub fn row(&self, x: usize) -> &DualVector {
        &self.rows[x]
    }

    pub fn get(&self, x: usize, theta: usize) -> f64 {
        self.rows[x][theta]
    }

    /// Column θ: the loss vector of expert θ.
    pub fn column(&self, theta: usize) -> DualVector {
        DualVector::new(self.rows.iter().map(|r| r[theta]).collect())
    }
}

pub fn loss_vector(loss: &LossSpec, a: &ProbVector) -> Result<DualVector> {
    loss.loss_vector(a)
}

pub fn loss_matrix<L: Loss + ?Sized>(loss: &L, a: &ExpertPredictionSet) -> Result<LossMatrix> {
    let cols = a.actions().iter().map(|p| loss.eval(p)).collect::<Result<Vec<_>>>()?;
    let outcomes = a.outcomes();
    for c in &cols {
        check_dims(outcomes, c.dim())?;
    }
    let rows = (0..outcomes)
        .map(|x| DualVector::new(cols.iter().map(|c| c[x]).collect()))
        .collect();
    Ok(LossMatrix { rows })
}

/// Default action-grid resolution for an outcome count.
pub fn default_action_resolution(outcomes: usize) -> usize {
    match outcomes {
        0..=2 => 200,
        3 => 60,
        4 => 20,
        _ => 10,
    }
}

/// Minimizing grid action and the attained expected loss `min_a ⟨p, ℓ(a)⟩`.
/// Ties go to the lexicographically first grid point.
pub fn bayes_act<L: Loss + ?Sized>(loss: &L, p: &ProbVector, resolution: usize) -> Result<(ProbVector, f64)> {
    let grid = simplex::simplex_grid(p.dim(), resolution, 0.0)?;
    let mut best: Option<(ProbVector, f64)> = None;
    for a in grid {
        let r = dot(p.as_slice(), loss.eval(&a)?.as_slice());
        if best.as_ref().map_or(true, |(_, b)| r < *b) {
            best = Some((a, r));
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// `min_a ⟨p, ℓ(a)⟩` over the action grid.
pub fn bayes_risk<L: Loss + ?Sized>(loss: &L, p: &ProbVector, resolution: usize) -> Result<f64> {
    Ok(bayes_act(loss, p, resolution)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprietyReport {
    pub samples: usize,
    pub resolution: usize,
    /// Samples whose grid minimizer lies outside the lattice cells around p,
    /// i.e. farther than `(|X|−1)/resolution` in sup norm.
    pub violations: usize,
    /// Largest sup-norm distance between p and its grid minimizer.
    pub max_distance: f64,
    pub seed: u64,
}

/// Checks that the expected loss under p is minimized near `p̂ = p`.
pub fn propriety_check<L: Loss + ?Sized>(
    loss: &L,
    outcomes: usize,
    samples: usize,
    resolution: usize,
    seed: u64,
) -> Result<ProprietyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = (outcomes.max(2) - 1) as f64 / resolution as f64;
    let mut violations = 0;
    let mut max_distance: f64 = 0.0;
    for _ in 0..samples {
        let p = simplex::random_point(&mut rng, outcomes);
        let (a, _) = bayes_act(loss, &p, resolution)?;
        let d = a.max_abs_diff(&p);
        max_distance = max_distance.max(d);
        if d > cell + 1e-12 {
            violations += 1;
        }
    }
    Ok(ProprietyReport { samples, resolution, violations, max_distance, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiconvexityReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest excess of the chord value over the endpoint maximum.
    pub worst_excess: f64,
    pub seed: u64,
}

/// Samples chords `t·q1 + (1−t)·q2` and checks
/// `⟨p, ℓ(chord)⟩ ≤ max(⟨p,ℓ(q1)⟩, ⟨p,ℓ(q2)⟩) + 1e-9`.
pub fn quasiconvexity_probe<L: Loss + ?Sized>(
    loss: &L,
    p: &ProbVector,
    trials: usize,
    seed: u64,
) -> Result<QuasiconvexityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = p.dim();
    let risk = |q: &ProbVector| -> Result<f64> { Ok(dot(p.as_slice(), loss.eval(q)?.as_slice())) };
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let q1 = simplex::random_point(&mut rng, k);
        let q2 = simplex::random_point(&mut rng, k);
        let t: f64 = rng.gen_range(0.0..1.0);
        let mid = q1.mix(&q2, t)?;
        let excess = risk(&mid)? - risk(&q1)?.max(risk(&q2)?);
        worst = worst.max(excess);
        if excess > 1e-9 {
            violations += 1;
        }
    }
    Ok(QuasiconvexityReport { trials, violations, worst_excess: worst, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{dirac, uniform};

    fn pv(w: &[f64]) -> ProbVector {
        ProbVector::new(w.to_vec()).unwrap()
    }

    fn proper(s: &str) -> LossSpec {
        LossSpec::proper(s.parse().unwrap())
    }

    struct Negated;
    impl Loss for Negated {
        fn eval(&self, a: &ProbVector) -> Result<DualVector> {
            Ok(DualVector::new(a.iter().map(|x| -x).collect()))
        }
    }

    #[test]
    fn basic_loss_vectors() {
        let l = loss_vector(&LossSpec::Log, &uniform(2).unwrap()).unwrap();
        assert!((l[0] - 2f64.ln()).abs() < 1e-15 && (l[1] - 2f64.ln()).abs() < 1e-15);
        let s = loss_vector(&LossSpec::Squared, &pv(&[1.0, 0.0])).unwrap();
        assert_eq!(s.as_slice(), &[0.0, 2.0]);
        assert!(loss_vector(&LossSpec::Log, &pv(&[1.0, 0.0])).unwrap()[1].is_finite());
        assert_eq!(
            LossSpec::Log.loss_vector_unclamped(&pv(&[1.0, 0.0])),
            Err(Error::InfiniteLoss { outcome: 1 })
        );
    }

    #[test]
    fn shannon_proper_loss_is_log_loss() {
        let h = EntropySpec::shannon();
        let l = proper_loss_from_entropy(&h, &pv(&[0.3, 0.7])).unwrap();
        assert!((l[0] + 0.3f64.ln()).abs() < 1e-12);
        assert!((l[1] + 0.7f64.ln()).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let k = rng.gen_range(2..6);
            let p = simplex::clamp_interior(&simplex::random_point(&mut rng, k), 1e-6);
            let a = loss_vector(&LossSpec::proper(h), &p).unwrap();
            let b = loss_vector(&LossSpec::Log, &p).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-9);
        }
    }

    #[test]
    fn quadratic_proper_loss_matches_dual_route_and_grid() {
        let lq = proper("Q");
        let p = pv(&[0.75, 0.25]);
        let a = loss_vector(&lq, &p).unwrap();
        let b = proper_loss_via_dual(&EntropySpec::quadratic(), &p, &DualEvalConfig::default()).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
        // ‖p − δ_x‖² − 1 + 1/K
        assert!((a[0] - (0.0625 + 0.0625 - 0.5)).abs() < 1e-15);
        let (act, _) = bayes_act(&lq, &p, 200).unwrap();
        assert!(act.max_abs_diff(&p) < 1e-12);
    }

    #[test]
    fn bayes_risk_identity_for_tsallis() {
        let f: EntropySpec = "S-0.5".parse().unwrap();
        let p = pv(&[0.6, 0.4]);
        let l = proper_loss_from_entropy(&f, &p).unwrap();
        assert!((dot(p.as_slice(), l.as_slice()) + entropy::value(&f, &p)).abs() < 1e-7);
        let via_dual = proper_loss_via_dual(&f, &p, &DualEvalConfig::default()).unwrap();
        assert!(l.max_abs_diff(&via_dual) < 1e-9);
    }

    #[test]
    fn loss_matrices() {
        let a = ExpertPredictionSet::new(vec![pv(&[0.5, 0.5]), pv(&[0.9, 0.1])]).unwrap();
        let m = loss_matrix(&LossSpec::Log, &a).unwrap();
        let expected = [[2f64.ln(), -(0.9f64.ln())], [2f64.ln(), -(0.1f64.ln())]];
        for x in 0..2 {
            for t in 0..2 {
                assert!((m.get(x, t) - expected[x][t]).abs() < 1e-15);
            }
        }
        assert!((m.get(0, 1) - 0.1054).abs() < 1e-4 && (m.get(1, 1) - 2.3026).abs() < 1e-4);
        let one = ExpertPredictionSet::new(vec![dirac(2, 0).unwrap()]).unwrap();
        let m = loss_matrix(&LossSpec::Squared, &one).unwrap();
        assert_eq!(m.column(0).as_slice(), &[0.0, 2.0]);
        let single = pv(&[0.2, 0.3, 0.5]);
        let m = loss_matrix(&proper("S-0.5"), &ExpertPredictionSet::new(vec![single.clone()]).unwrap()).unwrap();
        assert_eq!(m.column(0), loss_vector(&proper("S-0.5"), &single).unwrap());
        assert!(ExpertPredictionSet::new(vec![pv(&[1.0, 0.0]), pv(&[0.2, 0.3, 0.5])]).is_err());
    }

    #[test]
    fn bayes_risks() {
        let r = bayes_risk(&LossSpec::Log, &uniform(2).unwrap(), 200).unwrap();
        assert!((r - 2f64.ln()).abs() < 1e-15);
        let r = bayes_risk(&LossSpec::Squared, &uniform(2).unwrap(), 200).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for f in ["H", "Q", "S-0.5", "S-0.9", "R-0.5"] {
            let fs: EntropySpec = f.parse().unwrap();
            for _ in 0..5 {
                let p = simplex::random_point(&mut rng, 2);
                let r = bayes_risk(&LossSpec::proper(fs), &p, 200).unwrap();
                assert!((r + entropy::value(&fs, &p)).abs() <= 2.0 / 200.0, "{f}");
            }
        }
    }

    #[test]
    fn bregman_gap_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for f in ["H", "Q", "S-0.5", "S-0.1", "S2", "R-0.5", "R-0.9"] {
            let fs: EntropySpec = f.parse().unwrap();
            for _ in 0..100 {
                let k = rng.gen_range(2..5);
                let p = simplex::clamp_interior(&simplex::random_point(&mut rng, k), 1e-3);
                let q = simplex::clamp_interior(&simplex::random_point(&mut rng, k), 1e-3);
                let lp = proper_loss_from_entropy(&fs, &p).unwrap();
                let lq = proper_loss_from_entropy(&fs, &q).unwrap();
                let lhs = dot(p.as_slice(), lq.as_slice()) - dot(p.as_slice(), lp.as_slice());
                let d = entropy::bregman(&fs, &p, &q).unwrap();
                assert!((lhs - d).abs() < 1e-6, "{f}: {lhs} vs {d}");
            }
        }
    }

    #[test]
    fn propriety() {
        for l in [LossSpec::Log, LossSpec::Squared, proper("R-0.5"), proper("S-0.5")] {
            let r = propriety_check(&l, 2, 100, 200, 1).unwrap();
            assert_eq!(r.violations, 0, "{l}: {r:?}");
        }
        let r = propriety_check(&LossSpec::Log, 3, 30, 60, 2).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
    }

    #[test]
    fn quasiconvexity() {
        let p = pv(&[0.3, 0.7]);
        for l in [LossSpec::Log, LossSpec::Squared, proper("Q")] {
            let r = quasiconvexity_probe(&l, &p, 10_000, 4).unwrap();
            assert_eq!(r.violations, 0, "{l}");
        }
        // a non-proper loss: the probe still runs, with no guarantee on the count
        let r = quasiconvexity_probe(&Negated, &p, 1000, 4).unwrap();
        assert_eq!(r.trials, 1000);
    }

    #[test]
    fn spec_parsing() {
        let l: LossSpec = serde_json::from_str(r#"{"kind":"proper","entropy":{"kind":"quadratic"}}"#).unwrap();
        assert_eq!(l, proper("Q"));
        assert_eq!(serde_json::from_str::<LossSpec>(r#"{"kind":"log"}"#).unwrap(), LossSpec::Log);
        assert_eq!("squared".parse::<LossSpec>().unwrap(), LossSpec::Squared);
        assert_eq!("l^S-0.5".parse::<LossSpec>().unwrap().label(), "l^S-0.5");
        assert!(serde_json::from_str::<LossSpec>(r#"{"kind":"hinge"}"#).is_err());
        let c = LossSpec::Constant { values: vec![1.0, 2.0] };
        assert_eq!(loss_vector(&c, &uniform(2).unwrap()).unwrap().as_slice(), &[1.0, 2.0]);
        assert!(loss_vector(&c, &uniform(3).unwrap()).is_err());
    }
}
