//! Game harness: expert streams, full games, regret accounting and batch
//! certification of the `L ≤ L_θ + D_Φ(δ_θ, μ⁰)` bound.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{self, EntropySpec};
use crate::error::{Error, Result};
use crate::gaa::{GaaConfig, GaaState, Prediction};
use crate::loss::{self, ExpertPredictionSet, LossSpec};
use crate::simplex::{self, DualVector, ProbVector};

/// Allowed shortfall in the per-expert bound.
pub const BOUND_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Experts predict uniformly at random on the prediction grid; outcomes
    /// are uniform.
    IidRandom,
    /// Expert 0 predicts the outcome's vertex with probability `correlation`.
    OneGoodExpert { correlation: f64 },
    /// One-step lookahead: among `candidates` random expert sets (plus one
    /// that spreads experts over the vertices), pick the set and outcome
    /// that maximize the player's regret after the round.
    GreedyAdversary {
        #[serde(default = "default_candidates")]
        candidates: usize,
    },
}

fn default_candidates() -> usize {
    8
}

fn default_prediction_grid() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub experts: usize,
    pub outcomes: usize,
    pub rounds: usize,
    pub loss: LossSpec,
    pub entropy: EntropySpec,
    /// Defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<ProbVector>,
    pub scenario: Scenario,
    pub seed: u64,
    /// Resolution of the grid expert predictions are drawn from.
    #[serde(default = "default_prediction_grid")]
    pub prediction_grid: usize,
    #[serde(default)]
    pub player: GaaConfig,
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experts < 1 {
            return Err(Error::InvalidDimension(self.experts));
        }
        if self.outcomes < 2 {
            return Err(Error::InvalidDimension(self.outcomes));
        }
        if self.rounds < 1 {
            return Err(Error::InvalidParameter("rounds must be at least 1".into()));
        }
        if self.prediction_grid < 1 {
            return Err(Error::InvalidParameter("prediction_grid must be at least 1".into()));
        }
        match self.scenario {
            Scenario::OneGoodExpert { correlation } if !(0.0..=1.0).contains(&correlation) => {
                return Err(Error::InvalidParameter(format!("correlation {correlation} outside [0, 1]")));
            }
            Scenario::GreedyAdversary { candidates: 0 } => {
                return Err(Error::InvalidParameter("greedy adversary needs at least one candidate".into()));
            }
            _ => {}
        }
        if let LossSpec::Constant { values } = &self.loss {
            if values.len() != self.outcomes {
                return Err(Error::DimensionMismatch { expected: self.outcomes, got: values.len() });
            }
        }
        if let Some(p) = &self.prior {
            if p.dim() != self.experts {
                return Err(Error::DimensionMismatch { expected: self.experts, got: p.dim() });
            }
        }
        if self.player.response.coarse < 1 {
            return Err(Error::InvalidParameter("response grid must be at least 1".into()));
        }
        self.player.dual.validate()
    }

    pub fn prior(&self) -> Result<ProbVector> {
        match &self.prior {
            Some(p) => Ok(p.clone()),
            None => ProbVector::normalized(vec![1.0; self.experts]),
        }
    }
}

struct RoundDraw {
    candidates: Vec<ExpertPredictionSet>,
    outcome: Option<usize>,
}

fn round_rng(cfg: &GameConfig, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(round as u64);
    rng
}

fn random_set(rng: &mut ChaCha8Rng, grid: &[ProbVector], experts: usize) -> Result<ExpertPredictionSet> {
    ExpertPredictionSet::new((0..experts).map(|_| grid[rng.gen_range(0..grid.len())].clone()).collect())
}

fn draw_round(cfg: &GameConfig, grid: &[ProbVector], round: usize) -> Result<RoundDraw> {
    let mut rng = round_rng(cfg, round);
    let (k, n) = (cfg.experts, cfg.outcomes);
    match cfg.scenario {
        Scenario::IidRandom => {
            let set = random_set(&mut rng, grid, k)?;
            Ok(RoundDraw { candidates: vec![set], outcome: Some(rng.gen_range(0..n)) })
        }
        Scenario::OneGoodExpert { correlation } => {
            let x = rng.gen_range(0..n);
            let mut actions = random_set(&mut rng, grid, k)?.actions().to_vec();
            if rng.gen::<f64>() < correlation {
                actions[0] = simplex::dirac(n, x)?;
            }
            Ok(RoundDraw { candidates: vec![ExpertPredictionSet::new(actions)?], outcome: Some(x) })
        }
        Scenario::GreedyAdversary { candidates } => {
            let spread = (0..k).map(|t| simplex::dirac(n, t % n)).collect::<Result<Vec<_>>>()?;
            let mut sets = vec![ExpertPredictionSet::new(spread)?];
            for _ in 0..candidates {
                sets.push(random_set(&mut rng, grid, k)?);
            }
            Ok(RoundDraw { candidates: sets, outcome: None })
        }
    }
}

/// The expert predictions for `round`. For the greedy adversary this is the
/// first candidate; the final choice depends on the player's state.
pub fn generate_experts(cfg: &GameConfig, round: usize) -> Result<ExpertPredictionSet> {
    cfg.validate()?;
    let grid = simplex::simplex_grid(cfg.outcomes, cfg.prediction_grid, 0.0)?;
    Ok(draw_round(cfg, &grid, round)?.candidates.swap_remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub experts: Vec<ProbVector>,
    /// μ^{t−1}, the mixture the prediction was made from.
    pub mixture: ProbVector,
    pub prediction: ProbVector,
    pub outcome: usize,
    pub player_loss: f64,
    pub expert_losses: Vec<f64>,
    /// `Φ*(w^{t−1}) − Φ*(w^t)`, the bound for the realized outcome.
    pub mix_bound: f64,
    pub slack: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub config: GameConfig,
    pub rounds: Vec<RoundRecord>,
    pub player_loss: f64,
    pub expert_losses: Vec<f64>,
    pub regret: f64,
    /// `D_Φ(δ_θ, μ⁰)` per expert.
    pub divergence_bounds: Vec<f64>,
    /// `L_θ + D_Φ(δ_θ, μ⁰) − L` per expert.
    pub expert_slack: Vec<f64>,
    pub min_slack: f64,
    pub flagged_rounds: Vec<usize>,
    /// `|Σ_t mix_bound − (Φ*(w⁰) − Φ*(w^T))|`.
    pub telescoping_error: f64,
    /// Set when a solver error stopped the game early.
    pub aborted: Option<String>,
}

impl GameTrace {
    /// Every expert's bound holds within [`BOUND_TOLERANCE`].
    pub fn bound_holds(&self) -> bool {
        self.aborted.is_none() && self.min_slack >= -BOUND_TOLERANCE
    }

    /// The bound holds and no round was flagged.
    pub fn certified(&self) -> bool {
        self.bound_holds() && self.flagged_rounds.is_empty()
    }

    pub fn summary(&self) -> GameSummary {
        GameSummary {
            experts: self.config.experts,
            outcomes: self.config.outcomes,
            rounds: self.rounds.len(),
            loss: self.config.loss.label(),
            entropy: self.config.entropy.label(),
            seed: self.config.seed,
            player_loss: self.player_loss,
            expert_losses: self.expert_losses.clone(),
            regret: self.regret,
            divergence_bounds: self.divergence_bounds.clone(),
            min_slack: self.min_slack,
            flagged_rounds: self.flagged_rounds.clone(),
            telescoping_error: self.telescoping_error,
            bound_holds: self.bound_holds(),
            certified: self.certified(),
            aborted: self.aborted.clone(),
        }
    }

    /// One line per round.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.config.experts;
        let mut header = vec!["t".to_string(), "outcome".into(), "prediction".into(), "player_loss".into()];
        header.extend((0..k).map(|t| format!("expert_{t}_loss")));
        header.extend(["mix_bound", "slack", "flagged", "mixture"].map(String::from));
        w.write_record(&header).map_err(io_err)?;
        let join = |p: &ProbVector| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
        for r in &self.rounds {
            let mut row = vec![r.t.to_string(), r.outcome.to_string(), join(&r.prediction), r.player_loss.to_string()];
            row.extend(r.expert_losses.iter().map(|v| v.to_string()));
            row.extend([r.mix_bound.to_string(), r.slack.to_string(), r.flagged.to_string(), join(&r.mixture)]);
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    pub experts: usize,
    pub outcomes: usize,
    pub rounds: usize,
    pub loss: String,
    pub entropy: String,
    pub seed: u64,
    pub player_loss: f64,
    pub expert_losses: Vec<f64>,
    pub regret: f64,
    pub divergence_bounds: Vec<f64>,
    pub min_slack: f64,
    pub flagged_rounds: Vec<usize>,
    pub telescoping_error: f64,
    pub bound_holds: bool,
    pub certified: bool,
    pub aborted: Option<String>,
}

struct Played {
    record: RoundRecord,
    row: Vec<f64>,
}

fn play_round(
    cfg: &GameConfig,
    state: &GaaState,
    draw: RoundDraw,
    player_total: f64,
    expert_totals: &[f64],
) -> Result<Played> {
    let mut best: Option<(f64, ExpertPredictionSet, usize, Prediction, loss::LossMatrix)> = None;
    for set in draw.candidates {
        let pred = state.predict(&set, &cfg.loss, &cfg.player)?;
        let m = loss::loss_matrix(&cfg.loss, &set)?;
        let player = cfg.loss.loss_vector(&pred.action)?;
        let outcomes: Vec<usize> = match draw.outcome {
            Some(x) => vec![x],
            None => (0..cfg.outcomes).collect(),
        };
        for x in outcomes {
            let best_expert = (0..cfg.experts)
                .map(|t| expert_totals[t] + m.get(x, t))
                .fold(f64::INFINITY, f64::min);
            let regret = player_total + player[x] - best_expert;
            if best.as_ref().map_or(true, |b| regret > b.0) {
                best = Some((regret, set.clone(), x, pred.clone(), m.clone()));
            }
        }
    }
    let (_, set, x, pred, m) = best.expect("at least one candidate");
    let row: Vec<f64> = m.row(x).iter().copied().collect();
    let player_loss = cfg.loss.loss_vector(&pred.action)?[x];
    let record = RoundRecord {
        t: state.t + 1,
        experts: set.actions().to_vec(),
        mixture: state.mu.clone(),
        prediction: pred.action,
        outcome: x,
        player_loss,
        expert_losses: row.clone(),
        mix_bound: pred.bounds[x],
        slack: pred.slack,
        flagged: pred.flagged,
    };
    Ok(Played { record, row })
}

/// Plays the game. Configuration errors are returned; solver errors during
/// play stop the game and are recorded in [`GameTrace::aborted`].
pub fn run_game(cfg: &GameConfig) -> Result<GameTrace> {
    cfg.validate()?;
    let grid = simplex::simplex_grid(cfg.outcomes, cfg.prediction_grid, 0.0)?;
    let mu0 = cfg.prior()?;
    let mut state = GaaState::init(cfg.entropy, mu0.clone())?;
    let divergence_bounds = (0..cfg.experts)
        .map(|t| entropy::bregman(&cfg.entropy, &simplex::dirac(cfg.experts, t)?, &mu0))
        .collect::<Result<Vec<_>>>()?;
    let conj0 = state.conj_w;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut player_loss = 0.0;
    let mut expert_losses = vec![0.0; cfg.experts];
    let mut bound_sum = 0.0;
    let mut aborted = None;
    for t in 1..=cfg.rounds {
        let step = draw_round(cfg, &grid, t).and_then(|draw| {
            let played = play_round(cfg, &state, draw, player_loss, &expert_losses)?;
            state.update_with_losses(&DualVector::new(played.row.clone()), &cfg.player)?;
            Ok(played)
        });
        match step {
            Ok(played) => {
                player_loss += played.record.player_loss;
                for (acc, l) in expert_losses.iter_mut().zip(&played.row) {
                    *acc += l;
                }
                bound_sum += played.record.mix_bound;
                rounds.push(played.record);
            }
            Err(e) => {
                aborted = Some(format!("round {t}: {e}"));
                break;
            }
        }
    }
    let best = expert_losses.iter().copied().fold(f64::INFINITY, f64::min);
    let expert_slack: Vec<f64> =
        expert_losses.iter().zip(&divergence_bounds).map(|(l, d)| l + d - player_loss).collect();
    let min_slack = expert_slack.iter().copied().fold(f64::INFINITY, f64::min);
    let flagged_rounds = rounds.iter().filter(|r| r.flagged).map(|r| r.t).collect();
    Ok(GameTrace {
        config: cfg.clone(),
        rounds,
        player_loss,
        regret: player_loss - best,
        expert_losses,
        divergence_bounds,
        expert_slack,
        min_slack,
        flagged_rounds,
        telescoping_error: (bound_sum - (conj0 - state.conj_w)).abs(),
        aborted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFailure {
    pub index: usize,
    pub min_slack: Option<f64>,
    pub flagged_rounds: Vec<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub games: usize,
    pub certified: usize,
    /// Games where every expert's bound held, flagged or not.
    pub bound_satisfied: usize,
    pub flagged_games: usize,
    pub min_slack: f64,
    pub max_regret: f64,
    pub failures: Vec<GameFailure>,
}

impl CertificationReport {
    pub fn all_certified(&self) -> bool {
        self.certified == self.games
    }
}

/// Runs every game in parallel and checks the bound for every expert.
pub fn certify_bound(batch: &[GameConfig]) -> CertificationReport {
    let results: Vec<Result<GameSummary>> = batch.par_iter().map(|c| run_game(c).map(|t| t.summary())).collect();
    let mut report = CertificationReport {
        games: batch.len(),
        certified: 0,
        bound_satisfied: 0,
        flagged_games: 0,
        min_slack: f64::INFINITY,
        max_regret: f64::NEG_INFINITY,
        failures: Vec::new(),
    };
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => {
                report.min_slack = report.min_slack.min(s.min_slack);
                report.max_regret = report.max_regret.max(s.regret);
                report.certified += s.certified as usize;
                report.bound_satisfied += s.bound_holds as usize;
                report.flagged_games += !s.flagged_rounds.is_empty() as usize;
                if !s.certified {
                    report.failures.push(GameFailure {
                        index,
                        min_slack: Some(s.min_slack),
                        flagged_rounds: s.flagged_rounds,
                        error: s.aborted,
                    });
                }
            }
            Err(e) => report.failures.push(GameFailure {
                index,
                min_slack: None,
                flagged_rounds: Vec::new(),
                error: Some(e.to_string()),
            }),
        }
    }
    report
}

/// Random games with K drawn from `experts`, T uniform on `1..=max_rounds`,
/// and scenarios cycled from `scenarios`.
pub fn random_batch(
    n: usize,
    seed: u64,
    loss: &LossSpec,
    entropy: EntropySpec,
    experts: &[usize],
    max_rounds: usize,
    scenarios: &[Scenario],
) -> Vec<GameConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| GameConfig {
            experts: experts[rng.gen_range(0..experts.len())],
            outcomes: 2,
            rounds: rng.gen_range(1..=max_rounds),
            loss: loss.clone(),
            entropy,
            prior: None,
            scenario: scenarios[i % scenarios.len()].clone(),
            seed: rng.gen(),
            prediction_grid: default_prediction_grid(),
            player: GaaConfig::default(),
        })
        .collect()
}
