use phimix::arena::{certify_bound, random_batch, run_game, GameConfig, Scenario};
use phimix::entropy::EntropySpec;
use phimix::loss::LossSpec;

fn scenarios() -> Vec<Scenario> {
    vec![Scenario::IidRandom, Scenario::GreedyAdversary { candidates: 8 }, Scenario::OneGoodExpert { correlation: 0.8 }]
}

#[test]
fn shannon_log_batch_is_certified() {
    let batch = random_batch(40, 11, &LossSpec::Log, EntropySpec::shannon(), &[2, 3, 5], 60, &scenarios());
    let report = certify_bound(&batch);
    assert!(report.all_certified(), "{:?}", report.failures);
    assert!(report.min_slack >= -1e-5);
    // Regret never exceeds log K under a uniform prior.
    for (cfg, trace) in batch.iter().zip(batch.iter().map(|c| run_game(c).unwrap())) {
        assert!(trace.regret <= (cfg.experts as f64).ln() + 1e-6, "{}", trace.regret);
        assert!(trace.telescoping_error < 1e-9);
    }
}

#[test]
fn oversized_learning_rate_is_caught() {
    let h = EntropySpec::shannon().with_eta(3.0).unwrap();
    let batch = random_batch(20, 5, &LossSpec::Log, h, &[2], 100, &[Scenario::GreedyAdversary { candidates: 8 }]);
    let report = certify_bound(&batch);
    assert!(report.flagged_games > 0);
    assert!(!report.all_certified());
}

#[test]
fn constant_losses_give_zero_regret() {
    let cfg = GameConfig {
        loss: LossSpec::Constant { values: vec![0.4, 1.3] },
        ..random_batch(1, 3, &LossSpec::Log, EntropySpec::tsallis(-0.5).unwrap(), &[3], 1, &scenarios())[0].clone()
    };
    let cfg = GameConfig { rounds: 50, ..cfg };
    let trace = run_game(&cfg).unwrap();
    assert!(trace.regret.abs() < 1e-9, "{}", trace.regret);
    assert!(trace.certified());
}

#[test]
fn games_are_deterministic() {
    let batch = random_batch(3, 9, &LossSpec::Squared, EntropySpec::quadratic(), &[3], 30, &scenarios());
    for cfg in &batch {
        assert_eq!(run_game(cfg).unwrap(), run_game(cfg).unwrap());
    }
    let again = random_batch(3, 9, &LossSpec::Squared, EntropySpec::quadratic(), &[3], 30, &scenarios());
    assert_eq!(batch, again);
}

#[test]
fn csv_trace_has_one_line_per_round() {
    let cfg = &random_batch(1, 1, &LossSpec::Log, EntropySpec::shannon(), &[2], 10, &scenarios())[0];
    let trace = run_game(cfg).unwrap();
    let mut out = Vec::new();
    trace.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), cfg.rounds + 1);
}
