use phimix::entropy::EntropySpec;
use phimix::loss::LossSpec;
use phimix::mixability::{eta_star, m_eta, EtaStatus, MixSearchConfig};

fn coarse() -> MixSearchConfig {
    MixSearchConfig { action_grid: 15, prior_grid: 15, refine_resolution: 100, refine_radius: 4, ..Default::default() }
}

// With two experts, a prior on a vertex and an expert at s on the grid,
// a first-order expansion of the bound for the quadratic entropy gives
// M(η) ≈ −η·max_s s(1−s)⁴/2, attained at s = 1/5.
#[test]
fn squared_loss_under_quadratic_entropy_fails_linearly_in_eta() {
    let slope = {
        let s: f64 = 0.2;
        s * (1.0 - s).powi(4) / 2.0
    };
    let cfg = MixSearchConfig::default();
    for eta in [1e-3, 3e-3] {
        let m = m_eta(eta, &EntropySpec::quadratic(), &LossSpec::Squared, &cfg).unwrap().value;
        assert!((m / eta + slope).abs() < 1e-3, "η = {eta}: M = {m}, oracle {}", -slope * eta);
    }
}

#[test]
fn log_loss_is_shannon_mixable_at_one() {
    let cfg = coarse();
    let h = EntropySpec::shannon();
    assert!(m_eta(1.0, &h, &LossSpec::Log, &cfg).unwrap().value >= -cfg.band);
    assert!(m_eta(1.2, &h, &LossSpec::Log, &cfg).unwrap().value < -cfg.band);
    let s = eta_star(&h, &LossSpec::Log, &MixSearchConfig { eta_tol: 1e-2, ..cfg }).unwrap();
    assert_eq!(s.status, EtaStatus::Found);
    assert!((s.eta_star - 1.0).abs() < 0.02, "{}", s.eta_star);
    assert!(s.lo <= s.hi && s.hi / s.lo <= 1.0 + 1e-2);
}

#[test]
fn constant_loss_is_mixable_everywhere() {
    let cfg = MixSearchConfig { eta_tol: 1e-1, ..coarse() };
    let loss = LossSpec::Constant { values: vec![0.3, 1.7] };
    let s = eta_star(&EntropySpec::shannon(), &loss, &cfg).unwrap();
    assert_eq!(s.status, EtaStatus::LowerBound);
    assert_eq!(s.eta_star, cfg.eta_hi);
}

// Under Shannon entropy the log-loss bound is log K / η* with η* = 1.
#[test]
fn shannon_log_regret_scales_as_log_k() {
    for k in 2..=4 {
        let cfg = MixSearchConfig {
            experts: k,
            action_grid: 8,
            prior_grid: 8,
            refine_resolution: 40,
            refine_radius: 2,
            eta_lo: 0.5,
            eta_hi: 2.0,
            eta_tol: 1e-2,
            ..Default::default()
        };
        let r = phimix::mixability::optimal_regret(&EntropySpec::shannon(), &LossSpec::Log, &cfg).unwrap();
        assert!((r.eta.eta_star - 1.0).abs() < 0.02, "K = {k}: η* = {}", r.eta.eta_star);
        assert!((r.regret - (k as f64).ln() / r.eta.eta_star).abs() < 1e-9);
        assert!((r.regret - (k as f64).ln()).abs() < 0.02, "K = {k}: {}", r.regret);
    }
}
