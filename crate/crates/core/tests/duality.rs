use phimix::entropy::{self, DualEvalConfig, EntropySpec};
use phimix::loss::{ExpertPredictionSet, LossSpec};
use phimix::mixability::{mix_dual, mix_inf};
use phimix::simplex::{DualVector, ProbVector};
use proptest::prelude::*;

const ENTROPIES: [&str; 7] = ["H", "Q", "S-0.1", "S-0.5", "S-0.9", "R-0.5", "R-0.9"];

fn interior(k: usize) -> impl Strategy<Value = ProbVector> {
    prop::collection::vec(0.05f64..1.0, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        ProbVector::new(w.iter().map(|x| x / s).collect()).unwrap()
    })
}

fn dual(k: usize) -> impl Strategy<Value = DualVector> {
    prop::collection::vec(-3.0f64..3.0, k).prop_map(DualVector::new)
}

fn entropy_at(i: usize, eta: f64) -> EntropySpec {
    ENTROPIES[i].parse::<EntropySpec>().unwrap().with_eta(eta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shannon_dual_is_scaled_log_sum_exp(v in dual(4), eta in 0.1f64..5.0) {
        let h = EntropySpec::shannon().with_eta(eta).unwrap();
        let got = entropy::entropic_dual(&h, &v, &DualEvalConfig::default()).unwrap();
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + v.iter().map(|x| (eta * (x - m)).exp()).sum::<f64>().ln() / eta;
        prop_assert!((got - lse).abs() < 1e-10, "{got} vs {lse}");
    }

    #[test]
    fn translation_invariance(i in 0..7usize, v in dual(3), c in -2.0f64..2.0, eta in 0.2f64..3.0) {
        let phi = entropy_at(i, eta);
        let cfg = DualEvalConfig::default();
        let a = entropy::entropic_dual(&phi, &v, &cfg).unwrap();
        let b = entropy::entropic_dual(&phi, &v.shift(c), &cfg).unwrap();
        prop_assert!((b - a - c).abs() < 1e-8, "{}: {a} {b} {c}", ENTROPIES[i]);
        let ga = entropy::dual_grad(&phi, &v, &cfg).unwrap();
        let gb = entropy::dual_grad(&phi, &v.shift(c), &cfg).unwrap();
        prop_assert!(ga.max_abs_diff(&gb) < 1e-6);
    }

    #[test]
    fn fenchel_young_and_inversion(i in 0..7usize, mu in interior(3), eta in 0.2f64..3.0) {
        let phi = entropy_at(i, eta);
        let cfg = DualEvalConfig::default();
        let g = entropy::grad(&phi, &mu).unwrap();
        let conj = entropy::entropic_dual(&phi, &g, &cfg).unwrap();
        let fy: f64 = mu.iter().zip(g.iter()).map(|(m, x)| m * x).sum::<f64>() - entropy::value(&phi, &mu);
        prop_assert!((conj - fy).abs() < 1e-8, "{}: {conj} vs {fy}", ENTROPIES[i]);
        let back = entropy::dual_grad(&phi, &g, &cfg).unwrap();
        prop_assert!(back.max_abs_diff(&mu) < 1e-6, "{}: {:?}", ENTROPIES[i], back);
    }

    #[test]
    fn bregman_is_nonnegative(i in 0..7usize, a in interior(3), b in interior(3)) {
        let phi = entropy_at(i, 1.0);
        prop_assert!(entropy::bregman(&phi, &a, &b).unwrap() >= -1e-12);
        prop_assert!(entropy::bregman(&phi, &a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mix_dual_matches_mix_inf(i in 0..7usize, mu in interior(3), p in prop::collection::vec(interior(2), 3), x in 0..2usize) {
        let phi = entropy_at(i, 1.0);
        let cfg = DualEvalConfig::default();
        let a = ExpertPredictionSet::new(p).unwrap();
        for loss in [LossSpec::Log, LossSpec::Squared] {
            let d = mix_dual(&phi, &loss, &a, &mu, x, &cfg).unwrap();
            let m = mix_inf(&phi, &loss, &a, &mu, x, &cfg).unwrap();
            prop_assert!((d - m).abs() < 1e-6, "{} {loss}: {d} vs {m}", ENTROPIES[i]);
        }
    }

    #[test]
    fn constant_row_mixes_to_its_value(i in 0..7usize, mu in interior(4), c in 0.0f64..5.0) {
        let phi = entropy_at(i, 1.0);
        let loss = LossSpec::Constant { values: vec![c, c + 1.0] };
        let a = ExpertPredictionSet::new(vec![ProbVector::new(vec![0.5, 0.5]).unwrap(); 4]).unwrap();
        let d = mix_dual(&phi, &loss, &a, &mu, 0, &DualEvalConfig::default()).unwrap();
        prop_assert!((d - c).abs() < 1e-9, "{}: {d} vs {c}", ENTROPIES[i]);
    }
}
