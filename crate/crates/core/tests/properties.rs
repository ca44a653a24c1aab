use proptest::prelude::*;

use qtewma::detector::{statistic, DetectorConfig, StatisticTracker};
use qtewma::quanttree::{sample_bin_probabilities, uniform_probs, QuantTreePartition, SamplerMethod};
use qtewma::rng::{substream, Domain};

fn uniform_training(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, Domain::Training, 0);
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

fn partition(k: usize, n: usize, d: usize, seed: u64) -> QuantTreePartition<f64> {
    QuantTreePartition::build(&uniform_training(n, d, seed), &uniform_probs(k), seed).unwrap()
}

fn bins(k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, 1..400)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplex_closure(
        k in 2usize..12,
        seq in bins(12),
        lambda in 0.001f64..0.5,
        beta in prop::option::of(1.0f64..20.0),
        stop in prop::option::of(1u64..600),
        seed in any::<u64>(),
    ) {
        let p = partition(k, 4 * k, 2, seed);
        let cfg = DetectorConfig { lambda, beta, stop_at: stop };
        let mut tr = StatisticTracker::new(&p, &cfg).unwrap();
        for &b in &seq {
            tr.step_bin(b % k);
            let s = tr.state();
            let zs: f64 = s.z.iter().sum();
            let ps: f64 = s.p_hat.iter().sum();
            prop_assert!((zs - 1.0).abs() < 1e-12, "sum z = {}", zs);
            prop_assert!((ps - 1.0).abs() < 1e-12, "sum p = {}", ps);
            prop_assert!(s.z.iter().chain(&s.p_hat).all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn infinite_beta_reduces_to_plain(k in 2usize..12, seq in bins(12), seed in any::<u64>()) {
        let p = partition(k, 4 * k, 3, seed);
        let mut plain = StatisticTracker::new(&p, &DetectorConfig::plain(0.03)).unwrap();
        let mut inf = StatisticTracker::new(&p, &DetectorConfig::updating(0.03, f64::INFINITY, None)).unwrap();
        for &b in &seq {
            prop_assert_eq!(plain.step_bin(b % k).to_bits(), inf.step_bin(b % k).to_bits());
        }
        prop_assert_eq!(plain.state(), inf.state());
    }

    #[test]
    fn stopping_matches_unstopped_before_the_stop(
        k in 2usize..10,
        seq in bins(10),
        extra in 1u64..300,
        beta in 1.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let n = 4 * k;
        let p = partition(k, n, 2, seed);
        let s = n as u64 + extra;
        let mut stopped = StatisticTracker::new(&p, &DetectorConfig::updating(0.05, beta, Some(s))).unwrap();
        let mut free = StatisticTracker::new(&p, &DetectorConfig::updating(0.05, beta, None)).unwrap();
        let mut frozen = None;
        for (i, &b) in seq.iter().enumerate() {
            let t = i as u64 + 1;
            let a = stopped.step_bin(b % k);
            let c = free.step_bin(b % k);
            if t < s - n as u64 {
                prop_assert_eq!(a.to_bits(), c.to_bits());
            } else {
                let p_hat = stopped.state().p_hat.clone();
                match &frozen {
                    None => frozen = Some(p_hat),
                    Some(f) => prop_assert_eq!(f, &p_hat),
                }
            }
        }
    }

    #[test]
    fn statistic_nonnegative_and_zero_only_at_equality(
        z in prop::collection::vec(0.0f64..1.0, 2..20),
        p in prop::collection::vec(0.01f64..1.0, 2..20),
    ) {
        let k = z.len().min(p.len());
        let t = statistic(&z[..k], &p[..k]);
        prop_assert!(t >= 0.0);
        prop_assert_eq!(t == 0.0, z[..k] == p[..k]);
        prop_assert_eq!(statistic(&p[..k], &p[..k]), 0.0);
    }

    #[test]
    fn training_set_replays_bin_counts(
        k in 2usize..16,
        per_bin in 1usize..6,
        extra in 0usize..7,
        d in 1usize..5,
        seed in any::<u64>(),
    ) {
        let n = k * per_bin + extra;
        let train = uniform_training(n, d, seed);
        let p = QuantTreePartition::build(&train, &uniform_probs(k), seed).unwrap();
        let mut counts = vec![0usize; k];
        for x in &train {
            counts[p.lookup(x).unwrap()] += 1;
        }
        prop_assert_eq!(&counts, p.bin_counts());
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
    }

    #[test]
    fn same_inputs_same_state(k in 2usize..10, seq in bins(10), beta in prop::option::of(1.0f64..9.0), seed in any::<u64>()) {
        let p = partition(k, 3 * k, 2, seed);
        let cfg = DetectorConfig { lambda: 0.03, beta, stop_at: None };
        let mut a = StatisticTracker::new(&p, &cfg).unwrap();
        let mut b = StatisticTracker::new(&p, &cfg).unwrap();
        for &x in &seq {
            a.step_bin(x % k);
            b.step_bin(x % k);
        }
        prop_assert_eq!(a.state(), b.state());
    }

    #[test]
    fn sampled_bin_probabilities_lie_on_simplex(
        k in 2usize..40,
        n in 1usize..500,
        stick in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let n = n.max(k);
        let method = if stick { SamplerMethod::StickBreaking } else { SamplerMethod::Dirichlet };
        let v = sample_bin_probabilities(&uniform_probs(k), n, method, seed).unwrap();
        let s: f64 = v.probs().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!(v.probs().iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
