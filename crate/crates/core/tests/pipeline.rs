use shor_mps::circuit::classical::{multiplicative_order, order_candidates, recover_factors, FactorFailure};
use shor_mps::circuit::{
    lower_distribution, measure_lower_register, run_controlled_u_phase, run_pipeline, sample_upper,
    validate_instance, FailureReason, GateOrder, InstanceError, Outcome, PipelineConfig, QftVariant,
    Sampler,
};
use shor_mps::matlin::SplitMethod;
use shor_mps::mps::Decomposer;

fn config(n: u64, x: u64, order: GateOrder, qft: QftVariant, seed: u64) -> PipelineConfig {
    PipelineConfig {
        x: Some(x),
        order,
        qft,
        seed,
        ..PipelineConfig::new(n)
    }
}

#[test]
fn instance_rejections_are_classified() {
    assert_eq!(validate_instance(15, 7).unwrap().l, 4);
    assert!(matches!(validate_instance(15, 5), Err(InstanceError::SharedFactor { factor: 5, .. })));
    assert!(matches!(validate_instance(16, 3), Err(InstanceError::Even { .. })));
    assert!(matches!(validate_instance(13, 2), Err(InstanceError::Prime { .. })));
    assert!(matches!(validate_instance(27, 2), Err(InstanceError::PrimePower { .. })));
    assert!(matches!(validate_instance(15, 15), Err(InstanceError::BaseOutOfRange { .. })));
    assert_eq!(validate_instance(2033, 2).unwrap().l, 11);
}

#[test]
fn fifteen_factors_with_contraction() {
    for seed in 0..5 {
        let out = run_pipeline(&config(15, 7, GateOrder::Decreasing, QftVariant::Contract, seed)).unwrap();
        assert_eq!(out.report.factors, Some([3, 5]), "seed {seed}");
        assert!(out.report.samples.iter().all(|s| s.m % 64 == 0));
    }
}

#[test]
fn sixty_five_recovers_order_twelve_mostly() {
    // x = 2 has r = 12 but 2^6 = -1 (mod 65), so the run ends in a trivial root.
    let mut found = 0;
    for seed in 0..20 {
        let r = run_pipeline(&config(65, 2, GateOrder::Increasing, QftVariant::Contract, seed))
            .unwrap()
            .report;
        if r.order_found == Some(12) {
            found += 1;
            assert_eq!(r.failure, Some(FailureReason::TrivialRoot { r: 12 }));
        }
    }
    assert!(found > 10, "{found} of 20");
}

#[test]
fn twenty_one_with_nearest_neighbour_qft() {
    let r = run_pipeline(&config(21, 2, GateOrder::Decreasing, QftVariant::Nn, 3))
        .unwrap()
        .report;
    assert_eq!(r.order_found, Some(6));
    assert_eq!(r.factors, Some([3, 7]));
}

#[test]
fn qft_variants_give_the_same_distribution() {
    for (n, x) in [(15, 7), (21, 2), (33, 5), (35, 3)] {
        let mut dists = Vec::new();
        for qft in [QftVariant::Contract, QftVariant::Nn, QftVariant::Standard] {
            let mut c = config(n, x, GateOrder::Decreasing, qft, 0);
            c.force_outcome = Some(1);
            dists.push(run_pipeline(&c).unwrap().distribution);
        }
        for d in &dists[1..] {
            let diff = d.iter().zip(&dists[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "N = {n}: {diff}");
        }
    }
}

#[test]
fn reports_are_deterministic_apart_from_timings() {
    let c = config(33, 5, GateOrder::Decreasing, QftVariant::Contract, 9);
    let a = run_pipeline(&c).unwrap().report;
    let b = run_pipeline(&c).unwrap().report;
    assert_eq!(a.to_json_without_timings(), b.to_json_without_timings());
    let t = a.timings;
    assert!((t.t_total - (t.t_u + t.t_meas + t.t_qft)).abs() < 1e-6);
}

#[test]
fn reported_factors_multiply_to_n() {
    for n in [15u64, 21, 33, 35, 39, 51, 55, 57, 65, 77, 85, 91] {
        for seed in 0..3 {
            let r = run_pipeline(&PipelineConfig { seed, ..PipelineConfig::new(n) }).unwrap().report;
            if let Some([a, b]) = r.factors {
                assert!(a > 1 && b > 1 && a * b == n, "{n}: {a} x {b}");
            }
            if let Some(found) = r.order_found {
                assert_eq!(found, multiplicative_order(r.x, n).unwrap());
            }
        }
    }
}

#[test]
fn sixty_five_lower_register_distribution() {
    // 2^14 = 12 * 1365 + 4: the first four residues occur once more.
    let inst = validate_instance(65, 2).unwrap();
    let dec = Decomposer::serial(SplitMethod::Rrqr);
    let (state, _) = run_controlled_u_phase(&inst, GateOrder::Decreasing, &dec).unwrap();
    let dist = lower_distribution(&state, &dec).unwrap();
    assert_eq!(dist.len(), 12);
    let mut heavy = 0;
    for (b, p) in &dist {
        let i = (0..12).find(|&i| shor_mps::circuit::classical::modpow(2, i, 65) == *b).unwrap();
        let expect = if i < 4 { 1366.0 } else { 1365.0 } / 16384.0;
        assert!((p - expect).abs() < 1e-12, "b = {b}");
        heavy += (i < 4) as usize;
    }
    assert_eq!(heavy, 4);
    let mut s = state.clone();
    assert!(measure_lower_register(&mut s, Outcome::Forced(3), &dec).is_err());
}

#[test]
fn sampler_frequencies_are_within_three_sigma() {
    let probs = [0.1, 0.25, 0.0, 0.4, 0.05, 0.2];
    let draws = 100_000;
    let mut counts = [0usize; 6];
    let mut sampler = Sampler::new(77);
    for _ in 0..draws {
        counts[sampler.draw(&probs).unwrap()] += 1;
    }
    for (c, p) in counts.iter().zip(probs) {
        let mean = p * draws as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((*c as f64 - mean).abs() <= 3.0 * sigma + 1e-9, "{c} vs {mean}");
    }
    assert_eq!(counts[2], 0);
    assert_eq!(sample_upper(&probs, 5).unwrap(), sample_upper(&probs, 5).unwrap());
}

#[test]
fn continued_fraction_examples() {
    let c = order_candidates(64, 256, 15, 7);
    assert!(c.denominators.contains(&4));
    assert_eq!(c.verified.first(), Some(&4));
    assert!(order_candidates(192, 256, 15, 7).denominators.contains(&4));
    assert!(order_candidates(0, 256, 15, 7).denominators.is_empty());
    assert_eq!(recover_factors(4, 7, 15), Ok((3, 5)));
    assert_eq!(recover_factors(2, 14, 15), Err(FactorFailure::TrivialRoot));
    assert_eq!(recover_factors(3, 4, 21), Err(FactorFailure::OddOrder));
    // 2^6 = 64 = -1 (mod 65).
    assert_eq!(recover_factors(12, 2, 65), Err(FactorFailure::TrivialRoot));
}

#[test]
fn minus_one_base_has_order_two() {
    for n in [15u64, 21, 65, 2033] {
        assert_eq!(multiplicative_order(n - 1, n), Some(2));
    }
}
