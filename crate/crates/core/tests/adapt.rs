use pdlayout::adapt::gradcheck::{adjoint_mismatch, check_all};
use pdlayout::adapt::{
    demo_split, feature_domain_gap, synth_dataset, to_tensor, train_adversarial, train_pd_only, PdNetConfig,
    SyntheticData, SyntheticDomainConfig, ToyExtractor, TrainConfig, TrainRun,
};
use pdlayout::losses::LossWeights;
use pdlayout::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_split() -> (SyntheticData, SyntheticData) {
    demo_split(
        &SyntheticDomainConfig {
            n_pairs: 48,
            n_target: 48,
            ..SyntheticDomainConfig::default()
        },
        8,
    )
    .unwrap()
}

fn short(steps: usize, gamma: f64) -> TrainConfig {
    TrainConfig {
        steps,
        eval_every: 10,
        weights: LossWeights { gamma, ..LossWeights::default() },
        ..TrainConfig::default()
    }
}

#[test]
fn every_operation_matches_finite_differences() {
    for seed in [1, 2] {
        let checks = check_all(seed).unwrap();
        assert_eq!(checks.len(), 30);
        for c in &checks {
            assert!(c.relative_error <= 1e-4, "{}: {:e}", c.name, c.relative_error);
        }
    }
}

#[test]
fn transposed_conv_is_the_adjoint() {
    for seed in 0..4 {
        assert!(adjoint_mismatch(seed).unwrap() <= 1e-10);
    }
}

/// Means and variances of consecutive non-overlapping `width`-step blocks.
fn blocks(values: &[f64], width: usize) -> Vec<(f64, f64)> {
    values
        .chunks_exact(width)
        .map(|b| {
            let n = b.len() as f64;
            let mean = b.iter().sum::<f64>() / n;
            let var = b.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (mean, var)
        })
        .collect()
}

#[test]
fn pd_only_run_learns_the_masks() {
    let (train, held) = demo_split(&SyntheticDomainConfig::default(), 32).unwrap();
    let run = train_pd_only(&train, &held, &TrainConfig::default(), &PdNetConfig::default()).unwrap();
    assert_eq!(run.trace.len(), 500);

    let first_auc = run.trace[0].auc.unwrap();
    assert!((first_auc - 0.5).abs() <= 0.1, "step-0 AUC {first_auc}");
    assert!(run.final_auc >= 0.9, "final AUC {}", run.final_auc);

    // 50-step block means never rise above the best earlier block by more than three
    // standard errors of the difference, and the loss falls by more than half overall.
    let losses: Vec<f64> = run.trace.iter().map(|r| r.l_pd).collect();
    let b = blocks(&losses, 50);
    let mut best = 0;
    for i in 1..b.len() {
        let se = ((b[best].1 + b[i].1) / 50.0).sqrt();
        assert!(b[i].0 <= b[best].0 + 3.0 * se, "block {i}: {:?} vs best {:?}", b[i], b[best]);
        if b[i].0 < b[best].0 {
            best = i;
        }
    }
    assert!(b[b.len() - 1].0 < 0.5 * b[0].0);

    // Frozen extractor: the gap never moves.
    assert!(run.trace.iter().all(|r| r.gap == run.initial_gap));
}

#[test]
fn discriminator_outputs_stay_in_the_open_unit_interval() {
    let (train, held) = small_split();
    let run = train_pd_only(&train, &held, &short(30, 6.0), &PdNetConfig::default()).unwrap();
    let images: Vec<_> = held.source.iter().map(|s| &s.image).collect();
    let f = run.extractor.forward(to_tensor(&images).unwrap()).unwrap();
    let p = run.pd.forward(f.features, 32, 32).unwrap();
    assert!(p.output.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

fn assert_same(a: &TrainRun, b: &TrainRun) {
    assert_eq!(a.trace, b.trace);
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert_eq!(x.l_pd.to_bits(), y.l_pd.to_bits());
        assert_eq!(x.gap.to_bits(), y.gap.to_bits());
    }
    assert_eq!(a.trace_jsonl(), b.trace_jsonl());
    assert_eq!(a.final_auc.to_bits(), b.final_auc.to_bits());
}

#[test]
fn runs_replay_bit_for_bit() {
    let (train, held) = small_split();
    let cfg = short(25, 6.0);
    let a = train_adversarial(&train, &held, &cfg, &PdNetConfig::default()).unwrap();
    let b = train_adversarial(&train, &held, &cfg, &PdNetConfig::default()).unwrap();
    assert_same(&a, &b);
    let c = train_pd_only(&train, &held, &cfg, &PdNetConfig::default()).unwrap();
    let d = train_pd_only(&train, &held, &cfg, &PdNetConfig::default()).unwrap();
    assert_same(&c, &d);

    let other_seed = train_adversarial(&train, &held, &TrainConfig { seed: 8, ..cfg }, &PdNetConfig::default()).unwrap();
    assert_ne!(other_seed.trace, a.trace);
}

#[test]
fn gamma_zero_leaves_the_extractor_alone() {
    let (train, held) = small_split();
    let run = train_adversarial(&train, &held, &short(40, 0.0), &PdNetConfig::default()).unwrap();
    assert!(run.trace.iter().all(|r| r.gap == run.initial_gap));
    assert_eq!(run.final_gap, run.initial_gap);
    let fresh = ToyExtractor::new(&mut ChaCha8Rng::seed_from_u64(TrainConfig::default().seed)).unwrap();
    assert_eq!(run.extractor.conv1.weight.value, fresh.conv1.weight.value);
    assert_eq!(run.extractor.conv2.weight.value, fresh.conv2.weight.value);

    let moved = train_adversarial(&train, &held, &short(40, 6.0), &PdNetConfig::default()).unwrap();
    assert_ne!(moved.extractor.conv1.weight.value, fresh.conv1.weight.value);
    assert_eq!(moved.initial_gap, run.initial_gap);
}

#[test]
fn feature_gap_properties() {
    let data = synth_dataset(&SyntheticDomainConfig {
        n_pairs: 6,
        n_target: 0,
        ..SyntheticDomainConfig::default()
    })
    .unwrap();
    let ex = ToyExtractor::new(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let same: Vec<_> = data.source.iter().map(|s| (&s.clean, &s.clean)).collect();
    assert_eq!(feature_domain_gap(&ex, &same).unwrap(), 0.0);

    let pairs: Vec<_> = data.source.iter().map(|s| (&s.clean, &s.image)).collect();
    let gap = feature_domain_gap(&ex, &pairs).unwrap();
    assert!(gap > 0.0);
    let reversed: Vec<_> = pairs.iter().rev().copied().collect();
    assert!((feature_domain_gap(&ex, &reversed).unwrap() - gap).abs() <= 1e-12);

    assert!(matches!(feature_domain_gap(&ex, &[]), Err(Error::NoSamples)));
    let small = synth_dataset(&SyntheticDomainConfig {
        width: 16,
        height: 16,
        n_pairs: 1,
        n_target: 0,
        ..SyntheticDomainConfig::default()
    })
    .unwrap();
    assert!(feature_domain_gap(&ex, &[(&data.source[0].clean, &small.source[0].image)]).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let (train, held) = small_split();
    for cfg in [
        TrainConfig { lr: 0.0, ..short(5, 6.0) },
        TrainConfig { momentum: 1.0, ..short(5, 6.0) },
        TrainConfig { batch: 0, ..short(5, 6.0) },
        TrainConfig {
            weights: LossWeights { alpha: f64::NAN, ..LossWeights::default() },
            ..short(5, 6.0)
        },
    ] {
        assert!(train_pd_only(&train, &held, &cfg, &PdNetConfig::default()).is_err());
        assert!(train_adversarial(&train, &held, &cfg, &PdNetConfig::default()).is_err());
    }
}
