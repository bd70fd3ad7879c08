//! Cross-module pipeline tests: trained networks flowing through
//! certification, regression fixtures, and determinism contracts.

use smoothcert::bounds::NoiseScale;
use smoothcert::data::{make_blobs, make_blobs_with_std, Dataset};
use smoothcert::nn::{train, Network, TrainConfig, TrainMode};
use smoothcert::rng::substream;
use smoothcert::smoothing::{
    certify_dataset, curve_from_results, radius_from_intervals, SmoothingConfig,
};

fn plain_cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: 0.5,
        stability_gamma: 0.0,
        noise_sigma: 0.0,
        mode: TrainMode::Plain,
        seed,
    }
}

/// Regression fixture: reference plain training run on well-separated blobs,
/// frozen from the first execution of this configuration. Any change to the
/// training loop's arithmetic or draw order shows up here.
#[test]
fn training_trace_regression_fixture() {
    let data = make_blobs(100, 2, 2, 10.0, 42).unwrap();
    let mut net = Network::mlp(&[2, 16, 2], 7).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.5,
        ..plain_cfg(50, 3)
    };
    let trace = train(&mut net, &data, &cfg).unwrap();

    let frozen = [
        (0, 0.07121263723010576),
        (1, 3.9741097930578744e-5),
        (2, 3.733341550835037e-5),
    ];
    for (epoch, expected) in frozen {
        let got = trace[epoch].mean_loss;
        assert!(
            ((got - expected) / expected).abs() < 1e-12,
            "epoch {epoch}: loss {got:e} != frozen {expected:e}"
        );
    }
    let last = trace.last().unwrap();
    assert!(
        ((last.mean_loss - 9.388377150563054e-6) / 9.388377150563054e-6).abs() < 1e-12,
        "final loss {:e}",
        last.mean_loss
    );
    assert!(last.accuracy >= 0.99, "accuracy = {}", last.accuracy);
}

fn noisy_accuracy(net: &Network, data: &Dataset, sigma: f64, seed: u64) -> f64 {
    use rand_distr::Distribution;
    let mut correct = 0usize;
    let mut total = 0usize;
    for (i, (x, &y)) in data.features.iter().zip(&data.labels).enumerate() {
        let mut rng = substream(seed, 900, i as u64);
        for _ in 0..20 {
            let noisy: Vec<f64> = x
                .iter()
                .map(|&v| {
                    let e: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    v + sigma * e
                })
                .collect();
            if net.classify(&noisy).unwrap() == y {
                correct += 1;
            }
            total += 1;
        }
    }
    correct as f64 / total as f64
}

use smoothcert::smoothing::BaseClassifier;

/// Stability training beats plain training on accuracy under evaluation
/// noise (the ablation contrast, at one seed; the acceptance suite runs the
/// certified version across seeds).
#[test]
fn stability_training_improves_noisy_accuracy() {
    let train_data = make_blobs_with_std(200, 2, 8, 1.5, 0.25, 1).unwrap();
    let test_data = make_blobs_with_std(100, 2, 8, 1.5, 0.25, 10_001).unwrap();
    let sigma = 0.5;

    let mut plain = Network::mlp(&[8, 32, 32, 2], 3).unwrap();
    let mut cfg = plain_cfg(150, 2);
    cfg.learning_rate = 0.3;
    train(&mut plain, &train_data, &cfg).unwrap();

    let mut stab = Network::mlp(&[8, 32, 32, 2], 3).unwrap();
    let cfg = TrainConfig {
        stability_gamma: 2.0,
        noise_sigma: sigma,
        mode: TrainMode::Stability,
        ..cfg
    };
    train(&mut stab, &train_data, &cfg).unwrap();

    let acc_plain = noisy_accuracy(&plain, &test_data, sigma, 5);
    let acc_stab = noisy_accuracy(&stab, &test_data, sigma, 5);
    assert!(
        acc_stab > acc_plain,
        "stability {acc_stab} not above plain {acc_plain}"
    );
}

#[test]
fn certification_of_trained_network_is_consistent() {
    let train_data = make_blobs_with_std(100, 2, 8, 1.5, 0.25, 21).unwrap();
    let test_data = make_blobs_with_std(50, 2, 8, 1.5, 0.25, 22).unwrap();
    let mut net = Network::mlp(&[8, 32, 32, 2], 23).unwrap();
    let mut cfg = plain_cfg(60, 24);
    cfg.learning_rate = 0.3;
    train(&mut net, &train_data, &cfg).unwrap();

    let scfg = SmoothingConfig {
        seed: 25,
        ..SmoothingConfig::new(NoiseScale::gaussian(0.5).unwrap())
    };
    let results = certify_dataset(&net, &test_data, &scfg).unwrap();
    assert_eq!(results.len(), test_data.len());

    for res in &results {
        // invariant: certified <=> radius > 0 <=> p1_lower > p2_upper
        assert_eq!(res.certified, res.radius > 0.0);
        assert_eq!(
            res.certified,
            res.intervals.p1_lower > res.intervals.p2_upper
        );
        // stored radius re-derives bit-for-bit from stored intervals
        if res.certified {
            let again = radius_from_intervals(&res.intervals, scfg.noise).unwrap();
            assert_eq!(res.radius.to_bits(), again.to_bits());
        }
        // predicted class is the count argmax
        assert_eq!(res.predicted_class, res.counts.top_class());
    }

    // curve over these results is nonincreasing
    let radii: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let curve = curve_from_results(&results, &test_data.labels, &radii, true);
    for w in curve.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-12);
    }

    // whole-pipeline determinism: bitwise identical reruns
    let again = certify_dataset(&net, &test_data, &scfg).unwrap();
    for (a, b) in results.iter().zip(&again) {
        assert_eq!(a.radius.to_bits(), b.radius.to_bits());
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.predicted_class, b.predicted_class);
    }
}

/// Sigma-sweep behavior: more noise lowers the curve's starting point but
/// pushes the radius at which it degenerates to zero further out.
#[test]
fn sigma_sweep_trades_clean_accuracy_for_reach() {
    let train_data = make_blobs_with_std(200, 2, 8, 1.5, 0.25, 1).unwrap();
    let test = make_blobs_with_std(100, 2, 8, 1.5, 0.25, 10_001).unwrap();
    let cfg = TrainConfig {
        epochs: 250,
        batch_size: 16,
        learning_rate: 0.3,
        stability_gamma: 2.0,
        noise_sigma: 0.5,
        mode: TrainMode::Stability,
        seed: 2,
    };
    let mut net = Network::mlp(&[8, 32, 32, 2], 3).unwrap();
    train(&mut net, &train_data, &cfg).unwrap();

    let mut prev_acc0 = f64::INFINITY;
    let mut prev_reach = 0.0;
    for sigma in [0.3, 0.5, 0.7] {
        let scfg = SmoothingConfig {
            seed: 4,
            ..SmoothingConfig::new(NoiseScale::gaussian(sigma).unwrap())
        };
        let results = certify_dataset(&net, &test, &scfg).unwrap();
        let acc0 = curve_from_results(&results, &test.labels, &[0.0], true)[0].1;
        let reach = results.iter().map(|r| r.radius).fold(0.0f64, f64::max);
        assert!(acc0 <= prev_acc0 + 1e-12, "curve start rose with sigma");
        assert!(reach > prev_reach, "degeneration point did not move out");
        prev_acc0 = acc0;
        prev_reach = reach;
    }
}

/// Robust accuracy over an epsilon sweep: the zero-budget row equals clean
/// smoothed accuracy exactly, and the sweep is nonincreasing up to Monte
/// Carlo noise.
#[test]
fn attack_sweep_is_monotone_and_anchored_at_clean_accuracy() {
    use smoothcert::attacks::{attack_dataset, AttackConfig, AttackNorm};
    use smoothcert::smoothing::predict_at;

    let train_data = make_blobs_with_std(200, 2, 8, 1.5, 0.25, 41).unwrap();
    let test = make_blobs_with_std(100, 2, 8, 1.5, 0.25, 10_041).unwrap();
    let cfg = TrainConfig {
        epochs: 250,
        batch_size: 16,
        learning_rate: 0.3,
        stability_gamma: 2.0,
        noise_sigma: 0.5,
        mode: TrainMode::Stability,
        seed: 42,
    };
    let mut net = Network::mlp(&[8, 32, 32, 2], 43).unwrap();
    train(&mut net, &train_data, &cfg).unwrap();
    let scfg = SmoothingConfig {
        seed: 44,
        ..SmoothingConfig::new(NoiseScale::gaussian(0.5).unwrap())
    };

    let mut accuracies = Vec::new();
    for &eps in &[0.0, 0.25, 0.5, 0.75] {
        let atk = AttackConfig {
            norm: AttackNorm::L2,
            epsilon: eps,
            step_size: if eps > 0.0 { 2.5 * eps / 20.0 } else { 1e-3 },
            iterations: 20,
            eot_samples: 4,
            noise: Some(scfg.noise),
            seed: 45,
            random_start: true,
            restarts: 1,
            clip: None,
        };
        let records = attack_dataset(&net, &test, &atk, Some(&scfg)).unwrap();
        let acc = records.iter().filter(|r| !r.success).count() as f64 / test.len() as f64;
        accuracies.push(acc);
    }

    // epsilon = 0 leaves inputs untouched, so the row IS clean accuracy
    let clean = test
        .features
        .iter()
        .zip(&test.labels)
        .enumerate()
        .filter(|(i, (x, &y))| predict_at(&net, x, &scfg, *i as u64).unwrap() == y)
        .count() as f64
        / test.len() as f64;
    assert_eq!(accuracies[0], clean);

    // nonincreasing within two binomial standard errors
    let tol = 2.0 * (0.25f64 / test.len() as f64).sqrt();
    for w in accuracies.windows(2) {
        assert!(
            w[1] <= w[0] + tol,
            "robust accuracy rose along the sweep: {accuracies:?}"
        );
    }
}

#[test]
fn divergent_training_reports_the_epoch() {
    let data = make_blobs(50, 2, 2, 4.0, 51).unwrap();
    let mut net = Network::mlp(&[2, 8, 2], 52).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e12,
        ..plain_cfg(20, 53)
    };
    match train(&mut net, &data, &cfg) {
        Err(smoothcert::Error::TrainingDiverged { .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

/// Certifying with Laplacian noise produces L1 radii through the same
/// pipeline.
#[test]
fn laplacian_certification_pipeline() {
    let test_data = make_blobs_with_std(20, 2, 8, 1.5, 0.25, 31).unwrap();
    let mut net = Network::mlp(&[8, 16, 2], 32).unwrap();
    let train_data = make_blobs_with_std(100, 2, 8, 1.5, 0.25, 33).unwrap();
    let mut cfg = plain_cfg(60, 34);
    cfg.learning_rate = 0.3;
    train(&mut net, &train_data, &cfg).unwrap();

    let scfg = SmoothingConfig {
        seed: 35,
        ..SmoothingConfig::new(NoiseScale::laplacian(0.5).unwrap())
    };
    let results = certify_dataset(&net, &test_data, &scfg).unwrap();
    for res in &results {
        assert_eq!(res.norm, smoothcert::bounds::NormKind::L1);
        if res.certified {
            let gap = 1.0 - res.intervals.p1_lower
                + res.intervals.p2_upper.min(1.0 - res.intervals.p1_lower);
            let expected = -gap.ln() * 0.5;
            assert!((res.radius - expected).abs() < 1e-12);
        }
    }
}
