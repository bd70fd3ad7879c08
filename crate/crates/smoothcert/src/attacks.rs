//! Empirical adversaries: PGD in L-infinity and L2 with
//! expectation-over-randomization gradient estimation against the smoothed
//! classifier, and the robust-accuracy harness.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bounds::NoiseScale;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{add_noise, mix64, substream};
use crate::smoothing::{predict_at, BaseClassifier, SmoothingConfig, CSV_HEADER};

/// Attack norm: sign steps for L-infinity, normalized-gradient steps for L2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackNorm {
    L2,
    Linf,
}

impl std::fmt::Display for AttackNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttackNorm::L2 => write!(f, "l2"),
            AttackNorm::Linf => write!(f, "linf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub norm: AttackNorm,
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: u32,
    /// EOT sample count used to average gradients over the defense noise.
    pub eot_samples: u32,
    /// Noise the defender smooths with; `None` attacks the bare network.
    /// Must match the defender's noise when evaluating a smoothed model.
    pub noise: Option<NoiseScale>,
    pub seed: u64,
    /// Start from a uniform point in the epsilon ball (single start).
    pub random_start: bool,
    /// Independent restarts; the iterate with the highest loss wins.
    pub restarts: u32,
    /// Valid-input box; image data uses `[0, 1]`, unbounded features none.
    pub clip: Option<(f64, f64)>,
}

impl AttackConfig {
    /// Defaults: 40 iterations, step `2.5 * epsilon / iterations`, 8 EOT
    /// samples, random start, single restart, unit box.
    pub fn new(norm: AttackNorm, epsilon: f64) -> Self {
        AttackConfig {
            norm,
            epsilon,
            step_size: if epsilon > 0.0 { 2.5 * epsilon / 40.0 } else { 1e-3 },
            iterations: 40,
            eot_samples: 8,
            noise: None,
            seed: 0,
            random_start: true,
            restarts: 1,
            clip: Some((0.0, 1.0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::invalid("epsilon must be finite and >= 0"));
        }
        if self.iterations > 0 && (!self.step_size.is_finite() || self.step_size <= 0.0) {
            return Err(Error::invalid("step size must be > 0 when iterating"));
        }
        if self.eot_samples == 0 {
            return Err(Error::invalid("eot_samples must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        if let Some((lo, hi)) = self.clip {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::invalid("clip bounds must satisfy lo < hi"));
            }
        }
        Ok(())
    }
}

/// Average input gradient of the loss over `n0` noisy draws:
/// `(1/n0) sum_i grad_{x+r_i} L(theta, x+r_i, y)`.
pub fn eot_gradient(
    net: &Network,
    x: &[f64],
    label: usize,
    noise: NoiseScale,
    n0: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if n0 == 0 {
        return Err(Error::invalid("eot sample count must be at least 1"));
    }
    let mut total = vec![0.0; x.len()];
    for _ in 0..n0 {
        let noisy = add_noise(x, noise, rng);
        let grad = net.gradient(&noisy, label)?;
        for (t, g) in total.iter_mut().zip(&grad.input) {
            *t += g;
        }
    }
    for t in &mut total {
        *t /= n0 as f64;
    }
    Ok(total)
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|&a| a * a).sum::<f64>().sqrt()
}

fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &a| m.max(a.abs()))
}

/// Perturbation norm under the attack's geometry.
pub fn attack_norm_of(diff: &[f64], norm: AttackNorm) -> f64 {
    match norm {
        AttackNorm::L2 => l2_norm(diff),
        AttackNorm::Linf => linf_norm(diff),
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Project `delta` onto the epsilon ball, then the iterate onto the box.
fn project(x: &[f64], adv: &mut [f64], cfg: &AttackConfig) {
    match cfg.norm {
        AttackNorm::Linf => {
            for (a, &o) in adv.iter_mut().zip(x) {
                *a = (*a).clamp(o - cfg.epsilon, o + cfg.epsilon);
            }
        }
        AttackNorm::L2 => {
            let mut delta: Vec<f64> = adv.iter().zip(x).map(|(&a, &o)| a - o).collect();
            let n = l2_norm(&delta);
            if n > cfg.epsilon {
                let scale = cfg.epsilon / n;
                for d in &mut delta {
                    *d *= scale;
                }
            }
            for (a, (&o, &d)) in adv.iter_mut().zip(x.iter().zip(&delta)) {
                *a = o + d;
            }
        }
    }
    if let Some((lo, hi)) = cfg.clip {
        // box clipping never grows |adv - x| per coordinate since x is valid
        for a in adv.iter_mut() {
            *a = a.clamp(lo, hi);
        }
    }
}

fn random_start(x: &[f64], cfg: &AttackConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut adv = x.to_vec();
    match cfg.norm {
        AttackNorm::Linf => {
            for a in adv.iter_mut() {
                *a += rng.gen_range(-cfg.epsilon..=cfg.epsilon);
            }
        }
        AttackNorm::L2 => {
            let dir: Vec<f64> = (0..x.len())
                .map(|_| {
                    let e: f64 = StandardNormal.sample(rng);
                    e
                })
                .collect();
            let n = l2_norm(&dir).max(1e-300);
            let u: f64 = rng.gen();
            let radius = cfg.epsilon * u.powf(1.0 / x.len() as f64);
            for (a, d) in adv.iter_mut().zip(&dir) {
                *a += radius * d / n;
            }
        }
    }
    project(x, &mut adv, cfg);
    adv
}

/// Loss used to rank restarts: EOT-averaged cross-entropy against the
/// defender's noise, or the plain loss for a bare network.
fn attack_loss(
    net: &Network,
    x: &[f64],
    label: usize,
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    match cfg.noise {
        None => Ok(net.gradient(x, label)?.loss),
        Some(noise) => {
            let mut total = 0.0;
            for _ in 0..cfg.eot_samples {
                let noisy = add_noise(x, noise, rng);
                total += net.gradient(&noisy, label)?.loss;
            }
            Ok(total / cfg.eot_samples as f64)
        }
    }
}

/// Projected gradient ascent on the classification loss. The returned point
/// always satisfies the norm budget and the box constraint.
pub fn pgd_attack(net: &Network, x: &[f64], label: usize, cfg: &AttackConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.iterations == 0 || cfg.epsilon == 0.0 {
        return Ok(x.to_vec());
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..cfg.restarts {
        let mut rng = substream(cfg.seed, u64::from_le_bytes(*b"pgdstep\0"), restart as u64);
        let mut adv = if cfg.random_start {
            random_start(x, cfg, &mut rng)
        } else {
            x.to_vec()
        };
        for _ in 0..cfg.iterations {
            let grad = match cfg.noise {
                Some(noise) => eot_gradient(net, &adv, label, noise, cfg.eot_samples, &mut rng)?,
                None => net.gradient(&adv, label)?.input,
            };
            match cfg.norm {
                AttackNorm::Linf => {
                    for (a, &g) in adv.iter_mut().zip(&grad) {
                        *a += cfg.step_size * sign(g);
                    }
                }
                AttackNorm::L2 => {
                    let n = l2_norm(&grad);
                    if n == 0.0 {
                        continue; // zero-gradient step is skipped
                    }
                    for (a, &g) in adv.iter_mut().zip(&grad) {
                        *a += cfg.step_size * g / n;
                    }
                }
            }
            project(x, &mut adv, cfg);
        }
        if cfg.restarts == 1 {
            return Ok(adv);
        }
        let mut loss_rng = substream(cfg.seed, u64::from_le_bytes(*b"pgdloss\0"), restart as u64);
        let loss = attack_loss(net, &adv, label, cfg, &mut loss_rng)?;
        match &best {
            Some((best_loss, _)) if *best_loss >= loss => {}
            _ => best = Some((loss, adv)),
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// One attacked example: whether the (smoothed) prediction still matches the
/// true label, and the achieved perturbation size.
#[derive(Debug, Clone, Copy)]
pub struct AttackRecord {
    pub example_id: usize,
    pub success: bool,
    pub achieved_norm: f64,
}

/// Attack every example and classify the results. With a smoothing config
/// the prediction is the Monte Carlo majority vote and the attacker must use
/// the defender's noise; without one the bare network's argmax is used.
pub fn attack_dataset(
    net: &Network,
    data: &Dataset,
    attack: &AttackConfig,
    smoothing: Option<&SmoothingConfig>,
) -> Result<Vec<AttackRecord>> {
    attack.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot attack an empty dataset"));
    }
    if let Some(s) = smoothing {
        s.validate()?;
        if attack.noise != Some(s.noise) {
            return Err(Error::invalid(
                "attacker must use the defender's noise scale",
            ));
        }
    } else if attack.noise.is_some() {
        return Err(Error::invalid(
            "EOT noise configured but no smoothed defender given",
        ));
    }

    data.features
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut per_example = *attack;
            per_example.seed = mix64(attack.seed).wrapping_add(i as u64);
            let adv = pgd_attack(net, x, data.labels[i], &per_example)?;
            let predicted = match smoothing {
                Some(s) => predict_at(net, &adv, s, i as u64)?,
                None => net.classify(&adv)?,
            };
            let diff: Vec<f64> = adv.iter().zip(x).map(|(&a, &o)| a - o).collect();
            Ok(AttackRecord {
                example_id: i,
                success: predicted != data.labels[i],
                achieved_norm: attack_norm_of(&diff, attack.norm),
            })
        })
        .collect()
}

/// Fraction of examples still classified correctly after the attack.
pub fn empirical_robust_accuracy(
    net: &Network,
    data: &Dataset,
    attack: &AttackConfig,
    smoothing: Option<&SmoothingConfig>,
) -> Result<f64> {
    let records = attack_dataset(net, data, attack, smoothing)?;
    let correct = records.iter().filter(|r| !r.success).count();
    Ok(correct as f64 / records.len() as f64)
}

/// Per-(epsilon, example) attack records:
/// `epsilon,example_id,success_flag,achieved_norm`.
pub fn write_attack_records_csv<W: Write>(
    w: &mut W,
    rows: &[(f64, AttackRecord)],
) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    writeln!(w, "epsilon,example_id,success_flag,achieved_norm")?;
    for (eps, r) in rows {
        writeln!(
            w,
            "{},{},{},{}",
            eps, r.example_id, r.success, r.achieved_norm
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer};

    fn softmax_regression() -> Network {
        // 2 classes over 3 inputs
        Network::from_layers(vec![Layer::new(
            3,
            2,
            vec![0.9, -0.3, 0.2, -0.4, 0.5, -0.1],
            vec![0.05, -0.05],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn eot_with_vanishing_noise_matches_plain_gradient() {
        let net = softmax_regression();
        let x = [0.4, 0.6, 0.2];
        let plain = net.gradient(&x, 0).unwrap().input;
        let mut rng = substream(1, 0, 0);
        let noise = NoiseScale::gaussian(1e-12).unwrap();
        let eot = eot_gradient(&net, &x, 0, noise, 16, &mut rng).unwrap();
        for (a, b) in eot.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn eot_is_exact_when_the_gradient_is_constant() {
        // a one-layer softmax model with identical weight rows has an input
        // gradient that is constant in x (identically zero, since the class
        // probabilities and the one-hot target both sum to one); EOT must
        // reproduce it exactly for any sigma and n0
        let net = Network::from_layers(vec![Layer::new(
            2,
            2,
            vec![0.3, -0.2, 0.3, -0.2],
            vec![0.4, 0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let x = [0.7, -0.4];
        let plain = net.gradient(&x, 0).unwrap().input;
        assert!(plain.iter().all(|&g| g == 0.0));
        for &sigma in &[0.1, 1.0, 5.0] {
            for &n0 in &[1u32, 4, 16] {
                let mut rng = substream(2, 0, 0);
                let noise = NoiseScale::gaussian(sigma).unwrap();
                let eot = eot_gradient(&net, &x, 0, noise, n0, &mut rng).unwrap();
                for (a, b) in eot.iter().zip(&plain) {
                    // equality up to the rounding of p0 + p1 = 1
                    assert!((a - b).abs() < 1e-15, "sigma={sigma}, n0={n0}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn eot_n0_one_is_a_single_noisy_gradient() {
        let net = softmax_regression();
        let x = [0.1, 0.2, 0.3];
        let noise = NoiseScale::gaussian(0.5).unwrap();
        let mut rng = substream(3, 0, 0);
        let eot = eot_gradient(&net, &x, 1, noise, 1, &mut rng).unwrap();
        let mut rng2 = substream(3, 0, 0);
        let noisy = add_noise(&x, noise, &mut rng2);
        let direct = net.gradient(&noisy, 1).unwrap().input;
        assert_eq!(eot, direct);
    }

    #[test]
    fn pgd_degenerate_cases_return_input() {
        let net = softmax_regression();
        let x = [0.5, 0.5, 0.5];
        let mut cfg = AttackConfig::new(AttackNorm::Linf, 0.1);
        cfg.iterations = 0;
        assert_eq!(pgd_attack(&net, &x, 0, &cfg).unwrap(), x.to_vec());
        let cfg = AttackConfig::new(AttackNorm::L2, 0.0);
        assert_eq!(pgd_attack(&net, &x, 0, &cfg).unwrap(), x.to_vec());
    }

    #[test]
    fn one_step_linf_without_random_start_is_fgsm() {
        let net = softmax_regression();
        let x = [0.5, 0.5, 0.5];
        let label = 0;
        let eps = 0.1;
        let mut cfg = AttackConfig::new(AttackNorm::Linf, eps);
        cfg.iterations = 1;
        cfg.step_size = eps;
        cfg.random_start = false;
        cfg.noise = None;
        let adv = pgd_attack(&net, &x, label, &cfg).unwrap();
        // closed-form softmax-regression input gradient
        let g = net.gradient(&x, label).unwrap().input;
        for i in 0..x.len() {
            let expected = (x[i] + eps * sign(g[i])).clamp(0.0, 1.0);
            assert!((adv[i] - expected).abs() < 1e-12, "coordinate {i}");
        }
    }

    #[test]
    fn pgd_respects_budget_and_box() {
        let net = softmax_regression();
        let mut rng = substream(8, 0, 0);
        for case in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let norm = if case % 2 == 0 { AttackNorm::L2 } else { AttackNorm::Linf };
            let eps = rng.gen_range(0.01..0.5);
            let mut cfg = AttackConfig::new(norm, eps);
            cfg.seed = case;
            cfg.noise = Some(NoiseScale::gaussian(0.3).unwrap());
            cfg.eot_samples = 2;
            cfg.iterations = 10;
            let adv = pgd_attack(&net, &x, (case % 2) as usize, &cfg).unwrap();
            let diff: Vec<f64> = adv.iter().zip(&x).map(|(&a, &o)| a - o).collect();
            assert!(
                attack_norm_of(&diff, norm) <= eps + 1e-9,
                "budget violated: {} > {eps}",
                attack_norm_of(&diff, norm)
            );
            assert!(adv.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn pgd_is_deterministic_under_seed() {
        let net = softmax_regression();
        let x = [0.2, 0.8, 0.5];
        let mut cfg = AttackConfig::new(AttackNorm::L2, 0.3);
        cfg.noise = Some(NoiseScale::gaussian(0.25).unwrap());
        cfg.seed = 77;
        let a = pgd_attack(&net, &x, 1, &cfg).unwrap();
        let b = pgd_attack(&net, &x, 1, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn restarts_pick_the_strongest_iterate() {
        let net = softmax_regression();
        let x = [0.3, 0.4, 0.6];
        let mut single = AttackConfig::new(AttackNorm::Linf, 0.2);
        single.seed = 5;
        single.noise = None;
        let mut multi = single;
        multi.restarts = 5;
        let adv_s = pgd_attack(&net, &x, 0, &single).unwrap();
        let adv_m = pgd_attack(&net, &x, 0, &multi).unwrap();
        let loss_s = net.gradient(&adv_s, 0).unwrap().loss;
        let loss_m = net.gradient(&adv_m, 0).unwrap().loss;
        assert!(loss_m >= loss_s - 1e-12, "{loss_m} < {loss_s}");
    }

    #[test]
    fn attacker_noise_must_match_defender() {
        let net = softmax_regression();
        let data = Dataset {
            features: vec![vec![0.5, 0.5, 0.5]],
            labels: vec![0],
            dim: 3,
            class_count: 2,
            domain: crate::data::FeatureDomain::UnitInterval,
            image_shape: None,
        };
        let smoothing = SmoothingConfig::new(NoiseScale::gaussian(0.5).unwrap());
        let mut attack = AttackConfig::new(AttackNorm::L2, 0.1);
        attack.noise = Some(NoiseScale::gaussian(0.25).unwrap());
        assert!(attack_dataset(&net, &data, &attack, Some(&smoothing)).is_err());
        attack.noise = Some(NoiseScale::gaussian(0.5).unwrap());
        assert!(attack_dataset(&net, &data, &attack, Some(&smoothing)).is_ok());
    }
}
