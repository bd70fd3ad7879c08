//! Implementations of the four subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use smoothcert::attacks::{attack_dataset, AttackConfig, AttackNorm};
use smoothcert::bounds::{l2_radius, pixeldp_radius, NoiseScale, TopTwo};
use smoothcert::data::{load_idx, make_blobs_with_std, Dataset, FeatureDomain};
use smoothcert::nn::{train as train_network, Network, TrainConfig, TrainMode};
use smoothcert::smoothing::{
    certify_dataset, curve_from_results, write_certification_csv, SmoothingConfig, CSV_HEADER,
};

use crate::{
    AttackArgs, CertifyArgs, CliError, CompareBoundsArgs, DatasetArgs, DatasetKind, NormArg,
    TrainArgs,
};

// Desk-scale blob fixture: two tight clusters (std 0.25) in 8 dimensions at
// separation 1.5, so noise at sigma = 0.5 dominates the cluster spread and
// the wide empty margin band makes training quality visible in the radii.
// Training uses 200 points per class, evaluation 100.
const BLOB_CLASSES: usize = 2;
const BLOB_DIM: usize = 8;
const BLOB_SEPARATION: f64 = 1.5;
const BLOB_STD: f64 = 0.25;
const BLOB_TRAIN_PER_CLASS: usize = 200;
const BLOB_EVAL_PER_CLASS: usize = 100;

fn load_dataset(args: &DatasetArgs, seed: u64, n_per_class: usize) -> Result<Dataset, CliError> {
    match args.dataset {
        DatasetKind::Blobs => Ok(make_blobs_with_std(
            n_per_class,
            BLOB_CLASSES,
            BLOB_DIM,
            BLOB_SEPARATION,
            BLOB_STD,
            seed,
        )?),
        DatasetKind::Idx => {
            let images = args.images.as_ref().ok_or_else(|| {
                CliError::Usage("--dataset idx requires --images".to_string())
            })?;
            let labels = args.labels.as_ref().ok_or_else(|| {
                CliError::Usage("--dataset idx requires --labels".to_string())
            })?;
            Ok(load_idx(images, labels)?)
        }
    }
}

fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFileConfig {
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    #[serde(default)]
    stability_gamma: f64,
    #[serde(default)]
    noise_sigma: f64,
    mode: String,
    seed: u64,
}

impl TrainFileConfig {
    fn into_train_config(self) -> Result<TrainConfig, CliError> {
        let mode = match self.mode.as_str() {
            "plain" => TrainMode::Plain,
            "gaussian_augment" => TrainMode::GaussianAugment,
            "stability" => TrainMode::Stability,
            other => {
                return Err(CliError::Usage(format!(
                    "config field `mode`: unknown value `{other}` \
                     (expected plain, gaussian_augment, or stability)"
                )))
            }
        };
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            stability_gamma: self.stability_gamma,
            noise_sigma: self.noise_sigma,
            mode,
            seed: self.seed,
        };
        cfg.validate()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        Ok(cfg)
    }
}

fn architecture(data: &Dataset) -> Vec<usize> {
    if data.dim <= 16 {
        vec![data.dim, 32, 32, data.class_count]
    } else {
        vec![data.dim, 256, 128, data.class_count]
    }
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let raw = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", args.config.display())))?;
    let file_cfg: TrainFileConfig = serde_json::from_str(&raw)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", args.config.display())))?;
    let cfg = file_cfg.into_train_config()?;

    let data = load_dataset(&args.data, args.seed, BLOB_TRAIN_PER_CLASS)?;
    let mut net = Network::mlp(&architecture(&data), cfg.seed)?;
    let trace = train_network(&mut net, &data, &cfg)?;
    net.save(&args.checkpoint)?;

    let mut csv = Vec::new();
    writeln!(csv, "{CSV_HEADER}")?;
    writeln!(csv, "epoch,mean_loss,train_accuracy")?;
    for stats in &trace {
        writeln!(csv, "{},{},{}", stats.epoch, stats.mean_loss, stats.accuracy)?;
    }
    write_file(&args.out, &csv)?;
    Ok(())
}

fn default_radii() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 10.0).collect()
}

pub fn certify(args: &CertifyArgs) -> Result<(), CliError> {
    if args.lambda.is_some() && !args.sigmas.is_empty() {
        return Err(CliError::Usage(
            "--sigma and --lambda are mutually exclusive".to_string(),
        ));
    }
    let noises: Vec<NoiseScale> = if let Some(lambda) = args.lambda {
        vec![NoiseScale::laplacian(lambda).map_err(|e| CliError::Usage(e.to_string()))?]
    } else if args.sigmas.is_empty() {
        return Err(CliError::Usage(
            "provide at least one --sigma or a --lambda".to_string(),
        ));
    } else {
        args.sigmas
            .iter()
            .map(|&s| NoiseScale::gaussian(s).map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?
    };

    let net = Network::load(&args.checkpoint)?;
    let data = load_dataset(&args.data, args.seed, BLOB_EVAL_PER_CLASS)?;
    let radii = args.radii.clone().unwrap_or_else(default_radii);
    if radii.is_empty() {
        return Err(CliError::Usage("--radii must be nonempty".to_string()));
    }
    ensure_out_dir(&args.out)?;

    let mut curve_csv = Vec::new();
    writeln!(curve_csv, "{CSV_HEADER}")?;
    writeln!(curve_csv, "noise_kind,noise_scale,l_star,certified_accuracy")?;

    for noise in noises {
        let cfg = SmoothingConfig {
            noise,
            n_samples: args.n,
            confidence: args.confidence,
            seed: args.seed,
            clip: match data.domain {
                FeatureDomain::UnitInterval => Some((0.0, 1.0)),
                FeatureDomain::Unbounded => None,
            },
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let results = certify_dataset(&net, &data, &cfg)?;

        let kind = match noise {
            NoiseScale::Gaussian { .. } => "gaussian",
            NoiseScale::Laplacian { .. } => "laplacian",
        };
        let mut records_csv = Vec::new();
        write_certification_csv(&mut records_csv, &results, &data.labels)?;
        let name = format!("records_{kind}_{}.csv", noise.scale());
        write_file(&args.out.join(name), &records_csv)?;

        for (l_star, acc) in curve_from_results(&results, &data.labels, &radii, true) {
            writeln!(curve_csv, "{kind},{},{},{}", noise.scale(), l_star, acc)?;
        }
    }
    write_file(&args.out.join("curve.csv"), &curve_csv)?;
    Ok(())
}

pub fn attack(args: &AttackArgs) -> Result<(), CliError> {
    if args.epsilons.is_empty() {
        return Err(CliError::Usage(
            "provide at least one --epsilon".to_string(),
        ));
    }
    if args.sigma < 0.0 {
        return Err(CliError::Usage("--sigma must be >= 0".to_string()));
    }
    let net = Network::load(&args.checkpoint)?;
    let data = load_dataset(&args.data, args.seed, BLOB_EVAL_PER_CLASS)?;
    ensure_out_dir(&args.out)?;

    let smoothing = if args.sigma > 0.0 {
        Some(SmoothingConfig {
            noise: NoiseScale::gaussian(args.sigma).map_err(|e| CliError::Usage(e.to_string()))?,
            n_samples: args.n,
            confidence: args.confidence,
            seed: args.seed,
            clip: match data.domain {
                FeatureDomain::UnitInterval => Some((0.0, 1.0)),
                FeatureDomain::Unbounded => None,
            },
        })
    } else {
        None
    };
    let norm = match args.norm {
        NormArg::L2 => AttackNorm::L2,
        NormArg::Linf => AttackNorm::Linf,
    };
    let clip = match data.domain {
        FeatureDomain::UnitInterval => Some((0.0, 1.0)),
        FeatureDomain::Unbounded => None,
    };

    let mut curve_csv = Vec::new();
    writeln!(curve_csv, "{CSV_HEADER}")?;
    writeln!(curve_csv, "epsilon,robust_accuracy")?;
    let mut record_rows = Vec::new();

    for &epsilon in &args.epsilons {
        if epsilon < 0.0 {
            return Err(CliError::Usage("--epsilon must be >= 0".to_string()));
        }
        let steps = args.steps.max(1);
        let cfg = AttackConfig {
            norm,
            epsilon,
            step_size: if epsilon > 0.0 { 2.5 * epsilon / steps as f64 } else { 1e-3 },
            iterations: args.steps,
            eot_samples: args.eot,
            noise: smoothing.as_ref().map(|s| s.noise),
            seed: args.seed,
            random_start: true,
            restarts: args.restarts,
            clip,
        };
        let records = attack_dataset(&net, &data, &cfg, smoothing.as_ref())?;
        let correct = records.iter().filter(|r| !r.success).count();
        let accuracy = correct as f64 / records.len() as f64;
        writeln!(curve_csv, "{epsilon},{accuracy}")?;
        record_rows.extend(records.into_iter().map(|r| (epsilon, r)));
    }

    let mut records_csv = Vec::new();
    smoothcert::attacks::write_attack_records_csv(&mut records_csv, &record_rows)?;
    write_file(&args.out.join("attack_records.csv"), &records_csv)?;
    write_file(&args.out.join("attack_curve.csv"), &curve_csv)?;
    Ok(())
}

pub fn compare_bounds(args: &CompareBoundsArgs) -> Result<(), CliError> {
    if !args.step.is_finite() || args.step <= 0.0 || args.step > 0.5 {
        return Err(CliError::Usage("--step must lie in (0, 0.5]".to_string()));
    }
    if !args.sigma.is_finite() || args.sigma <= 0.0 {
        return Err(CliError::Usage("--sigma must be > 0".to_string()));
    }
    ensure_out_dir(&args.out)?;
    let step = args.step;
    let mut csv = Vec::new();
    writeln!(csv, "{CSV_HEADER}")?;
    writeln!(csv, "p1,p2,ours,pixeldp,ratio")?;

    let i_lo = (0.1 / step).ceil() as usize;
    let i_hi = (0.99 / step + 1e-9).floor() as usize;
    for i in i_lo..=i_hi {
        let p1 = i as f64 * step;
        let p2_max = p1.min(1.0 - p1);
        let j_hi = (p2_max / step + 1e-9).floor() as usize;
        for j in 0..=j_hi {
            let p2 = j as f64 * step;
            if p1 + p2 < 0.2 - 1e-9 {
                continue;
            }
            let top = TopTwo::new(p1, p2).map_err(|e| CliError::Numeric(e.to_string()))?;
            let ours = l2_radius(&top, args.sigma)?;
            let baseline = pixeldp_radius(&top, args.sigma)?;
            writeln!(csv, "{p1},{p2},{ours},{baseline},{}", ours / baseline)?;
        }
    }
    write_file(&args.out.join("compare_bounds.csv"), &csv)?;
    Ok(())
}
