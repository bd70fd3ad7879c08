//! Monte Carlo certification pipeline: noisy sampling of a base classifier,
//! count aggregation, confidence-interval adjustment, and certified radius
//! emission, plus the certified-accuracy curve and its CSV schema.

use std::io::Write;

use rayon::prelude::*;

use crate::bounds::{NoiseScale, NormKind, TopTwo};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{add_noise, substream};
use crate::stats::{clopper_pearson_pair, ClassCounts, IntervalPair};

/// Version tag written as the first line of every CSV this crate emits.
pub const CSV_HEADER: &str = "# smoothcert v1";

/// A deterministic point classifier, evaluated read-only from many threads.
pub trait BaseClassifier: Sync {
    fn class_count(&self) -> usize;
    fn classify(&self, x: &[f64]) -> Result<usize>;
}

/// Monte Carlo sampling configuration for the smoothed classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub noise: NoiseScale,
    pub n_samples: u32,
    pub confidence: f64,
    pub seed: u64,
    /// Optional box to clip noisy inputs into before classification. The
    /// theory adds unbounded noise, so the default is no clipping.
    pub clip: Option<(f64, f64)>,
}

impl SmoothingConfig {
    /// Defaults: 100 samples at 95% overall confidence, seed 0, no clipping.
    pub fn new(noise: NoiseScale) -> Self {
        SmoothingConfig {
            noise,
            n_samples: 100,
            confidence: 0.95,
            seed: 0,
            clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be at least 1"));
        }
        if !self.confidence.is_finite() || self.confidence <= 0.0 || self.confidence >= 1.0 {
            return Err(Error::invalid(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        if let Some((lo, hi)) = self.clip {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::invalid("clip bounds must satisfy lo < hi"));
            }
        }
        Ok(())
    }
}

/// Whether the radius is computed from confidence-interval endpoints (the
/// deployed pipeline) or raw empirical frequencies (oracle tests only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    IntervalEndpoints,
    RawFrequency,
}

/// Outcome of certifying one example.
#[derive(Debug, Clone)]
pub struct CertificationResult {
    pub predicted_class: usize,
    pub radius: f64,
    pub certified: bool,
    pub counts: ClassCounts,
    pub intervals: IntervalPair,
    pub norm: NormKind,
}

/// Tally the labels of `n_samples` noisy evaluations of `f` at `x`. Noise
/// for sample `i` comes from the substream `(seed, example_index, i)`, so
/// results are reproducible under any parallel schedule.
pub fn sample_counts_at(
    f: &dyn BaseClassifier,
    x: &[f64],
    cfg: &SmoothingConfig,
    example_index: u64,
) -> Result<ClassCounts> {
    cfg.validate()?;
    let k = f.class_count();
    if k == 0 {
        return Err(Error::invalid("classifier reports zero classes"));
    }
    let labels: Vec<Result<usize>> = (0..cfg.n_samples as usize)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(cfg.seed, example_index, i as u64);
            let mut noisy = add_noise(x, cfg.noise, &mut rng);
            if let Some((lo, hi)) = cfg.clip {
                for v in &mut noisy {
                    *v = v.clamp(lo, hi);
                }
            }
            f.classify(&noisy).map_err(|e| Error::Classifier {
                sample_index: i,
                source: Box::new(e),
            })
        })
        .collect();

    let mut counts = vec![0u64; k];
    for label in labels {
        let label = label?;
        if label >= k {
            return Err(Error::invalid(format!(
                "classifier returned label {label} outside 0..{k}"
            )));
        }
        counts[label] += 1;
    }
    ClassCounts::new(counts)
}

/// [`sample_counts_at`] for a standalone input (example index 0).
pub fn sample_counts(
    f: &dyn BaseClassifier,
    x: &[f64],
    cfg: &SmoothingConfig,
) -> Result<ClassCounts> {
    sample_counts_at(f, x, cfg, 0)
}

/// Certified radius from stored interval endpoints; the exact function the
/// pipeline uses, so stored radii can be re-derived bit-for-bit.
///
/// The effective upper endpoint is `min(p2_upper, 1 - p1_lower)`: both are
/// valid upper bounds for the runner-up probability at the same confidence,
/// and the floor keeps two-class results (whose one-sided endpoints sum to
/// one exactly) inside the top-two domain under quantile round-off.
pub fn radius_from_intervals(intervals: &IntervalPair, noise: NoiseScale) -> Result<f64> {
    let p2 = intervals.p2_upper.min(1.0 - intervals.p1_lower);
    let top = TopTwo::new(intervals.p1_lower, p2)?;
    noise.radius(&top)
}

/// Certify one example: sample counts, interval adjustment, then the
/// certified radius for the configured noise family. An uncertifiable
/// example (`p1_lower <= p2_upper`) still reports its predicted class with
/// `certified = false` and radius zero.
pub fn certify_with(
    f: &dyn BaseClassifier,
    x: &[f64],
    cfg: &SmoothingConfig,
    example_index: u64,
    mode: EstimateMode,
) -> Result<CertificationResult> {
    let counts = sample_counts_at(f, x, cfg, example_index)?;
    let (c1, c2) = counts.top_two_classes()?;
    let intervals = match mode {
        EstimateMode::IntervalEndpoints => clopper_pearson_pair(&counts, cfg.confidence)?,
        EstimateMode::RawFrequency => {
            let n = counts.n() as f64;
            IntervalPair {
                p1_lower: counts.counts()[c1] as f64 / n,
                p2_upper: counts.counts()[c2] as f64 / n,
                overall_confidence: cfg.confidence,
            }
        }
    };
    let (radius, certified) = if intervals.p1_lower > intervals.p2_upper {
        (radius_from_intervals(&intervals, cfg.noise)?, true)
    } else {
        (0.0, false)
    };
    Ok(CertificationResult {
        predicted_class: c1,
        radius,
        certified,
        counts,
        intervals,
        norm: cfg.noise.norm_kind(),
    })
}

pub fn certify_at(
    f: &dyn BaseClassifier,
    x: &[f64],
    cfg: &SmoothingConfig,
    example_index: u64,
) -> Result<CertificationResult> {
    certify_with(f, x, cfg, example_index, EstimateMode::IntervalEndpoints)
}

pub fn certify(
    f: &dyn BaseClassifier,
    x: &[f64],
    cfg: &SmoothingConfig,
) -> Result<CertificationResult> {
    certify_at(f, x, cfg, 0)
}

/// Majority-vote prediction of the smoothed classifier (`n_samples = 1` is a
/// single noisy evaluation).
pub fn predict_at(
    f: &dyn BaseClassifier,
    x: &[f64],
    cfg: &SmoothingConfig,
    example_index: u64,
) -> Result<usize> {
    Ok(sample_counts_at(f, x, cfg, example_index)?.top_class())
}

pub fn predict(f: &dyn BaseClassifier, x: &[f64], cfg: &SmoothingConfig) -> Result<usize> {
    predict_at(f, x, cfg, 0)
}

/// Certify every example of a dataset; example `i` uses substream index `i`,
/// and results come back in dataset order regardless of scheduling.
pub fn certify_dataset(
    f: &dyn BaseClassifier,
    data: &Dataset,
    cfg: &SmoothingConfig,
) -> Result<Vec<CertificationResult>> {
    if data.is_empty() {
        return Err(Error::invalid("cannot certify an empty dataset"));
    }
    data.features
        .par_iter()
        .enumerate()
        .map(|(i, x)| certify_at(f, x, cfg, i as u64))
        .collect()
}

/// Fraction of examples simultaneously correct and certified beyond each
/// radius, scaled by the confidence level when `scale_by_confidence` is set
/// (the default reporting rule).
pub fn curve_from_results(
    results: &[CertificationResult],
    labels: &[usize],
    radii: &[f64],
    scale_by_confidence: bool,
) -> Vec<(f64, f64)> {
    let n = results.len() as f64;
    radii
        .iter()
        .map(|&r| {
            let hits = results
                .iter()
                .zip(labels)
                .filter(|(res, &y)| res.predicted_class == y && res.radius > r)
                .count() as f64;
            let mut frac = hits / n;
            if scale_by_confidence {
                if let Some(first) = results.first() {
                    frac *= first.intervals.overall_confidence;
                }
            }
            (r, frac)
        })
        .collect()
}

/// End-to-end certified-accuracy curve over a labeled dataset.
pub fn certified_accuracy_curve(
    f: &dyn BaseClassifier,
    data: &Dataset,
    cfg: &SmoothingConfig,
    radii: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if radii.is_empty() {
        return Err(Error::invalid("radius sweep must be nonempty"));
    }
    let results = certify_dataset(f, data, cfg)?;
    Ok(curve_from_results(&results, &data.labels, radii, true))
}

/// Per-example certification records:
/// `example_id,true_label,predicted,p1_lower,p2_upper,radius,certified`.
pub fn write_certification_csv<W: Write>(
    w: &mut W,
    results: &[CertificationResult],
    labels: &[usize],
) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    writeln!(
        w,
        "example_id,true_label,predicted,p1_lower,p2_upper,radius,certified"
    )?;
    for (i, (res, &y)) in results.iter().zip(labels).enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            i,
            y,
            res.predicted_class,
            res.intervals.p1_lower,
            res.intervals.p2_upper,
            res.radius,
            res.certified
        )?;
    }
    Ok(())
}
