//! Certified adversarial robustness via randomized smoothing.
//!
//! Turns any point classifier into a smoothed classifier with a certified
//! L2 (Gaussian noise) or L1 (Laplacian noise) robustness radius derived
//! from Renyi-divergence bounds, estimates the radius by Monte Carlo
//! sampling with exact Clopper-Pearson confidence adjustment, and ships the
//! surrounding harnesses: a small feedforward network with stability
//! training to enlarge the certified radii, PGD attacks with
//! expectation-over-randomization gradients for empirical evaluation, and
//! brute-force oracles that validate the closed forms independently.

pub mod attacks;
pub mod bounds;
pub mod data;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod smoothing;
pub mod stats;

pub use attacks::{AttackConfig, AttackNorm, AttackRecord};
pub use bounds::{NoiseScale, NormKind, PixelDpParams, RenyiOrder, TopTwo};
pub use data::{Dataset, FeatureDomain};
pub use error::{Error, Result};
pub use nn::{Network, TrainConfig, TrainMode};
pub use oracle::ClassDistribution;
pub use smoothing::{
    BaseClassifier, CertificationResult, EstimateMode, SmoothingConfig, CSV_HEADER,
};
pub use stats::{ClassCounts, IntervalPair};
