//! Closed-form certified-radius mathematics.
//!
//! Everything here is a pure function of its arguments: generalized means,
//! the divergence lower bound for an argmax flip, the certified L2 (Gaussian)
//! and L1 (Laplacian) radii, Gaussian/Laplacian Renyi divergences, and the
//! differential-privacy baseline radius used for comparison.

use crate::error::{Error, Result};

/// Clamp applied to the runner-up probability inside `p^(1-alpha)`; the
/// exact-zero case uses the analytic limit `M_{1-alpha}(p1, 0) = 0` instead.
const MIN_PROB: f64 = 1e-15;

/// First- and second-largest class probabilities of a smoothed classifier.
///
/// Invariants: `0 <= p2 <= p1 <= 1` and `p1 + p2 <= 1`. A sum above one is a
/// caller bug and is rejected rather than clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopTwo {
    p1: f64,
    p2: f64,
}

impl TopTwo {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        if !p1.is_finite() || !p2.is_finite() {
            return Err(Error::invalid("top-two probabilities must be finite"));
        }
        if p2 < 0.0 || p1 > 1.0 {
            return Err(Error::invalid(format!(
                "top-two probabilities out of range: p1 = {p1}, p2 = {p2}"
            )));
        }
        if p1 < p2 {
            return Err(Error::invalid(format!(
                "p1 must be the larger probability: p1 = {p1} < p2 = {p2}"
            )));
        }
        if p1 + p2 > 1.0 {
            return Err(Error::invalid(format!(
                "top-two probabilities sum above one: p1 = {p1}, p2 = {p2}"
            )));
        }
        Ok(TopTwo { p1, p2 })
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }
}

/// Order of a Renyi divergence; strictly greater than one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 1.0 {
            return Err(Error::invalid(format!(
                "Renyi order must be finite and > 1, got {alpha}"
            )));
        }
        Ok(RenyiOrder(alpha))
    }

    pub fn alpha(&self) -> f64 {
        self.0
    }
}

/// Which norm a radius certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    L1,
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormKind::L2 => write!(f, "l2"),
            NormKind::L1 => write!(f, "l1"),
        }
    }
}

/// Noise family of the smoothing distribution: per-coordinate Gaussian with
/// standard deviation `sigma`, or per-coordinate Laplacian with scale
/// `lambda`. The scale is strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseScale {
    Gaussian { sigma: f64 },
    Laplacian { lambda: f64 },
}

impl NoiseScale {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        check_scale(sigma, "sigma")?;
        Ok(NoiseScale::Gaussian { sigma })
    }

    pub fn laplacian(lambda: f64) -> Result<Self> {
        check_scale(lambda, "lambda")?;
        Ok(NoiseScale::Laplacian { lambda })
    }

    pub fn scale(&self) -> f64 {
        match *self {
            NoiseScale::Gaussian { sigma } => sigma,
            NoiseScale::Laplacian { lambda } => lambda,
        }
    }

    /// Norm certified by this noise family.
    pub fn norm_kind(&self) -> NormKind {
        match self {
            NoiseScale::Gaussian { .. } => NormKind::L2,
            NoiseScale::Laplacian { .. } => NormKind::L1,
        }
    }

    /// Certified radius for the given top-two probabilities.
    pub fn radius(&self, top: &TopTwo) -> Result<f64> {
        match *self {
            NoiseScale::Gaussian { sigma } => l2_radius(top, sigma),
            NoiseScale::Laplacian { lambda } => l1_radius(top, lambda),
        }
    }
}

impl std::fmt::Display for NoiseScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseScale::Gaussian { sigma } => write!(f, "gaussian({sigma})"),
            NoiseScale::Laplacian { lambda } => write!(f, "laplacian({lambda})"),
        }
    }
}

fn check_scale(scale: f64, name: &str) -> Result<()> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::invalid(format!(
            "{name} must be finite and > 0, got {scale}"
        )));
    }
    Ok(())
}

/// Generalized mean `M_p(x) = ((1/n) sum x_i^p)^(1/p)`.
///
/// Limit conventions: `p = 0` is the geometric mean; for `p < 0` a zero
/// entry gives 0. Nondecreasing in `p` for fixed values.
pub fn generalized_mean(p: f64, values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("generalized mean of an empty list"));
    }
    if !p.is_finite() {
        return Err(Error::invalid(format!("exponent must be finite, got {p}")));
    }
    for &v in values {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::invalid(format!(
                "generalized mean requires finite nonnegative values, got {v}"
            )));
        }
    }
    let has_zero = values.contains(&0.0);
    if values.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let n = values.len() as f64;
    if p == 0.0 {
        if has_zero {
            return Ok(0.0);
        }
        let mean_log = values.iter().map(|&v| v.ln()).sum::<f64>() / n;
        return Ok(mean_log.exp());
    }
    if p < 0.0 && has_zero {
        return Ok(0.0);
    }
    // log-sum-exp over p*ln(x_i); zeros under p > 0 contribute exp(-inf) = 0
    let logs: Vec<f64> = values.iter().map(|&v| p * v.ln()).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|&l| (l - max).exp()).sum();
    Ok(((max + sum.ln() - n.ln()) / p).exp())
}

/// `M_{1-alpha}(p1, p2)` evaluated in log space so large orders neither
/// overflow nor lose the `p2` limit.
fn top_two_mean(p1: f64, p2: f64, alpha: f64) -> f64 {
    if p2 == 0.0 {
        // analytic limit for alpha > 1
        return 0.0;
    }
    let p2 = p2.max(MIN_PROB);
    let e = 1.0 - alpha; // < 0
    let d = e * (p1.ln() - p2.ln()); // <= 0
    let u = 0.5 * d.exp_m1(); // (exp(d) - 1)/2 in (-0.5, 0]
    p2 * (u.ln_1p() / e).exp()
}

/// Divergence lower bound for flipping the argmax away from a distribution
/// whose top two probabilities are `top`:
/// `-log(1 - p1 - p2 + 2 M_{1-alpha}(p1, p2))`.
///
/// Returns `f64::INFINITY` in the degenerate `p1 = 1, p2 = 0` case; zero iff
/// `p1 = p2`.
pub fn lemma1_lower_bound(top: &TopTwo, order: RenyiOrder) -> f64 {
    let (p1, p2) = (top.p1, top.p2);
    if p1 == p2 {
        return 0.0;
    }
    let m = top_two_mean(p1, p2, order.alpha());
    let inner = 1.0 - p1 - p2 + 2.0 * m;
    if inner <= 0.0 {
        f64::INFINITY
    } else {
        (-inner.ln()).max(0.0)
    }
}

/// Objective whose supremum over alpha gives the squared L2 radius divided
/// by `2 sigma^2`.
fn radius_objective(top: &TopTwo, alpha: f64) -> f64 {
    lemma1_lower_bound(top, RenyiOrder(alpha)) / alpha
}

const ALPHA_GRID_POINTS: usize = 200;
const ALPHA_MIN_OFFSET: f64 = 1e-9;
const ALPHA_MAX: f64 = 500.0;
const GOLDEN_WIDTH_TOL: f64 = 1e-10;

/// Supremum of `lemma1_lower_bound(top, alpha) / alpha` over `alpha > 1`:
/// a 200-point log-spaced bracketing grid on `alpha - 1` followed by
/// golden-section refinement around the best grid point.
fn sup_objective(top: &TopTwo) -> f64 {
    let lo = ALPHA_MIN_OFFSET.ln();
    let hi = (ALPHA_MAX - 1.0).ln();
    let mut grid = [0.0; ALPHA_GRID_POINTS];
    for (i, a) in grid.iter_mut().enumerate() {
        let t = i as f64 / (ALPHA_GRID_POINTS - 1) as f64;
        *a = 1.0 + (lo + t * (hi - lo)).exp();
    }
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &a) in grid.iter().enumerate() {
        let v = radius_objective(top, a);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let bracket_lo = grid[best_i.saturating_sub(1)];
    let bracket_hi = grid[(best_i + 1).min(ALPHA_GRID_POINTS - 1)];
    let refined = golden_section_max(
        |a| radius_objective(top, a),
        bracket_lo,
        bracket_hi,
        GOLDEN_WIDTH_TOL,
    );
    refined.max(best).max(0.0)
}

/// Golden-section search for the maximum of `f` on `[a, b]`, refined until
/// the bracket is narrower than `tol`. Returns the best value seen.
fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;
    while (b - a) > tol && iterations < 200 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        iterations += 1;
    }
    f1.max(f2)
}

/// Certified L2 radius under Gaussian smoothing:
/// `sup_{alpha > 1} sqrt((2 sigma^2 / alpha) * lemma1_lower_bound)`.
///
/// Zero iff `p1 = p2`; homogeneous of degree one in `sigma`. The unbounded
/// `p1 = 1, p2 = 0` case is signalled as [`Error::InfiniteRadius`].
pub fn l2_radius(top: &TopTwo, sigma: f64) -> Result<f64> {
    check_scale(sigma, "sigma")?;
    if top.p1 == top.p2 {
        return Ok(0.0);
    }
    if top.p1 >= 1.0 {
        return Err(Error::InfiniteRadius);
    }
    Ok(sigma * (2.0 * sup_objective(top)).sqrt())
}

/// Certified L1 radius under Laplacian smoothing:
/// `-lambda * log(1 - p1 + p2)`.
pub fn l1_radius(top: &TopTwo, lambda: f64) -> Result<f64> {
    check_scale(lambda, "lambda")?;
    let inner = 1.0 - top.p1 + top.p2;
    if inner <= 0.0 {
        return Err(Error::InfiniteRadius);
    }
    Ok(-inner.ln() * lambda + 0.0)
}

/// Renyi divergence of order `alpha` between two isotropic Gaussians with
/// squared mean distance `distance_sq`: `alpha * d^2 / (2 sigma^2)`.
pub fn gaussian_renyi_divergence(distance_sq: f64, sigma: f64, order: RenyiOrder) -> Result<f64> {
    if !distance_sq.is_finite() || distance_sq < 0.0 {
        return Err(Error::invalid(format!(
            "squared distance must be finite and >= 0, got {distance_sq}"
        )));
    }
    check_scale(sigma, "sigma")?;
    Ok(order.alpha() * distance_sq / (2.0 * sigma * sigma))
}

/// Renyi divergence of order `alpha` between two Laplacian distributions at
/// L1 distance `d` with common scale `lambda`:
/// `(1/(alpha-1)) log((alpha/(2 alpha - 1)) e^{(alpha-1) d / lambda}
///   + ((alpha-1)/(2 alpha - 1)) e^{-alpha d / lambda})`.
///
/// Tends to `d / lambda` as `alpha` grows; evaluated in log space so large
/// orders do not overflow.
pub fn laplace_renyi_divergence(distance_l1: f64, lambda: f64, order: RenyiOrder) -> Result<f64> {
    if !distance_l1.is_finite() || distance_l1 < 0.0 {
        return Err(Error::invalid(format!(
            "L1 distance must be finite and >= 0, got {distance_l1}"
        )));
    }
    check_scale(lambda, "lambda")?;
    let alpha = order.alpha();
    let a = (alpha - 1.0) * distance_l1 / lambda;
    let b = -alpha * distance_l1 / lambda;
    let wa = alpha / (2.0 * alpha - 1.0);
    let wb = (alpha - 1.0) / (2.0 * alpha - 1.0);
    // a >= b always, so factor out e^a
    let log_sum = a + (wa + wb * (b - a).exp()).ln();
    Ok(log_sum / (alpha - 1.0))
}

/// Tuning parameters of the differential-privacy baseline certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelDpParams {
    epsilon: f64,
    delta: f64,
}

impl PixelDpParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::invalid(format!(
                "epsilon must be finite and > 0, got {epsilon}"
            )));
        }
        if !delta.is_finite() || delta <= 0.0 || delta > 0.5 {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 0.5], got {delta}"
            )));
        }
        Ok(PixelDpParams { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Robustness condition `p1 >= e^{2 eps} p2 + (1 + e^{eps}) delta`.
    pub fn condition_holds(&self, top: &TopTwo) -> bool {
        top.p1() >= (2.0 * self.epsilon).exp() * top.p2() + (1.0 + self.epsilon.exp()) * self.delta
    }

    /// Radius certified when the condition holds:
    /// `sigma * eps / sqrt(2 log(1.25 / delta))`.
    pub fn radius(&self, sigma: f64) -> f64 {
        sigma * self.epsilon / (2.0 * (1.25 / self.delta).ln()).sqrt()
    }
}

// Baseline grid: epsilon in {0.01, ..., 0.99} (the Gaussian-mechanism
// analysis behind the radius formula requires epsilon < 1; larger values
// produce invalid certificates that can exceed the Renyi radius), delta on
// 100 log-spaced points in [1e-10, 0.5].
const PIXELDP_EPS_MAX_CENTIS: usize = 99;
const PIXELDP_DELTA_POINTS: usize = 100;
const PIXELDP_DELTA_MIN: f64 = 1e-10;
const PIXELDP_DELTA_MAX: f64 = 0.5;

fn pixeldp_delta_grid() -> impl Iterator<Item = f64> {
    let lo = PIXELDP_DELTA_MIN.log10();
    let hi = PIXELDP_DELTA_MAX.log10();
    (0..PIXELDP_DELTA_POINTS).map(move |j| {
        let t = j as f64 / (PIXELDP_DELTA_POINTS - 1) as f64;
        10f64.powf(lo + t * (hi - lo))
    })
}

/// Best differential-privacy baseline radius over the tuning grid; zero when
/// no grid point satisfies the robustness condition.
pub fn pixeldp_radius(top: &TopTwo, sigma: f64) -> Result<f64> {
    check_scale(sigma, "sigma")?;
    let mut best = 0.0f64;
    for i in 1..=PIXELDP_EPS_MAX_CENTIS {
        let epsilon = i as f64 * 0.01;
        for delta in pixeldp_delta_grid() {
            let params = PixelDpParams { epsilon, delta };
            if params.condition_holds(top) {
                best = best.max(params.radius(sigma));
            }
        }
    }
    Ok(best)
}
