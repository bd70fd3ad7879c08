//! Independent brute-force validators for the closed-form bounds: simplex
//! enumeration of the divergence minimization behind the lower bound, a fine
//! alpha-grid for the radius supremum, and direct quadrature of the Gaussian
//! Renyi integral. These deliberately avoid the optimized code paths they
//! check.

use rayon::prelude::*;

use crate::bounds::{lemma1_lower_bound, RenyiOrder, TopTwo};
use crate::error::{Error, Result};

/// A full probability vector over class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::invalid("distribution needs at least two classes"));
        }
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::invalid(format!(
                    "probabilities must be finite and nonnegative, got {p}"
                )));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "probabilities must sum to one, got {total}"
            )));
        }
        Ok(ClassDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Index of the largest probability (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// The two largest probabilities, in order.
    pub fn top_two(&self) -> TopTwo {
        let mut sorted = self.probs.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        TopTwo::new(sorted[0], sorted[1]).expect("sorted probabilities form a valid top-two")
    }
}

/// `D_alpha(Q || P) = (1/(alpha-1)) log sum_i p_i^(1-alpha) q_i^alpha`,
/// with the same small-probability clamp as the closed-form bound.
fn renyi_divergence_discrete(q: &[f64], p: &[f64], alpha: f64) -> f64 {
    let mut sum = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if qi == 0.0 {
            continue;
        }
        let pi = pi.max(1e-15);
        sum += ((1.0 - alpha) * pi.ln() + alpha * qi.ln()).exp();
    }
    sum.ln() / (alpha - 1.0)
}

/// Result of the constrained simplex enumeration.
#[derive(Debug, Clone)]
pub struct BruteForceMinimum {
    pub divergence: f64,
    pub minimizer: Vec<f64>,
}

/// Minimum of `D_alpha(Q || P)` over the simplex grid of step `grid_step`,
/// subject to the argmax of `Q` differing from the argmax of `P`. Ties in
/// the argmax of `Q` resolve toward violation (an epsilon nudge would break
/// them without moving the divergence).
pub fn lemma1_brute_force_detailed(
    p: &ClassDistribution,
    alpha: RenyiOrder,
    grid_step: f64,
) -> Result<BruteForceMinimum> {
    let k = p.probs.len();
    if k > 4 {
        return Err(Error::invalid(
            "simplex enumeration supports at most four classes",
        ));
    }
    if !grid_step.is_finite() || grid_step <= 0.0 || grid_step > 0.02 {
        return Err(Error::invalid(format!(
            "grid step must lie in (0, 0.02], got {grid_step}"
        )));
    }
    let m = (1.0 / grid_step).round() as u64;
    let alpha = alpha.alpha();
    let p_argmax = p.argmax();
    let probs = p.probs.clone();

    let best = (0..=m)
        .into_par_iter()
        .map(|m1| {
            let mut local: Option<BruteForceMinimum> = None;
            let mut cells = vec![m1];
            visit_compositions(&mut cells, m - m1, k - 1, &mut |cells: &[u64]| {
                let q: Vec<f64> = cells.iter().map(|&c| c as f64 / m as f64).collect();
                let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let violates = q
                    .iter()
                    .enumerate()
                    .any(|(j, &qj)| j != p_argmax && qj >= max);
                if !violates {
                    return;
                }
                let d = renyi_divergence_discrete(&q, &probs, alpha);
                let better = match &local {
                    None => true,
                    Some(cur) => {
                        d < cur.divergence
                            || (d == cur.divergence && q < cur.minimizer)
                    }
                };
                if better {
                    local = Some(BruteForceMinimum {
                        divergence: d,
                        minimizer: q,
                    });
                }
            });
            local
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (None, x) | (x, None) => x,
                (Some(x), Some(y)) => {
                    if y.divergence < x.divergence
                        || (y.divergence == x.divergence && y.minimizer < x.minimizer)
                    {
                        Some(y)
                    } else {
                        Some(x)
                    }
                }
            },
        );

    best.ok_or_else(|| Error::numerical("no feasible grid point found"))
}

/// Visit every way of distributing `remaining` grid cells over `slots`
/// trailing coordinates.
fn visit_compositions(
    prefix: &mut Vec<u64>,
    remaining: u64,
    slots: usize,
    visit: &mut impl FnMut(&[u64]),
) {
    if slots == 1 {
        prefix.push(remaining);
        visit(prefix);
        prefix.pop();
        return;
    }
    for v in 0..=remaining {
        prefix.push(v);
        visit_compositions(prefix, remaining - v, slots - 1, visit);
        prefix.pop();
    }
}

/// Convenience wrapper returning only the minimum divergence.
pub fn lemma1_brute_force(
    p: &ClassDistribution,
    alpha: RenyiOrder,
    grid_step: f64,
) -> Result<f64> {
    Ok(lemma1_brute_force_detailed(p, alpha, grid_step)?.divergence)
}

const FINE_GRID_POINTS: usize = 1_000_000;
const ALPHA_MIN_OFFSET: f64 = 1e-9;
const ALPHA_MAX: f64 = 500.0;

/// Radius supremum by exhaustive search: `points` log-spaced orders with
/// `alpha - 1` in `[1e-9, 499]`.
pub fn alpha_sup_grid(top: &TopTwo, sigma: f64, points: usize) -> Result<f64> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    if points < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    if top.p1() == top.p2() {
        return Ok(0.0);
    }
    if top.p1() >= 1.0 {
        return Err(Error::InfiniteRadius);
    }
    let lo = ALPHA_MIN_OFFSET.ln();
    let hi = (ALPHA_MAX - 1.0).ln();
    let step = (hi - lo) / (points - 1) as f64;
    let best = (0..points)
        .into_par_iter()
        .map(|i| {
            let alpha = 1.0 + (lo + i as f64 * step).exp();
            lemma1_lower_bound(top, RenyiOrder::new(alpha).expect("alpha > 1")) / alpha
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(sigma * (2.0 * best).sqrt())
}

/// One-million-point version used to pin radius fixtures.
pub fn alpha_sup_brute_force(top: &TopTwo, sigma: f64) -> Result<f64> {
    alpha_sup_grid(top, sigma, FINE_GRID_POINTS)
}

/// Renyi divergence between 1-D Gaussians `N(mean_shift, sigma^2)` and
/// `N(0, sigma^2)` by composite Simpson quadrature of
/// `(1/(alpha-1)) log \int q(x) (p(x)/q(x))^alpha dx`.
///
/// The integrand is a Gaussian bump centered at `alpha * mean_shift`; the
/// quadrature window covers 15 standard deviations each side and the result
/// is accepted only if halving the step leaves it unchanged to 1e-9.
pub fn renyi_integral_1d(mean_shift: f64, sigma: f64, alpha: RenyiOrder) -> Result<f64> {
    if !mean_shift.is_finite() {
        return Err(Error::invalid("mean shift must be finite"));
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    let coarse = renyi_simpson(mean_shift, sigma, alpha.alpha(), 10_000);
    let fine = renyi_simpson(mean_shift, sigma, alpha.alpha(), 20_000);
    if !fine.is_finite() || (fine - coarse).abs() > 1e-9 * fine.abs().max(1.0) {
        return Err(Error::numerical(format!(
            "Renyi quadrature did not converge: {coarse} vs {fine}"
        )));
    }
    Ok(fine)
}

fn renyi_simpson(d: f64, sigma: f64, alpha: f64, segments: usize) -> f64 {
    let center = alpha * d;
    let halfwidth = 15.0 * sigma;
    let a = center - halfwidth;
    let b = center + halfwidth;
    let n = 2 * segments;
    let h = (b - a) / n as f64;
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
    let log_pdf = |x: f64, mu: f64| log_norm - 0.5 * ((x - mu) / sigma).powi(2);
    let integrand = |x: f64| (alpha * log_pdf(x, d) + (1.0 - alpha) * log_pdf(x, 0.0)).exp();
    let mut sum = integrand(a) + integrand(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        sum += integrand(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let integral = sum * h / 3.0;
    integral.ln() / (alpha - 1.0)
}
