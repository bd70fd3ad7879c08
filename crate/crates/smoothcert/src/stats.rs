//! Exact binomial confidence machinery: the regularized incomplete beta
//! function, its inverse, and one-sided Clopper-Pearson endpoints with
//! Bonferroni correction across the two estimated probabilities.

use crate::error::{Error, Result};

/// Class-label tallies from `n` Monte Carlo draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    counts: Vec<u64>,
}

impl ClassCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("class counts must be nonempty"));
        }
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::invalid("class counts must include at least one draw"));
        }
        Ok(ClassCounts { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    /// Total number of draws.
    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the most frequent class; ties break toward the lowest index.
    pub fn top_class(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    /// Indices of the most frequent class and the runner-up, both with
    /// lowest-index tie-breaking. Requires at least two classes.
    pub fn top_two_classes(&self) -> Result<(usize, usize)> {
        if self.counts.len() < 2 {
            return Err(Error::invalid(
                "top-two selection requires at least two classes",
            ));
        }
        let c1 = self.top_class();
        let mut c2 = usize::MAX;
        for (i, &c) in self.counts.iter().enumerate() {
            if i == c1 {
                continue;
            }
            if c2 == usize::MAX || c > self.counts[c2] {
                c2 = i;
            }
        }
        Ok((c1, c2))
    }
}

/// One-sided interval endpoints for the top-two probabilities, each computed
/// at level `1 - (1 - overall_confidence) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalPair {
    pub p1_lower: f64,
    pub p2_upper: f64,
    pub overall_confidence: f64,
}

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)] // canonical published table
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function (Lanczos approximation, g = 7).
fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const BETACF_MAX_ITER: usize = 300;

/// Continued fraction for the incomplete beta (modified Lentz's method).
fn betainc_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let tiny = 1e-300;
    let eps = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=BETACF_MAX_ITER {
        let m_f = m as f64;
        let m2 = 2.0 * m_f;

        let aa = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;

        if (delta - 1.0).abs() < eps {
            return Ok(h);
        }
    }
    Err(Error::numerical(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !a.is_finite() || a <= 0.0 || !b.is_finite() || b <= 0.0 {
        return Err(Error::invalid(format!(
            "beta parameters must be finite and positive, got a = {a}, b = {b}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("x must lie in [0, 1], got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_prefix = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    // symmetry keeps the continued fraction in its fast-converging regime
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_prefix.exp() * betainc_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - ln_prefix.exp() * betainc_cf(b, a, 1.0 - x)? / b)
    }
}

const QUANTILE_MAX_ITER: usize = 200;

/// Inverse of the regularized incomplete beta: the `x` with `I_x(a, b) = q`,
/// solved by bisection to absolute tolerance 1e-10 (and beyond).
pub fn beta_quantile(q: f64, a: f64, b: f64) -> Result<f64> {
    if !q.is_finite() || q <= 0.0 || q >= 1.0 {
        return Err(Error::invalid(format!(
            "quantile level must lie in (0, 1), got {q}"
        )));
    }
    if !a.is_finite() || a <= 0.0 || !b.is_finite() || b <= 0.0 {
        return Err(Error::invalid(format!(
            "beta parameters must be finite and positive, got a = {a}, b = {b}"
        )));
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..QUANTILE_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if regularized_incomplete_beta(a, b, mid)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::numerical(format!(
        "beta quantile bisection did not converge (q={q}, a={a}, b={b})"
    )))
}

fn check_level(level: f64) -> Result<()> {
    if !level.is_finite() || level <= 0.0 || level >= 1.0 {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    Ok(())
}

/// One-sided Clopper-Pearson lower bound at confidence `level` for
/// `successes` out of `n` draws. Zero when `successes = 0`.
pub fn clopper_pearson_lower(successes: u64, n: u64, level: f64) -> Result<f64> {
    check_level(level)?;
    if n == 0 || successes > n {
        return Err(Error::invalid(format!(
            "need 0 <= successes <= n with n >= 1, got {successes}/{n}"
        )));
    }
    if successes == 0 {
        return Ok(0.0);
    }
    if successes == n {
        // closed form: (1 - level)^(1/n)
        return Ok(((1.0 - level).ln() / n as f64).exp());
    }
    beta_quantile(1.0 - level, successes as f64, (n - successes + 1) as f64)
}

/// One-sided Clopper-Pearson upper bound at confidence `level`. One when
/// `successes = n`.
pub fn clopper_pearson_upper(successes: u64, n: u64, level: f64) -> Result<f64> {
    check_level(level)?;
    if n == 0 || successes > n {
        return Err(Error::invalid(format!(
            "need 0 <= successes <= n with n >= 1, got {successes}/{n}"
        )));
    }
    if successes == n {
        return Ok(1.0);
    }
    if successes == 0 {
        return Ok(1.0 - ((1.0 - level).ln() / n as f64).exp());
    }
    beta_quantile(level, (successes + 1) as f64, (n - successes) as f64)
}

/// One-sided intervals for the top class (lower endpoint) and runner-up
/// (upper endpoint), Bonferroni-corrected: each side runs at level
/// `1 - (1 - overall_confidence) / 2`.
pub fn clopper_pearson_pair(counts: &ClassCounts, overall_confidence: f64) -> Result<IntervalPair> {
    check_level(overall_confidence)?;
    let (c1, c2) = counts.top_two_classes()?;
    let n = counts.n();
    let level = 1.0 - (1.0 - overall_confidence) / 2.0;
    Ok(IntervalPair {
        p1_lower: clopper_pearson_lower(counts.counts()[c1], n, level)?,
        p2_upper: clopper_pearson_upper(counts.counts()[c2], n, level)?,
        overall_confidence,
    })
}
