//! Cumulative prospect theory functionals on Monte Carlo samples.
//!
//! For a sample `x_1..x_n >= 0` with sorted utilities `v_(1) <= ... <= v_(n)`
//! the empirical Choquet integral is
//!
//! ```text
//! sum_i v_(i) * [ w((n - i + 1)/n) - w((n - i)/n) ]
//! ```
//!
//! which is exactly `int_0^inf w(P_n(u(X) >= y)) dy` for the empirical
//! measure `P_n`. Tied values need no special handling: their weights
//! telescope.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frictions::market_bound;
use crate::market::MarketSpec;
use crate::stats;

/// Utility on `[0, inf)` with `u(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Utility {
    /// `scale * x^exponent`
    Power { scale: f64, exponent: f64 },
    /// `(1 - exp(-rate x)) / rate`, concave and bounded.
    ExpSaturating { rate: f64 },
    /// `(exp(rate x) - 1) / rate`, convex; the loss side of an exponential utility.
    ExpExploding { rate: f64 },
}

impl Utility {
    pub fn identity() -> Self {
        Utility::Power {
            scale: 1.0,
            exponent: 1.0,
        }
    }

    pub fn power(exponent: f64) -> Self {
        Utility::Power { scale: 1.0, exponent }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Utility::Power { scale, exponent } => {
                if x == 0.0 {
                    0.0
                } else {
                    scale * x.powf(exponent)
                }
            }
            Utility::ExpSaturating { rate } => -(-rate * x).exp_m1() / rate,
            Utility::ExpExploding { rate } => (rate * x).exp_m1() / rate,
        }
    }

    pub fn is_concave(&self) -> bool {
        match *self {
            Utility::Power { exponent, .. } => exponent <= 1.0,
            Utility::ExpSaturating { .. } => true,
            Utility::ExpExploding { .. } => false,
        }
    }

    pub fn is_convex(&self) -> bool {
        match *self {
            Utility::Power { exponent, .. } => exponent >= 1.0,
            Utility::ExpSaturating { .. } => false,
            Utility::ExpExploding { .. } => true,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let ok = match *self {
            Utility::Power { scale, exponent } => {
                scale > 0.0 && exponent > 0.0 && scale.is_finite() && exponent.is_finite()
            }
            Utility::ExpSaturating { rate } | Utility::ExpExploding { rate } => rate > 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(field, "utility parameters must be positive and finite"))
        }
    }
}

/// Probability distortion with `w(0) = 0`, `w(1) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Distortion {
    Identity,
    /// `p^delta`
    Power {
        delta: f64,
    },
    /// `p^g / (p^g + (1-p)^g)^(1/g)`
    InverseS {
        g: f64,
    },
}

impl Distortion {
    pub fn eval(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            Distortion::Identity => p,
            Distortion::Power { delta } => p.powf(delta),
            Distortion::InverseS { g } => {
                if p == 0.0 {
                    return 0.0;
                }
                let a = p.powf(g);
                a / (a + (1.0 - p).powf(g)).powf(1.0 / g)
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        match *self {
            Distortion::Identity => true,
            Distortion::Power { delta } => delta == 1.0,
            Distortion::InverseS { g } => g == 1.0,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let ok = match *self {
            Distortion::Identity => true,
            Distortion::Power { delta } => delta > 0.0 && delta.is_finite(),
            Distortion::InverseS { g } => g > 0.0 && g <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(field, "distortion parameter out of range"))
        }
    }
}

/// Declared constants of the loss-side growth bounds
/// `u_-(x) >= c1 x^delta1 - c2` and `w_-(p) >= c3 p^delta2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBounds {
    pub c1: f64,
    pub c2: f64,
    pub delta1: f64,
    pub c3: f64,
    pub delta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptSpec {
    pub u_plus: Utility,
    pub u_minus: Utility,
    pub w_plus: Distortion,
    pub w_minus: Distortion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<LossBounds>,
}

impl CptSpec {
    /// No distortion, linear utility: `V(X) = E X`.
    pub fn expectation() -> Self {
        CptSpec {
            u_plus: Utility::identity(),
            u_minus: Utility::identity(),
            w_plus: Distortion::Identity,
            w_minus: Distortion::Identity,
            bounds: None,
        }
    }

    /// Power utilities with exponent 0.88 and inverse-S weights 0.61 / 0.69.
    pub fn tversky_kahneman() -> Self {
        CptSpec {
            u_plus: Utility::power(0.88),
            u_minus: Utility::power(0.88),
            w_plus: Distortion::InverseS { g: 0.61 },
            w_minus: Distortion::InverseS { g: 0.69 },
            bounds: None,
        }
    }

    /// Expected utility of the concave function `u(x) = (1 - e^{-a x})/a`.
    pub fn exponential_expected_utility(a: f64) -> Self {
        CptSpec {
            u_plus: Utility::ExpSaturating { rate: a },
            u_minus: Utility::ExpExploding { rate: a },
            w_plus: Distortion::Identity,
            w_minus: Distortion::Identity,
            bounds: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.u_plus.validate("cpt.u_plus")?;
        self.u_minus.validate("cpt.u_minus")?;
        self.w_plus.validate("cpt.w_plus")?;
        self.w_minus.validate("cpt.w_minus")?;
        Ok(())
    }

    /// Without distortions and with `u` concave on the whole line, the
    /// objective is a concave expected utility.
    pub fn is_concave_expected_utility(&self) -> bool {
        self.w_plus.is_identity() && self.w_minus.is_identity() && self.u_plus.is_concave() && self.u_minus.is_convex()
    }
}

fn check_sample(sample: &[f64]) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::Empty("Choquet sample"));
    }
    if let Some((index, &value)) = sample.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::BadSample { index, value });
    }
    Ok(())
}

/// Empirical Choquet integral `int_0^inf w(P(u(X) >= y)) dy` of a
/// non-negative sample.
pub fn choquet_positive(sample: &[f64], u: &Utility, w: &Distortion) -> Result<f64> {
    check_sample(sample)?;
    let mut v: Vec<f64> = sample.iter().map(|&x| u.eval(x)).collect();
    v.sort_by(f64::total_cmp);
    Ok(choquet_sorted(&v, w))
}

/// Sorted-sum formula on utilities already sorted ascending, summed in
/// layer form `sum_i (v_(i) - v_(i-1)) w((n - i + 1)/n)` so that constant
/// samples come out exact.
fn choquet_sorted(v: &[f64], w: &Distortion) -> f64 {
    let n = v.len();
    let nf = n as f64;
    let mut prev = 0.0;
    let mut total = 0.0;
    for (i, &x) in v.iter().enumerate() {
        // skips tied layers, including tied infinities
        if x != prev {
            let weight = w.eval((n - i) as f64 / nf);
            if weight != 0.0 {
                total += (x - prev) * weight;
            }
        }
        prev = x;
    }
    total
}

/// `V(X) = V+(X+) - V-(X-)` with both components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptValue {
    pub value: f64,
    pub gains: f64,
    pub losses: f64,
}

/// Prospect value of a sample of outcomes `X - W`.
pub fn cpt_value(sample: &[f64], spec: &CptSpec) -> Result<CptValue> {
    if sample.is_empty() {
        return Err(Error::Empty("CPT sample"));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("CPT sample"));
    }
    let pos: Vec<f64> = sample.iter().map(|&x| x.max(0.0)).collect();
    let neg: Vec<f64> = sample.iter().map(|&x| (-x).max(0.0)).collect();
    let gains = choquet_extended(&pos, &spec.u_plus, &spec.w_plus);
    let losses = choquet_extended(&neg, &spec.u_minus, &spec.w_minus);
    Ok(CptValue {
        value: gains - losses,
        gains,
        losses,
    })
}

/// Choquet integral allowing `+inf` entries (from `-inf` wealth).
fn choquet_extended(sample: &[f64], u: &Utility, w: &Distortion) -> f64 {
    let mut v: Vec<f64> = sample.iter().map(|&x| u.eval(x)).collect();
    v.sort_by(f64::total_cmp);
    choquet_sorted(&v, w)
}

/// Bootstrap standard error of [`cpt_value`] with `n_boot` resamples.
///
/// Replicate `b` draws from its own ChaCha stream, so the result does not
/// depend on thread scheduling.
pub fn bootstrap_standard_error(sample: &[f64], spec: &CptSpec, n_boot: usize, seed: u64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Empty("bootstrap sample"));
    }
    if n_boot < 2 {
        return Ok(0.0);
    }
    let n = sample.len();
    let reps: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let resample: Vec<f64> = (0..n).map(|_| sample[rng.random_range(0..n)]).collect();
            cpt_value(&resample, spec).map(|v| v.value)
        })
        .collect::<Result<_>>()?;
    let (_, se) = stats::mean_and_se(&reps);
    // sd of the replicates, not the se of their mean
    Ok(se * (n_boot as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Warn => "WARN",
            Verdict::Fail => "FAIL",
        })
    }
}

/// Dense-grid check of a lower bound `f(x) >= g(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCheck {
    pub holds: bool,
    /// Smallest `f - g` seen on the grid.
    pub min_slack: f64,
    pub at: f64,
}

/// Monte Carlo estimate with a doubling-prefix stability flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizedEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub warn: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    /// `Some(delta1 > delta2)` when bounds were declared.
    pub ordering: Option<bool>,
    pub utility_bound: Option<GridCheck>,
    pub distortion_bound: Option<GridCheck>,
    /// Undistorted and concave: existence follows from concavity instead.
    pub concave_route: bool,
    /// `V+([B - W]+)`
    pub bound_gain_value: StabilizedEstimate,
    /// `E W+`
    pub benchmark_positive_mean: StabilizedEstimate,
    /// `E |u(B - W)|`, only meaningful on the concave route.
    pub concave_integrability: StabilizedEstimate,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

/// `x = 0` followed by `count` log-spaced points on `[1e-6, 1e6]`.
fn utility_grid(count: usize) -> impl Iterator<Item = f64> {
    std::iter::once(0.0).chain((0..count).map(move |i| 10f64.powf(-6.0 + 12.0 * i as f64 / (count - 1) as f64)))
}

/// Uniform points on `[0, 1]` plus a log-spaced tail towards 0.
fn probability_grid(count: usize) -> impl Iterator<Item = f64> {
    (0..=count)
        .map(move |i| i as f64 / count as f64)
        .chain((0..200).map(|i| 10f64.powf(-12.0 + 8.0 * i as f64 / 199.0)))
}

pub fn check_utility_bound(u: &Utility, c1: f64, c2: f64, delta1: f64) -> GridCheck {
    let mut worst = GridCheck {
        holds: true,
        min_slack: f64::INFINITY,
        at: 0.0,
    };
    for x in utility_grid(4001) {
        let lhs = u.eval(x);
        let rhs = c1 * x.powf(delta1) - c2;
        let slack = if lhs == f64::INFINITY { f64::INFINITY } else { lhs - rhs };
        if slack < worst.min_slack {
            worst.min_slack = slack;
            worst.at = x;
        }
        if slack < -1e-12 * (1.0 + rhs.abs()) {
            worst.holds = false;
        }
    }
    worst
}

pub fn check_distortion_bound(w: &Distortion, c3: f64, delta2: f64) -> GridCheck {
    let mut worst = GridCheck {
        holds: true,
        min_slack: f64::INFINITY,
        at: 0.0,
    };
    for p in probability_grid(10_000) {
        let lhs = w.eval(p);
        let rhs = c3 * p.powf(delta2);
        let slack = lhs - rhs;
        if slack < worst.min_slack {
            worst.min_slack = slack;
            worst.at = p;
        }
        if slack < -1e-12 * (1.0 + rhs) {
            worst.holds = false;
        }
    }
    worst
}

fn stabilized_mean(values: &[f64]) -> StabilizedEstimate {
    let (estimate, std_error) = stats::mean_and_se(values);
    StabilizedEstimate {
        estimate,
        std_error,
        warn: stats::stabilization(values).warn,
    }
}

/// Checks the growth conditions on `u_-`, `w_-` and estimates the
/// integrability quantities on `n_paths` scenarios of `market`.
pub fn wellposedness_check(
    spec: &CptSpec,
    market: &MarketSpec,
    n_paths: usize,
    seed: u64,
) -> Result<CertificateReport> {
    spec.validate()?;
    if n_paths == 0 {
        return Err(Error::Empty("well-posedness paths"));
    }
    let mut notes = Vec::new();

    let (ordering, utility_bound, distortion_bound) = match spec.bounds {
        Some(b) => {
            let ordering = b.delta2 > 0.0 && b.delta1 > b.delta2;
            if !ordering {
                notes.push(format!(
                    "loss exponents out of order: delta1 = {} must exceed delta2 = {} > 0",
                    b.delta1, b.delta2
                ));
            }
            if b.c1 <= 0.0 || b.c3 <= 0.0 || b.c2 < 0.0 {
                notes.push("declared constants need c1, c3 > 0 and c2 >= 0".into());
            }
            let ub = check_utility_bound(&spec.u_minus, b.c1, b.c2, b.delta1);
            if !ub.holds {
                notes.push(format!("u_minus falls below its declared minorant at x = {:e}", ub.at));
            }
            let wb = check_distortion_bound(&spec.w_minus, b.c3, b.delta2);
            if !wb.holds {
                notes.push(format!("w_minus falls below its declared minorant at p = {:e}", wb.at));
            }
            (
                Some(ordering && b.c1 > 0.0 && b.c3 > 0.0 && b.c2 >= 0.0),
                Some(ub),
                Some(wb),
            )
        }
        None => (None, None, None),
    };
    let concave_route = spec.is_concave_expected_utility();
    let growth_route =
        ordering == Some(true) && utility_bound.is_some_and(|c| c.holds) && distortion_bound.is_some_and(|c| c.holds);
    if !growth_route && !concave_route {
        notes.push("neither the loss-growth bounds nor the concave expected-utility case certify the problem".into());
    }

    let outcomes: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let (price, w) = market.scenario(seed.wrapping_add(i as u64))?;
            Ok((market_bound(&price, &market.friction)?, w))
        })
        .collect::<Result<_>>()?;

    let gain_utils: Vec<f64> = outcomes
        .iter()
        .map(|&(b, w)| spec.u_plus.eval((b - w).max(0.0)))
        .collect();
    let gains: Vec<f64> = outcomes.iter().map(|&(b, w)| (b - w).max(0.0)).collect();
    let (_, gain_se) = stats::mean_and_se(&gain_utils);
    let bound_gain_value = StabilizedEstimate {
        estimate: choquet_positive(&gains, &spec.u_plus, &spec.w_plus)?,
        std_error: gain_se,
        warn: stats::stabilization(&gain_utils).warn,
    };
    let w_pos: Vec<f64> = outcomes.iter().map(|&(_, w)| w.max(0.0)).collect();
    let benchmark_positive_mean = stabilized_mean(&w_pos);
    let abs_u: Vec<f64> = outcomes
        .iter()
        .map(|&(b, w)| {
            let x = b - w;
            if x >= 0.0 {
                spec.u_plus.eval(x)
            } else {
                spec.u_minus.eval(-x)
            }
        })
        .collect();
    let concave_integrability = stabilized_mean(&abs_u);

    let mut warn = bound_gain_value.warn || benchmark_positive_mean.warn;
    if bound_gain_value.warn {
        notes.push("V+([B-W]+) estimate does not stabilize across doubling path counts".into());
    }
    if benchmark_positive_mean.warn {
        notes.push("E W+ estimate does not stabilize across doubling path counts".into());
    }
    if concave_route && !growth_route && concave_integrability.warn {
        warn = true;
        notes.push("E|u(B-W)| estimate does not stabilize across doubling path counts".into());
    }

    let verdict = if !growth_route && !concave_route {
        Verdict::Fail
    } else if warn {
        Verdict::Warn
    } else {
        Verdict::Pass
    };
    Ok(CertificateReport {
        ordering,
        utility_bound,
        distortion_bound,
        concave_route,
        bound_gain_value,
        benchmark_positive_mean,
        concave_integrability,
        verdict,
        notes,
    })
}
