//! Instantaneous price impact `G_t(x) = H(S_t) |x|^alpha`, its convex
//! conjugate, the pathwise market bound and two moment diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::market::{MarketSpec, PriceMapSpec, PricePath};
use crate::stats::{self, Stabilization};

/// Price-dependent multiplier `H(s)` of the impact cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrictionMultiplier {
    /// `H(s) = lambda`
    Constant { lambda: f64 },
    /// `H(s) = lambda * s`
    LinearInPrice { lambda: f64 },
    /// `H(s) = a + b * s` with `a > 0`, `b >= 0`
    AffinePositive { a: f64, b: f64 },
}

impl FrictionMultiplier {
    pub fn at(&self, s: f64) -> f64 {
        match *self {
            FrictionMultiplier::Constant { lambda } => lambda,
            FrictionMultiplier::LinearInPrice { lambda } => lambda * s,
            FrictionMultiplier::AffinePositive { a, b } => a + b * s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionSpec {
    pub alpha: f64,
    pub h: FrictionMultiplier,
    /// Diagnostic exponent in `(1, alpha)`; defaults to `(1 + alpha) / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl FrictionSpec {
    pub fn new(alpha: f64, h: FrictionMultiplier) -> Self {
        FrictionSpec { alpha, h, beta: None }
    }

    pub fn constant(alpha: f64, lambda: f64) -> Self {
        Self::new(alpha, FrictionMultiplier::Constant { lambda })
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or((1.0 + self.alpha) / 2.0)
    }

    /// Hölder conjugate of `beta`.
    pub fn gamma(&self) -> f64 {
        let b = self.beta();
        b / (b - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 1.0 {
            return Err(Error::invalid("friction.alpha", "alpha must exceed 1"));
        }
        let beta = self.beta();
        if !beta.is_finite() || beta <= 1.0 || beta >= self.alpha {
            return Err(Error::invalid("friction.beta", "beta must satisfy 1 < beta < alpha"));
        }
        match self.h {
            FrictionMultiplier::Constant { lambda } | FrictionMultiplier::LinearInPrice { lambda } => {
                if !lambda.is_finite() || lambda <= 0.0 {
                    return Err(Error::invalid("friction.h.lambda", "lambda must be > 0"));
                }
            }
            FrictionMultiplier::AffinePositive { a, b } => {
                if !a.is_finite() || a <= 0.0 {
                    return Err(Error::invalid("friction.h.a", "a must be > 0"));
                }
                if !b.is_finite() || b < 0.0 {
                    return Err(Error::invalid("friction.h.b", "b must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Checks that `H > 0` on every price the map can produce.
    pub fn validate_against(&self, map: &PriceMapSpec) -> Result<()> {
        let ok = match self.h {
            FrictionMultiplier::Constant { .. } => true,
            FrictionMultiplier::LinearInPrice { .. } => map.strictly_positive(),
            FrictionMultiplier::AffinePositive { b, .. } => b == 0.0 || map.non_negative(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "friction.h",
                "H must be strictly positive on the range of the price map",
            ))
        }
    }

    fn positive_h(&self, s: f64) -> Result<f64> {
        let h = self.h.at(s);
        if h > 0.0 && h.is_finite() {
            Ok(h)
        } else {
            Err(Error::NonPositiveFriction { price: s, value: h })
        }
    }
}

/// Cost per unit time `H(s) |x|^alpha` of trading at rate `x`.
pub fn friction_cost(s: f64, x: f64, spec: &FrictionSpec) -> Result<f64> {
    ensure_finite(s, "price")?;
    ensure_finite(x, "trading rate")?;
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(spec.h.at(s) * x.abs().powf(spec.alpha))
}

/// `sup_x (x y - H(s)|x|^alpha)`, in closed form.
pub fn conjugate_cost(s: f64, y: f64, spec: &FrictionSpec) -> Result<f64> {
    ensure_finite(y, "conjugate argument")?;
    let h = spec.positive_h(ensure_finite(s, "price")?)?;
    if y == 0.0 {
        return Ok(0.0);
    }
    let a = spec.alpha;
    let e = 1.0 / (1.0 - a);
    Ok((a - 1.0) / a * a.powf(e) * h.powf(e) * y.abs().powf(a / (a - 1.0)))
}

/// `B = sum_k G*(s_k, -s_k) dt`, the pathwise ceiling on terminal cash.
pub fn market_bound(price: &PricePath, spec: &FrictionSpec) -> Result<f64> {
    let n = price.grid.n_steps();
    let dt = price.grid.dt();
    price.s[..n]
        .iter()
        .try_fold(0.0, |acc, &s| Ok(acc + conjugate_cost(s, -s, spec)? * dt))
}

/// Monte Carlo estimate of a pathwise time integral, with a doubling check.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub stabilization: Stabilization,
}

impl MomentReport {
    pub fn warn(&self) -> bool {
        self.stabilization.warn
    }
}

/// Integrand of the integrability condition on `H` at price `s`.
pub fn integrability_integrand(s: f64, spec: &FrictionSpec) -> Result<f64> {
    let (a, b) = (spec.alpha, spec.beta());
    let h = spec.positive_h(s)?;
    Ok(h.powf(b / (b - a)) * (1.0 + s.abs()).powf(b * a / (a - b)))
}

/// Estimates `E int_0^1 H^{b/(b-a)}(S_t) (1+|S_t|)^{b a/(a-b)} dt` over
/// `n_paths` scenarios with seeds `seed, seed + 1, ...`.
pub fn integrability_diagnostic(market: &MarketSpec, n_paths: usize, seed: u64) -> Result<MomentReport> {
    if n_paths == 0 {
        return Err(Error::Empty("integrability diagnostic paths"));
    }
    let dt = market.grid.dt();
    let n = market.grid.n_steps();
    let per_path: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let (price, _) = market.scenario(seed.wrapping_add(i as u64))?;
            price.s[..n].iter().try_fold(0.0, |acc, &s| {
                Ok(acc + integrability_integrand(s, &market.friction)? * dt)
            })
        })
        .collect::<Result<_>>()?;
    let (estimate, std_error) = stats::mean_and_se(&per_path);
    Ok(MomentReport {
        estimate,
        std_error,
        n_paths,
        stabilization: stats::stabilization(&per_path),
    })
}

/// `E int_0^1 |phi_t|^beta (1 + |S_t|)^beta dt`, averaged over paths.
///
/// `rates[i]` and `prices[i]` belong to the same scenario.
pub fn strategy_moment_diagnostic(rates: &[Vec<f64>], prices: &[PricePath], spec: &FrictionSpec) -> Result<f64> {
    if rates.len() != prices.len() {
        return Err(Error::invalid("rates", "one rate vector per price path required"));
    }
    if rates.is_empty() {
        return Ok(0.0);
    }
    let beta = spec.beta();
    let mut total = 0.0;
    for (r, p) in rates.iter().zip(prices) {
        let n = p.grid.n_steps();
        if r.len() != n {
            return Err(Error::GridMismatch {
                expected: n,
                actual: r.len(),
            });
        }
        let path: f64 = r
            .iter()
            .zip(&p.s)
            .map(|(&phi, &s)| (phi.abs() * (1.0 + s.abs())).powf(beta))
            .sum();
        total += path * p.grid.dt();
    }
    Ok(total / rates.len() as f64)
}
