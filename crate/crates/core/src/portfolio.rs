//! Trading-rate strategies and pathwise cash/inventory dynamics.
//!
//! A strategy only ever sees the grid time, the current price, the current
//! inventory and the exogenous uniform draw `U`. Nothing later than `t_k`
//! reaches the rate applied on `[t_k, t_{k+1})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frictions::{friction_cost, market_bound, FrictionSpec};
use crate::market::{PricePath, TimeGrid};

/// Default clamp on emitted trading rates.
pub const DEFAULT_RATE_BOUND: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// One rate per grid cell.
    OpenLoop { rates: Vec<f64> },
    /// `a0 + a1 * s_k + a2 * inventory_k + a3 * t_k`
    Feedback { coefficients: [f64; 4] },
    /// Component `i` is followed when `U` falls in the `i`-th weight interval.
    RandomizedMixture { components: Vec<Policy>, weights: Vec<f64> },
}

impl Policy {
    pub fn zero(n_steps: usize) -> Self {
        Policy::OpenLoop {
            rates: vec![0.0; n_steps],
        }
    }

    pub fn validate(&self, n_steps: usize) -> Result<()> {
        match self {
            Policy::OpenLoop { rates } => {
                if rates.len() != n_steps {
                    return Err(Error::GridMismatch {
                        expected: n_steps,
                        actual: rates.len(),
                    });
                }
                if rates.iter().any(|r| !r.is_finite()) {
                    return Err(Error::NonFinite("open-loop rates"));
                }
            }
            Policy::Feedback { coefficients } => {
                if coefficients.iter().any(|a| !a.is_finite()) {
                    return Err(Error::NonFinite("feedback coefficients"));
                }
            }
            Policy::RandomizedMixture { components, weights } => {
                if components.is_empty() || components.len() != weights.len() {
                    return Err(Error::invalid(
                        "mixture",
                        "needs one weight per component and at least one component",
                    ));
                }
                if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                    return Err(Error::invalid("mixture.weights", "weights must be >= 0"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("mixture.weights", "weights must sum to 1"));
                }
                for c in components {
                    c.validate(n_steps)?;
                }
            }
        }
        Ok(())
    }

    /// Follows the mixture tree down to a pure policy by inverting the
    /// weight CDF at `u`; `u` is rescaled inside the chosen interval.
    pub fn resolve(&self, u: f64) -> (&Policy, f64) {
        match self {
            Policy::RandomizedMixture { components, weights } => {
                let mut lo = 0.0;
                for (i, (c, &w)) in components.iter().zip(weights).enumerate() {
                    let hi = lo + w;
                    let last = i + 1 == components.len();
                    if (u < hi && w > 0.0) || last {
                        let inner = if w > 0.0 { ((u - lo) / w).clamp(0.0, 1.0) } else { u };
                        return c.resolve(inner);
                    }
                    lo = hi;
                }
                unreachable!("mixture validated non-empty")
            }
            pure => (pure, u),
        }
    }

    /// Rate on cell `k` for a pure policy; mixtures are resolved first.
    fn raw_rate(&self, grid: TimeGrid, k: usize, s_k: f64, inv_k: f64, u: f64) -> f64 {
        match self.resolve(u).0 {
            Policy::OpenLoop { rates } => rates[k],
            Policy::Feedback { coefficients: a } => a[0] + a[1] * s_k + a[2] * inv_k + a[3] * grid.t(k),
            Policy::RandomizedMixture { .. } => unreachable!("resolve returns a pure policy"),
        }
    }

    pub fn is_open_loop(&self) -> bool {
        matches!(self, Policy::OpenLoop { .. })
    }

    fn for_each_open_loop(&mut self, f: &mut impl FnMut(&mut Vec<f64>)) {
        match self {
            Policy::OpenLoop { rates } => f(rates),
            Policy::Feedback { .. } => {}
            Policy::RandomizedMixture { components, .. } => {
                for c in components {
                    c.for_each_open_loop(f);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub policy: Policy,
    #[serde(default = "default_rate_bound")]
    pub rate_bound: f64,
}

fn default_rate_bound() -> f64 {
    DEFAULT_RATE_BOUND
}

impl StrategyParams {
    pub fn new(policy: Policy) -> Self {
        StrategyParams {
            policy,
            rate_bound: DEFAULT_RATE_BOUND,
        }
    }

    pub fn with_rate_bound(mut self, m: f64) -> Self {
        self.rate_bound = m;
        self
    }

    pub fn validate(&self, n_steps: usize) -> Result<()> {
        if !(self.rate_bound > 0.0) || !self.rate_bound.is_finite() {
            return Err(Error::invalid("rate_bound", "must be a positive finite number"));
        }
        self.policy.validate(n_steps)
    }

    /// Projects every open-loop leaf onto the liquidating, clamped set:
    /// clamp to `[-M, M]`, remove the time average, then shrink uniformly
    /// if the projection pushed an entry past `M`.
    pub fn admissible(&self, grid: TimeGrid) -> StrategyParams {
        let m = self.rate_bound;
        let mut out = self.clone();
        out.policy
            .for_each_open_loop(&mut |rates| project_open_loop(rates, grid, m));
        out
    }
}

/// Clamp, liquidate and (if needed) shrink one open-loop rate vector in place.
pub fn project_open_loop(rates: &mut [f64], grid: TimeGrid, rate_bound: f64) {
    for r in rates.iter_mut() {
        *r = r.clamp(-rate_bound, rate_bound);
    }
    let projected = enforce_liquidation(rates, grid);
    rates.copy_from_slice(&projected);
    let peak = rates.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    if peak > rate_bound {
        let scale = rate_bound / peak;
        for r in rates.iter_mut() {
            *r *= scale;
        }
    }
}

/// Rate emitted on cell `k`, clamped to `[-M, M]`.
pub fn evaluate_rate(params: &StrategyParams, grid: TimeGrid, k: usize, s_k: f64, inv_k: f64, u: f64) -> f64 {
    let m = params.rate_bound;
    params.policy.raw_rate(grid, k, s_k, inv_k, u).clamp(-m, m)
}

/// Number of terminal cells taken over by the forced unwind.
pub fn unwind_cells(n_steps: usize) -> usize {
    n_steps.div_ceil(8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WealthOutcome {
    /// `X_1`, may be `-inf`.
    pub terminal_money: f64,
    pub terminal_inventory: f64,
    /// Market bound `B` on the same path (excludes initial cash).
    pub bound: f64,
    pub max_abs_rate: f64,
    pub total_friction: f64,
    /// Rate actually applied on each cell.
    pub rates: Vec<f64>,
}

impl WealthOutcome {
    /// `z0 + B - X_1`; never meaningfully negative.
    pub fn bound_slack(&self, z0: f64) -> f64 {
        z0 + self.bound - self.terminal_money
    }
}

/// Runs the money/inventory recursion on one price path.
///
/// ```text
/// inventory[k+1] = inventory[k] + r_k dt
/// money[k+1]     = money[k] - r_k s_k dt - H(s_k)|r_k|^alpha dt
/// ```
///
/// Pure open-loop policies are simulated as given (project them with
/// [`StrategyParams::admissible`] first). State-dependent policies hand the
/// last `ceil(n/8)` cells to a constant-rate unwind of the inventory held at
/// the start of that window.
pub fn simulate_wealth(
    params: &StrategyParams,
    price: &PricePath,
    spec: &FrictionSpec,
    u: f64,
    z0: f64,
    z1: f64,
) -> Result<WealthOutcome> {
    let bound = market_bound(price, spec)?;
    simulate_with_bound(params, price, spec, u, z0, z1, bound)
}

/// [`simulate_wealth`] with a precomputed market bound for `price`.
pub(crate) fn simulate_with_bound(
    params: &StrategyParams,
    price: &PricePath,
    spec: &FrictionSpec,
    u: f64,
    z0: f64,
    z1: f64,
    bound: f64,
) -> Result<WealthOutcome> {
    let grid = price.grid;
    let n = grid.n_steps();
    if let Policy::OpenLoop { rates } = &params.policy {
        if rates.len() != n {
            return Err(Error::GridMismatch {
                expected: n,
                actual: rates.len(),
            });
        }
    }
    let dt = grid.dt();
    let (leaf, u_leaf) = params.policy.resolve(u);
    let unwind_from = if leaf.is_open_loop() { n } else { n - unwind_cells(n) };
    let m = params.rate_bound;

    let mut inventory = z1;
    let mut money = z0;
    let mut rates = Vec::with_capacity(n);
    let mut unwind_rate = 0.0;
    let mut friction_paid = 0.0;
    for k in 0..n {
        let s = price.s[k];
        if k == unwind_from {
            unwind_rate = -inventory / ((n - unwind_from) as f64 * dt);
        }
        let r = if k >= unwind_from {
            unwind_rate
        } else {
            leaf.raw_rate(grid, k, s, inventory, u_leaf).clamp(-m, m)
        };
        let cost = friction_cost(s, r, spec)? * dt;
        money -= r * s * dt + cost;
        inventory += r * dt;
        friction_paid += cost;
        rates.push(r);
    }
    Ok(WealthOutcome {
        terminal_money: money,
        terminal_inventory: inventory,
        bound,
        max_abs_rate: rates.iter().fold(0.0, |a: f64, r| a.max(r.abs())),
        total_friction: friction_paid,
        rates,
    })
}

/// Removes the time average so that `sum_k r_k dt = 0`.
pub fn enforce_liquidation(rates: &[f64], grid: TimeGrid) -> Vec<f64> {
    debug_assert_eq!(rates.len(), grid.n_steps());
    if rates.is_empty() {
        return Vec::new();
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    rates.iter().map(|r| r - mean).collect()
}

/// Cell-wise arithmetic mean of a sequence of open-loop rate vectors.
pub fn cesaro_average(seq: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = seq.first().ok_or(Error::Empty("strategy sequence"))?;
    let n = first.len();
    let mut acc = vec![0.0; n];
    for v in seq {
        if v.len() != n {
            return Err(Error::GridMismatch {
                expected: n,
                actual: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let count = seq.len() as f64;
    Ok(acc.into_iter().map(|a| a / count).collect())
}
