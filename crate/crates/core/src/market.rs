//! Driving processes, price maps and benchmarks.
//!
//! A market scenario starts from an `m`-dimensional process `Y` with
//! independent increments, sampled on a uniform [`TimeGrid`] over `[0, 1]`.
//! The traded price is a pointwise function of the first coordinate of `Y`
//! and the benchmark `W` is a functional of the same path, so `W` is known
//! only at the terminal date.
//!
//! Paths are right-continuous step functions: the value stored at `t_k`
//! holds on `[t_k, t_{k+1})`. Every time integral in the crate is a
//! left-endpoint sum over this grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::frictions::FrictionSpec;

/// Uniform partition `t_k = k / n_steps` of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TimeGrid {
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::invalid("n_steps", "must be at least 2"));
        }
        Ok(TimeGrid { n_steps })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    /// Grid point `t_k`; `t(n_steps)` is exactly 1.
    pub fn t(&self, k: usize) -> f64 {
        k as f64 / self.n_steps as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.t(k))
    }
}

impl TryFrom<usize> for TimeGrid {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        TimeGrid::new(n)
    }
}

impl From<TimeGrid> for usize {
    fn from(g: TimeGrid) -> usize {
        g.n_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    BrownianDrift,
    JumpDiffusion,
    /// A single symmetric jump `jump_mean ± jump_scale` at `jump_time`
    /// (plus any drift/diffusion). Two equally likely outcomes.
    TwoPoint,
}

/// Law of the driving process. The dimension is `start.len()`; `drift` and
/// `volatility` are per coordinate, jumps hit every coordinate independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    pub start: Vec<f64>,
    pub drift: Vec<f64>,
    pub volatility: Vec<f64>,
    #[serde(default)]
    pub jump_rate: f64,
    #[serde(default)]
    pub jump_mean: f64,
    #[serde(default)]
    pub jump_scale: f64,
    #[serde(default = "default_jump_time")]
    pub jump_time: f64,
}

fn default_jump_time() -> f64 {
    0.5
}

impl ProcessSpec {
    /// One-dimensional Brownian motion with drift started at `start`.
    pub fn brownian(start: f64, drift: f64, volatility: f64) -> Self {
        ProcessSpec {
            kind: ProcessKind::BrownianDrift,
            start: vec![start],
            drift: vec![drift],
            volatility: vec![volatility],
            jump_rate: 0.0,
            jump_mean: 0.0,
            jump_scale: 0.0,
            jump_time: default_jump_time(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.start.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.start.len();
        if m == 0 {
            return Err(Error::invalid("process.start", "dimension must be at least 1"));
        }
        if self.drift.len() != m || self.volatility.len() != m {
            return Err(Error::invalid(
                "process",
                format!("start, drift and volatility must all have length {m}"),
            ));
        }
        for &x in self.start.iter().chain(&self.drift).chain(&self.volatility) {
            ensure_finite(x, "process parameters")?;
        }
        for &x in &[self.jump_rate, self.jump_mean, self.jump_scale, self.jump_time] {
            ensure_finite(x, "process jump parameters")?;
        }
        if self.volatility.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("process.volatility", "entries must be >= 0"));
        }
        if self.jump_rate < 0.0 {
            return Err(Error::invalid("process.jump_rate", "must be >= 0"));
        }
        if self.jump_scale < 0.0 {
            return Err(Error::invalid("process.jump_scale", "must be >= 0"));
        }
        if self.kind == ProcessKind::TwoPoint && !(self.jump_time > 0.0 && self.jump_time <= 1.0) {
            return Err(Error::invalid("process.jump_time", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Sample path of `Y` on a grid, stored row-major: `values[k * m + j] = Y_j(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingPath {
    pub grid: TimeGrid,
    pub dimension: usize,
    pub values: Vec<f64>,
}

impl DrivingPath {
    pub fn value(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.dimension + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn first_coordinate(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().step_by(self.dimension).copied()
    }
}

/// Discretised price `S(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub grid: TimeGrid,
    pub s: Vec<f64>,
}

impl PricePath {
    pub fn new(grid: TimeGrid, s: Vec<f64>) -> Result<Self> {
        if s.len() != grid.n_steps() + 1 {
            return Err(Error::GridMismatch {
                expected: grid.n_steps(),
                actual: s.len().saturating_sub(1),
            });
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("price path"));
        }
        Ok(PricePath { grid, s })
    }

    /// Path sampled from a deterministic price curve `t -> f(t)`.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect())
    }

    pub fn constant(grid: TimeGrid, s: f64) -> Result<Self> {
        Self::from_fn(grid, |_| s)
    }

    pub fn terminal(&self) -> f64 {
        self.s[self.s.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriceMapSpec {
    /// `S = base * exp(scale * Y_1)`
    ExponentialOfFirstCoordinate {
        base: f64,
        scale: f64,
    },
    /// `S = base + scale * Y_1`
    AffineOfFirstCoordinate {
        base: f64,
        scale: f64,
    },
    Identity,
}

impl PriceMapSpec {
    pub fn apply(&self, y: f64) -> f64 {
        match *self {
            PriceMapSpec::ExponentialOfFirstCoordinate { base, scale } => base * (scale * y).exp(),
            PriceMapSpec::AffineOfFirstCoordinate { base, scale } => base + scale * y,
            PriceMapSpec::Identity => y,
        }
    }

    /// True when every finite input maps to a strictly positive price.
    pub fn strictly_positive(&self) -> bool {
        matches!(*self, PriceMapSpec::ExponentialOfFirstCoordinate { base, .. } if base > 0.0)
    }

    /// True when the image of the map lies in `[0, inf)`.
    pub fn non_negative(&self) -> bool {
        match *self {
            PriceMapSpec::ExponentialOfFirstCoordinate { base, .. } => base >= 0.0,
            PriceMapSpec::AffineOfFirstCoordinate { base, scale } => scale == 0.0 && base >= 0.0,
            PriceMapSpec::Identity => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PriceMapSpec::ExponentialOfFirstCoordinate { base, scale } => {
                ensure_finite(base, "price_map.base")?;
                ensure_finite(scale, "price_map.scale")?;
                if base <= 0.0 {
                    return Err(Error::invalid("price_map.base", "exponential map needs base > 0"));
                }
            }
            PriceMapSpec::AffineOfFirstCoordinate { base, scale } => {
                ensure_finite(base, "price_map.base")?;
                ensure_finite(scale, "price_map.scale")?;
            }
            PriceMapSpec::Identity => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchmarkSpec {
    Zero,
    Constant {
        coefficient: f64,
    },
    /// `W = coefficient * S(1)`
    TerminalPriceMultiple {
        coefficient: f64,
    },
    /// `W = coefficient * (left-endpoint time average of S)`
    PathAverageMultiple {
        coefficient: f64,
    },
}

impl BenchmarkSpec {
    pub fn evaluate(&self, price: &PricePath) -> f64 {
        match *self {
            BenchmarkSpec::Zero => 0.0,
            BenchmarkSpec::Constant { coefficient } => coefficient,
            BenchmarkSpec::TerminalPriceMultiple { coefficient } => coefficient * price.terminal(),
            BenchmarkSpec::PathAverageMultiple { coefficient } => {
                let n = price.grid.n_steps();
                coefficient * price.s[..n].iter().sum::<f64>() * price.grid.dt()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BenchmarkSpec::Zero => Ok(()),
            BenchmarkSpec::Constant { coefficient }
            | BenchmarkSpec::TerminalPriceMultiple { coefficient }
            | BenchmarkSpec::PathAverageMultiple { coefficient } => {
                ensure_finite(coefficient, "benchmark.coefficient").map(|_| ())
            }
        }
    }
}

/// Everything needed to turn a seed into a priced, benchmarked scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub grid: TimeGrid,
    pub process: ProcessSpec,
    pub price_map: PriceMapSpec,
    pub benchmark: BenchmarkSpec,
    pub friction: FrictionSpec,
}

impl MarketSpec {
    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        self.price_map.validate()?;
        self.benchmark.validate()?;
        self.friction.validate()?;
        self.friction.validate_against(&self.price_map)
    }

    /// Price path and benchmark for scenario seed `seed`.
    pub fn scenario(&self, seed: u64) -> Result<(PricePath, f64)> {
        let path = sample_driving_path(&self.process, self.grid, seed)?;
        let price = price_from_driving(&path, &self.price_map)?;
        let w = self.benchmark.evaluate(&price);
        Ok((price, w))
    }
}

/// Draws one path of the driving process.
///
/// The generator is ChaCha8 keyed by `seed`, so the same
/// `(spec, grid, seed)` triple reproduces the same path bit for bit on any
/// thread. Each step draws, per coordinate, one standard normal and (for
/// jump diffusions) a Poisson count of normal jump sizes; all jumps that
/// fall in a cell are aggregated into that cell's increment.
pub fn sample_driving_path(spec: &ProcessSpec, grid: TimeGrid, seed: u64) -> Result<DrivingPath> {
    spec.validate()?;
    let m = spec.dimension();
    let n = grid.n_steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let poisson = if spec.kind == ProcessKind::JumpDiffusion && spec.jump_rate > 0.0 {
        Some(Poisson::new(spec.jump_rate * dt).map_err(|e| Error::invalid("process.jump_rate", e.to_string()))?)
    } else {
        None
    };
    // The two-point jump lands on the first grid point at or after jump_time.
    let two_point = if spec.kind == ProcessKind::TwoPoint {
        let cell = ((spec.jump_time * n as f64).ceil() as usize).clamp(1, n);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        Some((cell, spec.jump_mean + sign * spec.jump_scale))
    } else {
        None
    };

    let mut values = Vec::with_capacity((n + 1) * m);
    values.extend_from_slice(&spec.start);
    for k in 0..n {
        for j in 0..m {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut inc = spec.drift[j] * dt + spec.volatility[j] * sqrt_dt * z;
            if let Some(p) = &poisson {
                let count = p.sample(&mut rng) as u64;
                for _ in 0..count {
                    let size: f64 = StandardNormal.sample(&mut rng);
                    inc += spec.jump_mean + spec.jump_scale * size;
                }
            }
            if let Some((cell, jump)) = two_point {
                if k + 1 == cell {
                    inc += jump;
                }
            }
            let prev = values[k * m + j];
            values.push(prev + inc);
        }
    }
    Ok(DrivingPath {
        grid,
        dimension: m,
        values,
    })
}

/// Applies the price map to the first coordinate of the path, pointwise.
pub fn price_from_driving(path: &DrivingPath, map: &PriceMapSpec) -> Result<PricePath> {
    if path.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("driving path"));
    }
    let s = path.first_coordinate().map(|y| map.apply(y)).collect();
    PricePath::new(path.grid, s)
}

/// Benchmark `W = l(Y)` computed from the same path that generates the price.
pub fn benchmark_from_driving(path: &DrivingPath, map: &PriceMapSpec, bench: &BenchmarkSpec) -> Result<f64> {
    let price = price_from_driving(path, map)?;
    Ok(bench.evaluate(&price))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(n).unwrap()
    }

    #[test]
    fn grid_endpoints() {
        let g = grid(7);
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(7), 1.0);
        let pts: Vec<f64> = g.points().collect();
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!(TimeGrid::new(1).is_err());
    }

    #[test]
    fn zero_noise_path_is_constant() {
        let spec = ProcessSpec::brownian(0.7, 0.0, 0.0);
        for seed in [0, 1, 99] {
            let p = sample_driving_path(&spec, grid(10), seed).unwrap();
            assert!(p.values.iter().all(|&v| v == 0.7));
        }
    }

    #[test]
    fn deterministic_drift_integrates_exactly() {
        let spec = ProcessSpec {
            kind: ProcessKind::JumpDiffusion,
            jump_rate: 0.0,
            ..ProcessSpec::brownian(2.0, 1.0, 0.0)
        };
        let p = sample_driving_path(&spec, grid(4), 5).unwrap();
        for k in 0..=4 {
            assert_eq!(p.value(k, 0), 2.0 + k as f64 / 4.0);
        }
    }

    #[test]
    fn same_seed_same_path() {
        let spec = ProcessSpec {
            kind: ProcessKind::JumpDiffusion,
            jump_rate: 3.0,
            jump_mean: -0.1,
            jump_scale: 0.2,
            ..ProcessSpec::brownian(0.0, 0.1, 0.3)
        };
        let a = sample_driving_path(&spec, grid(50), 42).unwrap();
        let b = sample_driving_path(&spec, grid(50), 42).unwrap();
        let c = sample_driving_path(&spec, grid(50), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn two_point_jump_lands_on_grid() {
        let spec = ProcessSpec {
            kind: ProcessKind::TwoPoint,
            jump_scale: 1.0,
            jump_time: 0.5,
            ..ProcessSpec::brownian(0.0, 0.0, 0.0)
        };
        let mut seen = [false, false];
        for seed in 0..32 {
            let p = sample_driving_path(&spec, grid(16), seed).unwrap();
            let v: Vec<f64> = p.first_coordinate().collect();
            assert!(v[..8].iter().all(|&x| x == 0.0));
            let after = v[8];
            assert!(after == 1.0 || after == -1.0);
            assert!(v[8..].iter().all(|&x| x == after));
            seen[(after > 0.0) as usize] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn rejects_bad_process() {
        let mut spec = ProcessSpec::brownian(0.0, f64::NAN, 1.0);
        assert!(sample_driving_path(&spec, grid(4), 0).is_err());
        spec.drift[0] = 0.0;
        spec.volatility[0] = -1.0;
        assert!(sample_driving_path(&spec, grid(4), 0).is_err());
    }

    #[test]
    fn price_maps() {
        let g = grid(2);
        let path = DrivingPath {
            grid: g,
            dimension: 1,
            values: vec![0.0, 0.5, 1.0],
        };
        let id = price_from_driving(&path, &PriceMapSpec::Identity).unwrap();
        assert_eq!(id.s, vec![0.0, 0.5, 1.0]);

        let zero = DrivingPath {
            grid: g,
            dimension: 1,
            values: vec![0.0; 3],
        };
        let exp = PriceMapSpec::ExponentialOfFirstCoordinate { base: 1.0, scale: 1.0 };
        assert_eq!(price_from_driving(&zero, &exp).unwrap().s, vec![1.0; 3]);

        let affine = PriceMapSpec::AffineOfFirstCoordinate { base: 2.0, scale: 3.0 };
        assert_eq!(affine.apply(0.5), 3.5);
    }

    #[test]
    fn price_map_uses_first_coordinate_only() {
        let path = DrivingPath {
            grid: grid(2),
            dimension: 2,
            values: vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0],
        };
        let p = price_from_driving(&path, &PriceMapSpec::Identity).unwrap();
        assert_eq!(p.s, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn benchmarks() {
        let g = grid(2);
        let path = DrivingPath {
            grid: g,
            dimension: 1,
            values: vec![1.0, 1.2, 1.3],
        };
        let map = PriceMapSpec::Identity;
        let w = |b: BenchmarkSpec| benchmark_from_driving(&path, &map, &b).unwrap();
        assert_eq!(w(BenchmarkSpec::Zero), 0.0);
        assert_eq!(w(BenchmarkSpec::Constant { coefficient: 5.0 }), 5.0);
        assert_eq!(w(BenchmarkSpec::TerminalPriceMultiple { coefficient: 2.0 }), 2.6);
        let avg = w(BenchmarkSpec::PathAverageMultiple { coefficient: 1.0 });
        assert!((avg - 1.1).abs() < 1e-15);
    }
}
