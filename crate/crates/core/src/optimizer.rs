//! Monte Carlo maximisation of the prospect value over trading strategies.
//!
//! Candidates are compared on one frozen [`ScenarioSet`] (common random
//! numbers). The search is a cross-entropy scheme: a diagonal Gaussian
//! proposal is refit to the elite fraction of each generation, and the
//! Cesàro mean of the elites is offered as an extra candidate.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpt::{bootstrap_standard_error, cpt_value, wellposedness_check, CptSpec, CptValue, Verdict};
use crate::error::{Error, Result};
use crate::frictions::{market_bound, strategy_moment_diagnostic};
use crate::market::{MarketSpec, PricePath, TimeGrid};
use crate::portfolio::{
    cesaro_average, project_open_loop, simulate_with_bound, Policy, StrategyParams, WealthOutcome, DEFAULT_RATE_BOUND,
};
use crate::stats;

/// Stream of the per-scenario uniform draws; path seeds use stream 0.
const U_STREAM: u64 = 0x5eed_0001;
const SEARCH_STREAM: u64 = 0x5eed_0002;
const BOOTSTRAP_SALT: u64 = 0xb007_57a9_0000_0001;

/// Market, preferences and initial endowment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub market: MarketSpec,
    pub cpt: CptSpec,
    #[serde(default)]
    pub z0: f64,
    #[serde(default)]
    pub z1: f64,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.cpt.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub price: PricePath,
    pub benchmark: f64,
    pub bound: f64,
    /// Randomisation draw, independent of the path.
    pub u: f64,
}

/// Frozen sample of `(Y, U)` scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub base_seed: u64,
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    /// Path `i` uses seed `base_seed + i`; the `U` draws come from a
    /// separate ChaCha stream keyed by `base_seed`.
    pub fn generate(market: &MarketSpec, n_paths: usize, base_seed: u64) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::Empty("scenario set"));
        }
        market.validate()?;
        let mut urng = ChaCha8Rng::seed_from_u64(base_seed);
        urng.set_stream(U_STREAM);
        let us: Vec<f64> = (0..n_paths).map(|_| rand::Rng::random::<f64>(&mut urng)).collect();
        let scenarios = us
            .into_par_iter()
            .enumerate()
            .map(|(i, u)| {
                let seed = base_seed.wrapping_add(i as u64);
                let (price, benchmark) = market.scenario(seed)?;
                let bound = market_bound(&price, &market.friction)?;
                Ok(Scenario {
                    seed,
                    price,
                    benchmark,
                    bound,
                    u,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ScenarioSet { base_seed, scenarios })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn grid(&self) -> TimeGrid {
        self.scenarios[0].price.grid
    }
}

/// Everything learned from simulating one strategy on a scenario set.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: CptValue,
    /// `X_1 - W` per scenario.
    pub sample: Vec<f64>,
    pub outcomes: Vec<WealthOutcome>,
    /// Smallest `z0 + B - X_1` over scenarios.
    pub min_slack: f64,
    /// Smallest slack after subtracting the dominance tolerance `1e-9 (1 + |B|)`.
    pub min_tolerant_slack: f64,
}

/// Projects `params` to the admissible class and simulates every scenario.
pub fn evaluate_detailed(params: &StrategyParams, scenarios: &ScenarioSet, problem: &Problem) -> Result<Evaluation> {
    if scenarios.is_empty() {
        return Err(Error::Empty("scenario set"));
    }
    let grid = scenarios.grid();
    params.validate(grid.n_steps())?;
    let params = params.admissible(grid);
    let outcomes: Vec<WealthOutcome> = scenarios
        .scenarios
        .iter()
        .map(|sc| {
            simulate_with_bound(
                &params,
                &sc.price,
                &problem.market.friction,
                sc.u,
                problem.z0,
                problem.z1,
                sc.bound,
            )
        })
        .collect::<Result<_>>()?;
    let sample: Vec<f64> = outcomes
        .iter()
        .zip(&scenarios.scenarios)
        .map(|(o, sc)| o.terminal_money - sc.benchmark)
        .collect();
    let value = cpt_value(&sample, &problem.cpt)?;
    let mut min_slack = f64::INFINITY;
    let mut min_tolerant_slack = f64::INFINITY;
    for o in &outcomes {
        let slack = o.bound_slack(problem.z0);
        min_slack = min_slack.min(slack);
        min_tolerant_slack = min_tolerant_slack.min(slack + 1e-9 * (1.0 + o.bound.abs()));
    }
    Ok(Evaluation {
        value,
        sample,
        outcomes,
        min_slack,
        min_tolerant_slack,
    })
}

/// Prospect value `V(X_1 - W)` of `params` on the frozen scenarios.
pub fn evaluate_objective(params: &StrategyParams, scenarios: &ScenarioSet, problem: &Problem) -> Result<f64> {
    evaluate_detailed(params, scenarios, problem).map(|e| e.value.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PureKind {
    OpenLoop,
    Feedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    OpenLoop,
    Feedback,
    RandomizedMixture,
}

/// Shape of the strategies the optimiser searches over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTemplate {
    pub kind: StrategyKind,
    /// Kind of each mixture component.
    #[serde(default = "default_component_kind")]
    pub component_kind: PureKind,
    /// Number of mixture components.
    #[serde(default = "default_components")]
    pub components: usize,
    #[serde(default = "default_rate_bound")]
    pub rate_bound: f64,
}

fn default_component_kind() -> PureKind {
    PureKind::OpenLoop
}

fn default_components() -> usize {
    2
}

fn default_rate_bound() -> f64 {
    DEFAULT_RATE_BOUND
}

impl StrategyTemplate {
    pub fn open_loop() -> Self {
        StrategyTemplate {
            kind: StrategyKind::OpenLoop,
            component_kind: PureKind::OpenLoop,
            components: default_components(),
            rate_bound: DEFAULT_RATE_BOUND,
        }
    }

    pub fn feedback() -> Self {
        StrategyTemplate {
            kind: StrategyKind::Feedback,
            component_kind: PureKind::Feedback,
            ..Self::open_loop()
        }
    }

    pub fn mixture(component_kind: PureKind, components: usize) -> Self {
        StrategyTemplate {
            kind: StrategyKind::RandomizedMixture,
            component_kind,
            components,
            rate_bound: DEFAULT_RATE_BOUND,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == StrategyKind::RandomizedMixture && self.components == 0 {
            return Err(Error::invalid("strategy.components", "must be at least 1"));
        }
        if !(self.rate_bound > 0.0) || !self.rate_bound.is_finite() {
            return Err(Error::invalid(
                "strategy.rate_bound",
                "must be a positive finite number",
            ));
        }
        Ok(())
    }

    /// The U-independent template with the same component kind.
    pub fn deterministic(&self) -> Self {
        let kind = match self.kind {
            StrategyKind::RandomizedMixture => match self.component_kind {
                PureKind::OpenLoop => StrategyKind::OpenLoop,
                PureKind::Feedback => StrategyKind::Feedback,
            },
            k => k,
        };
        StrategyTemplate { kind, ..self.clone() }
    }

    /// A mixture over this template's pure kind.
    pub fn randomized(&self) -> Self {
        let component_kind = match self.kind {
            StrategyKind::OpenLoop => PureKind::OpenLoop,
            StrategyKind::Feedback => PureKind::Feedback,
            StrategyKind::RandomizedMixture => self.component_kind,
        };
        StrategyTemplate {
            kind: StrategyKind::RandomizedMixture,
            component_kind,
            ..self.clone()
        }
    }
}

/// Flat parameter vector <-> strategy. Mixture vectors hold the component
/// blocks followed by one logit per component.
#[derive(Debug, Clone)]
struct Encoding {
    template: StrategyTemplate,
    grid: TimeGrid,
}

impl Encoding {
    fn pure_len(&self, kind: PureKind) -> usize {
        match kind {
            PureKind::OpenLoop => self.grid.n_steps(),
            PureKind::Feedback => 4,
        }
    }

    fn len(&self) -> usize {
        match self.template.kind {
            StrategyKind::OpenLoop => self.pure_len(PureKind::OpenLoop),
            StrategyKind::Feedback => self.pure_len(PureKind::Feedback),
            StrategyKind::RandomizedMixture => {
                self.template.components * (self.pure_len(self.template.component_kind) + 1)
            }
        }
    }

    fn is_logit(&self, i: usize) -> bool {
        self.template.kind == StrategyKind::RandomizedMixture
            && i >= self.template.components * self.pure_len(self.template.component_kind)
    }

    fn pure(&self, kind: PureKind, theta: &[f64]) -> Policy {
        match kind {
            PureKind::OpenLoop => Policy::OpenLoop { rates: theta.to_vec() },
            PureKind::Feedback => Policy::Feedback {
                coefficients: [theta[0], theta[1], theta[2], theta[3]],
            },
        }
    }

    fn decode(&self, theta: &[f64]) -> StrategyParams {
        let policy = match self.template.kind {
            StrategyKind::OpenLoop => self.pure(PureKind::OpenLoop, theta),
            StrategyKind::Feedback => self.pure(PureKind::Feedback, theta),
            StrategyKind::RandomizedMixture => {
                let kind = self.template.component_kind;
                let block = self.pure_len(kind);
                let k = self.template.components;
                let components = (0..k)
                    .map(|c| self.pure(kind, &theta[c * block..(c + 1) * block]))
                    .collect();
                let logits = &theta[k * block..];
                let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = ex.iter().sum();
                let mut weights: Vec<f64> = ex.iter().map(|e| e / total).collect();
                // exact unit sum for validation
                let rest: f64 = weights[..k - 1].iter().sum();
                weights[k - 1] = (1.0 - rest).max(0.0);
                Policy::RandomizedMixture { components, weights }
            }
        };
        StrategyParams {
            policy,
            rate_bound: self.template.rate_bound,
        }
    }

    /// Projects the open-loop blocks of `theta` onto the admissible set.
    fn project(&self, theta: &mut [f64]) {
        let m = self.template.rate_bound;
        match self.template.kind {
            StrategyKind::OpenLoop => project_open_loop(theta, self.grid, m),
            StrategyKind::Feedback => {}
            StrategyKind::RandomizedMixture => {
                if self.template.component_kind == PureKind::OpenLoop {
                    let block = self.grid.n_steps();
                    for c in 0..self.template.components {
                        project_open_loop(&mut theta[c * block..(c + 1) * block], self.grid, m);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(default = "d_population")]
    pub population: usize,
    #[serde(default = "d_elite_fraction")]
    pub elite_fraction: f64,
    #[serde(default = "d_generations")]
    pub generations: usize,
    /// Initial proposal standard deviation of strategy parameters.
    #[serde(default = "d_init_spread")]
    pub init_spread: f64,
    /// Initial proposal standard deviation of mixture logits.
    #[serde(default = "d_logit_spread")]
    pub logit_spread: f64,
    #[serde(default = "d_spread_floor")]
    pub spread_floor: f64,
    /// Weight of the new elite statistics in the proposal update; 1 means
    /// no memory of the previous proposal.
    #[serde(default = "d_smoothing")]
    pub smoothing: f64,
    #[serde(default = "d_n_paths")]
    pub n_paths: usize,
    /// Independent searches on fresh scenario sets; winners are re-scored
    /// on the first set.
    #[serde(default = "d_restarts")]
    pub restarts: usize,
    #[serde(default = "d_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub allow_ill_posed: bool,
}

fn d_population() -> usize {
    64
}
fn d_elite_fraction() -> f64 {
    0.125
}
fn d_generations() -> usize {
    200
}
fn d_init_spread() -> f64 {
    0.5
}
fn d_logit_spread() -> f64 {
    1.0
}
fn d_spread_floor() -> f64 {
    1e-6
}
fn d_smoothing() -> f64 {
    0.3
}
fn d_n_paths() -> usize {
    1024
}
fn d_restarts() -> usize {
    1
}
fn d_bootstrap() -> usize {
    200
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            population: d_population(),
            elite_fraction: d_elite_fraction(),
            generations: d_generations(),
            init_spread: d_init_spread(),
            logit_spread: d_logit_spread(),
            spread_floor: d_spread_floor(),
            smoothing: d_smoothing(),
            n_paths: d_n_paths(),
            restarts: d_restarts(),
            bootstrap: d_bootstrap(),
            allow_ill_posed: false,
        }
    }
}

impl OptimizerConfig {
    pub fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).ceil() as usize).clamp(1, self.population)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("optimizer.population", "must be at least 2"));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::invalid("optimizer.elite_fraction", "must lie in (0, 1]"));
        }
        if self.generations == 0 {
            return Err(Error::invalid("optimizer.generations", "must be at least 1"));
        }
        if !(self.init_spread > 0.0) || !(self.logit_spread > 0.0) || !(self.spread_floor > 0.0) {
            return Err(Error::invalid("optimizer", "spreads must be positive"));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::invalid("optimizer.smoothing", "must lie in (0, 1]"));
        }
        if self.n_paths == 0 || self.restarts == 0 {
            return Err(Error::invalid("optimizer", "n_paths and restarts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Running best value, nondecreasing.
    pub best_value: f64,
    pub generation_best: f64,
    pub population_mean: f64,
    pub spread_max: f64,
    /// `E int |phi|^beta (1+|S|)^beta dt` of the generation's best strategy.
    pub moment_diagnostic: f64,
    pub cesaro_kept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub path: usize,
    pub terminal_money: f64,
    pub bound: f64,
    pub terminal_inventory: f64,
    pub benchmark: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub template: StrategyTemplate,
    pub best_params: StrategyParams,
    pub best_value: CptValue,
    pub best_std_error: f64,
    pub trace: Vec<GenerationRecord>,
    /// `B - X_1` quantiles of the best strategy.
    pub slack: SlackStats,
    /// Worst tolerance-adjusted slack over every evaluated candidate.
    pub min_candidate_slack: f64,
    pub evaluations: usize,
    pub failed_evaluations: usize,
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub paths: Vec<PathRecord>,
    pub elapsed: Duration,
}

/// Runs the search on freshly generated scenarios with base seed `seed`.
pub fn optimize(
    problem: &Problem,
    template: &StrategyTemplate,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<OptimizationReport> {
    preflight(problem, template, opt, seed)?;
    let scenarios = ScenarioSet::generate(&problem.market, opt.n_paths, seed)?;
    optimize_on(problem, template, opt, &scenarios, seed)
}

fn preflight(problem: &Problem, template: &StrategyTemplate, opt: &OptimizerConfig, seed: u64) -> Result<()> {
    problem.validate()?;
    template.validate()?;
    opt.validate()?;
    if !opt.allow_ill_posed {
        let cert = wellposedness_check(&problem.cpt, &problem.market, opt.n_paths.min(1024), seed)?;
        if cert.verdict == Verdict::Fail {
            return Err(Error::IllPosed(cert.notes.join("; ")));
        }
    }
    Ok(())
}

/// Search on a given scenario set (restarts draw further sets after it).
pub fn optimize_on(
    problem: &Problem,
    template: &StrategyTemplate,
    opt: &OptimizerConfig,
    scenarios: &ScenarioSet,
    seed: u64,
) -> Result<OptimizationReport> {
    let started = Instant::now();
    let enc = Encoding {
        template: template.clone(),
        grid: scenarios.grid(),
    };
    let mut total_evals = 0;
    let mut total_failed = 0;
    let mut worst_slack = f64::INFINITY;

    let mut first = search(problem, &enc, opt, scenarios, seed, 0)?;
    total_evals += first.evaluations;
    total_failed += first.failed;
    worst_slack = worst_slack.min(first.min_tolerant_slack);

    for r in 1..opt.restarts {
        let fresh_seed = scenarios
            .base_seed
            .wrapping_add((r as u64).wrapping_mul(scenarios.len() as u64));
        let fresh = ScenarioSet::generate(&problem.market, scenarios.len(), fresh_seed)?;
        let run = search(problem, &enc, opt, &fresh, seed, r as u64)?;
        total_evals += run.evaluations + 1;
        total_failed += run.failed;
        worst_slack = worst_slack.min(run.min_tolerant_slack);
        if let Some(theta) = run.best_theta {
            let rescored = evaluate_detailed(&enc.decode(&theta), scenarios, problem)?;
            worst_slack = worst_slack.min(rescored.min_tolerant_slack);
            if first.best_value.is_none_or(|v| rescored.value.value > v) {
                first.best_value = Some(rescored.value.value);
                first.best_theta = Some(theta);
            }
        }
    }

    let theta = first.best_theta.ok_or_else(|| {
        Error::NoFeasible(format!(
            "{} of {} candidate evaluations failed",
            total_failed, total_evals
        ))
    })?;
    let best_params = enc.decode(&theta).admissible(enc.grid);
    let eval = evaluate_detailed(&best_params, scenarios, problem)?;
    let best_std_error = bootstrap_standard_error(&eval.sample, &problem.cpt, opt.bootstrap, seed ^ BOOTSTRAP_SALT)?;
    let mut slacks: Vec<f64> = eval.outcomes.iter().map(|o| o.bound_slack(problem.z0)).collect();
    slacks.sort_by(f64::total_cmp);
    let paths = eval
        .outcomes
        .iter()
        .zip(&scenarios.scenarios)
        .enumerate()
        .map(|(i, (o, sc))| PathRecord {
            path: i,
            terminal_money: o.terminal_money,
            bound: o.bound,
            terminal_inventory: o.terminal_inventory,
            benchmark: sc.benchmark,
        })
        .collect();

    Ok(OptimizationReport {
        template: template.clone(),
        best_params,
        best_value: eval.value,
        best_std_error,
        trace: first.trace,
        slack: SlackStats {
            min: slacks[0],
            median: stats::quantile_sorted(&slacks, 0.5),
            max: slacks[slacks.len() - 1],
        },
        min_candidate_slack: worst_slack.min(eval.min_tolerant_slack),
        evaluations: total_evals,
        failed_evaluations: total_failed,
        seed,
        n_paths: scenarios.len(),
        n_steps: enc.grid.n_steps(),
        paths,
        elapsed: started.elapsed(),
    })
}

struct SearchResult {
    best_theta: Option<Vec<f64>>,
    best_value: Option<f64>,
    trace: Vec<GenerationRecord>,
    evaluations: usize,
    failed: usize,
    min_tolerant_slack: f64,
}

fn search(
    problem: &Problem,
    enc: &Encoding,
    opt: &OptimizerConfig,
    scenarios: &ScenarioSet,
    seed: u64,
    restart: u64,
) -> Result<SearchResult> {
    let dim = enc.len();
    let n_elite = opt.elite_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart));
    rng.set_stream(SEARCH_STREAM);

    let mut mean = vec![0.0; dim];
    let mut spread: Vec<f64> = (0..dim)
        .map(|i| {
            if enc.is_logit(i) {
                opt.logit_spread
            } else {
                opt.init_spread
            }
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut evaluations = 0;
    let mut failed = 0;
    let mut min_tolerant_slack = f64::INFINITY;

    let score = |theta: &[f64]| -> Option<(f64, f64)> {
        evaluate_detailed(&enc.decode(theta), scenarios, problem)
            .ok()
            .filter(|e| !e.value.value.is_nan())
            .map(|e| (e.value.value, e.min_tolerant_slack))
    };

    for generation in 0..opt.generations {
        let candidates: Vec<Vec<f64>> = (0..opt.population)
            .map(|_| {
                let mut theta: Vec<f64> = mean
                    .iter()
                    .zip(&spread)
                    .map(|(&m, &s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + s * z
                    })
                    .collect();
                enc.project(&mut theta);
                theta
            })
            .collect();
        let scored: Vec<Option<(f64, f64)>> = candidates.par_iter().map(|t| score(t)).collect();
        evaluations += scored.len();

        let mut ranked: Vec<(usize, f64)> = Vec::with_capacity(scored.len());
        for (i, s) in scored.iter().enumerate() {
            match s {
                Some((v, slack)) => {
                    ranked.push((i, *v));
                    min_tolerant_slack = min_tolerant_slack.min(*slack);
                }
                None => failed += 1,
            }
        }
        if ranked.is_empty() {
            continue;
        }
        // descending value, lower index first on ties
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let population_mean = ranked.iter().map(|r| r.1).sum::<f64>() / ranked.len() as f64;
        let elites: Vec<Vec<f64>> = ranked
            .iter()
            .take(n_elite)
            .map(|&(i, _)| candidates[i].clone())
            .collect();

        let mut gen_best_value = ranked[0].1;
        let mut gen_best_theta = candidates[ranked[0].0].clone();

        let mut centre = cesaro_average(&elites)?;
        enc.project(&mut centre);
        let mut cesaro_kept = false;
        evaluations += 1;
        match score(&centre) {
            Some((v, slack)) => {
                min_tolerant_slack = min_tolerant_slack.min(slack);
                if v > gen_best_value {
                    gen_best_value = v;
                    gen_best_theta = centre.clone();
                    cesaro_kept = true;
                }
            }
            None => failed += 1,
        }

        if best.as_ref().is_none_or(|(v, _)| gen_best_value > *v) {
            best = Some((gen_best_value, gen_best_theta.clone()));
        }

        let k = elites.len() as f64;
        let a = opt.smoothing;
        for i in 0..dim {
            let var = elites.iter().map(|e| (e[i] - centre[i]).powi(2)).sum::<f64>() / k;
            spread[i] = (a * var.sqrt() + (1.0 - a) * spread[i]).max(opt.spread_floor);
            mean[i] = a * centre[i] + (1.0 - a) * mean[i];
        }
        enc.project(&mut mean);

        let moment = moment_of(&enc.decode(&gen_best_theta), scenarios, problem)?;
        let spread_max = spread.iter().cloned().fold(0.0, f64::max);
        trace.push(GenerationRecord {
            generation,
            best_value: best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0),
            generation_best: gen_best_value,
            population_mean,
            spread_max,
            moment_diagnostic: moment,
            cesaro_kept,
        });
        if spread_max <= opt.spread_floor {
            break;
        }
    }

    let (best_value, best_theta) = match best {
        Some((v, t)) => (Some(v), Some(t)),
        None => (None, None),
    };
    Ok(SearchResult {
        best_theta,
        best_value,
        trace,
        evaluations,
        failed,
        min_tolerant_slack,
    })
}

fn moment_of(params: &StrategyParams, scenarios: &ScenarioSet, problem: &Problem) -> Result<f64> {
    let eval = evaluate_detailed(params, scenarios, problem)?;
    let rates: Vec<Vec<f64>> = eval.outcomes.into_iter().map(|o| o.rates).collect();
    let prices: Vec<PricePath> = scenarios.scenarios.iter().map(|s| s.price.clone()).collect();
    strategy_moment_diagnostic(&rates, &prices, &problem.market.friction)
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub deterministic: OptimizationReport,
    pub randomized: OptimizationReport,
}

impl ComparisonReport {
    /// Randomised minus deterministic value.
    pub fn difference(&self) -> f64 {
        self.randomized.best_value.value - self.deterministic.best_value.value
    }

    /// `sqrt(se_r^2 + se_d^2)`.
    pub fn pooled_std_error(&self) -> f64 {
        self.randomized.best_std_error.hypot(self.deterministic.best_std_error)
    }
}

/// Optimises over U-independent strategies and over mixtures of them, on
/// the same scenarios.
pub fn compare_randomized(
    problem: &Problem,
    template: &StrategyTemplate,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<ComparisonReport> {
    preflight(problem, template, opt, seed)?;
    let scenarios = ScenarioSet::generate(&problem.market, opt.n_paths, seed)?;
    let deterministic = optimize_on(problem, &template.deterministic(), opt, &scenarios, seed)?;
    let randomized = optimize_on(problem, &template.randomized(), opt, &scenarios, seed)?;
    Ok(ComparisonReport {
        deterministic,
        randomized,
    })
}
