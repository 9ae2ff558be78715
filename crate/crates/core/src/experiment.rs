//! Config files, reproducible runs and CSV outputs.
//!
//! A run computes everything in memory first and only then writes its
//! files, each through a temporary file renamed into place. The manifest is
//! written last and lists a SHA-256 checksum for every other output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cpt::{wellposedness_check, CertificateReport, CptSpec, Verdict};
use crate::error::{Error, Result};
use crate::frictions::{integrability_diagnostic, FrictionSpec, MomentReport};
use crate::market::{BenchmarkSpec, MarketSpec, PriceMapSpec, ProcessSpec, TimeGrid};
use crate::optimizer::{
    compare_randomized, optimize, OptimizationReport, OptimizerConfig, Problem, PureKind, StrategyKind,
    StrategyTemplate,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rate clamps tried when an ill-posed configuration is run on purpose.
pub const ILL_POSED_RATE_BOUNDS: [f64; 3] = [10.0, 100.0, 1000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Paths used by the well-posedness and integrability diagnostics.
    #[serde(default = "default_diagnostic_paths")]
    pub diagnostic_paths: usize,
    #[serde(default)]
    pub z0: f64,
    #[serde(default)]
    pub z1: f64,
    #[serde(default)]
    pub allow_ill_posed: bool,
}

fn default_diagnostic_paths() -> usize {
    4096
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            out_dir: None,
            diagnostic_paths: default_diagnostic_paths(),
            z0: 0.0,
            z1: 0.0,
            allow_ill_posed: false,
        }
    }
}

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub process: ProcessSpec,
    pub price_map: PriceMapSpec,
    pub benchmark: BenchmarkSpec,
    pub friction: FrictionSpec,
    pub cpt: CptSpec,
    pub strategy: StrategyTemplate,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn market(&self) -> Result<MarketSpec> {
        Ok(MarketSpec {
            grid: TimeGrid::new(self.grid.n_steps).map_err(|_| Error::invalid("grid.n_steps", "must be at least 2"))?,
            process: self.process.clone(),
            price_map: self.price_map.clone(),
            benchmark: self.benchmark.clone(),
            friction: self.friction.clone(),
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem {
            market: self.market()?,
            cpt: self.cpt.clone(),
            z0: self.run.z0,
            z1: self.run.z1,
        })
    }

    /// Static checks on every section and their cross-constraints.
    pub fn validate(&self) -> Result<()> {
        self.problem()?.validate()?;
        self.strategy.validate()?;
        self.optimizer.validate()?;
        if self.run.diagnostic_paths == 0 {
            return Err(Error::invalid("run.diagnostic_paths", "must be at least 1"));
        }
        for (name, v) in [("run.z0", self.run.z0), ("run.z1", self.run.z1)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        let open_loop = match self.strategy.kind {
            StrategyKind::OpenLoop => true,
            StrategyKind::Feedback => false,
            StrategyKind::RandomizedMixture => self.strategy.component_kind == PureKind::OpenLoop,
        };
        if open_loop && self.run.z1 != 0.0 {
            return Err(Error::invalid(
                "run.z1",
                "open-loop strategies are projected to zero net trading, so the initial inventory must be 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Optimize,
    CompareRandomized,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Optimize => "optimize",
            Command::CompareRandomized => "compare-randomized",
        }
    }
}

/// Command-line overrides of the `[run]` section.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub allow_ill_posed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub verdict: Verdict,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_clock_seconds: f64,
    pub out_dir: PathBuf,
    pub files: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command: {}", self.command);
        let _ = writeln!(s, "version: {}", self.version);
        let _ = writeln!(s, "config_sha256: {}", self.config_sha256);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "verdict: {}", self.verdict);
        let _ = writeln!(s, "started_unix: {:.3}", self.started_unix);
        let _ = writeln!(s, "finished_unix: {:.3}", self.finished_unix);
        let _ = writeln!(s, "wall_clock_seconds: {:.3}", self.wall_clock_seconds);
        for f in &self.files {
            let _ = writeln!(s, "file: {} sha256={}", f.file, f.sha256);
        }
        s
    }

    pub fn checksum(&self, file: &str) -> Option<&str> {
        self.files.iter().find(|f| f.file == file).map(|f| f.sha256.as_str())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Reads, validates and runs the experiment in `config_path`.
pub fn run_experiment(config_path: &Path, command: Command, opts: &RunOptions) -> Result<RunManifest> {
    let text = std::fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let cfg = ExperimentConfig::from_toml_str(&text)?;
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.run.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    run_config(&cfg, &sha256_hex(text.as_bytes()), command, opts, &out_dir)
}

/// Runs an already parsed config and writes its outputs to `out_dir`.
pub fn run_config(
    cfg: &ExperimentConfig,
    config_sha256: &str,
    command: Command,
    opts: &RunOptions,
    out_dir: &Path,
) -> Result<RunManifest> {
    let started_unix = unix_now();
    let clock = Instant::now();
    cfg.validate()?;
    let seed = opts.seed.unwrap_or(cfg.run.seed);
    let allow_ill_posed = opts.allow_ill_posed || cfg.run.allow_ill_posed || cfg.optimizer.allow_ill_posed;
    let problem = cfg.problem()?;

    let cert = wellposedness_check(&problem.cpt, &problem.market, cfg.run.diagnostic_paths, seed)?;
    if cert.verdict == Verdict::Fail && !allow_ill_posed && command != Command::Check {
        return Err(Error::IllPosed(cert.notes.join("; ")));
    }
    let integrability = integrability_diagnostic(&problem.market, cfg.run.diagnostic_paths, seed)?;

    let mut files: BTreeMap<&'static str, String> = BTreeMap::new();
    files.insert("diagnostics.csv", diagnostics_csv(&cert, &integrability));
    files.insert("config.toml", cfg.to_toml_string()?);

    let opt = OptimizerConfig {
        allow_ill_posed: true, // the gate above already ran
        ..cfg.optimizer.clone()
    };
    match command {
        Command::Check => {}
        Command::Optimize => {
            let report = optimize(&problem, &cfg.strategy, &opt, seed)?;
            files.insert("trace.csv", trace_csv(&[("optimized", &report)]));
            files.insert("summary.csv", summary_csv(&[("optimized", &report)]));
            files.insert("paths.csv", paths_csv(&report));
            files.insert("best_strategy.toml", strategy_toml(&report)?);
            if cert.verdict == Verdict::Fail {
                files.insert(
                    "ill_posed_trend.csv",
                    ill_posed_trend(&problem, &cfg.strategy, &opt, seed)?,
                );
            }
        }
        Command::CompareRandomized => {
            let cmp = compare_randomized(&problem, &cfg.strategy, &opt, seed)?;
            let runs = [("deterministic", &cmp.deterministic), ("randomized", &cmp.randomized)];
            files.insert("trace.csv", trace_csv(&runs));
            files.insert("summary.csv", summary_csv(&runs));
            files.insert("paths.csv", paths_csv(&cmp.randomized));
            files.insert("best_strategy.toml", strategy_toml(&cmp.randomized)?);
            let mut c = String::from("difference,pooled_std_error,randomized_minus_one_se_exceeds_deterministic\n");
            let _ = writeln!(
                c,
                "{},{},{}",
                cmp.difference(),
                cmp.pooled_std_error(),
                cmp.difference() > cmp.pooled_std_error()
            );
            files.insert("comparison.csv", c);
        }
    }

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(files.len());
    for (name, body) in &files {
        write_atomic(&out_dir.join(name), body.as_bytes())?;
        entries.push(ManifestEntry {
            file: (*name).to_string(),
            sha256: sha256_hex(body.as_bytes()),
        });
    }
    let manifest = RunManifest {
        command: command.name().to_string(),
        version: VERSION.to_string(),
        config_sha256: config_sha256.to_string(),
        seed,
        verdict: cert.verdict,
        started_unix,
        finished_unix: unix_now(),
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        out_dir: out_dir.to_path_buf(),
        files: entries,
    };
    write_atomic(&out_dir.join("manifest.txt"), manifest.render().as_bytes())?;
    Ok(manifest)
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn diagnostics_csv(cert: &CertificateReport, integ: &MomentReport) -> String {
    let mut s = String::from("quantity,estimate,std_error,status\n");
    let flag = |warn: bool| if warn { "WARN" } else { "ok" };
    let _ = writeln!(s, "verdict,,,{}", cert.verdict);
    if let Some(o) = cert.ordering {
        let _ = writeln!(s, "exponent_ordering,,,{}", if o { "ok" } else { "FAIL" });
    }
    if let Some(c) = cert.utility_bound {
        let _ = writeln!(
            s,
            "utility_bound_min_slack,{},,{}",
            c.min_slack,
            if c.holds { "ok" } else { "FAIL" }
        );
    }
    if let Some(c) = cert.distortion_bound {
        let _ = writeln!(
            s,
            "distortion_bound_min_slack,{},,{}",
            c.min_slack,
            if c.holds { "ok" } else { "FAIL" }
        );
    }
    let _ = writeln!(s, "concave_route,,,{}", cert.concave_route);
    for (name, e) in [
        ("bound_gain_value", &cert.bound_gain_value),
        ("benchmark_positive_mean", &cert.benchmark_positive_mean),
        ("concave_integrability", &cert.concave_integrability),
    ] {
        let _ = writeln!(s, "{},{},{},{}", name, e.estimate, e.std_error, flag(e.warn));
    }
    let _ = writeln!(
        s,
        "friction_integrability,{},{},{}",
        integ.estimate,
        integ.std_error,
        flag(integ.warn())
    );
    s
}

pub const TRACE_HEADER: &str =
    "label,generation,best_value,generation_best,population_mean,spread_max,moment_diagnostic,cesaro_kept";

fn trace_csv(runs: &[(&str, &OptimizationReport)]) -> String {
    let mut s = format!("{TRACE_HEADER}\n");
    for (label, r) in runs {
        for g in &r.trace {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                label,
                g.generation,
                g.best_value,
                g.generation_best,
                g.population_mean,
                g.spread_max,
                g.moment_diagnostic,
                g.cesaro_kept
            );
        }
    }
    s
}

fn summary_csv(runs: &[(&str, &OptimizationReport)]) -> String {
    let mut s = String::from(
        "label,strategy,best_value,gains,losses,std_error,slack_min,slack_median,slack_max,\
         min_candidate_slack,generations,evaluations,failed_evaluations,n_paths,n_steps,seed\n",
    );
    for (label, r) in runs {
        let kind = toml::Value::try_from(r.template.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            label,
            kind,
            r.best_value.value,
            r.best_value.gains,
            r.best_value.losses,
            r.best_std_error,
            r.slack.min,
            r.slack.median,
            r.slack.max,
            r.min_candidate_slack,
            r.trace.len(),
            r.evaluations,
            r.failed_evaluations,
            r.n_paths,
            r.n_steps,
            r.seed
        );
    }
    s
}

fn paths_csv(r: &OptimizationReport) -> String {
    let mut s = String::from("path,terminal_money,bound,terminal_inventory,benchmark\n");
    for p in &r.paths {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            p.path, p.terminal_money, p.bound, p.terminal_inventory, p.benchmark
        );
    }
    s
}

fn strategy_toml(r: &OptimizationReport) -> Result<String> {
    toml::to_string(&r.best_params).map_err(|e| Error::Config(e.to_string()))
}

/// Best value under escalating rate clamps. Nothing is asserted about the
/// trend; it is the evidence for or against divergence.
fn ill_posed_trend(problem: &Problem, template: &StrategyTemplate, opt: &OptimizerConfig, seed: u64) -> Result<String> {
    let mut s = String::from("rate_bound,best_value,std_error,moment_diagnostic\n");
    for m in ILL_POSED_RATE_BOUNDS {
        let t = StrategyTemplate {
            rate_bound: m,
            ..template.clone()
        };
        let r = optimize(problem, &t, opt, seed)?;
        let moment = r.trace.last().map_or(f64::NAN, |g| g.moment_diagnostic);
        let _ = writeln!(s, "{},{},{},{}", m, r.best_value.value, r.best_std_error, moment);
    }
    Ok(s)
}

pub const PLOT_TRACE_HEADER: &str = "label,generation,best_value,moment_diagnostic";
pub const PLOT_SURVIVAL_HEADER: &str = "side,x,survival,distorted_survival";

/// Writes `plot_trace.csv` and `plot_survival.csv` next to the reports in
/// `dir` and returns their paths.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<PathBuf>> {
    let needed = ["trace.csv", "paths.csv", "config.toml"];
    let missing: Vec<String> = needed
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing report files: {}", missing.join(", "))));
    }
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let cfg = ExperimentConfig::from_toml_str(&read("config.toml")?)?;

    let trace = plot_trace(&read("trace.csv")?)?;
    let outcomes = read_outcomes(&read("paths.csv")?)?;
    let survival = plot_survival(&outcomes, &cfg.cpt);

    let a = dir.join("plot_trace.csv");
    let b = dir.join("plot_survival.csv");
    write_atomic(&a, trace.as_bytes())?;
    write_atomic(&b, survival.as_bytes())?;
    Ok(vec![a, b])
}

fn csv_columns<'a>(text: &'a str, file: &str, wanted: &[&str]) -> Result<(Vec<usize>, Vec<Vec<&'a str>>)> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{file}: missing header")))?
        .split(',')
        .collect();
    let idx = wanted
        .iter()
        .map(|w| {
            header
                .iter()
                .position(|h| h == w)
                .ok_or_else(|| Error::Config(format!("{file}: missing column {w}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').collect::<Vec<_>>())
        .collect::<Vec<_>>();
    if let Some(bad) = rows.iter().position(|r| r.len() != header.len()) {
        return Err(Error::Config(format!("{file}: row {} has the wrong width", bad + 1)));
    }
    Ok((idx, rows))
}

fn plot_trace(trace: &str) -> Result<String> {
    let (idx, rows) = csv_columns(
        trace,
        "trace.csv",
        &["label", "generation", "best_value", "moment_diagnostic"],
    )?;
    let mut s = format!("{PLOT_TRACE_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r[idx[0]], r[idx[1]], r[idx[2]], r[idx[3]]);
    }
    Ok(s)
}

fn read_outcomes(paths: &str) -> Result<Vec<f64>> {
    let (idx, rows) = csv_columns(paths, "paths.csv", &["terminal_money", "benchmark"])?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let x: f64 = r[idx[0]]
                .parse()
                .map_err(|_| Error::Config(format!("paths.csv: bad number on row {}", i + 1)))?;
            let w: f64 = r[idx[1]]
                .parse()
                .map_err(|_| Error::Config(format!("paths.csv: bad number on row {}", i + 1)))?;
            Ok(x - w)
        })
        .collect()
}

/// Empirical survival `P(side >= x)` at every distinct positive level of
/// the gains `(X - W)+` and losses `(X - W)-`, with its distortion.
fn plot_survival(outcomes: &[f64], cpt: &CptSpec) -> String {
    let mut s = format!("{PLOT_SURVIVAL_HEADER}\n");
    let n = outcomes.len() as f64;
    for (side, w, sign) in [("gain", &cpt.w_plus, 1.0), ("loss", &cpt.w_minus, -1.0)] {
        let mut v: Vec<f64> = outcomes
            .iter()
            .map(|&x| (sign * x).max(0.0))
            .filter(|&x| x > 0.0)
            .collect();
        v.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < v.len() {
            let surv = (v.len() - i) as f64 / n;
            let _ = writeln!(s, "{},{},{},{}", side, v[i], surv, w.eval(surv));
            let x = v[i];
            while i < v.len() && v[i] == x {
                i += 1;
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUADRATIC: &str = r#"
[grid]
n_steps = 8

[process]
kind = "brownian_drift"
start = [0.0]
drift = [1.0]
volatility = [0.0]

[price_map]
kind = "affine_of_first_coordinate"
base = 1.0
scale = 1.0

[benchmark]
kind = "zero"

[friction]
alpha = 2.0
h = { kind = "constant", lambda = 0.5 }

[cpt]
u_plus = { form = "power", scale = 1.0, exponent = 1.0 }
u_minus = { form = "power", scale = 1.0, exponent = 1.0 }
w_plus = { form = "identity" }
w_minus = { form = "identity" }

[strategy]
kind = "open_loop"

[optimizer]
generations = 5
n_paths = 1
population = 8
bootstrap = 0

[run]
seed = 3
diagnostic_paths = 16
"#;

    #[test]
    fn config_round_trip() {
        let cfg = ExperimentConfig::from_toml_str(QUADRATIC).unwrap();
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn alpha_below_one_names_the_field() {
        let text = QUADRATIC.replace("alpha = 2.0", "alpha = 0.9");
        let err = ExperimentConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpha must exceed 1"), "{msg}");
        assert!(msg.contains("friction.alpha"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = QUADRATIC.replace("[run]", "[run]\nsede = 4");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn survival_identity_distortion() {
        let s = plot_survival(&[1.0, -2.0, 1.0, 3.0, 0.0], &CptSpec::expectation());
        let rows: Vec<&str> = s.lines().skip(1).collect();
        assert_eq!(rows, ["gain,1,0.6,0.6", "gain,3,0.2,0.2", "loss,2,0.2,0.2"]);
    }

    #[test]
    fn empty_trace_gives_header_only() {
        assert_eq!(
            plot_trace(&format!("{TRACE_HEADER}\n")).unwrap(),
            format!("{PLOT_TRACE_HEADER}\n")
        );
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"x\n").unwrap();
        write_atomic(&p, b"y\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "y\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
