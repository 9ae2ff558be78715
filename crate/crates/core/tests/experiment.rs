use std::path::Path;

use illiquid_cpt::experiment::{
    emit_plot_data, run_experiment, Command, ExperimentConfig, RunOptions, PLOT_SURVIVAL_HEADER, PLOT_TRACE_HEADER,
};
use illiquid_cpt::Error;

const QUADRATIC: &str = include_str!("../../../configs/quadratic.toml");

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.in.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

fn opts(out: &Path) -> RunOptions {
    RunOptions {
        out_dir: Some(out.to_path_buf()),
        ..RunOptions::default()
    }
}

#[test]
fn quadratic_run_reports_one_twenty_fourth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUADRATIC);
    let out = dir.path().join("out");
    let manifest = run_experiment(&cfg, Command::Optimize, &opts(&out)).unwrap();
    for f in [
        "summary.csv",
        "trace.csv",
        "paths.csv",
        "diagnostics.csv",
        "best_strategy.toml",
        "config.toml",
    ] {
        assert!(manifest.checksum(f).is_some(), "{f} missing from manifest");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let best: f64 = column(&summary, "best_value")[0].parse().unwrap();
    assert!((best * 24.0 - 1.0).abs() < 0.02, "{best}");

    let text = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(text.lines().all(|l| l.contains(": ")));
    assert!(text.contains(&format!(
        "file: summary.csv sha256={}",
        manifest.checksum("summary.csv").unwrap()
    )));
    assert!(!text.contains('\r'));

    // the strategy file parses back
    let best_strategy = std::fs::read_to_string(out.join("best_strategy.toml")).unwrap();
    let params: illiquid_cpt::portfolio::StrategyParams = toml::from_str(&best_strategy).unwrap();
    params.validate(64).unwrap();
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = QUADRATIC.replace("generations = 1000", "generations = 50");
    let cfg = write_config(dir.path(), &text);
    let a = run_experiment(&cfg, Command::Optimize, &opts(&dir.path().join("a"))).unwrap();
    let b = run_experiment(&cfg, Command::Optimize, &opts(&dir.path().join("b"))).unwrap();
    assert_eq!(a.files, b.files);
    assert_eq!(a.config_sha256, b.config_sha256);
    let c = run_experiment(
        &cfg,
        Command::Optimize,
        &RunOptions {
            seed: Some(99),
            ..opts(&dir.path().join("c"))
        },
    )
    .unwrap();
    assert_ne!(a.checksum("trace.csv"), c.checksum("trace.csv"));
}

#[test]
fn bad_alpha_is_rejected_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &QUADRATIC.replace("alpha = 2.0", "alpha = 0.9"));
    let out = dir.path().join("out");
    let err = run_experiment(&cfg, Command::Optimize, &opts(&out)).unwrap_err();
    assert!(err.to_string().contains("alpha must exceed 1"), "{err}");
    assert!(!out.exists());
}

#[test]
fn open_loop_with_initial_inventory_is_rejected() {
    let text = QUADRATIC.replace("diagnostic_paths = 64", "diagnostic_paths = 64\nz1 = 1.0");
    let err = ExperimentConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
    assert!(err.to_string().contains("run.z1"), "{err}");
}

fn ill_posed_config() -> String {
    include_str!("../../../configs/ill_posed.toml")
        .replace("generations = 40", "generations = 4")
        .replace("n_paths = 1024", "n_paths = 64")
        .replace("seed = 11", "seed = 11\ndiagnostic_paths = 64")
}

#[test]
fn ill_posed_needs_explicit_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &ill_posed_config());
    let out = dir.path().join("out");
    let err = run_experiment(&cfg, Command::Optimize, &opts(&out)).unwrap_err();
    assert!(matches!(err, Error::IllPosed(_)), "{err}");
    assert!(!out.exists());

    // diagnostics alone are always allowed
    let m = run_experiment(&cfg, Command::Check, &opts(&out)).unwrap();
    assert_eq!(m.verdict.to_string(), "FAIL");
    assert!(m.checksum("summary.csv").is_none());

    let m = run_experiment(
        &cfg,
        Command::Optimize,
        &RunOptions {
            allow_ill_posed: true,
            ..opts(&out)
        },
    )
    .unwrap();
    assert!(m.checksum("ill_posed_trend.csv").is_some());
    let trend = std::fs::read_to_string(out.join("ill_posed_trend.csv")).unwrap();
    assert_eq!(column(&trend, "rate_bound"), ["10", "100", "1000"]);
}

#[test]
fn plot_data_series() {
    let dir = tempfile::tempdir().unwrap();
    let text = QUADRATIC.replace("generations = 1000", "generations = 30");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    run_experiment(&cfg, Command::Optimize, &opts(&out)).unwrap();
    emit_plot_data(&out).unwrap();

    let trace = std::fs::read_to_string(out.join("plot_trace.csv")).unwrap();
    assert!(trace.starts_with(PLOT_TRACE_HEADER));
    assert_eq!(trace.lines().count() - 1, 30);

    // identity distortions: distorted survival equals survival
    let surv = std::fs::read_to_string(out.join("plot_survival.csv")).unwrap();
    assert!(surv.starts_with(PLOT_SURVIVAL_HEADER));
    assert_eq!(column(&surv, "survival"), column(&surv, "distorted_survival"));
}

#[test]
fn plot_data_reports_each_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.toml"), QUADRATIC).unwrap();
    let msg = emit_plot_data(dir.path()).unwrap_err().to_string();
    assert!(msg.contains("trace.csv") && msg.contains("paths.csv"), "{msg}");
    assert!(!msg.contains("config.toml"), "{msg}");
}

#[test]
fn compare_writes_both_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = include_str!("../../../configs/randomization.toml")
        .replace("generations = 150", "generations = 5")
        .replace("n_paths = 8192", "n_paths = 256");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let m = run_experiment(&cfg, Command::CompareRandomized, &opts(&out)).unwrap();
    assert_eq!(m.verdict.to_string(), "PASS");
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(column(&summary, "label"), ["deterministic", "randomized"]);
    assert_eq!(column(&summary, "strategy"), ["open_loop", "randomized_mixture"]);
    assert!(out.join("comparison.csv").is_file());
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    for text in [
        QUADRATIC,
        include_str!("../../../configs/gbm_concave.toml"),
        include_str!("../../../configs/randomization.toml"),
        include_str!("../../../configs/ill_posed.toml"),
    ] {
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}
