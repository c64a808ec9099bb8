use std::fs;
use std::path::Path;
use std::process::Command as Process;

use alpe_cli::{cmd_gen_synth, cmd_importance, cmd_report, cmd_run, CliError, RunConfig};
use alpe_core::eval::report::{
    read_error_reduction_csv, read_friedman_csv, read_results_csv, read_significance_csv, read_stocks_csv,
    read_summary_csv, read_summary_table, read_volume_profile_csv,
};
use alpe_core::importance::{ImportanceMethod, ImportanceVector};
use alpe_core::lob::{parse_lob_csv, InvalidRowPolicy};

fn config(dir: &Path, text: &str) -> RunConfig {
    RunConfig::parse(text, dir).unwrap()
}

const SMALL: &str = "synth.n_events = 160\n\
                     synth.n_stocks = 2\n\
                     experiment.calibration_prefix = 40\n\
                     experiment.n_runs = 2\n\
                     output.dir = out\n";

#[test]
fn gen_synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "synth.n_events = 10000\nsynth.seed = 3\noutput.dir = a\n");
    let a = cmd_gen_synth(&cfg).unwrap();
    let cfg_b = config(dir.path(), "synth.n_events = 10000\nsynth.seed = 3\noutput.dir = b\n");
    let b = cmd_gen_synth(&cfg_b).unwrap();
    assert_eq!(a.len(), 1);
    assert_eq!(fs::read(&a[0]).unwrap(), fs::read(&b[0]).unwrap());
    let events = parse_lob_csv(fs::File::open(&a[0]).unwrap(), InvalidRowPolicy::Reject).unwrap();
    assert_eq!(events.len(), 10_000);
}

#[test]
fn gen_synth_rejects_sub_tick_spread() {
    let r = RunConfig::parse("synth.spread_mean = 0.004\nsynth.tick_size = 0.01\n", Path::new("."));
    assert!(matches!(r, Err(CliError::Config(_))));
}

fn constant_stream(path: &Path, n: usize) {
    let mut s = String::from("seq,ts,ask_px,ask_vol,bid_px,bid_vol\n");
    for i in 0..n {
        s.push_str(&format!("{i},{i},100.01,50,99.99,40\n"));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn importance_on_constant_stream_sits_at_the_floor() {
    let dir = tempfile::tempdir().unwrap();
    constant_stream(&dir.path().join("FLAT.csv"), 60);
    let cfg = config(
        dir.path(),
        "input.paths = FLAT.csv\nexperiment.calibration_prefix = 50\noutput.dir = out\n",
    );
    let files = cmd_importance(&cfg).unwrap();
    assert_eq!(files.len(), 4);
    for f in &files {
        let name = f.file_name().unwrap().to_str().unwrap();
        let (method, expected) = if name.ends_with("_mdi.csv") {
            (ImportanceMethod::Mdi, 0.001)
        } else {
            (ImportanceMethod::Gd, 1.001)
        };
        let (names, fi) = ImportanceVector::read_csv(fs::File::open(f).unwrap(), method).unwrap();
        let dim = if name.contains("_simple_") { 4 } else { 12 };
        assert_eq!(names.len(), dim, "{name}");
        assert!(fi.scores.iter().all(|&s| s == expected), "{name}: {:?}", fi.scores);
    }
}

#[test]
fn importance_needs_a_prefix() {
    let dir = tempfile::tempdir().unwrap();
    constant_stream(&dir.path().join("FLAT.csv"), 20);
    let cfg = config(
        dir.path(),
        "input.paths = FLAT.csv\nexperiment.calibration_prefix = 50\n",
    );
    assert!(matches!(cmd_importance(&cfg), Err(CliError::Data(_))));
}

#[test]
fn run_cardinality_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "synth.n_events = 160\nexperiment.calibration_prefix = 40\nexperiment.models = naive, mlp\noutput.dir = out\n",
    );
    assert_eq!(cmd_run(&cfg).unwrap(), 120);
    let out = dir.path().join("out");
    let open = |f: &str| fs::File::open(out.join(f)).unwrap();
    assert_eq!(read_results_csv(open("results.csv")).unwrap().len(), 120);
    let summary = read_summary_csv(open("summary.csv")).unwrap();
    assert_eq!(summary.len(), 12);
    let table = read_summary_table(open("summary_table.csv")).unwrap();
    assert_eq!(table.len(), 12);
    for (a, b) in summary.iter().zip(&table) {
        assert_eq!(a, b);
    }
    assert_eq!(read_stocks_csv(open("stocks.csv")).unwrap().len(), 1);
    let (names, _) = ImportanceVector::read_csv(open("importance_SYN00_exte_mdi.csv"), ImportanceMethod::Mdi).unwrap();
    assert_eq!(names.len(), 12);
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let a = config(dir.path(), &SMALL.replace("output.dir = out", "output.dir = a"));
    let b = config(dir.path(), &SMALL.replace("output.dir = out", "output.dir = b"));
    cmd_run(&a).unwrap();
    cmd_run(&b).unwrap();
    for f in ["results.csv", "summary.csv", "summary_table.csv", "stocks.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn report_outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    cmd_run(&cfg).unwrap();
    let outcome = cmd_report(&cfg).unwrap();
    assert!(outcome.notices.is_empty(), "{:?}", outcome.notices);
    let out = dir.path().join("out");
    let open = |f: &str| fs::File::open(out.join(f)).unwrap();
    let sig = read_significance_csv(open("significance_ExteGD.csv")).unwrap();
    assert_eq!(sig.len(), 6);
    assert!(sig.iter().all(|(_, _, p)| (0.0..=1.0).contains(p)));
    assert_eq!(read_friedman_csv(open("friedman.csv")).unwrap().len(), 6);
    assert_eq!(read_error_reduction_csv(open("error_reduction.csv")).unwrap().len(), 48);
    assert_eq!(read_volume_profile_csv(open("volume_profile.csv")).unwrap().len(), 2);
}

fn write_summary(out: &Path, rows: &[&str]) {
    fs::create_dir_all(out).unwrap();
    let mut s = String::from("stock,model,feature_set,rmse_mean,rmse_std,rrmse_mean,rrmse_std\n");
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    fs::write(out.join("summary.csv"), s).unwrap();
    fs::write(
        out.join("stocks.csv"),
        "stock,n_events,mean_volume\nAMZN,10,1.000E+02\n",
    )
    .unwrap();
}

#[test]
fn report_skips_single_model_and_computes_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    write_summary(
        &out,
        &[
            "AMZN,naive,Simple,6.020E-01,0.000E+00,5.287E-03,0.000E+00",
            "MSFT,naive,Simple,1.000E-01,0.000E+00,1.000E-03,0.000E+00",
        ],
    );
    let cfg = config(dir.path(), "output.dir = out\n");
    let outcome = cmd_report(&cfg).unwrap();
    assert_eq!(outcome.notices.len(), 1);
    assert!(outcome.notices[0].contains("Simple"));
    let rows = read_error_reduction_csv(fs::File::open(out.join("error_reduction.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!((rows[0].pct.unwrap() - 99.12).abs() <= 0.01);
    assert!(!out.join("significance_Simple.csv").exists());
}

#[test]
fn report_rejects_malformed_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    write_summary(&out, &["AMZN,naive,Simple,-1,0,0.1,0"]);
    let cfg = config(dir.path(), "output.dir = out\n");
    assert!(matches!(cmd_report(&cfg), Err(CliError::Data(_))));
}

fn alpe(args: &[&str]) -> i32 {
    Process::new(env!("CARGO_BIN_EXE_alpe"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    let cfg = cfg_path.to_str().unwrap();

    fs::write(&cfg_path, "input.paths = missing.csv\n").unwrap();
    assert_eq!(alpe(&["--config", cfg, "run"]), 2);

    fs::write(&cfg_path, "experiment.modles = naive\n").unwrap();
    assert_eq!(alpe(&["--config", cfg, "run"]), 2);

    fs::write(
        dir.path().join("bad.csv"),
        "seq,ts,ask_px,ask_vol,bid_px,bid_vol\n0,0,99,1,100,1\n",
    )
    .unwrap();
    fs::write(&cfg_path, "input.paths = bad.csv\n").unwrap();
    assert_eq!(alpe(&["--config", cfg, "run"]), 3);

    fs::write(&cfg_path, "synth.n_events = 50\n").unwrap();
    let out = dir.path().join("synth");
    assert_eq!(
        alpe(&[
            "--config",
            cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "9",
            "gen-synth"
        ]),
        0
    );
    assert!(out.join("SYN00.csv").exists());
}
