use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use alpe_core::eval::experiment::{compute_importance, importance_seed, run_grid, Stock};
use alpe_core::eval::report::{
    error_reductions, read_stocks_csv, read_summary_csv, variant_significance, write_error_reduction_csv,
    write_friedman_csv, write_results_csv, write_significance_csv, write_stocks_csv, write_summary_csv,
    write_summary_table, write_volume_profile_csv,
};
use alpe_core::eval::{volume_profile, StockInfo, SummaryRow};
use alpe_core::features::FeatureSet;
use alpe_core::importance::{ImportanceMethod, ImportanceVector};
use alpe_core::lob::{generate_synthetic_stream, parse_lob_csv, write_lob_csv};
use alpe_core::DatasetVariant;

use crate::config::{InputSource, RunConfig};
use crate::CliError;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn output_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    Ok(&cfg.output_dir)
}

/// Tags a data error with the file or stock it came from.
fn in_context(what: &str, e: alpe_core::Error) -> CliError {
    match CliError::from(e) {
        CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
        CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
        CliError::Internal(m) => CliError::Internal(format!("{what}: {m}")),
    }
}

fn synthetic_id(i: usize) -> String {
    format!("SYN{i:02}")
}

/// Every configured stream, in configuration order.
pub fn load_stocks(cfg: &RunConfig) -> Result<Vec<Stock>, CliError> {
    match &cfg.input {
        InputSource::Files(paths) => paths
            .iter()
            .map(|path| {
                let id = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| CliError::Config(format!("bad input path {}", path.display())))?
                    .to_string();
                let events = parse_lob_csv(open(path)?, cfg.invalid_rows)
                    .map_err(|e| in_context(&path.display().to_string(), e))?;
                Ok(Stock { id, events })
            })
            .collect(),
        InputSource::Synthetic { cfg: synth, n_stocks } => (0..*n_stocks)
            .map(|i| {
                let mut c = synth.clone();
                c.seed = synth.seed.wrapping_add(i as u64);
                Ok(Stock {
                    id: synthetic_id(i),
                    events: generate_synthetic_stream(&c)?,
                })
            })
            .collect(),
    }
}

/// Writes `<out>/<id>.csv` per synthetic stock.
pub fn cmd_gen_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    if !matches!(cfg.input, InputSource::Synthetic { .. }) {
        return Err(CliError::Config("gen-synth needs `input.source = synthetic`".into()));
    }
    let stocks = load_stocks(cfg)?;
    let dir = output_dir(cfg)?;
    let mut written = Vec::new();
    for stock in &stocks {
        let path = dir.join(format!("{}.csv", stock.id));
        write_lob_csv(create(&path)?, &stock.events)?;
        written.push(path);
    }
    Ok(written)
}

fn importance_file(dir: &Path, stock: &str, set: FeatureSet, method: ImportanceMethod) -> PathBuf {
    dir.join(format!(
        "importance_{stock}_{}_{}.csv",
        set.to_string().to_lowercase(),
        method.to_string().to_lowercase()
    ))
}

fn write_importance(path: &Path, names: &[&str], scores: &ImportanceVector) -> Result<(), CliError> {
    scores.write_csv(create(path)?, names)?;
    Ok(())
}

/// Importance of every (stock, feature set, method) over the calibration prefix.
pub fn cmd_importance(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let methods = cfg.importance_methods();
    if methods.is_empty() {
        return Err(CliError::Config(
            "experiment.importance names no method (mdi, gd)".into(),
        ));
    }
    let stocks = load_stocks(cfg)?;
    let prefix = cfg.calibration_prefix;
    let dir = output_dir(cfg)?;
    let mut written = Vec::new();
    for stock in &stocks {
        if prefix < 3 || stock.events.len() < prefix {
            return Err(CliError::Data(format!(
                "{}: calibration prefix of {prefix} events is too short or longer than the stream ({} events)",
                stock.id,
                stock.events.len()
            )));
        }
        let calibration = &stock.events[..prefix];
        for &set in &cfg.feature_sets {
            let mut spec = cfg.features;
            spec.set = set;
            for &method in &methods {
                let seed = importance_seed(cfg.master_seed, &stock.id, method);
                let fi = compute_importance(calibration, &spec, method, &cfg.importance_cfg, seed)
                    .map_err(|e| in_context(&stock.id, e))?;
                let path = importance_file(dir, &stock.id, set, method);
                write_importance(&path, &spec.names(), &fi)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Runs the grid and writes every output file; returns the number of result rows.
pub fn cmd_run(cfg: &RunConfig) -> Result<usize, CliError> {
    let stocks = load_stocks(cfg)?;
    let dir = output_dir(cfg)?.to_path_buf();
    let out = run_grid(&stocks, &cfg.grid())?;

    write_results_csv(create(&dir.join("results.csv"))?, &out.results)?;
    let rows: Vec<SummaryRow> = out.summaries.iter().map(SummaryRow::from).collect();
    write_summary_csv(create(&dir.join("summary.csv"))?, &rows)?;
    write_summary_table(create(&dir.join("summary_table.csv"))?, &rows)?;
    let infos: Vec<StockInfo> = stocks
        .iter()
        .map(|s| StockInfo::from_events(&s.id, &s.events))
        .collect();
    write_stocks_csv(create(&dir.join("stocks.csv"))?, &infos)?;
    for rep in &out.importances {
        let method = rep
            .variant
            .importance()
            .ok_or_else(|| CliError::Internal("importance report for an unweighted variant".into()))?;
        let path = importance_file(&dir, &rep.stock, rep.variant.feature_set(), method);
        write_importance(&path, &rep.names, &rep.scores)?;
    }
    Ok(out.results.len())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
    /// Variants left out of the significance analysis, with the reason.
    pub notices: Vec<String>,
}

/// Reads `summary.csv` and `stocks.csv` from the output directory and writes
/// the significance, error-reduction and volume-profile tables next to them.
pub fn cmd_report(cfg: &RunConfig) -> Result<ReportOutcome, CliError> {
    let dir = cfg.output_dir.clone();
    let summary_path = dir.join("summary.csv");
    let rows =
        read_summary_csv(open(&summary_path)?).map_err(|e| in_context(&summary_path.display().to_string(), e))?;
    let stocks_path = dir.join("stocks.csv");
    let infos = read_stocks_csv(open(&stocks_path)?).map_err(|e| in_context(&stocks_path.display().to_string(), e))?;

    let mut outcome = ReportOutcome::default();
    let mut sigs = Vec::new();
    for variant in DatasetVariant::ALL {
        if !rows.iter().any(|r| r.variant == variant) {
            continue;
        }
        match variant_significance(&rows, variant)? {
            Ok(sig) => {
                let path = dir.join(format!("significance_{variant}.csv"));
                write_significance_csv(create(&path)?, &sig)?;
                outcome.files.push(path);
                sigs.push(sig);
            }
            Err(reason) => outcome
                .notices
                .push(format!("significance skipped for {variant}: {reason}")),
        }
    }
    let path = dir.join("friedman.csv");
    write_friedman_csv(create(&path)?, &sigs)?;
    outcome.files.push(path);

    let path = dir.join("error_reduction.csv");
    write_error_reduction_csv(create(&path)?, &error_reductions(&rows))?;
    outcome.files.push(path);

    let path = dir.join("volume_profile.csv");
    write_volume_profile_csv(create(&path)?, &volume_profile(&rows, &infos))?;
    outcome.files.push(path);
    Ok(outcome)
}
