//! Rolling-window protocol over streams, models and dataset variants.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_std, rmse, rrmse};
use crate::baselines::{ForecasterSpec, ModelId};
use crate::error::{Error, Result};
use crate::features::{fit_minmax, FeatureMatrix, FeatureSet, FeatureSpec};
use crate::importance::{
    fit_regression_forest, gd_importance, mdi_importance, ForestConfig, ImportanceMethod, ImportanceVector,
    DEFAULT_GD_ITERATIONS, DEFAULT_GD_LEARNING_RATE,
};
use crate::lob::LobEvent;
use crate::seed::{mix_seed, run_seed};

/// Feature set plus optional importance weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatasetVariant {
    Simple,
    SimpleMdi,
    SimpleGd,
    Exte,
    ExteMdi,
    ExteGd,
}

impl DatasetVariant {
    pub const ALL: [Self; 6] = [
        Self::Simple,
        Self::SimpleMdi,
        Self::SimpleGd,
        Self::Exte,
        Self::ExteMdi,
        Self::ExteGd,
    ];

    pub fn new(set: FeatureSet, method: Option<ImportanceMethod>) -> Self {
        use ImportanceMethod::*;
        match (set, method) {
            (FeatureSet::Simple, None) => Self::Simple,
            (FeatureSet::Simple, Some(Mdi)) => Self::SimpleMdi,
            (FeatureSet::Simple, Some(Gd)) => Self::SimpleGd,
            (FeatureSet::Extended, None) => Self::Exte,
            (FeatureSet::Extended, Some(Mdi)) => Self::ExteMdi,
            (FeatureSet::Extended, Some(Gd)) => Self::ExteGd,
        }
    }

    pub fn feature_set(&self) -> FeatureSet {
        match self {
            Self::Simple | Self::SimpleMdi | Self::SimpleGd => FeatureSet::Simple,
            _ => FeatureSet::Extended,
        }
    }

    pub fn importance(&self) -> Option<ImportanceMethod> {
        match self {
            Self::SimpleMdi | Self::ExteMdi => Some(ImportanceMethod::Mdi),
            Self::SimpleGd | Self::ExteGd => Some(ImportanceMethod::Gd),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Simple => "Simple",
            Self::SimpleMdi => "SimpleMDI",
            Self::SimpleGd => "SimpleGD",
            Self::Exte => "Exte",
            Self::ExteMdi => "ExteMDI",
            Self::ExteGd => "ExteGD",
        }
    }
}

impl fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown feature set id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// Sequence number of the forecast event.
    pub seq: u64,
    pub model: ModelId,
    pub variant: DatasetVariant,
    pub prediction: f64,
    pub realized: f64,
}

/// Runs one forecaster over `events`. The forecast of event `i` is made after
/// observing events `0..i`; the first `spec.window` events are warm-up and
/// are not scored.
pub fn run_cell(
    events: &[LobEvent],
    model: ModelId,
    variant: DatasetVariant,
    spec: &ForecasterSpec,
    seed: u64,
) -> Result<Vec<ForecastRecord>> {
    if spec.features.set != variant.feature_set() {
        return Err(Error::InvalidConfig(format!(
            "feature spec {} does not match variant {variant}",
            spec.features.set
        )));
    }
    if spec.importance.as_ref().map(|fi| fi.method) != variant.importance() {
        return Err(Error::InvalidConfig(format!(
            "importance weights do not match variant {variant}"
        )));
    }
    let warmup = spec.window;
    if events.len() < warmup + 2 {
        return Err(Error::TooFewSamples {
            needed: warmup + 2,
            got: events.len(),
        });
    }
    let mut forecaster = spec.build(model, seed)?;
    let mut records = Vec::with_capacity(events.len() - warmup);
    let mut forecast = None;
    for (i, event) in events.iter().enumerate() {
        if i >= warmup {
            let prediction = forecast.ok_or(Error::EmptyInput("no forecast after warm-up"))?;
            records.push(ForecastRecord {
                seq: event.seq,
                model,
                variant,
                prediction,
                realized: event.mid_price(),
            });
        }
        let raw = spec.features.compute(event)?;
        forecaster.observe(event, &raw.values)?;
        if i + 1 >= warmup && i + 1 < events.len() {
            let p = forecaster.predict_next()?;
            if !p.is_finite() {
                return Err(Error::NonFinite("forecast"));
            }
            forecast = Some(p);
        }
    }
    Ok(records)
}

/// `(rmse, rrmse)` of a record sequence.
pub fn score(records: &[ForecastRecord]) -> Result<(f64, f64)> {
    let pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.prediction, r.realized)).collect();
    Ok((rmse(&pairs)?, rrmse(&pairs)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub stock: String,
    pub model: ModelId,
    pub variant: DatasetVariant,
    pub run: usize,
    pub rmse: f64,
    pub rrmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockSummary {
    pub stock: String,
    pub model: ModelId,
    pub variant: DatasetVariant,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub rrmse_mean: f64,
    pub rrmse_std: f64,
    pub n_runs: usize,
    pub n_events: usize,
}

/// Mean and sample standard deviation over runs of one cell.
pub fn summarize(runs: &[RunResult], n_events: usize) -> Result<StockSummary> {
    let first = runs.first().ok_or(Error::EmptyInput("summary of no runs"))?;
    let r: Vec<f64> = runs.iter().map(|x| x.rmse).collect();
    let rr: Vec<f64> = runs.iter().map(|x| x.rrmse).collect();
    let (rmse_mean, rmse_std) = mean_std(&r)?;
    let (rrmse_mean, rrmse_std) = mean_std(&rr)?;
    Ok(StockSummary {
        stock: first.stock.clone(),
        model: first.model,
        variant: first.variant,
        rmse_mean,
        rmse_std,
        rrmse_mean,
        rrmse_std,
        n_runs: runs.len(),
        n_events,
    })
}

/// `n_runs` repetitions of one cell, run `r` seeded from
/// `(master_seed, r, stock)`.
pub fn run_experiment(
    events: &[LobEvent],
    stock: &str,
    model: ModelId,
    variant: DatasetVariant,
    spec: &ForecasterSpec,
    n_runs: usize,
    master_seed: u64,
) -> Result<(Vec<RunResult>, StockSummary)> {
    if n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
    }
    let runs = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let seed = run_seed(master_seed, run as u64, stock);
            let records = run_cell(events, model, variant, spec, seed)?;
            let (rmse, rrmse) = score(&records)?;
            Ok(RunResult {
                stock: stock.to_string(),
                model,
                variant,
                run,
                rmse,
                rrmse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&runs, events.len())?;
    Ok((runs, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub forest: ForestConfig,
    pub gd_eta: f64,
    pub gd_iterations: usize,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            gd_eta: DEFAULT_GD_LEARNING_RATE,
            gd_iterations: DEFAULT_GD_ITERATIONS,
        }
    }
}

/// Min-max scaled features of every event but the last, and the next
/// event's mid as the target.
pub fn importance_training_set(events: &[LobEvent], spec: &FeatureSpec) -> Result<(FeatureMatrix, Vec<f64>)> {
    if events.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: events.len(),
        });
    }
    let raw = spec.matrix(&events[..events.len() - 1])?;
    let scaled = fit_minmax(&raw)?.apply_matrix(&raw)?;
    let y = events[1..].iter().map(LobEvent::mid_price).collect();
    Ok((scaled, y))
}

pub fn compute_importance(
    events: &[LobEvent],
    spec: &FeatureSpec,
    method: ImportanceMethod,
    cfg: &ImportanceConfig,
    seed: u64,
) -> Result<ImportanceVector> {
    let (x, y) = importance_training_set(events, spec)?;
    match method {
        ImportanceMethod::Mdi => Ok(mdi_importance(&fit_regression_forest(&x, &y, &cfg.forest, seed)?)),
        ImportanceMethod::Gd => gd_importance(&x, &y, cfg.gd_eta, cfg.gd_iterations),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stock {
    pub id: String,
    pub events: Vec<LobEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub feature_sets: Vec<FeatureSet>,
    /// `None` is the unweighted variant.
    pub importance: Vec<Option<ImportanceMethod>>,
    pub models: Vec<ModelId>,
    pub n_runs: usize,
    pub master_seed: u64,
    /// Leading events used only to estimate importance; every cell is
    /// evaluated on the events after it.
    pub calibration_prefix: usize,
    pub importance_cfg: ImportanceConfig,
    /// Model settings; the feature spec and importance are set per cell.
    pub base: ForecasterSpec,
}

impl GridConfig {
    pub fn variants(&self) -> Vec<DatasetVariant> {
        let mut v: Vec<DatasetVariant> = self
            .feature_sets
            .iter()
            .flat_map(|&s| self.importance.iter().map(move |&m| DatasetVariant::new(s, m)))
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub stock: String,
    pub variant: DatasetVariant,
    pub names: Vec<&'static str>,
    pub scores: ImportanceVector,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridOutput {
    pub results: Vec<RunResult>,
    pub summaries: Vec<StockSummary>,
    pub importances: Vec<ImportanceReport>,
}

/// Seed of the importance estimate for one stock and method.
pub fn importance_seed(master_seed: u64, stock: &str, method: ImportanceMethod) -> u64 {
    mix_seed(run_seed(master_seed, u64::MAX, stock), method as u64)
}

/// Every (stock, variant, model) cell with `n_runs` repetitions. Output
/// order is fixed (stock, variant, model, run) regardless of scheduling.
pub fn run_grid(stocks: &[Stock], grid: &GridConfig) -> Result<GridOutput> {
    if grid.n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
    }
    let variants = grid.variants();
    let mut cells = Vec::new();
    let mut importances = Vec::new();
    for stock in stocks {
        let prefix = grid.calibration_prefix;
        if stock.events.len() < prefix + grid.base.window + 2 {
            return Err(Error::Cell {
                cell: stock.id.clone(),
                source: Box::new(Error::TooFewSamples {
                    needed: prefix + grid.base.window + 2,
                    got: stock.events.len(),
                }),
            });
        }
        let (calibration, evaluation) = stock.events.split_at(prefix);
        for &variant in &variants {
            let mut features = grid.base.features;
            features.set = variant.feature_set();
            let importance = match variant.importance() {
                None => None,
                Some(method) => {
                    let seed = importance_seed(grid.master_seed, &stock.id, method);
                    let fi = compute_importance(calibration, &features, method, &grid.importance_cfg, seed).map_err(
                        |e| Error::Cell {
                            cell: format!("{}/{variant}/importance", stock.id),
                            source: Box::new(e),
                        },
                    )?;
                    importances.push(ImportanceReport {
                        stock: stock.id.clone(),
                        variant,
                        names: features.names(),
                        scores: fi.clone(),
                    });
                    Some(fi)
                }
            };
            let spec = ForecasterSpec {
                features,
                importance,
                ..grid.base.clone()
            };
            for &model in &grid.models {
                cells.push((stock, evaluation, variant, model, spec.clone()));
            }
        }
    }
    let done = cells
        .par_iter()
        .map(|(stock, events, variant, model, spec)| {
            run_experiment(events, &stock.id, *model, *variant, spec, grid.n_runs, grid.master_seed).map_err(|e| {
                Error::Cell {
                    cell: format!("{}/{variant}/{model}", stock.id),
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = GridOutput {
        importances,
        ..Default::default()
    };
    for (runs, summary) in done {
        out.results.extend(runs);
        out.summaries.push(summary);
    }
    Ok(out)
}
