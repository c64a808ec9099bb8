//! CSV readers and writers for results, summaries and report tables.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::experiment::{DatasetVariant, RunResult, StockSummary};
use super::metrics::error_reduction_pct;
use super::stats::{conover_posthoc, SignificanceReport};
use crate::baselines::ModelId;
use crate::error::{Error, Result};
use crate::lob::LobEvent;

pub const RESULTS_HEADER: [&str; 6] = ["stock", "model", "feature_set", "run", "rmse", "rrmse"];
pub const SUMMARY_HEADER: [&str; 7] = [
    "stock",
    "model",
    "feature_set",
    "rmse_mean",
    "rmse_std",
    "rrmse_mean",
    "rrmse_std",
];
pub const SIGNIFICANCE_HEADER: [&str; 3] = ["model_a", "model_b", "p_adjusted"];
pub const STOCKS_HEADER: [&str; 3] = ["stock", "n_events", "mean_volume"];

/// Scientific notation with four significant digits and a signed two-digit
/// exponent, e.g. `6.020E-01`.
pub fn sci4(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{x:.3e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}E{sign}{:02}", exp.abs())
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(Error::BadHeader {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(row: usize, field: &'static str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::MalformedField {
        row,
        field,
        value: value.to_string(),
    })
}

pub fn write_results_csv<W: Write>(w: W, results: &[RunResult]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(RESULTS_HEADER)?;
    for r in results {
        wtr.write_record([
            r.stock.clone(),
            r.model.to_string(),
            r.variant.to_string(),
            r.run.to_string(),
            sci4(r.rmse),
            sci4(r.rrmse),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<RunResult>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &RESULTS_HEADER)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(RunResult {
            stock: rec[0].to_string(),
            model: parse(row, "model", &rec[1])?,
            variant: parse(row, "feature_set", &rec[2])?,
            run: parse(row, "run", &rec[3])?,
            rmse: parse(row, "rmse", &rec[4])?,
            rrmse: parse(row, "rrmse", &rec[5])?,
        });
    }
    Ok(out)
}

/// One line of the summary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub stock: String,
    pub model: ModelId,
    pub variant: DatasetVariant,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub rrmse_mean: f64,
    pub rrmse_std: f64,
}

impl From<&StockSummary> for SummaryRow {
    fn from(s: &StockSummary) -> Self {
        Self {
            stock: s.stock.clone(),
            model: s.model,
            variant: s.variant,
            rmse_mean: s.rmse_mean,
            rmse_std: s.rmse_std,
            rrmse_mean: s.rrmse_mean,
            rrmse_std: s.rrmse_std,
        }
    }
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(SUMMARY_HEADER)?;
    for r in rows {
        wtr.write_record([
            r.stock.clone(),
            r.model.to_string(),
            r.variant.to_string(),
            sci4(r.rmse_mean),
            sci4(r.rmse_std),
            sci4(r.rrmse_mean),
            sci4(r.rrmse_std),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(r: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &SUMMARY_HEADER)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize, field: &'static str| -> Result<f64> {
            let v: f64 = parse(row, field, &rec[i])?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(Error::MalformedField {
                    row,
                    field,
                    value: rec[i].to_string(),
                })
            }
        };
        out.push(SummaryRow {
            stock: rec[0].to_string(),
            model: parse(row, "model", &rec[1])?,
            variant: parse(row, "feature_set", &rec[2])?,
            rmse_mean: num(3, "rmse_mean")?,
            rmse_std: num(4, "rmse_std")?,
            rrmse_mean: num(5, "rrmse_mean")?,
            rrmse_std: num(6, "rrmse_std")?,
        });
    }
    Ok(out)
}

/// `mean ± std` table, one line per (stock, model, feature set).
pub fn write_summary_table<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["stock", "model", "feature_set", "rmse", "rrmse"])?;
    for r in rows {
        wtr.write_record([
            r.stock.clone(),
            r.model.to_string(),
            r.variant.to_string(),
            format!("{} ± {}", sci4(r.rmse_mean), sci4(r.rmse_std)),
            format!("{} ± {}", sci4(r.rrmse_mean), sci4(r.rrmse_std)),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Significance analysis of one dataset variant: stocks are blocks, models
/// are treatments, mean RMSE is the score.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSignificance {
    pub variant: DatasetVariant,
    pub models: Vec<ModelId>,
    pub stocks: Vec<String>,
    pub report: SignificanceReport,
}

/// Why a variant was left out of the significance analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    TooFewModels(usize),
    TooFewStocks(usize),
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::TooFewModels(k) => write!(f, "{k} model(s); at least 2 are needed"),
            Self::TooFewStocks(n) => write!(f, "{n} stock(s) with every model; at least 2 are needed"),
        }
    }
}

pub fn variant_significance(
    rows: &[SummaryRow],
    variant: DatasetVariant,
) -> Result<std::result::Result<VariantSignificance, SkipReason>> {
    let rows: Vec<&SummaryRow> = rows.iter().filter(|r| r.variant == variant).collect();
    let mut models: Vec<ModelId> = rows.iter().map(|r| r.model).collect();
    models.sort();
    models.dedup();
    if models.len() < 2 {
        return Ok(Err(SkipReason::TooFewModels(models.len())));
    }
    let mut stocks: Vec<String> = Vec::new();
    for r in &rows {
        if !stocks.contains(&r.stock) {
            stocks.push(r.stock.clone());
        }
    }
    let mut matrix = Vec::new();
    let mut kept = Vec::new();
    for s in stocks {
        let row: Option<Vec<f64>> = models
            .iter()
            .map(|m| rows.iter().find(|r| r.stock == s && r.model == *m).map(|r| r.rmse_mean))
            .collect();
        if let Some(row) = row {
            matrix.push(row);
            kept.push(s);
        }
    }
    if kept.len() < 2 {
        return Ok(Err(SkipReason::TooFewStocks(kept.len())));
    }
    let report = conover_posthoc(&matrix)?;
    Ok(Ok(VariantSignificance {
        variant,
        models,
        stocks: kept,
        report,
    }))
}

pub fn write_significance_csv<W: Write>(w: W, sig: &VariantSignificance) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(SIGNIFICANCE_HEADER)?;
    for i in 0..sig.models.len() {
        for j in i + 1..sig.models.len() {
            let p = sig.report.p_adjusted[i][j].expect("off-diagonal entry");
            wtr.write_record([sig.models[i].to_string(), sig.models[j].to_string(), sci4(p)])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_significance_csv<R: Read>(r: R) -> Result<Vec<(ModelId, ModelId, f64)>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &SIGNIFICANCE_HEADER)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push((
            parse(row, "model_a", &rec[0])?,
            parse(row, "model_b", &rec[1])?,
            parse(row, "p_adjusted", &rec[2])?,
        ));
    }
    Ok(out)
}

pub fn write_friedman_csv<W: Write>(w: W, sigs: &[VariantSignificance]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["feature_set", "n_stocks", "n_models", "statistic", "p_value"])?;
    for s in sigs {
        let f = &s.report.friedman;
        wtr.write_record([
            s.variant.to_string(),
            f.n_blocks.to_string(),
            f.n_models.to_string(),
            sci4(f.statistic),
            sci4(f.p_value),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Error reduction of every summary line; `None` where the RMSE is zero.
pub fn error_reductions(rows: &[SummaryRow]) -> Vec<(SummaryRow, Option<f64>)> {
    rows.iter()
        .map(|r| (r.clone(), error_reduction_pct(r.rmse_mean, r.rrmse_mean).ok()))
        .collect()
}

pub fn write_error_reduction_csv<W: Write>(w: W, rows: &[(SummaryRow, Option<f64>)]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["stock", "model", "feature_set", "rmse", "rrmse", "error_reduction_pct"])?;
    for (r, pct) in rows {
        wtr.write_record([
            r.stock.clone(),
            r.model.to_string(),
            r.variant.to_string(),
            sci4(r.rmse_mean),
            sci4(r.rrmse_mean),
            pct.map_or_else(|| "NA".to_string(), |p| format!("{p:.2}")),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-stock descriptive data used by the volume profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockInfo {
    pub stock: String,
    pub n_events: usize,
    /// Mean of `ask_vol + bid_vol` per event.
    pub mean_volume: f64,
}

impl StockInfo {
    pub fn from_events(stock: &str, events: &[LobEvent]) -> Self {
        let total: f64 = events.iter().map(|e| e.ask_volume + e.bid_volume).sum();
        Self {
            stock: stock.to_string(),
            n_events: events.len(),
            mean_volume: if events.is_empty() {
                0.0
            } else {
                total / events.len() as f64
            },
        }
    }
}

pub fn write_stocks_csv<W: Write>(w: W, stocks: &[StockInfo]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(STOCKS_HEADER)?;
    for s in stocks {
        wtr.write_record([s.stock.clone(), s.n_events.to_string(), sci4(s.mean_volume)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_stocks_csv<R: Read>(r: R) -> Result<Vec<StockInfo>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &STOCKS_HEADER)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(StockInfo {
            stock: rec[0].to_string(),
            n_events: parse(row, "n_events", &rec[1])?,
            mean_volume: parse(row, "mean_volume", &rec[2])?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeProfileRow {
    pub stock: String,
    pub volume: f64,
    pub best_variant: DatasetVariant,
}

/// Tags each stock with the variant giving the lowest ALPE rrmse. Ties go
/// to the earlier variant in `DatasetVariant::ALL` order. Stocks without
/// ALPE summaries or volume data are left out.
pub fn volume_profile(rows: &[SummaryRow], volumes: &[StockInfo]) -> Vec<VolumeProfileRow> {
    let mut out = Vec::new();
    for info in volumes {
        let best = rows
            .iter()
            .filter(|r| r.stock == info.stock && r.model == ModelId::Alpe)
            .min_by(|a, b| a.rrmse_mean.total_cmp(&b.rrmse_mean).then(a.variant.cmp(&b.variant)));
        if let Some(best) = best {
            out.push(VolumeProfileRow {
                stock: info.stock.clone(),
                volume: info.mean_volume,
                best_variant: best.variant,
            });
        }
    }
    out
}

pub fn write_volume_profile_csv<W: Write>(w: W, rows: &[VolumeProfileRow]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["stock", "volume", "best_feature_set"])?;
    for r in rows {
        wtr.write_record([r.stock.clone(), sci4(r.volume), r.best_variant.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a `mean ± std` table back into summary rows.
pub fn read_summary_table<R: Read>(r: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &["stock", "model", "feature_set", "rmse", "rrmse"])?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let pm = |i: usize, field: &'static str| -> Result<(f64, f64)> {
            let malformed = || Error::MalformedField {
                row,
                field,
                value: rec[i].to_string(),
            };
            let (m, s) = rec[i].split_once(" ± ").ok_or_else(malformed)?;
            Ok((m.parse().map_err(|_| malformed())?, s.parse().map_err(|_| malformed())?))
        };
        let (rmse_mean, rmse_std) = pm(3, "rmse")?;
        let (rrmse_mean, rrmse_std) = pm(4, "rrmse")?;
        out.push(SummaryRow {
            stock: rec[0].to_string(),
            model: parse(row, "model", &rec[1])?,
            variant: parse(row, "feature_set", &rec[2])?,
            rmse_mean,
            rmse_std,
            rrmse_mean,
            rrmse_std,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanRow {
    pub variant: DatasetVariant,
    pub n_stocks: usize,
    pub n_models: usize,
    pub statistic: f64,
    pub p_value: f64,
}

pub fn read_friedman_csv<R: Read>(r: R) -> Result<Vec<FriedmanRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(
        &mut rdr,
        &["feature_set", "n_stocks", "n_models", "statistic", "p_value"],
    )?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(FriedmanRow {
            variant: parse(row, "feature_set", &rec[0])?,
            n_stocks: parse(row, "n_stocks", &rec[1])?,
            n_models: parse(row, "n_models", &rec[2])?,
            statistic: parse(row, "statistic", &rec[3])?,
            p_value: parse(row, "p_value", &rec[4])?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReductionRow {
    pub stock: String,
    pub model: ModelId,
    pub variant: DatasetVariant,
    pub rmse: f64,
    pub rrmse: f64,
    pub pct: Option<f64>,
}

pub fn read_error_reduction_csv<R: Read>(r: R) -> Result<Vec<ErrorReductionRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(
        &mut rdr,
        &["stock", "model", "feature_set", "rmse", "rrmse", "error_reduction_pct"],
    )?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(ErrorReductionRow {
            stock: rec[0].to_string(),
            model: parse(row, "model", &rec[1])?,
            variant: parse(row, "feature_set", &rec[2])?,
            rmse: parse(row, "rmse", &rec[3])?,
            rrmse: parse(row, "rrmse", &rec[4])?,
            pct: match &rec[5] {
                "NA" => None,
                v => Some(parse(row, "error_reduction_pct", v)?),
            },
        });
    }
    Ok(out)
}

pub fn read_volume_profile_csv<R: Read>(r: R) -> Result<Vec<VolumeProfileRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &["stock", "volume", "best_feature_set"])?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(VolumeProfileRow {
            stock: rec[0].to_string(),
            volume: parse(row, "volume", &rec[1])?,
            best_variant: parse(row, "best_feature_set", &rec[2])?,
        });
    }
    Ok(out)
}
