//! Best-level feature sets and min-max scaling.
//!
//! The *Simple* set is the raw best level `[ask_px, ask_vol, bid_px, bid_vol]`
//! (`u1`). The *Extended* set holds the basic, synthesized and kernel features
//! `u2..u13`, optionally preceded by the raw block.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lob::{mid_price, LobEvent};

pub const SIMPLE_FEATURE_NAMES: [&str; 4] = ["u1_ask_px", "u1_ask_vol", "u1_bid_px", "u1_bid_vol"];
pub const EXTENDED_FEATURE_NAMES: [&str; 12] = [
    "u2", "u3", "u4", "u5", "u6", "u7", "u8", "u9", "u10", "u11", "u12", "u13",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    Simple,
    Extended,
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Simple => "Simple",
            Self::Extended => "Exte",
        })
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simple" => Ok(Self::Simple),
            "exte" | "extended" => Ok(Self::Extended),
            other => Err(Error::InvalidConfig(format!("unknown feature set `{other}`"))),
        }
    }
}

/// Kernel constants for `u10..u13`. `gamma` is the kernel width, unrelated to
/// any discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub c0: f64,
    pub degree: u32,
    pub gamma: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            c0: 1.0,
            degree: 3,
            gamma: 1.0,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::InvalidConfig("kernel degree must be >= 1".into()));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) || !self.c0.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "kernel gamma must be positive and c0 finite, got gamma={} c0={}",
                self.gamma, self.c0
            )));
        }
        Ok(())
    }
}

/// Which features to build and with which kernel constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub set: FeatureSet,
    pub kernel: KernelParams,
    /// Prepend the raw `u1` block to the Extended set.
    pub include_raw_in_extended: bool,
}

impl FeatureSpec {
    pub fn simple() -> Self {
        Self::new(FeatureSet::Simple)
    }

    pub fn extended() -> Self {
        Self::new(FeatureSet::Extended)
    }

    pub fn new(set: FeatureSet) -> Self {
        Self {
            set,
            kernel: KernelParams::default(),
            include_raw_in_extended: false,
        }
    }

    pub fn dim(&self) -> usize {
        match self.set {
            FeatureSet::Simple => 4,
            FeatureSet::Extended if self.include_raw_in_extended => 16,
            FeatureSet::Extended => 12,
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        match self.set {
            FeatureSet::Simple => SIMPLE_FEATURE_NAMES.to_vec(),
            FeatureSet::Extended => {
                let mut names = Vec::with_capacity(self.dim());
                if self.include_raw_in_extended {
                    names.extend(SIMPLE_FEATURE_NAMES);
                }
                names.extend(EXTENDED_FEATURE_NAMES);
                names
            }
        }
    }

    pub fn compute(&self, event: &LobEvent) -> Result<FeatureVector> {
        match self.set {
            FeatureSet::Simple => Ok(simple_features(event)),
            FeatureSet::Extended => {
                let ext = extended_features(event, &self.kernel)?;
                if !self.include_raw_in_extended {
                    return Ok(ext);
                }
                let mut values = simple_features(event).values;
                values.extend(ext.values);
                Ok(FeatureVector {
                    set: FeatureSet::Extended,
                    values,
                })
            }
        }
    }

    pub fn matrix(&self, events: &[LobEvent]) -> Result<FeatureMatrix> {
        let mut m = FeatureMatrix::with_capacity(self.dim(), events.len());
        for e in events {
            m.push_row(&self.compute(e)?.values)?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub set: FeatureSet,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn simple_features(event: &LobEvent) -> FeatureVector {
    FeatureVector {
        set: FeatureSet::Simple,
        values: vec![event.ask_price, event.ask_volume, event.bid_price, event.bid_volume],
    }
}

/// `u2..u13`, computed from raw (unscaled) prices and volumes.
pub fn extended_features(event: &LobEvent, k: &KernelParams) -> Result<FeatureVector> {
    let (ask, bid) = (event.ask_price, event.bid_price);
    let (askv, bidv) = (event.ask_volume, event.bid_volume);
    let product = ask * bid;
    let spread = ask - bid;
    let values = vec![
        mid_price(event),
        spread,
        product.sin(),
        product,
        askv * bidv,
        ask * ask + bid * bid,
        askv * askv + bidv * bidv,
        product,
        (product + k.c0).powi(k.degree as i32),
        (k.gamma * product + k.c0).tanh(),
        (-k.gamma * spread.abs()).exp(),
        (-k.gamma * spread * spread).exp(),
    ];
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::FeatureOverflow {
            feature: EXTENDED_FEATURE_NAMES[i],
        });
    }
    Ok(FeatureVector {
        set: FeatureSet::Extended,
        values,
    })
}

/// Dense row-major matrix of feature rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn with_capacity(n_cols: usize, n_rows: usize) -> Self {
        Self {
            n_cols,
            data: Vec::with_capacity(n_cols * n_rows),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::with_capacity(n_cols, rows.len());
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics
        self.data.chunks_exact(self.n_cols.max(1))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[col])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Writes the matrix with a `names` header, one row per line.
    pub fn write_csv<W: Write>(&self, writer: W, names: &[&str]) -> Result<()> {
        if names.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: names.len(),
            });
        }
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        wtr.write_record(names)?;
        for r in self.rows() {
            wtr.write_record(r.iter().map(f64::to_string))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-feature min and max over a fitting window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_minmax(window: &FeatureMatrix) -> Result<ScalingStats> {
    if window.n_rows() == 0 {
        return Err(Error::EmptyInput("min-max window"));
    }
    let mut stats = ScalingStats {
        min: window.row(0).to_vec(),
        max: window.row(0).to_vec(),
    };
    for r in window.rows().skip(1) {
        stats.observe(r);
    }
    Ok(stats)
}

impl ScalingStats {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn observe(&mut self, row: &[f64]) {
        for ((lo, hi), &x) in self.min.iter_mut().zip(self.max.iter_mut()).zip(row) {
            *lo = lo.min(x);
            *hi = hi.max(x);
        }
    }

    /// Maps each component to `(x - min) / (max - min)` clamped to `[0, 1]`;
    /// constant columns map to 0.
    pub fn scale_in_place(&self, values: &mut [f64]) -> Result<()> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: values.len(),
            });
        }
        for ((x, &lo), &hi) in values.iter_mut().zip(&self.min).zip(&self.max) {
            let range = hi - lo;
            *x = if range > 0.0 {
                ((*x - lo) / range).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        Ok(())
    }

    pub fn apply_matrix(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let mut out = m.clone();
        if m.n_cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: m.n_cols(),
            });
        }
        let n = self.dim();
        for row in out.as_mut_slice().chunks_exact_mut(n.max(1)) {
            self.scale_in_place(row)?;
        }
        Ok(out)
    }
}

pub fn apply_minmax(stats: &ScalingStats, v: &FeatureVector) -> Result<FeatureVector> {
    let mut values = v.values.clone();
    stats.scale_in_place(&mut values)?;
    Ok(FeatureVector { set: v.set, values })
}

/// Expanding min/max over every row seen so far, for learners whose training
/// window is a single event.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMinMax {
    stats: Option<ScalingStats>,
}

impl RunningMinMax {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, row: &[f64]) -> Result<()> {
        match &mut self.stats {
            None => {
                self.stats = Some(ScalingStats {
                    min: row.to_vec(),
                    max: row.to_vec(),
                })
            }
            Some(s) if s.dim() != row.len() => {
                return Err(Error::DimensionMismatch {
                    expected: s.dim(),
                    got: row.len(),
                })
            }
            Some(s) => s.observe(row),
        }
        Ok(())
    }

    pub fn stats(&self) -> Option<&ScalingStats> {
        self.stats.as_ref()
    }

    /// Folds `row` into the running range, then scales it.
    pub fn update_and_scale(&mut self, row: &[f64]) -> Result<Vec<f64>> {
        self.update(row)?;
        let mut out = row.to_vec();
        self.stats
            .as_ref()
            .expect("stats initialised by update")
            .scale_in_place(&mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_features_copy_the_book() {
        let e = LobEvent::new(0, 10.0, 1.0, 9.0, 2.0);
        assert_eq!(simple_features(&e).values, vec![10.0, 1.0, 9.0, 2.0]);
        let locked = LobEvent::new(0, 5.0, 3.0, 5.0, 3.0);
        assert_eq!(simple_features(&locked).values, vec![5.0, 3.0, 5.0, 3.0]);
    }

    #[test]
    fn extended_features_locked_book() {
        let e = LobEvent::new(0, 1.0, 1.0, 1.0, 1.0);
        let u = extended_features(&e, &KernelParams::default()).unwrap().values;
        assert_eq!(u.len(), 12);
        assert_eq!(u[1], 0.0); // u3
        assert_eq!(u[8], 8.0); // u10
        assert_eq!(u[10], 1.0); // u12
        assert_eq!(u[11], 1.0); // u13
    }

    #[test]
    fn extended_features_hand_arithmetic() {
        let e = LobEvent::new(0, 2.0, 1.0, 1.0, 1.0);
        let u = extended_features(&e, &KernelParams::default()).unwrap().values;
        assert_eq!(u[3], 2.0); // u5
        assert_eq!(u[7], 2.0); // u9
        assert_eq!(u[5], 5.0); // u7
    }

    #[test]
    fn u10_overflow_is_reported() {
        let e = LobEvent::new(0, 1e120, 1.0, 1e120, 1.0);
        let err = extended_features(&e, &KernelParams::default()).unwrap_err();
        assert!(matches!(err, Error::FeatureOverflow { .. }), "{err}");
    }

    #[test]
    fn spec_dimensions_and_names() {
        let mut spec = FeatureSpec::extended();
        assert_eq!(spec.dim(), 12);
        spec.include_raw_in_extended = true;
        let e = LobEvent::new(0, 2.0, 1.0, 1.0, 1.0);
        assert_eq!(spec.compute(&e).unwrap().len(), 16);
        assert_eq!(spec.names().len(), 16);
        assert_eq!(FeatureSpec::simple().compute(&e).unwrap().len(), 4);
    }

    #[test]
    fn minmax_examples() {
        let window = FeatureMatrix::from_rows(&[[0.0, 3.0], [10.0, 3.0]]).unwrap();
        let stats = fit_minmax(&window).unwrap();
        let v = FeatureVector {
            set: FeatureSet::Simple,
            values: vec![5.0, 7.0],
        };
        assert_eq!(apply_minmax(&stats, &v).unwrap().values, vec![0.5, 0.0]);
        let far = FeatureVector {
            set: FeatureSet::Simple,
            values: vec![20.0, 3.0],
        };
        assert_eq!(apply_minmax(&stats, &far).unwrap().values, vec![1.0, 0.0]);
        let short = FeatureVector {
            set: FeatureSet::Simple,
            values: vec![1.0],
        };
        assert!(matches!(
            apply_minmax(&stats, &short),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(fit_minmax(&FeatureMatrix::with_capacity(2, 0)).is_err());
    }

    #[test]
    fn running_minmax_expands() {
        let mut r = RunningMinMax::new();
        assert_eq!(r.update_and_scale(&[5.0]).unwrap(), vec![0.0]);
        assert_eq!(r.update_and_scale(&[7.0]).unwrap(), vec![1.0]);
        assert_eq!(r.update_and_scale(&[6.0]).unwrap(), vec![0.5]);
        assert!(r.update(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn csv_export_header() {
        let m = FeatureMatrix::from_rows(&[[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf, &SIMPLE_FEATURE_NAMES).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "u1_ask_px,u1_ask_vol,u1_bid_px,u1_bid_vol\n1,2,3,4\n");
    }

    proptest! {
        #[test]
        fn extended_invariants(bid in 0.5f64..500.0, spread in prop_oneof![Just(0.0), 1e-6f64..2.0],
                               av in 1.0f64..1000.0, bv in 1.0f64..1000.0) {
            let e = LobEvent::new(0, bid + spread, av, bid, bv);
            let u = extended_features(&e, &KernelParams::default()).unwrap().values;
            prop_assert_eq!(u[0], mid_price(&e));
            prop_assert_eq!(u[3], u[7]);
            for k in [10, 11] {
                prop_assert!(u[k] > 0.0 && u[k] <= 1.0);
                prop_assert_eq!(u[k] == 1.0, e.ask_price == e.bid_price);
            }
        }

        #[test]
        fn scaling_hits_zero_and_one(rows in proptest::collection::vec(
            proptest::collection::vec(-1e3f64..1e3, 3), 1..30)) {
            let m = FeatureMatrix::from_rows(&rows).unwrap();
            let stats = fit_minmax(&m).unwrap();
            let scaled = stats.apply_matrix(&m).unwrap();
            for c in 0..3 {
                let col: Vec<f64> = scaled.column(c).collect();
                prop_assert!(col.iter().all(|x| (0.0..=1.0).contains(x)));
                if stats.max[c] > stats.min[c] {
                    let raw: Vec<f64> = m.column(c).collect();
                    let imin = raw.iter().position(|&x| x == stats.min[c]).unwrap();
                    let imax = raw.iter().position(|&x| x == stats.max[c]).unwrap();
                    prop_assert_eq!(col[imin], 0.0);
                    prop_assert_eq!(col[imax], 1.0);
                }
            }
        }
    }
}
