//! Rolling-window competitors: persistence, a small MLP and an RBF network,
//! plus the registry that builds any forecaster (ALPE included) by id.
//!
//! The MLP and RBF network are refit on every event from the latest window.
//! Both learn the next-event mid change from the window features, and predict
//! the newest mid plus that change.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AlpeAgent, AlpeConfig};
use crate::error::{Error, Result};
use crate::features::{fit_minmax, FeatureMatrix, FeatureSpec};
use crate::importance::ImportanceVector;
use crate::lob::LobEvent;
use crate::nn::{AdamConfig, DenseNet, DenseNetConfig, Init};
use crate::seed::mix_seed;

pub const DEFAULT_WINDOW: usize = 10;

/// Common contract of every forecaster: observe events in order, then
/// forecast the mid of the next one.
pub trait Forecaster: Send {
    /// `features` are the raw features of `event` for the forecaster's set.
    fn observe(&mut self, event: &LobEvent, features: &[f64]) -> Result<()>;

    /// Forecast of the next event's mid from everything observed so far.
    fn predict_next(&mut self) -> Result<f64>;

    /// Forgets all history and restarts from the state implied by `seed`.
    fn reset(&mut self, seed: u64) -> Result<()>;
}

/// Fixed-capacity FIFO of `(raw features, mid)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingWindow {
    capacity: usize,
    entries: VecDeque<(Vec<f64>, f64)>,
    newest_seq: Option<u64>,
}

impl RollingWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("window capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
            newest_seq: None,
        })
    }

    pub fn push(&mut self, event: &LobEvent, features: &[f64]) -> Result<()> {
        if let Some(prev) = self.newest_seq {
            if event.seq <= prev {
                return Err(Error::OutOfOrder {
                    seq: event.seq,
                    previous: prev,
                });
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((features.to_vec(), event.mid_price()));
        self.newest_seq = Some(event.seq);
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn newest_seq(&self) -> Option<u64> {
        self.newest_seq
    }

    pub fn mids(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    pub fn features(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.entries.iter().map(|e| e.0.as_slice())
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.newest_seq = None;
    }

    fn require_full(&self) -> Result<()> {
        if self.is_full() {
            Ok(())
        } else {
            Err(Error::WindowNotFull {
                needed: self.capacity,
                got: self.len(),
            })
        }
    }

    /// Window features min-max scaled over the window, then weighted.
    fn scaled_features(&self, importance: Option<&ImportanceVector>) -> Result<FeatureMatrix> {
        let raw = FeatureMatrix::from_rows(&self.entries.iter().map(|e| &e.0[..]).collect::<Vec<_>>())?;
        let mut scaled = fit_minmax(&raw)?.apply_matrix(&raw)?;
        if let Some(fi) = importance {
            scaled = crate::importance::apply_importance(&scaled, fi)?;
        }
        Ok(scaled)
    }

    /// Training inputs (every row but the newest), next-event mid changes,
    /// and the newest row.
    fn training_pairs(&self, importance: Option<&ImportanceVector>) -> Result<(FeatureMatrix, Vec<f64>, Vec<f64>)> {
        let scaled = self.scaled_features(importance)?;
        let n = scaled.n_rows();
        let rows: Vec<&[f64]> = (0..n - 1).map(|i| scaled.row(i)).collect();
        let x = FeatureMatrix::from_rows(&rows)?;
        let mids: Vec<f64> = self.mids().collect();
        let y = mids.windows(2).map(|w| w[1] - w[0]).collect();
        Ok((x, y, scaled.row(n - 1).to_vec()))
    }
}

/// Most recent realized mid.
pub fn naive_predict(window: &RollingWindow) -> Result<f64> {
    window
        .mids()
        .last()
        .ok_or(Error::EmptyInput("naive forecast needs one observed event"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub steps: usize,
    pub lr: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            hidden_width: 32,
            steps: 50,
            lr: 0.01,
        }
    }
}

impl MlpConfig {
    fn net_config(&self, input_dim: usize) -> DenseNetConfig {
        DenseNetConfig {
            input_dim,
            hidden_layers: self.hidden_layers,
            hidden_width: self.hidden_width,
            batch_norm: false,
            init: Init::GlorotUniform,
            zeta: 1e-5,
            bn_momentum: 0.9,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
        }
    }
}

/// Fits a fresh MLP by `cfg.steps` single-pair Adam steps cycling through the
/// pairs in order, and returns it.
pub fn fit_mlp(x: &FeatureMatrix, y: &[f64], cfg: &MlpConfig, seed: u64) -> Result<DenseNet> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut net = DenseNet::new(cfg.net_config(x.n_cols()), &mut ChaCha8Rng::seed_from_u64(seed))?;
    for k in 0..cfg.steps {
        let i = k % y.len();
        net.train_step(x.row(i), y[i])?;
    }
    Ok(net)
}

/// MLP forecast from a full window: newest mid plus the learned change.
pub fn mlp_fit_predict(
    window: &RollingWindow,
    cfg: &MlpConfig,
    importance: Option<&ImportanceVector>,
    seed: u64,
) -> Result<f64> {
    window.require_full()?;
    let (x, y, newest) = window.training_pairs(importance)?;
    let net = fit_mlp(&x, &y, cfg, seed)?;
    Ok(naive_predict(window)? + net.predict(&newest)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfConfig {
    pub k_centers: usize,
    pub max_iterations: usize,
    /// Singular values below this fraction of the largest are discarded.
    pub rcond: f64,
}

impl Default for RbfConfig {
    fn default() -> Self {
        Self {
            k_centers: 4,
            max_iterations: 100,
            rcond: 1e-6,
        }
    }
}

/// Gaussian RBF network with a bias term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    pub centers: Vec<Vec<f64>>,
    pub width: f64,
    /// Bias first, then one weight per center.
    pub weights: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations; duplicate centers are
/// merged, so fewer than `k` may come back.
pub fn kmeans<R: Rng + ?Sized>(
    x: &FeatureMatrix,
    k: usize,
    max_iterations: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = x.n_rows();
    if n == 0 || k == 0 {
        return Err(Error::EmptyInput("k-means needs points and at least one center"));
    }
    let mut centers = vec![x.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = x.rows().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k.min(n) {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let mut pick = rng.random_range(0.0..total);
        let mut chosen = n - 1;
        for (i, d) in d2.iter().enumerate() {
            if pick < *d {
                chosen = i;
                break;
            }
            pick -= d;
        }
        let c = x.row(chosen).to_vec();
        for (d, r) in d2.iter_mut().zip(x.rows()) {
            *d = d.min(sq_dist(r, &c));
        }
        centers.push(c);
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iterations {
        let mut changed = false;
        for (i, r) in x.rows().enumerate() {
            let best = (0..centers.len())
                .min_by(|&a, &b| sq_dist(r, &centers[a]).total_cmp(&sq_dist(r, &centers[b])))
                .expect("at least one center");
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (j, c) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = x
                .rows()
                .zip(&assignment)
                .filter(|(_, a)| **a == j)
                .map(|(r, _)| r)
                .collect();
            if members.is_empty() {
                continue;
            }
            for (f, v) in c.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[f]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let mut unique: Vec<Vec<f64>> = Vec::with_capacity(centers.len());
    for c in centers {
        if !unique.iter().any(|u| u == &c) {
            unique.push(c);
        }
    }
    Ok(unique)
}

impl RbfModel {
    pub fn fit(x: &FeatureMatrix, y: &[f64], cfg: &RbfConfig, seed: u64) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.n_rows(),
                got: y.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let centers = kmeans(
            x,
            cfg.k_centers,
            cfg.max_iterations,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )?;
        let width = median_center_distance(&centers).unwrap_or(1.0);
        let mut model = Self {
            centers,
            width,
            weights: Vec::new(),
        };
        let cols = model.centers.len() + 1;
        let mut design = DMatrix::zeros(y.len(), cols);
        for (i, r) in x.rows().enumerate() {
            for (j, v) in model.design_row(r).into_iter().enumerate() {
                design[(i, j)] = v;
            }
        }
        let svd = design.svd(true, true);
        let cutoff = cfg.rcond * svd.singular_values.max();
        let w = svd
            .solve(&DVector::from_column_slice(y), cutoff)
            .map_err(|e| Error::DegenerateMatrix(e.to_string()))?;
        model.weights = w.iter().copied().collect();
        Ok(model)
    }

    /// `[1, phi_1(x), ..., phi_k(x)]`.
    pub fn design_row(&self, x: &[f64]) -> Vec<f64> {
        let denom = 2.0 * self.width * self.width;
        std::iter::once(1.0)
            .chain(self.centers.iter().map(|c| (-sq_dist(x, c) / denom).exp()))
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.design_row(x).iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }
}

/// Median pairwise distance, or `None` when it is zero or undefined.
fn median_center_distance(centers: &[Vec<f64>]) -> Option<f64> {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            d.push(sq_dist(&centers[i], &centers[j]).sqrt());
        }
    }
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 {
        d[m / 2]
    } else {
        (d[m / 2 - 1] + d[m / 2]) / 2.0
    };
    (median > 0.0 && median.is_finite()).then_some(median)
}

/// RBF network forecast from a full window: newest mid plus the learned change.
pub fn rbfnn_fit_predict(
    window: &RollingWindow,
    cfg: &RbfConfig,
    importance: Option<&ImportanceVector>,
    seed: u64,
) -> Result<f64> {
    window.require_full()?;
    let (x, y, newest) = window.training_pairs(importance)?;
    let model = RbfModel::fit(&x, &y, cfg, seed)?;
    Ok(naive_predict(window)? + model.predict(&newest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelId {
    Naive,
    Mlp,
    Rbfnn,
    Alpe,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [Self::Naive, Self::Mlp, Self::Rbfnn, Self::Alpe];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Mlp => "mlp",
            Self::Rbfnn => "rbfnn",
            Self::Alpe => "alpe",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Everything needed to build any registered forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterSpec {
    pub features: FeatureSpec,
    pub importance: Option<ImportanceVector>,
    pub window: usize,
    pub mlp: MlpConfig,
    pub rbf: RbfConfig,
    pub alpe: AlpeConfig,
}

impl ForecasterSpec {
    pub fn new(features: FeatureSpec) -> Self {
        Self {
            features,
            importance: None,
            window: DEFAULT_WINDOW,
            mlp: MlpConfig::default(),
            rbf: RbfConfig::default(),
            alpe: AlpeConfig::default(),
        }
    }

    pub fn build(&self, model: ModelId, seed: u64) -> Result<Box<dyn Forecaster>> {
        Ok(match model {
            ModelId::Naive => Box::new(WindowForecaster::new(WindowModel::Naive, self, seed)?),
            ModelId::Mlp => Box::new(WindowForecaster::new(WindowModel::Mlp(self.mlp.clone()), self, seed)?),
            ModelId::Rbfnn => Box::new(WindowForecaster::new(WindowModel::Rbf(self.rbf.clone()), self, seed)?),
            ModelId::Alpe => Box::new(AlpeForecaster::new(self, seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum WindowModel {
    Naive,
    Mlp(MlpConfig),
    Rbf(RbfConfig),
}

/// Any of the rolling-window baselines.
#[derive(Debug, Clone)]
pub struct WindowForecaster {
    model: WindowModel,
    window: RollingWindow,
    importance: Option<ImportanceVector>,
    seed: u64,
}

impl WindowForecaster {
    fn new(model: WindowModel, spec: &ForecasterSpec, seed: u64) -> Result<Self> {
        Ok(Self {
            model,
            window: RollingWindow::new(spec.window)?,
            importance: spec.importance.clone(),
            seed,
        })
    }

    pub fn window(&self) -> &RollingWindow {
        &self.window
    }
}

impl Forecaster for WindowForecaster {
    fn observe(&mut self, event: &LobEvent, features: &[f64]) -> Result<()> {
        self.window.push(event, features)
    }

    fn predict_next(&mut self) -> Result<f64> {
        // each refit gets its own seed, fixed by the newest observed event
        let fit_seed = mix_seed(self.seed, self.window.newest_seq().unwrap_or(0));
        let fi = self.importance.as_ref();
        match &self.model {
            WindowModel::Naive => naive_predict(&self.window),
            WindowModel::Mlp(cfg) => mlp_fit_predict(&self.window, cfg, fi, fit_seed),
            WindowModel::Rbf(cfg) => rbfnn_fit_predict(&self.window, cfg, fi, fit_seed),
        }
    }

    fn reset(&mut self, seed: u64) -> Result<()> {
        self.window.clear();
        self.seed = seed;
        Ok(())
    }
}

/// Adapter running the online agent behind the forecaster contract.
#[derive(Debug, Clone)]
pub struct AlpeForecaster {
    agent: AlpeAgent,
    last_action: Option<f64>,
}

impl AlpeForecaster {
    pub fn new(spec: &ForecasterSpec, seed: u64) -> Result<Self> {
        let cfg = AlpeConfig {
            seed,
            ..spec.alpe.clone()
        };
        Ok(Self {
            agent: AlpeAgent::new(cfg, spec.features, spec.importance.clone())?,
            last_action: None,
        })
    }

    pub fn agent(&self) -> &AlpeAgent {
        &self.agent
    }
}

impl Forecaster for AlpeForecaster {
    fn observe(&mut self, event: &LobEvent, features: &[f64]) -> Result<()> {
        let step = self.agent.step_with_features(event, features)?;
        self.last_action = Some(step.action.price);
        Ok(())
    }

    fn predict_next(&mut self) -> Result<f64> {
        self.last_action
            .ok_or(Error::EmptyInput("agent has not observed any event"))
    }

    fn reset(&mut self, seed: u64) -> Result<()> {
        let cfg = AlpeConfig {
            seed,
            ..self.agent.config().clone()
        };
        let importance = self.agent_importance();
        self.agent = AlpeAgent::new(cfg, *self.agent.features(), importance)?;
        self.last_action = None;
        Ok(())
    }
}

impl AlpeForecaster {
    fn agent_importance(&self) -> Option<ImportanceVector> {
        self.agent.importance().cloned()
    }
}
