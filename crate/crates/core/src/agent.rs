//! Batch-free epsilon-greedy forecaster trained online, one event at a time.
//!
//! The agent predicts the mid price as an adjustment to the latest observed
//! mid: exploring adds a uniform offset in `[a_min, a_max]`, exploiting adds
//! the network output. After the forecast is realized, the network regresses
//! its adjustment onto a target built from the reward and the policy value.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSpec, RunningMinMax};
use crate::importance::ImportanceVector;
use crate::lob::LobEvent;
use crate::nn::{DenseNet, DenseNetConfig};
use crate::seed::mix_seed;

/// Which mid a forecast made at event `t` is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Horizon {
    /// The mid of event `t + 1`.
    #[default]
    NextEvent,
    /// The mid of event `t` itself.
    SameEvent,
}

impl std::str::FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "next" | "next_event" => Ok(Self::NextEvent),
            "same" | "same_event" => Ok(Self::SameEvent),
            other => Err(Error::InvalidConfig(format!("unknown horizon `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlpeConfig {
    pub a_min: f64,
    pub a_max: f64,
    pub eps0: f64,
    pub eps_min: f64,
    pub eps_decay: f64,
    /// Discount factor; only immediate rewards are supported.
    pub gamma: f64,
    pub epochs_per_event: usize,
    pub horizon: Horizon,
    /// Network shape; `input_dim` is overwritten from the feature spec.
    pub net: DenseNetConfig,
    pub seed: u64,
}

impl Default for AlpeConfig {
    fn default() -> Self {
        Self {
            a_min: -0.1,
            a_max: 0.1,
            eps0: 1.0,
            eps_min: 1e-4,
            eps_decay: 0.999,
            gamma: 0.0,
            epochs_per_event: 2,
            horizon: Horizon::NextEvent,
            net: DenseNetConfig {
                // A dead unit's running variance collapses towards zero; with
                // a tiny zeta its revival is amplified by 1/sqrt(zeta) and the
                // early forecasts blow up.
                zeta: 0.1,
                ..DenseNetConfig::new(1)
            },
            seed: 0,
        }
    }
}

impl AlpeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.a_min < self.a_max && self.a_min.is_finite() && self.a_max.is_finite()) {
            return bad(format!("need a_min < a_max, got [{}, {}]", self.a_min, self.a_max));
        }
        if !(0.0 <= self.eps_min && self.eps_min <= self.eps0 && self.eps0 <= 1.0) {
            return bad(format!(
                "need 0 <= eps_min <= eps0 <= 1, got eps_min={} eps0={}",
                self.eps_min, self.eps0
            ));
        }
        if !(self.eps_decay > 0.0 && self.eps_decay <= 1.0) {
            return bad(format!("eps_decay must lie in (0, 1], got {}", self.eps_decay));
        }
        if self.gamma != 0.0 {
            return bad(format!("only gamma = 0 is supported, got {}", self.gamma));
        }
        if self.epochs_per_event == 0 {
            return bad("epochs_per_event must be at least 1".into());
        }
        Ok(())
    }

    /// `max(eps_min, eps0 * eps_decay^t)`.
    pub fn epsilon_at(&self, t: u64) -> f64 {
        let t = t.min(i32::MAX as u64) as i32;
        (self.eps0 * self.eps_decay.powi(t)).max(self.eps_min)
    }
}

/// One multiplicative decay step with a floor.
pub fn decay_epsilon(eps: f64, eps_decay: f64, eps_min: f64) -> f64 {
    (eps * eps_decay).max(eps_min)
}

/// `-|action - true_mid| * (1 - eps)`.
pub fn compute_reward(action: f64, true_mid: f64, eps: f64) -> f64 {
    -(action - true_mid).abs() * (1.0 - eps)
}

/// `reward - |action - f_pred| * (1 - eps)`.
pub fn policy_target(reward: f64, action: f64, f_pred: f64, eps: f64) -> f64 {
    reward - (action - f_pred).abs() * (1.0 - eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Forecast in price units.
    pub price: f64,
    pub explored: bool,
}

/// A forecast paired with the mid it was meant to predict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredForecast {
    /// Sequence number of the event whose mid was forecast.
    pub seq: u64,
    pub prediction: f64,
    pub realized: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub seq: u64,
    /// Action taken at this event.
    pub action: Action,
    /// Forecast realized at this event, if any.
    pub scored: Option<ScoredForecast>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Pending {
    state: Vec<f64>,
    base_mid: f64,
    action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlpeAgent {
    config: AlpeConfig,
    features: FeatureSpec,
    importance: Option<ImportanceVector>,
    net: DenseNet,
    steps: u64,
    rng: ChaCha8Rng,
    scaler: RunningMinMax,
    pending: Option<Pending>,
    last_seq: Option<u64>,
}

impl AlpeAgent {
    pub fn new(mut config: AlpeConfig, features: FeatureSpec, importance: Option<ImportanceVector>) -> Result<Self> {
        config.validate()?;
        features.kernel.validate()?;
        if let Some(fi) = &importance {
            if fi.len() != features.dim() {
                return Err(Error::DimensionMismatch {
                    expected: features.dim(),
                    got: fi.len(),
                });
            }
        }
        config.net.input_dim = features.dim();
        let net = DenseNet::new(
            config.net.clone(),
            &mut ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 1)),
        )?;
        let rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 2));
        Ok(Self {
            config,
            features,
            importance,
            net,
            steps: 0,
            rng,
            scaler: RunningMinMax::new(),
            pending: None,
            last_seq: None,
        })
    }

    pub fn config(&self) -> &AlpeConfig {
        &self.config
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    /// Current exploration probability.
    pub fn epsilon(&self) -> f64 {
        self.config.epsilon_at(self.steps)
    }

    /// Number of events processed.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Overrides the step counter, which fixes the exploration probability.
    pub fn set_steps(&mut self, steps: u64) {
        self.steps = steps;
    }

    pub fn features(&self) -> &FeatureSpec {
        &self.features
    }

    pub fn importance(&self) -> Option<&ImportanceVector> {
        self.importance.as_ref()
    }

    /// Scaled, importance-weighted state from raw features; folds them into
    /// the running feature range.
    pub fn observe_state(&mut self, raw: &[f64]) -> Result<Vec<f64>> {
        let mut state = self.scaler.update_and_scale(raw)?;
        if let Some(fi) = &self.importance {
            fi.weight_in_place(&mut state)?;
        }
        Ok(state)
    }

    /// Epsilon-greedy choice: with probability `epsilon` returns
    /// `mid + U(a_min, a_max)`, otherwise `mid + net(state)`.
    pub fn select_action(&mut self, state: &[f64], mid: f64) -> Result<Action> {
        let xi: f64 = self.rng.random();
        if xi < self.epsilon() {
            let offset = self.rng.random_range(self.config.a_min..=self.config.a_max);
            Ok(Action {
                price: mid + offset,
                explored: true,
            })
        } else {
            Ok(Action {
                price: mid + self.net.predict(state)?,
                explored: false,
            })
        }
    }

    /// Reward, policy value and the adjustment target regressed onto.
    fn learn(&mut self, pending: &Pending, true_mid: f64) -> Result<()> {
        let eps = self.epsilon();
        let f_adj = self.net.predict(&pending.state)?;
        let f_price = pending.base_mid + f_adj;
        let reward = compute_reward(pending.action.price, true_mid, eps);
        let value = policy_target(reward, pending.action.price, f_price, eps);
        // the policy value is a non-positive error magnitude; its sign is
        // taken from the direction of the realized miss
        let direction = if true_mid >= f_price { 1.0 } else { -1.0 };
        let target = f_adj + direction * value.abs();
        for _ in 0..self.config.epochs_per_event {
            self.net.train_step(&pending.state, target)?;
        }
        Ok(())
    }

    pub fn step(&mut self, event: &LobEvent) -> Result<AgentStep> {
        let raw = self.features.compute(event)?;
        self.step_with_features(event, &raw.values)
    }

    /// [`AlpeAgent::step`] with the raw feature vector of `event` supplied by
    /// the caller.
    pub fn step_with_features(&mut self, event: &LobEvent, raw: &[f64]) -> Result<AgentStep> {
        if raw.len() != self.features.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.features.dim(),
                got: raw.len(),
            });
        }
        if let Some(prev) = self.last_seq {
            if event.seq <= prev {
                return Err(Error::OutOfOrder {
                    seq: event.seq,
                    previous: prev,
                });
            }
        }
        let mid = event.mid_price();
        if !mid.is_finite() {
            return Err(Error::NonFinite("mid price"));
        }
        let mut scored = None;
        if let Some(pending) = self.pending.take() {
            self.learn(&pending, mid)?;
            scored = Some(ScoredForecast {
                seq: event.seq,
                prediction: pending.action.price,
                realized: mid,
            });
        }
        let state = self.observe_state(raw)?;
        let action = self.select_action(&state, mid)?;
        let pending = Pending {
            state,
            base_mid: mid,
            action,
        };
        match self.config.horizon {
            Horizon::NextEvent => self.pending = Some(pending),
            Horizon::SameEvent => {
                self.learn(&pending, mid)?;
                scored = Some(ScoredForecast {
                    seq: event.seq,
                    prediction: action.price,
                    realized: mid,
                });
            }
        }
        self.steps += 1;
        self.last_seq = Some(event.seq);
        Ok(AgentStep {
            seq: event.seq,
            action,
            scored,
        })
    }

    /// Feeds `events` in order and returns every realized forecast.
    pub fn run_online(&mut self, events: &[LobEvent]) -> Result<Vec<ScoredForecast>> {
        let mut out = Vec::with_capacity(events.len());
        for e in events {
            if let Some(s) = self.step(e)?.scored {
                out.push(s);
            }
        }
        Ok(out)
    }

    pub fn write_checkpoint<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(reader: R) -> Result<Self> {
        let agent: Self = serde_json::from_reader(reader)?;
        agent.config.validate()?;
        Ok(agent)
    }
}
