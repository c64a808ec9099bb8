//! Dense feed-forward regression network: affine layers with ReLU, optional
//! batch normalization after the first hidden layer, squared-error loss and
//! Adam. All trainable parameters live in one flat vector.

mod adam;
mod gradcheck;

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{finite_diff_gradcheck, random_gradcheck_case, GradCheck, GRADCHECK_FLOOR};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// `U(-r, r)` with `r = sqrt(6 / (fan_in + fan_out))`, zero biases.
    GlorotUniform,
    /// Every weight and bias drawn from `U(-r, r)`.
    Uniform(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub batch_norm: bool,
    pub init: Init,
    pub zeta: f64,
    pub bn_momentum: f64,
    pub adam: AdamConfig,
}

impl DenseNetConfig {
    /// The 8x64 topology with batch norm after the first hidden layer.
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: 8,
            hidden_width: 64,
            batch_norm: true,
            init: Init::GlorotUniform,
            zeta: 1e-5,
            bn_momentum: 0.9,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.input_dim == 0 {
            return bad("network input dimension must be at least 1");
        }
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return bad("hidden width must be at least 1");
        }
        if !(self.zeta > 0.0) {
            return bad("batch-norm zeta must be positive");
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return bad("batch-norm momentum must lie in [0, 1)");
        }
        if let Init::Uniform(r) = self.init {
            if !(r > 0.0 && r.is_finite()) {
                return bad("uniform init radius must be positive");
            }
        }
        self.adam.validate()
    }

    fn has_bn(&self) -> bool {
        self.batch_norm && self.hidden_layers > 0
    }

    /// `(fan_in, fan_out)` of every affine layer, output layer last.
    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            shapes.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        shapes.push((fan_in, 1));
        shapes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LayerLayout {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in` weights start here, biases follow.
    offset: usize,
}

impl LayerLayout {
    fn bias(&self) -> usize {
        self.offset + self.n_in * self.n_out
    }

    fn end(&self) -> usize {
        self.bias() + self.n_out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Uses the running statistics, then folds this input into them.
    Train,
    /// Uses the running statistics and leaves them untouched.
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    config: DenseNetConfig,
    layers: Vec<LayerLayout>,
    /// Offsets of psi and beta when batch norm is on.
    bn_offset: Option<usize>,
    params: Vec<f64>,
    running: Option<BatchNormStats>,
    adam: Adam,
}

/// Intermediate values of one forward pass.
struct Trace {
    /// Input to each affine layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Normalized first-layer activations.
    normalized: Vec<f64>,
    /// First-layer ReLU output, before normalization.
    first_hidden: Vec<f64>,
    output: f64,
}

impl DenseNet {
    pub fn new<R: Rng + ?Sized>(config: DenseNetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        for (n_in, n_out) in config.shapes() {
            let l = LayerLayout { n_in, n_out, offset };
            offset = l.end();
            layers.push(l);
        }
        let bn_offset = config.has_bn().then_some(offset);
        let width = config.hidden_width;
        let n_params = offset + if bn_offset.is_some() { 2 * width } else { 0 };
        let mut params = vec![0.0; n_params];
        for l in &layers {
            let r = match config.init {
                Init::GlorotUniform => (6.0 / (l.n_in + l.n_out) as f64).sqrt(),
                Init::Uniform(r) => r,
            };
            for p in &mut params[l.offset..l.bias()] {
                *p = rng.random_range(-r..=r);
            }
            if let Init::Uniform(r) = config.init {
                for p in &mut params[l.bias()..l.end()] {
                    *p = rng.random_range(-r..=r);
                }
            }
        }
        if let Some(o) = bn_offset {
            params[o..o + width].fill(1.0);
        }
        let running = bn_offset.map(|_| BatchNormStats {
            mean: vec![0.0; width],
            var: vec![1.0; width],
        });
        let adam = Adam::new(config.adam, n_params);
        Ok(Self {
            config,
            layers,
            bn_offset,
            params,
            running,
            adam,
        })
    }

    pub fn config(&self) -> &DenseNetConfig {
        &self.config
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn running_stats(&self) -> Option<&BatchNormStats> {
        self.running.as_ref()
    }

    pub fn running_stats_mut(&mut self) -> Option<&mut BatchNormStats> {
        self.running.as_mut()
    }

    /// Weights of affine layer `i` (output layer last), row-major.
    pub fn weights(&self, i: usize) -> &[f64] {
        let l = &self.layers[i];
        &self.params[l.offset..l.bias()]
    }

    pub fn weights_mut(&mut self, i: usize) -> &mut [f64] {
        let l = self.layers[i];
        &mut self.params[l.offset..l.bias()]
    }

    pub fn bias(&self, i: usize) -> &[f64] {
        let l = &self.layers[i];
        &self.params[l.bias()..l.end()]
    }

    pub fn bias_mut(&mut self, i: usize) -> &mut [f64] {
        let l = self.layers[i];
        &mut self.params[l.bias()..l.end()]
    }

    /// `(psi, beta)` of the normalization layer.
    pub fn bn_affine(&self) -> Option<(&[f64], &[f64])> {
        let o = self.bn_offset?;
        let w = self.config.hidden_width;
        Some((&self.params[o..o + w], &self.params[o + w..o + 2 * w]))
    }

    pub fn bn_affine_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        let o = self.bn_offset?;
        let w = self.config.hidden_width;
        Some(self.params[o..o + 2 * w].split_at_mut(w))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Inference without touching any state.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.trace(x).output)
    }

    pub fn forward(&mut self, x: &[f64], mode: Mode) -> Result<f64> {
        self.check_input(x)?;
        let trace = self.trace(x);
        if mode == Mode::Train {
            self.update_running(&trace.first_hidden);
        }
        Ok(trace.output)
    }

    /// Smallest hidden pre-activation magnitude for input `x` (infinite for
    /// a net without hidden layers).
    pub fn min_abs_preactivation(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self
            .trace(x)
            .pre
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, z| m.min(z.abs())))
    }

    /// `(target - forward(x))^2`, without side effects.
    pub fn loss(&self, x: &[f64], target: f64) -> Result<f64> {
        let e = target - self.predict(x)?;
        Ok(e * e)
    }

    /// Loss and its exact gradient with respect to [`DenseNet::params`],
    /// treating the running statistics as constants.
    pub fn gradient(&self, x: &[f64], target: f64) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        if !target.is_finite() {
            return Err(Error::NonFinite("training target"));
        }
        let trace = self.trace(x);
        let grad = self.backward(&trace, target);
        let e = target - trace.output;
        Ok((e * e, grad))
    }

    /// One squared-error Adam step on `(x, target)`; returns the loss before
    /// the update.
    pub fn train_step(&mut self, x: &[f64], target: f64) -> Result<f64> {
        self.check_input(x)?;
        if !target.is_finite() {
            return Err(Error::NonFinite("training target"));
        }
        let trace = self.trace(x);
        let grad = self.backward(&trace, target);
        self.update_running(&trace.first_hidden);
        self.adam.update(&mut self.params, &grad);
        let e = target - trace.output;
        Ok(e * e)
    }

    fn update_running(&mut self, h: &[f64]) {
        let m = self.config.bn_momentum;
        if let Some(stats) = &mut self.running {
            for ((mu, var), &v) in stats.mean.iter_mut().zip(&mut stats.var).zip(h) {
                let delta = v - *mu;
                *mu += (1.0 - m) * delta;
                *var = m * (*var + (1.0 - m) * delta * delta);
            }
        }
    }

    fn affine(&self, l: &LayerLayout, input: &[f64], out: &mut Vec<f64>) {
        let w = &self.params[l.offset..l.bias()];
        let b = &self.params[l.bias()..l.end()];
        out.clear();
        out.extend(
            w.chunks_exact(l.n_in)
                .zip(b)
                .map(|(row, bias)| row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>() + bias),
        );
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let hidden = self.config.hidden_layers;
        let mut inputs = Vec::with_capacity(hidden + 1);
        let mut pre = Vec::with_capacity(hidden);
        let mut normalized = Vec::new();
        let mut first_hidden = Vec::new();
        let mut current = x.to_vec();
        for (i, l) in self.layers[..hidden].iter().enumerate() {
            let mut z = Vec::with_capacity(l.n_out);
            self.affine(l, &current, &mut z);
            let mut h: Vec<f64> = z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            if i == 0 {
                if let (Some(stats), Some((psi, beta))) = (&self.running, self.bn_affine()) {
                    first_hidden = h.clone();
                    normalized = h
                        .iter()
                        .zip(&stats.mean)
                        .zip(&stats.var)
                        .map(|((v, mu), var)| (v - mu) / (var + self.config.zeta).sqrt())
                        .collect();
                    h = normalized
                        .iter()
                        .zip(psi)
                        .zip(beta)
                        .map(|((n, p), b)| p * n + b)
                        .collect();
                }
            }
            inputs.push(std::mem::replace(&mut current, h));
            pre.push(z);
        }
        let mut out = Vec::with_capacity(1);
        self.affine(&self.layers[hidden], &current, &mut out);
        inputs.push(current);
        Trace {
            inputs,
            pre,
            normalized,
            first_hidden,
            output: out[0],
        }
    }

    fn backward(&self, trace: &Trace, target: f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        let hidden = self.config.hidden_layers;
        // d loss / d output
        let mut upstream = vec![2.0 * (trace.output - target)];
        for i in (0..=hidden).rev() {
            let l = self.layers[i];
            let mut dz = upstream;
            if i < hidden {
                for (d, &z) in dz.iter_mut().zip(&trace.pre[i]) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &trace.inputs[i];
            let w = &self.params[l.offset..l.bias()];
            for (r, &d) in dz.iter().enumerate() {
                let g_row = &mut grad[l.offset + r * l.n_in..l.offset + (r + 1) * l.n_in];
                for (g, &a) in g_row.iter_mut().zip(input) {
                    *g = d * a;
                }
                grad[l.bias() + r] = d;
            }
            if i == 0 {
                break;
            }
            let mut below = vec![0.0; l.n_in];
            for (row, &d) in w.chunks_exact(l.n_in).zip(&dz) {
                if d != 0.0 {
                    for (b, &wv) in below.iter_mut().zip(row) {
                        *b += wv * d;
                    }
                }
            }
            // the input of layer 1 is the normalized first hidden layer
            if i == 1 {
                if let (Some(o), Some(stats)) = (self.bn_offset, &self.running) {
                    let width = self.config.hidden_width;
                    for j in 0..width {
                        let d = below[j];
                        grad[o + j] = d * trace.normalized[j];
                        grad[o + width + j] = d;
                        below[j] = d * self.params[o + j] / (stats.var[j] + self.config.zeta).sqrt();
                    }
                }
            }
            upstream = below;
        }
        grad
    }

    /// Dumps every parameter, running statistic and optimizer moment as
    /// `layer,index,value` rows.
    pub fn write_checkpoint<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        wtr.write_record(["layer", "index", "value"])?;
        for (name, values) in self.checkpoint_sections() {
            for (i, v) in values.iter().enumerate() {
                wtr.write_record([name.as_str(), &i.to_string(), &v.to_string()])?;
            }
        }
        wtr.write_record(["adam_step", "0", &self.adam.step.to_string()])?;
        wtr.flush()?;
        Ok(())
    }

    /// Rebuilds a net of shape `config` from [`DenseNet::write_checkpoint`]
    /// output. Every value must be present exactly once.
    pub fn read_checkpoint<R: Read>(reader: R, config: DenseNetConfig) -> Result<Self> {
        let mut net = Self::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;
        let mut seen: Vec<(String, Vec<bool>)> = net
            .checkpoint_sections()
            .into_iter()
            .map(|(name, v)| (name, vec![false; v.len()]))
            .collect();
        let mut step_seen = false;
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["layer", "index", "value"] {
            return Err(Error::BadHeader {
                expected: "layer,index,value".into(),
                found: header.join(","),
            });
        }
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |field: &'static str, value: &str| Error::MalformedField {
                row,
                field,
                value: value.to_string(),
            };
            let name = &rec[0];
            let index: usize = rec[1].parse().map_err(|_| bad("index", &rec[1]))?;
            if name == "adam_step" {
                net.adam.step = rec[2].parse().map_err(|_| bad("value", &rec[2]))?;
                step_seen = true;
                continue;
            }
            let value: f64 = rec[2].parse().map_err(|_| bad("value", &rec[2]))?;
            let section = seen
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| bad("layer", name))?;
            let flags = &mut seen[section].1;
            if index >= flags.len() || flags[index] {
                return Err(bad("index", &rec[1]));
            }
            flags[index] = true;
            *net.section_value_mut(name, index) = value;
        }
        if !step_seen || seen.iter().any(|(_, f)| f.iter().any(|x| !x)) {
            return Err(Error::Checkpoint("checkpoint is missing values".into()));
        }
        Ok(net)
    }

    fn checkpoint_sections(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for i in 0..self.layers.len() {
            out.push((format!("W{i}"), self.weights(i).to_vec()));
            out.push((format!("b{i}"), self.bias(i).to_vec()));
        }
        if let (Some((psi, beta)), Some(stats)) = (self.bn_affine(), &self.running) {
            out.push(("bn_psi".into(), psi.to_vec()));
            out.push(("bn_beta".into(), beta.to_vec()));
            out.push(("bn_mean".into(), stats.mean.clone()));
            out.push(("bn_var".into(), stats.var.clone()));
        }
        out.push(("adam_m".into(), self.adam.m.clone()));
        out.push(("adam_v".into(), self.adam.v.clone()));
        out
    }

    fn section_value_mut(&mut self, name: &str, index: usize) -> &mut f64 {
        match name {
            "adam_m" => &mut self.adam.m[index],
            "adam_v" => &mut self.adam.v[index],
            "bn_psi" => &mut self.bn_affine_mut().expect("batch norm present").0[index],
            "bn_beta" => &mut self.bn_affine_mut().expect("batch norm present").1[index],
            "bn_mean" => &mut self.running.as_mut().expect("batch norm present").mean[index],
            "bn_var" => &mut self.running.as_mut().expect("batch norm present").var[index],
            _ => {
                let layer: usize = name[1..].parse().expect("section names are generated");
                if name.starts_with('W') {
                    &mut self.weights_mut(layer)[index]
                } else {
                    &mut self.bias_mut(layer)[index]
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(input_dim: usize, hidden_layers: usize, width: usize, bn: bool) -> DenseNetConfig {
        DenseNetConfig {
            hidden_layers,
            hidden_width: width,
            batch_norm: bn,
            ..DenseNetConfig::new(input_dim)
        }
    }

    fn net(c: DenseNetConfig, seed: u64) -> DenseNet {
        DenseNet::new(c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn single_affine_output() {
        let mut n = net(cfg(1, 0, 1, true), 0);
        n.weights_mut(0)[0] = 2.0;
        assert_eq!(n.predict(&[3.0]).unwrap(), 6.0);
        assert!(n.running_stats().is_none());
    }

    #[test]
    fn relu_zeroes_negative_preactivation() {
        let mut n = net(cfg(1, 1, 1, false), 0);
        n.weights_mut(0)[0] = 1.0;
        n.bias_mut(0)[0] = -2.0;
        n.weights_mut(1)[0] = 1.0;
        assert_eq!(n.predict(&[1.0]).unwrap(), 0.0);
        assert_eq!(n.predict(&[3.0]).unwrap(), 1.0);
    }

    #[test]
    fn fresh_batch_norm_is_near_identity() {
        let mut c = cfg(3, 2, 5, true);
        c.zeta = 1e-12;
        let with = net(c.clone(), 4);
        c.batch_norm = false;
        let without = net(c, 4);
        assert_eq!(with.params()[..without.n_params()], *without.params());
        for x in [[0.3, -1.0, 2.0], [5.0, 1.0, 0.0]] {
            let a = with.predict(&x).unwrap();
            let b = without.predict(&x).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn glorot_init_bounds_and_zero_biases() {
        let n = net(cfg(16, 8, 64, true), 1);
        for i in 0..9 {
            let (fi, fo) = if i == 0 {
                (16, 64)
            } else if i == 8 {
                (64, 1)
            } else {
                (64, 64)
            };
            let r = (6.0 / (fi + fo) as f64).sqrt();
            assert!(n.weights(i).iter().all(|w| w.abs() <= r));
            assert!(n.bias(i).iter().all(|b| *b == 0.0));
        }
        let (psi, beta) = n.bn_affine().unwrap();
        assert!(psi.iter().all(|p| *p == 1.0) && beta.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn shape_and_target_errors() {
        let mut n = net(cfg(2, 1, 3, true), 0);
        assert!(matches!(n.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(n.train_step(&[1.0, 2.0], f64::NAN), Err(Error::NonFinite(_))));
    }

    #[test]
    fn exact_target_changes_only_step_and_stats() {
        let mut n = net(cfg(2, 2, 4, true), 9);
        let x = [0.4, -0.7];
        let y = n.predict(&x).unwrap();
        let before = n.clone();
        let loss = n.train_step(&x, y).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(n.params(), before.params());
        assert_eq!(n.adam().step, 1);
        assert_ne!(n.running_stats(), before.running_stats());
    }

    #[test]
    fn train_forward_updates_stats_infer_does_not() {
        let mut n = net(cfg(2, 1, 3, true), 2);
        let x = [1.0, 1.0];
        let before = n.running_stats().cloned();
        n.forward(&x, Mode::Infer).unwrap();
        assert_eq!(n.running_stats().cloned(), before);
        n.forward(&x, Mode::Train).unwrap();
        assert_ne!(n.running_stats().cloned(), before);
        assert!(n.running_stats().unwrap().var.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn running_stats_follow_exponential_recurrence() {
        let mut n = net(cfg(1, 1, 1, true), 0);
        n.weights_mut(0)[0] = 1.0;
        n.forward(&[2.0], Mode::Train).unwrap();
        let s = n.running_stats().unwrap();
        // delta = 2, mean = 0.1 * 2, var = 0.9 * (1 + 0.1 * 4)
        assert!((s.mean[0] - 0.2).abs() < 1e-15);
        assert!((s.var[0] - 1.26).abs() < 1e-15);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let run = || {
            let mut n = net(cfg(3, 3, 8, true), 5);
            for k in 0..50 {
                let x = [k as f64 * 0.1, (k as f64).sin(), 1.0];
                n.train_step(&x, x[1] * 2.0).unwrap();
            }
            n
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut n = net(cfg(3, 2, 4, true), 11);
        for k in 0..5 {
            n.train_step(&[k as f64, 1.0, -1.0], 0.5).unwrap();
        }
        let mut buf = Vec::new();
        n.write_checkpoint(&mut buf).unwrap();
        let back = DenseNet::read_checkpoint(buf.as_slice(), n.config().clone()).unwrap();
        assert_eq!(back, n);

        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(DenseNet::read_checkpoint(truncated.as_bytes(), n.config().clone()).is_err());
    }
}
