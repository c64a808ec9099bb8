use rand::Rng;

use super::{DenseNet, DenseNetConfig, Init};
use crate::error::{Error, Result};

/// Magnitude below which gradient components are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Largest `|a - n| / max(|a|, |n|, GRADCHECK_FLOOR)` over all parameters.
    pub max_rel_error: f64,
    /// Parameter index attaining `max_rel_error`.
    pub worst: usize,
}

/// Compares backprop gradients with central differences of step `h`.
/// Running normalization statistics stay frozen throughout.
pub fn finite_diff_gradcheck(net: &DenseNet, x: &[f64], target: f64, h: f64) -> Result<GradCheck> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig("finite-difference step must be positive".into()));
    }
    let (_, analytic) = net.gradient(x, target)?;
    let mut probe = net.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    for k in 0..analytic.len() {
        let p = probe.params()[k];
        probe.params_mut()[k] = p + h;
        let up = probe.loss(x, target)?;
        probe.params_mut()[k] = p - h;
        let down = probe.loss(x, target)?;
        probe.params_mut()[k] = p;
        numeric.push((up - down) / (2.0 * h));
    }
    let (worst, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(GRADCHECK_FLOOR))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradCheck {
        analytic,
        numeric,
        max_rel_error,
        worst,
    })
}

/// Draws a net with `affine_layers` affine maps (hidden layers plus output),
/// random widths in 4..=16, every parameter and the frozen running statistics
/// perturbed, plus an input whose pre-activations all sit at least `margin`
/// away from the ReLU kink. Retries until such a pair is found.
pub fn random_gradcheck_case<R: Rng + ?Sized>(
    rng: &mut R,
    affine_layers: usize,
    batch_norm: bool,
    margin: f64,
) -> Result<(DenseNet, Vec<f64>, f64)> {
    if affine_layers == 0 {
        return Err(Error::InvalidConfig("need at least the output layer".into()));
    }
    loop {
        let cfg = DenseNetConfig {
            hidden_layers: affine_layers - 1,
            hidden_width: rng.random_range(4..=16),
            batch_norm,
            init: Init::Uniform(0.1),
            ..DenseNetConfig::new(rng.random_range(4..=16))
        };
        let mut net = DenseNet::new(cfg, rng)?;
        if let Some((psi, beta)) = net.bn_affine_mut() {
            psi.iter_mut().for_each(|p| *p = rng.random_range(0.5..1.5));
            beta.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
        if let Some(stats) = net.running_stats_mut() {
            stats.mean.iter_mut().for_each(|m| *m = rng.random_range(-0.1..0.1));
            stats.var.iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5));
        }
        for _ in 0..20 {
            let x: Vec<f64> = (0..net.config().input_dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            if net.min_abs_preactivation(&x)? > margin {
                let target = rng.random_range(-1.0..1.0);
                return Ok((net, x, target));
            }
        }
    }
}
