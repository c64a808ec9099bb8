use crate::error::{Error, Result};

/// Root mean squared error of `(prediction, realized)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("rmse of no forecasts"));
    }
    let sse: f64 = pairs.iter().map(|(p, r)| (p - r) * (p - r)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

/// RMSE over a growing prefix, updated one error at a time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningRmse {
    sse: f64,
    n: u64,
}

impl RunningRmse {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one error and returns the RMSE of the prefix so far.
    pub fn push(&mut self, error: f64) -> f64 {
        self.sse += error * error;
        self.n += 1;
        self.value()
    }

    pub fn value(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.sse / self.n as f64).sqrt()
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }
}

/// Running RMSE after each record.
pub fn running_rmse(pairs: &[(f64, f64)]) -> Vec<f64> {
    let mut acc = RunningRmse::new();
    pairs.iter().map(|(p, r)| acc.push(p - r)).collect()
}

/// Mean over events of `RMSE_t / p_t`, with `RMSE_t` the running RMSE up to
/// event `t` and `p_t` the realized mid at `t`.
pub fn rrmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("rrmse of no forecasts"));
    }
    let mut acc = RunningRmse::new();
    let mut total = 0.0;
    for (p, r) in pairs {
        if !(*r > 0.0) {
            return Err(Error::NonPositive {
                row: acc.count() as usize,
                field: "realized mid",
                value: *r,
            });
        }
        total += acc.push(p - r) / r;
    }
    Ok(total / pairs.len() as f64)
}

/// `(rmse - rrmse) / rmse * 100`.
pub fn error_reduction_pct(rmse: f64, rrmse: f64) -> Result<f64> {
    if rmse == 0.0 {
        return Err(Error::ZeroRmse);
    }
    Ok((rmse - rrmse) / rmse * 100.0)
}

/// Arithmetic mean and sample standard deviation (zero for one value).
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput("mean of no values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[(1.0, 1.0), (2.0, 2.0)]).unwrap(), 0.0);
        assert_eq!(rmse(&[(1.0, 0.0), (-1.0, 0.0)]).unwrap(), 1.0);
        assert!((rmse(&[(3.0, 0.0), (4.0, 0.0)]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[]).is_err());
    }

    #[test]
    fn rrmse_examples() {
        assert_eq!(rrmse(&[(5.0, 5.0), (6.0, 6.0)]).unwrap(), 0.0);
        let pairs: Vec<(f64, f64)> = (0..50)
            .map(|i| (100.0 + if i % 2 == 0 { 0.1 } else { -0.1 }, 100.0))
            .collect();
        assert!((rrmse(&pairs).unwrap() - 0.001).abs() < 1e-15);
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|(p, r)| (p * 10.0, r * 10.0)).collect();
        let (a, b) = (rrmse(&pairs).unwrap(), rrmse(&scaled).unwrap());
        assert!(((a - b) / a).abs() < 1e-12);
        assert!(rrmse(&[]).is_err());
    }

    #[test]
    fn error_reduction_examples() {
        assert_eq!(error_reduction_pct(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(error_reduction_pct(0.3, 0.0).unwrap(), 100.0);
        assert!((error_reduction_pct(6.020e-1, 5.287e-3).unwrap() - 99.12).abs() < 0.01);
        assert!(matches!(error_reduction_pct(0.0, 0.1), Err(Error::ZeroRmse)));
    }

    #[test]
    fn running_matches_batch() {
        let pairs: Vec<(f64, f64)> = (0..200).map(|i| ((i as f64 * 0.37).sin(), 0.1 * i as f64)).collect();
        for (t, r) in running_rmse(&pairs).iter().enumerate() {
            let batch = rmse(&pairs[..=t]).unwrap();
            assert!((r - batch).abs() <= 1e-10 * batch.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[2.0]).unwrap(), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
