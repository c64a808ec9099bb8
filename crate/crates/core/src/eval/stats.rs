//! Friedman rank test and the Conover post-hoc comparison with Bonferroni
//! adjustment. Score matrices are given as blocks (rows) by models (columns).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_blocks: usize,
    pub n_models: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub friedman: FriedmanResult,
    /// Symmetric; `None` on the diagonal.
    pub p_raw: Vec<Vec<Option<f64>>>,
    /// Bonferroni-adjusted, clamped to 1.
    pub p_adjusted: Vec<Vec<Option<f64>>>,
}

fn validate(scores: &[Vec<f64>]) -> Result<(usize, usize)> {
    let n = scores.len();
    let k = scores.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::DegenerateMatrix(format!(
            "need at least 2 blocks and 2 models, got {n}x{k}"
        )));
    }
    if scores.iter().any(|r| r.len() != k) {
        return Err(Error::DegenerateMatrix("ragged score matrix".into()));
    }
    if scores.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateMatrix("non-finite score".into()));
    }
    Ok((n, k))
}

/// Within-row ranks starting at 1, ties sharing their average rank.
pub fn rank_rows(scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    scores
        .iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
            let mut ranks = vec![0.0; row.len()];
            let mut i = 0;
            while i < idx.len() {
                let mut j = i;
                while j + 1 < idx.len() && row[idx[j + 1]] == row[idx[i]] {
                    j += 1;
                }
                let avg = (i + j) as f64 / 2.0 + 1.0;
                for &m in &idx[i..=j] {
                    ranks[m] = avg;
                }
                i = j + 1;
            }
            ranks
        })
        .collect()
}

struct RankSums {
    n: f64,
    k: f64,
    sums: Vec<f64>,
    /// Sum of squared ranks.
    a1: f64,
}

fn rank_sums(scores: &[Vec<f64>]) -> RankSums {
    let ranks = rank_rows(scores);
    let k = scores[0].len();
    let mut sums = vec![0.0; k];
    let mut a1 = 0.0;
    for row in &ranks {
        for (s, r) in sums.iter_mut().zip(row) {
            *s += r;
            a1 += r * r;
        }
    }
    RankSums {
        n: scores.len() as f64,
        k: k as f64,
        sums,
        a1,
    }
}

/// Tie-corrected Friedman chi-square with `k - 1` degrees of freedom.
pub fn friedman_test(scores: &[Vec<f64>]) -> Result<FriedmanResult> {
    let (n_blocks, n_models) = validate(scores)?;
    let rs = rank_sums(scores);
    let (n, k) = (rs.n, rs.k);
    let c1 = n * k * (k + 1.0) * (k + 1.0) / 4.0;
    let denom = rs.a1 - c1;
    let centre = n * (k + 1.0) / 2.0;
    let spread: f64 = rs.sums.iter().map(|r| (r - centre) * (r - centre)).sum();
    let (statistic, p_value) = if denom <= 0.0 {
        (0.0, 1.0)
    } else {
        let stat = (k - 1.0) * spread / denom;
        let chi = ChiSquared::new(k - 1.0).map_err(|e| Error::DegenerateMatrix(e.to_string()))?;
        (stat, chi.sf(stat).clamp(0.0, 1.0))
    };
    Ok(FriedmanResult {
        statistic,
        p_value,
        n_blocks,
        n_models,
    })
}

/// Conover pairwise comparisons after a Friedman test, two-sided, with
/// Bonferroni adjustment over all `k (k - 1) / 2` pairs.
pub fn conover_posthoc(scores: &[Vec<f64>]) -> Result<SignificanceReport> {
    let friedman = friedman_test(scores)?;
    let rs = rank_sums(scores);
    let (n, k) = (rs.n, rs.k);
    let km = friedman.n_models;
    let s2 = (rs.a1 - k * n * (k + 1.0) * (k + 1.0) / 4.0) / (k - 1.0);
    let df = n * k - k - n + 1.0;
    let pairs = (km * (km - 1) / 2) as f64;

    let mut p_raw = vec![vec![None; km]; km];
    let mut p_adjusted = vec![vec![None; km]; km];
    let t_dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::DegenerateMatrix(e.to_string()))?;
    let centre = n * (k + 1.0) / 2.0;
    let t2 = if s2 > 0.0 {
        rs.sums.iter().map(|r| (r - centre) * (r - centre)).sum::<f64>() / s2
    } else {
        0.0
    };
    let a = s2 * 2.0 * n * (k - 1.0) / df;
    let b = 1.0 - t2 / (n * (k - 1.0));
    for i in 0..km {
        for j in i + 1..km {
            let diff = (rs.sums[i] - rs.sums[j]).abs();
            let p = if s2 <= 0.0 || diff == 0.0 {
                1.0
            } else if b <= 0.0 {
                0.0
            } else {
                let t = diff / a.sqrt() / b.sqrt();
                (2.0 * t_dist.sf(t)).clamp(0.0, 1.0)
            };
            let adj = (p * pairs).min(1.0);
            p_raw[i][j] = Some(p);
            p_raw[j][i] = Some(p);
            p_adjusted[i][j] = Some(adj);
            p_adjusted[j][i] = Some(adj);
        }
    }
    Ok(SignificanceReport {
        friedman,
        p_raw,
        p_adjusted,
    })
}
