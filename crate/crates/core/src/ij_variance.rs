//! Variance of forest predictions from the resample count matrix.
//!
//! For a test point with per-tree predictions `T_b` (mean `T̄`) and counts
//! `N_bi`, the infinitesimal jackknife is
//!
//! ```text
//! C_i  = (1/B) sum_b (N_bi - s/n) (T_b - T̄)
//! raw  = sum_i C_i^2
//! v̂    = (1/B) sum_b (T_b - T̄)^2
//! ```
//!
//! and `raw` is inflated by Monte Carlo noise of order `Var(N) v̂ / B` summed
//! over observations. Subsampled forests subtract `s(n-s)/n * v̂/B`;
//! bootstrap forests subtract `n * v̂/B` (see [`BiasCorrection`]).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::resampling::ResampleMode;
use crate::tree::check_point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    InfinitesimalJackknife,
    JackknifeAfterBootstrap,
}

/// Which Monte Carlo correction to subtract from the raw estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasCorrection {
    /// `Subsample` for subsampled forests and `Bootstrap` for bootstrap forests.
    #[default]
    Auto,
    /// `s(n-s)/n * v̂/B`, which is zero for a bootstrap forest (`s = n`). Spelled `eq5`.
    #[serde(rename = "eq5")]
    Subsample,
    /// `n * v̂/B`.
    Bootstrap,
    None,
}

impl BiasCorrection {
    pub fn as_str(self) -> &'static str {
        match self {
            BiasCorrection::Auto => "auto",
            BiasCorrection::Subsample => "eq5",
            BiasCorrection::Bootstrap => "bootstrap",
            BiasCorrection::None => "none",
        }
    }

    fn factor(self, mode: ResampleMode, n: usize, s: usize) -> f64 {
        let (n, s) = (n as f64, s as f64);
        let resolved = match (self, mode) {
            (BiasCorrection::Auto, ResampleMode::Bootstrap) => BiasCorrection::Bootstrap,
            (BiasCorrection::Auto, ResampleMode::Subsample) => BiasCorrection::Subsample,
            (other, _) => other,
        };
        match resolved {
            BiasCorrection::Subsample => s * (n - s) / n,
            BiasCorrection::Bootstrap => n,
            BiasCorrection::None | BiasCorrection::Auto => 0.0,
        }
    }
}

impl fmt::Display for BiasCorrection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasCorrection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(BiasCorrection::Auto),
            "eq5" => Ok(BiasCorrection::Subsample),
            "bootstrap" => Ok(BiasCorrection::Bootstrap),
            "none" => Ok(BiasCorrection::None),
            other => Err(Error::param(format!(
                "unknown bias correction '{other}' (expected auto, eq5, bootstrap or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VarianceOptions {
    pub correction: BiasCorrection,
    /// Clamp the correction to `raw` so the corrected value is never negative.
    pub floor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub raw: f64,
    pub correction: f64,
    /// Always `raw - correction`.
    pub corrected: f64,
    pub n_trees: usize,
    pub estimator: Estimator,
}

impl VarianceEstimate {
    fn ij(raw: f64, correction: f64, n_trees: usize, floor: bool) -> Self {
        let correction = if floor { correction.min(raw) } else { correction };
        Self {
            raw,
            correction,
            corrected: raw - correction,
            n_trees,
            estimator: Estimator::InfinitesimalJackknife,
        }
    }
}

/// Bias-corrected infinitesimal jackknife with the default correction.
pub fn ij_variance(forest: &ForestModel, x: &[f64]) -> Result<VarianceEstimate> {
    ij_variance_with(forest, x, VarianceOptions::default())
}

pub fn ij_variance_with(
    forest: &ForestModel,
    x: &[f64],
    options: VarianceOptions,
) -> Result<VarianceEstimate> {
    let mut out = predict_with_variance(forest, &[x], options)?;
    Ok(out.pop().expect("one row in, one row out").1)
}

/// Prediction and IJ variance for every row of `rows`. Each row's result is
/// bit-identical to evaluating that row alone.
pub fn predict_with_variance<X: AsRef<[f64]> + Sync>(
    forest: &ForestModel,
    rows: &[X],
    options: VarianceOptions,
) -> Result<Vec<(f64, VarianceEstimate)>> {
    let b = forest.n_trees();
    if b < 2 {
        return Err(Error::param("variance estimation needs at least 2 trees"));
    }
    for row in rows {
        check_point(row.as_ref(), forest.p())?;
    }
    let chunks: Vec<Vec<(f64, VarianceEstimate)>> = rows
        .par_chunks(ROWS_PER_CHUNK)
        .map(|chunk| estimate_chunk(forest, chunk, options))
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Bounds the `rows x n` accumulator matrix held at once.
const ROWS_PER_CHUNK: usize = 64;

fn estimate_chunk<X: AsRef<[f64]> + Sync>(
    forest: &ForestModel,
    rows: &[X],
    options: VarianceOptions,
) -> Vec<(f64, VarianceEstimate)> {
    let b = forest.n_trees();
    let n = forest.n();
    let factor = options
        .correction
        .factor(forest.config().resample, n, forest.resample_size());
    influence_chunk(forest, rows)
        .into_iter()
        .map(|row| {
            let raw = compensated_sum(row.components.iter().map(|c| c * c));
            let correction = factor * row.v_hat / b as f64;
            (row.mean, VarianceEstimate::ij(raw, correction, b, options.floor))
        })
        .collect()
}

struct Influence {
    mean: f64,
    v_hat: f64,
    components: Vec<f64>,
}

/// Per-observation IJ components `C_i = (1/B) sum_b (N_bi - s/n)(T_b - T̄)`
/// at `x`; the raw IJ estimate is `sum_i C_i^2`.
pub fn ij_components(forest: &ForestModel, x: &[f64]) -> Result<Vec<f64>> {
    if forest.n_trees() < 2 {
        return Err(Error::param("variance estimation needs at least 2 trees"));
    }
    check_point(x, forest.p())?;
    Ok(influence_chunk(forest, &[x]).pop().expect("one row").components)
}

fn influence_chunk<X: AsRef<[f64]> + Sync>(forest: &ForestModel, rows: &[X]) -> Vec<Influence> {
    let b = forest.n_trees();
    let n = forest.n();
    let e = forest.resample_size() as f64 / n as f64;
    let b_f = b as f64;

    // Per row: mean prediction, centred tree predictions, v̂ and sum of deviations.
    let centred: Vec<(f64, Vec<f64>, f64, f64)> = rows
        .par_iter()
        .map(|row| {
            let preds = forest.per_tree_unchecked(row.as_ref());
            let mean = compensated_sum(preds.iter().copied()) / b_f;
            let dev: Vec<f64> = preds.iter().map(|t| t - mean).collect();
            let v_hat = compensated_sum(dev.iter().map(|d| d * d)) / b_f;
            let dev_sum = compensated_sum(dev.iter().copied());
            (mean, dev, v_hat, dev_sum)
        })
        .collect();

    // S[k][i] = sum_b N_bi dev[k][b], accumulated tree by tree over the nonzero
    // counts. The order of additions into each accumulator is fixed (b ascending),
    // so batching rows cannot change any result.
    let k_rows = rows.len();
    let mut dev_by_tree = vec![0.0; b * k_rows];
    for (k, (_, dev, _, _)) in centred.iter().enumerate() {
        for (tree, d) in dev.iter().enumerate() {
            dev_by_tree[tree * k_rows + k] = *d;
        }
    }
    let mut acc = vec![CompensatedSum::new(); n * k_rows];
    for (tree, counts) in forest.counts().iter().enumerate() {
        let devs = &dev_by_tree[tree * k_rows..(tree + 1) * k_rows];
        for (i, &c) in counts.counts().iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = f64::from(c);
            for (a, d) in acc[i * k_rows..(i + 1) * k_rows].iter_mut().zip(devs) {
                a.add(c * d);
            }
        }
    }

    centred
        .into_iter()
        .enumerate()
        .map(|(k, (mean, _, v_hat, dev_sum))| Influence {
            mean,
            v_hat,
            components: (0..n)
                .map(|i| (acc[i * k_rows + k].value() - e * dev_sum) / b_f)
                .collect(),
        })
        .collect()
}

/// Jackknife-after-bootstrap: `(n-1)/n * sum_i (t̄_(-i) - t̄_(.))^2`, where
/// `t̄_(-i)` averages the trees whose resample omits observation `i`.
pub fn jackknife_after_bootstrap(forest: &ForestModel, x: &[f64]) -> Result<VarianceEstimate> {
    if forest.config().resample != ResampleMode::Bootstrap {
        return Err(Error::param(
            "jackknife-after-bootstrap requires a bootstrap forest",
        ));
    }
    let preds = forest.predict_per_tree(x)?;
    let n = forest.n();
    let mut sums = vec![CompensatedSum::new(); n];
    let mut omitted = vec![0usize; n];
    for (t, counts) in preds.iter().zip(forest.counts()) {
        for (i, &c) in counts.counts().iter().enumerate() {
            if c == 0 {
                sums[i].add(*t);
                omitted[i] += 1;
            }
        }
    }
    if let Some(i) = omitted.iter().position(|&m| m == 0) {
        return Err(Error::NeverOmitted(i));
    }
    let loo: Vec<f64> = sums
        .iter()
        .zip(&omitted)
        .map(|(s, &m)| s.value() / m as f64)
        .collect();
    let grand = compensated_sum(loo.iter().copied()) / n as f64;
    let ss = compensated_sum(loo.iter().map(|v| (v - grand) * (v - grand)));
    let value = (n as f64 - 1.0) / n as f64 * ss;
    Ok(VarianceEstimate {
        raw: value,
        correction: 0.0,
        corrected: value,
        n_trees: preds.len(),
        estimator: Estimator::JackknifeAfterBootstrap,
    })
}
