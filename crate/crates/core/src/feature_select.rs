//! Kernel SHAP attributions, mean-|SHAP| ranking and top-k selection.
//!
//! The value of a coalition `S` is the model output averaged over the
//! background rows with the features in `S` fixed to the explained record.
//! Shapley values are the solution of a weighted linear regression of
//! coalition values on coalition membership, with the Shapley kernel
//! `π(s) = (d - 1) / (C(d, s) · s · (d - s))` as weights and the efficiency
//! constraint `base + Σ φ = f(x)` imposed exactly by eliminating the last
//! feature. When the budget covers every coalition the regression is exact;
//! otherwise coalition sizes are drawn from the kernel's size distribution
//! and each draw is paired with its complement.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Cholesky, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::regressors::Predict;
use crate::seed::{mix, stream_rng};
use crate::subsample::kmeans;
use crate::{Error, Matrix, Result};

/// Rows per batched model call while evaluating coalitions.
const BATCH_CELLS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapConfig {
    /// Reference rows used to impute absent features.
    pub background: Matrix,
    /// Coalitions evaluated per explanation, counting the empty and full ones.
    pub n_coalitions: usize,
    /// Ridge term on the normalised weighted normal equations.
    pub regularization: f64,
    pub seed: u64,
}

impl ShapConfig {
    pub fn new(background: Matrix, seed: u64) -> Self {
        let d = background.ncols();
        Self {
            n_coalitions: default_budget(d),
            background,
            regularization: 1e-10,
            seed,
        }
    }

    pub fn min_budget(n_features: usize) -> usize {
        2 * n_features + 2
    }
}

/// `2d + 2048`, capped at the number of coalitions that exist.
pub fn default_budget(n_features: usize) -> usize {
    let budget = 2 * n_features + 2048;
    if n_features < 63 {
        budget.min(1usize << n_features)
    } else {
        budget
    }
    .max(ShapConfig::min_budget(n_features))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// Mean model output over the background.
    pub base_value: f64,
    pub phi: Vec<f64>,
    /// Model output on the explained record.
    pub prediction: f64,
    /// Ridge actually applied (raised above the configured value when the
    /// weighted system was singular).
    pub regularization: f64,
    /// True when every coalition was enumerated.
    pub exact: bool,
}

impl Attribution {
    pub fn efficiency_residual(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.prediction).abs()
    }
}

fn kernel_weight(d: usize, s: usize) -> f64 {
    // (d-1) / (C(d,s) s (d-s)), with C(d,s) evaluated in log space.
    let ln_binom = ln_factorial(d) - ln_factorial(s) - ln_factorial(d - s);
    (d - 1) as f64 / (s * (d - s)) as f64 * (-ln_binom).exp()
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

type Mask = Vec<u64>;

fn mask_len(d: usize) -> usize {
    d.div_ceil(64)
}

fn contains(mask: &Mask, j: usize) -> bool {
    mask[j / 64] >> (j % 64) & 1 == 1
}

#[cfg(test)]
fn popcount(mask: &Mask) -> usize {
    mask.iter().map(|w| w.count_ones() as usize).sum()
}

fn complement(mask: &Mask, d: usize) -> Mask {
    let mut out: Mask = mask.iter().map(|w| !w).collect();
    if d % 64 != 0 {
        let last = out.len() - 1;
        out[last] &= (1u64 << (d % 64)) - 1;
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp().round()
}

/// Coalitions with their regression weights; empty and full excluded.
///
/// Size tiers `{s, d-s}` are enumerated completely, smallest first, while
/// the budget covers them. Singletons and their complements always fit in
/// the minimum budget, which keeps the weighted system full rank. The
/// remaining tiers are sampled in complementary pairs and share the kernel
/// weight mass those tiers carry.
fn coalitions(d: usize, budget: usize, seed: u64) -> (Vec<(Mask, f64)>, bool) {
    let m = budget - 2;
    if d < 63 && (1usize << d) - 2 <= m {
        let all = (1u64..(1u64 << d) - 1)
            .map(|b| {
                let mask = vec![b];
                let w = kernel_weight(d, b.count_ones() as usize);
                (mask, w)
            })
            .collect();
        return (all, true);
    }

    let mut out: Vec<(Mask, f64)> = Vec::new();
    let mut left = m;
    let mut s = 1;
    while s <= d / 2 {
        let tier = if 2 * s == d { binomial(d, s) } else { 2.0 * binomial(d, s) };
        if tier > left as f64 {
            break;
        }
        let w = kernel_weight(d, s);
        for members in subsets(d, s) {
            let mut mask = vec![0u64; mask_len(d)];
            for j in members {
                mask[j / 64] |= 1 << (j % 64);
            }
            if 2 * s != d {
                out.push((complement(&mask, d), w));
            }
            out.push((mask, w));
        }
        left -= tier as usize;
        s += 1;
    }

    let sizes: Vec<usize> = (s..=d - s).collect();
    if sizes.is_empty() || left == 0 {
        return (out, false);
    }
    // Total kernel weight of a size tier is (d-1)/(s(d-s)).
    let size_w: Vec<f64> = sizes.iter().map(|&s| 1.0 / (s * (d - s)) as f64).collect();
    let total: f64 = size_w.iter().sum();
    let mass = (d - 1) as f64 * total;
    let mut rng = stream_rng(seed, 0);
    let mut counts: BTreeMap<Mask, f64> = BTreeMap::new();
    let mut drawn = 0;
    while drawn < left {
        let mut u = rng.random::<f64>() * total;
        let mut size = sizes[sizes.len() - 1];
        for (&sz, &w) in sizes.iter().zip(&size_w) {
            if u < w {
                size = sz;
                break;
            }
            u -= w;
        }
        let mut mask = vec![0u64; mask_len(d)];
        for j in sample(&mut rng, d, size).iter() {
            mask[j / 64] |= 1 << (j % 64);
        }
        let comp = complement(&mask, d);
        *counts.entry(mask).or_insert(0.0) += 1.0;
        drawn += 1;
        if drawn < left {
            *counts.entry(comp).or_insert(0.0) += 1.0;
            drawn += 1;
        }
    }
    let per_draw = mass / drawn as f64;
    out.extend(counts.into_iter().map(|(mask, c)| (mask, c * per_draw)));
    (out, false)
}

/// All `k`-element subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut cur: Option<Vec<usize>> = Some((0..k).collect());
    std::iter::from_fn(move || {
        let out = cur.take()?;
        let mut next = out.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                cur = Some(next);
                break;
            }
        }
        Some(out)
    })
}

fn coalition_values<P: Predict + ?Sized>(
    model: &P,
    record: &[f64],
    background: &Matrix,
    masks: &[(Mask, f64)],
) -> Vec<f64> {
    let d = record.len();
    let nb = background.nrows();
    let per_batch = (BATCH_CELLS / (nb * d).max(1)).max(1);
    let mut values = Vec::with_capacity(masks.len());
    for chunk in masks.chunks(per_batch) {
        let mut rows = Matrix::zeros(chunk.len() * nb, d);
        for (c, (mask, _)) in chunk.iter().enumerate() {
            for b in 0..nb {
                let r = c * nb + b;
                for j in 0..d {
                    rows[(r, j)] = if contains(mask, j) { record[j] } else { background[(b, j)] };
                }
            }
        }
        let preds = model.predict_rows(&rows);
        values.extend(preds.chunks(nb).map(|p| p.iter().sum::<f64>() / nb as f64));
    }
    values
}

/// Kernel SHAP explanation of `model` at `record`.
pub fn kernel_shap<P: Predict + ?Sized>(model: &P, record: &[f64], config: &ShapConfig) -> Result<Attribution> {
    let d = model.n_features();
    if record.len() != d {
        return Err(Error::DimensionMismatch {
            what: "explained record arity",
            expected: d,
            got: record.len(),
        });
    }
    if config.background.nrows() == 0 {
        return Err(Error::Empty("shap background"));
    }
    if config.background.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "shap background arity",
            expected: d,
            got: config.background.ncols(),
        });
    }
    if d == 0 {
        return Err(Error::Empty("features to explain"));
    }
    let needed = ShapConfig::min_budget(d);
    if config.n_coalitions < needed {
        return Err(Error::BudgetTooSmall {
            budget: config.n_coalitions,
            n_features: d,
            needed,
        });
    }

    let base_value = {
        let p = model.predict_rows(&config.background);
        p.iter().sum::<f64>() / p.len() as f64
    };
    let prediction = model.predict_rows(&Matrix::from_row_slice(1, d, record))[0];
    let delta = prediction - base_value;
    if d == 1 {
        return Ok(Attribution {
            base_value,
            phi: vec![delta],
            prediction,
            regularization: 0.0,
            exact: true,
        });
    }

    let (masks, exact) = coalitions(d, config.n_coalitions, config.seed);
    let values = coalition_values(model, record, &config.background, &masks);

    // Eliminate φ_last = Δ - Σ_{i<last} φ_i:
    //   v(z) - base - z_last Δ = Σ_{i<last} (z_i - z_last) φ_i
    let last = d - 1;
    let k = d - 1;
    let wsum: f64 = masks.iter().map(|(_, w)| w).sum();
    let mut normal = Matrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    let mut a = vec![0.0; k];
    for ((mask, w), v) in masks.iter().zip(&values) {
        let w = w / wsum;
        let z_last = if contains(mask, last) { 1.0 } else { 0.0 };
        let t = v - base_value - z_last * delta;
        for (i, ai) in a.iter_mut().enumerate() {
            *ai = (if contains(mask, i) { 1.0 } else { 0.0 }) - z_last;
        }
        for i in 0..k {
            if a[i] == 0.0 {
                continue;
            }
            rhs[i] += w * a[i] * t;
            for j in 0..k {
                normal[(i, j)] += w * a[i] * a[j];
            }
        }
    }

    let mut reg = config.regularization;
    let beta = loop {
        let mut m = normal.clone();
        for i in 0..k {
            m[(i, i)] += reg;
        }
        if let Some(ch) = Cholesky::new(m) {
            break ch.solve(&rhs);
        }
        if reg > 1e-2 {
            return Err(Error::Degenerate("kernel shap weighted system is singular".into()));
        }
        reg = if reg == 0.0 { 1e-12 } else { reg * 100.0 };
    };
    let mut phi: Vec<f64> = beta.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());

    Ok(Attribution {
        base_value,
        phi,
        prediction,
        regularization: reg,
        exact,
    })
}

/// Explains every row of `x`; row `r` samples coalitions from its own
/// stream derived from `(config.seed, r)`.
pub fn explain_rows<P: Predict + ?Sized>(model: &P, x: &Matrix, config: &ShapConfig) -> Result<Vec<Attribution>> {
    (0..x.nrows())
        .into_par_iter()
        .map(|r| {
            let record: Vec<f64> = x.row(r).iter().copied().collect();
            let cfg = ShapConfig {
                background: config.background.clone(),
                seed: mix(config.seed, r as u64),
                ..*config
            };
            kernel_shap(model, &record, &cfg)
        })
        .collect()
}

/// Centroids of a seeded k-means over `x`, used as a compact background.
/// Returns `x` unchanged when it has at most `k` rows.
pub fn kmeans_background(x: &Matrix, k: usize, seed: u64) -> Result<Matrix> {
    if x.nrows() <= k {
        return Ok(x.clone());
    }
    let (model, _) = kmeans(x, k, seed)?;
    Ok(model.centroids)
}

/// Features ordered by mean |φ|, descending; ties keep the lower index first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl FeatureRanking {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `feature_name,score,rank` with rank counted from 1.
    pub fn write_csv<W: Write>(&self, feature_names: &[String], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature_name", "score", "rank"])?;
        for (rank, (&i, s)) in self.indices.iter().zip(&self.scores).enumerate() {
            let name = feature_names.get(i).cloned().unwrap_or_else(|| i.to_string());
            w.write_record([name, format!("{s}"), (rank + 1).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn rank_features(attributions: &[Attribution]) -> Result<FeatureRanking> {
    let first = attributions.first().ok_or(Error::Empty("attributions"))?;
    let d = first.phi.len();
    let mut scores = vec![0.0; d];
    for a in attributions {
        if a.phi.len() != d {
            return Err(Error::DimensionMismatch {
                what: "attribution arity",
                expected: d,
                got: a.phi.len(),
            });
        }
        for (s, p) in scores.iter_mut().zip(&a.phi) {
            *s += p.abs();
        }
    }
    let n = attributions.len() as f64;
    scores.iter_mut().for_each(|s| *s /= n);
    let mut indices: Vec<usize> = (0..d).collect();
    indices.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let sorted = indices.iter().map(|&i| scores[i]).collect();
    Ok(FeatureRanking {
        indices,
        scores: sorted,
    })
}

/// The `k` best-ranked features, returned in ascending index order.
pub fn select_top_k(ranking: &FeatureRanking, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > ranking.len() {
        return Err(Error::KOutOfRange { k, max: ranking.len() });
    }
    let mut out = ranking.indices[..k].to_vec();
    out.sort_unstable();
    Ok(out)
}
