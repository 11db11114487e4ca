//! Shapley attributions for a scalar model output.
//!
//! A coalition `S` is valued by replacing every feature outside `S` with
//! background values and averaging the model output over the background
//! rows. [`shap_exact`] enumerates all coalitions; [`shap_kernel`] fits the
//! Shapley-kernel weighted regression on sampled coalitions with the
//! additivity constraint solved in closed form.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Classifier, ModelError};

/// Largest dimension accepted by [`shap_exact`].
pub const MAX_EXACT_DIM: usize = 16;
pub const DEFAULT_BACKGROUND: usize = 50;
/// Name of the explained quantity for [`Classifier`] models.
pub const WIN_PROBABILITY: &str = "p_win";

/// Rows per model call when evaluating coalitions.
const EVAL_CHUNK_ROWS: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum ShapError {
    #[error("exact Shapley values need d <= {max}, got {d}")]
    DimensionTooLarge { d: usize, max: usize },
    #[error("kernel SHAP needs at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("singular regression system (background identical to the instance)")]
    Singular,
    #[error("background set is empty")]
    EmptyBackground,
    #[error("no attributions to summarize")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Scalar-output model evaluated row-wise on a batch.
pub trait OutputModel: Sync {
    fn predict(&self, rows: &Array2<f64>) -> Result<Vec<f64>, ShapError>;
}

impl OutputModel for Classifier {
    fn predict(&self, rows: &Array2<f64>) -> Result<Vec<f64>, ShapError> {
        Ok(self.win_probability(rows)?)
    }
}

impl<F> OutputModel for F
where
    F: Fn(ArrayView1<f64>) -> f64 + Sync,
{
    fn predict(&self, rows: &Array2<f64>) -> Result<Vec<f64>, ShapError> {
        Ok(rows.rows().into_iter().map(self).collect())
    }
}

/// Attributions for one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapRow {
    pub phi: Vec<f64>,
    /// Mean model output over the background rows.
    pub base_value: f64,
    /// Model output on the instance.
    pub output: f64,
}

/// Attributions for a batch of instances, `n × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapResult {
    pub attributions: Array2<f64>,
    pub base_value: f64,
    pub outputs: Vec<f64>,
    pub target: String,
}

impl ShapResult {
    pub fn from_rows(rows: &[ShapRow], target: impl Into<String>) -> Result<Self, ShapError> {
        let first = rows.first().ok_or(ShapError::Empty)?;
        let d = first.phi.len();
        if let Some(bad) = rows.iter().find(|r| r.phi.len() != d) {
            return Err(ShapError::DimMismatch {
                expected: d,
                found: bad.phi.len(),
            });
        }
        let flat = rows.iter().flat_map(|r| r.phi.iter().copied()).collect();
        Ok(Self {
            attributions: Array2::from_shape_vec((rows.len(), d), flat).expect("shape checked"),
            base_value: first.base_value,
            outputs: rows.iter().map(|r| r.output).collect(),
            target: target.into(),
        })
    }

    pub fn n_instances(&self) -> usize {
        self.attributions.nrows()
    }

    pub fn row(&self, i: usize) -> ShapRow {
        ShapRow {
            phi: self.attributions.row(i).to_vec(),
            base_value: self.base_value,
            output: self.outputs[i],
        }
    }
}

fn check_inputs(x: &[f64], background: &Array2<f64>) -> Result<(), ShapError> {
    if background.nrows() == 0 {
        return Err(ShapError::EmptyBackground);
    }
    if background.ncols() != x.len() {
        return Err(ShapError::DimMismatch {
            expected: x.len(),
            found: background.ncols(),
        });
    }
    Ok(())
}

/// Mean model output for each coalition; `coalitions[k][i]` is true when
/// feature `features[i]` takes its value from `x`.
fn coalition_values(
    model: &dyn OutputModel,
    x: &[f64],
    background: &Array2<f64>,
    features: &[usize],
    coalitions: &[Vec<bool>],
) -> Result<Vec<f64>, ShapError> {
    let m = background.nrows();
    let d = x.len();
    let per_chunk = (EVAL_CHUNK_ROWS / m).max(1);
    let mut values = Vec::with_capacity(coalitions.len());
    for chunk in coalitions.chunks(per_chunk) {
        let mut rows = Array2::zeros((chunk.len() * m, d));
        for (c, mask) in chunk.iter().enumerate() {
            for b in 0..m {
                let mut row = rows.row_mut(c * m + b);
                row.assign(&background.row(b));
                for (&f, _) in features.iter().zip(mask).filter(|(_, &on)| on) {
                    row[f] = x[f];
                }
            }
        }
        let out = model.predict(&rows)?;
        values.extend(out.chunks(m).map(|o| o.iter().sum::<f64>() / m as f64));
    }
    Ok(values)
}

fn eval_single(model: &dyn OutputModel, x: &[f64]) -> Result<f64, ShapError> {
    let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("one row");
    Ok(model.predict(&row)?[0])
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact Shapley values by enumerating all `2^d` coalitions.
pub fn shap_exact(model: &dyn OutputModel, x: &[f64], background: &Array2<f64>) -> Result<ShapRow, ShapError> {
    check_inputs(x, background)?;
    let d = x.len();
    if d > MAX_EXACT_DIM {
        return Err(ShapError::DimensionTooLarge { d, max: MAX_EXACT_DIM });
    }
    let features: Vec<usize> = (0..d).collect();
    let coalitions: Vec<Vec<bool>> = (0..1usize << d)
        .map(|s| (0..d).map(|i| s >> i & 1 == 1).collect())
        .collect();
    let v = coalition_values(model, x, background, &features, &coalitions)?;
    // |S|! (d - |S| - 1)! / d!  =  1 / (d · C(d - 1, |S|))
    let weight: Vec<f64> = (0..d).map(|s| 1.0 / (d as f64 * binomial(d - 1, s))).collect();
    let mut phi = vec![0.0; d];
    for s in 0..1usize << d {
        let size = s.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if s >> i & 1 == 0 {
                *p += weight[size] * (v[s | 1 << i] - v[s]);
            }
        }
    }
    Ok(ShapRow {
        phi,
        base_value: v[0],
        output: v[(1 << d) - 1],
    })
}

/// Coalition masks over the varying features with their regression weights.
fn kernel_coalitions(m: usize, n_samples: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<bool>, f64)> {
    let mut out: Vec<(Vec<bool>, f64)> = Vec::new();
    let complete = m < usize::BITS as usize - 1 && n_samples >= (1usize << m) - 2;
    if complete {
        for s in 1..(1usize << m) - 1 {
            let size = s.count_ones() as usize;
            let w = (m - 1) as f64 / (binomial(m, size) * (size * (m - size)) as f64);
            out.push(((0..m).map(|i| s >> i & 1 == 1).collect(), w));
        }
        return out;
    }

    let n_sizes = m / 2; // ceil((m - 1) / 2)
    let n_paired = (m - 1) / 2;
    let mut size_weight: Vec<f64> = (1..=n_sizes)
        .map(|s| {
            let w = (m - 1) as f64 / (s * (m - s)) as f64;
            if s <= n_paired {
                2.0 * w
            } else {
                w
            }
        })
        .collect();
    let total: f64 = size_weight.iter().sum();
    size_weight.iter_mut().for_each(|w| *w /= total);

    // Enumerate whole subset sizes while the budget covers them.
    let mut remaining = size_weight.clone();
    let mut left = n_samples as f64;
    let mut n_full = 0;
    for s in 1..=n_sizes {
        let paired = s <= n_paired;
        let n_subsets = binomial(m, s) * if paired { 2.0 } else { 1.0 };
        if left * remaining[s - 1] / n_subsets < 1.0 - 1e-8 {
            break;
        }
        n_full += 1;
        left -= n_subsets;
        let r = remaining[s - 1];
        if r < 1.0 {
            remaining.iter_mut().for_each(|w| *w /= 1.0 - r);
        }
        let mut w = size_weight[s - 1] / binomial(m, s);
        if paired {
            w /= 2.0;
        }
        for_each_combination(m, s, |mask| {
            out.push((mask.to_vec(), w));
            if paired {
                out.push((mask.iter().map(|b| !b).collect(), w));
            }
        });
    }

    // Sample the remaining sizes; repeats accumulate weight.
    let n_fixed = out.len();
    let mut samples_left = n_samples.saturating_sub(n_fixed);
    if n_full < n_sizes && samples_left > 0 {
        let mut probs: Vec<f64> = size_weight[n_full..]
            .iter()
            .enumerate()
            .map(|(k, &w)| if k + n_full < n_paired { w / 2.0 } else { w })
            .collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        let dist = rand::distr::weighted::WeightedIndex::new(&probs).expect("positive weights");
        let mut seen: HashMap<Vec<bool>, usize> = HashMap::new();
        let mut order: Vec<usize> = (0..m).collect();
        for _ in 0..4 * samples_left {
            if samples_left == 0 {
                break;
            }
            let size = rand::Rng::sample(rng, &dist) + n_full + 1;
            order.shuffle(rng);
            let mut mask = vec![false; m];
            for &i in &order[..size] {
                mask[i] = true;
            }
            let mut add = |mask: Vec<bool>| match seen.get(&mask) {
                Some(&i) => {
                    out[i].1 += 1.0;
                    0
                }
                None => {
                    seen.insert(mask.clone(), out.len());
                    out.push((mask, 1.0));
                    1
                }
            };
            let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
            samples_left -= add(mask);
            if samples_left > 0 && size <= n_paired {
                samples_left -= add(complement);
            }
        }
        let weight_left: f64 = size_weight[n_full..].iter().sum();
        let sampled: f64 = out[n_fixed..].iter().map(|(_, w)| w).sum();
        if sampled > 0.0 {
            out[n_fixed..].iter_mut().for_each(|(_, w)| *w *= weight_left / sampled);
        }
    }
    out
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[bool])) {
    let mut idx: Vec<usize> = (0..k).collect();
    let mut mask = vec![false; n];
    loop {
        mask.iter_mut().for_each(|b| *b = false);
        idx.iter().for_each(|&i| mask[i] = true);
        f(&mask);
        let Some(pos) = (0..k).rev().find(|&p| idx[p] != p + n - k) else {
            return;
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Solves `a · x = b` in place by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, ShapError> {
    let n = b.len();
    let scale = a.iter().enumerate().map(|(i, r)| r[i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(ShapError::Singular);
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[piv][col].abs() <= 1e-12 * scale {
            return Err(ShapError::Singular);
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

/// Kernel SHAP estimate from `n_samples` coalitions, deterministic per seed.
///
/// Features whose value equals every background value cannot change the
/// output and get zero attribution. When the budget covers all coalitions
/// of the remaining features the result is exact.
pub fn shap_kernel(
    model: &dyn OutputModel,
    x: &[f64],
    background: &Array2<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<ShapRow, ShapError> {
    check_inputs(x, background)?;
    let d = x.len();
    let min = 2 * d + 2;
    if n_samples < min {
        return Err(ShapError::TooFewSamples { n: n_samples, min });
    }
    let varying: Vec<usize> = (0..d)
        .filter(|&i| background.column(i).iter().any(|&b| b != x[i]))
        .collect();
    if varying.is_empty() {
        return Err(ShapError::Singular);
    }
    let base_value = coalition_values(model, x, background, &varying, &[vec![false; varying.len()]])?[0];
    let output = eval_single(model, x)?;
    let delta = output - base_value;
    let mut phi = vec![0.0; d];
    let m = varying.len();
    if m == 1 {
        phi[varying[0]] = delta;
        return Ok(ShapRow {
            phi,
            base_value,
            output,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coalitions = kernel_coalitions(m, n_samples, &mut rng);
    let masks: Vec<Vec<bool>> = coalitions.iter().map(|(mask, _)| mask.clone()).collect();
    let values = coalition_values(model, x, background, &varying, &masks)?;

    // Eliminate the last feature through the constraint sum(phi) = delta.
    let last = m - 1;
    let mut ata = vec![vec![0.0; last]; last];
    let mut atb = vec![0.0; last];
    let mut z = vec![0.0; last];
    for ((mask, w), v) in coalitions.iter().zip(&values) {
        let z_last = f64::from(u8::from(mask[last]));
        for (zj, &on) in z.iter_mut().zip(mask) {
            *zj = f64::from(u8::from(on)) - z_last;
        }
        let y = v - base_value - z_last * delta;
        for i in 0..last {
            if z[i] == 0.0 {
                continue;
            }
            atb[i] += w * z[i] * y;
            for j in 0..last {
                ata[i][j] += w * z[i] * z[j];
            }
        }
    }
    let partial = solve(ata, atb)?;
    for (&f, p) in varying.iter().zip(&partial) {
        phi[f] = *p;
    }
    phi[varying[last]] = delta - partial.iter().sum::<f64>();
    Ok(ShapRow {
        phi,
        base_value,
        output,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapMethod {
    Exact,
    Kernel { n_samples: usize, seed: u64 },
}

/// Explains every row of `instances`; kernel seeds are offset by row index.
pub fn explain_batch(
    model: &dyn OutputModel,
    instances: &Array2<f64>,
    background: &Array2<f64>,
    method: ShapMethod,
    target: &str,
) -> Result<ShapResult, ShapError> {
    let rows: Vec<ShapRow> = (0..instances.nrows())
        .into_par_iter()
        .map(|i| {
            let x = instances.row(i).to_vec();
            match method {
                ShapMethod::Exact => shap_exact(model, &x, background),
                ShapMethod::Kernel { n_samples, seed } => {
                    shap_kernel(model, &x, background, n_samples, seed.wrapping_add(i as u64))
                }
            }
        })
        .collect::<Result<_, _>>()?;
    ShapResult::from_rows(&rows, target)
}

/// Up to `max_rows` rows drawn uniformly without replacement, in input order.
pub fn sample_background(data: &Array2<f64>, max_rows: usize, seed: u64) -> Array2<f64> {
    let n = data.nrows();
    if n <= max_rows {
        return data.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, max_rows).into_vec();
    idx.sort_unstable();
    data.select(ndarray::Axis(0), &idx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub name: String,
    pub mean_abs: f64,
}

/// Features by mean absolute attribution, descending, ties in schema order.
pub fn shap_summary(results: &ShapResult, schema: &[String], top_k: usize) -> Result<Vec<RankedFeature>, ShapError> {
    if results.n_instances() == 0 {
        return Err(ShapError::Empty);
    }
    if results.attributions.ncols() != schema.len() {
        return Err(ShapError::DimMismatch {
            expected: schema.len(),
            found: results.attributions.ncols(),
        });
    }
    let n = results.n_instances() as f64;
    let mut scored: Vec<(usize, f64)> = results
        .attributions
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n)
        .enumerate()
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .take(top_k)
        .enumerate()
        .map(|(r, (i, mean_abs))| RankedFeature {
            rank: r + 1,
            name: schema[i].clone(),
            mean_abs,
        })
        .collect())
}

/// `rank,feature_name,mean_abs_shap`.
pub fn summary_csv(ranking: &[RankedFeature]) -> String {
    let mut s = String::from("rank,feature_name,mean_abs_shap\n");
    for r in ranking {
        writeln!(s, "{},{},{}", r.rank, r.name, r.mean_abs).expect("write to string");
    }
    s
}

#[derive(Serialize)]
struct InstanceLine<'a> {
    id: &'a str,
    target: &'a str,
    base_value: f64,
    output: f64,
    attributions: Vec<f64>,
}

/// One JSON object per instance; `attributions` follow the schema order.
pub fn attributions_jsonl(results: &ShapResult, ids: &[String]) -> String {
    let mut s = String::new();
    for (i, id) in ids.iter().enumerate().take(results.n_instances()) {
        let line = InstanceLine {
            id,
            target: &results.target,
            base_value: results.base_value,
            output: results.outputs[i],
            attributions: results.attributions.row(i).to_vec(),
        };
        s.push_str(&serde_json::to_string(&line).expect("serializable"));
        s.push('\n');
    }
    s
}
