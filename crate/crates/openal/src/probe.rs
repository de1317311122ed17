//! The target-class classifier retrained each round: a multinomial softmax
//! linear model trained with full-batch gradient descent on L2-regularized
//! cross-entropy. Zero initialization and full-batch sums keep training a
//! pure function of the data and config.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            learning_rate: 0.1,
            epochs: 200,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeModel {
    /// K x d weight matrix, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub class_count: usize,
    pub dim: usize,
    pub epochs_run: usize,
    pub final_loss: f64,
}

/// Trains a softmax probe over `class_count` classes. Classes absent from the
/// training set keep their zero-initialized rows (predictable but untrained).
pub fn train_probe(
    labeled: &[(Vec<f64>, usize)],
    class_count: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeModel> {
    if labeled.is_empty() {
        return Err(Error::EmptyInput("train_probe: no labeled samples".into()));
    }
    let dim = labeled[0].0.len();
    for (z, y) in labeled {
        if z.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: z.len(),
            });
        }
        debug_assert!(*y < class_count);
    }
    let mut weights = vec![0.0; class_count * dim];
    let mut biases = vec![0.0; class_count];
    let mut final_loss = loss(&weights, &biases, class_count, dim, labeled, cfg.l2_penalty);
    for _ in 0..cfg.epochs {
        let (gw, gb) = gradient(&weights, &biases, class_count, dim, labeled, cfg.l2_penalty);
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= cfg.learning_rate * g;
        }
        for (b, g) in biases.iter_mut().zip(&gb) {
            *b -= cfg.learning_rate * g;
        }
        final_loss = loss(&weights, &biases, class_count, dim, labeled, cfg.l2_penalty);
    }
    Ok(ProbeModel {
        weights,
        biases,
        class_count,
        dim,
        epochs_run: cfg.epochs,
        final_loss,
    })
}

/// Mean cross-entropy plus (l2/2)*||W||^2. Biases are not penalized.
pub fn loss(
    weights: &[f64],
    biases: &[f64],
    class_count: usize,
    dim: usize,
    batch: &[(Vec<f64>, usize)],
    l2_penalty: f64,
) -> f64 {
    let n = batch.len() as f64;
    let mut total = 0.0;
    for (z, y) in batch {
        let p = softmax(&logits(weights, biases, class_count, dim, z));
        total -= p[*y].max(f64::MIN_POSITIVE).ln();
    }
    let reg: f64 = weights.iter().map(|w| w * w).sum::<f64>() * l2_penalty / 2.0;
    total / n + reg
}

/// Analytic gradient of `loss` with respect to weights and biases.
pub fn gradient(
    weights: &[f64],
    biases: &[f64],
    class_count: usize,
    dim: usize,
    batch: &[(Vec<f64>, usize)],
    l2_penalty: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = batch.len() as f64;
    let mut gw = vec![0.0; class_count * dim];
    let mut gb = vec![0.0; class_count];
    for (z, y) in batch {
        let p = softmax(&logits(weights, biases, class_count, dim, z));
        for k in 0..class_count {
            let delta = p[k] - if k == *y { 1.0 } else { 0.0 };
            gb[k] += delta;
            for j in 0..dim {
                gw[k * dim + j] += delta * z[j];
            }
        }
    }
    for g in &mut gw {
        *g /= n;
    }
    for g in &mut gb {
        *g /= n;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g += l2_penalty * w;
    }
    (gw, gb)
}

fn logits(weights: &[f64], biases: &[f64], class_count: usize, dim: usize, z: &[f64]) -> Vec<f64> {
    (0..class_count)
        .map(|k| {
            let row = &weights[k * dim..(k + 1) * dim];
            biases[k] + row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

/// Softmax with max-subtraction for overflow safety.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn predict_proba(model: &ProbeModel, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: z.len(),
        });
    }
    Ok(softmax(&logits(
        &model.weights,
        &model.biases,
        model.class_count,
        model.dim,
        z,
    )))
}

/// Shannon entropy -sum p ln p, with 0 ln 0 = 0. Range [0, ln K].
pub fn entropy(p: &[f64]) -> Result<f64> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidDistribution(format!("sums to {sum}")));
    }
    if p.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidDistribution("negative entry".into()));
    }
    Ok(p.iter()
        .map(|&x| if x > 0.0 { -x * x.ln() } else { 0.0 })
        .sum())
}

/// Argmax class with ties going to the lowest class index.
pub fn predict_class(model: &ProbeModel, z: &[f64]) -> Result<usize> {
    let p = predict_proba(model, z)?;
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    Ok(best)
}

pub fn accuracy(model: &ProbeModel, test: &[(Vec<f64>, usize)]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyInput("accuracy: empty test set".into()));
    }
    let mut correct = 0usize;
    for (z, y) in test {
        if predict_class(model, z)? == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}
