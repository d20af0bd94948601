//! L2-regularized logistic regression (SGD) and linear SVM (Pegasos).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_data, ModelError};
use crate::corpus::Label;
use crate::seed;
use crate::vectorize::{CombinedVector, Dims};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn margin(&self, x: &CombinedVector, dims: Dims) -> f64 {
        x.iter_features(dims.sparse)
            .map(|(j, v)| self.weights[j] * v)
            .sum::<f64>()
            + self.bias
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Weight vector stored as `scale · raw` so the per-step L2 shrink is O(1).
/// `raw_bias` is shrunk with the weights; only the SVM uses it.
struct ScaledWeights {
    raw: Vec<f64>,
    raw_bias: f64,
    scale: f64,
}

impl ScaledWeights {
    fn new(d: usize) -> Self {
        ScaledWeights {
            raw: vec![0.0; d],
            raw_bias: 0.0,
            scale: 1.0,
        }
    }

    fn dot(&self, x: &CombinedVector, dims: Dims) -> f64 {
        self.scale
            * x.iter_features(dims.sparse)
                .map(|(j, v)| self.raw[j] * v)
                .sum::<f64>()
    }

    fn shrink(&mut self, factor: f64) {
        if factor <= 0.0 {
            self.raw.iter_mut().for_each(|w| *w = 0.0);
            self.raw_bias = 0.0;
            self.scale = 1.0;
            return;
        }
        self.scale *= factor;
        if self.scale < 1e-9 {
            let s = self.scale;
            self.raw.iter_mut().for_each(|w| *w *= s);
            self.raw_bias *= s;
            self.scale = 1.0;
        }
    }

    fn add(&mut self, x: &CombinedVector, dims: Dims, coef: f64) {
        let c = coef / self.scale;
        for (j, v) in x.iter_features(dims.sparse) {
            self.raw[j] += c * v;
        }
    }

    fn bias(&self) -> f64 {
        self.scale * self.raw_bias
    }

    fn add_bias(&mut self, coef: f64) {
        self.raw_bias += coef / self.scale;
    }

    fn into_model(self) -> LinearModel {
        let s = self.scale;
        LinearModel {
            bias: self.raw_bias * s,
            weights: self.raw.into_iter().map(|w| w * s).collect(),
        }
    }
}

fn target(label: Label) -> f64 {
    label.as_u8() as f64
}

/// Mean log-loss plus `lambda/2 · ||w||²` (bias unregularized).
pub fn logistic_objective(model: &LinearModel, data: &[CombinedVector], dims: Dims, lambda: f64) -> f64 {
    let n = data.len() as f64;
    let loss: f64 = data
        .iter()
        .map(|x| {
            let z = model.margin(x, dims);
            if x.label == Label::Fake {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    loss / n + 0.5 * lambda * model.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`logistic_objective`]: `(weights, bias)`.
pub fn logistic_gradient(
    model: &LinearModel,
    data: &[CombinedVector],
    dims: Dims,
    lambda: f64,
) -> (Vec<f64>, f64) {
    let n = data.len() as f64;
    let mut gw: Vec<f64> = model.weights.iter().map(|w| lambda * w).collect();
    let mut gb = 0.0;
    for x in data {
        let r = (sigmoid(model.margin(x, dims)) - target(x.label)) / n;
        for (j, v) in x.iter_features(dims.sparse) {
            gw[j] += r * v;
        }
        gb += r;
    }
    (gw, gb)
}

fn single_class(data: &[CombinedVector]) -> Option<Label> {
    let first = data.first()?.label;
    data.iter().all(|x| x.label == first).then_some(first)
}

/// Shuffled SGD with step `lr0 / (1 + lambda·lr0·t)`. A single-class
/// training set yields a bias-only model that always predicts that class.
pub fn train_logreg(
    data: &[CombinedVector],
    dims: Dims,
    lambda: f64,
    epochs: usize,
    lr0: f64,
    seed: u64,
) -> Result<LinearModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    check_data(data, dims)?;
    if let Some(label) = single_class(data) {
        let b = ((2 * data.len() + 1) as f64).ln();
        return Ok(LinearModel {
            weights: vec![0.0; dims.total()],
            bias: if label == Label::Fake { b } else { -b },
        });
    }
    let mut rng = seed::rng(seed);
    let mut w = ScaledWeights::new(dims.total());
    let mut bias = 0.0;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut t = 0.0;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &data[i];
            let eta = lr0 / (1.0 + lambda * lr0 * t);
            let g = sigmoid(w.dot(x, dims) + bias) - target(x.label);
            w.shrink(1.0 - eta * lambda);
            w.add(x, dims, -eta * g);
            bias -= eta * g;
            t += 1.0;
        }
    }
    let mut model = w.into_model();
    model.bias = bias;
    Ok(model)
}

/// Pegasos on the primal hinge loss with `lambda = 1/(C·N)`. The bias is an
/// extra always-one feature and is regularized with the weights.
pub fn train_linear_svm(
    data: &[CombinedVector],
    dims: Dims,
    c: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    check_data(data, dims)?;
    let lambda = 1.0 / (c * data.len() as f64);
    let mut rng = seed::rng(seed);
    let mut w = ScaledWeights::new(dims.total());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut t = 0.0;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1.0;
            let x = &data[i];
            let y = if x.label == Label::Fake { 1.0 } else { -1.0 };
            let eta = 1.0 / (lambda * t);
            let margin = y * (w.dot(x, dims) + w.bias());
            w.shrink(1.0 - eta * lambda);
            if margin < 1.0 {
                w.add(x, dims, eta * y);
                w.add_bias(eta * y);
            }
        }
    }
    Ok(w.into_model())
}
