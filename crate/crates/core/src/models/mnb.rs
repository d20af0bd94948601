use serde::{Deserialize, Serialize};

use super::{check_data, ModelError};
use crate::corpus::Label;
use crate::vectorize::{CombinedVector, Dims};

/// Multinomial naive Bayes with additive (Laplace) smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialNb {
    pub alpha: f64,
    /// Indexed by label value (0 real, 1 fake).
    pub class_log_prior: [f64; 2],
    pub feature_log_prob: [Vec<f64>; 2],
}

/// `p(t|c) = (alpha + mass of t in c) / (alpha·V + total mass of c)`.
pub fn train_mnb(data: &[CombinedVector], dims: Dims, alpha: f64) -> Result<MultinomialNb, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    check_data(data, dims)?;
    let v = dims.total();
    let mut mass = [vec![0.0; v], vec![0.0; v]];
    let mut docs = [0usize; 2];
    for x in data {
        let c = x.label.as_u8() as usize;
        docs[c] += 1;
        for (j, value) in x.iter_features(dims.sparse) {
            if value < 0.0 {
                return Err(ModelError::NegativeFeature { feature: j, value });
            }
            mass[c][j] += value;
        }
    }
    if docs[0] == 0 || docs[1] == 0 {
        return Err(ModelError::SingleClass);
    }
    let n = data.len() as f64;
    let log_probs = |m: &Vec<f64>| {
        let total: f64 = m.iter().sum();
        let denom = alpha * v as f64 + total;
        m.iter().map(|&c| ((alpha + c) / denom).ln()).collect::<Vec<_>>()
    };
    Ok(MultinomialNb {
        alpha,
        class_log_prior: [(docs[0] as f64 / n).ln(), (docs[1] as f64 / n).ln()],
        feature_log_prob: [log_probs(&mass[0]), log_probs(&mass[1])],
    })
}

impl MultinomialNb {
    pub fn joint_log_likelihood(&self, x: &CombinedVector, dims: Dims) -> [f64; 2] {
        let mut jll = self.class_log_prior;
        for (j, value) in x.iter_features(dims.sparse) {
            if value != 0.0 {
                jll[0] += value * self.feature_log_prob[0][j];
                jll[1] += value * self.feature_log_prob[1][j];
            }
        }
        jll
    }

    /// Posterior probability of [`Label::Fake`].
    pub fn probability(&self, x: &CombinedVector, dims: Dims) -> f64 {
        let [real, fake] = self.joint_log_likelihood(x, dims);
        super::sigmoid(fake - real)
    }

    pub fn likelihood(&self, label: Label, feature: usize) -> f64 {
        self.feature_log_prob[label.as_u8() as usize][feature].exp()
    }
}
