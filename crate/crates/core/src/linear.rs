//! Multinomial logistic regression over sparse features, trained with
//! categorical cross-entropy and AdamW.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::ClassCode;
use crate::text::SparseVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearError {
    #[error("class index {index} out of range for {classes} classes")]
    ClassIndexOutOfRange { index: usize, classes: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("feature index {index} out of range for {n_features} features")]
    DimensionMismatch { index: usize, n_features: usize },
    #[error("index {index} out of range for a distribution over {len} classes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("parameter shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Optimizer and schedule settings.
///
/// The schedule is linear warm-up from zero over `warmup_steps`, then linear
/// decay to zero at the final step. Weight decay is decoupled and skips the
/// bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 0.01,
            epochs: 10,
            batch_size: 32,
            warmup_steps: 50,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LinearError> {
        let bad = |msg: &str| Err(LinearError::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        Ok(())
    }

    /// Learning rate used at optimizer step `step` (0-based) of `total`.
    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        if step < self.warmup_steps {
            self.learning_rate * step as f64 / self.warmup_steps.max(1) as f64
        } else {
            let remaining = total.saturating_sub(step) as f64;
            let span = total.saturating_sub(self.warmup_steps).max(1) as f64;
            self.learning_rate * (remaining / span).max(0.0)
        }
    }
}

/// A softmax classifier `softmax(W x + b)` over an ordered class list.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    classes: Vec<ClassCode>,
    n_features: usize,
    /// Row-major, one row of `n_features` weights per class.
    weights: Vec<f64>,
    bias: Vec<f64>,
    config: TrainConfig,
}

/// Gradient of the cross-entropy loss with respect to the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SoftmaxModel {
    /// All-zero parameters, which predict the uniform distribution.
    pub fn zeros(classes: Vec<ClassCode>, n_features: usize, config: TrainConfig) -> Self {
        let k = classes.len();
        SoftmaxModel {
            weights: vec![0.0; k * n_features],
            bias: vec![0.0; k],
            classes,
            n_features,
            config,
        }
    }

    pub fn from_parameters(
        classes: Vec<ClassCode>,
        n_features: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        config: TrainConfig,
    ) -> Result<Self, LinearError> {
        if weights.len() != classes.len() * n_features || bias.len() != classes.len() {
            return Err(LinearError::ShapeMismatch(format!(
                "{} classes x {} features needs {} weights and {} biases, got {} and {}",
                classes.len(),
                n_features,
                classes.len() * n_features,
                classes.len(),
                weights.len(),
                bias.len()
            )));
        }
        Ok(SoftmaxModel {
            classes,
            n_features,
            weights,
            bias,
            config,
        })
    }

    pub fn classes(&self) -> &[ClassCode] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight(&self, class: usize, feature: usize) -> f64 {
        self.weights[class * self.n_features + feature]
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn check_features(&self, x: &SparseVector) -> Result<(), LinearError> {
        match x.max_index() {
            Some(i) if i >= self.n_features => Err(LinearError::DimensionMismatch {
                index: i,
                n_features: self.n_features,
            }),
            _ => Ok(()),
        }
    }

    fn logits_into(&self, x: &SparseVector, out: &mut [f64]) {
        for (c, z) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.n_features..(c + 1) * self.n_features];
            *z = self.bias[c] + x.iter().map(|(j, v)| row[j] * v).sum::<f64>();
        }
    }

    pub fn logits(&self, x: &SparseVector) -> Result<Vec<f64>, LinearError> {
        self.check_features(x)?;
        let mut z = vec![0.0; self.classes.len()];
        self.logits_into(x, &mut z);
        Ok(z)
    }

    /// Class probabilities in `classes()` order.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>, LinearError> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Mean cross-entropy over `examples`.
    pub fn mean_loss(&self, examples: &[(SparseVector, usize)]) -> Result<f64, LinearError> {
        if examples.is_empty() {
            return Err(LinearError::EmptyTrainingSet);
        }
        let mut total = 0.0;
        for (x, y) in examples {
            total += cce_loss(&self.predict_proba(x)?, *y)?;
        }
        Ok(total / examples.len() as f64)
    }

    /// Analytic gradient of `cce_loss(predict_proba(x), target)`.
    pub fn gradient(&self, x: &SparseVector, target: usize) -> Result<Gradient, LinearError> {
        self.check_features(x)?;
        self.check_class(target)?;
        let mut g = Gradient {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        };
        let mut p = vec![0.0; self.classes.len()];
        self.accumulate_gradient(x, target, 1.0, &mut p, &mut g.weights, &mut g.bias);
        Ok(g)
    }

    fn check_class(&self, index: usize) -> Result<(), LinearError> {
        if index >= self.classes.len() {
            Err(LinearError::ClassIndexOutOfRange {
                index,
                classes: self.classes.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Adds `scale * dL/dθ` for one example and returns its loss. `p` is
    /// scratch space of length `n_classes`.
    fn accumulate_gradient(
        &self,
        x: &SparseVector,
        target: usize,
        scale: f64,
        p: &mut [f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> f64 {
        self.logits_into(x, p);
        softmax_in_place(p);
        let loss = -p[target].ln();
        for (c, &pc) in p.iter().enumerate() {
            let delta = scale * (pc - if c == target { 1.0 } else { 0.0 });
            grad_b[c] += delta;
            let row = &mut grad_w[c * self.n_features..(c + 1) * self.n_features];
            for (j, v) in x.iter() {
                row[j] += delta * v;
            }
        }
        loss
    }
}

/// Numerically stable softmax. Entries are floored at the smallest positive
/// normal so every class keeps nonzero probability.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v = (*v / sum).max(f64::MIN_POSITIVE);
    }
}

/// Categorical cross-entropy `-ln dist[true_index]`.
pub fn cce_loss(dist: &[f64], true_index: usize) -> Result<f64, LinearError> {
    let p = dist.get(true_index).ok_or(LinearError::IndexOutOfRange {
        index: true_index,
        len: dist.len(),
    })?;
    Ok(-p.ln())
}

/// Trains a softmax model from zero initialization.
pub fn train_softmax(
    examples: &[(SparseVector, usize)],
    classes: Vec<ClassCode>,
    n_features: usize,
    config: &TrainConfig,
) -> Result<SoftmaxModel, LinearError> {
    train_softmax_traced(examples, classes, n_features, config).map(|(m, _)| m)
}

/// Like [`train_softmax`], also returning the mean training loss of each
/// epoch as observed during its mini-batch passes.
pub fn train_softmax_traced(
    examples: &[(SparseVector, usize)],
    classes: Vec<ClassCode>,
    n_features: usize,
    config: &TrainConfig,
) -> Result<(SoftmaxModel, Vec<f64>), LinearError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(LinearError::EmptyTrainingSet);
    }
    let mut model = SoftmaxModel::zeros(classes, n_features, config.clone());
    for (x, y) in examples {
        model.check_class(*y)?;
        model.check_features(x)?;
    }
    if model.n_classes() <= 1 || config.epochs == 0 {
        return Ok((model, Vec::new()));
    }

    let n_params = model.weights.len();
    let n_classes = model.n_classes();
    let mut grad_w = vec![0.0; n_params];
    let mut grad_b = vec![0.0; n_classes];
    let mut m_w = vec![0.0; n_params];
    let mut v_w = vec![0.0; n_params];
    let mut m_b = vec![0.0; n_classes];
    let mut v_b = vec![0.0; n_classes];
    let mut scratch = vec![0.0; n_classes];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let steps_per_epoch = examples.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let (b1, b2, eps) = (config.beta1, config.beta2, config.epsilon);
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (x, y) = &examples[i];
                epoch_loss +=
                    model.accumulate_gradient(x, *y, scale, &mut scratch, &mut grad_w, &mut grad_b);
            }

            let lr = config.learning_rate_at(step, total_steps);
            step += 1;
            let bc1 = 1.0 - b1.powi(step as i32);
            let bc2_sqrt = (1.0 - b2.powi(step as i32)).sqrt();
            let step_size = lr / bc1;
            let decay = 1.0 - lr * config.weight_decay;

            adamw_update(&mut model.weights, &mut grad_w, &mut m_w, &mut v_w, b1, b2, eps, step_size, bc2_sqrt, decay);
            adamw_update(&mut model.bias, &mut grad_b, &mut m_b, &mut v_b, b1, b2, eps, step_size, bc2_sqrt, 1.0);
        }
        epoch_losses.push(epoch_loss / examples.len() as f64);
    }
    Ok((model, epoch_losses))
}

/// One AdamW step over a parameter block. Consumes and zeroes `grad`.
#[allow(clippy::too_many_arguments)]
fn adamw_update(
    params: &mut [f64],
    grad: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    b1: f64,
    b2: f64,
    eps: f64,
    step_size: f64,
    bc2_sqrt: f64,
    decay: f64,
) {
    for (((w, g), m), v) in params.iter_mut().zip(grad.iter_mut()).zip(m.iter_mut()).zip(v.iter_mut()) {
        let gi = *g;
        *g = 0.0;
        *m = b1 * *m + (1.0 - b1) * gi;
        *v = b2 * *v + (1.0 - b2) * gi * gi;
        *w *= decay;
        *w -= step_size * *m / (v.sqrt() / bc2_sqrt + eps);
    }
}
