//! Linear SVM trained by stochastic subgradient descent (Pegasos) and Platt
//! calibration of its margin.
//!
//! Training minimizes
//!
//! ```text
//! λ/2 ‖w‖² + 1/n Σ c_i · max(0, 1 − y_i (w·x_i + b))
//! ```
//!
//! with step size `1/(λt)` at global step `t`, projection of `w` onto the ball
//! of radius `1/√λ`, and an unregularized bias. `c_i` are per-class loss
//! weights (inverse class frequency by default). The returned weights are the
//! end-of-epoch iterate with the lowest training objective, the zero vector
//! included as a candidate.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::util::{dot, rng};
use crate::Label;

pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_EPOCHS: usize = 200;
/// Calibrated probabilities are kept this far from 0 and 1.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
/// Steepness below which a fitted sigmoid is considered flat (`A ≥ −MIN_SLOPE`).
pub const MIN_SLOPE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum SvmError {
    #[error("training data needs both classes")]
    SingleClass,
    #[error("training data is empty")]
    Empty,
    #[error("row {row} has {found} features, expected {expected}")]
    Dimension {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{found} labels for {expected} rows")]
    LabelCount { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("lambda must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("epochs must be at least 1")]
    ZeroEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    Uniform,
    /// `n / (2 n_class)`: both classes carry equal total loss.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub class_weighting: ClassWeighting,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: DEFAULT_LAMBDA,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            class_weighting: ClassWeighting::Balanced,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl LinearSvmModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

fn validate<R: AsRef<[f64]>>(x: &[R], y: &[Label]) -> Result<usize, SvmError> {
    if x.is_empty() {
        return Err(SvmError::Empty);
    }
    if x.len() != y.len() {
        return Err(SvmError::LabelCount {
            expected: x.len(),
            found: y.len(),
        });
    }
    let dim = x[0].as_ref().len();
    for (row, r) in x.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(SvmError::Dimension {
                row,
                expected: dim,
                found: r.len(),
            });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite { row, col });
        }
    }
    let pos = y.iter().filter(|l| l.is_credible()).count();
    if pos == 0 || pos == y.len() {
        return Err(SvmError::SingleClass);
    }
    Ok(dim)
}

/// Per-example loss weights.
pub fn class_weights(y: &[Label], weighting: ClassWeighting) -> Vec<f64> {
    match weighting {
        ClassWeighting::Uniform => vec![1.0; y.len()],
        ClassWeighting::Balanced => {
            let n = y.len() as f64;
            let pos = y.iter().filter(|l| l.is_credible()).count() as f64;
            let neg = n - pos;
            y.iter()
                .map(|l| {
                    let k = if l.is_credible() { pos } else { neg };
                    if k > 0.0 {
                        n / (2.0 * k)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    }
}

/// Regularized, weighted hinge objective.
pub fn objective<R: AsRef<[f64]>>(
    weights: &[f64],
    bias: f64,
    lambda: f64,
    x: &[R],
    y: &[Label],
    sample_weights: &[f64],
) -> f64 {
    let reg = 0.5 * lambda * dot(weights, weights);
    let loss: f64 = x
        .iter()
        .zip(y)
        .zip(sample_weights)
        .map(|((r, l), c)| c * (1.0 - l.sign() * (dot(weights, r.as_ref()) + bias)).max(0.0))
        .sum();
    reg + loss / x.len() as f64
}

pub fn train_svm<R: AsRef<[f64]>>(
    x: &[R],
    y: &[Label],
    params: &SvmParams,
) -> Result<LinearSvmModel, SvmError> {
    let dim = validate(x, y)?;
    let lambda = params.lambda;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SvmError::BadLambda(lambda));
    }
    if params.epochs == 0 {
        return Err(SvmError::ZeroEpochs);
    }
    let c = class_weights(y, params.class_weighting);
    let radius = 1.0 / lambda.sqrt();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut best = (objective(&w, b, lambda, x, y, &c), w.clone(), b);

    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut gen = rng(params.seed);
    let mut t: u64 = 0;
    for _ in 0..params.epochs {
        order.shuffle(&mut gen);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let xi = x[i].as_ref();
            let yi = y[i].sign();
            let margin = yi * (dot(&w, xi) + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                let step = eta * c[i] * yi;
                w.iter_mut().zip(xi).for_each(|(v, xv)| *v += step * xv);
                b += step;
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
        let obj = objective(&w, b, lambda, x, y, &c);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
    }
    Ok(LinearSvmModel {
        weights: best.1,
        bias: best.2,
        lambda,
        epochs: params.epochs,
        seed: params.seed,
    })
}

/// `w·x + b`.
pub fn decision_function(model: &LinearSvmModel, x: &[f64]) -> Result<f64, SvmError> {
    if x.len() != model.dim() {
        return Err(SvmError::Dimension {
            row: 0,
            expected: model.dim(),
            found: x.len(),
        });
    }
    Ok(dot(&model.weights, x) + model.bias)
}

/// Sigmoid over margins: `Ps = 1 / (1 + exp(A·f + B))` with `A < 0`, so larger
/// margins give larger probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibration {
    pub a: f64,
    pub b: f64,
}

impl PlattCalibration {
    pub fn probability(&self, margin: f64) -> f64 {
        let z = self.a * margin + self.b;
        let p = if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        };
        p.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    }
}

/// Platt's smoothed targets: `(N+ + 1)/(N+ + 2)` and `1/(N− + 2)`.
fn platt_targets(y: &[Label]) -> Vec<f64> {
    let pos = y.iter().filter(|l| l.is_credible()).count() as f64;
    let neg = y.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    y.iter()
        .map(|l| if l.is_credible() { hi } else { lo })
        .collect()
}

/// Negative log-likelihood of targets under `(a, b)`.
pub fn platt_loss(margins: &[f64], y: &[Label], a: f64, b: f64) -> f64 {
    platt_targets(y)
        .iter()
        .zip(margins)
        .map(|(t, f)| nll_term(a * f + b, *t))
        .sum()
}

fn nll_term(z: f64, t: f64) -> f64 {
    // -[t log p + (1 - t) log(1 - p)] with p = 1 / (1 + e^z), written stably
    if z >= 0.0 {
        t * z + (-z).exp().ln_1p()
    } else {
        (t - 1.0) * z + z.exp().ln_1p()
    }
}

/// Fits the sigmoid by Newton's method with backtracking line search on
/// Platt's log-loss. Returns the best iterate found within `max_iter`. A
/// fit that comes out flat or inverted is replaced by the best bias at slope
/// `−MIN_SLOPE` so probabilities always rise with the margin.
pub fn fit_platt(
    margins: &[f64],
    y: &[Label],
    max_iter: usize,
) -> Result<PlattCalibration, SvmError> {
    if margins.len() != y.len() {
        return Err(SvmError::LabelCount {
            expected: margins.len(),
            found: y.len(),
        });
    }
    if margins.is_empty() {
        return Err(SvmError::Empty);
    }
    if let Some(row) = margins.iter().position(|m| !m.is_finite()) {
        return Err(SvmError::NonFinite { row, col: 0 });
    }
    let pos = y.iter().filter(|l| l.is_credible()).count() as f64;
    let neg = y.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(SvmError::SingleClass);
    }
    let targets = platt_targets(y);
    let loss = |a: f64, b: f64| -> f64 {
        targets
            .iter()
            .zip(margins)
            .map(|(t, f)| nll_term(a * f + b, *t))
            .sum()
    };

    const SIGMA: f64 = 1e-12;
    const MIN_STEP: f64 = 1e-10;
    const EPS: f64 = 1e-5;

    let mut a = 0.0;
    let mut b = ((neg + 1.0) / (pos + 1.0)).ln();
    let mut fval = loss(a, b);
    for _ in 0..max_iter {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (f, t) in margins.iter().zip(&targets) {
            let z = a * f + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < EPS && g2.abs() < EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = loss(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            log::debug!("platt line search stalled; keeping best iterate");
            break;
        }
    }

    if a > -MIN_SLOPE {
        a = -MIN_SLOPE;
        b = fit_bias(margins, &targets, a, b, max_iter.max(50));
    }
    Ok(PlattCalibration { a, b })
}

/// One-dimensional Newton for the bias at fixed slope.
fn fit_bias(margins: &[f64], targets: &[f64], a: f64, mut b: f64, max_iter: usize) -> f64 {
    for _ in 0..max_iter {
        let (mut g, mut h) = (0.0, 1e-12);
        for (f, t) in margins.iter().zip(targets) {
            let p = PlattCalibration { a, b }.probability(*f);
            g += t - p;
            h += p * (1.0 - p);
        }
        let step = g / h;
        b -= step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    b
}

/// Calibrated probability that `x` is credible.
pub fn predict_proba(
    model: &LinearSvmModel,
    calibration: &PlattCalibration,
    x: &[f64],
) -> Result<f64, SvmError> {
    Ok(calibration.probability(decision_function(model, x)?))
}
