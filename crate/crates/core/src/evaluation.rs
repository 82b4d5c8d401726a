//! Stratified k-fold cross-validation and confusion-matrix metrics.
//!
//! The positive class is `credible`. Per-fold confusion counts are pooled
//! before metrics are derived.

use std::ops::AddAssign;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::ensemble::Verdict;
use crate::pipeline::{fit_model, score_example, Dataset, Example, PipelineConfig, PipelineError};
use crate::util::{derive_seed, rng};
use crate::Label;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("k must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("k = {k} exceeds the number of items ({n})")]
    TooManyFolds { k: usize, n: usize },
    #[error("{found} strata labels for {expected} items")]
    StrataLength { expected: usize, found: usize },
}

/// Splits `0..n` into `k` disjoint folds, each sorted ascending.
///
/// With `strata`, each class is shuffled and dealt round-robin so per-class
/// counts per fold differ by at most one; total fold sizes always do. A class
/// smaller than `k` cannot reach every fold and is only warned about.
pub fn kfold_split(
    n: usize,
    k: usize,
    seed: u64,
    strata: Option<&[Label]>,
) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewFolds(k));
    }
    if k > n {
        return Err(EvalError::TooManyFolds { k, n });
    }
    let mut gen = rng(seed);
    let order: Vec<usize> = match strata {
        Some(labels) => {
            if labels.len() != n {
                return Err(EvalError::StrataLength {
                    expected: n,
                    found: labels.len(),
                });
            }
            let mut order = Vec::with_capacity(n);
            for class in [Label::Credible, Label::NonCredible] {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                if !members.is_empty() && members.len() < k {
                    log::warn!(
                        "class {class} has {} members for {k} folds; it cannot be spread over every fold",
                        members.len()
                    );
                }
                members.shuffle(&mut gen);
                order.extend(members);
            }
            order
        }
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut gen);
            order
        }
    };
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Every minority-class index plus an equally sized seeded sample of the
/// majority class, sorted.
pub fn balanced_subsample(labels: &[Label], seed: u64) -> Vec<usize> {
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..labels.len()).partition(|&i| labels[i].is_credible());
    let (minority, majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let mut gen = rng(seed);
    let picked = index::sample(&mut gen, majority.len(), minority.len());
    let mut out: Vec<usize> = minority
        .into_iter()
        .chain(picked.into_iter().map(|i| majority[i]))
        .collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Credible, Label::Credible) => self.tp += 1,
            (Label::Credible, Label::NonCredible) => self.fp += 1,
            (Label::NonCredible, Label::Credible) => self.fn_ += 1,
            (Label::NonCredible, Label::NonCredible) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

/// Metrics whose denominator was zero; their value is reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degeneracy {
    pub accuracy: bool,
    pub precision: bool,
    pub recall: bool,
    pub tnr: bool,
    pub f1: bool,
}

impl Degeneracy {
    pub fn any(&self) -> bool {
        self.accuracy || self.precision || self.recall || self.tnr || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub tnr: f64,
    pub fpr: f64,
    pub f1: f64,
    pub degenerate: Degeneracy,
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let mut d = Degeneracy::default();
    let accuracy = ratio(cm.tp + cm.tn, cm.total(), &mut d.accuracy);
    let precision = ratio(cm.tp, cm.tp + cm.fp, &mut d.precision);
    let recall = ratio(cm.tp, cm.tp + cm.fn_, &mut d.recall);
    let tnr = ratio(cm.tn, cm.tn + cm.fp, &mut d.tnr);
    let fpr = if d.tnr { 0.0 } else { 1.0 - tnr };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        d.f1 = true;
        0.0
    };
    MetricsReport {
        accuracy,
        precision,
        recall,
        tnr,
        fpr,
        f1,
        degenerate: d,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    /// Evaluate on all minority posts plus an equal seeded sample of the
    /// majority class.
    pub balanced: bool,
    pub pipeline: PipelineConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 10,
            seed: 0,
            balanced: false,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Confusion counts of the three models on one set of predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCounts {
    pub ensemble: ConfusionMatrix,
    pub embedding: ConfusionMatrix,
    pub svm: ConfusionMatrix,
}

impl AddAssign for ModelCounts {
    fn add_assign(&mut self, o: Self) {
        self.ensemble += o.ensemble;
        self.embedding += o.embedding;
        self.svm += o.svm;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelColumn {
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

impl From<ConfusionMatrix> for ModelColumn {
    fn from(confusion: ConfusionMatrix) -> Self {
        ModelColumn {
            metrics: compute_metrics(&confusion),
            confusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub we: f64,
    pub ws: f64,
    pub counts: ModelCounts,
}

/// A held-out verdict with its fold and true label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutPrediction {
    pub fold: usize,
    pub actual: Label,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: CvConfig,
    pub n_examples: usize,
    pub n_credible: usize,
    pub n_non_credible: usize,
    pub folds: Vec<FoldReport>,
    pub ensemble: ModelColumn,
    pub embedding: ModelColumn,
    pub svm: ModelColumn,
    #[serde(skip)]
    pub predictions: Vec<HeldOutPrediction>,
}

/// The three per-model predictions for a verdict: ensemble at its threshold,
/// embedding-only and SVM-only at 0.5.
pub fn model_predictions(v: &Verdict) -> (Label, Label, Label) {
    (
        v.label,
        Label::from_credible(v.pe > 0.5),
        Label::from_credible(v.ps > 0.5),
    )
}

/// Fits a model on the examples at `train` only.
pub fn fit_fold(
    dataset: &Dataset,
    train: &[usize],
    config: &PipelineConfig,
) -> Result<crate::ensemble::EnsembleModel, PipelineError> {
    let examples: Vec<&Example> = train.iter().map(|&i| &dataset.examples[i]).collect();
    fit_model(&examples, config)
}

pub fn cross_validate(
    dataset: &Dataset,
    config: &CvConfig,
) -> Result<EvaluationReport, PipelineError> {
    let all_labels = dataset.labels();
    let subset: Vec<usize> = if config.balanced {
        balanced_subsample(&all_labels, derive_seed(config.seed, 2))
    } else {
        (0..dataset.len()).collect()
    };
    let labels: Vec<Label> = subset.iter().map(|&i| all_labels[i]).collect();
    let folds = kfold_split(subset.len(), config.k, config.seed, Some(&labels))?;

    let mut fold_reports = Vec::with_capacity(folds.len());
    let mut predictions = Vec::with_capacity(subset.len());
    let mut pooled = ModelCounts::default();
    for (f, held) in folds.iter().enumerate() {
        let mut in_fold = vec![false; subset.len()];
        held.iter().for_each(|&i| in_fold[i] = true);
        let train: Vec<usize> = (0..subset.len())
            .filter(|&i| !in_fold[i])
            .map(|i| subset[i])
            .collect();
        let model = fit_fold(dataset, &train, &config.pipeline)?;
        let mut counts = ModelCounts::default();
        for &i in held {
            let example = &dataset.examples[subset[i]];
            let v = score_example(example, &model)?;
            let (ens, emb, svm) = model_predictions(&v);
            counts.ensemble.record(ens, example.label);
            counts.embedding.record(emb, example.label);
            counts.svm.record(svm, example.label);
            predictions.push(HeldOutPrediction {
                fold: f,
                actual: example.label,
                verdict: v,
            });
        }
        log::info!(
            "fold {f}: ensemble accuracy {:.4} (We {:.2}, Ws {:.2})",
            compute_metrics(&counts.ensemble).accuracy,
            model.weights.we,
            model.weights.ws
        );
        pooled += counts;
        fold_reports.push(FoldReport {
            fold: f,
            n_train: train.len(),
            n_test: held.len(),
            we: model.weights.we,
            ws: model.weights.ws,
            counts,
        });
    }
    let n_credible = labels.iter().filter(|l| l.is_credible()).count();
    Ok(EvaluationReport {
        config: config.clone(),
        n_examples: subset.len(),
        n_credible,
        n_non_credible: subset.len() - n_credible,
        folds: fold_reports,
        ensemble: pooled.ensemble.into(),
        embedding: pooled.embedding.into(),
        svm: pooled.svm.into(),
        predictions,
    })
}
