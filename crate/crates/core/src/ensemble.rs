//! Weighted fusion of the embedding score and the calibrated SVM.
//!
//! ```text
//! Pf = (We·Pe + Ws·Ps) / (We + Ws)
//! ```
//!
//! A post is credible when `Pf` exceeds the threshold.

use serde::{Deserialize, Serialize};

use crate::corpus::{AuthorProfile, Post, WotTable};
use crate::embeddings::{
    post_vector, reputation_score, CentroidModel, EmbeddingError, EmbeddingStore, ScoreBreakdown,
    VectorOptions,
};
use crate::features::{extract_features, FeatureError, Standardizer};
use crate::svce::ConceptLexicon;
use crate::svm::{decision_function, LinearSvmModel, PlattCalibration, SvmError};
use crate::Label;

pub const DEFAULT_THRESHOLD: f64 = 0.6;
/// Grid resolution of the weight search: r ∈ {0, 1/100, …, 1}.
pub const WEIGHT_GRID_STEPS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("weights must be finite and non-negative with a positive sum, got ({0}, {1})")]
    BadWeights(f64, f64),
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("threshold {0} is outside (0, 1)")]
    BadThreshold(f64),
    #[error("validation set needs both classes")]
    SingleClass,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

fn check_unit(name: &'static str, value: f64) -> Result<(), EnsembleError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(EnsembleError::OutOfRange { name, value })
    }
}

/// The weighted mean of the two probabilities, kept inside their range.
pub fn combine(pe: f64, ps: f64, we: f64, ws: f64) -> Result<f64, EnsembleError> {
    check_unit("Pe", pe)?;
    check_unit("Ps", ps)?;
    if !(we >= 0.0 && ws >= 0.0 && we.is_finite() && ws.is_finite() && we + ws > 0.0) {
        return Err(EnsembleError::BadWeights(we, ws));
    }
    let pf = (we * pe + ws * ps) / (we + ws);
    Ok(pf.clamp(pe.min(ps), pe.max(ps)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub we: f64,
    pub ws: f64,
}

impl EnsembleWeights {
    /// Share of the embedding model, `We / (We + Ws)`.
    pub fn ratio(&self) -> f64 {
        self.we / (self.we + self.ws)
    }
}

/// One held-out observation for the weight search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub pe: f64,
    pub ps: f64,
    pub label: Label,
}

/// Grid search over `r = We/(We+Ws)` maximizing balanced accuracy of
/// `Pf > threshold`. Ties go to the `r` closest to 0.5, then to the larger
/// `r`. Returns `(r, 1 − r)`.
pub fn learn_weights(
    validation: &[ValidationPoint],
    threshold: f64,
) -> Result<EnsembleWeights, EnsembleError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(EnsembleError::BadThreshold(threshold));
    }
    let pos = validation.iter().filter(|v| v.label.is_credible()).count() as u64;
    let neg = validation.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EnsembleError::SingleClass);
    }
    for v in validation {
        check_unit("Pe", v.pe)?;
        check_unit("Ps", v.ps)?;
    }
    let half = WEIGHT_GRID_STEPS / 2;
    // (score, -distance from center, step); balanced accuracy compared exactly as tp·N + tn·P
    let mut best: Option<(u64, i64, usize)> = None;
    for step in 0..=WEIGHT_GRID_STEPS {
        let w = grid_weights(step);
        let (mut tp, mut tn) = (0u64, 0u64);
        for v in validation {
            let credible = combine(v.pe, v.ps, w.we, w.ws)? > threshold;
            match (credible, v.label.is_credible()) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                _ => {}
            }
        }
        let key = (tp * neg + tn * pos, -(step.abs_diff(half) as i64), step);
        if best.is_none_or(|b| key > b) {
            best = Some(key);
        }
    }
    Ok(grid_weights(best.expect("grid is non-empty").2))
}

fn grid_weights(step: usize) -> EnsembleWeights {
    let n = WEIGHT_GRID_STEPS as f64;
    EnsembleWeights {
        we: step as f64 / n,
        ws: (WEIGHT_GRID_STEPS - step) as f64 / n,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinerMode {
    /// Pe and Ps come from independent models and are fused by weight.
    #[default]
    WeightedSum,
    /// Pe is also appended to the SVM's feature vector before fusion.
    Stacked,
}

/// Every fitted component needed to score a post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub weights: EnsembleWeights,
    pub threshold: f64,
    pub mode: CombinerMode,
    pub standardizer: Standardizer,
    pub svm: LinearSvmModel,
    pub calibration: PlattCalibration,
    pub centroids: CentroidModel,
}

impl EnsembleModel {
    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, EnsembleError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(EnsembleError::BadThreshold(threshold));
        }
        self.threshold = threshold;
        Ok(self)
    }
}

/// Inputs shared by every scored post.
#[derive(Clone, Copy)]
pub struct ScoringContext<'a> {
    pub lexicon: &'a ConceptLexicon,
    pub store: &'a EmbeddingStore,
    pub wot: &'a WotTable,
    pub snapshot_utc: i64,
    pub vectors: VectorOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub post_id: String,
    pub d_c: f64,
    pub d_i: f64,
    pub s_c: f64,
    pub pe: f64,
    pub ps: f64,
    pub pf: f64,
    pub margin: f64,
    pub label: Label,
    pub no_signal: bool,
}

/// Feature row as seen by the SVM: standardized, with Pe appended in
/// stacked mode.
pub fn svm_input(standardized: Vec<f64>, pe: f64, mode: CombinerMode) -> Vec<f64> {
    let mut row = standardized;
    if mode == CombinerMode::Stacked {
        row.push(pe);
    }
    row
}

pub fn label_for(pf: f64, threshold: f64) -> Label {
    Label::from_credible(pf > threshold)
}

/// Assembles a verdict from the embedding breakdown and the SVM margin.
pub fn verdict(
    post_id: &str,
    breakdown: &ScoreBreakdown,
    margin: f64,
    no_signal: bool,
    model: &EnsembleModel,
) -> Result<Verdict, EnsembleError> {
    let ps = model.calibration.probability(margin);
    let pf = combine(breakdown.pe, ps, model.weights.we, model.weights.ws)?;
    Ok(Verdict {
        post_id: post_id.to_string(),
        d_c: breakdown.d_c,
        d_i: breakdown.d_i,
        s_c: breakdown.s_c,
        pe: breakdown.pe,
        ps,
        pf,
        margin,
        label: label_for(pf, model.threshold),
        no_signal,
    })
}

/// Scores one post end to end.
pub fn score_post(
    post: &Post,
    author: &AuthorProfile,
    model: &EnsembleModel,
    ctx: &ScoringContext<'_>,
) -> Result<Verdict, EnsembleError> {
    let emb = post_vector(post, ctx.lexicon, ctx.store, ctx.vectors);
    let breakdown = reputation_score(&emb, &model.centroids)?;
    let raw = extract_features(post, author, ctx.snapshot_utc, ctx.wot)?;
    let z = model.standardizer.transform(&raw.values)?;
    let margin = decision_function(&model.svm, &svm_input(z, breakdown.pe, model.mode))?;
    verdict(&post.id, &breakdown, margin, emb.no_signal, model)
}
