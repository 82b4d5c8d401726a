//! Fitting the full model on a set of labeled examples.
//!
//! Calibration and ensemble weights need held-out predictions. They come from
//! an inner stratified split of the training examples, so the fitted model
//! depends on nothing outside the examples it is given.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotation::LabeledPost;
use crate::corpus::{Corpus, WotTable};
use crate::embeddings::{
    fit_centroids, post_vector, reputation_score, EmbeddingError, EmbeddingStore, PostEmbedding,
    VectorOptions, NEUTRAL_SCORE,
};
use crate::ensemble::{
    learn_weights, svm_input, verdict, CombinerMode, EnsembleError, EnsembleModel, ValidationPoint,
    Verdict, DEFAULT_THRESHOLD,
};
use crate::evaluation::{kfold_split, EvalError};
use crate::features::{extract_features, fit_standardizer, FeatureError};
use crate::svce::ConceptLexicon;
use crate::svm::{decision_function, fit_platt, train_svm, SvmError, SvmParams};
use crate::util::derive_seed;
use crate::Label;

pub const DEFAULT_INNER_FOLDS: usize = 5;
pub const DEFAULT_PLATT_ITERATIONS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("labeled post {0:?} is not in the corpus")]
    UnknownPost(String),
    #[error("post {post_id:?} references missing author {author_id:?}")]
    MissingAuthor { post_id: String, author_id: String },
    #[error("need labeled examples of both classes, got {credible} credible and {non_credible} non-credible")]
    TooFewExamples {
        credible: usize,
        non_credible: usize,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A labeled post with its label-independent representations precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub post_id: String,
    pub label: Label,
    pub features: Vec<f64>,
    pub embedding: PostEmbedding,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<Label> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Joins labels with their posts, in corpus order.
pub fn build_dataset(
    corpus: &Corpus,
    labeled: &[LabeledPost],
    lexicon: &ConceptLexicon,
    store: &EmbeddingStore,
    wot: &WotTable,
    vectors: VectorOptions,
) -> Result<Dataset, PipelineError> {
    let labels: HashMap<&str, Label> = labeled
        .iter()
        .map(|l| (l.post_id.as_str(), l.label))
        .collect();
    for l in labeled {
        if corpus.post(&l.post_id).is_none() {
            return Err(PipelineError::UnknownPost(l.post_id.clone()));
        }
    }
    let mut examples = Vec::with_capacity(labeled.len());
    for post in &corpus.posts {
        let Some(&label) = labels.get(post.id.as_str()) else {
            continue;
        };
        let author = corpus
            .author_of(post)
            .ok_or_else(|| PipelineError::MissingAuthor {
                post_id: post.id.clone(),
                author_id: post.author_id.clone(),
            })?;
        examples.push(Example {
            post_id: post.id.clone(),
            label,
            features: extract_features(post, author, corpus.snapshot_utc, wot)?.values,
            embedding: post_vector(post, lexicon, store, vectors),
        });
    }
    Ok(Dataset { examples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub svm: SvmParams,
    pub threshold: f64,
    pub mode: CombinerMode,
    pub inner_folds: usize,
    pub platt_max_iter: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            svm: SvmParams::default(),
            threshold: DEFAULT_THRESHOLD,
            mode: CombinerMode::WeightedSum,
            inner_folds: DEFAULT_INNER_FOLDS,
            platt_max_iter: DEFAULT_PLATT_ITERATIONS,
        }
    }
}

/// Out-of-fold embedding scores for `examples`, using centroids fitted on the
/// other inner folds. Folds whose training side lacks a class with signal
/// score neutral.
fn out_of_fold_pe(examples: &[&Example], folds: &[Vec<usize>]) -> Vec<f64> {
    let mut pe = vec![NEUTRAL_SCORE; examples.len()];
    for (j, held) in folds.iter().enumerate() {
        let train = complement(examples.len(), held);
        match fit_centroids(
            train
                .iter()
                .map(|&i| (&examples[i].embedding, examples[i].label)),
        ) {
            Ok(c) => {
                for &i in held {
                    pe[i] = reputation_score(&examples[i].embedding, &c)
                        .map(|s| s.pe)
                        .unwrap_or(NEUTRAL_SCORE);
                }
            }
            Err(e) => log::warn!("inner fold {j}: {e}; scoring held-out posts as neutral"),
        }
    }
    pe
}

fn complement(n: usize, held: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    held.iter().for_each(|&i| mask[i] = false);
    (0..n).filter(|&i| mask[i]).collect()
}

fn svm_rows(z: &[Vec<f64>], pe: &[f64], mode: CombinerMode) -> Vec<Vec<f64>> {
    z.iter()
        .zip(pe)
        .map(|(r, pe)| svm_input(r.clone(), *pe, mode))
        .collect()
}

/// Fits standardizer, centroids, SVM, calibration and ensemble weights on
/// exactly the given examples.
pub fn fit_model(
    examples: &[&Example],
    config: &PipelineConfig,
) -> Result<EnsembleModel, PipelineError> {
    let labels: Vec<Label> = examples.iter().map(|e| e.label).collect();
    let credible = labels.iter().filter(|l| l.is_credible()).count();
    let non_credible = labels.len() - credible;
    if credible == 0 || non_credible == 0 {
        return Err(PipelineError::TooFewExamples {
            credible,
            non_credible,
        });
    }
    let raw: Vec<&[f64]> = examples.iter().map(|e| e.features.as_slice()).collect();
    let standardizer = fit_standardizer(&raw)?;
    let z: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| standardizer.transform(r))
        .collect::<Result<_, _>>()?;

    let inner_k = config.inner_folds.min(credible).min(non_credible);
    let seed = config.svm.seed;
    let centroids = fit_centroids(examples.iter().map(|e| (&e.embedding, e.label)))?;
    let svm_params = |j: usize| SvmParams {
        seed: derive_seed(seed, 100 + j as u64),
        ..config.svm.clone()
    };

    let (oof_margin, oof_pe, svm) = if inner_k >= 2 {
        let folds = kfold_split(examples.len(), inner_k, derive_seed(seed, 1), Some(&labels))?;
        let oof_pe = out_of_fold_pe(examples, &folds);
        let rows = svm_rows(&z, &oof_pe, config.mode);
        let mut oof_margin = vec![0.0; examples.len()];
        for (j, held) in folds.iter().enumerate() {
            let train = complement(examples.len(), held);
            let xs: Vec<&[f64]> = train.iter().map(|&i| rows[i].as_slice()).collect();
            let ys: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
            let m = train_svm(&xs, &ys, &svm_params(j))?;
            for &i in held {
                oof_margin[i] = decision_function(&m, &rows[i])?;
            }
        }
        let svm = train_svm(&rows, &labels, &config.svm)?;
        (oof_margin, oof_pe, svm)
    } else {
        log::warn!(
            "too few examples per class for held-out calibration; fitting it on training predictions"
        );
        let pe: Vec<f64> = examples
            .iter()
            .map(|e| reputation_score(&e.embedding, &centroids).map(|s| s.pe))
            .collect::<Result<_, _>>()?;
        let rows = svm_rows(&z, &pe, config.mode);
        let svm = train_svm(&rows, &labels, &config.svm)?;
        let margins = rows
            .iter()
            .map(|r| decision_function(&svm, r))
            .collect::<Result<_, _>>()?;
        (margins, pe, svm)
    };
    let calibration = fit_platt(&oof_margin, &labels, config.platt_max_iter)?;
    let validation: Vec<ValidationPoint> = (0..examples.len())
        .map(|i| ValidationPoint {
            pe: oof_pe[i],
            ps: calibration.probability(oof_margin[i]),
            label: labels[i],
        })
        .collect();
    let weights = learn_weights(&validation, config.threshold)?;

    Ok(EnsembleModel {
        weights,
        threshold: config.threshold,
        mode: config.mode,
        standardizer,
        svm,
        calibration,
        centroids,
    })
}

/// Scores an example from its precomputed representations.
pub fn score_example(example: &Example, model: &EnsembleModel) -> Result<Verdict, PipelineError> {
    let breakdown = reputation_score(&example.embedding, &model.centroids)?;
    let z = model.standardizer.transform(&example.features)?;
    let margin = decision_function(&model.svm, &svm_input(z, breakdown.pe, model.mode))?;
    Ok(verdict(
        &example.post_id,
        &breakdown,
        margin,
        example.embedding.no_signal,
        model,
    )?)
}
