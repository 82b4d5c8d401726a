use std::collections::HashSet;

use repengine::embeddings::{PostEmbedding, VectorOptions};
use repengine::evaluation::{
    cross_validate, fit_fold, kfold_split, model_predictions, ConfusionMatrix, CvConfig,
};
use repengine::features::FEATURE_SCHEMA;
use repengine::pipeline::{build_dataset, Dataset, Example, PipelineConfig, PipelineError};
use repengine::synthetic::{synthetic_corpus, SyntheticConfig, SyntheticData};
use repengine::Label;

fn synthetic(n_posts: usize, credible_fraction: f64) -> (SyntheticData, Dataset) {
    let data = synthetic_corpus(&SyntheticConfig {
        n_posts,
        credible_fraction,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let ds = build_dataset(
        &data.corpus,
        &data.labels,
        &data.lexicon,
        &data.store,
        &data.wot,
        VectorOptions::default(),
    )
    .unwrap();
    (data, ds)
}

#[test]
fn model_columns_match_recomputed_thresholds() {
    let (_, ds) = synthetic(200, 0.5);
    let report = cross_validate(
        &ds,
        &CvConfig {
            k: 5,
            seed: 3,
            ..CvConfig::default()
        },
    )
    .unwrap();
    assert_eq!(report.predictions.len(), 200);
    let mut emb = ConfusionMatrix::default();
    let mut svm = ConfusionMatrix::default();
    let mut ens = ConfusionMatrix::default();
    for p in &report.predictions {
        emb.record(Label::from_credible(p.verdict.pe > 0.5), p.actual);
        svm.record(Label::from_credible(p.verdict.ps > 0.5), p.actual);
        ens.record(
            Label::from_credible(p.verdict.pf > report.config.pipeline.threshold),
            p.actual,
        );
        assert_eq!(model_predictions(&p.verdict).0, p.verdict.label);
    }
    assert_eq!(emb, report.embedding.confusion);
    assert_eq!(svm, report.svm.confusion);
    assert_eq!(ens, report.ensemble.confusion);
    assert_eq!(report.ensemble.confusion.total(), 200);
    let per_fold: u64 = report.folds.iter().map(|f| f.counts.ensemble.total()).sum();
    assert_eq!(per_fold, 200);
}

#[test]
fn held_out_labels_do_not_reach_the_fit() {
    let (_, ds) = synthetic(120, 0.5);
    let folds = kfold_split(ds.len(), 4, 1, Some(&ds.labels())).unwrap();
    let held: HashSet<usize> = folds[0].iter().copied().collect();
    let train: Vec<usize> = (0..ds.len()).filter(|i| !held.contains(i)).collect();
    let config = PipelineConfig::default();
    let before = fit_fold(&ds, &train, &config).unwrap();

    let mut permuted = ds.clone();
    let mut held_labels: Vec<Label> = folds[0].iter().map(|&i| ds.examples[i].label).collect();
    held_labels.reverse();
    held_labels
        .iter_mut()
        .for_each(|l| *l = Label::from_credible(!l.is_credible()));
    for (&i, l) in folds[0].iter().zip(held_labels) {
        permuted.examples[i].label = l;
    }
    assert_ne!(permuted, ds);
    assert_eq!(fit_fold(&permuted, &train, &config).unwrap(), before);
}

fn toy_example(id: &str, label: Label, x: f64) -> Example {
    let mut features = vec![0.0; FEATURE_SCHEMA.len()];
    features[0] = x;
    features[7] = if label.is_credible() { 0.9 } else { 0.1 };
    let v = if label.is_credible() { 1.0 } else { -1.0 };
    Example {
        post_id: id.into(),
        label,
        features,
        embedding: PostEmbedding {
            post_id: id.into(),
            vector: vec![v + x / 100.0, 0.5],
            n_terms: 1,
            no_signal: false,
        },
    }
}

#[test]
fn two_folds_on_four_posts() {
    let ds = Dataset {
        examples: vec![
            toy_example("a", Label::Credible, 10.0),
            toy_example("b", Label::Credible, 20.0),
            toy_example("c", Label::NonCredible, 30.0),
            toy_example("d", Label::NonCredible, 40.0),
        ],
    };
    let report = cross_validate(
        &ds,
        &CvConfig {
            k: 2,
            ..CvConfig::default()
        },
    )
    .unwrap();
    assert_eq!(report.folds.len(), 2);
    assert!(report.folds.iter().all(|f| f.n_train == 2 && f.n_test == 2));
    assert_eq!(report.embedding.confusion.total(), 4);
}

#[test]
fn balanced_evaluation_subsamples_majority() {
    let (_, ds) = synthetic(150, 0.75);
    let minority = ds
        .labels()
        .iter()
        .filter(|l| !l.is_credible())
        .count()
        .min(ds.labels().iter().filter(|l| l.is_credible()).count());
    let config = CvConfig {
        k: 3,
        balanced: true,
        ..CvConfig::default()
    };
    let report = cross_validate(&ds, &config).unwrap();
    assert_eq!(report.n_examples, 2 * minority);
    assert_eq!(report.n_credible, minority);
    assert_eq!(cross_validate(&ds, &config).unwrap(), report);
}

#[test]
fn labels_must_refer_to_corpus_posts() {
    let (mut data, _) = synthetic(10, 0.5);
    data.labels[0].post_id = "nowhere".into();
    let err = build_dataset(
        &data.corpus,
        &data.labels,
        &data.lexicon,
        &data.store,
        &data.wot,
        VectorOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, PipelineError::UnknownPost(id) if id == "nowhere"));
}

#[test]
fn stacked_mode_feeds_pe_to_the_svm() {
    let (_, ds) = synthetic(100, 0.5);
    let config = PipelineConfig {
        mode: repengine::ensemble::CombinerMode::Stacked,
        ..PipelineConfig::default()
    };
    let all: Vec<usize> = (0..ds.len()).collect();
    let model = fit_fold(&ds, &all, &config).unwrap();
    assert_eq!(model.svm.weights.len(), FEATURE_SCHEMA.len() + 1);
}
