//! The trained-model artifact: every fitted component plus the lexicon, WOT
//! table and embedding subset needed to score new posts.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::WotTable;
use crate::embeddings::{EmbeddingError, EmbeddingStore, VectorOptions};
use crate::ensemble::{CombinerMode, EnsembleModel};
use crate::features::{schema, FEATURE_SCHEMA};
use crate::svce::{extract_concepts, ConceptLexicon, LexiconError, MentionSource};

pub const BUNDLE_FORMAT_VERSION: &str = "repengine-bundle/1";

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed bundle: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported bundle format {0:?}")]
    Version(String),
    #[error("inconsistent bundle: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub seed: u64,
    pub lambda: f64,
    pub epochs: usize,
    pub inner_folds: usize,
    pub min_agreement: f64,
    pub n_credible: usize,
    pub n_non_credible: usize,
}

/// What scoring needs besides the fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundledContext {
    /// Lexicon as `term<TAB>category` lines.
    pub lexicon: String,
    pub patterns: bool,
    pub normalize_vectors: bool,
    pub wot: WotTable,
    pub embeddings: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub format_version: String,
    pub feature_schema: Vec<String>,
    pub embedding_dim: usize,
    pub lexicon_fingerprint: String,
    pub snapshot_utc: i64,
    pub training: TrainingMeta,
    pub model: EnsembleModel,
    pub context: BundledContext,
}

/// Scoring inputs rebuilt from a bundle.
#[derive(Debug, Clone)]
pub struct ScoringParts {
    pub lexicon: ConceptLexicon,
    pub store: EmbeddingStore,
    pub wot: WotTable,
    pub vectors: VectorOptions,
}

/// Entries of `store` that concept lookups can reach: single-word terms,
/// underscore-joined multi-word terms and their constituents, and tokens the
/// version and file-name patterns would tag.
pub fn reachable_embeddings(lexicon: &ConceptLexicon, store: &EmbeddingStore) -> EmbeddingStore {
    let mut keys: HashSet<String> = HashSet::new();
    for (term, _) in lexicon.entries() {
        if term.contains(' ') {
            keys.insert(term.replace(' ', "_"));
            keys.extend(term.split(' ').map(str::to_string));
        } else {
            keys.insert(term.to_string());
        }
    }
    store.subset(|token| {
        keys.contains(token) || {
            let m = extract_concepts(token, lexicon);
            m.len() == 1 && m[0].source == MentionSource::Pattern && m[0].term == token
        }
    })
}

impl ModelBundle {
    pub fn new(
        model: EnsembleModel,
        lexicon: &ConceptLexicon,
        store: &EmbeddingStore,
        wot: &WotTable,
        vectors: VectorOptions,
        snapshot_utc: i64,
        training: TrainingMeta,
    ) -> Result<Self, BundleError> {
        let embeddings = reachable_embeddings(lexicon, store)
            .iter()
            .map(|(t, v)| (t.to_string(), v.to_vec()))
            .collect();
        let bundle = ModelBundle {
            format_version: BUNDLE_FORMAT_VERSION.to_string(),
            feature_schema: schema(),
            embedding_dim: store.dim(),
            lexicon_fingerprint: lexicon.fingerprint(),
            snapshot_utc,
            training,
            model,
            context: BundledContext {
                lexicon: lexicon.to_tsv(),
                patterns: lexicon.patterns_enabled(),
                normalize_vectors: vectors.normalize,
                wot: wot.clone(),
                embeddings,
            },
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<(), BundleError> {
        let bad = |msg: String| Err(BundleError::Inconsistent(msg));
        if self.format_version != BUNDLE_FORMAT_VERSION {
            return Err(BundleError::Version(self.format_version.clone()));
        }
        if self.feature_schema != FEATURE_SCHEMA {
            return bad("feature schema differs from this build".into());
        }
        let m = &self.model;
        let width = FEATURE_SCHEMA.len();
        if m.standardizer.width() != width {
            return bad(format!(
                "standardizer has {} columns",
                m.standardizer.width()
            ));
        }
        let svm_dim = match m.mode {
            CombinerMode::WeightedSum => width,
            CombinerMode::Stacked => width + 1,
        };
        if m.svm.dim() != svm_dim {
            return bad(format!(
                "svm has {} weights, expected {svm_dim}",
                m.svm.dim()
            ));
        }
        if m.centroids.dim() != self.embedding_dim
            || m.centroids.non_credible_centroid.len() != self.embedding_dim
        {
            return bad("centroid dimension differs from embedding_dim".into());
        }
        if let Some((t, v)) = self
            .context
            .embeddings
            .iter()
            .find(|(_, v)| v.len() != self.embedding_dim)
        {
            return bad(format!("embedding {t:?} has dimension {}", v.len()));
        }
        let lexicon = self.lexicon()?;
        if lexicon.fingerprint() != self.lexicon_fingerprint {
            return bad("lexicon fingerprint mismatch".into());
        }
        Ok(())
    }

    fn lexicon(&self) -> Result<ConceptLexicon, BundleError> {
        Ok(ConceptLexicon::read(self.context.lexicon.as_bytes())?
            .with_patterns(self.context.patterns))
    }

    pub fn scoring_parts(&self) -> Result<ScoringParts, BundleError> {
        let mut store = EmbeddingStore::new(self.embedding_dim)?;
        for (t, v) in &self.context.embeddings {
            store.insert(t, v)?;
        }
        Ok(ScoringParts {
            lexicon: self.lexicon()?,
            store,
            wot: self.context.wot.clone(),
            vectors: VectorOptions {
                normalize: self.context.normalize_vectors,
            },
        })
    }

    /// Pretty-printed JSON with a trailing newline; floats round-trip exactly.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, BundleError> {
        let bundle: ModelBundle = serde_json::from_str(text)?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BundleError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
