//! Word vectors, post vectors and the centroid reputation score.
//!
//! A post vector is the plain sum of the vectors of the security concepts
//! mentioned in the post; non-concept words never contribute. Two class
//! centroids are fitted on labeled post vectors and a post is scored by its
//! relative Euclidean distance to them:
//!
//! ```text
//! s_c = 1 - d_c / (d_c + d_i)
//! ```
//!
//! where `d_c` is the distance to the credible centroid and `d_i` the distance
//! to the non-credible one.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Post;
use crate::svce::{extract_concepts, ConceptLexicon};
use crate::util::euclidean;
use crate::Label;

/// Score reported when the distances carry no information.
pub const NEUTRAL_SCORE: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: header must be `<vocab_size> <dim>` with dim >= 1")]
    BadHeader { line: usize },
    #[error("line {line}: expected {expected} components, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate token {token:?}")]
    DuplicateToken { line: usize, token: String },
    #[error("line {line}: non-numeric component {value:?}")]
    NonNumeric { line: usize, value: String },
    #[error("header declares {declared} tokens but the file holds {found}")]
    VocabSize { declared: usize, found: usize },
    #[error("vocabulary is empty")]
    EmptyVocab,
    #[error("dimension must be at least 1")]
    ZeroDim,
    #[error("token {0:?} is empty or contains whitespace")]
    BadToken(String),
    #[error("vector dimension {found} does not match expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("no {0} post vectors with signal to fit a centroid")]
    EmptyClass(Label),
    #[error("csv error: {0}")]
    Csv(String),
}

/// Token → fixed-length vector table, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        Ok(EmbeddingStore {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        })
    }

    /// Appends a vector. Tokens must be non-empty and whitespace-free.
    pub fn insert(&mut self, token: &str, vector: &[f64]) -> Result<(), EmbeddingError> {
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(EmbeddingError::BadToken(token.to_string()));
        }
        if vector.len() != self.dim {
            return Err(EmbeddingError::Dimension {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.index.contains_key(token) {
            return Err(EmbeddingError::DuplicateToken {
                line: 0,
                token: token.to_string(),
            });
        }
        self.index.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.tokens
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(t, v)| (t.as_str(), v))
    }

    /// Copy holding only the tokens accepted by `keep`, in original order.
    pub fn subset(&self, mut keep: impl FnMut(&str) -> bool) -> EmbeddingStore {
        let mut out = EmbeddingStore::new(self.dim).expect("dim already validated");
        for (t, v) in self.iter().filter(|(t, _)| keep(t)) {
            out.insert(t, v).expect("tokens already validated");
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::read(std::fs::File::open(path)?)
    }

    /// Parses the word2vec text format.
    pub fn read<R: Read>(reader: R) -> Result<Self, EmbeddingError> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let (declared, dim) = match lines.next() {
            Some((_, header)) => {
                let header = header?;
                let mut it = header.split_whitespace().map(str::parse::<usize>);
                match (it.next(), it.next(), it.next()) {
                    (Some(Ok(v)), Some(Ok(d)), None) if d > 0 => (v, d),
                    _ => return Err(EmbeddingError::BadHeader { line: 1 }),
                }
            }
            None => return Err(EmbeddingError::BadHeader { line: 1 }),
        };
        let mut store = EmbeddingStore::new(dim)?;
        let mut row = Vec::with_capacity(dim);
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-blank line has a field");
            row.clear();
            for p in parts {
                let v: f64 = p
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| EmbeddingError::NonNumeric {
                        line: line_no,
                        value: p.to_string(),
                    })?;
                row.push(v);
            }
            if row.len() != dim {
                return Err(EmbeddingError::DimMismatch {
                    line: line_no,
                    expected: dim,
                    found: row.len(),
                });
            }
            if store.contains(token) {
                return Err(EmbeddingError::DuplicateToken {
                    line: line_no,
                    token: token.to_string(),
                });
            }
            store.insert(token, &row)?;
        }
        if store.len() != declared {
            return Err(EmbeddingError::VocabSize {
                declared,
                found: store.len(),
            });
        }
        Ok(store)
    }

    /// Writes the word2vec text format with shortest round-trip floats.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (t, v) in self.iter() {
            write!(w, "{t}")?;
            for x in v {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn token_rng(token: &str, seed: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Deterministic unit vectors keyed by `(token, dim, seed)`, standing in for a
/// trained embedding model. Repeated tokens are kept once.
pub fn hash_embeddings<S: AsRef<str>>(
    vocab: &[S],
    dim: usize,
    seed: u64,
) -> Result<EmbeddingStore, EmbeddingError> {
    if vocab.is_empty() {
        return Err(EmbeddingError::EmptyVocab);
    }
    let mut store = EmbeddingStore::new(dim)?;
    let mut v = vec![0.0; dim];
    for token in vocab {
        let token = token.as_ref();
        if store.contains(token) {
            continue;
        }
        let mut rng = token_rng(token, seed);
        loop {
            for x in v.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
                break;
            }
        }
        store.insert(token, &v)?;
    }
    Ok(store)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostEmbedding {
    pub post_id: String,
    pub vector: Vec<f64>,
    /// Concept occurrences that contributed at least one vector.
    pub n_terms: usize,
    /// No concept contributed; the vector is zero by construction.
    pub no_signal: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorOptions {
    /// Scale the summed post vector to unit length (off by default).
    pub normalize: bool,
}

/// Vector for a normalized concept term: the whole term if present (multi-word
/// terms under their underscore-joined form), otherwise the sum of whatever
/// constituent tokens are in the store.
pub fn term_vector(term: &str, store: &EmbeddingStore) -> Option<Vec<f64>> {
    if !term.contains(' ') {
        return store.get(term).map(<[f64]>::to_vec);
    }
    if let Some(v) = store.get(&term.replace(' ', "_")) {
        return Some(v.to_vec());
    }
    let mut acc: Option<Vec<f64>> = None;
    for part in term.split(' ') {
        if let Some(v) = store.get(part) {
            let a = acc.get_or_insert_with(|| vec![0.0; store.dim()]);
            a.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        }
    }
    acc
}

/// Sum of concept vectors in `text`; multiplicity counts.
pub fn text_vector(
    post_id: &str,
    text: &str,
    lexicon: &ConceptLexicon,
    store: &EmbeddingStore,
    options: VectorOptions,
) -> PostEmbedding {
    let mut vector = vec![0.0; store.dim()];
    let mut n_terms = 0;
    for m in extract_concepts(text, lexicon) {
        if let Some(v) = term_vector(&m.term, store) {
            vector.iter_mut().zip(&v).for_each(|(a, x)| *a += x);
            n_terms += 1;
        }
    }
    if options.normalize {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            vector.iter_mut().for_each(|x| *x /= norm);
        }
    }
    PostEmbedding {
        post_id: post_id.to_string(),
        vector,
        n_terms,
        no_signal: n_terms == 0,
    }
}

/// The text of a post as seen by the tagger: title, newline, body.
pub fn post_text(post: &Post) -> String {
    if post.body.is_empty() {
        post.title.clone()
    } else {
        format!("{}\n{}", post.title, post.body)
    }
}

pub fn post_vector(
    post: &Post,
    lexicon: &ConceptLexicon,
    store: &EmbeddingStore,
    options: VectorOptions,
) -> PostEmbedding {
    text_vector(&post.id, &post_text(post), lexicon, store, options)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub credible_centroid: Vec<f64>,
    pub non_credible_centroid: Vec<f64>,
    pub metric: Metric,
    pub n_credible: usize,
    pub n_non_credible: usize,
}

impl CentroidModel {
    pub fn dim(&self) -> usize {
        self.credible_centroid.len()
    }

    /// The same model with the class roles exchanged.
    pub fn swapped(&self) -> CentroidModel {
        CentroidModel {
            credible_centroid: self.non_credible_centroid.clone(),
            non_credible_centroid: self.credible_centroid.clone(),
            metric: self.metric,
            n_credible: self.n_non_credible,
            n_non_credible: self.n_credible,
        }
    }
}

/// Per-class component-wise means; posts without signal are left out.
pub fn fit_centroids<'a, I>(labeled: I) -> Result<CentroidModel, EmbeddingError>
where
    I: IntoIterator<Item = (&'a PostEmbedding, Label)>,
{
    let mut dim: Option<usize> = None;
    let mut sums: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut counts = [0usize; 2];
    for (e, label) in labeled {
        if e.no_signal {
            continue;
        }
        let d = *dim.get_or_insert(e.vector.len());
        if e.vector.len() != d {
            return Err(EmbeddingError::Dimension {
                expected: d,
                found: e.vector.len(),
            });
        }
        let k = usize::from(!label.is_credible());
        if sums[k].is_empty() {
            sums[k] = vec![0.0; d];
        }
        sums[k].iter_mut().zip(&e.vector).for_each(|(a, x)| *a += x);
        counts[k] += 1;
    }
    for (k, label) in [Label::Credible, Label::NonCredible]
        .into_iter()
        .enumerate()
    {
        if counts[k] == 0 {
            return Err(EmbeddingError::EmptyClass(label));
        }
        let n = counts[k] as f64;
        sums[k].iter_mut().for_each(|x| *x /= n);
    }
    let [credible_centroid, non_credible_centroid] = sums;
    Ok(CentroidModel {
        credible_centroid,
        non_credible_centroid,
        metric: Metric::Euclidean,
        n_credible: counts[0],
        n_non_credible: counts[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub d_c: f64,
    pub d_i: f64,
    pub s_c: f64,
    pub pe: f64,
    /// The score is the neutral 0.5 because there was nothing to measure.
    pub neutral: bool,
}

/// `1 - d_c / (d_c + d_i)`, or 0.5 when both distances are zero.
pub fn score_from_distances(d_c: f64, d_i: f64) -> f64 {
    let total = d_c + d_i;
    if total > 0.0 {
        (1.0 - d_c / total).clamp(0.0, 1.0)
    } else {
        NEUTRAL_SCORE
    }
}

/// Distances to both centroids and the resulting reputation score. The
/// embedding-model probability `pe` is the same score.
pub fn reputation_score(
    embedding: &PostEmbedding,
    centroids: &CentroidModel,
) -> Result<ScoreBreakdown, EmbeddingError> {
    let dim = centroids.dim();
    for len in [
        embedding.vector.len(),
        centroids.non_credible_centroid.len(),
    ] {
        if len != dim {
            return Err(EmbeddingError::Dimension {
                expected: dim,
                found: len,
            });
        }
    }
    let d_c = euclidean(&embedding.vector, &centroids.credible_centroid);
    let d_i = euclidean(&embedding.vector, &centroids.non_credible_centroid);
    let neutral = embedding.no_signal || d_c + d_i == 0.0;
    let s_c = if embedding.no_signal {
        NEUTRAL_SCORE
    } else {
        score_from_distances(d_c, d_i)
    };
    Ok(ScoreBreakdown {
        d_c,
        d_i,
        s_c,
        pe: s_c,
        neutral,
    })
}

/// Row recovered from an exported vector CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRow {
    pub post_id: String,
    pub label: Option<Label>,
    pub vector: Vec<f64>,
}

/// CSV with header `post_id,label,v0..v{dim-1}`; `label` is empty when unknown.
pub fn export_vectors<W: Write>(
    writer: W,
    dim: usize,
    embeddings: &[PostEmbedding],
    labels: Option<&HashMap<String, Label>>,
) -> Result<(), EmbeddingError> {
    let csv_err = |e: csv::Error| EmbeddingError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["post_id".to_string(), "label".to_string()];
    header.extend((0..dim).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for e in embeddings {
        if e.vector.len() != dim {
            return Err(EmbeddingError::Dimension {
                expected: dim,
                found: e.vector.len(),
            });
        }
        let label = labels
            .and_then(|l| l.get(&e.post_id))
            .map(|l| l.as_str())
            .unwrap_or("");
        let mut rec = vec![e.post_id.clone(), label.to_string()];
        rec.extend(e.vector.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vectors<R: Read>(reader: R) -> Result<Vec<VectorRow>, EmbeddingError> {
    let csv_err = |e: csv::Error| EmbeddingError::Csv(e.to_string());
    let mut r = csv::Reader::from_reader(reader);
    let dim = r.headers().map_err(csv_err)?.len().saturating_sub(2);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let label = match &rec[1] {
            "" => None,
            s => Some(s.parse().map_err(|e: crate::label::ParseLabelError| {
                EmbeddingError::Csv(format!("line {line}: {e}"))
            })?),
        };
        let vector = rec
            .iter()
            .skip(2)
            .map(|s| {
                s.parse::<f64>().map_err(|_| EmbeddingError::NonNumeric {
                    line,
                    value: s.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vector.len() != dim {
            return Err(EmbeddingError::DimMismatch {
                line,
                expected: dim,
                found: vector.len(),
            });
        }
        out.push(VectorRow {
            post_id: rec[0].to_string(),
            label,
            vector,
        });
    }
    Ok(out)
}
