//! Seeded synthetic data: a corpus with planted credibility signal and an
//! annotation set with fixed agreement counts.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationRecord, LabeledPost};
use crate::corpus::{AuthorProfile, Corpus, CorpusError, Post, WotTable};
use crate::embeddings::{hash_embeddings, EmbeddingError, EmbeddingStore};
use crate::svce::ConceptLexicon;
use crate::util::{derive_seed, rng};
use crate::Label;

pub const SNAPSHOT_UTC: i64 = 1_700_000_000;
const DAY: i64 = 86_400;

const FILLER: &[&str] = &[
    "the", "we", "saw", "people", "today", "about", "some", "new", "again", "and", "our", "team",
    "found", "looks", "like", "this", "week", "more", "details", "here", "thread", "anyone",
    "seen",
];

const TRUSTED_DOMAINS: &[&str] = &[
    "nvd.nist.gov",
    "cve.mitre.org",
    "krebsonsecurity.com",
    "us-cert.gov",
    "securityweek.com",
    "bleepingcomputer.com",
    "thehackernews.com",
    "msrc.microsoft.com",
];
const SHADY_DOMAINS: &[&str] = &[
    "free-hacks.biz",
    "leaks4all.ru",
    "totally-real-news.info",
    "crackz.cc",
    "dumpz.top",
    "clickbait-sec.xyz",
    "pastebin-mirror.io",
    "hackforums-clone.net",
];

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("lexicon has {have} terms, need {need} for two concept pools")]
    SmallLexicon { have: usize, need: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_posts: usize,
    pub credible_fraction: f64,
    pub dim: usize,
    pub seed: u64,
    /// Concept mentions per post.
    pub terms_per_post: usize,
    /// Chance that a mention is drawn from the other class's pool.
    pub cross_rate: f64,
    /// Concepts in each class pool.
    pub pool_size: usize,
    /// Chance that each author/URL feature points towards the true label.
    pub feature_fidelity: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_posts: 2000,
            credible_fraction: 0.5,
            dim: 100,
            seed: 7,
            terms_per_post: 16,
            cross_rate: 0.1,
            pool_size: 5,
            feature_fidelity: 0.9,
        }
    }
}

/// Everything a training run needs.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    /// Three unanimous judgments per post.
    pub annotations: Vec<AnnotationRecord>,
    pub labels: Vec<LabeledPost>,
    pub lexicon: ConceptLexicon,
    pub store: EmbeddingStore,
    pub wot: WotTable,
}

/// Hash embeddings for every lexicon term, multi-word terms underscore-joined.
pub fn lexicon_embeddings(
    lexicon: &ConceptLexicon,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingStore, EmbeddingError> {
    let vocab: Vec<String> = lexicon
        .entries()
        .map(|(t, _)| t.replace(' ', "_"))
        .collect();
    hash_embeddings(&vocab, dim, seed)
}

/// Web-of-Trust table for the synthetic domains, as TSV on the 0 to 100 scale.
pub fn synthetic_wot_tsv() -> String {
    let mut out = String::from("# domain\tscore\n");
    for (i, d) in TRUSTED_DOMAINS.iter().enumerate() {
        out.push_str(&format!("{d}\t{}\n", 80 + 2 * i));
    }
    for (i, d) in SHADY_DOMAINS.iter().enumerate() {
        out.push_str(&format!("{d}\t{}\n", 5 + 4 * i));
    }
    out
}

pub fn synthetic_wot() -> WotTable {
    WotTable::read(synthetic_wot_tsv().as_bytes()).expect("static table is valid")
}

/// Credible posts mention concepts from one pool and link trusted domains
/// from older, higher-karma accounts; non-credible posts the reverse. Each
/// signal is noisy on its own.
pub fn synthetic_corpus(config: &SyntheticConfig) -> Result<SyntheticData, SyntheticError> {
    let lexicon = ConceptLexicon::builtin();
    let mut terms: Vec<&str> = lexicon.entries().map(|(t, _)| t).collect();
    if terms.len() < 2 * config.pool_size {
        return Err(SyntheticError::SmallLexicon {
            have: terms.len(),
            need: 2 * config.pool_size,
        });
    }
    let mut gen = rng(config.seed);
    terms.shuffle(&mut gen);
    let credible_pool = &terms[..config.pool_size];
    let shady_pool = &terms[config.pool_size..2 * config.pool_size];
    let filler: Vec<&str> = FILLER
        .iter()
        .copied()
        .filter(|w| lexicon.get(w).is_none())
        .collect();
    let store = lexicon_embeddings(&lexicon, config.dim, derive_seed(config.seed, 1))?;
    let karma = LogNormal::new(0.0, 1.0).expect("valid parameters");

    let mut posts = Vec::with_capacity(config.n_posts);
    let mut authors = Vec::with_capacity(config.n_posts);
    let mut annotations = Vec::with_capacity(3 * config.n_posts);
    let mut labels = Vec::with_capacity(config.n_posts);
    for i in 0..config.n_posts {
        let credible = gen.random_bool(config.credible_fraction);
        let (own, other) = if credible {
            (credible_pool, shady_pool)
        } else {
            (shady_pool, credible_pool)
        };
        let mut words = Vec::with_capacity(2 * config.terms_per_post);
        for _ in 0..config.terms_per_post {
            let pool = if gen.random_bool(config.cross_rate) {
                other
            } else {
                own
            };
            words.push(*filler.choose(&mut gen).expect("filler is non-empty"));
            words.push(*pool.choose(&mut gen).expect("pool is non-empty"));
        }
        let split = 1 + words.len() / 3;
        let title = words[..split].join(" ");
        let body = words[split..].join(" ");

        // each feature leans towards the label with some chance of flipping
        let lean = |gen: &mut rand_chacha::ChaCha8Rng| {
            credible == gen.random_bool(config.feature_fidelity)
        };
        let url = if gen.random_bool(0.8) {
            let domains = if lean(&mut gen) {
                TRUSTED_DOMAINS
            } else {
                SHADY_DOMAINS
            };
            let d = domains.choose(&mut gen).expect("domains are non-empty");
            Some(format!("https://{d}/item/{i}"))
        } else {
            None
        };
        let scale = if lean(&mut gen) { 5000.0 } else { 300.0 };
        let account_days = if lean(&mut gen) {
            gen.random_range(400..3000)
        } else {
            gen.random_range(1..400)
        };
        let ups = (karma.sample(&mut gen) * if credible { 60.0 } else { 25.0 }) as u64;
        let downs = (karma.sample(&mut gen) * 10.0) as u64;

        let id = format!("s{i:05}");
        let author_id = format!("t2_syn{i:05}");
        authors.push(AuthorProfile {
            author_id: author_id.clone(),
            name: format!("user{}", gen.random_range(10..100_000)),
            created_utc: SNAPSHOT_UTC - account_days * DAY,
            link_karma: (karma.sample(&mut gen) * scale) as i64,
            comment_karma: (karma.sample(&mut gen) * scale) as i64,
            has_verified_email: lean(&mut gen),
            is_verified: gen.random_bool(0.1),
            is_moderator: gen.random_bool(0.05),
        });
        posts.push(Post {
            id: id.clone(),
            subreddit: "netsec".into(),
            title,
            body,
            url,
            created_utc: SNAPSHOT_UTC - gen.random_range(3600..30 * DAY),
            ups,
            downs,
            score: ups as i64 - downs as i64,
            num_comments: (karma.sample(&mut gen) * 8.0) as u64,
            num_crossposts: gen.random_range(0..3),
            author_id,
        });
        let label = Label::from_credible(credible);
        for a in 1..=3 {
            annotations.push(AnnotationRecord {
                post_id: id.clone(),
                annotator_id: format!("ann{a}"),
                label,
            });
        }
        labels.push(LabeledPost {
            post_id: id,
            label,
            agreement: 1.0,
        });
    }
    let corpus = Corpus::new(SNAPSHOT_UTC, posts, authors)?;
    Ok(SyntheticData {
        corpus,
        annotations,
        labels,
        lexicon,
        store,
        wot: synthetic_wot(),
    })
}

/// Judgment counts per post kind for [`annotation_fixture`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementMix {
    pub unanimous_credible: usize,
    pub unanimous_non_credible: usize,
    /// Two-to-one votes, split evenly between majorities.
    pub split: usize,
}

impl AgreementMix {
    /// 2,000 posts of which 953 and 253 are unanimous.
    pub fn reference() -> Self {
        AgreementMix {
            unanimous_credible: 953,
            unanimous_non_credible: 253,
            split: 794,
        }
    }

    pub fn total(&self) -> usize {
        self.unanimous_credible + self.unanimous_non_credible + self.split
    }
}

/// Three judgments per post from a pool of five annotators, posts shuffled.
pub fn annotation_fixture(mix: AgreementMix, seed: u64) -> Vec<AnnotationRecord> {
    let mut kinds: Vec<[Label; 3]> = Vec::with_capacity(mix.total());
    use Label::{Credible as C, NonCredible as N};
    kinds.extend(std::iter::repeat_n([C, C, C], mix.unanimous_credible));
    kinds.extend(std::iter::repeat_n([N, N, N], mix.unanimous_non_credible));
    for s in 0..mix.split {
        kinds.push(if s % 2 == 0 { [C, C, N] } else { [N, N, C] });
    }
    let mut gen = rng(seed);
    kinds.shuffle(&mut gen);
    let pool = ["a1", "a2", "a3", "a4", "a5"];
    let mut out = Vec::with_capacity(3 * kinds.len());
    for (i, votes) in kinds.iter().enumerate() {
        let mut votes = *votes;
        votes.shuffle(&mut gen);
        let who: Vec<&&str> = pool.choose_multiple(&mut gen, 3).collect();
        for (a, label) in who.into_iter().zip(votes) {
            out.push(AnnotationRecord {
                post_id: format!("p{i:05}"),
                annotator_id: a.to_string(),
                label,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{aggregate_annotations, dataset_stats, DEFAULT_MIN_AGREEMENT};

    #[test]
    fn fixture_counts() {
        let recs = annotation_fixture(AgreementMix::reference(), 3);
        assert_eq!(recs.len(), 6000);
        let agg = aggregate_annotations(&recs, DEFAULT_MIN_AGREEMENT).unwrap();
        let s = dataset_stats(&agg.kept);
        assert_eq!((s.credible, s.non_credible), (953, 253));
        assert_eq!(agg.dropped.len(), 794);
    }

    #[test]
    fn corpus_is_deterministic() {
        let cfg = SyntheticConfig {
            n_posts: 50,
            ..Default::default()
        };
        let a = synthetic_corpus(&cfg).unwrap();
        let b = synthetic_corpus(&cfg).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.corpus.len(), 50);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.store.len(), a.lexicon.len());
    }
}
