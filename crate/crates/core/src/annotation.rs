//! Ground-truth construction from multi-annotator judgments.
//!
//! Each post's agreement is the fraction of annotator pairs that gave the same
//! label. Posts above the cut keep their majority label; everything else is
//! reported as dropped. Reliability is summarized as mean pairwise Cohen's
//! kappa over annotator pairs that share posts.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Label;

/// Default per-post agreement cut; kept posts must exceed it.
pub const DEFAULT_MIN_AGREEMENT: f64 = 0.66;
/// Fewest judgments a post needs to be considered at all.
pub const MIN_ANNOTATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub post_id: String,
    pub annotator_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPost {
    pub post_id: String,
    pub label: Label,
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    TooFewAnnotations { count: usize },
    LowAgreement { agreement: f64 },
    NoMajority { agreement: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPost {
    pub post_id: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

/// Outcome of [`aggregate_annotations`]; both lists are ordered by post id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregation {
    pub kept: Vec<LabeledPost>,
    pub dropped: Vec<DroppedPost>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub credible: usize,
    pub non_credible: usize,
}

impl DatasetStats {
    /// credible / non-credible; `None` when there are no non-credible posts.
    pub fn ratio(&self) -> Option<f64> {
        (self.non_credible > 0).then(|| self.credible as f64 / self.non_credible as f64)
    }

    pub fn total(&self) -> usize {
        self.credible + self.non_credible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairKappa {
    pub annotator_a: String,
    pub annotator_b: String,
    pub shared_posts: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub pairs: Vec<PairKappa>,
    pub mean_kappa: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label sequences are empty")]
    Empty,
    #[error("annotator {annotator_id:?} labeled post {post_id:?} more than once")]
    Duplicate {
        post_id: String,
        annotator_id: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("annotation file header must be `post_id,annotator_id,label`, found {0:?}")]
    BadHeader(String),
    #[error("annotation file line {line}: {message}")]
    Malformed { line: u64, message: String },
}

/// Cohen's kappa for two aligned label sequences.
///
/// When chance agreement is 1 (both raters constant on the same label) the
/// raters agree perfectly and 1.0 is returned.
pub fn cohen_kappa(labels_a: &[Label], labels_b: &[Label]) -> Result<f64, AnnotationError> {
    if labels_a.len() != labels_b.len() {
        return Err(AnnotationError::LengthMismatch(
            labels_a.len(),
            labels_b.len(),
        ));
    }
    if labels_a.is_empty() {
        return Err(AnnotationError::Empty);
    }
    let n = labels_a.len() as f64;
    let mut agree = 0usize;
    let (mut a_pos, mut b_pos) = (0usize, 0usize);
    for (a, b) in labels_a.iter().zip(labels_b) {
        agree += usize::from(a == b);
        a_pos += usize::from(a.is_credible());
        b_pos += usize::from(b.is_credible());
    }
    let p_o = agree as f64 / n;
    let (pa, pb) = (a_pos as f64 / n, b_pos as f64 / n);
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if p_e >= 1.0 {
        return Ok(1.0);
    }
    Ok(((p_o - p_e) / (1.0 - p_e)).clamp(-1.0, 1.0))
}

fn pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Applies the per-post agreement cut and majority vote.
///
/// Posts with fewer than [`MIN_ANNOTATIONS`] judgments, agreement at or below
/// `min_agreement`, or a tied vote are dropped.
pub fn aggregate_annotations(
    records: &[AnnotationRecord],
    min_agreement: f64,
) -> Result<Aggregation, AnnotationError> {
    let mut by_post: BTreeMap<&str, BTreeMap<&str, Label>> = BTreeMap::new();
    for r in records {
        let votes = by_post.entry(r.post_id.as_str()).or_default();
        if votes.insert(r.annotator_id.as_str(), r.label).is_some() {
            return Err(AnnotationError::Duplicate {
                post_id: r.post_id.clone(),
                annotator_id: r.annotator_id.clone(),
            });
        }
    }

    let mut out = Aggregation::default();
    for (post_id, votes) in by_post {
        let total = votes.len();
        if total < MIN_ANNOTATIONS {
            out.dropped.push(DroppedPost {
                post_id: post_id.to_string(),
                reason: DropReason::TooFewAnnotations { count: total },
            });
            continue;
        }
        let credible = votes.values().filter(|l| l.is_credible()).count();
        let non = total - credible;
        let agreement = (pairs(credible) + pairs(non)) as f64 / pairs(total) as f64;
        let reason = if credible == non {
            Some(DropReason::NoMajority { agreement })
        } else if agreement <= min_agreement {
            Some(DropReason::LowAgreement { agreement })
        } else {
            None
        };
        match reason {
            Some(reason) => out.dropped.push(DroppedPost {
                post_id: post_id.to_string(),
                reason,
            }),
            None => out.kept.push(LabeledPost {
                post_id: post_id.to_string(),
                label: Label::from_credible(credible > non),
                agreement,
            }),
        }
    }
    Ok(out)
}

pub fn dataset_stats(labeled: &[LabeledPost]) -> DatasetStats {
    let credible = labeled.iter().filter(|p| p.label.is_credible()).count();
    DatasetStats {
        credible,
        non_credible: labeled.len() - credible,
    }
}

/// Cohen's kappa for every annotator pair with shared posts, and their mean.
pub fn pairwise_kappa(records: &[AnnotationRecord]) -> Result<KappaReport, AnnotationError> {
    let mut by_annotator: BTreeMap<&str, BTreeMap<&str, Label>> = BTreeMap::new();
    for r in records {
        if by_annotator
            .entry(r.annotator_id.as_str())
            .or_default()
            .insert(r.post_id.as_str(), r.label)
            .is_some()
        {
            return Err(AnnotationError::Duplicate {
                post_id: r.post_id.clone(),
                annotator_id: r.annotator_id.clone(),
            });
        }
    }
    let annotators: Vec<&str> = by_annotator.keys().copied().collect();
    let mut pairs = Vec::new();
    for (i, a) in annotators.iter().enumerate() {
        for b in &annotators[i + 1..] {
            let (la, lb) = (&by_annotator[a], &by_annotator[b]);
            let (xs, ys): (Vec<Label>, Vec<Label>) = la
                .iter()
                .filter_map(|(post, l)| lb.get(post).map(|m| (*l, *m)))
                .unzip();
            if xs.is_empty() {
                continue;
            }
            pairs.push(PairKappa {
                annotator_a: a.to_string(),
                annotator_b: b.to_string(),
                shared_posts: xs.len(),
                kappa: cohen_kappa(&xs, &ys)?,
            });
        }
    }
    let mean_kappa = (!pairs.is_empty())
        .then(|| pairs.iter().map(|p| p.kappa).sum::<f64>() / pairs.len() as f64);
    Ok(KappaReport { pairs, mean_kappa })
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    read_annotations(std::fs::File::open(path)?)
}

/// Reads `post_id,annotator_id,label` CSV with a mandatory header row.
pub fn read_annotations<R: Read>(reader: R) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| AnnotationError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["post_id", "annotator_id", "label"] {
        return Err(AnnotationError::BadHeader(
            header.iter().collect::<Vec<_>>().join(","),
        ));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<AnnotationRecord>() {
        let rec = row.map_err(|e| AnnotationError::Malformed {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_annotations<W: std::io::Write>(
    records: &[AnnotationRecord],
    writer: W,
) -> Result<(), AnnotationError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| AnnotationError::Io(std::io::Error::other(e));
    for r in records {
        w.serialize(r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Post ids that appear anywhere in `records`.
pub fn annotated_posts(records: &[AnnotationRecord]) -> BTreeSet<&str> {
    records.iter().map(|r| r.post_id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Credible as C, NonCredible as N};

    fn rec(post: &str, annotator: &str, label: Label) -> AnnotationRecord {
        AnnotationRecord {
            post_id: post.into(),
            annotator_id: annotator.into(),
            label,
        }
    }

    #[test]
    fn kappa_hand_values() {
        assert_eq!(cohen_kappa(&[C, C, N], &[C, C, N]).unwrap(), 1.0);
        assert!(cohen_kappa(&[C, C, N, N], &[C, N, C, N]).unwrap().abs() < 1e-12);
        assert!((cohen_kappa(&[C, C, C, N], &[C, C, N, N]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kappa_constant_identical_raters() {
        assert_eq!(cohen_kappa(&[C, C], &[C, C]).unwrap(), 1.0);
    }

    #[test]
    fn kappa_errors() {
        assert!(matches!(
            cohen_kappa(&[C], &[C, N]),
            Err(AnnotationError::LengthMismatch(1, 2))
        ));
        assert!(matches!(cohen_kappa(&[], &[]), Err(AnnotationError::Empty)));
    }

    #[test]
    fn unanimous_kept() {
        let r = vec![rec("p", "a", C), rec("p", "b", C), rec("p", "c", C)];
        let agg = aggregate_annotations(&r, DEFAULT_MIN_AGREEMENT).unwrap();
        assert_eq!(
            agg.kept,
            vec![LabeledPost {
                post_id: "p".into(),
                label: C,
                agreement: 1.0
            }]
        );
        assert!(agg.dropped.is_empty());
    }

    #[test]
    fn two_to_one_dropped() {
        let r = vec![rec("p", "a", C), rec("p", "b", C), rec("p", "c", N)];
        let agg = aggregate_annotations(&r, DEFAULT_MIN_AGREEMENT).unwrap();
        assert!(agg.kept.is_empty());
        match &agg.dropped[0].reason {
            DropReason::LowAgreement { agreement } => {
                assert!((agreement - 1.0 / 3.0).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_and_ties_reported() {
        let r = vec![
            rec("few", "a", C),
            rec("few", "b", C),
            rec("tie", "a", C),
            rec("tie", "b", C),
            rec("tie", "c", N),
            rec("tie", "d", N),
        ];
        let agg = aggregate_annotations(&r, 0.0).unwrap();
        assert!(agg.kept.is_empty());
        assert_eq!(
            agg.dropped[0].reason,
            DropReason::TooFewAnnotations { count: 2 }
        );
        assert!(matches!(
            agg.dropped[1].reason,
            DropReason::NoMajority { .. }
        ));
    }

    #[test]
    fn duplicate_judgment_rejected() {
        let r = vec![rec("p", "a", C), rec("p", "a", N)];
        assert!(matches!(
            aggregate_annotations(&r, 0.66),
            Err(AnnotationError::Duplicate { .. })
        ));
    }

    #[test]
    fn stats() {
        assert_eq!(
            dataset_stats(&[]),
            DatasetStats {
                credible: 0,
                non_credible: 0
            }
        );
        assert_eq!(dataset_stats(&[]).ratio(), None);
        let l = |label| LabeledPost {
            post_id: "x".into(),
            label,
            agreement: 1.0,
        };
        let s = dataset_stats(&[l(C), l(C), l(C), l(N)]);
        assert_eq!((s.credible, s.non_credible), (3, 1));
        assert_eq!(s.ratio(), Some(3.0));
    }

    #[test]
    fn pairwise_kappa_over_shared_posts() {
        let r = vec![
            rec("1", "a", C),
            rec("2", "a", C),
            rec("3", "a", N),
            rec("1", "b", C),
            rec("2", "b", C),
            rec("3", "b", N),
            rec("9", "c", N),
        ];
        let rep = pairwise_kappa(&r).unwrap();
        assert_eq!(rep.pairs.len(), 1);
        assert_eq!(rep.pairs[0].shared_posts, 3);
        assert_eq!(rep.mean_kappa, Some(1.0));
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let text = "post_id,annotator_id,label\np1,a,credible\np1,b,non-credible\n";
        let recs = read_annotations(text.as_bytes()).unwrap();
        assert_eq!(recs, vec![rec("p1", "a", C), rec("p1", "b", N)]);
        let mut buf = Vec::new();
        write_annotations(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
        assert!(matches!(
            read_annotations("post,annotator,label\n".as_bytes()),
            Err(AnnotationError::BadHeader(_))
        ));
        assert!(matches!(
            read_annotations("post_id,annotator_id,label\np,a,maybe\n".as_bytes()),
            Err(AnnotationError::Malformed { line: 2, .. })
        ));
    }

    fn labels(n: usize) -> impl Strategy<Value = Vec<Label>> {
        prop::collection::vec(prop::bool::ANY.prop_map(Label::from_credible), n)
    }

    proptest! {
        #[test]
        fn kappa_symmetric_and_bounded((a, b) in (1usize..40).prop_flat_map(|n| (labels(n), labels(n)))) {
            let k = cohen_kappa(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&k));
            prop_assert_eq!(k, cohen_kappa(&b, &a).unwrap());
            prop_assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn three_annotators_keep_only_unanimous(votes in prop::collection::vec(prop::array::uniform3(prop::bool::ANY), 1..60)) {
            let mut recs = Vec::new();
            for (i, v) in votes.iter().enumerate() {
                for (j, credible) in v.iter().enumerate() {
                    recs.push(rec(&format!("p{i:03}"), &format!("a{j}"), Label::from_credible(*credible)));
                }
            }
            let agg = aggregate_annotations(&recs, DEFAULT_MIN_AGREEMENT).unwrap();
            prop_assert_eq!(agg.kept.len() + agg.dropped.len(), votes.len());
            let unanimous = votes.iter().filter(|v| v[0] == v[1] && v[1] == v[2]).count();
            prop_assert_eq!(agg.kept.len(), unanimous);
            for k in &agg.kept {
                prop_assert!(k.agreement > DEFAULT_MIN_AGREEMENT);
            }
            // annotator permutation leaves labels unchanged
            let mut rotated = recs.clone();
            for r in &mut rotated {
                r.annotator_id = format!("z{}", r.annotator_id);
            }
            rotated.reverse();
            let again = aggregate_annotations(&rotated, DEFAULT_MIN_AGREEMENT).unwrap();
            prop_assert_eq!(again.kept, agg.kept);
        }
    }
}
