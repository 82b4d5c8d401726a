//! Post and author features for the margin classifier.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{wot_lookup, AuthorProfile, Post, WotTable};

/// Column order of every feature row. Model weights are tied to this order.
pub const FEATURE_SCHEMA: [&str; 16] = [
    "post_length",
    "seconds_since_posted",
    "downs",
    "ups",
    "score",
    "num_comments",
    "num_crossposts",
    "wot_score",
    "has_url",
    "name_length",
    "seconds_since_registered",
    "link_karma",
    "comment_karma",
    "has_verified_email",
    "is_verified",
    "is_moderator",
];

pub fn schema() -> Vec<String> {
    FEATURE_SCHEMA.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("post {post_id:?} is by {expected:?} but author {found:?} was supplied")]
    AuthorMismatch {
        post_id: String,
        expected: String,
        found: String,
    },
    #[error("need at least 2 rows to fit a standardizer, got {0}")]
    TooFewRows(usize),
    #[error("row has {found} values, schema has {expected}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn bool01(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Builds the feature row. Age features are measured from `snapshot_utc` and
/// floored at zero; lengths count characters.
pub fn extract_features(
    post: &Post,
    author: &AuthorProfile,
    snapshot_utc: i64,
    wot: &WotTable,
) -> Result<FeatureVector, FeatureError> {
    if post.author_id != author.author_id {
        return Err(FeatureError::AuthorMismatch {
            post_id: post.id.clone(),
            expected: post.author_id.clone(),
            found: author.author_id.clone(),
        });
    }
    let trust = wot_lookup(post.url.as_deref(), wot);
    let since = |t: i64| snapshot_utc.saturating_sub(t).max(0) as f64;
    let values = vec![
        (post.title.chars().count() + post.body.chars().count()) as f64,
        since(post.created_utc),
        post.downs as f64,
        post.ups as f64,
        post.score as f64,
        post.num_comments as f64,
        post.num_crossposts as f64,
        trust.score,
        bool01(trust.has_url),
        author.name.chars().count() as f64,
        since(author.created_utc),
        author.link_karma as f64,
        author.comment_karma as f64,
        bool01(author.has_verified_email),
        bool01(author.is_verified),
        bool01(author.is_moderator),
    ];
    Ok(FeatureVector { values })
}

/// Per-feature z-scoring fitted on training rows. Constant columns are masked
/// and map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub masked: Vec<bool>,
}

impl Standardizer {
    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if row.len() != self.width() {
            return Err(FeatureError::SchemaMismatch {
                expected: self.width(),
                found: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, x)| {
                if self.masked[j] {
                    0.0
                } else {
                    (x - self.mean[j]) / self.std[j]
                }
            })
            .collect())
    }
}

/// Population mean and standard deviation per column.
pub fn fit_standardizer<R: AsRef<[f64]>>(rows: &[R]) -> Result<Standardizer, FeatureError> {
    if rows.len() < 2 {
        return Err(FeatureError::TooFewRows(rows.len()));
    }
    let width = rows[0].as_ref().len();
    if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != width) {
        return Err(FeatureError::SchemaMismatch {
            expected: width,
            found: bad.as_ref().len(),
        });
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; width];
    for r in rows {
        mean.iter_mut().zip(r.as_ref()).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; width];
    for r in rows {
        for (j, x) in r.as_ref().iter().enumerate() {
            var[j] += (x - mean[j]) * (x - mean[j]);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    let masked = std
        .iter()
        .map(|s| s.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
        .collect();
    Ok(Standardizer { mean, std, masked })
}

/// Feature matrix as CSV with the schema as header.
pub fn write_feature_matrix<W: Write>(
    mut w: W,
    rows: &[(String, FeatureVector)],
) -> Result<(), FeatureError> {
    writeln!(w, "post_id,{}", FEATURE_SCHEMA.join(","))?;
    for (id, row) in rows {
        if row.values.len() != FEATURE_SCHEMA.len() {
            return Err(FeatureError::SchemaMismatch {
                expected: FEATURE_SCHEMA.len(),
                found: row.values.len(),
            });
        }
        let cells: Vec<String> = row.values.iter().map(f64::to_string).collect();
        writeln!(w, "{id},{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn post() -> Post {
        Post {
            id: "p1".into(),
            subreddit: "netsec".into(),
            title: "Joomla exploit".into(),
            body: "héllo".into(),
            url: Some("https://example.com/a".into()),
            created_utc: 1_000,
            ups: 12,
            downs: 2,
            score: 10,
            num_comments: 4,
            num_crossposts: 1,
            author_id: "t2_x".into(),
        }
    }

    fn author() -> AuthorProfile {
        AuthorProfile {
            author_id: "t2_x".into(),
            name: "analyst".into(),
            created_utc: 400,
            link_karma: 150,
            comment_karma: -3,
            has_verified_email: true,
            is_verified: false,
            is_moderator: true,
        }
    }

    fn wot() -> WotTable {
        WotTable::read("example.com\t90\n".as_bytes()).unwrap()
    }

    #[test]
    fn fixture_row() {
        let f = extract_features(&post(), &author(), 1_600, &wot()).unwrap();
        let expected = [
            19.0, 600.0, 2.0, 12.0, 10.0, 4.0, 1.0, 0.9, 1.0, 7.0, 1200.0, 150.0, -3.0, 1.0, 0.0,
            1.0,
        ];
        assert_eq!(f.values.len(), FEATURE_SCHEMA.len());
        for (a, b) in f.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{:?}", f.values);
        }
    }

    #[test]
    fn posted_at_snapshot_and_missing_url() {
        let mut p = post();
        p.url = None;
        let f = extract_features(&p, &author(), 1_000, &wot()).unwrap();
        assert_eq!(f.values[1], 0.0);
        assert_eq!((f.values[7], f.values[8]), (0.0, 0.0));
        // ages never go negative
        let f = extract_features(&p, &author(), 0, &wot()).unwrap();
        assert_eq!((f.values[1], f.values[10]), (0.0, 0.0));
    }

    #[test]
    fn author_mismatch() {
        let mut a = author();
        a.author_id = "t2_other".into();
        assert!(matches!(
            extract_features(&post(), &a, 2_000, &wot()),
            Err(FeatureError::AuthorMismatch { .. })
        ));
    }

    #[test]
    fn standardizer_examples() {
        let s = fit_standardizer(&[vec![0.0, 5.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (1.0, 1.0));
        assert!(s.masked[1] && !s.masked[0]);
        assert_eq!(s.transform(&[2.0, 123.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(s.transform(&[1.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            s.transform(&[1.0]),
            Err(FeatureError::SchemaMismatch { .. })
        ));
        assert!(matches!(
            fit_standardizer(&[vec![1.0]]),
            Err(FeatureError::TooFewRows(1))
        ));
    }

    #[test]
    fn matrix_csv() {
        let f = extract_features(&post(), &author(), 1_600, &wot()).unwrap();
        let mut buf = Vec::new();
        write_feature_matrix(&mut buf, &[("p1".into(), f)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("post_id,post_length,seconds_since_posted,"));
        assert!(text.lines().nth(1).unwrap().starts_with("p1,19,600,2,12,"));
    }

    proptest! {
        #[test]
        fn transformed_training_rows_are_standard(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 4), 2..40)) {
            let s = fit_standardizer(&rows).unwrap();
            let z: Vec<Vec<f64>> = rows.iter().map(|r| s.transform(r).unwrap()).collect();
            let n = z.len() as f64;
            for j in 0..4 {
                if s.masked[j] {
                    continue;
                }
                let mean = z.iter().map(|r| r[j]).sum::<f64>() / n;
                let std = (z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-9, "mean {}", mean);
                prop_assert!((std - 1.0).abs() < 1e-9, "std {}", std);
            }
        }
    }
}
