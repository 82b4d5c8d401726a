//! Post/author data model, the JSONL corpus format, Web-of-Trust lookups and
//! the live listing client.

mod live;
mod wot;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use live::{
    fetch_live, FetchConfig, FetchError, HttpResponse, ListingTab, RetryPolicy, Sleeper,
    ThreadSleeper, TranscriptEntry, TranscriptTransport, Transport, TransportError, UreqTransport,
    BEARER_TOKEN_ENV,
};
pub use wot::{wot_lookup, WotError, WotScore, WotTable, DEFAULT_WOT_SCORE};

/// One submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Post {
    pub id: String,
    pub subreddit: String,
    pub title: String,
    pub body: String,
    pub url: Option<String>,
    pub created_utc: i64,
    pub ups: u64,
    pub downs: u64,
    pub score: i64,
    pub num_comments: u64,
    pub num_crossposts: u64,
    pub author_id: String,
}

/// Submitter metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthorProfile {
    pub author_id: String,
    pub name: String,
    pub created_utc: i64,
    pub link_karma: i64,
    pub comment_karma: i64,
    pub has_verified_email: bool,
    pub is_verified: bool,
    pub is_moderator: bool,
}

/// A validated snapshot of posts and their authors.
///
/// `snapshot_utc` is the reference time for every age feature. Posts are kept
/// sorted by `(created_utc, id)` and every `author_id` resolves in `authors`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub snapshot_utc: i64,
    pub posts: Vec<Post>,
    pub authors: BTreeMap<String, AuthorProfile>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line 1: first record must be a meta record carrying snapshot_utc")]
    MissingSnapshot,
    #[error("line {line}: duplicate meta record")]
    DuplicateMeta { line: usize },
    #[error("line {line}: duplicate post id {id:?}")]
    DuplicatePost { line: usize, id: String },
    #[error("line {line}: duplicate author record {author_id:?}")]
    DuplicateAuthor { line: usize, author_id: String },
    #[error("line {line}: missing author {author_id:?} for post {post_id:?}")]
    MissingAuthor {
        line: usize,
        post_id: String,
        author_id: String,
    },
    #[error("line {line}: {what} created_utc {created_utc} is after snapshot_utc {snapshot_utc}")]
    FromTheFuture {
        line: usize,
        what: String,
        created_utc: i64,
        snapshot_utc: i64,
    },
    #[error("line {line}: empty identifier in {what}")]
    EmptyId { line: usize, what: &'static str },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Meta(Meta),
    Post(Post),
    Author(AuthorProfile),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    snapshot_utc: i64,
}

impl Corpus {
    pub fn empty(snapshot_utc: i64) -> Self {
        Corpus {
            snapshot_utc,
            posts: Vec::new(),
            authors: BTreeMap::new(),
        }
    }

    /// Builds a corpus from parts, enforcing every invariant. Posts are sorted.
    pub fn new(
        snapshot_utc: i64,
        posts: Vec<Post>,
        authors: Vec<AuthorProfile>,
    ) -> Result<Self, CorpusError> {
        let mut builder = Builder::new(snapshot_utc);
        // line numbers are meaningless here; report 0
        for a in authors {
            builder.add_author(0, a)?;
        }
        for p in posts {
            builder.add_post(0, p)?;
        }
        builder.finish()
    }

    pub fn author_of(&self, post: &Post) -> Option<&AuthorProfile> {
        self.authors.get(&post.author_id)
    }

    pub fn post(&self, id: &str) -> Option<&Post> {
        self.posts.iter().find(|p| p.id == id)
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Canonical JSONL: meta line, authors by id, then posts in corpus order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let line = |r: &Record| serde_json::to_string(r).expect("corpus records always serialize");
        writeln!(
            w,
            "{}",
            line(&Record::Meta(Meta {
                snapshot_utc: self.snapshot_utc
            }))
        )?;
        for a in self.authors.values() {
            writeln!(w, "{}", line(&Record::Author(a.clone())))?;
        }
        for p in &self.posts {
            writeln!(w, "{}", line(&Record::Post(p.clone())))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Reads and validates a JSONL corpus file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let file = File::open(path.as_ref())?;
    read_corpus(BufReader::new(file))
}

pub fn read_corpus<R: Read>(reader: R) -> Result<Corpus, CorpusError> {
    let reader = BufReader::new(reader);
    let mut builder: Option<Builder> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        match (record, builder.as_mut()) {
            (Record::Meta(meta), None) => builder = Some(Builder::new(meta.snapshot_utc)),
            (Record::Meta(_), Some(_)) => return Err(CorpusError::DuplicateMeta { line: line_no }),
            (_, None) => return Err(CorpusError::MissingSnapshot),
            (Record::Post(p), Some(b)) => b.add_post(line_no, p)?,
            (Record::Author(a), Some(b)) => b.add_author(line_no, a)?,
        }
    }
    builder.ok_or(CorpusError::MissingSnapshot)?.finish()
}

struct Builder {
    snapshot_utc: i64,
    posts: Vec<(usize, Post)>,
    post_ids: HashSet<String>,
    authors: BTreeMap<String, AuthorProfile>,
}

impl Builder {
    fn new(snapshot_utc: i64) -> Self {
        Builder {
            snapshot_utc,
            posts: Vec::new(),
            post_ids: HashSet::new(),
            authors: BTreeMap::new(),
        }
    }

    fn add_post(&mut self, line: usize, post: Post) -> Result<(), CorpusError> {
        if post.id.is_empty() {
            return Err(CorpusError::EmptyId {
                line,
                what: "post id",
            });
        }
        if post.author_id.is_empty() {
            return Err(CorpusError::EmptyId {
                line,
                what: "post author_id",
            });
        }
        if post.created_utc > self.snapshot_utc {
            return Err(CorpusError::FromTheFuture {
                line,
                what: format!("post {:?}", post.id),
                created_utc: post.created_utc,
                snapshot_utc: self.snapshot_utc,
            });
        }
        if !self.post_ids.insert(post.id.clone()) {
            return Err(CorpusError::DuplicatePost { line, id: post.id });
        }
        self.posts.push((line, post));
        Ok(())
    }

    fn add_author(&mut self, line: usize, author: AuthorProfile) -> Result<(), CorpusError> {
        if author.author_id.is_empty() {
            return Err(CorpusError::EmptyId {
                line,
                what: "author_id",
            });
        }
        if author.created_utc > self.snapshot_utc {
            return Err(CorpusError::FromTheFuture {
                line,
                what: format!("author {:?}", author.author_id),
                created_utc: author.created_utc,
                snapshot_utc: self.snapshot_utc,
            });
        }
        if self.authors.contains_key(&author.author_id) {
            return Err(CorpusError::DuplicateAuthor {
                line,
                author_id: author.author_id,
            });
        }
        self.authors.insert(author.author_id.clone(), author);
        Ok(())
    }

    fn finish(self) -> Result<Corpus, CorpusError> {
        for (line, p) in &self.posts {
            if !self.authors.contains_key(&p.author_id) {
                return Err(CorpusError::MissingAuthor {
                    line: *line,
                    post_id: p.id.clone(),
                    author_id: p.author_id.clone(),
                });
            }
        }
        let mut posts: Vec<Post> = self.posts.into_iter().map(|(_, p)| p).collect();
        posts.sort_by(|a, b| (a.created_utc, &a.id).cmp(&(b.created_utc, &b.id)));
        Ok(Corpus {
            snapshot_utc: self.snapshot_utc,
            posts,
            authors: self.authors,
        })
    }
}
