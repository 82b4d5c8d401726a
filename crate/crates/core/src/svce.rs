//! Gazetteer tagger for security concepts.
//!
//! Text is split into normalized tokens with byte spans, then scanned left to
//! right taking the longest lexicon entry that starts at each position. Version
//! numbers and file names are open classes and are recognized by pattern when
//! no lexicon entry matches.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const DEFAULT_LEXICON: &str = include_str!("../data/default_lexicon.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    MeansOfAttack,
    Consequence,
    Software,
    Hardware,
    OperatingSystem,
    Version,
    NetworkTerm,
    FileName,
    TechnicalTerm,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::MeansOfAttack,
        Category::Consequence,
        Category::Software,
        Category::Hardware,
        Category::OperatingSystem,
        Category::Version,
        Category::NetworkTerm,
        Category::FileName,
        Category::TechnicalTerm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::MeansOfAttack => "means-of-attack",
            Category::Consequence => "consequence",
            Category::Software => "software",
            Category::Hardware => "hardware",
            Category::OperatingSystem => "operating-system",
            Category::Version => "version",
            Category::NetworkTerm => "network-term",
            Category::FileName => "file-name",
            Category::TechnicalTerm => "technical-term",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// How a mention was recognized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionSource {
    Lexicon,
    Pattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMention {
    /// Normalized term; tokens joined by single spaces.
    pub term: String,
    pub category: Category,
    /// Byte range in the source text.
    pub span: (usize, usize),
    pub source: MentionSource,
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `term<TAB>category`")]
    Malformed { line: usize },
    #[error("line {line}: {message}")]
    UnknownCategory { line: usize, message: String },
    #[error("line {line}: term {term:?} normalizes to nothing")]
    EmptyTerm { line: usize, term: String },
    #[error("line {line}: term {term:?} already mapped to {existing}")]
    Conflict {
        line: usize,
        term: String,
        existing: Category,
    },
    #[error("lexicon is empty")]
    Empty,
}

/// Normalized term → category map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptLexicon {
    entries: BTreeMap<String, Category>,
    max_tokens: usize,
    patterns: bool,
}

impl ConceptLexicon {
    /// Builds a lexicon; terms are normalized and must map to one category.
    pub fn from_entries<I, S>(entries: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (S, Category)>,
        S: AsRef<str>,
    {
        let mut map = BTreeMap::new();
        for (idx, (term, cat)) in entries.into_iter().enumerate() {
            insert(&mut map, idx + 1, term.as_ref(), cat)?;
        }
        Self::finish(map)
    }

    fn finish(entries: BTreeMap<String, Category>) -> Result<Self, LexiconError> {
        if entries.is_empty() {
            return Err(LexiconError::Empty);
        }
        let max_tokens = entries
            .keys()
            .map(|k| k.split(' ').count())
            .max()
            .unwrap_or(1);
        Ok(ConceptLexicon {
            entries,
            max_tokens,
            patterns: true,
        })
    }

    /// The bundled seed lexicon.
    pub fn builtin() -> Self {
        Self::read(DEFAULT_LEXICON.as_bytes()).expect("bundled lexicon is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Self::read(std::fs::File::open(path)?)
    }

    /// Parses `term<TAB>category` lines; blank lines and `#` comments skipped.
    pub fn read<R: Read>(reader: R) -> Result<Self, LexiconError> {
        let mut map = BTreeMap::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (term, cat) = line
                .split_once('\t')
                .ok_or(LexiconError::Malformed { line: line_no })?;
            let cat: Category = cat
                .parse()
                .map_err(|message| LexiconError::UnknownCategory {
                    line: line_no,
                    message,
                })?;
            insert(&mut map, line_no, term, cat)?;
        }
        Self::finish(map)
    }

    /// Enables or disables pattern recognition of versions and file names.
    pub fn with_patterns(mut self, enabled: bool) -> Self {
        self.patterns = enabled;
        self
    }

    pub fn patterns_enabled(&self) -> bool {
        self.patterns
    }

    pub fn get(&self, term: &str) -> Option<Category> {
        self.entries.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, Category)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Canonical TSV form, sorted by term.
    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|(t, c)| format!("{t}\t{c}\n"))
            .collect()
    }

    /// SHA-256 over the canonical TSV plus the pattern switch.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_tsv().as_bytes());
        h.update(
            if self.patterns {
                "patterns:on"
            } else {
                "patterns:off"
            }
            .as_bytes(),
        );
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn insert(
    map: &mut BTreeMap<String, Category>,
    line: usize,
    term: &str,
    cat: Category,
) -> Result<(), LexiconError> {
    let norm = normalize(term).join(" ");
    if norm.is_empty() {
        return Err(LexiconError::EmptyTerm {
            line,
            term: term.to_string(),
        });
    }
    match map.get(&norm) {
        Some(&existing) if existing != cat => Err(LexiconError::Conflict {
            line,
            term: norm,
            existing,
        }),
        _ => {
            map.insert(norm, cat);
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

fn keep_trailing(c: char) -> bool {
    c.is_alphanumeric() || c == '+' || c == '#'
}

/// Whitespace split, edge punctuation stripped, lower-cased. Byte spans refer
/// to the stripped token in the original text.
pub(crate) fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut seg_start: Option<usize> = None;
    let mut push = |s: usize, e: usize| {
        let raw = &text[s..e];
        let lead = raw
            .char_indices()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, _)| i);
        let Some(lead) = lead else { return };
        let trail = raw
            .char_indices()
            .rev()
            .find(|(_, c)| keep_trailing(*c))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(raw.len());
        out.push(Token {
            text: raw[lead..trail].to_lowercase(),
            start: s + lead,
            end: s + trail,
        });
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = seg_start.take() {
                push(s, i);
            }
        } else if seg_start.is_none() {
            seg_start = Some(i);
        }
    }
    if let Some(s) = seg_start {
        push(s, text.len());
    }
    out
}

/// Lower-cased tokens with edge punctuation removed; interior punctuation
/// (versions like `2.0.0`, dotted file names) is preserved.
pub fn normalize(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

static VERSION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^v?\d+(\.\d+)+[a-z0-9-]*$").expect("valid regex"));
static FILE_NAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^[\w-]+(\.[\w-]+)*\.(exe|dll|sys|bat|cmd|ps1|sh|py|js|vbs|jar|apk|ipa|msi|scr|lnk|hta|doc|docx|docm|xls|xlsx|xlsm|ppt|pptx|pdf|rtf|zip|rar|7z|tar|gz|tgz|iso|dmg|img|bin|elf|so|php|asp|aspx|jsp|html|htm|cfg|conf|ini|log|txt)$",
    )
    .expect("valid regex")
});

fn pattern_category(token: &str) -> Option<Category> {
    if VERSION.is_match(token) {
        Some(Category::Version)
    } else if FILE_NAME.is_match(token) {
        Some(Category::FileName)
    } else {
        None
    }
}

/// Tags concept mentions. Longest match wins at each position; every
/// occurrence yields its own mention and mentions never overlap.
pub fn extract_concepts(text: &str, lexicon: &ConceptLexicon) -> Vec<ConceptMention> {
    let tokens = tokenize(text);
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = lexicon.max_tokens.min(tokens.len() - i);
        let hit = (1..=longest).rev().find_map(|len| {
            let key = tokens[i..i + len]
                .iter()
                .map(|t| t.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            lexicon.get(&key).map(|cat| (len, key, cat))
        });
        match hit {
            Some((len, term, category)) => {
                out.push(ConceptMention {
                    term,
                    category,
                    span: (tokens[i].start, tokens[i + len - 1].end),
                    source: MentionSource::Lexicon,
                });
                i += len;
            }
            None => {
                let t = &tokens[i];
                if let Some(category) = lexicon
                    .patterns
                    .then(|| pattern_category(&t.text))
                    .flatten()
                {
                    out.push(ConceptMention {
                        term: t.text.clone(),
                        category,
                        span: (t.start, t.end),
                        source: MentionSource::Pattern,
                    });
                }
                i += 1;
            }
        }
    }
    out
}
