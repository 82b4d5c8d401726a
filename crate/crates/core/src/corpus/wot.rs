use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Trust assigned to hosts missing from the table.
pub const DEFAULT_WOT_SCORE: f64 = 0.5;

/// Local per-domain trust table. Scores live in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WotTable {
    entries: BTreeMap<String, f64>,
    default_score: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum WotError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `domain<TAB>score`")]
    Malformed { line: usize },
    #[error("line {line}: invalid domain {domain:?} (expected a bare host name)")]
    BadDomain { line: usize, domain: String },
    #[error("line {line}: score {raw:?} is not a number in [0, 100]")]
    BadScore { line: usize, raw: String },
    #[error("line {line}: duplicate domain {domain:?}")]
    Duplicate { line: usize, domain: String },
    #[error("default score {0} outside [0, 1]")]
    BadDefault(f64),
}

/// Result of a trust lookup for a post's URL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WotScore {
    pub score: f64,
    pub has_url: bool,
}

fn normalize_domain(raw: &str) -> Option<String> {
    let d = raw.trim().trim_end_matches('.').to_lowercase();
    let ok = !d.is_empty()
        && !d.contains("://")
        && !d.contains(['/', '?', '#', '@'])
        && !d.chars().any(char::is_whitespace);
    ok.then_some(d)
}

impl Default for WotTable {
    fn default() -> Self {
        WotTable {
            entries: BTreeMap::new(),
            default_score: DEFAULT_WOT_SCORE,
        }
    }
}

impl WotTable {
    /// Entries are given on the `[0, 1]` scale.
    pub fn new(
        entries: impl IntoIterator<Item = (String, f64)>,
        default_score: f64,
    ) -> Result<Self, WotError> {
        if !(0.0..=1.0).contains(&default_score) {
            return Err(WotError::BadDefault(default_score));
        }
        let mut table = WotTable {
            entries: BTreeMap::new(),
            default_score,
        };
        for (line, (domain, score)) in entries.into_iter().enumerate() {
            let line = line + 1;
            let d = normalize_domain(&domain).ok_or(WotError::BadDomain {
                line,
                domain: domain.clone(),
            })?;
            if !(0.0..=1.0).contains(&score) {
                return Err(WotError::BadScore {
                    line,
                    raw: score.to_string(),
                });
            }
            if table.entries.insert(d.clone(), score).is_some() {
                return Err(WotError::Duplicate { line, domain: d });
            }
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WotError> {
        Self::read(std::fs::File::open(path)?)
    }

    /// Parses `domain<TAB>score_0_to_100` lines; blank lines and `#` comments
    /// are skipped.
    pub fn read<R: Read>(reader: R) -> Result<Self, WotError> {
        let mut entries = BTreeMap::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (domain, raw) = line
                .split_once('\t')
                .ok_or(WotError::Malformed { line: line_no })?;
            let d = normalize_domain(domain).ok_or_else(|| WotError::BadDomain {
                line: line_no,
                domain: domain.to_string(),
            })?;
            let score: f64 = raw
                .trim()
                .parse()
                .ok()
                .filter(|s: &f64| (0.0..=100.0).contains(s))
                .ok_or_else(|| WotError::BadScore {
                    line: line_no,
                    raw: raw.to_string(),
                })?;
            if entries.insert(d.clone(), score / 100.0).is_some() {
                return Err(WotError::Duplicate {
                    line: line_no,
                    domain: d,
                });
            }
        }
        Ok(WotTable {
            entries,
            default_score: DEFAULT_WOT_SCORE,
        })
    }

    pub fn with_default(mut self, default_score: f64) -> Result<Self, WotError> {
        if !(0.0..=1.0).contains(&default_score) {
            return Err(WotError::BadDefault(default_score));
        }
        self.default_score = default_score;
        Ok(self)
    }

    pub fn default_score(&self) -> f64 {
        self.default_score
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Exact host first, then parent domains down to two labels
    /// (`news.example.co.uk` falls back to `example.co.uk`, `co.uk`).
    fn lookup_host(&self, host: &str) -> Option<f64> {
        let mut candidate = host;
        loop {
            if let Some(s) = self.entries.get(candidate) {
                return Some(*s);
            }
            match candidate.split_once('.') {
                Some((_, rest)) if rest.contains('.') => candidate = rest,
                _ => return None,
            }
        }
    }
}

/// Trust score of the URL's host. A missing or unparsable URL scores 0 with
/// `has_url = false`; an unknown host gets the table default.
pub fn wot_lookup(url: Option<&str>, table: &WotTable) -> WotScore {
    const ABSENT: WotScore = WotScore {
        score: 0.0,
        has_url: false,
    };
    let Some(raw) = url.map(str::trim).filter(|u| !u.is_empty()) else {
        return ABSENT;
    };
    let host = match url::Url::parse(raw) {
        Ok(u) => u.host_str().map(|h| h.trim_end_matches('.').to_lowercase()),
        Err(_) => None,
    };
    let Some(host) = host.filter(|h| !h.is_empty()) else {
        log::warn!("ignoring unparsable URL {raw:?}");
        return ABSENT;
    };
    let score = table.lookup_host(&host).unwrap_or(table.default_score);
    WotScore {
        score: score.clamp(0.0, 1.0),
        has_url: true,
    }
}
