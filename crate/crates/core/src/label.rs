use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Binary credibility label. `Credible` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "credible")]
    Credible,
    #[serde(rename = "non-credible")]
    NonCredible,
}

impl Label {
    pub fn is_credible(self) -> bool {
        matches!(self, Label::Credible)
    }

    /// +1 for credible, -1 for non-credible.
    pub fn sign(self) -> f64 {
        match self {
            Label::Credible => 1.0,
            Label::NonCredible => -1.0,
        }
    }

    pub fn from_credible(credible: bool) -> Self {
        if credible {
            Label::Credible
        } else {
            Label::NonCredible
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Credible => "credible",
            Label::NonCredible => "non-credible",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label {0:?} (expected \"credible\" or \"non-credible\")")]
pub struct ParseLabelError(pub String);

impl FromStr for Label {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "credible" => Ok(Label::Credible),
            "non-credible" => Ok(Label::NonCredible),
            other => Err(ParseLabelError(other.to_string())),
        }
    }
}
