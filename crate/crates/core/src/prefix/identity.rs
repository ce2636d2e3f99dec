use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PrefixError;

pub const MAX_DEPTH: usize = 16;
pub const MAX_LABEL_LEN: usize = 64;

/// A hierarchical identity such as `alice/home/thermostat`.
///
/// Labels are 1–64 bytes of `[a-z0-9_-]`; depth is 1–16. Prefix tests are
/// label-wise: `alice/ho` is not a prefix of `alice/home`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrefixIdentity {
    labels: Vec<String>,
}

pub fn is_valid_label(label: &str) -> bool {
    !label.is_empty()
        && label.len() <= MAX_LABEL_LEN
        && label
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

impl PrefixIdentity {
    pub fn from_labels<I, S>(labels: I) -> Result<Self, PrefixError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() || labels.len() > MAX_DEPTH {
            return Err(PrefixError::MalformedIdentity(format!(
                "depth {} outside 1..={MAX_DEPTH}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| !is_valid_label(l)) {
            return Err(PrefixError::MalformedIdentity(format!("invalid label {bad:?}")));
        }
        Ok(PrefixIdentity { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn depth(&self) -> usize {
        self.labels.len()
    }

    /// First label; by convention the namespace owner's identity id.
    pub fn root(&self) -> &str {
        &self.labels[0]
    }

    /// Label-wise leading sub-list test. Reflexive.
    pub fn is_prefix_of(&self, other: &PrefixIdentity) -> bool {
        self.labels.len() <= other.labels.len() && other.labels.starts_with(&self.labels)
    }

    /// Labels of `other` that follow `self`, if `self` is a prefix of it.
    pub fn suffix_of<'a>(&self, other: &'a PrefixIdentity) -> Option<&'a [String]> {
        self.is_prefix_of(other).then(|| &other.labels[self.labels.len()..])
    }

    pub fn child(&self, label: &str) -> Result<PrefixIdentity, PrefixError> {
        let mut labels = self.labels.clone();
        labels.push(label.to_string());
        PrefixIdentity::from_labels(labels)
    }
}

impl fmt::Display for PrefixIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.labels.join("/"))
    }
}

impl FromStr for PrefixIdentity {
    type Err = PrefixError;

    /// Parses the `/`-joined text form; a single trailing `/` is accepted
    /// (`alice/home/` names the same prefix as `alice/home`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.strip_suffix('/').unwrap_or(s);
        PrefixIdentity::from_labels(trimmed.split('/'))
    }
}

impl Serialize for PrefixIdentity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PrefixIdentity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
