//! ESG taxonomy activities and NACE sector pre-filtering.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// A NACE sector code such as `H`, `H.49` or `H.49.1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NaceCode(String);

impl NaceCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    /// True when `self` is a leading segment chain of `other` (or equal to it).
    pub fn prefixes(&self, other: &NaceCode) -> bool {
        let mine: Vec<&str> = self.segments().collect();
        let theirs: Vec<&str> = other.segments().collect();
        mine.len() <= theirs.len() && mine.iter().zip(&theirs).all(|(a, b)| a == b)
    }

    /// Hierarchical match in either direction.
    pub fn related(&self, other: &NaceCode) -> bool {
        self.prefixes(other) || other.prefixes(self)
    }
}

impl FromStr for NaceCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('.');
        let section = parts.next().unwrap_or_default();
        let valid_section =
            section.len() == 1 && matches!(section.as_bytes()[0], b'A'..=b'U');
        let valid_rest = parts
            .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()));
        if valid_section && valid_rest {
            Ok(NaceCode(s.to_string()))
        } else {
            Err(Error::InvalidNaceCode(s.to_string()))
        }
    }
}

impl TryFrom<String> for NaceCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NaceCode> for String {
    fn from(code: NaceCode) -> String {
        code.0
    }
}

impl fmt::Display for NaceCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsgActivity {
    pub activity_id: String,
    pub title: String,
    pub full_description: String,
    /// Compact rephrasing used as the retrieval query and classification target.
    pub short_description: String,
    #[serde(default)]
    pub nace_codes: BTreeSet<NaceCode>,
    #[serde(default)]
    pub objective: String,
}

impl EsgActivity {
    /// An activity without NACE codes applies to every sector.
    pub fn applies_to(&self, codes: &BTreeSet<NaceCode>) -> bool {
        codes.is_empty()
            || self.nace_codes.is_empty()
            || self
                .nace_codes
                .iter()
                .any(|mine| codes.iter().any(|c| mine.related(c)))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Taxonomy {
    pub version: String,
    pub activities: Vec<EsgActivity>,
}

impl Taxonomy {
    pub fn new(version: impl Into<String>, activities: Vec<EsgActivity>) -> Result<Self> {
        let tax = Taxonomy {
            version: version.into(),
            activities,
        };
        tax.validate()?;
        Ok(tax)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for act in &self.activities {
            if !seen.insert(act.activity_id.as_str()) {
                return Err(Error::DuplicateId(act.activity_id.clone()));
            }
            if act.short_description.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "activity {:?} has an empty short_description",
                    act.activity_id
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, activity_id: &str) -> Option<&EsgActivity> {
        self.activities.iter().find(|a| a.activity_id == activity_id)
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }
}

/// Loads a taxonomy file with one activity record per line. The version tag is
/// taken from the file stem.
pub fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    let activities: Vec<EsgActivity> = jsonl::read(path)?;
    let version = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Taxonomy::new(version, activities)
}

/// Activities applicable to a company with the given NACE codes, ordered by
/// `activity_id`. An empty code set disables the filter.
pub fn select_activities(tax: &Taxonomy, codes: &BTreeSet<NaceCode>) -> Vec<EsgActivity> {
    let mut selected: Vec<EsgActivity> = tax
        .activities
        .iter()
        .filter(|a| a.applies_to(codes))
        .cloned()
        .collect();
    selected.sort_by(|a, b| a.activity_id.cmp(&b.activity_id));
    selected
}
