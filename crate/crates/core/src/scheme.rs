//! Coding scheme: the ordered annotation classes and an optional merge map
//! folding rare classes into others.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_SCHEME: &str = include_str!("../data/scheme_default.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeClass {
    pub id: String,
    pub name: String,
    pub description: String,
    pub anonymized_example: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingScheme {
    pub classes: Vec<SchemeClass>,
    #[serde(default)]
    pub merge_map: BTreeMap<String, String>,
}

impl Default for CodingScheme {
    fn default() -> Self {
        CodingScheme::from_json(DEFAULT_SCHEME).expect("bundled scheme is valid")
    }
}

impl CodingScheme {
    pub fn from_json(s: &str) -> Result<Self> {
        let scheme: CodingScheme = serde_json::from_str(s)?;
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Ids are unique; merge sources and targets exist; targets are not
    /// themselves merged.
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig("coding scheme has no classes".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.classes {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate class id `{}`", c.id)));
            }
        }
        for (from, to) in &self.merge_map {
            for id in [from, to] {
                if !seen.contains(id.as_str()) {
                    return Err(Error::InvalidConfig(format!("merge map names unknown class `{id}`")));
                }
            }
            if self.merge_map.contains_key(to) {
                return Err(Error::InvalidConfig(format!("merge target `{to}` is itself merged")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.id.clone()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.id == id)
    }

    /// The class an id ends up as after merging.
    pub fn resolve<'a>(&'a self, id: &'a str) -> Result<&'a str> {
        if self.index_of(id).is_none() {
            return Err(Error::UnknownClass(id.to_owned()));
        }
        Ok(self.merge_map.get(id).map_or(id, String::as_str))
    }

    /// Scheme with merged-away classes removed and an empty merge map.
    pub fn effective(&self) -> CodingScheme {
        CodingScheme {
            classes: self
                .classes
                .iter()
                .filter(|c| !self.merge_map.contains_key(&c.id))
                .cloned()
                .collect(),
            merge_map: BTreeMap::new(),
        }
    }

    /// Index of `id` in [`effective`](Self::effective) after merging.
    pub fn label_index(&self, id: &str) -> Result<usize> {
        let target = self.resolve(id)?;
        self.classes
            .iter()
            .filter(|c| !self.merge_map.contains_key(&c.id))
            .position(|c| c.id == target)
            .ok_or_else(|| Error::UnknownClass(id.to_owned()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
