use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RawAnnotation;
use crate::{Error, Result};

/// Retained classes, indexed `0..L` by descending count (ties alphabetical).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCatalog {
    pub names: Vec<String>,
    pub counts: Vec<usize>,
    pub min_count: usize,
}

impl ClassCatalog {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Like [`ClassCatalog::index_of`] but reports the unknown name.
    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| {
            Error::Config(format!("class `{name}` is not in the catalog ({})", self.names.join(", ")))
        })
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Keeps only the first `k` classes (the most frequent ones).
    pub fn top(&self, k: usize) -> ClassCatalog {
        let k = k.min(self.len());
        ClassCatalog {
            names: self.names[..k].to_vec(),
            counts: self.counts[..k].to_vec(),
            min_count: self.min_count,
        }
    }
}

pub fn build_catalog(annotations: &[RawAnnotation], min_count: usize) -> Result<ClassCatalog> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in annotations {
        *counts.entry(a.class_name.as_str()).or_default() += 1;
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::NoClassSurvives { min_count });
    }
    // BTreeMap iteration is alphabetical and the sort is stable.
    kept.sort_by(|a, b| b.1.cmp(&a.1));
    Ok(ClassCatalog {
        names: kept.iter().map(|(n, _)| n.to_string()).collect(),
        counts: kept.iter().map(|&(_, c)| c).collect(),
        min_count,
    })
}
