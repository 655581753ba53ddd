//! Frequency-pruned feature vocabulary with dense column numbers.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureVector};

pub const INDEX_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MIN_FREQUENCY: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedFeature {
    pub id: String,
    /// Number of training vectors containing the id.
    pub frequency: usize,
}

/// Ordered feature ids; column `i` is `features[i]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "IndexFile", into = "IndexFile")]
pub struct FeatureIndex {
    features: Vec<IndexedFeature>,
    columns: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format_version: u32,
    features: Vec<IndexedFeature>,
}

impl TryFrom<IndexFile> for FeatureIndex {
    type Error = FeatureError;

    fn try_from(file: IndexFile) -> Result<Self, FeatureError> {
        if file.format_version > INDEX_FORMAT_VERSION {
            return Err(FeatureError::Index(format!(
                "format_version {} is newer than supported version {INDEX_FORMAT_VERSION}",
                file.format_version
            )));
        }
        let mut columns = HashMap::with_capacity(file.features.len());
        for (i, f) in file.features.iter().enumerate() {
            if columns.insert(f.id.clone(), i).is_some() {
                return Err(FeatureError::Index(format!("duplicate feature id {:?}", f.id)));
            }
        }
        Ok(Self { features: file.features, columns })
    }
}

impl From<FeatureIndex> for IndexFile {
    fn from(index: FeatureIndex) -> Self {
        IndexFile { format_version: INDEX_FORMAT_VERSION, features: index.features }
    }
}

impl FeatureIndex {
    /// Keep ids present in at least `min_frequency` of the training vectors,
    /// ordered by frequency descending then id ascending.
    pub fn build<'a>(training: impl IntoIterator<Item = &'a FeatureVector>, min_frequency: usize) -> Self {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for v in training {
            for id in v.ids() {
                *freq.entry(id).or_insert(0) += 1;
            }
        }
        Self::from_frequencies(freq.into_iter().filter(|&(_, n)| n >= min_frequency).map(|(id, n)| (id.to_string(), n)))
    }

    /// Index over the given (id, frequency) pairs, ordered by frequency
    /// descending then id ascending.
    pub fn from_frequencies(pairs: impl IntoIterator<Item = (String, usize)>) -> Self {
        let mut features: Vec<IndexedFeature> =
            pairs.into_iter().map(|(id, frequency)| IndexedFeature { id, frequency }).collect();
        features.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.id.cmp(&b.id)));
        features.dedup_by(|a, b| a.id == b.id);
        let columns = features.iter().enumerate().map(|(i, f)| (f.id.clone(), i)).collect();
        Self { features, columns }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn column(&self, id: &str) -> Option<usize> {
        self.columns.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.columns.contains_key(id)
    }

    pub fn id(&self, column: usize) -> Option<&str> {
        self.features.get(column).map(|f| f.id.as_str())
    }

    pub fn features(&self) -> &[IndexedFeature] {
        &self.features
    }

    /// Sparse (column, value) pairs of `vector`, ascending by column. Ids
    /// outside the index are dropped.
    pub fn encode(&self, vector: &FeatureVector) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = vector.iter().filter_map(|(id, v)| self.column(id).map(|c| (c as u32, v))).collect();
        out.sort_by_key(|&(c, _)| c);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("index serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        serde_json::from_str(text).map_err(|e| FeatureError::Index(e.to_string()))
    }
}
