use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted set of column indices into the feature store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSubset(Vec<u32>);

impl FeatureSubset {
    /// Validates that `dims` is non-empty, strictly increasing and below `n_dims`.
    pub fn new(dims: Vec<u32>, n_dims: u32) -> Result<Self> {
        validate_dims(&dims, n_dims)?;
        Ok(FeatureSubset(dims))
    }

    /// The subset `[0, n_dims)`.
    pub fn full(n_dims: u32) -> Self {
        FeatureSubset((0..n_dims).collect())
    }

    pub fn dims(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Position of global column `dim` within the subset.
    pub fn position(&self, dim: u32) -> Option<usize> {
        self.0.binary_search(&dim).ok()
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

pub(crate) fn validate_dims(dims: &[u32], n_dims: u32) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::Subset("subset is empty".into()));
    }
    if let Some(&d) = dims.iter().find(|&&d| d >= n_dims) {
        return Err(Error::Subset(format!("dimension {d} out of range (n_dims = {n_dims})")));
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Subset(format!("dimensions {dims:?} are not strictly increasing")));
    }
    Ok(())
}
