use crate::error::{Error, Result};
use crate::subset::FeatureSubset;

/// Axis-aligned box over a feature subset.
///
/// Each side is the half-open interval `(lower, upper]`; infinite bounds
/// leave a side unconstrained. A box with `lower >= upper` on any side is
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBox {
    subset: FeatureSubset,
    lower: Vec<f32>,
    upper: Vec<f32>,
}

impl QueryBox {
    pub fn new(subset: FeatureSubset, lower: Vec<f32>, upper: Vec<f32>) -> Result<Self> {
        if lower.len() != subset.len() || upper.len() != subset.len() {
            return Err(Error::IndexMismatch(format!(
                "box has {}/{} bounds for a {}-dimensional subset",
                lower.len(),
                upper.len(),
                subset.len()
            )));
        }
        if lower.iter().chain(&upper).any(|v| v.is_nan()) {
            return Err(Error::InvalidRequest("box bounds must not be NaN".into()));
        }
        Ok(QueryBox { subset, lower, upper })
    }

    /// `(-inf, +inf]` on every side.
    pub fn universal(subset: FeatureSubset) -> Self {
        let d = subset.len();
        QueryBox { subset, lower: vec![f32::NEG_INFINITY; d], upper: vec![f32::INFINITY; d] }
    }

    pub fn subset(&self) -> &FeatureSubset {
        &self.subset
    }

    pub fn lower(&self) -> &[f32] {
        &self.lower
    }

    pub fn upper(&self) -> &[f32] {
        &self.upper
    }

    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l >= u)
    }

    /// Tightens side `j` to `(max(lower, lo), min(upper, hi)]`.
    pub fn intersect_side(&mut self, j: usize, lo: f32, hi: f32) {
        self.lower[j] = self.lower[j].max(lo);
        self.upper[j] = self.upper[j].min(hi);
    }

    /// Membership of a point given in subset coordinates.
    #[inline]
    pub fn contains_projected(&self, point: &[f32]) -> bool {
        point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&x, (&l, &u))| l < x && x <= u)
    }

    /// Membership of a full-width feature row.
    #[inline]
    pub fn contains_row(&self, row: &[f32]) -> bool {
        self.subset
            .dims()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&d, (&l, &u))| {
                let x = row[d as usize];
                l < x && x <= u
            })
    }

    /// Side-wise containment: `self ⊆ other` as sets, when both are non-empty.
    pub fn is_within(&self, other: &QueryBox) -> bool {
        self.subset == other.subset
            && self.lower.iter().zip(&other.lower).all(|(a, b)| a >= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a <= b)
    }

    /// Number of sides with at least one finite bound.
    pub fn constrained_sides(&self) -> usize {
        self.lower
            .iter()
            .zip(&self.upper)
            .filter(|(l, u)| l.is_finite() || u.is_finite())
            .count()
    }

    /// Renders the box as a SQL-style predicate over columns named `f<dim>`.
    pub fn to_sql(&self) -> String {
        let mut preds = Vec::new();
        for ((&d, &l), &u) in self.subset.dims().iter().zip(&self.lower).zip(&self.upper) {
            if l.is_finite() {
                preds.push(format!("{l} < f{d}"));
            }
            if u.is_finite() {
                preds.push(format!("f{d} <= {u}"));
            }
        }
        if preds.is_empty() {
            "WHERE TRUE".to_string()
        } else {
            format!("WHERE {}", preds.join(" AND "))
        }
    }
}
