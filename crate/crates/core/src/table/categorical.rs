use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Code reserved for a missing categorical value.
pub const MISSING: u32 = u32::MAX;

/// Dictionary-encoded annotation column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoricalColumn {
    codes: Arc<Vec<u32>>,
    categories: Vec<String>,
}

impl CategoricalColumn {
    pub fn new(codes: Vec<u32>, categories: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(categories.len());
        for c in &categories {
            if !seen.insert(c.as_str()) {
                return Err(Error::DuplicateName(c.clone()));
            }
        }
        if let Some(bad) = codes
            .iter()
            .find(|&&c| c != MISSING && c as usize >= categories.len())
        {
            return Err(Error::InvalidTable(format!(
                "category code {bad} out of range for {} categories",
                categories.len()
            )));
        }
        Ok(Self {
            codes: Arc::new(codes),
            categories,
        })
    }

    /// Encodes labels with categories in order of first appearance.
    pub fn from_labels<S: AsRef<str>>(values: &[S]) -> Self {
        Self::from_optional_labels(values.iter().map(|v| Some(v.as_ref())))
    }

    /// Like [`from_labels`](Self::from_labels); `None` becomes [`MISSING`].
    pub fn from_optional_labels<'a>(values: impl IntoIterator<Item = Option<&'a str>>) -> Self {
        let mut lookup: HashMap<&str, u32> = HashMap::new();
        let mut categories = Vec::new();
        let codes = values
            .into_iter()
            .map(|v| match v {
                None => MISSING,
                Some(label) => *lookup.entry(label).or_insert_with(|| {
                    categories.push(label.to_string());
                    (categories.len() - 1) as u32
                }),
            })
            .collect();
        Self {
            codes: Arc::new(codes),
            categories,
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn code_of(&self, label: &str) -> Option<u32> {
        self.categories
            .iter()
            .position(|c| c == label)
            .map(|p| p as u32)
    }

    pub fn label(&self, row: usize) -> Option<&str> {
        match self.codes[row] {
            MISSING => None,
            c => Some(&self.categories[c as usize]),
        }
    }

    /// Cells per category, and the number of missing cells.
    pub fn counts(&self) -> (Vec<usize>, usize) {
        let mut counts = vec![0usize; self.categories.len()];
        let mut missing = 0;
        for &c in self.codes.iter() {
            if c == MISSING {
                missing += 1;
            } else {
                counts[c as usize] += 1;
            }
        }
        (counts, missing)
    }

    /// Subsets rows. The category list is kept intact so colour pins and
    /// axis labels remain stable.
    pub fn take_rows(&self, indices: &[usize]) -> Self {
        Self {
            codes: Arc::new(indices.iter().map(|&i| self.codes[i]).collect()),
            categories: self.categories.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_appearance_order() {
        let col = CategoricalColumn::from_labels(&["T", "B", "T"]);
        assert_eq!(col.categories(), &["T", "B"]);
        assert_eq!(col.codes(), &[0, 1, 0]);
    }

    #[test]
    fn empty_string_is_a_category() {
        let col = CategoricalColumn::from_labels(&["", "x"]);
        assert_eq!(col.categories(), &["", "x"]);
        assert_eq!(col.label(0), Some(""));
    }

    #[test]
    fn rejects_out_of_range_codes() {
        assert!(CategoricalColumn::new(vec![0, 2], vec!["a".into(), "b".into()]).is_err());
        assert!(CategoricalColumn::new(vec![0, MISSING], vec!["a".into()]).is_ok());
    }

    #[test]
    fn subset_keeps_categories() {
        let col = CategoricalColumn::from_labels(&["T", "B", "T"]);
        let sub = col.take_rows(&[0, 2]);
        assert_eq!(sub.categories(), &["T", "B"]);
        assert_eq!(sub.counts(), (vec![2, 0], 0));
    }
}
