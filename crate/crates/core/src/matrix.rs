//! Row-major embedding matrices, the universal currency of the system.

use crate::error::{Error, Result};
use std::collections::HashSet;

/// N×D row-major matrix of `f32` embeddings with optional row identifiers.
///
/// Invariants enforced at construction: every entry is finite, `D >= 1`,
/// and identifiers (when present) are unique and one per row. Rows without
/// explicit identifiers are addressed as `"0".."N-1"`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    ids: Option<Vec<String>>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::DimensionMismatch(
                "embedding dimension must be >= 1".into(),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {}x{}={} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "entry at row {}, column {} is {}",
                    i / cols,
                    i % cols,
                    v
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            data,
            ids: None,
        })
    }

    pub fn with_ids(rows: usize, cols: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        let mut m = Self::new(rows, cols, data)?;
        m.set_ids(ids)?;
        Ok(m)
    }

    /// Build from row slices; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let data: Vec<f32> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols.max(1), data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            ids: None,
        }
    }

    pub fn set_ids(&mut self, ids: Vec<String>) -> Result<()> {
        if ids.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {} rows",
                ids.len(),
                self.rows
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DegenerateInput(format!("duplicate id {id:?}")));
            }
        }
        self.ids = Some(ids);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Identifier of row `i` (explicit or the positional default).
    pub fn id(&self, i: usize) -> String {
        match &self.ids {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        }
    }

    /// Explicit ids, if any were set.
    pub fn explicit_ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.cols)
    }

    /// Select a subset of rows (ids are carried over).
    pub fn take_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::InvalidParameter(format!(
                    "row index {} out of range {}",
                    i, self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut out = Self::new(indices.len(), self.cols, data)?;
        if let Some(ids) = &self.ids {
            out.ids = Some(indices.iter().map(|&i| ids[i].clone()).collect());
        }
        Ok(out)
    }

    /// Stack two matrices vertically; both must have the same width.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} and {} columns",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(self.rows + other.rows, self.cols, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dim() {
        assert!(matches!(
            EmbeddingMatrix::new(0, 0, vec![]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let err = EmbeddingMatrix::new(2, 2, vec![1.0, 2.0, f32::NAN, 4.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("column 0"), "{msg}");
    }

    #[test]
    fn rejects_duplicate_ids() {
        let m = EmbeddingMatrix::with_ids(2, 1, vec![1.0, 2.0], vec!["a".into(), "a".into()]);
        assert!(matches!(m, Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn default_ids_are_positional() {
        let m = EmbeddingMatrix::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.id(2), "2");
    }

    #[test]
    fn empty_matrix_is_allowed() {
        let m = EmbeddingMatrix::new(0, 4, vec![]).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.cols(), 4);
    }
}
