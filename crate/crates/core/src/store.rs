use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Frozen matrix of source-instance embeddings (or k-means centroids).
///
/// Rows never change once a store is built; infusion only reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceStore {
    rows: Matrix,
    /// Dataset tag, e.g. the source corpus name.
    pub tag: String,
    /// Rows are cluster centroids rather than instance embeddings.
    pub centroids: bool,
    /// Rows that were exported as all-zero and could not be normalized.
    pub zero_rows: Vec<u32>,
}

impl SourceStore {
    pub fn new(rows: Matrix, tag: impl Into<String>) -> Result<Self> {
        if rows.rows() == 0 {
            return Err(Error::invalid("source store needs at least one row"));
        }
        if !rows.is_finite() {
            return Err(Error::NonFinite("source store"));
        }
        let zero_rows = (0..rows.rows())
            .filter(|&r| rows.row(r).iter().all(|&x| x == 0.0))
            .map(|r| r as u32)
            .collect();
        Ok(SourceStore {
            rows,
            tag: tag.into(),
            centroids: false,
            zero_rows,
        })
    }

    pub fn with_centroids(mut self, centroids: bool) -> Self {
        self.centroids = centroids;
        self
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.rows
    }

    /// Stack stores row-wise. Tags are joined with `+`; the result is marked
    /// as centroids if any input is.
    pub fn concat(stores: &[SourceStore]) -> Result<SourceStore> {
        let first = stores.first().ok_or_else(|| Error::invalid("no source stores given"))?;
        let dim = first.dim();
        let mut data = Vec::with_capacity(stores.iter().map(|s| s.len() * dim).sum());
        let mut zero_rows = Vec::new();
        let mut offset = 0u32;
        for s in stores {
            if s.dim() != dim {
                return Err(Error::dims("store concatenation", dim, s.dim()));
            }
            data.extend_from_slice(s.rows.as_slice());
            zero_rows.extend(s.zero_rows.iter().map(|r| r + offset));
            offset += s.len() as u32;
        }
        let n = data.len() / dim;
        Ok(SourceStore {
            rows: Matrix::from_vec(n, dim, data),
            tag: stores.iter().map(|s| s.tag.as_str()).collect::<Vec<_>>().join("+"),
            centroids: stores.iter().any(|s| s.centroids),
            zero_rows,
        })
    }
}
