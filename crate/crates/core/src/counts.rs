//! Sparse nonnegative-integer observation matrices.

use ndarray::Array2;

use crate::error::{Error, Result};

/// One nonzero observation: user `u` interacted `count` times with item `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub user: usize,
    pub item: usize,
    pub count: u64,
}

impl Triplet {
    pub fn new(user: usize, item: usize, count: u64) -> Self {
        Self { user, item, count }
    }
}

/// U x I count matrix stored as its nonzero triplets; zeros are implicit.
///
/// Entries are kept sorted by `(user, item)` with unique pairs and counts
/// of at least one, so row slices are contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseCountMatrix {
    n_users: usize,
    n_items: usize,
    entries: Vec<Triplet>,
    row_ptr: Vec<usize>,
}

impl SparseCountMatrix {
    pub fn new(n_users: usize, n_items: usize, mut entries: Vec<Triplet>) -> Result<Self> {
        if n_users == 0 || n_items == 0 {
            return Err(Error::InvalidArgument(
                "matrix dimensions must be positive".into(),
            ));
        }
        for t in &entries {
            if t.user >= n_users || t.item >= n_items {
                return Err(Error::InvalidArgument(format!(
                    "entry ({}, {}) out of range for a {}x{} matrix",
                    t.user, t.item, n_users, n_items
                )));
            }
            if t.count == 0 {
                return Err(Error::InvalidArgument(format!(
                    "zero count stored at ({}, {}); zeros are implicit",
                    t.user, t.item
                )));
            }
        }
        entries.sort_unstable_by_key(|t| (t.user, t.item));
        if let Some(w) = entries
            .windows(2)
            .find(|w| w[0].user == w[1].user && w[0].item == w[1].item)
        {
            return Err(Error::InvalidArgument(format!(
                "duplicate entry for pair ({}, {})",
                w[0].user, w[0].item
            )));
        }
        let mut row_ptr = vec![0usize; n_users + 1];
        for t in &entries {
            row_ptr[t.user + 1] += 1;
        }
        for u in 0..n_users {
            row_ptr[u + 1] += row_ptr[u];
        }
        Ok(Self {
            n_users,
            n_items,
            entries,
            row_ptr,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Triplet] {
        &self.entries
    }

    /// Nonzeros of user `u`, sorted by item.
    pub fn row(&self, u: usize) -> &[Triplet] {
        &self.entries[self.row_ptr[u]..self.row_ptr[u + 1]]
    }

    /// Index range of `row(u)` within `entries()`.
    pub fn row_range(&self, u: usize) -> std::ops::Range<usize> {
        self.row_ptr[u]..self.row_ptr[u + 1]
    }

    pub fn get(&self, u: usize, i: usize) -> u64 {
        let row = self.row(u);
        match row.binary_search_by_key(&i, |t| t.item) {
            Ok(pos) => row[pos].count,
            Err(_) => 0,
        }
    }

    /// Fraction of cells holding a nonzero.
    pub fn density(&self) -> f64 {
        self.entries.len() as f64 / (self.n_users as f64 * self.n_items as f64)
    }

    pub fn total_count(&self) -> u128 {
        self.entries.iter().map(|t| t.count as u128).sum()
    }

    /// Mean count over all U*I cells, zeros included.
    pub fn mean(&self) -> f64 {
        self.total_count() as f64 / (self.n_users as f64 * self.n_items as f64)
    }

    pub fn transpose(&self) -> SparseCountMatrix {
        let entries = self
            .entries
            .iter()
            .map(|t| Triplet::new(t.item, t.user, t.count))
            .collect();
        SparseCountMatrix::new(self.n_items, self.n_users, entries)
            .expect("transpose preserves validity")
    }

    /// Per-item adjacency: for each item, the `(user, count)` pairs sorted by user.
    pub fn by_item(&self) -> Vec<Vec<(usize, u64)>> {
        let mut cols = vec![Vec::new(); self.n_items];
        for t in &self.entries {
            cols[t.item].push((t.user, t.count));
        }
        cols
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.n_users, self.n_items));
        for t in &self.entries {
            dense[[t.user, t.item]] = t.count as f64;
        }
        dense
    }
}
