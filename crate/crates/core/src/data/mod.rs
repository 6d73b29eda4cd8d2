//! Experiment datasets: synthetic blobs, Adult-style svmlight tabular
//! data, MNIST-style line features, and the Karate-club graph.
//!
//! Loaders are deterministic given their path and seed. Feature
//! matrices are `{-1, +1}`-valued except for the blobs, which stay real
//! with an all-ones intercept column.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub mod adult;
pub mod blobs;
pub mod idx;
pub mod karate;
pub mod mnist;

/// A labeled feature matrix with train/test index lists.
#[derive(Clone, Debug)]
pub struct TabularDataset {
    /// One sample per row.
    pub x: DMatrix<f64>,
    /// Class label per row.
    pub y: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Seed that produced any random choices (splits, subsets).
    pub seed: u64,
}

/// A node-labeled graph with binary node features.
#[derive(Clone, Debug)]
pub struct GraphDataset {
    /// Raw 0/1 adjacency, symmetric with an empty diagonal.
    pub adjacency: DMatrix<f64>,
    /// One feature row per node.
    pub x: DMatrix<f64>,
    /// Class label per node.
    pub y: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl TabularDataset {
    /// Labels at the given row indices.
    pub fn labels_at(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.y[r]).collect()
    }
}

impl GraphDataset {
    pub fn labels_at(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.y[r]).collect()
    }
}

/// Copies the given rows of a matrix into a new matrix, in order.
pub fn take_rows(m: &DMatrix<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
    if let Some(&bad) = rows.iter().find(|&&r| r >= m.nrows()) {
        return Err(Error::InvalidArgument(format!(
            "row {bad} out of range for {} rows",
            m.nrows()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), m.ncols(), |i, c| {
        m[(rows[i], c)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn take_rows_selects_in_order() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let picked = take_rows(&m, &[2, 0]).unwrap();
        assert_eq!(picked, DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 1.0, 2.0]));
        assert!(take_rows(&m, &[3]).is_err());
    }
}
