//! Design matrices for fixed-effects logistic models.
//!
//! Rows are stored compressed (column index, value) because a fixed-effects
//! row has one county dummy, one year dummy and a handful of covariate
//! dummies out of ~80 columns. The information matrix built from them is the
//! full dense one; nothing is absorbed or dropped.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Which part of the linear predictor a column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnBlock {
    Intercept,
    County,
    Year,
    Individual,
    Treatment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub block: ColumnBlock,
}

impl Column {
    pub fn new(name: impl Into<String>, block: ColumnBlock) -> Self {
        Self { name: name.into(), block }
    }
}

/// Sparse-row design with outcome, prior weight, offset and cluster per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    columns: Vec<Column>,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    y: Vec<f64>,
    weights: Vec<f64>,
    offset: Vec<f64>,
    cluster: Vec<u32>,
    cluster_names: Vec<String>,
}

impl DesignMatrix {
    pub fn new(columns: Vec<Column>) -> Self {
        Self {
            columns,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            values: Vec::new(),
            y: Vec::new(),
            weights: Vec::new(),
            offset: Vec::new(),
            cluster: Vec::new(),
            cluster_names: Vec::new(),
        }
    }

    /// Build from dense rows; zero entries are skipped. Mostly for tests and
    /// small hand-written problems.
    pub fn from_dense(columns: Vec<Column>, rows: &[Vec<f64>], y: &[f64], clusters: &[u32]) -> Self {
        assert_eq!(rows.len(), y.len());
        assert_eq!(rows.len(), clusters.len());
        let mut d = Self::new(columns);
        let mut names: Vec<u32> = clusters.to_vec();
        names.sort_unstable();
        names.dedup();
        d.cluster_names = names.iter().map(|c| c.to_string()).collect();
        for ((row, &yi), c) in rows.iter().zip(y).zip(clusters) {
            let entries: Vec<(usize, f64)> =
                row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (j, v)).collect();
            let g = names.binary_search(c).unwrap() as u32;
            d.push_row(&entries, yi, 1.0, 0.0, g);
        }
        d
    }

    pub fn set_cluster_names(&mut self, names: Vec<String>) {
        self.cluster_names = names;
    }

    /// Append a row. `entries` are (column, value) pairs with distinct columns.
    pub fn push_row(&mut self, entries: &[(usize, f64)], y: f64, weight: f64, offset: f64, cluster: u32) {
        for &(j, v) in entries {
            debug_assert!(j < self.columns.len());
            self.col_idx.push(j as u32);
            self.values.push(v);
        }
        self.row_ptr.push(self.col_idx.len());
        self.y.push(y);
        self.weights.push(weight);
        self.offset.push(offset);
        self.cluster.push(cluster);
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn cluster(&self) -> &[u32] {
        &self.cluster
    }

    /// Number of distinct clusters among rows.
    pub fn n_clusters(&self) -> usize {
        let mut seen: Vec<u32> = self.cluster.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    pub fn cluster_names(&self) -> &[String] {
        &self.cluster_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Linear predictor including the offset.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| {
                let (cols, vals) = self.row(i);
                self.offset[i] + cols.iter().zip(vals).map(|(&j, &v)| beta[j as usize] * v).sum::<f64>()
            })
            .collect()
    }

    /// Values of one column for every row.
    pub fn column_values(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().position(|&j| j as usize == col).map_or(0.0, |k| vals[k])
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows(), self.n_cols());
        for i in 0..self.n_rows() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j as usize)] = v;
            }
        }
        m
    }

    /// Unweighted Gram matrix XᵀX over rows with positive weight.
    pub fn gram(&self) -> DMatrix<f64> {
        let p = self.n_cols();
        let mut g = vec![0.0; p * p];
        for i in 0..self.n_rows() {
            if self.weights[i] <= 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&a, &va) in cols.iter().zip(vals) {
                let base = a as usize * p;
                for (&b, &vb) in cols.iter().zip(vals) {
                    g[base + b as usize] += va * vb;
                }
            }
        }
        DMatrix::from_row_slice(p, p, &g)
    }
}
