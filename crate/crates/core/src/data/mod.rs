//! Datasets: IDX ingestion, synthetic Gaussian blobs, and client partitioning.

pub mod idx;
mod partition;
mod synthetic;

pub use idx::load_idx;
pub use partition::{partition_data, partition_indices, Partition};
pub use synthetic::{gen_synthetic, gen_synthetic_split, SyntheticSpec};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Labelled examples with uniform feature length, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_classes: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(dim: usize, num_classes: usize, features: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        if dim == 0 || num_classes == 0 {
            return Err(Error::invalid("dataset", "dimension and class count must be positive"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * labels.len(),
                actual: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::invalid(
                "labels",
                format!("label {bad} >= number of classes {num_classes}"),
            ));
        }
        Ok(Dataset {
            dim,
            num_classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.len(), self.dim), &self.features).expect("checked in new")
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    /// Copy of the selected rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            dim: self.dim,
            num_classes: self.num_classes,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Copies the selected rows into `out` (resized to `indices.len()` rows)
    /// and returns their labels.
    pub fn gather(&self, indices: &[usize], out: &mut Array2<f32>, labels: &mut Vec<u32>) {
        if out.dim() != (indices.len(), self.dim) {
            *out = Array2::zeros((indices.len(), self.dim));
        }
        labels.clear();
        for (mut row, &i) in out.rows_mut().into_iter().zip(indices) {
            row.as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
    }
}
