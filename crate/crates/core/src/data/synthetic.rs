use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_stream, RngStream};
use crate::tags;

/// Isotropic Gaussian blobs, one per class, with means at distance
/// `separation` from the origin along random unit directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::invalid("synthetic", "counts must be positive"));
        }
        if self.separation.is_nan() || self.separation <= 0.0 || self.noise.is_nan() || self.noise < 0.0 {
            return Err(Error::invalid(
                "synthetic",
                "separation must be positive and noise non-negative",
            ));
        }
        Ok(())
    }

    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let mut stream = derive_stream(self.seed, &tags!["means"]);
        (0..self.num_classes)
            .map(|_| {
                let dir: Vec<f64> = (0..self.dim).map(|_| normal(&mut stream)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                dir.into_iter().map(|x| x * self.separation / norm).collect()
            })
            .collect()
    }
}

fn normal(stream: &mut RngStream) -> f64 {
    StandardNormal.sample(stream)
}

/// Samples one split. Splits share class means and differ only in noise.
pub fn gen_synthetic_split(spec: &SyntheticSpec, split: &str, samples_per_class: usize) -> Result<Dataset> {
    spec.validate()?;
    let means = spec.class_means();
    let mut stream = derive_stream(spec.seed, &tags!["samples", split]);
    let mut features = Vec::with_capacity(spec.num_classes * samples_per_class * spec.dim);
    let mut labels = Vec::with_capacity(spec.num_classes * samples_per_class);
    for _ in 0..samples_per_class {
        for (c, mean) in means.iter().enumerate() {
            features.extend(mean.iter().map(|&m| (m + spec.noise * normal(&mut stream)) as f32));
            labels.push(c as u32);
        }
    }
    Dataset::new(spec.dim, spec.num_classes, features, labels)
}

/// Training split with `samples_per_class` examples per class.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    gen_synthetic_split(spec, "train", spec.samples_per_class)
}
