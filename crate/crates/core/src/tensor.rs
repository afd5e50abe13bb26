//! Dense row-major `f32` tensors and zero padding.

use crate::error::{Error, Result};

/// Dense rank-1 or rank-2 (or higher) array of `f32` values stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, rejecting zero-sized dimensions, length mismatches
    /// and non-finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch { shape, len: data.len() });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(data: Vec<f32>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the values. Callers are responsible for keeping
    /// them finite.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row-major flattening into a rank-1 tensor.
    pub fn flatten(&self) -> Tensor {
        Tensor {
            shape: vec![self.data.len()],
            data: self.data.clone(),
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape(shape));
        }
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::ShapeMismatch {
                shape,
                len: self.data.len(),
            });
        }
        Ok(Tensor { shape, data: self.data })
    }

    /// Euclidean norm accumulated in `f64`.
    pub fn l2_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Which zero-padding rule to apply before a Walsh-Hadamard based transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadRule {
    /// Smallest power of two `>= d`.
    NextPow2,
    /// Smallest power of two `>= d`, doubled when `d` is already a power of
    /// two so the frame is strictly redundant.
    Kashin,
}

/// Padded dimension for a vector of length `d` under `rule`.
pub fn padded_len(d: usize, rule: PadRule) -> usize {
    let p = d.next_power_of_two();
    match rule {
        PadRule::NextPow2 => p,
        PadRule::Kashin if p == d => 2 * d,
        PadRule::Kashin => p,
    }
}

/// Appends exact zeros so the length follows `rule`. Returns the padded
/// vector and the original length.
pub fn pad_pow2(v: &Tensor, rule: PadRule) -> Result<(Tensor, usize)> {
    let d = v.len();
    if d == 0 {
        return Err(Error::Empty);
    }
    let mut data = Vec::with_capacity(padded_len(d, rule));
    data.extend_from_slice(v.data());
    data.resize(padded_len(d, rule), 0.0);
    Ok((Tensor::vector(data)?, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn construction_checks_shape_and_finiteness() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(Tensor::new(vec![0], vec![]), Err(Error::InvalidShape(_))));
        assert!(matches!(
            Tensor::vector(vec![1.0, f32::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(Tensor::vector(vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn padding_rules() {
        let v = Tensor::vector(vec![1.0; 80]).unwrap();
        assert_eq!(pad_pow2(&v, PadRule::Kashin).unwrap().0.len(), 128);
        assert_eq!(pad_pow2(&v, PadRule::NextPow2).unwrap().0.len(), 128);

        let v = Tensor::vector(vec![1.0; 64]).unwrap();
        assert_eq!(pad_pow2(&v, PadRule::NextPow2).unwrap().0.len(), 64);
        assert_eq!(pad_pow2(&v, PadRule::Kashin).unwrap().0.len(), 128);

        assert_eq!(padded_len(1, PadRule::NextPow2), 1);
        assert_eq!(padded_len(1, PadRule::Kashin), 2);
    }

    proptest! {
        #[test]
        fn pad_then_truncate_recovers_input(
            data in prop::collection::vec(-1e3f32..1e3, 1..300),
            kashin in any::<bool>(),
        ) {
            let rule = if kashin { PadRule::Kashin } else { PadRule::NextPow2 };
            let v = Tensor::vector(data.clone()).unwrap();
            let (padded, d) = pad_pow2(&v, rule).unwrap();
            prop_assert!(padded.len().is_power_of_two());
            prop_assert_eq!(d, data.len());
            prop_assert_eq!(&padded.data()[..d], &data[..]);
            prop_assert!(padded.data()[d..].iter().all(|&x| x == 0.0));
        }
    }
}
