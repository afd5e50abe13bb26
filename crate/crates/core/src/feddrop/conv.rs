//! Filter dropping for convolutional layers.
//!
//! Zeroing activations of a convolution saves nothing, so whole filters are
//! dropped instead: a sub-model keeps a subset of output channels per layer,
//! and the next layer keeps the matching input channels. Only the index
//! mapping lives here; the models trained in this crate are fully connected.
//!
//! Kernels are stored `[kh, kw, c_in, c_out]`, row-major.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn dims(kernel: &Tensor) -> Result<[usize; 4]> {
    match kernel.shape() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        other => Err(Error::invalid(
            "kernel",
            format!("expected [kh, kw, c_in, c_out], got {other:?}"),
        )),
    }
}

fn check(set: &[usize], bound: usize, what: &str) -> Result<()> {
    if set.is_empty() || set.windows(2).any(|p| p[0] >= p[1]) || set.iter().any(|&i| i >= bound) {
        return Err(Error::PlanMismatch(format!(
            "{what} channels must be non-empty, sorted, unique and below {bound}"
        )));
    }
    Ok(())
}

/// Flat index of `(y, x, ci, co)` in a `[kh, kw, c_in, c_out]` kernel.
fn flat(d: [usize; 4], y: usize, x: usize, ci: usize, co: usize) -> usize {
    ((y * d[1] + x) * d[2] + ci) * d[3] + co
}

/// Kernel restricted to kept input and output channels.
pub fn extract_filters(kernel: &Tensor, kept_in: &[usize], kept_out: &[usize]) -> Result<Tensor> {
    let d = dims(kernel)?;
    check(kept_in, d[2], "input")?;
    check(kept_out, d[3], "output")?;
    let w = kernel.data();
    let mut out = Vec::with_capacity(d[0] * d[1] * kept_in.len() * kept_out.len());
    for y in 0..d[0] {
        for x in 0..d[1] {
            for &ci in kept_in {
                out.extend(kept_out.iter().map(|&co| w[flat(d, y, x, ci, co)]));
            }
        }
    }
    Tensor::new(vec![d[0], d[1], kept_in.len(), kept_out.len()], out)
}

/// Global flat indices covered by a sub-kernel, in the sub-kernel's own
/// row-major order, so `indices[i]` is where sub-entry `i` lands.
pub fn filter_indices(global_shape: &[usize], kept_in: &[usize], kept_out: &[usize]) -> Result<Vec<usize>> {
    let d: [usize; 4] = global_shape
        .try_into()
        .map_err(|_| Error::invalid("kernel", format!("bad shape {global_shape:?}")))?;
    check(kept_in, d[2], "input")?;
    check(kept_out, d[3], "output")?;
    let mut out = Vec::with_capacity(d[0] * d[1] * kept_in.len() * kept_out.len());
    for y in 0..d[0] {
        for x in 0..d[1] {
            for &ci in kept_in {
                out.extend(kept_out.iter().map(|&co| flat(d, y, x, ci, co)));
            }
        }
    }
    Ok(out)
}

/// Writes a sub-kernel update back into a zero global kernel shape.
pub fn scatter_filters(
    global_shape: &[usize],
    kept_in: &[usize],
    kept_out: &[usize],
    delta: &Tensor,
) -> Result<Vec<(usize, f32)>> {
    let idx = filter_indices(global_shape, kept_in, kept_out)?;
    if idx.len() != delta.len() {
        return Err(Error::DimensionMismatch {
            expected: idx.len(),
            actual: delta.len(),
        });
    }
    Ok(idx.into_iter().zip(delta.data().iter().copied()).collect())
}

/// Feature indices of a channels-last flattened `[positions, channels]`
/// activation that survive when only `kept_channels` are kept.
pub fn flattened_features(kept_channels: &[usize], channels: usize, positions: usize) -> Vec<usize> {
    (0..positions)
        .flat_map(|p| kept_channels.iter().map(move |&c| p * channels + c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn kernel(d: [usize; 4]) -> Tensor {
        let n = d.iter().product();
        Tensor::new(d.to_vec(), (0..n).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn extract_matches_brute_force() {
        let k = kernel([3, 3, 4, 5]);
        let (ki, ko) = (vec![0, 2, 3], vec![1, 4]);
        let sub = extract_filters(&k, &ki, &ko).unwrap();
        assert_eq!(sub.shape(), &[3, 3, 3, 2]);
        let mut i = 0;
        for y in 0..3 {
            for x in 0..3 {
                for &ci in &ki {
                    for &co in &ko {
                        let expect = (((y * 3 + x) * 4 + ci) * 5 + co) as f32;
                        assert_eq!(sub.data()[i], expect);
                        i += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn scatter_is_injective_and_inverts_extract() {
        let k = kernel([2, 2, 3, 4]);
        let (ki, ko) = (vec![1, 2], vec![0, 3]);
        let sub = extract_filters(&k, &ki, &ko).unwrap();
        let pairs = scatter_filters(k.shape(), &ki, &ko, &sub).unwrap();
        let unique: HashSet<_> = pairs.iter().map(|p| p.0).collect();
        assert_eq!(unique.len(), pairs.len());
        for (i, v) in pairs {
            assert_eq!(k.data()[i], v);
        }
    }

    #[test]
    fn flattened_feature_selection() {
        assert_eq!(flattened_features(&[0, 2], 3, 2), vec![0, 2, 3, 5]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let k = kernel([1, 1, 2, 2]);
        assert!(extract_filters(&k, &[2], &[0]).is_err());
        assert!(extract_filters(&k, &[1, 0], &[0]).is_err());
        assert!(extract_filters(&Tensor::zeros(vec![2, 2]).unwrap(), &[0], &[0]).is_err());
        let sub = Tensor::zeros(vec![1, 1, 1, 2]).unwrap();
        assert!(scatter_filters(k.shape(), &[0], &[0], &sub).is_err());
    }
}
