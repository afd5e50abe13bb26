use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Values kept by [`subsample`], already rescaled by `1/s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Subsampled {
    pub values: Vec<f32>,
    pub kept: usize,
}

pub(crate) fn check_fraction(s: f32) -> Result<()> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::invalid("s", format!("keep fraction {s} not in (0, 1]")));
    }
    Ok(())
}

/// Number of coordinates kept out of `n`: `round(s * n)` rounding halves up,
/// at least one.
pub fn kept_count(n: usize, s: f32) -> usize {
    let k = (f64::from(s) * n as f64 + 0.5).floor() as usize;
    k.clamp(1, n.max(1))
}

/// Indices kept out of `n`. When every index is kept they come back in
/// natural order without consuming the stream; otherwise they are the first
/// `k` entries of a partial Fisher-Yates shuffle.
pub fn kept_indices(n: usize, k: usize, stream: &mut RngStream) -> Vec<usize> {
    if k >= n {
        (0..n).collect()
    } else {
        stream.sample_indices(n, k)
    }
}

/// Keeps a uniformly random `s` fraction of `v`, scaled by `1/s` so that
/// [`scatter`] yields an unbiased estimate of `v`.
pub fn subsample(v: &[f32], s: f32, stream: &mut RngStream) -> Result<Subsampled> {
    check_fraction(s)?;
    if v.is_empty() {
        return Err(Error::Empty);
    }
    let k = kept_count(v.len(), s);
    let scale = 1.0 / f64::from(s);
    let values = kept_indices(v.len(), k, stream)
        .into_iter()
        .map(|i| (f64::from(v[i]) * scale) as f32)
        .collect();
    Ok(Subsampled { values, kept: k })
}

/// Places kept values back at their seeded positions in a length-`n` zero
/// vector. `stream` must be in the same state it was for [`subsample`].
pub fn scatter(values: &[f32], n: usize, stream: &mut RngStream) -> Result<Vec<f32>> {
    if values.is_empty() || values.len() > n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: values.len(),
        });
    }
    let mut out = vec![0.0; n];
    for (i, &v) in kept_indices(n, values.len(), stream).into_iter().zip(values) {
        out[i] = v;
    }
    Ok(out)
}
