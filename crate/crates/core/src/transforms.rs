//! Basis transforms applied before lossy compression.
//!
//! The randomized Hadamard transform multiplies by a Rademacher diagonal and
//! applies the orthonormal Walsh-Hadamard transform. Kashin's representation
//! uses the first `d` columns of that `HD` matrix (after padding to `D > d`)
//! as a tight frame and iteratively clips the frame coefficients to an
//! `L∞` ball, spreading the vector's energy over all `D` coefficients. The
//! last iteration skips the clipping, so synthesis reproduces the input
//! exactly.
//!
//! All internal arithmetic is done in `f64`.

use crate::error::{Error, Result};
use crate::rng::{derive_stream, rademacher};
use crate::tags;
use crate::tensor::{padded_len, PadRule, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Identity,
    Hadamard,
    Kashin,
}

impl TransformKind {
    pub fn wire_id(self) -> u8 {
        match self {
            TransformKind::Identity => 0,
            TransformKind::Hadamard => 1,
            TransformKind::Kashin => 2,
        }
    }

    pub fn from_wire_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(TransformKind::Identity),
            1 => Some(TransformKind::Hadamard),
            2 => Some(TransformKind::Kashin),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Identity => "identity",
            TransformKind::Hadamard => "hadamard",
            TransformKind::Kashin => "kashin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "i" | "none" => Some(TransformKind::Identity),
            "hadamard" | "hd" => Some(TransformKind::Hadamard),
            "kashin" | "k" => Some(TransformKind::Kashin),
            _ => None,
        }
    }

    /// Length of the coefficient vector produced for an input of length `d`.
    pub fn coefficient_len(self, d: usize) -> usize {
        match self {
            TransformKind::Identity => d,
            TransformKind::Hadamard => padded_len(d, PadRule::NextPow2),
            TransformKind::Kashin => padded_len(d, PadRule::Kashin),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub seed: u64,
    pub kashin_iters: usize,
    pub kashin_eta: f64,
    pub kashin_delta: f64,
}

impl TransformSpec {
    pub fn new(kind: TransformKind) -> Self {
        TransformSpec {
            kind,
            seed: 0,
            kashin_iters: 2,
            kashin_eta: 1.0,
            kashin_delta: 1.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kashin_iters < 1 {
            return Err(Error::invalid("kashin_iters", "must be at least 1"));
        }
        if !(self.kashin_eta > 0.0 && self.kashin_eta.is_finite()) {
            return Err(Error::invalid("kashin_eta", "must be positive"));
        }
        if !(self.kashin_delta > 0.0 && self.kashin_delta.is_finite()) {
            return Err(Error::invalid("kashin_delta", "must be positive"));
        }
        Ok(())
    }
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec::new(TransformKind::Identity)
    }
}

#[cfg(test)]
thread_local! {
    static FWHT_CALLS: std::cell::Cell<usize> = const { std::cell::Cell::new(0) };
}

#[cfg(test)]
pub(crate) fn fwht_calls() -> usize {
    FWHT_CALLS.with(|c| c.get())
}

/// Orthonormal in-place Walsh-Hadamard butterfly.
fn fwht_in_place(buf: &mut [f64]) {
    #[cfg(test)]
    FWHT_CALLS.with(|c| c.set(c.get() + 1));

    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in buf.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    for x in buf.iter_mut() {
        *x *= scale;
    }
}

/// Orthonormal Walsh-Hadamard transform. The transform is its own inverse.
pub fn fwht(v: &Tensor) -> Result<Tensor> {
    let n = v.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut buf: Vec<f64> = v.data().iter().map(|&x| f64::from(x)).collect();
    fwht_in_place(&mut buf);
    to_tensor(&buf)
}

fn to_tensor(buf: &[f64]) -> Result<Tensor> {
    Tensor::vector(buf.iter().map(|&x| x as f32).collect())
}

fn to_f64(data: &[f32]) -> Vec<f64> {
    data.iter().map(|&x| f64::from(x)).collect()
}

/// The `HD` operator for one seed and padded dimension, restricted to the
/// first `d` input coordinates.
struct HadamardFrame {
    signs: Vec<f64>,
    d: usize,
}

impl HadamardFrame {
    fn new(seed: u64, d: usize, padded: usize) -> Self {
        let mut stream = derive_stream(seed, &tags!["rademacher"]);
        let signs = rademacher(&mut stream, padded)
            .data()
            .iter()
            .map(|&s| f64::from(s))
            .collect();
        HadamardFrame { signs, d }
    }

    fn padded(&self) -> usize {
        self.signs.len()
    }

    /// `HD · embed(x)` for `x` of length `d`.
    fn analysis(&self, x: &[f64]) -> Vec<f64> {
        let mut buf = vec![0.0; self.padded()];
        for ((b, &xi), &s) in buf.iter_mut().zip(x).zip(&self.signs) {
            *b = xi * s;
        }
        fwht_in_place(&mut buf);
        buf
    }

    /// `truncate_d(D · H · a)`, the adjoint of `analysis`.
    fn synthesis(&self, a: &[f64]) -> Vec<f64> {
        let mut buf = a.to_vec();
        fwht_in_place(&mut buf);
        buf.truncate(self.d);
        for (b, &s) in buf.iter_mut().zip(&self.signs) {
            *b *= s;
        }
        buf
    }
}

/// Randomized Hadamard transform of `v`, zero padded to the next power of two.
pub fn hadamard_forward(v: &Tensor, seed: u64) -> Result<Tensor> {
    if v.is_empty() {
        return Err(Error::Empty);
    }
    let d = v.len();
    let frame = HadamardFrame::new(seed, d, padded_len(d, PadRule::NextPow2));
    to_tensor(&frame.analysis(&to_f64(v.data())))
}

/// Inverse of [`hadamard_forward`]; truncates back to `original_len`.
pub fn hadamard_inverse(y: &Tensor, seed: u64, original_len: usize) -> Result<Tensor> {
    if original_len == 0 {
        return Err(Error::Empty);
    }
    let expected = padded_len(original_len, PadRule::NextPow2);
    if y.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: y.len(),
        });
    }
    let frame = HadamardFrame::new(seed, original_len, expected);
    to_tensor(&frame.synthesis(&to_f64(y.data())))
}

/// Kashin's representation of `v` over the `HD` tight frame.
///
/// Runs `kashin_iters - 1` clipped iterations with level starting at
/// `eta * ‖v‖₂ / √D` and shrinking by `delta`, then one unclipped
/// iteration that absorbs the remaining residual.
pub fn kashin_encode(v: &Tensor, spec: &TransformSpec) -> Result<Tensor> {
    spec.validate()?;
    if v.is_empty() {
        return Err(Error::Empty);
    }
    let d = v.len();
    let padded = padded_len(d, PadRule::Kashin);
    let frame = HadamardFrame::new(spec.seed, d, padded);

    let mut residual = to_f64(v.data());
    let norm = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut level = spec.kashin_eta * norm / (padded as f64).sqrt();
    let mut coeffs = vec![0.0; padded];

    for _ in 1..spec.kashin_iters {
        let mut a = frame.analysis(&residual);
        for x in a.iter_mut() {
            *x = x.clamp(-level, level);
        }
        for (y, t) in coeffs.iter_mut().zip(&a) {
            *y += t;
        }
        for (r, s) in residual.iter_mut().zip(frame.synthesis(&a)) {
            *r -= s;
        }
        level *= spec.kashin_delta;
    }
    for (y, a) in coeffs.iter_mut().zip(frame.analysis(&residual)) {
        *y += a;
    }
    to_tensor(&coeffs)
}

/// Frame synthesis: maps Kashin coefficients back to a length-`d` vector.
pub fn kashin_decode(y: &Tensor, seed: u64, original_len: usize) -> Result<Tensor> {
    if original_len == 0 {
        return Err(Error::Empty);
    }
    let expected = padded_len(original_len, PadRule::Kashin);
    if y.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: y.len(),
        });
    }
    let frame = HadamardFrame::new(seed, original_len, expected);
    to_tensor(&frame.synthesis(&to_f64(y.data())))
}

/// Applies the transform described by `spec` to `v`.
pub fn forward(v: &Tensor, spec: &TransformSpec) -> Result<Tensor> {
    match spec.kind {
        TransformKind::Identity => {
            if v.is_empty() {
                return Err(Error::Empty);
            }
            Ok(v.flatten())
        }
        TransformKind::Hadamard => hadamard_forward(v, spec.seed),
        TransformKind::Kashin => kashin_encode(v, spec),
    }
}

/// Inverse of [`forward`] for a given kind, seed and original length.
pub fn inverse(y: &Tensor, kind: TransformKind, seed: u64, original_len: usize) -> Result<Tensor> {
    match kind {
        TransformKind::Identity => {
            if y.len() != original_len {
                return Err(Error::DimensionMismatch {
                    expected: original_len,
                    actual: y.len(),
                });
            }
            Ok(y.flatten())
        }
        TransformKind::Hadamard => hadamard_inverse(y, seed, original_len),
        TransformKind::Kashin => kashin_decode(y, seed, original_len),
    }
}

/// Largest absolute coefficient.
pub fn dynamic_range(coeffs: &Tensor) -> f64 {
    coeffs.data().iter().map(|&x| f64::from(x.abs())).fold(0.0, f64::max)
}
