//! Lossy tensor codec: basis transform, then random subsampling, then
//! probabilistic quantization. Decoding runs the inverse steps in reverse.
//!
//! A single per-tensor seed (drawn from the caller's stream and stored in the
//! header) determines both the Rademacher diagonal of the transform and the
//! subsampled positions, so only the kept values travel on the wire. The
//! remaining caller stream drives the stochastic rounding.

mod compare;
mod golden;
pub mod quantize;
pub mod subsample;
mod wire;

pub use compare::{compare_representations, ComparisonRow};
pub use golden::{golden_cases, GoldenCase};
pub use quantize::{dequantize, quantize, Quantized};
pub use subsample::{kept_count, subsample, Subsampled};
pub use wire::{header_len, MAGIC, VERSION};

use crate::error::{Error, Result};
use crate::rng::{derive_stream, RngStream};
use crate::tags;
use crate::tensor::Tensor;
use crate::transforms::{self, TransformKind, TransformSpec};

/// Bits per transmitted value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuantBits {
    /// Uncompressed 32-bit floats.
    Raw,
    /// Uniform probabilistic quantization with this many bits, `1..=16`.
    Bits(u8),
}

impl QuantBits {
    pub const RAW_WIRE_ID: u8 = 255;

    pub fn bits_per_value(self) -> u32 {
        match self {
            QuantBits::Raw => 32,
            QuantBits::Bits(q) => u32::from(q),
        }
    }

    pub fn wire_id(self) -> u8 {
        match self {
            QuantBits::Raw => Self::RAW_WIRE_ID,
            QuantBits::Bits(q) => q,
        }
    }

    pub fn from_wire_id(id: u8) -> Option<Self> {
        match id {
            Self::RAW_WIRE_ID => Some(QuantBits::Raw),
            1..=quantize::MAX_BITS => Some(QuantBits::Bits(id)),
            _ => None,
        }
    }

    pub fn payload_len(self, k: usize) -> usize {
        match self {
            QuantBits::Raw => 4 * k,
            QuantBits::Bits(q) => quantize::packed_len(k, q),
        }
    }
}

impl std::fmt::Display for QuantBits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuantBits::Raw => f.write_str("raw"),
            QuantBits::Bits(q) => write!(f, "{q}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodecSpec {
    pub transform: TransformSpec,
    /// Fraction of coefficients kept, in `(0, 1]`.
    pub s: f32,
    pub q: QuantBits,
}

impl CodecSpec {
    pub fn new(kind: TransformKind, s: f32, q: QuantBits) -> Self {
        CodecSpec {
            transform: TransformSpec::new(kind),
            s,
            q,
        }
    }

    /// Lossless pass-through.
    pub fn identity() -> Self {
        CodecSpec::new(TransformKind::Identity, 1.0, QuantBits::Raw)
    }

    pub fn is_identity(&self) -> bool {
        self.transform.kind == TransformKind::Identity && self.s == 1.0 && self.q == QuantBits::Raw
    }

    pub fn validate(&self) -> Result<()> {
        self.transform.validate()?;
        subsample::check_fraction(self.s)?;
        if let QuantBits::Bits(q) = self.q {
            if !(1..=quantize::MAX_BITS).contains(&q) {
                return Err(Error::invalid("q", format!("{q} bits not in 1..=16")));
            }
        }
        Ok(())
    }

    /// Nominal transmitted bits per original parameter, `q * s`, ignoring
    /// transform padding and headers.
    pub fn nominal_bits_per_value(&self) -> f64 {
        f64::from(self.q.bits_per_value()) * f64::from(self.s)
    }
}

impl Default for CodecSpec {
    fn default() -> Self {
        CodecSpec::identity()
    }
}

/// One encoded tensor. See [`CompressedTensor::to_bytes`] for the layout.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedTensor {
    pub transform: TransformKind,
    pub seed: u64,
    pub shape: Vec<usize>,
    pub padded_len: usize,
    pub kept: usize,
    pub s: f32,
    pub q: QuantBits,
    pub w_min: f32,
    pub w_max: f32,
    pub payload: Vec<u8>,
}

impl CompressedTensor {
    pub fn original_len(&self) -> usize {
        self.shape.iter().product()
    }

    /// Exact serialized size in bytes.
    pub fn encoded_len(&self) -> usize {
        header_len(self.shape.len()) + self.payload.len()
    }
}

fn subsample_stream(seed: u64) -> RngStream {
    derive_stream(seed, &tags!["subsample"])
}

/// Compresses `t` according to `spec`.
pub fn encode(t: &Tensor, spec: &CodecSpec, stream: &mut RngStream) -> Result<CompressedTensor> {
    spec.validate()?;
    if t.is_empty() {
        return Err(Error::Empty);
    }
    let seed = stream.next_u64();
    let transform = TransformSpec { seed, ..spec.transform };
    let coeffs = transforms::forward(&t.flatten(), &transform)?;
    let padded_len = coeffs.len();

    let kept = subsample(coeffs.data(), spec.s, &mut subsample_stream(seed))?;

    let (payload, w_min, w_max) = match spec.q {
        QuantBits::Raw => {
            let lo = kept.values.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = kept.values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let bytes = kept.values.iter().flat_map(|v| v.to_le_bytes()).collect();
            (bytes, lo, hi)
        }
        QuantBits::Bits(q) => {
            let out = quantize(&kept.values, q, stream)?;
            (out.codes, out.w_min, out.w_max)
        }
    };

    Ok(CompressedTensor {
        transform: spec.transform.kind,
        seed,
        shape: t.shape().to_vec(),
        padded_len,
        kept: kept.kept,
        s: spec.s,
        q: spec.q,
        w_min,
        w_max,
        payload,
    })
}

/// Reconstructs a (noisy) tensor of the original shape.
pub fn decode(c: &CompressedTensor) -> Result<Tensor> {
    let d = c.original_len();
    if d == 0 {
        return Err(Error::Malformed("empty shape".into()));
    }
    let expected_padded = c.transform.coefficient_len(d);
    if c.padded_len != expected_padded {
        return Err(Error::Malformed(format!(
            "padded length {} does not match {} for {d} values",
            c.padded_len, expected_padded
        )));
    }
    if c.kept == 0 || c.kept > c.padded_len {
        return Err(Error::Malformed(format!("kept count {} out of range", c.kept)));
    }

    let values = match c.q {
        QuantBits::Raw => {
            if c.payload.len() != 4 * c.kept {
                return Err(Error::Malformed(format!(
                    "raw payload has {} bytes, expected {}",
                    c.payload.len(),
                    4 * c.kept
                )));
            }
            c.payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect()
        }
        QuantBits::Bits(q) => dequantize(&c.payload, q, c.w_min, c.w_max, c.kept)?,
    };
    let coeffs = subsample::scatter(&values, c.padded_len, &mut subsample_stream(c.seed))?;
    let coeffs = Tensor::vector(coeffs).map_err(|e| Error::Malformed(format!("decoded coefficients: {e}")))?;
    transforms::inverse(&coeffs, c.transform, c.seed, d)?.reshape(c.shape.clone())
}
