//! Uniform probabilistic quantization with `2^q` levels spanning
//! `[w_min, w_max]`.
//!
//! Each value is stochastically rounded to one of its two bracketing levels
//! so the dequantized value is unbiased. Level indices are packed
//! little-endian, least significant bit first, `q` bits per value.

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const MAX_BITS: u8 = 16;

/// Output of [`quantize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Quantized {
    pub codes: Vec<u8>,
    pub w_min: f32,
    pub w_max: f32,
}

fn check_bits(q: u8) -> Result<()> {
    if !(1..=MAX_BITS).contains(&q) {
        return Err(Error::invalid("q", format!("{q} bits not in 1..=16")));
    }
    Ok(())
}

fn top_level(q: u8) -> u32 {
    (1u32 << q) - 1
}

/// Value of level `i` for a `q`-bit grid on `[w_min, w_max]`.
pub fn level(i: u32, q: u8, w_min: f32, w_max: f32) -> f32 {
    let step = (f64::from(w_max) - f64::from(w_min)) / f64::from(top_level(q));
    (f64::from(w_min) + f64::from(i) * step) as f32
}

/// Level indices before packing. One uniform draw per element, in order.
pub fn quantize_levels(v: &[f32], q: u8, stream: &mut RngStream) -> Result<(Vec<u32>, f32, f32)> {
    check_bits(q)?;
    if v.is_empty() {
        return Err(Error::Empty);
    }
    let w_min = v.iter().copied().fold(f32::INFINITY, f32::min);
    let w_max = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if !(w_min.is_finite() && w_max.is_finite()) {
        return Err(Error::Numeric("non-finite value in quantizer input".into()));
    }
    if w_min == w_max {
        return Ok((vec![0; v.len()], w_min, w_max));
    }
    let top = top_level(q);
    let span = f64::from(w_max) - f64::from(w_min);
    let levels = v
        .iter()
        .map(|&w| {
            let u = (f64::from(w) - f64::from(w_min)) / span * f64::from(top);
            let lo = (u.floor() as u32).min(top - 1);
            let p_up = u - f64::from(lo);
            if stream.next_f64() < p_up {
                lo + 1
            } else {
                lo
            }
        })
        .collect();
    Ok((levels, w_min, w_max))
}

/// Stochastically quantizes `v` to `q` bits per value.
pub fn quantize(v: &[f32], q: u8, stream: &mut RngStream) -> Result<Quantized> {
    let (levels, w_min, w_max) = quantize_levels(v, q, stream)?;
    Ok(Quantized {
        codes: pack_codes(&levels, q),
        w_min,
        w_max,
    })
}

/// Bytes needed for `k` codes of `q` bits.
pub fn packed_len(k: usize, q: u8) -> usize {
    (k * usize::from(q)).div_ceil(8)
}

pub fn pack_codes(levels: &[u32], q: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(packed_len(levels.len(), q));
    let mut acc: u64 = 0;
    let mut bits = 0u32;
    for &l in levels {
        acc |= u64::from(l) << bits;
        bits += u32::from(q);
        while bits >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            bits -= 8;
        }
    }
    if bits > 0 {
        out.push(acc as u8);
    }
    out
}

pub fn unpack_codes(bytes: &[u8], q: u8, k: usize) -> Result<Vec<u32>> {
    check_bits(q)?;
    let expected = packed_len(k, q);
    if bytes.len() != expected {
        return Err(Error::Malformed(format!(
            "payload has {} bytes, expected {expected} for {k} codes of {q} bits",
            bytes.len()
        )));
    }
    let mask = (1u64 << q) - 1;
    let mut out = Vec::with_capacity(k);
    let mut acc: u64 = 0;
    let mut bits = 0u32;
    let mut iter = bytes.iter();
    for _ in 0..k {
        while bits < u32::from(q) {
            let b = *iter.next().expect("length checked above");
            acc |= u64::from(b) << bits;
            bits += 8;
        }
        out.push((acc & mask) as u32);
        acc >>= q;
        bits -= u32::from(q);
    }
    Ok(out)
}

/// Maps packed codes back to level values.
pub fn dequantize(codes: &[u8], q: u8, w_min: f32, w_max: f32, k: usize) -> Result<Vec<f32>> {
    if w_min > w_max || !w_min.is_finite() || !w_max.is_finite() {
        return Err(Error::Malformed(format!("bad range [{w_min}, {w_max}]")));
    }
    let levels = unpack_codes(codes, q, k)?;
    let top = top_level(q);
    levels
        .into_iter()
        .map(|l| {
            if l > top {
                Err(Error::Malformed(format!("code {l} exceeds {q}-bit range")))
            } else {
                Ok(level(l, q, w_min, w_max))
            }
        })
        .collect()
}
