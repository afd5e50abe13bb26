//! Binary layout of a [`CompressedTensor`], little-endian throughout:
//!
//! ```text
//! magic "FLC1" | version u8 | transform u8 | q u8 (255 = raw) | ndim u8
//! | dims u32 x ndim | padded_len u32 | k u32 | s f32 | seed u64
//! | w_min f32 | w_max f32 | payload
//! ```

use super::{kept_count, CompressedTensor, QuantBits};
use crate::error::{Error, Result};
use crate::transforms::TransformKind;

pub const MAGIC: [u8; 4] = *b"FLC1";
pub const VERSION: u8 = 1;

/// Header size for a tensor of rank `ndim`.
pub const fn header_len(ndim: usize) -> usize {
    4 + 1 + 1 + 1 + 1 + 4 * ndim + 4 + 4 + 4 + 8 + 4 + 4
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Malformed(format!(
                "truncated at offset {} reading {what}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Malformed(format!("{what} {v} exceeds u32")))
}

impl CompressedTensor {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let ndim = u8::try_from(self.shape.len()).map_err(|_| Error::Malformed("more than 255 dimensions".into()))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.transform.wire_id());
        out.push(self.q.wire_id());
        out.push(ndim);
        for &d in &self.shape {
            out.extend_from_slice(&to_u32(d, "dimension")?.to_le_bytes());
        }
        out.extend_from_slice(&to_u32(self.padded_len, "padded length")?.to_le_bytes());
        out.extend_from_slice(&to_u32(self.kept, "kept count")?.to_le_bytes());
        out.extend_from_slice(&self.s.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.w_min.to_le_bytes());
        out.extend_from_slice(&self.w_max.to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parses and validates a serialized tensor. Trailing bytes are an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Malformed("bad magic".into()));
        }
        let version = r.u8("version")?;
        if version != VERSION {
            return Err(Error::Malformed(format!("unsupported version {version}")));
        }
        let id = r.u8("transform")?;
        let transform =
            TransformKind::from_wire_id(id).ok_or_else(|| Error::Malformed(format!("unknown transform id {id}")))?;
        let id = r.u8("q")?;
        let q = QuantBits::from_wire_id(id).ok_or_else(|| Error::Malformed(format!("invalid bit width {id}")))?;
        let ndim = r.u8("ndim")?;
        if ndim == 0 {
            return Err(Error::Malformed("zero dimensions".into()));
        }
        let mut shape = Vec::with_capacity(usize::from(ndim));
        for _ in 0..ndim {
            let d = r.u32("dimension")? as usize;
            if d == 0 {
                return Err(Error::Malformed("zero-sized dimension".into()));
            }
            shape.push(d);
        }
        let padded_len = r.u32("padded length")? as usize;
        let kept = r.u32("kept count")? as usize;
        let s = r.f32("s")?;
        let seed = r.u64("seed")?;
        let w_min = r.f32("w_min")?;
        let w_max = r.f32("w_max")?;

        let d = shape
            .iter()
            .try_fold(1usize, |acc, &x| acc.checked_mul(x))
            .ok_or_else(|| Error::Malformed("shape overflows".into()))?;
        if padded_len != transform.coefficient_len(d) {
            return Err(Error::Malformed(format!(
                "padded length {padded_len} inconsistent with {d} values"
            )));
        }
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Malformed(format!("keep fraction {s} out of range")));
        }
        if kept != kept_count(padded_len, s) {
            return Err(Error::Malformed(format!("kept count {kept} inconsistent with s={s}")));
        }
        if q != QuantBits::Raw && !(w_min.is_finite() && w_max.is_finite() && w_min <= w_max) {
            return Err(Error::Malformed(format!("bad range [{w_min}, {w_max}]")));
        }
        let payload_len = q.payload_len(kept);
        let payload = r.take(payload_len, "payload")?.to_vec();
        if r.pos != bytes.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(CompressedTensor {
            transform,
            seed,
            shape,
            padded_len,
            kept,
            s,
            q,
            w_min,
            w_max,
            payload,
        })
    }
}
