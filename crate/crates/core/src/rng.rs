//! Deterministic random streams.
//!
//! Every random decision in the crate (Rademacher diagonals, subsampling
//! indices, stochastic rounding, dropout plans, client sampling, shuffles)
//! comes from an [`RngStream`] derived from a master seed and a list of tags.
//! Tags are folded with FNV-1a 64 and the result is finalized with the
//! SplitMix64 mixer; outputs are plain SplitMix64 steps. The byte encoding is
//! fixed so streams are reproducible from the seeds carried on the wire.

use crate::tensor::Tensor;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

const TAG_STR: u8 = 0x01;
const TAG_INT: u8 = 0x02;

/// One component of a stream-derivation path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tag {
    Str(String),
    Int(u64),
}

impl From<&str> for Tag {
    fn from(s: &str) -> Self {
        Tag::Str(s.to_owned())
    }
}

impl From<u64> for Tag {
    fn from(v: u64) -> Self {
        Tag::Int(v)
    }
}

impl From<usize> for Tag {
    fn from(v: usize) -> Self {
        Tag::Int(v as u64)
    }
}

impl From<u32> for Tag {
    fn from(v: u32) -> Self {
        Tag::Int(u64::from(v))
    }
}

impl From<i64> for Tag {
    fn from(v: i64) -> Self {
        Tag::Int(v as u64)
    }
}

impl From<i32> for Tag {
    fn from(v: i32) -> Self {
        Tag::Int(i64::from(v) as u64)
    }
}

/// Builds a `[Tag; N]` from heterogeneous literals: `tags!["round", 3]`.
#[macro_export]
macro_rules! tags {
    ($($t:expr),* $(,)?) => {
        [$($crate::rng::Tag::from($t)),*]
    };
}

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 generator. Single owner; derive new streams instead of sharing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
}

/// Derives a stream from `master_seed` and `tags`.
///
/// Byte encoding fed to FNV-1a: the seed as 8 little-endian bytes, then per
/// tag either `0x01 | len as u64 LE | utf8 bytes` or `0x02 | value as u64 LE`.
pub fn derive_stream(master_seed: u64, tags: &[Tag]) -> RngStream {
    let mut h = fnv1a(FNV_OFFSET, &master_seed.to_le_bytes());
    for tag in tags {
        match tag {
            Tag::Str(s) => {
                h = fnv1a(h, &[TAG_STR]);
                h = fnv1a(h, &(s.len() as u64).to_le_bytes());
                h = fnv1a(h, s.as_bytes());
            }
            Tag::Int(v) => {
                h = fnv1a(h, &[TAG_INT]);
                h = fnv1a(h, &v.to_le_bytes());
            }
        }
    }
    RngStream { state: mix64(h) }
}

impl RngStream {
    pub fn from_state(state: u64) -> Self {
        RngStream { state }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by multiply-shift. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// `+1.0` or `-1.0`, from the top bit of one draw (set means negative).
    pub fn sign(&mut self) -> f32 {
        if self.next_u64() >> 63 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    /// First `k` entries of a seeded partial Fisher-Yates shuffle of `0..n`.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n}");
        let mut perm: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            perm.swap(i, j);
        }
        perm.truncate(k);
        perm
    }

    /// Full in-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        for i in 0..n.saturating_sub(1) {
            let j = i + self.below(n - i);
            items.swap(i, j);
        }
    }
}

impl rand_core::RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (RngStream::next_u64(self) >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        RngStream::next_u64(self)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = RngStream::next_u64(self).to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Length-`n` vector of independent ±1 entries, one draw per entry.
pub fn rademacher(stream: &mut RngStream, n: usize) -> Tensor {
    assert!(n >= 1, "rademacher vector needs n >= 1");
    let signs = (0..n).map(|_| stream.sign()).collect();
    Tensor::vector(signs).expect("signs are finite")
}
