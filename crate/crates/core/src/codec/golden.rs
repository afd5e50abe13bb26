//! Fixed `(tensor, spec, seed)` triples whose encodings are committed as
//! wire-format fixtures.

use super::{CodecSpec, QuantBits};
use crate::rng::{derive_stream, RngStream};
use crate::tags;
use crate::tensor::Tensor;
use crate::transforms::TransformKind;

pub struct GoldenCase {
    pub name: &'static str,
    pub tensor: Tensor,
    pub spec: CodecSpec,
    pub seed: u64,
}

impl GoldenCase {
    /// Stream handed to `encode` for this case.
    pub fn stream(&self) -> RngStream {
        derive_stream(self.seed, &tags!["golden"])
    }
}

/// Exactly representable values in `[-1.25, 1.25]`.
fn ramp(shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product::<usize>();
    let data = (0..n).map(|i| ((i * 7 % 11) as f32 - 5.0) / 4.0).collect();
    Tensor::new(shape, data).expect("positive shape")
}

pub fn golden_cases() -> Vec<GoldenCase> {
    vec![
        GoldenCase {
            name: "identity_raw",
            tensor: ramp(vec![2, 3]),
            spec: CodecSpec::identity(),
            seed: 1,
        },
        GoldenCase {
            name: "hadamard_s050_q4",
            tensor: ramp(vec![10]),
            spec: CodecSpec::new(TransformKind::Hadamard, 0.5, QuantBits::Bits(4)),
            seed: 2,
        },
        GoldenCase {
            name: "kashin_s100_q3",
            tensor: ramp(vec![4, 5]),
            spec: CodecSpec::new(TransformKind::Kashin, 1.0, QuantBits::Bits(3)),
            seed: 3,
        },
    ]
}
