//! Size and compute accounting for Federated Dropout combined with the codec.
//!
//! Baseline is the full model at 32 bits per parameter. Compressed weights
//! cost `q · s` bits each; biases are always sent as raw 32-bit floats.
//! Training cost per sample is `6 · fan_in · fan_out` (two for the forward
//! pass, four for the backward pass), times the output positions for
//! convolutions. Ratios are `full / reduced`, so larger means more savings.

use serde::Serialize;

use crate::codec::{header_len, kept_count, CodecSpec};
use crate::error::{Error, Result};

/// Shape of one trainable layer for accounting purposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerShape {
    /// Fully-connected layer. `input_group` input features belong to each
    /// upstream unit (1 for a plain MLP, the spatial size when the input is
    /// a flattened convolution output).
    Dense {
        inputs: usize,
        outputs: usize,
        input_group: usize,
    },
    /// Convolution with `kernel` taps (`kh · kw`) evaluated at `positions`
    /// output locations.
    Conv {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        positions: usize,
    },
}

impl LayerShape {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerShape::Dense {
            inputs,
            outputs,
            input_group: 1,
        }
    }

    /// Layers of a fully-connected network with the given unit widths.
    pub fn mlp(widths: &[usize]) -> Vec<LayerShape> {
        widths.windows(2).map(|w| LayerShape::dense(w[0], w[1])).collect()
    }

    /// Two 5x5 convolutions (32 and 64 channels, each followed by 2x2
    /// pooling) on 28x28 inputs, a 512-unit dense layer and 10 logits.
    pub fn mnist_cnn() -> Vec<LayerShape> {
        vec![
            LayerShape::Conv {
                kernel: 25,
                in_channels: 1,
                out_channels: 32,
                positions: 28 * 28,
            },
            LayerShape::Conv {
                kernel: 25,
                in_channels: 32,
                out_channels: 64,
                positions: 14 * 14,
            },
            LayerShape::Dense {
                inputs: 7 * 7 * 64,
                outputs: 512,
                input_group: 7 * 7,
            },
            LayerShape::dense(512, 10),
        ]
    }

    fn in_units(&self) -> usize {
        match *self {
            LayerShape::Dense {
                inputs, input_group, ..
            } => inputs / input_group,
            LayerShape::Conv { in_channels, .. } => in_channels,
        }
    }

    fn out_units(&self) -> usize {
        match *self {
            LayerShape::Dense { outputs, .. } => outputs,
            LayerShape::Conv { out_channels, .. } => out_channels,
        }
    }

    /// `(weights, biases, flops per sample, weight tensor rank)` with the
    /// given numbers of kept input and output units.
    fn cost(&self, in_units: usize, out_units: usize) -> (u64, u64, u64, usize) {
        let (i, o) = (in_units as u64, out_units as u64);
        match *self {
            LayerShape::Dense { input_group, .. } => {
                let w = i * input_group as u64 * o;
                (w, o, 6 * w, 2)
            }
            LayerShape::Conv { kernel, positions, .. } => {
                let w = kernel as u64 * i * o;
                (w, o, 6 * w * positions as u64, 4)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerSavings {
    pub weights_full: u64,
    pub weights_sub: u64,
    pub biases_full: u64,
    pub biases_sub: u64,
    /// `weights_sub / weights_full`.
    pub param_ratio: f64,
    /// Weight-only byte ratios, ignoring biases.
    pub downlink_ratio: f64,
    pub uplink_ratio: f64,
    pub flop_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SavingsReport {
    pub params_full: u64,
    pub params_sub: u64,
    /// `params_sub / params_full`, biases included.
    pub param_ratio: f64,
    /// Nominal ratios using `q · s` bits per weight.
    pub downlink_ratio: f64,
    pub uplink_ratio: f64,
    pub flop_ratio: f64,
    /// Ratios against the exact serialized sizes, including headers and the
    /// zero padding the Hadamard-based transforms add.
    pub downlink_wire_ratio: f64,
    pub uplink_wire_ratio: f64,
    pub layers: Vec<LayerSavings>,
}

/// Exact serialized size of one tensor of `numel` values and rank `ndim`.
pub fn wire_bytes(numel: usize, ndim: usize, spec: &CodecSpec) -> u64 {
    let padded = spec.transform.kind.coefficient_len(numel);
    (header_len(ndim) + spec.q.payload_len(kept_count(padded, spec.s))) as u64
}

pub fn savings_report(
    layers: &[LayerShape],
    rate: f32,
    downlink: &CodecSpec,
    uplink: &CodecSpec,
) -> Result<SavingsReport> {
    if layers.is_empty() {
        return Err(Error::Empty);
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::invalid("dropout rate", format!("{rate} not in (0, 1]")));
    }
    downlink.validate()?;
    uplink.validate()?;
    for pair in layers.windows(2) {
        if pair[0].out_units() != pair[1].in_units() {
            return Err(Error::DimensionMismatch {
                expected: pair[0].out_units(),
                actual: pair[1].in_units(),
            });
        }
    }

    let last = layers.len() - 1;
    let down_bits = downlink.nominal_bits_per_value();
    let up_bits = uplink.nominal_bits_per_value();
    let mut out = SavingsReport {
        params_full: 0,
        params_sub: 0,
        param_ratio: 0.0,
        downlink_ratio: 0.0,
        uplink_ratio: 0.0,
        flop_ratio: 0.0,
        downlink_wire_ratio: 0.0,
        uplink_wire_ratio: 0.0,
        layers: Vec::with_capacity(layers.len()),
    };
    let (mut flops_full, mut flops_sub) = (0u64, 0u64);
    let (mut w_full, mut w_sub, mut b_sub) = (0u64, 0u64, 0u64);
    let (mut down_wire, mut up_wire) = (0u64, 0u64);

    for (l, layer) in layers.iter().enumerate() {
        let (in_u, out_u) = (layer.in_units(), layer.out_units());
        let kin = if l == 0 { in_u } else { kept_count(in_u, rate) };
        let kout = if l == last { out_u } else { kept_count(out_u, rate) };
        let (wf, bf, ff, ndim) = layer.cost(in_u, out_u);
        let (ws, bs, fs, _) = layer.cost(kin, kout);

        out.layers.push(LayerSavings {
            weights_full: wf,
            weights_sub: ws,
            biases_full: bf,
            biases_sub: bs,
            param_ratio: ws as f64 / wf as f64,
            downlink_ratio: (32 * wf) as f64 / (down_bits * ws as f64),
            uplink_ratio: (32 * wf) as f64 / (up_bits * ws as f64),
            flop_ratio: ff as f64 / fs as f64,
        });

        out.params_full += wf + bf;
        out.params_sub += ws + bs;
        w_full += wf;
        w_sub += ws;
        b_sub += bs;
        flops_full += ff;
        flops_sub += fs;
        down_wire += wire_bytes(ws as usize, ndim, downlink) + 4 * bs;
        up_wire += wire_bytes(ws as usize, ndim, uplink) + 4 * bs;
    }

    let full_bits = 32.0 * out.params_full as f64;
    out.param_ratio = out.params_sub as f64 / out.params_full as f64;
    out.downlink_ratio = full_bits / (down_bits * w_sub as f64 + 32.0 * b_sub as f64);
    out.uplink_ratio = full_bits / (up_bits * w_sub as f64 + 32.0 * b_sub as f64);
    out.flop_ratio = flops_full as f64 / flops_sub as f64;
    out.downlink_wire_ratio = (4 * out.params_full) as f64 / down_wire as f64;
    out.uplink_wire_ratio = (4 * out.params_full) as f64 / up_wire as f64;
    debug_assert!(w_full > 0);
    Ok(out)
}
