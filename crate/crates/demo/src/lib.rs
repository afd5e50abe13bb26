//! Browser bindings for three interactive views of the codec: transform
//! coefficients, reconstruction error against bit width, and Federated
//! Dropout savings. Each binding returns a JSON string.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use fedcomp::codec::{decode, encode, CodecSpec, QuantBits};
use fedcomp::feddrop::{savings_report, LayerShape};
use fedcomp::transforms::{self, dynamic_range, TransformKind, TransformSpec};
use fedcomp::{derive_stream, tags, Tensor};

const KINDS: [TransformKind; 3] = [TransformKind::Identity, TransformKind::Hadamard, TransformKind::Kashin];

fn gaussian(d: usize, seed: u64) -> Result<Tensor, String> {
    let mut stream = derive_stream(seed, &tags!["demo", "input"]);
    let data = (0..d)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut stream);
            x as f32
        })
        .collect();
    Tensor::vector(data).map_err(|e| e.to_string())
}

fn rel_error(a: &Tensor, b: &Tensor) -> f64 {
    let num: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    num.sqrt() / b.l2_norm().max(f64::MIN_POSITIVE)
}

#[derive(Serialize)]
struct Coefficients {
    transform: &'static str,
    values: Vec<f32>,
    dynamic_range: f64,
    reconstruction: Vec<f32>,
    rel_error: f64,
    bytes: usize,
}

/// Coefficients of a random Gaussian vector under each transform, and its
/// reconstruction after a `(s, q)` round trip.
pub fn transform_view(d: usize, s: f32, q: u8, seed: u64) -> Result<String, String> {
    if d == 0 || d > 4096 {
        return Err("dimension must be in 1..=4096".into());
    }
    let v = gaussian(d, seed)?;
    let mut out = vec![];
    for kind in KINDS {
        let coeffs = transforms::forward(&v, &TransformSpec::new(kind).with_seed(seed)).map_err(|e| e.to_string())?;
        let spec = CodecSpec::new(kind, s, QuantBits::Bits(q));
        let c = encode(&v, &spec, &mut derive_stream(seed, &tags!["demo", "codec"])).map_err(|e| e.to_string())?;
        let back = decode(&c).map_err(|e| e.to_string())?;
        out.push(Coefficients {
            transform: kind.name(),
            dynamic_range: dynamic_range(&coeffs),
            values: coeffs.into_data(),
            rel_error: rel_error(&back, &v),
            reconstruction: back.into_data(),
            bytes: c.encoded_len(),
        });
    }
    Ok(serde_json::json!({ "input": v.data(), "transforms": out }).to_string())
}

#[derive(Serialize)]
struct SweepRow {
    q: u8,
    errors: Vec<f64>,
}

/// Mean relative L2 error of `s = 1` round trips for q = 1..=8 bits, per
/// transform, over `trials` random vectors of length `d`.
pub fn error_sweep(d: usize, trials: usize, seed: u64) -> Result<String, String> {
    if d == 0 || d > 4096 || trials == 0 || trials > 500 {
        return Err("need 1 <= d <= 4096 and 1 <= trials <= 500".into());
    }
    let mut rows = vec![];
    for q in 1..=8u8 {
        let mut errors = vec![0.0; KINDS.len()];
        for t in 0..trials {
            let v = gaussian(d, seed.wrapping_add(t as u64))?;
            for (e, &kind) in errors.iter_mut().zip(&KINDS) {
                let spec = CodecSpec::new(kind, 1.0, QuantBits::Bits(q));
                let mut stream = derive_stream(seed, &tags!["demo", "sweep", t, u64::from(q)]);
                let c = encode(&v, &spec, &mut stream).map_err(|e| e.to_string())?;
                *e += rel_error(&decode(&c).map_err(|e| e.to_string())?, &v) / trials as f64;
            }
        }
        rows.push(SweepRow { q, errors });
    }
    let names: Vec<_> = KINDS.iter().map(|k| k.name()).collect();
    Ok(serde_json::json!({ "transforms": names, "rows": rows }).to_string())
}

/// Savings of a fully-connected network (`widths` like `784-512-10`) or
/// `mnist_cnn` under Federated Dropout and Kashin-based codecs.
pub fn savings_view(arch: &str, rate: f32, down_q: u8, down_s: f32, up_q: u8, up_s: f32) -> Result<String, String> {
    let layers = if arch.trim() == "mnist_cnn" {
        LayerShape::mnist_cnn()
    } else {
        let widths: Vec<usize> = arch
            .split('-')
            .map(|w| w.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("bad arch `{arch}`: {e}"))?;
        if widths.len() < 2 || widths.contains(&0) {
            return Err(format!("bad arch `{arch}`: need at least two positive widths"));
        }
        LayerShape::mlp(&widths)
    };
    let down = CodecSpec::new(TransformKind::Kashin, down_s, QuantBits::Bits(down_q));
    let up = CodecSpec::new(TransformKind::Kashin, up_s, QuantBits::Bits(up_q));
    let r = savings_report(&layers, rate, &down, &up).map_err(|e| e.to_string())?;
    serde_json::to_string(&r).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn transforms_json(d: usize, s: f32, q: u8, seed: u32) -> Result<String, JsError> {
    transform_view(d, s, q, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sweep_json(d: usize, trials: usize, seed: u32) -> Result<String, JsError> {
    error_sweep(d, trials, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn savings_json(arch: &str, rate: f32, down_q: u8, down_s: f32, up_q: u8, up_s: f32) -> Result<String, JsError> {
    savings_view(arch, rate, down_q, down_s, up_q, up_s).map_err(|e| JsError::new(&e))
}
