use serde::Serialize;

use super::{decode, encode, CodecSpec};
use crate::error::Result;
use crate::model::{Dense, ModelParams};
use crate::rng::derive_stream;
use crate::tags;

/// Outcome of compressing and decompressing a whole model with one spec.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub transform: &'static str,
    pub s: f32,
    pub q: String,
    /// L2 distance between the original and reconstructed weights.
    pub l2_error: f64,
    /// Accuracy of the reconstructed model, when an evaluator is supplied.
    pub accuracy: Option<f64>,
    /// Serialized size: one compressed tensor per weight matrix plus raw biases.
    pub bytes: usize,
}

/// Scores a reconstructed model, e.g. by test accuracy.
pub type Evaluator<'a> = &'a mut dyn FnMut(&ModelParams) -> Result<f64>;

/// Round-trips every weight matrix of `model` through each spec in `grid`.
///
/// Biases pass through untouched. Matrix `l` uses the stream
/// `(seed, "compare", "layer", l)` for every spec, so rows are paired.
pub fn compare_representations(
    model: &ModelParams,
    grid: &[CodecSpec],
    seed: u64,
    mut eval: Option<Evaluator<'_>>,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::with_capacity(grid.len());
    for spec in grid {
        let mut sq_err = 0.0f64;
        let mut bytes = 0usize;
        let mut layers = Vec::with_capacity(model.layers.len());
        for (l, layer) in model.layers.iter().enumerate() {
            let mut stream = derive_stream(seed, &tags!["compare", "layer", l]);
            let c = encode(&layer.weights, spec, &mut stream)?;
            bytes += c.encoded_len() + 4 * layer.bias.len();
            let w = decode(&c)?;
            sq_err += w
                .data()
                .iter()
                .zip(layer.weights.data())
                .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
                .sum::<f64>();
            layers.push(Dense::new(w, layer.bias.clone())?);
        }
        let accuracy = match eval.as_mut() {
            Some(f) => Some(f(&ModelParams::new(layers)?)?),
            None => None,
        };
        rows.push(ComparisonRow {
            transform: spec.transform.kind.name(),
            s: spec.s,
            q: spec.q.to_string(),
            l2_error: sq_err.sqrt(),
            accuracy,
            bytes,
        });
    }
    Ok(rows)
}
