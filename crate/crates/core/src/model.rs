//! Fully-connected classifier: affine layers with ReLU between them and a
//! softmax cross-entropy head, trained with plain minibatch SGD.
//!
//! Weight matrices are stored `[d_in, d_out]` so a batch `X` of shape
//! `[batch, d_in]` maps to `X·W + b`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.rank() != 2 || bias.rank() != 1 || weights.shape()[1] != bias.len() {
            return Err(Error::invalid(
                "layer",
                format!(
                    "weights {:?} incompatible with bias {:?}",
                    weights.shape(),
                    bias.shape()
                ),
            ));
        }
        Ok(Dense { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    fn weights_view(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.inputs(), self.outputs()), self.weights.data()).expect("shape checked in new")
    }

    fn weights_view_mut(&mut self) -> ArrayViewMut2<'_, f32> {
        let dims = (self.inputs(), self.outputs());
        ArrayViewMut2::from_shape(dims, self.weights.data_mut()).expect("shape checked in new")
    }
}

/// Ordered layers of a fully-connected network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Dense>,
}

impl ModelParams {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty);
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs(),
                    actual: pair[1].inputs(),
                });
            }
        }
        Ok(ModelParams { layers })
    }

    /// Unit counts from input to output, e.g. `[784, 512, 10]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(Dense::outputs));
        w
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.all_finite() && l.bias.all_finite())
    }

    /// `self - other`, elementwise.
    pub fn delta_from(&self, other: &ModelParams) -> Result<ModelParams> {
        if self.widths() != other.widths() {
            return Err(Error::invalid("delta", "architectures differ"));
        }
        let sub = |a: &Tensor, b: &Tensor| {
            let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
            Tensor::new(a.shape().to_vec(), data)
        };
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| Dense::new(sub(&a.weights, &b.weights)?, sub(&a.bias, &b.bias)?))
            .collect::<Result<_>>()?;
        ModelParams::new(layers)
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::invalid(
            "arch",
            format!("{widths:?}: need at least two positive widths"),
        ));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(widths: &[usize], stream: &mut RngStream) -> Result<ModelParams> {
    check_widths(widths)?;
    let layers = widths
        .windows(2)
        .map(|w| {
            let (d_in, d_out) = (w[0], w[1]);
            let bound = (6.0 / (d_in + d_out) as f64).sqrt();
            let data = (0..d_in * d_out)
                .map(|_| ((2.0 * stream.next_f64() - 1.0) * bound) as f32)
                .collect();
            Dense::new(Tensor::matrix(d_in, d_out, data)?, Tensor::zeros(vec![d_out])?)
        })
        .collect::<Result<_>>()?;
    ModelParams::new(layers)
}

/// Inputs to each layer (post-ReLU for hidden layers) plus the logits.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub activations: Vec<Array2<f32>>,
    pub logits: Array2<f32>,
}

pub fn forward(params: &ModelParams, x: ArrayView2<'_, f32>) -> Result<ForwardCache> {
    if x.ncols() != params.layers[0].inputs() {
        return Err(Error::DimensionMismatch {
            expected: params.layers[0].inputs(),
            actual: x.ncols(),
        });
    }
    let last = params.layers.len() - 1;
    let mut activations = Vec::with_capacity(params.layers.len());
    let mut current = x.to_owned();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = Array2::zeros((current.nrows(), layer.outputs()));
        general_mat_mul(1.0, &current, &layer.weights_view(), 0.0, &mut z);
        let bias = ArrayView2::from_shape((1, layer.outputs()), layer.bias.data()).unwrap();
        z += &bias;
        if l < last {
            z.mapv_inplace(|v| v.max(0.0));
        }
        activations.push(std::mem::replace(&mut current, z));
    }
    Ok(ForwardCache {
        activations,
        logits: current,
    })
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: ArrayView2<'_, f32>) -> Array2<f64> {
    let mut out = Array2::zeros(logits.raw_dim());
    for (row, mut dst) in logits.rows().into_iter().zip(out.rows_mut()) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut total = 0.0;
        for (d, &z) in dst.iter_mut().zip(row) {
            *d = f64::from(z - max).exp();
            total += *d;
        }
        dst /= total;
    }
    out
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: ArrayView2<'_, f32>, labels: &[u32]) -> Result<(f64, Array2<f32>)> {
    if logits.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: logits.nrows(),
            actual: labels.len(),
        });
    }
    let probs = softmax(logits);
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for ((p, mut g), &y) in probs.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let y = y as usize;
        if y >= p.len() {
            return Err(Error::invalid("labels", format!("label {y} >= {} outputs", p.len())));
        }
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        for (j, (gj, &pj)) in g.iter_mut().zip(p).enumerate() {
            let target = if j == y { 1.0 } else { 0.0 };
            *gj = ((pj - target) / n) as f32;
        }
    }
    Ok((loss / n, grad))
}

/// Accumulates the gradient of the mean cross-entropy into `grads`
/// (overwriting it). `grads` must match `params` layer by layer.
fn backward_into(
    params: &ModelParams,
    cache: &ForwardCache,
    dlogits: Array2<f32>,
    grads: &mut [(Array2<f32>, Array1<f32>)],
) {
    let mut delta = dlogits;
    for l in (0..params.layers.len()).rev() {
        let input = &cache.activations[l];
        let (dw, db) = &mut grads[l];
        general_mat_mul(1.0, &input.t(), &delta, 0.0, dw);
        for (b, col) in db.iter_mut().zip(delta.axis_iter(Axis(1))) {
            *b = col.iter().map(|&v| f64::from(v)).sum::<f64>() as f32;
        }
        if l > 0 {
            let mut next = Array2::zeros(input.raw_dim());
            general_mat_mul(1.0, &delta, &params.layers[l].weights_view().t(), 0.0, &mut next);
            next.zip_mut_with(input, |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = next;
        }
    }
}

fn zero_grads(params: &ModelParams) -> Vec<(Array2<f32>, Array1<f32>)> {
    params
        .layers
        .iter()
        .map(|l| (Array2::zeros((l.inputs(), l.outputs())), Array1::zeros(l.outputs())))
        .collect()
}

/// Exact gradient of the mean cross-entropy loss, shaped like `params`.
pub fn backward(params: &ModelParams, labels: &[u32], cache: &ForwardCache) -> Result<ModelParams> {
    let (_, dlogits) = softmax_cross_entropy(cache.logits.view(), labels)?;
    if cache.activations.len() != params.layers.len() {
        return Err(Error::invalid("cache", "does not match the model depth"));
    }
    let mut grads = zero_grads(params);
    backward_into(params, cache, dlogits, &mut grads);
    let layers = grads
        .into_iter()
        .map(|(w, b)| {
            let (r, c) = w.dim();
            Dense::new(
                Tensor::matrix(r, c, w.into_raw_vec_and_offset().0)?,
                Tensor::vector(b.to_vec())?,
            )
        })
        .collect::<Result<_>>()?;
    ModelParams::new(layers)
}

/// Minibatch SGD for `epochs` passes over `data`, reshuffling each epoch
/// from `stream`. Returns the trained parameters and the sample count.
pub fn local_train(
    params: &ModelParams,
    data: &Dataset,
    epochs: usize,
    batch_size: usize,
    lr: f32,
    stream: &mut RngStream,
) -> Result<(ModelParams, usize)> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::invalid("lr", format!("{lr} must be non-negative")));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be positive"));
    }
    let mut params = params.clone();
    let mut grads = zero_grads(&params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Array2::zeros((0, data.dim()));
    let mut labels = Vec::with_capacity(batch_size);
    for _ in 0..epochs {
        stream.shuffle(&mut order);
        for chunk in order.chunks(batch_size) {
            data.gather(chunk, &mut batch, &mut labels);
            let cache = forward(&params, batch.view())?;
            let (_, dlogits) = softmax_cross_entropy(cache.logits.view(), &labels)?;
            backward_into(&params, &cache, dlogits, &mut grads);
            for (layer, (dw, db)) in params.layers.iter_mut().zip(&grads) {
                layer.weights_view_mut().scaled_add(-lr, dw);
                for (b, g) in layer.bias.data_mut().iter_mut().zip(db) {
                    *b += -lr * g;
                }
            }
        }
    }
    if !params.all_finite() {
        return Err(Error::Numeric("non-finite parameters after local training".into()));
    }
    Ok((params, data.len()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Index of the largest logit; ties go to the lower class index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Accuracy and mean cross-entropy over `data`.
pub fn evaluate(params: &ModelParams, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    const CHUNK: usize = 500;
    let mut correct = 0usize;
    let mut loss = 0.0;
    let features = data.features();
    for start in (0..data.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(data.len());
        let cache = forward(params, features.slice(ndarray::s![start..end, ..]))?;
        let labels = &data.labels()[start..end];
        let (batch_loss, _) = softmax_cross_entropy(cache.logits.view(), labels)?;
        loss += batch_loss * labels.len() as f64;
        for (row, &y) in cache.logits.rows().into_iter().zip(labels) {
            if argmax(row.as_slice().expect("standard layout")) == y as usize {
                correct += 1;
            }
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        loss: loss / data.len() as f64,
    })
}

/// Training FLOPs per sample: `2·d_in·d_out` forward plus `4·d_in·d_out`
/// backward, per layer.
pub fn training_flops_per_sample(widths: &[usize]) -> u64 {
    widths.windows(2).map(|w| 6 * (w[0] as u64) * (w[1] as u64)).sum()
}
