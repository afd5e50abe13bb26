//! Federated Dropout.
//!
//! Each client trains a dense sub-model obtained by keeping a fixed number of
//! units in every hidden layer. The server extracts the kept rows and columns
//! of each weight matrix, the client trains the smaller network, and its
//! update is mapped back onto the global coordinates it covers.

pub mod conv;
mod savings;
mod update;

pub use savings::{savings_report, wire_bytes, LayerSavings, LayerShape, SavingsReport};
pub use update::{aggregate, scatter_update, Coord, SparseUpdate, UpdateBlock};

use crate::codec::kept_count;
use crate::error::{Error, Result};
use crate::model::{Dense, ModelParams};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Kept unit indices for every layer of units, input and logits included
/// (those two are always complete when built by [`make_plan`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutPlan {
    rate: f32,
    widths: Vec<usize>,
    kept: Vec<Vec<usize>>,
}

fn check_rate(rate: f32) -> Result<()> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::invalid("dropout rate", format!("{rate} not in (0, 1]")));
    }
    Ok(())
}

impl DropoutPlan {
    /// Builds a plan from explicit kept sets, one per unit layer. Each set
    /// must be sorted, unique and within its layer width.
    pub fn from_kept(rate: f32, widths: Vec<usize>, kept: Vec<Vec<usize>>) -> Result<Self> {
        check_rate(rate)?;
        if widths.len() < 2 || kept.len() != widths.len() {
            return Err(Error::PlanMismatch(format!(
                "{} kept sets for {} layers",
                kept.len(),
                widths.len()
            )));
        }
        for (l, (set, &w)) in kept.iter().zip(&widths).enumerate() {
            if set.is_empty() {
                return Err(Error::PlanMismatch(format!("layer {l} keeps no units")));
            }
            if set.windows(2).any(|p| p[0] >= p[1]) || set.last().is_some_and(|&i| i >= w) {
                return Err(Error::PlanMismatch(format!(
                    "layer {l} indices must be sorted, unique and below {w}"
                )));
            }
        }
        Ok(DropoutPlan { rate, widths, kept })
    }

    pub fn rate(&self) -> f32 {
        self.rate
    }

    /// Global unit counts per layer.
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Kept units of unit layer `l` (0 is the input layer).
    pub fn kept(&self, l: usize) -> &[usize] {
        &self.kept[l]
    }

    /// Kept sets of the hidden layers only.
    pub fn hidden(&self) -> &[Vec<usize>] {
        &self.kept[1..self.kept.len() - 1]
    }

    /// Unit counts of the sub-model.
    pub fn sub_widths(&self) -> Vec<usize> {
        self.kept.iter().map(Vec::len).collect()
    }

    pub fn is_full(&self) -> bool {
        self.kept.iter().zip(&self.widths).all(|(k, &w)| k.len() == w)
    }

    /// Number of global coordinates (weights and biases) the sub-model covers.
    pub fn covered_coordinates(&self) -> usize {
        self.kept.windows(2).map(|p| p[0].len() * p[1].len() + p[1].len()).sum()
    }
}

/// Samples `round(rate · width)` units (at least one) per hidden layer,
/// uniformly without replacement, sorted ascending. Input and logits layers
/// are kept whole.
pub fn make_plan(widths: &[usize], rate: f32, stream: &mut RngStream) -> Result<DropoutPlan> {
    check_rate(rate)?;
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::invalid("arch", format!("{widths:?}")));
    }
    let last = widths.len() - 1;
    let kept = widths
        .iter()
        .enumerate()
        .map(|(l, &w)| {
            let k = kept_count(w, rate);
            if l == 0 || l == last || k == w {
                (0..w).collect()
            } else {
                let mut idx = stream.sample_indices(w, k);
                idx.sort_unstable();
                idx
            }
        })
        .collect();
    DropoutPlan::from_kept(rate, widths.to_vec(), kept)
}

/// Dense sub-model parameters together with the plan that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct SubModel<'a> {
    pub params: ModelParams,
    pub plan: &'a DropoutPlan,
}

fn check_arch(widths: &[usize], plan: &DropoutPlan) -> Result<()> {
    if widths != plan.widths() {
        return Err(Error::PlanMismatch(format!(
            "plan for {:?} applied to {widths:?}",
            plan.widths()
        )));
    }
    Ok(())
}

/// Gathers the kept rows and columns of every layer into dense matrices:
/// `W_sub[i][j] = W[kept_prev[i]][kept_cur[j]]`, `b_sub[j] = b[kept_cur[j]]`.
pub fn extract<'a>(global: &ModelParams, plan: &'a DropoutPlan) -> Result<SubModel<'a>> {
    check_arch(&global.widths(), plan)?;
    let layers = global
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let (rows, cols) = (plan.kept(l), plan.kept(l + 1));
            let w = layer.weights.data();
            let stride = layer.outputs();
            let mut data = Vec::with_capacity(rows.len() * cols.len());
            for &r in rows {
                let row = &w[r * stride..(r + 1) * stride];
                data.extend(cols.iter().map(|&c| row[c]));
            }
            let bias = cols.iter().map(|&c| layer.bias.data()[c]).collect();
            Dense::new(Tensor::matrix(rows.len(), cols.len(), data)?, Tensor::vector(bias)?)
        })
        .collect::<Result<_>>()?;
    Ok(SubModel {
        params: ModelParams::new(layers)?,
        plan,
    })
}
