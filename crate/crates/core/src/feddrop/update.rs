use super::{check_arch, DropoutPlan};
use crate::error::{Error, Result};
use crate::model::{Dense, ModelParams};
use crate::tensor::Tensor;

/// A global coordinate of a fully-connected model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Coord {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, unit: usize },
}

/// The sub-block of one layer an update touches: the cartesian product of
/// `rows × cols` for weights and `cols` for biases.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Client update expressed on global coordinates. Coordinates outside the
/// client's plan are absent rather than zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseUpdate {
    widths: Vec<usize>,
    pub blocks: Vec<UpdateBlock>,
}

impl SparseUpdate {
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn len(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.rows.len() * b.cols.len() + b.cols.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self) -> impl Iterator<Item = (Coord, f32)> + '_ {
        self.blocks.iter().enumerate().flat_map(|(layer, b)| {
            let weights = b.rows.iter().enumerate().flat_map(move |(i, &row)| {
                b.cols
                    .iter()
                    .enumerate()
                    .map(move |(j, &col)| (Coord::Weight { layer, row, col }, b.weights[i * b.cols.len() + j]))
            });
            let biases = b
                .cols
                .iter()
                .zip(&b.bias)
                .map(move |(&unit, &v)| (Coord::Bias { layer, unit }, v));
            weights.chain(biases)
        })
    }
}

/// Maps a sub-model shaped `delta` back to global coordinates.
pub fn scatter_update(global_widths: &[usize], plan: &DropoutPlan, delta: &ModelParams) -> Result<SparseUpdate> {
    check_arch(global_widths, plan)?;
    if delta.widths() != plan.sub_widths() {
        return Err(Error::PlanMismatch(format!(
            "delta shaped {:?}, plan expects {:?}",
            delta.widths(),
            plan.sub_widths()
        )));
    }
    let blocks = delta
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| UpdateBlock {
            rows: plan.kept(l).to_vec(),
            cols: plan.kept(l + 1).to_vec(),
            weights: layer.weights.data().to_vec(),
            bias: layer.bias.data().to_vec(),
        })
        .collect();
    Ok(SparseUpdate {
        widths: global_widths.to_vec(),
        blocks,
    })
}

/// Sample-weighted average over covering clients, per coordinate:
/// `new = old + Σ n_k Δ_k / Σ n_k`, summed in `f64` in the given client
/// order. Coordinates no client covers are left unchanged.
pub fn aggregate(global: &ModelParams, updates: &[(SparseUpdate, usize)]) -> Result<ModelParams> {
    if updates.is_empty() {
        return Err(Error::Empty);
    }
    let widths = global.widths();
    for (u, _) in updates {
        if u.widths != widths {
            return Err(Error::PlanMismatch(format!(
                "update for {:?} applied to {widths:?}",
                u.widths
            )));
        }
    }
    let layers = global
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let stride = layer.outputs();
            let mut w_num = vec![0.0f64; layer.weights.len()];
            let mut w_den = vec![0.0f64; layer.weights.len()];
            let mut b_num = vec![0.0f64; stride];
            let mut b_den = vec![0.0f64; stride];
            for (update, n) in updates {
                let n = *n as f64;
                let block = &update.blocks[l];
                for (i, &r) in block.rows.iter().enumerate() {
                    let src = &block.weights[i * block.cols.len()..(i + 1) * block.cols.len()];
                    for (&c, &v) in block.cols.iter().zip(src) {
                        w_num[r * stride + c] += n * f64::from(v);
                        w_den[r * stride + c] += n;
                    }
                }
                for (&c, &v) in block.cols.iter().zip(&block.bias) {
                    b_num[c] += n * f64::from(v);
                    b_den[c] += n;
                }
            }
            let apply = |old: &[f32], num: &[f64], den: &[f64]| -> Vec<f32> {
                old.iter()
                    .zip(num.iter().zip(den))
                    .map(|(&o, (&s, &d))| if d > 0.0 { (f64::from(o) + s / d) as f32 } else { o })
                    .collect()
            };
            Dense::new(
                Tensor::new(
                    layer.weights.shape().to_vec(),
                    apply(layer.weights.data(), &w_num, &w_den),
                )?,
                Tensor::vector(apply(layer.bias.data(), &b_num, &b_den))?,
            )
        })
        .collect::<Result<_>>()?;
    ModelParams::new(layers)
}

#[cfg(test)]
mod tests {
    use super::super::{extract, make_plan};
    use super::*;
    use crate::model::init_params;
    use crate::rng::derive_stream;
    use crate::tags;
    use std::collections::{HashMap, HashSet};

    fn filled(widths: &[usize], value: f32) -> ModelParams {
        let mut p = init_params(widths, &mut derive_stream(0, &[])).unwrap();
        for l in &mut p.layers {
            l.weights.data_mut().fill(value);
            l.bias.data_mut().fill(value);
        }
        p
    }

    #[test]
    fn full_plan_scatter_is_dense_identity() {
        let widths = [4, 5, 3];
        let plan = make_plan(&widths, 1.0, &mut derive_stream(0, &[])).unwrap();
        let delta = init_params(&widths, &mut derive_stream(1, &[])).unwrap();
        let upd = scatter_update(&widths, &plan, &delta).unwrap();
        assert_eq!(upd.len(), delta.num_params());
        let zero = filled(&widths, 0.0);
        assert_eq!(aggregate(&zero, &[(upd, 10)]).unwrap(), delta);
    }

    #[test]
    fn coverage_count_and_injectivity() {
        let widths = [5, 8, 6, 3];
        for seed in 0..20 {
            let plan = make_plan(&widths, 0.5, &mut derive_stream(seed, &tags!["cov"])).unwrap();
            let g = init_params(&widths, &mut derive_stream(seed, &[])).unwrap();
            let sub = extract(&g, &plan).unwrap();
            let upd = scatter_update(&widths, &plan, &sub.params).unwrap();
            let coords: Vec<Coord> = upd.coords().map(|(c, _)| c).collect();
            assert_eq!(coords.len(), plan.covered_coordinates());
            let unique: HashSet<_> = coords.iter().collect();
            assert_eq!(unique.len(), coords.len());
        }
    }

    #[test]
    fn scatter_then_extract_round_trip() {
        let widths = [6, 10, 7, 4];
        let plan = make_plan(&widths, 0.6, &mut derive_stream(9, &[])).unwrap();
        let delta = init_params(&plan.sub_widths(), &mut derive_stream(10, &[])).unwrap();
        let upd = scatter_update(&widths, &plan, &delta).unwrap();
        let zero = filled(&widths, 0.0);
        let dense = aggregate(&zero, &[(upd, 1)]).unwrap();
        assert_eq!(extract(&dense, &plan).unwrap().params, delta);
    }

    #[test]
    fn zero_delta_scatters_to_zeros() {
        let widths = [3, 4, 2];
        let plan = make_plan(&widths, 0.5, &mut derive_stream(0, &[])).unwrap();
        let g = init_params(&widths, &mut derive_stream(1, &[])).unwrap();
        let sub = extract(&g, &plan).unwrap();
        let d = sub.params.delta_from(&sub.params).unwrap();
        let upd = scatter_update(&widths, &plan, &d).unwrap();
        assert_eq!(upd.len(), plan.covered_coordinates());
        assert!(upd.coords().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn single_client_is_plain_step() {
        let widths = [3, 4, 2];
        let g = init_params(&widths, &mut derive_stream(1, &[])).unwrap();
        let plan = make_plan(&widths, 1.0, &mut derive_stream(0, &[])).unwrap();
        let delta = filled(&widths, 0.25);
        let out = aggregate(&g, &[(scatter_update(&widths, &plan, &delta).unwrap(), 7)]).unwrap();
        for (o, l) in out.layers.iter().zip(&g.layers) {
            for (a, b) in o.weights.data().iter().zip(l.weights.data()) {
                assert_eq!(*a, (f64::from(*b) + 0.25) as f32);
            }
        }
    }

    #[test]
    fn weighted_mean_of_opposing_updates() {
        let widths = [2, 2];
        let g = filled(&widths, 1.0);
        let plan = make_plan(&widths, 1.0, &mut derive_stream(0, &[])).unwrap();
        let up = scatter_update(&widths, &plan, &filled(&widths, 1.0)).unwrap();
        let down = scatter_update(&widths, &plan, &filled(&widths, -1.0)).unwrap();
        let out = aggregate(&g, &[(up, 100), (down, 300)]).unwrap();
        assert!(out.layers[0].weights.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn disjoint_coverage_moves_each_coordinate_once() {
        let widths = [2, 4, 2];
        let g = filled(&widths, 0.0);
        let a = DropoutPlan::from_kept(0.5, widths.to_vec(), vec![vec![0, 1], vec![0, 1], vec![0, 1]]).unwrap();
        let b = DropoutPlan::from_kept(0.5, widths.to_vec(), vec![vec![0, 1], vec![2, 3], vec![0, 1]]).unwrap();
        let ua = scatter_update(&widths, &a, &filled(&a.sub_widths(), 1.0)).unwrap();
        let ub = scatter_update(&widths, &b, &filled(&b.sub_widths(), 2.0)).unwrap();
        let out = aggregate(&g, &[(ua.clone(), 5), (ub.clone(), 50)]).unwrap();
        let expect: HashMap<Coord, f32> = ua.coords().chain(ub.coords()).collect();
        let w0 = out.layers[0].weights.data();
        for row in 0..2 {
            for col in 0..4 {
                let c = Coord::Weight { layer: 0, row, col };
                assert_eq!(w0[row * 4 + col], expect[&c]);
            }
        }
        // output biases are shared by both clients
        let b1 = out.layers[1].bias.data();
        let shared = ((5.0 * 1.0 + 50.0 * 2.0) / 55.0) as f32;
        assert!(b1.iter().all(|&v| v == shared));
    }

    #[test]
    fn uncovered_coordinates_unchanged() {
        let widths = [2, 4, 2];
        let g = init_params(&widths, &mut derive_stream(3, &[])).unwrap();
        let plan = DropoutPlan::from_kept(0.5, widths.to_vec(), vec![vec![0, 1], vec![1, 3], vec![0, 1]]).unwrap();
        let upd = scatter_update(&widths, &plan, &filled(&plan.sub_widths(), 1.0)).unwrap();
        let out = aggregate(&g, &[(upd, 1)]).unwrap();
        for row in 0..2 {
            for col in [0usize, 2] {
                let i = row * 4 + col;
                assert_eq!(out.layers[0].weights.data()[i], g.layers[0].weights.data()[i]);
            }
        }
        assert_eq!(out.layers[0].bias.data()[0], g.layers[0].bias.data()[0]);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let widths = [3, 4, 2];
        let plan = make_plan(&widths, 0.5, &mut derive_stream(0, &[])).unwrap();
        let wrong = init_params(&widths, &mut derive_stream(1, &[])).unwrap();
        assert!(scatter_update(&widths, &plan, &wrong).is_err());
        assert!(aggregate(&wrong, &[]).is_err());
    }
}
