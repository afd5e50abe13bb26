#![allow(dead_code)]

use std::path::PathBuf;

use fedcomp::data::{partition_indices, Dataset, SyntheticSpec};
use fedcomp::model::{backward, forward, init_params, local_train, Dense, ModelParams};
use fedcomp::simulator::{sample_clients, DataSpec, ExperimentConfig};
use fedcomp::{derive_stream, tags, Tensor};
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut s = derive_stream(seed, &tags!["gaussian"]);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut s);
            x as f32
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

pub fn rel_l2(a: &[f32], b: &[f32]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    let den: f64 = b.iter().map(|&y| f64::from(y).powi(2)).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// MNIST location from `FEDCOMP_MNIST_DIR` or `<workspace>/data/mnist`,
/// if the training images are present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("FEDCOMP_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join(fedcomp::simulator::MNIST_TRAIN_IMAGES).exists().then_some(dir)
}

/// Small well-separated problem for fast end-to-end checks.
pub fn toy_config(seed: u64) -> ExperimentConfig {
    let spec = SyntheticSpec {
        num_classes: 4,
        dim: 12,
        samples_per_class: 50,
        separation: 3.0,
        noise: 1.0,
        seed: 17,
    };
    ExperimentConfig {
        seed,
        rounds: 5,
        clients_total: 10,
        clients_per_round: 4,
        lr: 0.05,
        arch: vec![12, 16, 4],
        data: DataSpec::Synthetic {
            spec,
            test_per_class: 25,
        },
        eval_every: 1,
        ..ExperimentConfig::default()
    }
}

/// Plain FedAvg with no codec and no sub-models: every sampled client trains
/// the full model, and the server adds the sample-weighted mean delta.
pub fn reference_fedavg(config: &ExperimentConfig, train: &Dataset) -> ModelParams {
    let clients = partition_indices(
        train,
        config.clients_total,
        config.partition,
        &mut derive_stream(config.seed, &tags!["partition"]),
    )
    .unwrap();
    let mut global = init_params(&config.arch, &mut derive_stream(config.seed, &tags!["init"])).unwrap();
    for r in 0..config.rounds {
        let mut num: Vec<Vec<f64>> = global
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
            .collect();
        let mut total = 0.0f64;
        for c in sample_clients(config, r) {
            let data = train.subset(&clients[c]);
            let mut stream = derive_stream(config.seed, &tags!["train", r, "client", c]);
            let (trained, n) = local_train(
                &global,
                &data,
                config.local_epochs,
                config.batch_size,
                config.lr,
                &mut stream,
            )
            .unwrap();
            let n = n as f64;
            total += n;
            let flat = trained
                .layers
                .iter()
                .zip(&global.layers)
                .flat_map(|(t, g)| [(t.weights.data(), g.weights.data()), (t.bias.data(), g.bias.data())]);
            for (acc, (t, g)) in num.iter_mut().zip(flat) {
                for (a, (&x, &y)) in acc.iter_mut().zip(t.iter().zip(g)) {
                    *a += n * f64::from(x - y);
                }
            }
        }
        let mut sums = num.into_iter();
        let layers = global
            .layers
            .iter()
            .map(|l| {
                let mut step = |t: &Tensor| {
                    let s = sums.next().unwrap();
                    let data = t
                        .data()
                        .iter()
                        .zip(s)
                        .map(|(&o, s)| (f64::from(o) + s / total) as f32)
                        .collect();
                    Tensor::new(t.shape().to_vec(), data).unwrap()
                };
                let w = step(&l.weights);
                let b = step(&l.bias);
                Dense::new(w, b).unwrap()
            })
            .collect();
        global = ModelParams::new(layers).unwrap();
    }
    global
}

/// Mean cross-entropy computed entirely in `f64`, independent of the
/// library's forward pass.
pub fn loss_f64(layers: &[Layer64], x: &[Vec<f64>], labels: &[u32]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in x.iter().zip(labels) {
        let mut a = row.clone();
        for (l, (w, b, d_in, d_out)) in layers.iter().enumerate() {
            let mut z = b.clone();
            for i in 0..*d_in {
                for j in 0..*d_out {
                    z[j] += a[i] * w[i * d_out + j];
                }
            }
            if l + 1 < layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + a.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - a[y as usize];
    }
    total / x.len() as f64
}

type Layer64 = (Vec<f64>, Vec<f64>, usize, usize);

fn param_mut(layers: &mut [Layer64], l: usize, which: usize, i: usize) -> &mut f64 {
    if which == 0 {
        &mut layers[l].0[i]
    } else {
        &mut layers[l].1[i]
    }
}

/// Norm-relative distance between the analytic gradient and a central
/// finite-difference gradient for one random network.
pub fn gradient_check(seed: u64) -> f64 {
    let mut s = derive_stream(seed, &tags!["gradcheck"]);
    let depth = 2 + s.below(3);
    let widths: Vec<usize> = (0..depth).map(|_| 2 + s.below(5)).collect();
    let mut params = init_params(&widths, &mut s).unwrap();
    // zero biases put dead rows exactly on the ReLU kink
    for l in &mut params.layers {
        for b in l.bias.data_mut() {
            let z: f64 = StandardNormal.sample(&mut s);
            *b = 0.1 * z as f32;
        }
    }
    let batch = 1 + s.below(6);
    let classes = *widths.last().unwrap();
    let x = gaussian(vec![batch, widths[0]], seed ^ 0x5eed);
    let labels: Vec<u32> = (0..batch).map(|_| s.below(classes) as u32).collect();

    let xv = ndarray::ArrayView2::from_shape((batch, widths[0]), x.data()).unwrap();
    let cache = forward(&params, xv).unwrap();
    let grads = backward(&params, &labels, &cache).unwrap();

    let rows: Vec<Vec<f64>> = x
        .data()
        .chunks(widths[0])
        .map(|r| r.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let mut layers: Vec<Layer64> = params
        .layers
        .iter()
        .map(|l| {
            let w = l.weights.data().iter().map(|&v| f64::from(v)).collect();
            let b = l.bias.data().iter().map(|&v| f64::from(v)).collect();
            (w, b, l.inputs(), l.outputs())
        })
        .collect();

    const EPS: f64 = 1e-5;
    let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
    for l in 0..layers.len() {
        for which in 0..2 {
            let n = if which == 0 {
                layers[l].0.len()
            } else {
                layers[l].1.len()
            };
            for i in 0..n {
                let orig = *param_mut(&mut layers, l, which, i);
                *param_mut(&mut layers, l, which, i) = orig + EPS;
                let up = loss_f64(&layers, &rows, &labels);
                *param_mut(&mut layers, l, which, i) = orig - EPS;
                let down = loss_f64(&layers, &rows, &labels);
                *param_mut(&mut layers, l, which, i) = orig;
                let numeric = (up - down) / (2.0 * EPS);
                let g = &grads.layers[l];
                let analytic = f64::from(if which == 0 {
                    g.weights.data()[i]
                } else {
                    g.bias.data()[i]
                });
                diff += (numeric - analytic).powi(2);
                norm_a += analytic * analytic;
                norm_n += numeric * numeric;
            }
        }
    }
    diff.sqrt() / norm_a.sqrt().max(norm_n.sqrt()).max(1e-12)
}
