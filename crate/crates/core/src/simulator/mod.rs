//! Deterministic FedAvg simulation.
//!
//! Each round the server samples clients, builds a Federated Dropout
//! sub-model per client, compresses it for the downlink, lets the client
//! train locally, compresses the resulting update for the uplink and folds
//! the decoded updates into the global model in client-index order.
//!
//! Every random draw comes from a stream derived from the master seed and a
//! tag path naming its purpose:
//!
//! | purpose            | tags                                         |
//! |--------------------|----------------------------------------------|
//! | initial weights    | `init`                                       |
//! | data partition     | `partition`                                  |
//! | client sampling    | `sample, r`                                  |
//! | dropout plan       | `plan, r, client, c` (or `plan, r` if shared) |
//! | downlink codec     | `down, r, client, c, layer, l`               |
//! | local SGD          | `train, r, client, c`                        |
//! | uplink codec       | `up, r, client, c, layer, l`                 |
//!
//! so results do not depend on thread scheduling or on how often the model
//! is evaluated.

mod metrics;

pub use metrics::{RoundMetrics, CSV_HEADER};

use rayon::prelude::*;

use crate::codec::{decode, encode, CodecSpec, CompressedTensor};
use crate::data::{self, Dataset, Partition, SyntheticSpec};
use crate::error::{Error, Result};
use crate::feddrop::{aggregate, extract, make_plan, scatter_update, DropoutPlan, SparseUpdate};
use crate::model::{self, evaluate, init_params, local_train, Dense, ModelParams};
use crate::rng::derive_stream;
use crate::tags;
use crate::tensor::Tensor;

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Where training and test data come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Idx {
        train_images: String,
        train_labels: String,
        test_images: String,
        test_labels: String,
    },
    /// Gaussian blobs; the test split shares the class means.
    Synthetic { spec: SyntheticSpec, test_per_class: usize },
}

impl DataSpec {
    /// IDX files with the standard MNIST names inside `dir`.
    pub fn mnist_dir(dir: &str) -> Self {
        let join = |f: &str| std::path::Path::new(dir).join(f).display().to_string();
        DataSpec::Idx {
            train_images: join(MNIST_TRAIN_IMAGES),
            train_labels: join(MNIST_TRAIN_LABELS),
            test_images: join(MNIST_TEST_IMAGES),
            test_labels: join(MNIST_TEST_LABELS),
        }
    }

    /// `(train, test)` datasets.
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        match self {
            DataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => Ok((
                data::load_idx(train_images, train_labels)?,
                data::load_idx(test_images, test_labels)?,
            )),
            DataSpec::Synthetic { spec, test_per_class } => Ok((
                data::gen_synthetic(spec)?,
                data::gen_synthetic_split(spec, "test", *test_per_class)?,
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rounds: usize,
    pub clients_total: usize,
    pub clients_per_round: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Fraction of hidden units each client keeps.
    pub dropout_rate: f32,
    /// One dropout plan per round shared by all sampled clients.
    pub shared_submodel_per_round: bool,
    pub downlink: CodecSpec,
    pub uplink: CodecSpec,
    /// Evaluate every this many rounds; the last round is always evaluated.
    pub eval_every: usize,
    /// Unit widths from input to logits, e.g. `[784, 512, 10]`.
    pub arch: Vec<usize>,
    pub data: DataSpec,
    pub partition: Partition,
    /// Worker threads for client work; 0 picks the rayon default.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            rounds: 100,
            clients_total: 100,
            clients_per_round: 10,
            local_epochs: 1,
            batch_size: 10,
            lr: 0.15,
            dropout_rate: 1.0,
            shared_submodel_per_round: false,
            downlink: CodecSpec::identity(),
            uplink: CodecSpec::identity(),
            eval_every: 1,
            arch: vec![784, 512, 10],
            data: DataSpec::mnist_dir("data/mnist"),
            partition: Partition::Iid,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds", "must be at least 1"));
        }
        if self.clients_total == 0 || self.clients_per_round == 0 {
            return Err(Error::invalid("clients", "counts must be positive"));
        }
        if self.clients_per_round > self.clients_total {
            return Err(Error::invalid(
                "clients_per_round",
                format!("{} exceeds {} clients", self.clients_per_round, self.clients_total),
            ));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::invalid("batch_size/eval_every", "must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", "must be finite and non-negative"));
        }
        if !(self.dropout_rate > 0.0 && self.dropout_rate <= 1.0) {
            return Err(Error::invalid(
                "dropout_rate",
                format!("{} not in (0, 1]", self.dropout_rate),
            ));
        }
        if self.arch.len() < 2 || self.arch.contains(&0) {
            return Err(Error::invalid("arch", format!("{:?}", self.arch)));
        }
        self.downlink.validate()?;
        self.uplink.validate()?;
        Ok(())
    }
}

/// Global state of a running experiment.
pub struct Simulation {
    config: ExperimentConfig,
    train: Dataset,
    test: Dataset,
    clients: Vec<Vec<usize>>,
    global: ModelParams,
    round: usize,
    cum_down: u64,
    cum_up: u64,
    pool: rayon::ThreadPool,
}

struct ClientResult {
    update: SparseUpdate,
    samples: usize,
    down_bytes: u64,
    up_bytes: u64,
    flops: u64,
}

/// Serializes, parses and decodes one tensor, returning it with its wire size.
fn transmit(t: &Tensor, spec: &CodecSpec, seed: u64, tags: &[crate::rng::Tag]) -> Result<(Tensor, u64)> {
    let c = encode(t, spec, &mut derive_stream(seed, tags))?;
    let bytes = c.to_bytes()?;
    let received = decode(&CompressedTensor::from_bytes(&bytes)?)?;
    Ok((received, bytes.len() as u64))
}

/// Sends every weight matrix through the codec; biases travel as raw floats.
fn transmit_model(
    params: &ModelParams,
    spec: &CodecSpec,
    seed: u64,
    prefix: &[crate::rng::Tag],
) -> Result<(ModelParams, u64)> {
    let mut bytes = 0;
    let mut layers = Vec::with_capacity(params.layers.len());
    for (l, layer) in params.layers.iter().enumerate() {
        let mut tags = prefix.to_vec();
        tags.extend(tags!["layer", l]);
        let (w, n) = transmit(&layer.weights, spec, seed, &tags)?;
        bytes += n + 4 * layer.bias.len() as u64;
        layers.push(Dense::new(w, layer.bias.clone())?);
    }
    Ok((ModelParams::new(layers)?, bytes))
}

impl Simulation {
    pub fn new(config: ExperimentConfig, train: Dataset, test: Dataset) -> Result<Self> {
        config.validate()?;
        let classes = *config.arch.last().expect("validated");
        if config.arch[0] != train.dim() || test.dim() != train.dim() {
            return Err(Error::invalid(
                "arch",
                format!("input width {} but data has {} features", config.arch[0], train.dim()),
            ));
        }
        if train.num_classes().max(test.num_classes()) > classes {
            return Err(Error::invalid(
                "arch",
                format!("{classes} outputs but data has {} classes", train.num_classes()),
            ));
        }
        let clients = data::partition_indices(
            &train,
            config.clients_total,
            config.partition,
            &mut derive_stream(config.seed, &tags!["partition"]),
        )?;
        let global = init_params(&config.arch, &mut derive_stream(config.seed, &tags!["init"]))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?;
        Ok(Simulation {
            config,
            train,
            test,
            clients,
            global,
            round: 0,
            cum_down: 0,
            cum_up: 0,
            pool,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn global(&self) -> &ModelParams {
        &self.global
    }

    /// Replaces the global model, e.g. to start from known weights.
    pub fn set_global(&mut self, params: ModelParams) -> Result<()> {
        if params.widths() != self.config.arch {
            return Err(Error::invalid("params", "architecture differs from config"));
        }
        self.global = params;
        Ok(())
    }

    /// Training sample indices held by each client.
    pub fn client_indices(&self) -> &[Vec<usize>] {
        &self.clients
    }

    /// Rounds completed so far.
    pub fn rounds_done(&self) -> usize {
        self.round
    }

    pub fn evaluate(&self) -> Result<model::Evaluation> {
        evaluate(&self.global, &self.test)
    }

    /// Clients taking part in round `r`, ascending.
    pub fn sample_clients(&self, r: usize) -> Vec<usize> {
        sample_clients(&self.config, r)
    }

    fn plan_for(&self, r: usize, client: usize) -> Result<DropoutPlan> {
        let mut stream = if self.config.shared_submodel_per_round {
            derive_stream(self.config.seed, &tags!["plan", r])
        } else {
            derive_stream(self.config.seed, &tags!["plan", r, "client", client])
        };
        make_plan(&self.config.arch, self.config.dropout_rate, &mut stream)
    }

    fn client_round(&self, r: usize, client: usize) -> Result<ClientResult> {
        let cfg = &self.config;
        let plan = self.plan_for(r, client)?;
        let sub = extract(&self.global, &plan)?;
        let (received, down_bytes) = transmit_model(
            &sub.params,
            &cfg.downlink,
            cfg.seed,
            &tags!["down", r, "client", client],
        )?;

        let local = self.train.subset(&self.clients[client]);
        let mut stream = derive_stream(cfg.seed, &tags!["train", r, "client", client]);
        let (trained, samples) = local_train(&received, &local, cfg.local_epochs, cfg.batch_size, cfg.lr, &mut stream)?;
        let delta = trained.delta_from(&received)?;

        let (delta, up_bytes) = transmit_model(&delta, &cfg.uplink, cfg.seed, &tags!["up", r, "client", client])?;
        let update = scatter_update(&cfg.arch, &plan, &delta)?;
        let flops = (samples * cfg.local_epochs) as u64 * model::training_flops_per_sample(&plan.sub_widths());
        Ok(ClientResult {
            update,
            samples,
            down_bytes,
            up_bytes,
            flops,
        })
    }

    /// Runs the next round and evaluates if it is due.
    pub fn run_round(&mut self) -> Result<RoundMetrics> {
        let r = self.round;
        let clients = self.sample_clients(r);
        let results: Vec<ClientResult> = self.pool.install(|| {
            clients
                .par_iter()
                .map(|&c| self.client_round(r, c))
                .collect::<Result<_>>()
        })?;

        let mut updates = Vec::with_capacity(results.len());
        let (mut down, mut up, mut flops) = (0u64, 0u64, 0u64);
        for res in results {
            down += res.down_bytes;
            up += res.up_bytes;
            flops += res.flops;
            updates.push((res.update, res.samples));
        }
        let next = aggregate(&self.global, &updates)?;
        if !next.all_finite() {
            return Err(Error::Numeric(format!("non-finite global model after round {}", r + 1)));
        }
        self.global = next;
        self.round += 1;
        self.cum_down += down;
        self.cum_up += up;

        let due = self.round.is_multiple_of(self.config.eval_every) || self.round == self.config.rounds;
        let eval = if due { Some(self.evaluate()?) } else { None };
        Ok(RoundMetrics {
            round: self.round,
            accuracy: eval.map(|e| e.accuracy),
            loss: eval.map(|e| e.loss),
            down_bytes: down,
            up_bytes: up,
            cum_down: self.cum_down,
            cum_up: self.cum_up,
            flops,
        })
    }
}

/// Clients taking part in round `r` (0-based), ascending.
pub fn sample_clients(config: &ExperimentConfig, r: usize) -> Vec<usize> {
    let mut stream = derive_stream(config.seed, &tags!["sample", r]);
    let mut picked = stream.sample_indices(config.clients_total, config.clients_per_round);
    picked.sort_unstable();
    picked
}

/// Runs all rounds on already-loaded data, handing each round's metrics to
/// `on_round` as soon as it finishes.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    train: Dataset,
    test: Dataset,
    mut on_round: impl FnMut(&RoundMetrics) -> Result<()>,
) -> Result<(Vec<RoundMetrics>, ModelParams)> {
    let mut sim = Simulation::new(config.clone(), train, test)?;
    let mut out = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        let m = sim.run_round()?;
        on_round(&m)?;
        out.push(m);
    }
    Ok((out, sim.global))
}

/// Loads the configured data and runs every round.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RoundMetrics>> {
    config.validate()?;
    let (train, test) = config.data.load()?;
    Ok(run_experiment_with(config, train, test, |_| Ok(()))?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::QuantBits;
    use crate::transforms::TransformKind;

    fn toy() -> (ExperimentConfig, Dataset, Dataset) {
        let spec = SyntheticSpec {
            num_classes: 3,
            dim: 6,
            samples_per_class: 40,
            separation: 4.0,
            noise: 1.0,
            seed: 5,
        };
        let cfg = ExperimentConfig {
            seed: 11,
            rounds: 3,
            clients_total: 8,
            clients_per_round: 3,
            lr: 0.05,
            arch: vec![6, 12, 3],
            data: DataSpec::Synthetic {
                spec,
                test_per_class: 20,
            },
            ..ExperimentConfig::default()
        };
        let (train, test) = cfg.data.load().unwrap();
        (cfg, train, test)
    }

    #[test]
    fn rejects_invalid_configs() {
        let (cfg, train, test) = toy();
        let bad = [
            ExperimentConfig {
                rounds: 0,
                ..cfg.clone()
            },
            ExperimentConfig {
                clients_per_round: 9,
                ..cfg.clone()
            },
            ExperimentConfig {
                dropout_rate: 0.0,
                ..cfg.clone()
            },
            ExperimentConfig {
                arch: vec![5, 3],
                ..cfg.clone()
            },
            ExperimentConfig {
                arch: vec![6, 2],
                ..cfg.clone()
            },
        ];
        for c in bad {
            assert!(Simulation::new(c, train.clone(), test.clone()).is_err());
        }
    }

    #[test]
    fn byte_accounting_matches_wire_sizes() {
        let (mut cfg, train, test) = toy();
        cfg.dropout_rate = 0.5;
        cfg.downlink = CodecSpec::new(TransformKind::Kashin, 1.0, QuantBits::Bits(4));
        cfg.uplink = CodecSpec::new(TransformKind::Hadamard, 0.5, QuantBits::Bits(2));
        let mut sim = Simulation::new(cfg.clone(), train, test).unwrap();
        let m = sim.run_round().unwrap();

        // sub-model is 6-6-3 for every client
        let (w, b) = ([36usize, 18], 9u64);
        let per_client = |spec: &CodecSpec| -> u64 {
            w.iter().map(|&n| crate::feddrop::wire_bytes(n, 2, spec)).sum::<u64>() + 4 * b
        };
        assert_eq!(m.down_bytes, 3 * per_client(&cfg.downlink));
        assert_eq!(m.up_bytes, 3 * per_client(&cfg.uplink));
        let m2 = sim.run_round().unwrap();
        assert_eq!(m2.cum_down, m.cum_down + m2.down_bytes);
        assert_eq!(m2.cum_up, m.cum_up + m2.up_bytes);
    }

    #[test]
    fn eval_schedule_does_not_change_training() {
        let (cfg, train, test) = toy();
        let every = run_experiment_with(&cfg, train.clone(), test.clone(), |_| Ok(())).unwrap();
        let sparse = ExperimentConfig { eval_every: 2, ..cfg };
        let (metrics, params) = run_experiment_with(&sparse, train, test, |_| Ok(())).unwrap();
        assert_eq!(params, every.1);
        assert!(metrics[0].accuracy.is_none());
        assert!(metrics[1].accuracy.is_some());
        assert!(metrics[2].accuracy.is_some());
    }

    #[test]
    fn sampling_is_uniform() {
        let cfg = ExperimentConfig {
            clients_total: 20,
            clients_per_round: 5,
            ..ExperimentConfig::default()
        };
        let trials = 10_000;
        let mut counts = vec![0usize; 20];
        for r in 0..trials {
            let picked = sample_clients(&cfg, r);
            assert_eq!(picked.len(), 5);
            assert!(picked.windows(2).all(|p| p[0] < p[1]));
            for c in picked {
                counts[c] += 1;
            }
        }
        let p = 5.0 / 20.0;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for &n in &counts {
            assert!((n as f64 - trials as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn numeric_failure_is_reported() {
        let (mut cfg, train, test) = toy();
        cfg.lr = 1e30;
        let err = run_experiment_with(&cfg, train, test, |_| Ok(())).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }
}
