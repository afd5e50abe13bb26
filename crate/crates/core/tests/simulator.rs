mod common;

use common::{reference_fedavg, toy_config};
use fedcomp::codec::{CodecSpec, QuantBits};
use fedcomp::config::Config;
use fedcomp::data::Partition;
use fedcomp::feddrop::{extract, make_plan};
use fedcomp::model::{init_params, local_train};
use fedcomp::simulator::{run_experiment, run_experiment_with, Simulation};
use fedcomp::transforms::TransformKind;
use fedcomp::{derive_stream, tags};

#[test]
fn identity_knobs_match_reference_fedavg() {
    for partition in [Partition::Iid, Partition::LabelShards { shards_per_client: 2 }] {
        let cfg = fedcomp::simulator::ExperimentConfig {
            partition,
            ..toy_config(3)
        };
        let (train, test) = cfg.data.load().unwrap();
        let expected = reference_fedavg(&cfg, &train);
        let (_, got) = run_experiment_with(&cfg, train, test, |_| Ok(())).unwrap();
        assert_eq!(got, expected, "{partition}");
    }
}

#[test]
fn metrics_identical_across_runs_and_thread_counts() {
    let mut cfg = toy_config(8);
    cfg.dropout_rate = 0.5;
    cfg.downlink = CodecSpec::new(TransformKind::Kashin, 1.0, QuantBits::Bits(4));
    cfg.uplink = CodecSpec::new(TransformKind::Hadamard, 0.5, QuantBits::Bits(2));
    let runs: Vec<_> = [1, 1, 3]
        .into_iter()
        .map(|threads| {
            let c = fedcomp::simulator::ExperimentConfig { threads, ..cfg.clone() };
            run_experiment(&c).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn extracted_submodel_trains_like_standalone_network() {
    let cfg = toy_config(1);
    let (train, _) = cfg.data.load().unwrap();
    let widths = [12, 20, 16, 4];
    let global = init_params(&widths, &mut derive_stream(4, &[])).unwrap();
    let plan = make_plan(&widths, 0.5, &mut derive_stream(5, &[])).unwrap();
    let sub = extract(&global, &plan).unwrap();

    // rebuild the reduced network by hand from the kept indices
    let standalone = {
        let layers = global
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let (rows, cols) = (plan.kept(l), plan.kept(l + 1));
                let mut w = vec![];
                for &r in rows {
                    for &c in cols {
                        w.push(layer.weights.data()[r * layer.outputs() + c]);
                    }
                }
                let b = cols.iter().map(|&c| layer.bias.data()[c]).collect();
                fedcomp::model::Dense::new(
                    fedcomp::Tensor::matrix(rows.len(), cols.len(), w).unwrap(),
                    fedcomp::Tensor::vector(b).unwrap(),
                )
                .unwrap()
            })
            .collect();
        fedcomp::model::ModelParams::new(layers).unwrap()
    };
    assert_eq!(standalone.widths(), vec![12, 10, 8, 4]);

    let a = local_train(&sub.params, &train, 2, 10, 0.05, &mut derive_stream(6, &tags!["t"])).unwrap();
    let b = local_train(&standalone, &train, 2, 10, 0.05, &mut derive_stream(6, &tags!["t"])).unwrap();
    assert_eq!(a, b);
}

#[test]
fn serialized_config_reproduces_first_round() {
    let text = "\
        seed = 21\nrounds = 2\nclients.total = 10\nclients.per_round = 3\nlocal.lr = 0.05\n\
        arch = 12-16-4\ndata.source = synthetic\ndata.dim = 12\ndata.classes = 4\n\
        data.train_per_class = 50\ndata.test_per_class = 20\nscheme = aggressive\ndropout.rate = 0.75\n";
    let mut raw = fedcomp::config::RawConfig::parse(text).unwrap();
    raw.apply_overrides(&["--dropout.rate=0.5"]).unwrap();
    let first = Config::from_raw(&raw).unwrap();
    let second = Config::parse(&first.to_config_string()).unwrap();
    assert_eq!(first, second);

    let round1 = |c: &Config| {
        let (train, test) = c.experiment.data.load().unwrap();
        Simulation::new(c.experiment.clone(), train, test)
            .unwrap()
            .run_round()
            .unwrap()
    };
    assert_eq!(round1(&first), round1(&second));
}

#[test]
fn shared_plan_gives_every_client_the_same_submodel() {
    let mut cfg = toy_config(2);
    cfg.dropout_rate = 0.5;
    cfg.shared_submodel_per_round = true;
    let (train, test) = cfg.data.load().unwrap();
    let shared = run_experiment_with(&cfg, train.clone(), test.clone(), |_| Ok(())).unwrap();
    cfg.shared_submodel_per_round = false;
    let independent = run_experiment_with(&cfg, train, test, |_| Ok(())).unwrap();
    assert_ne!(shared.1, independent.1);
    // the same number of units is kept either way
    assert_eq!(shared.0[0].down_bytes, independent.0[0].down_bytes);
}

#[test]
fn compressed_training_tracks_the_baseline() {
    let mut cfg = toy_config(5);
    cfg.rounds = 30;
    let last = |c: &fedcomp::simulator::ExperimentConfig| run_experiment(c).unwrap().last().unwrap().accuracy.unwrap();
    let baseline = last(&cfg);
    cfg.dropout_rate = 0.75;
    cfg.downlink = CodecSpec::new(TransformKind::Kashin, 1.0, QuantBits::Bits(5));
    cfg.uplink = CodecSpec::new(TransformKind::Kashin, 0.5, QuantBits::Bits(4));
    let compressed = last(&cfg);
    assert!(baseline > 0.8, "baseline {baseline}");
    assert!(
        compressed > baseline - 0.1,
        "compressed {compressed} vs baseline {baseline}"
    );
}
