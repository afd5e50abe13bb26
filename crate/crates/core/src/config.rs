//! Flat `key=value` experiment configuration.
//!
//! One setting per line, dotted keys, `#` starts a comment:
//!
//! ```text
//! rounds = 100
//! dropout.rate = 0.75
//! scheme = moderate        # sets both codecs
//! downlink.q = 4           # explicit keys win over the scheme
//! ```
//!
//! Unknown keys and repeated keys are errors. [`Config::to_config_string`]
//! writes every effective setting, so a run can be reproduced from its
//! serialized config alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::codec::{CodecSpec, QuantBits};
use crate::data::{Partition, SyntheticSpec};
use crate::feddrop::LayerShape;
use crate::simulator::{
    DataSpec, ExperimentConfig, MNIST_TEST_IMAGES, MNIST_TEST_LABELS, MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS,
};
use crate::transforms::TransformKind;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}` given twice (line {line})")]
    Duplicate { key: String, line: usize },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

const CODEC_KEYS: [&str; 6] = ["transform", "s", "q", "kashin.iters", "kashin.eta", "kashin.delta"];

const KEYS: &[&str] = &[
    "seed",
    "rounds",
    "clients.total",
    "clients.per_round",
    "local.epochs",
    "local.batch_size",
    "local.lr",
    "dropout.rate",
    "dropout.shared_per_round",
    "scheme",
    "eval_every",
    "arch",
    "partition",
    "threads",
    "data.source",
    "data.dir",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
    "data.classes",
    "data.dim",
    "data.train_per_class",
    "data.test_per_class",
    "data.separation",
    "data.noise",
    "data.seed",
    "output.csv",
    "output.jsonl",
    "report.arch",
    "compare.transforms",
    "compare.s",
    "compare.q",
    "compare.trials",
];

pub fn is_known_key(key: &str) -> bool {
    if KEYS.contains(&key) {
        return true;
    }
    ["downlink.", "uplink."]
        .iter()
        .any(|p| key.strip_prefix(p).is_some_and(|rest| CODEC_KEYS.contains(&rest)))
}

/// Raw settings in the order-independent form they were given.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                text: line.to_string(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    text: line.to_string(),
                });
            }
            if raw.entries.contains_key(key) {
                return Err(ConfigError::Duplicate {
                    key: key.to_string(),
                    line: line_no,
                });
            }
            raw.set(key, value.trim())?;
        }
        Ok(raw)
    }

    /// Sets or replaces one value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !is_known_key(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `--key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, args: &[S]) -> Result<(), ConfigError> {
        for arg in args {
            let arg = arg.as_ref();
            let body = arg.strip_prefix("--").unwrap_or(arg);
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                text: arg.to_string(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| invalid(key, v, e.to_string())))
            .transpose()
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }
}

/// Table 3 compression presets as `(uplink, downlink)` codec specs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    None,
    Aggressive,
    Moderate,
    Conservative,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Some(Scheme::None),
            "aggressive" => Some(Scheme::Aggressive),
            "moderate" => Some(Scheme::Moderate),
            "conservative" => Some(Scheme::Conservative),
            _ => None,
        }
    }

    pub fn specs(self) -> (CodecSpec, CodecSpec) {
        let k = |s, q| CodecSpec::new(TransformKind::Kashin, s, QuantBits::Bits(q));
        match self {
            Scheme::None => (CodecSpec::identity(), CodecSpec::identity()),
            Scheme::Aggressive => (k(0.4, 2), k(1.0, 3)),
            Scheme::Moderate => (k(0.5, 4), k(1.0, 5)),
            Scheme::Conservative => (k(1.0, 8), k(1.0, 8)),
        }
    }
}

/// Architecture used by the `report` command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportArch {
    /// The fully-connected `arch` of the experiment.
    Mlp,
    /// The two-convolution MNIST network.
    MnistCnn,
}

impl ReportArch {
    pub fn layers(self, widths: &[usize]) -> Vec<LayerShape> {
        match self {
            ReportArch::Mlp => LayerShape::mlp(widths),
            ReportArch::MnistCnn => LayerShape::mnist_cnn(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            ReportArch::Mlp => "mlp",
            ReportArch::MnistCnn => "mnist_cnn",
        }
    }
}

/// Grid swept by the `compare` command.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareSpec {
    pub transforms: Vec<TransformKind>,
    pub s: Vec<f32>,
    pub q: Vec<QuantBits>,
    pub trials: usize,
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec {
            transforms: vec![TransformKind::Identity, TransformKind::Hadamard, TransformKind::Kashin],
            s: vec![1.0],
            q: vec![
                QuantBits::Bits(1),
                QuantBits::Bits(2),
                QuantBits::Bits(3),
                QuantBits::Bits(4),
                QuantBits::Bits(8),
            ],
            trials: 1,
        }
    }
}

impl CompareSpec {
    /// Every `(transform, s, q)` combination, transform-major.
    pub fn grid(&self) -> Vec<CodecSpec> {
        let mut out = Vec::new();
        for &t in &self.transforms {
            for &s in &self.s {
                for &q in &self.q {
                    out.push(CodecSpec::new(t, s, q));
                }
            }
        }
        out
    }
}

/// Everything a config file can say.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub experiment: ExperimentConfig,
    pub output_csv: Option<String>,
    pub output_jsonl: Option<String>,
    pub report_arch: ReportArch,
    pub compare: CompareSpec,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            experiment: ExperimentConfig::default(),
            output_csv: None,
            output_jsonl: None,
            report_arch: ReportArch::Mlp,
            compare: CompareSpec::default(),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(key, v, "expected true or false")),
    }
}

fn parse_q(key: &str, v: &str) -> Result<QuantBits, ConfigError> {
    if v.eq_ignore_ascii_case("raw") || v == "32" {
        return Ok(QuantBits::Raw);
    }
    match v.parse::<u8>() {
        Ok(q @ 1..=16) => Ok(QuantBits::Bits(q)),
        _ => Err(invalid(key, v, "expected 1..=16 or raw")),
    }
}

fn parse_transform(key: &str, v: &str) -> Result<TransformKind, ConfigError> {
    TransformKind::parse(v).ok_or_else(|| invalid(key, v, "expected identity, hadamard or kashin"))
}

fn parse_list<T>(key: &str, v: &str, f: impl Fn(&str, &str) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(invalid(key, v, "empty list"));
    }
    Ok(items)
}

fn parse_arch(key: &str, v: &str) -> Result<Vec<usize>, ConfigError> {
    let widths: Vec<usize> = v
        .split(['-', ','])
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(key, v, e.to_string()))?;
    if widths.len() < 2 || widths.contains(&0) {
        return Err(invalid(key, v, "need at least two positive widths, e.g. 784-512-10"));
    }
    Ok(widths)
}

fn parse_codec(raw: &RawConfig, prefix: &str, base: CodecSpec) -> Result<CodecSpec, ConfigError> {
    let key = |k: &str| format!("{prefix}.{k}");
    let mut spec = base;
    if let Some(v) = raw.get(&key("transform")) {
        spec.transform.kind = parse_transform(&key("transform"), v)?;
    }
    spec.s = raw.or(&key("s"), spec.s)?;
    if let Some(v) = raw.get(&key("q")) {
        spec.q = parse_q(&key("q"), v)?;
    }
    spec.transform.kashin_iters = raw.or(&key("kashin.iters"), spec.transform.kashin_iters)?;
    spec.transform.kashin_eta = raw.or(&key("kashin.eta"), spec.transform.kashin_eta)?;
    spec.transform.kashin_delta = raw.or(&key("kashin.delta"), spec.transform.kashin_delta)?;
    spec.validate()
        .map_err(|e| invalid(prefix, &format!("{spec:?}"), e.to_string()))?;
    Ok(spec)
}

fn write_codec(out: &mut String, prefix: &str, spec: &CodecSpec) {
    let t = &spec.transform;
    let _ = writeln!(out, "{prefix}.transform = {}", t.kind.name());
    let _ = writeln!(out, "{prefix}.s = {}", spec.s);
    let _ = writeln!(out, "{prefix}.q = {}", spec.q);
    let _ = writeln!(out, "{prefix}.kashin.iters = {}", t.kashin_iters);
    let _ = writeln!(out, "{prefix}.kashin.eta = {}", t.kashin_eta);
    let _ = writeln!(out, "{prefix}.kashin.delta = {}", t.kashin_delta);
}

fn join<T: std::fmt::Display>(items: &[T], sep: &str) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep)
}

impl Config {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let d = ExperimentConfig::default();
        let seed = raw.or("seed", d.seed)?;

        let scheme = match raw.get("scheme") {
            Some(v) => Scheme::parse(v)
                .ok_or_else(|| invalid("scheme", v, "expected none, aggressive, moderate or conservative"))?,
            None => Scheme::None,
        };
        let (up, down) = scheme.specs();

        let partition = match raw.get("partition") {
            Some(v) => Partition::parse(v).ok_or_else(|| invalid("partition", v, "expected iid or shards:N"))?,
            None => d.partition,
        };

        let source = raw.get("data.source").unwrap_or("idx");
        let data = match source {
            "idx" => {
                let dir = raw.get("data.dir").unwrap_or("data/mnist");
                let path = |key: &str, file: &str| {
                    raw.get(key)
                        .map(str::to_string)
                        .unwrap_or_else(|| std::path::Path::new(dir).join(file).display().to_string())
                };
                DataSpec::Idx {
                    train_images: path("data.train_images", MNIST_TRAIN_IMAGES),
                    train_labels: path("data.train_labels", MNIST_TRAIN_LABELS),
                    test_images: path("data.test_images", MNIST_TEST_IMAGES),
                    test_labels: path("data.test_labels", MNIST_TEST_LABELS),
                }
            }
            "synthetic" => {
                let spec = SyntheticSpec {
                    num_classes: raw.or("data.classes", 10)?,
                    dim: raw.or("data.dim", 784)?,
                    samples_per_class: raw.or("data.train_per_class", 600)?,
                    separation: raw.or("data.separation", 4.0)?,
                    noise: raw.or("data.noise", 1.0)?,
                    seed: raw.or("data.seed", seed)?,
                };
                spec.validate()
                    .map_err(|e| invalid("data", "synthetic", e.to_string()))?;
                let test_per_class = raw.or("data.test_per_class", 100usize)?;
                if test_per_class == 0 {
                    return Err(invalid("data.test_per_class", "0", "must be positive"));
                }
                DataSpec::Synthetic { spec, test_per_class }
            }
            other => return Err(invalid("data.source", other, "expected idx or synthetic")),
        };

        let experiment = ExperimentConfig {
            seed,
            rounds: raw.or("rounds", d.rounds)?,
            clients_total: raw.or("clients.total", d.clients_total)?,
            clients_per_round: raw.or("clients.per_round", d.clients_per_round)?,
            local_epochs: raw.or("local.epochs", d.local_epochs)?,
            batch_size: raw.or("local.batch_size", d.batch_size)?,
            lr: raw.or("local.lr", d.lr)?,
            dropout_rate: raw.or("dropout.rate", d.dropout_rate)?,
            shared_submodel_per_round: match raw.get("dropout.shared_per_round") {
                Some(v) => parse_bool("dropout.shared_per_round", v)?,
                None => d.shared_submodel_per_round,
            },
            downlink: parse_codec(raw, "downlink", down)?,
            uplink: parse_codec(raw, "uplink", up)?,
            eval_every: raw.or("eval_every", d.eval_every)?,
            arch: match raw.get("arch") {
                Some(v) => parse_arch("arch", v)?,
                None => d.arch,
            },
            data,
            partition,
            threads: raw.or("threads", d.threads)?,
        };
        experiment
            .validate()
            .map_err(|e| invalid("config", "experiment", e.to_string()))?;

        let report_arch = match raw.get("report.arch").unwrap_or("mlp") {
            "mlp" => ReportArch::Mlp,
            "mnist_cnn" => ReportArch::MnistCnn,
            other => return Err(invalid("report.arch", other, "expected mlp or mnist_cnn")),
        };

        let dc = CompareSpec::default();
        let compare = CompareSpec {
            transforms: match raw.get("compare.transforms") {
                Some(v) => parse_list("compare.transforms", v, parse_transform)?,
                None => dc.transforms,
            },
            s: match raw.get("compare.s") {
                Some(v) => parse_list("compare.s", v, |k, x| {
                    x.parse::<f32>()
                        .ok()
                        .filter(|s| *s > 0.0 && *s <= 1.0)
                        .ok_or_else(|| invalid(k, x, "expected a fraction in (0, 1]"))
                })?,
                None => dc.s,
            },
            q: match raw.get("compare.q") {
                Some(v) => parse_list("compare.q", v, parse_q)?,
                None => dc.q,
            },
            trials: raw.or("compare.trials", dc.trials)?,
        };
        if compare.trials == 0 {
            return Err(invalid("compare.trials", "0", "must be positive"));
        }

        Ok(Config {
            experiment,
            output_csv: raw.get("output.csv").map(str::to_string),
            output_jsonl: raw.get("output.jsonl").map(str::to_string),
            report_arch,
            compare,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Config::from_raw(&RawConfig::parse(text)?)
    }

    /// Every effective setting as a config file. Presets are expanded, so
    /// `scheme` never appears.
    pub fn to_config_string(&self) -> String {
        let e = &self.experiment;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("seed", e.seed.to_string());
        kv("rounds", e.rounds.to_string());
        kv("clients.total", e.clients_total.to_string());
        kv("clients.per_round", e.clients_per_round.to_string());
        kv("local.epochs", e.local_epochs.to_string());
        kv("local.batch_size", e.batch_size.to_string());
        kv("local.lr", e.lr.to_string());
        kv("dropout.rate", e.dropout_rate.to_string());
        kv("dropout.shared_per_round", e.shared_submodel_per_round.to_string());
        kv("eval_every", e.eval_every.to_string());
        kv("arch", join(&e.arch, "-"));
        kv("partition", e.partition.to_string());
        kv("threads", e.threads.to_string());
        match &e.data {
            DataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                kv("data.source", "idx".into());
                kv("data.train_images", train_images.clone());
                kv("data.train_labels", train_labels.clone());
                kv("data.test_images", test_images.clone());
                kv("data.test_labels", test_labels.clone());
            }
            DataSpec::Synthetic { spec, test_per_class } => {
                kv("data.source", "synthetic".into());
                kv("data.classes", spec.num_classes.to_string());
                kv("data.dim", spec.dim.to_string());
                kv("data.train_per_class", spec.samples_per_class.to_string());
                kv("data.test_per_class", test_per_class.to_string());
                kv("data.separation", spec.separation.to_string());
                kv("data.noise", spec.noise.to_string());
                kv("data.seed", spec.seed.to_string());
            }
        }
        if let Some(p) = &self.output_csv {
            kv("output.csv", p.clone());
        }
        if let Some(p) = &self.output_jsonl {
            kv("output.jsonl", p.clone());
        }
        kv("report.arch", self.report_arch.name().into());
        let c = &self.compare;
        kv(
            "compare.transforms",
            join(&c.transforms.iter().map(|t| t.name()).collect::<Vec<_>>(), ","),
        );
        kv("compare.s", join(&c.s, ","));
        kv("compare.q", join(&c.q, ","));
        kv("compare.trials", c.trials.to_string());
        write_codec(&mut out, "downlink", &e.downlink);
        write_codec(&mut out, "uplink", &e.uplink);
        out
    }
}
