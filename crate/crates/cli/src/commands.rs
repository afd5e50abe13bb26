use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use fedcomp::codec::{compare_representations, decode, encode, golden_cases, CompressedTensor};
use fedcomp::config::{Config, ConfigError, RawConfig, ReportArch};
use fedcomp::feddrop::savings_report;
use fedcomp::model::{evaluate, ModelParams};
use fedcomp::simulator::{run_experiment_with, RoundMetrics, CSV_HEADER};
use fedcomp::{derive_stream, tags};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] fedcomp::Error),
    #[error("golden fixture {0}")]
    Golden(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_USAGE,
            CliError::Io { .. } | CliError::Golden(_) => EXIT_DATA,
            CliError::Core(e) => match e {
                fedcomp::Error::Numeric(_) => EXIT_NUMERIC,
                fedcomp::Error::Idx(_) | fedcomp::Error::Io(_) | fedcomp::Error::Malformed(_) => EXIT_DATA,
                fedcomp::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_USAGE,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn load_config(path: &Path, overrides: &[String]) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut raw = RawConfig::parse(&text)?;
    raw.apply_overrides(overrides)?;
    Ok(Config::from_raw(&raw)?)
}

fn create(path: &str) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(Path::new(path)))
}

fn write_line(out: &mut dyn Write, line: &str, path: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(io_err(Path::new(path)))
}

/// Trains per `config`, streaming metrics to the configured sinks.
fn train(config: &Config) -> Result<(Vec<RoundMetrics>, ModelParams)> {
    let exp = &config.experiment;
    let (train, test) = exp.data.load()?;
    eprintln!(
        "training {} rounds on {} samples ({} test), arch {:?}",
        exp.rounds,
        train.len(),
        test.len(),
        exp.arch
    );

    let csv_path = config.output_csv.as_deref().unwrap_or("<stdout>");
    let mut csv: Box<dyn Write> = match &config.output_csv {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut jsonl = config.output_jsonl.as_deref().map(create).transpose()?;
    write_line(&mut csv, CSV_HEADER, csv_path)?;

    let mut sink_err = None;
    let outcome = run_experiment_with(exp, train, test, |m| {
        let res = write_line(&mut csv, &m.csv_row(), csv_path).and_then(|()| match &mut jsonl {
            Some(j) => write_line(j, &m.json_line(), config.output_jsonl.as_deref().unwrap_or("")),
            None => Ok(()),
        });
        if let Some(acc) = m.accuracy {
            eprintln!(
                "round {:>4}  acc {:.4}  loss {:.4}",
                m.round,
                acc,
                m.loss.unwrap_or(f64::NAN)
            );
        }
        res.map_err(|e| {
            let msg = e.to_string();
            sink_err = Some(e);
            fedcomp::Error::Io(io::Error::other(msg))
        })
    });
    if let Some(e) = sink_err {
        return Err(e);
    }
    let result = outcome?;
    csv.flush().map_err(io_err(Path::new(csv_path)))?;
    if let Some(j) = &mut jsonl {
        j.flush()
            .map_err(io_err(Path::new(config.output_jsonl.as_deref().unwrap_or(""))))?;
    }
    Ok(result)
}

pub fn run(path: &Path, overrides: &[String]) -> Result<()> {
    let config = load_config(path, overrides)?;
    train(&config)?;
    Ok(())
}

pub fn show_config(path: &Path, overrides: &[String]) -> Result<()> {
    print!("{}", load_config(path, overrides)?.to_config_string());
    Ok(())
}

pub fn compare(path: &Path, overrides: &[String]) -> Result<()> {
    let mut config = load_config(path, overrides)?;
    // the sweep prints its own table on stdout
    if config.output_csv.is_none() {
        config.output_csv = Some(
            std::env::temp_dir()
                .join("fedcomp-compare-train.csv")
                .display()
                .to_string(),
        );
    }
    let (_, model) = train(&config)?;
    let (_, test) = config.experiment.data.load()?;
    let grid = config.compare.grid();
    let trials = config.compare.trials;

    let mut l2 = vec![0.0; grid.len()];
    let mut acc = vec![0.0; grid.len()];
    let mut bytes = vec![0; grid.len()];
    let mut eval = |p: &ModelParams| evaluate(p, &test).map(|e| e.accuracy);
    for t in 0..trials {
        let seed = derive_stream(config.experiment.seed, &tags!["compare", t]).next_u64();
        let rows = compare_representations(&model, &grid, seed, Some(&mut eval))?;
        for (i, r) in rows.iter().enumerate() {
            l2[i] += r.l2_error / trials as f64;
            acc[i] += r.accuracy.unwrap_or(f64::NAN) / trials as f64;
            bytes[i] = r.bytes;
        }
    }
    let baseline = evaluate(&model, &test)?.accuracy;
    let full_bytes: usize = model.layers.iter().map(|l| 4 * (l.weights.len() + l.bias.len())).sum();
    println!("# uncompressed: {full_bytes} bytes, accuracy {baseline}");
    println!("transform,s,q,bytes,l2_error,accuracy");
    for (i, spec) in grid.iter().enumerate() {
        println!(
            "{},{},{},{},{},{}",
            spec.transform.kind.name(),
            spec.s,
            spec.q,
            bytes[i],
            l2[i],
            acc[i]
        );
    }
    Ok(())
}

pub fn report(path: &Path, overrides: &[String]) -> Result<()> {
    let config = load_config(path, overrides)?;
    let exp = &config.experiment;
    let layers = config.report_arch.layers(&exp.arch);
    let r = savings_report(&layers, exp.dropout_rate, &exp.downlink, &exp.uplink)?;
    let describe = |s: &fedcomp::codec::CodecSpec| format!("{} s={} q={}", s.transform.kind.name(), s.s, s.q);
    match config.report_arch {
        ReportArch::Mlp => println!("arch        mlp {:?}", exp.arch),
        ReportArch::MnistCnn => println!("arch        mnist_cnn"),
    }
    println!("dropout     rate {}", exp.dropout_rate);
    println!("downlink    {}", describe(&exp.downlink));
    println!("uplink      {}", describe(&exp.uplink));
    println!(
        "parameters  {} -> {} ({:.4} kept)",
        r.params_full, r.params_sub, r.param_ratio
    );
    println!(
        "savings     downlink {:.2}x  uplink {:.2}x  flops {:.2}x",
        r.downlink_ratio, r.uplink_ratio, r.flop_ratio
    );
    println!(
        "on the wire downlink {:.2}x  uplink {:.2}x",
        r.downlink_wire_ratio, r.uplink_wire_ratio
    );
    println!("layer  weights_full  weights_sub  param_ratio  downlink  uplink  flops");
    for (i, l) in r.layers.iter().enumerate() {
        println!(
            "{i:>5}  {:>12}  {:>11}  {:>11.4}  {:>7.2}x  {:>5.2}x  {:>4.2}x",
            l.weights_full, l.weights_sub, l.param_ratio, l.downlink_ratio, l.uplink_ratio, l.flop_ratio
        );
    }
    Ok(())
}

pub fn golden(dir: &Path, regenerate: bool) -> Result<()> {
    if regenerate {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    for case in golden_cases() {
        let c = encode(&case.tensor, &case.spec, &mut case.stream())?;
        let bytes = c.to_bytes()?;
        let decoded = decode(&c)?;
        let record = serde_json::json!({
            "name": case.name,
            "seed": case.seed,
            "transform": case.spec.transform.kind.name(),
            "s": case.spec.s,
            "q": case.spec.q.to_string(),
            "shape": case.tensor.shape(),
            "input": case.tensor.data(),
            "decoded": decoded.data(),
        });
        let text = serde_json::to_string_pretty(&record).expect("json values serialize") + "\n";
        let flc = dir.join(format!("{}.flc", case.name));
        let json = dir.join(format!("{}.json", case.name));
        if regenerate {
            std::fs::write(&flc, &bytes).map_err(io_err(&flc))?;
            std::fs::write(&json, text).map_err(io_err(&json))?;
            println!("wrote {} ({} bytes)", flc.display(), bytes.len());
            continue;
        }
        let stored = std::fs::read(&flc).map_err(io_err(&flc))?;
        if stored != bytes {
            return Err(CliError::Golden(format!(
                "{} differs from a fresh encoding",
                flc.display()
            )));
        }
        let parsed = decode(&CompressedTensor::from_bytes(&stored)?)?;
        if parsed.data() != decoded.data() {
            return Err(CliError::Golden(format!("{} decodes differently", flc.display())));
        }
        println!("ok {}", case.name);
    }
    Ok(())
}
