use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TOY: &str = "\
rounds = 2
arch = 12-16-4
local.lr = 0.05
clients.total = 10
clients.per_round = 4
data.source = synthetic
data.dim = 12
data.classes = 4
data.train_per_class = 50
data.test_per_class = 25
";

fn fedcomp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedcomp"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_streams_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), TOY);
    let out = fedcomp(&["run", "exp.cfg", "--rounds=1"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[0].starts_with("round,acc,loss,down_bytes"));
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn run_writes_csv_and_jsonl_files() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        &format!("{TOY}output.csv = m.csv\noutput.jsonl = m.jsonl\n"),
    );
    let out = fedcomp(&["run", "exp.cfg"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let jsonl = std::fs::read_to_string(dir.path().join("m.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(jsonl.lines().last().unwrap()).unwrap();
    assert_eq!(last["round"], 2);
    assert!(last["acc"].as_f64().is_some());
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &format!("{TOY}scheme = aggressive\ndropout.rate = 0.75\n"));
    let a = fedcomp(&["run", "exp.cfg"], dir.path());
    let b = fedcomp(&["run", "exp.cfg", "--threads=3"], dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unknown_key_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &format!("{TOY}clients.per_rnd = 3\n"));
    let out = fedcomp(&["run", "exp.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("clients.per_rnd"), "{}", stderr(&out));

    write_config(dir.path(), TOY);
    let out = fedcomp(&["report", "exp.cfg", "--dropout.rat=0.5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("dropout.rat"));
}

#[test]
fn bad_usage_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fedcomp(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(fedcomp(&["run"], dir.path()).status.code(), Some(1));
    assert_eq!(fedcomp(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "rounds = 1\ndata.dir = no/such/dir\n");
    let out = fedcomp(&["run", "exp.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no/such/dir"));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), TOY);
    let out = fedcomp(&["run", "exp.cfg", "--local.lr=1e30"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn report_prints_hidden_layer_savings() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "arch = 784-512-512-10\nscheme = moderate\ndropout.rate = 0.75\n",
    );
    let out = fedcomp(&["report", "exp.cfg"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let hidden = text.lines().find(|l| l.trim_start().starts_with("1 ")).unwrap();
    for expected in ["0.5625", "11.38x", "28.44x", "1.78x"] {
        assert!(hidden.contains(expected), "{hidden}");
    }
}

#[test]
fn report_for_the_cnn_preset() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "report.arch = mnist_cnn\ndropout.rate = 0.75\ndownlink.transform = kashin\ndownlink.q = 4\nuplink.transform = kashin\nuplink.s = 0.5\nuplink.q = 4\n");
    let out = fedcomp(&["report", "exp.cfg"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let savings = stdout(&out)
        .lines()
        .find(|l| l.starts_with("savings"))
        .unwrap()
        .to_string();
    assert!(savings.contains("downlink 14.1"), "{savings}");
}

#[test]
fn config_round_trips_through_the_printer() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &format!("{TOY}scheme = conservative\n"));
    let first = fedcomp(&["config", "exp.cfg", "--seed=9"], dir.path());
    assert!(first.status.success());
    std::fs::write(dir.path().join("printed.cfg"), &first.stdout).unwrap();
    let second = fedcomp(&["config", "printed.cfg"], dir.path());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn compare_emits_a_table() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        &format!("{TOY}compare.transforms = hadamard,kashin\ncompare.s = 1\ncompare.q = 2,4\ncompare.trials = 2\n"),
    );
    let out = fedcomp(&["compare", "exp.cfg"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("transform,"), "{text}");
    assert_eq!(rows.len(), 1 + 4);
}

#[test]
fn golden_fixtures_check_out() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let dir = tempfile::tempdir().unwrap();
    let out = fedcomp(&["golden", "--dir", fixtures.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));

    let copy = dir.path().join("golden");
    let out = fedcomp(&["golden", "--dir", copy.to_str().unwrap(), "--regenerate"], dir.path());
    assert!(out.status.success());
    for entry in std::fs::read_dir(&fixtures).unwrap() {
        let path = entry.unwrap().path();
        let fresh = std::fs::read(copy.join(path.file_name().unwrap())).unwrap();
        assert_eq!(fresh, std::fs::read(&path).unwrap(), "{}", path.display());
    }

    std::fs::write(copy.join("identity_raw.flc"), b"FLC1").unwrap();
    let out = fedcomp(&["golden", "--dir", copy.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
}
