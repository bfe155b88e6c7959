//! Command-line behaviour: exit codes, configuration handling and output
//! files on small runs.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use edgesplit::ExperimentConfig;
use edgesplit_core::data::Dataset;

const SMALL: &str = r#"
seed = 5

[data]
samples = 300

[training]
clients = 2
rounds = 2
local_epochs = 1

[sweep]
cuts = [4, 8]
client_counts = [1, 3]

[allocator]
devices = 3
weights = [0.5]
power_max_dbm_sweep = [8.0, 12.0]
freq_max_hz_sweep = [1e9, 2e9]
bandwidth_hz_sweep = [10e6, 20e6]
"#;

fn edgesplit(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_edgesplit"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn header_and_rows(path: &Path) -> (String, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    (lines.next().unwrap().to_string(), lines.count())
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["[training]\nbatch = 3", "[training]\ncut = 40", "seed = \"x\"", "[data]\nsplit = [0.5, 0.5, 0.5]"] {
        let out = edgesplit(dir.path(), bad, &["show-config"]);
        assert_eq!(out.status.code(), Some(2), "{bad}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let missing = Command::new(env!("CARGO_BIN_EXE_edgesplit")).args(["compare", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let out = edgesplit(dir.path(), "", &["show-config", "--parallel", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn show_config_round_trips_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgesplit(dir.path(), SMALL, &["show-config", "--seed", "11"]);
    assert!(out.status.success());
    let printed = String::from_utf8(out.stdout).unwrap();
    let cfg = ExperimentConfig::from_toml(&printed).unwrap();
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.training.clients, 2);
    assert_eq!(cfg.out_dir, dir.path().join("out"));
}

#[test]
fn compare_writes_four_aligned_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgesplit(dir.path(), SMALL, &["compare"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (sl_header, sl_rows) = header_and_rows(&dir.path().join("out/sl_metrics.csv"));
    assert_eq!(sl_header, "cut,round,epoch,loss,accuracy,precision,recall,f1,avg_client_sec,total_client_tflops,bytes_up,bytes_down");
    assert_eq!(sl_rows, 2);
    for v in ["fedavg", "fedprox", "fedopt"] {
        let (header, rows) = header_and_rows(&dir.path().join(format!("out/fl_metrics_{v}.csv")));
        assert!(header.starts_with("variant,round,epoch,"));
        assert_eq!(rows, 2);
    }
}

#[test]
fn sweeps_cover_every_point() {
    let dir = tempfile::tempdir().unwrap();
    assert!(edgesplit(dir.path(), SMALL, &["sweep-cut"]).status.success());
    assert!(edgesplit(dir.path(), SMALL, &["sweep-clients"]).status.success());
    let out = edgesplit(dir.path(), SMALL, &["allocate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (header, rows) = header_and_rows(&dir.path().join("out/sweep_cut.csv"));
    assert!(header.ends_with("smashed_bytes_per_batch,client_flops_per_sample"));
    assert_eq!(rows, 4);

    let text = std::fs::read_to_string(dir.path().join("out/sweep_clients.csv")).unwrap();
    let samples: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(samples.len(), 4);
    assert!(samples.iter().all(|s| *s == samples[0]), "coverage differs: {samples:?}");

    let (header, rows) = header_and_rows(&dir.path().join("out/allocate.csv"));
    assert_eq!(header, "axis,value,alpha,energy,time,objective,iterations,converged,carried,infeasible");
    assert_eq!(rows, 6);
}

#[test]
fn exported_splits_import_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgesplit(dir.path(), SMALL, &["gen-data"]);
    assert!(out.status.success());
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let splits = edgesplit::prep::prepare_data(&cfg).unwrap();
    for (name, ds) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        let images = File::open(dir.path().join(format!("out/{name}_images.bin"))).unwrap();
        let labels = BufReader::new(File::open(dir.path().join(format!("out/{name}_labels.csv"))).unwrap());
        let back = Dataset::import(images, labels, ds.seed).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.images, ds.images);
    }
}
