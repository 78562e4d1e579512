use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geoinv::experiment::{preset, ExperimentConfig};
use geoinv::Grid;

fn small_config(out: &Path) -> ExperimentConfig {
    let mut cfg = preset("layer3_ds1").unwrap();
    cfg.fine_grid = Grid::new(16).unwrap();
    cfg.inversion_grid = Grid::new(8).unwrap();
    cfg.chains = 2;
    cfg.sweeps = 40;
    cfg.out = out.to_path_buf();
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("config_in.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn geoinv(verb: &str, config: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoinv"))
        .arg(verb)
        .arg("--config")
        .arg(config)
        .args(extra)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn full_pipeline(config: &Path) {
    for verb in ["truth", "observe", "sample", "diagnose", "summarize"] {
        ok(geoinv(verb, config, &[]));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = write_config(tmp.path(), &small_config(&out));
    full_pipeline(&config);
    let first = snapshot(&out);
    std::fs::remove_dir_all(&out).unwrap();
    full_pipeline(&config);
    let second = snapshot(&out);
    assert!(first.contains_key(Path::new("summary.json")));
    assert!(first.contains_key(Path::new("chains/chain_001.csv")));
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (k, v) in &first {
        assert!(second[k] == *v, "{} differs between runs", k.display());
    }
}

#[test]
fn zero_sweeps_gives_empty_history() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = write_config(tmp.path(), &small_config(&out));
    ok(geoinv("truth", &config, &[]));
    ok(geoinv("observe", &config, &[]));
    ok(geoinv("sample", &config, &["--sweeps", "0"]));
    let csv = std::fs::read_to_string(out.join("chains/chain_000.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("sweep,a1,a2,b1,b2,c,kappa1,kappa2,kappa3,misfit"));
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("chains/chain_000.json")).unwrap()).unwrap();
    assert_eq!(side["n_sweeps"], 0);
    assert_eq!(side["forward_solves"], 1);
}

#[test]
fn twin_chains_give_mpsrf_below_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let mut cfg = small_config(&out);
    cfg.chains = 1;
    cfg.sweeps = 2000;
    let config = write_config(tmp.path(), &cfg);
    ok(geoinv("truth", &config, &[]));
    ok(geoinv("observe", &config, &[]));
    ok(geoinv("sample", &config, &[]));
    let chains = out.join("chains");
    for ext in ["csv", "json"] {
        std::fs::copy(chains.join(format!("chain_000.{ext}")), chains.join(format!("chain_001.{ext}"))).unwrap();
    }
    ok(geoinv("diagnose", &config, &[]));
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    let r = diag["mpsrf"].as_f64().unwrap();
    assert!(r < 1.0, "MPSRF {r}");
}

#[test]
fn observe_without_truth_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &small_config(&tmp.path().join("run")));
    let o = geoinv("observe", &config, &[]);
    assert_eq!(o.status.code(), Some(3));
    let o = geoinv("summarize", &config, &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn mismatched_artifacts_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let mut cfg = small_config(&out);
    let config = write_config(tmp.path(), &cfg);
    ok(geoinv("truth", &config, &[]));
    ok(geoinv("observe", &config, &[]));
    cfg.gamma = 1e-3;
    let changed = write_config(tmp.path(), &cfg);
    assert_eq!(geoinv("sample", &changed, &[]).status.code(), Some(4));

    std::fs::write(out.join("data.json"), "{\"not\": \"a data set\"}").unwrap();
    assert_eq!(geoinv("sample", &config, &[]).status.code(), Some(4));
}

#[test]
fn summarize_refuses_mixed_configurations() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = write_config(tmp.path(), &small_config(&out));
    ok(geoinv("truth", &config, &[]));
    ok(geoinv("observe", &config, &[]));
    ok(geoinv("sample", &config, &["--chains", "1"]));
    let chains = out.join("chains");
    std::fs::rename(chains.join("chain_000.csv"), tmp.path().join("keep.csv")).unwrap();
    std::fs::rename(chains.join("chain_000.json"), tmp.path().join("keep.json")).unwrap();
    ok(geoinv("sample", &config, &["--chains", "1", "--sweeps", "20"]));
    std::fs::rename(tmp.path().join("keep.csv"), chains.join("chain_001.csv")).unwrap();
    std::fs::rename(tmp.path().join("keep.json"), chains.join("chain_001.json")).unwrap();
    assert_eq!(geoinv("summarize", &config, &[]).status.code(), Some(4));
}

#[test]
fn invalid_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(&tmp.path().join("run"));
    cfg.fine_grid = cfg.inversion_grid;
    let config = write_config(tmp.path(), &cfg);
    let o = geoinv("truth", &config, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("finer"));

    let garbage = tmp.path().join("garbage.json");
    std::fs::write(&garbage, "{").unwrap();
    assert_eq!(geoinv("truth", &garbage, &[]).status.code(), Some(2));

    let good = write_config(tmp.path(), &small_config(&tmp.path().join("run")));
    assert_eq!(geoinv("sample", &good, &["--chains", "0"]).status.code(), Some(2));
}

#[test]
fn truth_matches_the_published_layer_model() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = write_config(tmp.path(), &small_config(&out));
    ok(geoinv("truth", &config, &[]));
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("truth.json")).unwrap()).unwrap();
    let g = &t["parameters"]["geometry"];
    assert_eq!(g["a"], serde_json::json!([0.39, 0.35]));
    assert_eq!(g["b"], serde_json::json!([0.18, 0.6]));
    assert_eq!(g["c"], 0.15);
    assert_eq!(t["parameters"]["perm"]["values"], serde_json::json!([12.0, 1.0, 5.0]));
    let kappa = std::fs::read_to_string(out.join("kappa_true.csv")).unwrap();
    assert!(kappa.lines().count() >= 16);
}

#[test]
fn channel_pipeline_with_fields_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let mut cfg = preset("channel").unwrap();
    cfg.fine_grid = Grid::new(12).unwrap();
    cfg.inversion_grid = Grid::new(8).unwrap();
    for p in &mut cfg.prior.perm {
        if let geoinv::priors::PermPrior::GaussianField { modes, .. } = p {
            *modes = 20;
        }
    }
    cfg.chains = 2;
    cfg.sweeps = 30;
    cfg.out = out.clone();
    cfg.kl_cache = Some(tmp.path().join("kl"));
    let config = write_config(tmp.path(), &cfg);
    full_pipeline(&config);
    let first = snapshot(&out);
    std::fs::remove_dir_all(&out).unwrap();
    full_pipeline(&config);
    assert_eq!(first, snapshot(&out));
    let header = String::from_utf8(first[Path::new("chains/chain_000.csv")].clone()).unwrap();
    assert!(header.starts_with("sweep,d1,d2,d3,d4,d5,xi1_1,"));
}
