use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn sburgers(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sburgers")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data files of a run (everything but the manifest), by name.
fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

/// Every file is listed in the manifest and every record carries its hash.
fn assert_no_orphans(dir: &Path) {
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap();
    let listed: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for (name, bytes) in data_files(dir) {
        assert!(listed.contains(&name.as_str()), "{name} missing from manifest");
        let text = String::from_utf8(bytes).unwrap();
        if name.ends_with(".csv") {
            for line in text.lines().skip(1) {
                assert!(line.starts_with(hash), "{name}: {line}");
            }
        } else {
            for line in text.lines() {
                let v: Value = serde_json::from_str(line).unwrap();
                assert_eq!(v["config_hash"], hash, "{name}");
            }
        }
    }
}

#[test]
fn minimal_config_gives_zero_states() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = configs().join("minimal.toml");
    let o = sburgers(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csvs: Vec<_> = data_files(&out).into_keys().filter(|n| n.ends_with(".csv")).collect();
    assert_eq!(csvs, vec!["trajectory_0000.csv"]);
    let text = fs::read_to_string(out.join("trajectory_0000.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "config_hash,time,a_1,a_2,a_3,a_4,norm_h,norm_v,tail_energy");
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert!(fields[2..].iter().all(|f| f.parse::<f64>().unwrap() == 0.0), "{line}");
    }
    assert_eq!(fs::read_to_string(out.join("jumps_0000.jsonl")).unwrap(), "");
    assert_no_orphans(&out);
}

#[test]
fn repeated_runs_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 9\n[model]\nn_modes = 8\nhorizon = 0.2\n[jumps]\n[experiment]\nn_traj = 3\n",
    );
    let mut runs = Vec::new();
    for (i, threads) in ["1", "3", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("r{i}"));
        let o = sburgers(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_no_orphans(&out);
        runs.push(data_files(&out));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
    let other = tmp.path().join("other");
    let o = sburgers(&["simulate", "--config", &cfg, "--out", other.to_str().unwrap(), "--seed", "10"]);
    assert!(o.status.success());
    assert_ne!(data_files(&other), runs[0]);
}

#[test]
fn missing_jump_block_runs_without_jumps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[model]\nn_modes = 4\nhorizon = 0.5\n");
    let out = tmp.path().join("r");
    let o = sburgers(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("jumps_0000.jsonl")).unwrap(), "");
    let text = fs::read_to_string(out.join("trajectory_0000.csv")).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').skip(2).take(4).map(|f| f.parse().unwrap()).collect();
    assert!(last.iter().any(|v| *v != 0.0));
}

#[test]
fn semantically_equal_configs_share_a_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "a.toml", "seed = 2\n[model]\nn_modes = 4\nhorizon = 0.1\n[gaussian]\nq = 2.0\nb0 = 0.5\n");
    let b = write_config(tmp.path(), "b.toml", "[gaussian]\nb0 = 0.5\nq = 2.0\n[model]\nhorizon = 0.1\nn_modes = 4\n");
    let hash = |cfg: &str, name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = sburgers(&["simulate", "--config", cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash(&a, "a", "2"), hash(&b, "b", "2"));
    assert_ne!(hash(&a, "c", "2"), hash(&a, "d", "3"));
}

#[test]
fn malformed_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[model]\ndt = \"small\"\n");
    let o = sburgers(&["simulate", "--config", &cfg, "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.dt"), "{}", stderr(&o));
    let o = sburgers(&["simulate", "--config", tmp.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn blow_up_exits_nonzero_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[model]\nn_modes = 16\ndt = 0.01\nhorizon = 1.0\ninitial = { kind = \"modes\", terms = [{ k = 1, value = 1000.0 }] }\n",
    );
    let out = tmp.path().join("r");
    let o = sburgers(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("blew up"));
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["blow_ups"], 1);
    assert_no_orphans(&out);
}

fn verify_config(extra: &str) -> String {
    format!(
        "seed = 4\n[model]\nn_modes = 16\nhorizon = 0.5\n[jumps]\n[experiment]\nn_states = 200\nn_traj = 4\nmc_traj = 200\n{extra}"
    )
}

#[test]
fn verify_passes_on_the_default_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &verify_config(""));
    let out = tmp.path().join("r");
    let o = sburgers(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("verify.jsonl")).unwrap();
    let records: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(records.iter().filter(|r| r.get("failures").is_some()).all(|r| r["failures"] == 0));
    assert!(records.iter().filter(|r| r.get("holds_3se").is_some()).all(|r| r["holds_3se"] == true));
    assert_eq!(fs::read_to_string(out.join("failures.csv")).unwrap().lines().count(), 1);
    assert_no_orphans(&out);
}

#[test]
fn verify_flags_a_corrupted_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &verify_config("c1_override = 0.5\n"));
    let out = tmp.path().join("r");
    let o = sburgers(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(fs::read_to_string(out.join("failures.csv")).unwrap().lines().count() > 1);
}

#[test]
fn verify_without_states_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &verify_config("").replace("n_states = 200", "n_states = 0"));
    let o = sburgers(&["verify", "--config", &cfg, "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn estimates(dir: &Path) -> Vec<Value> {
    fs::read_to_string(dir.join("estimates.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn sigma2_on_the_linear_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("ou.toml");
    let text = fs::read_to_string(&cfg).unwrap().replace("burn_in = 5.0", "burn_in = 5.0\nn_traj = 16");
    let cfg = write_config(tmp.path(), "ou.toml", &text);
    let out = tmp.path().join("r");
    let o = sburgers(&["estimate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = estimates(&out);
    let value = r[0]["value"].as_f64().unwrap();
    let target = 1.0 / std::f64::consts::PI.powi(4);
    assert!((value / target - 1.0).abs() < 0.1, "σ² = {value}");
    assert_no_orphans(&out);
}

#[test]
fn occupation_of_a_constant_path_is_one_bin() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("minimal.toml");
    let out = tmp.path().join("r");
    let o = sburgers(&["estimate", "--config", cfg.to_str().unwrap(), "--estimator", "occupation", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("occupation.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().ends_with(",1.0000000000000000e0"));
}

#[test]
fn estimator_gates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[model]\nn_modes = 8\nhorizon = 0.1\n[jumps]\n[experiment]\nestimator = \"expmoment\"\nlambda = 2.5\nn_traj = 4\n",
    );
    let o = sburgers(&["estimate", "--config", &cfg, "--out", tmp.path().join("a").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("domain error"), "{}", stderr(&o));

    let o = sburgers(&["estimate", "--config", &cfg, "--estimator", "bogus", "--out", tmp.path().join("b").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma, sigma2, mdp, hitting, expmoment, occupation, tailprobe"));
    assert!(!tmp.path().join("b").exists());
}

#[test]
fn remaining_estimators_emit_records() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 3\n[model]\nn_modes = 8\nhorizon = 2.0\n[jumps]\n[experiment]\nn_traj = 20\nburn_in = 0.5\nt_grid = [0.5, 1.0]\nr_grid = [0.0, 0.1]\n",
    );
    for (name, file) in [("gamma", "decay.csv"), ("mdp", "mdp.csv"), ("tailprobe", "tailprobe.csv"), ("hitting", "hitting.csv")] {
        let out = tmp.path().join(name);
        let o = sburgers(&["estimate", "--config", &cfg, "--estimator", name, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(out.join(file).exists(), "{name}");
        assert!(!estimates(&out).is_empty());
        assert_no_orphans(&out);
    }
}
