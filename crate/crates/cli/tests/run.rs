//! End-to-end runs of the `fvqsd` binary on small configurations.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fvqsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fvqsd")).args(args).output().expect("spawn fvqsd")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.conf");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_QSD: &str = "experiment=qsd_accuracy\nn_particles=50\nburn_in=2\nhorizon=4\noracle_resolution=256\nseed=5\n";

#[test]
fn invalid_configs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["experiment=nonsense\n", "experiment=chaos_vs_N\nreplicas=0\n", "experiment=qsd_accuracy\nepsilon=-1\n"] {
        let cfg = write_config(dir.path(), text);
        let out = fvqsd(&["run", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("line"), "{text}");
    }
    let out = fvqsd(&["run", dir.path().join("missing.conf").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(dir.path(), SMALL_QSD);
    assert_eq!(fvqsd(&["run", &cfg, "--dt", "fast"]).status.code(), Some(2));
    assert_eq!(fvqsd(&["validate", &cfg, "--unknown", "1"]).status.code(), Some(2));
}

#[test]
fn runs_are_reproducible_and_fully_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_QSD);
    let mut listings = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = fvqsd(&["run", &cfg, "--output_dir", out_dir.to_str().unwrap()]);
        assert!(matches!(out.status.code(), Some(0) | Some(3)), "{}", String::from_utf8_lossy(&out.stderr));

        let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
        let listed: BTreeSet<String> =
            manifest["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap().to_string()).collect();
        let on_disk: BTreeSet<String> =
            fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        assert_eq!(listed, on_disk);
        assert_eq!(manifest["seed"], 5);
        assert_eq!(manifest["config"]["n_particles"], "50");
        assert!(manifest["code_version"].is_string());

        let verdicts: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("verdict.json")).unwrap()).unwrap();
        let v = &verdicts[0];
        assert_eq!(v["criterion_id"], "A1");
        for key in ["value", "threshold", "pass"] {
            assert!(!v[key].is_null(), "{key}");
        }
        listings.push((out_dir, listed));
    }
    let (a, files) = &listings[0];
    let (b, _) = &listings[1];
    for f in files.iter().filter(|f| f.ends_with(".csv") || *f == "verdict.json") {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment=lyapunov_decay\nn_particles=20\nreplicas=4\nblock_time=0.2\ncadence=20\n",
    );
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(threads);
        let out = fvqsd(&["run", &cfg, "--threads", threads, "--output_dir", out_dir.to_str().unwrap()]);
        assert!(out.status.code().is_some_and(|c| c == 0 || c == 3));
        csvs.push(fs::read(out_dir.join("mean_v_replicas.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn validate_reports_the_assumption_clauses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_QSD);
    let out = fvqsd(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["clauses"].as_array().is_some_and(|c| !c.is_empty()));
}
