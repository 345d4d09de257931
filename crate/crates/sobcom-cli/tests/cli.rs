//! End-to-end checks of the `sobcom` binary: the documented example
//! invocations, byte-level determinism of the output files, thread-count
//! independence of sweeps, and the exit-code contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sobcom"))
}

/// Fresh per-test output directory under the system temp dir.
fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sobcom-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary launches")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not a JSON object: {e}\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// All regular files under a directory, as relative path -> bytes.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, map: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, map);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                map.insert(rel, std::fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut map = BTreeMap::new();
    walk(dir, dir, &mut map);
    map
}

#[test]
fn ground_state_example_reports_positive_kappa() {
    let dir = tmp("gs");
    let out = run(&[
        "ground-state", "--p", "2", "--q", "4", "--manifold", "euclidean", "--dim", "3",
        "--out", dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let summary = stdout_json(&out);
    let kappa = summary["kappa"].as_f64().expect("kappa in summary");
    assert!(kappa > 0.0, "kappa {kappa}");
    // the same summary lands on disk, next to the solution profiles
    let on_disk: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk["kappa"], summary["kappa"]);
    for file in ["manifest.json", "solution.csv", "minimizer.csv"] {
        assert!(dir.join(file).is_file(), "missing {file}");
    }
}

#[test]
fn psi_example_matches_unit_sphere_area() {
    let dir = tmp("psi");
    let out = run(&["psi", "--map", "radial", "--dim", "3", "--z", "1", "--out", dir.to_str().unwrap()]);
    assert_success(&out);
    let summary = stdout_json(&out);
    let psi = summary["psi"][0].as_f64().expect("psi value");
    let expected = 4.0 * std::f64::consts::PI;
    assert!(
        (psi - expected).abs() <= 0.02 * expected,
        "psi {psi} vs sphere area {expected}"
    );
    let csv = std::fs::read_to_string(dir.join("weight.csv")).unwrap();
    assert!(csv.starts_with("z0,psi,stderr,method\r\n"), "header: {}", csv.lines().next().unwrap());
}

#[test]
fn delta_example_decreases_along_the_exhaustion() {
    let dir = tmp("delta");
    let out = run(&[
        "delta-r", "--map", "radial", "--dim", "2", "--A", "10", "--A", "20", "--r", "1",
        "--out", dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let summary = stdout_json(&out);
    let d10 = summary["delta"][0].as_f64().unwrap();
    let d20 = summary["delta"][1].as_f64().unwrap();
    assert!(d20 < d10, "delta did not decrease: {d10} -> {d20}");
    assert!(dir.join("A_10").join("result.json").is_file());
    assert!(dir.join("A_20").join("result.json").is_file());
    assert!(dir.join("deltas.csv").is_file());
}

#[test]
fn identical_invocations_write_identical_bytes() {
    let dir = tmp("det");
    let args = [
        "psi", "--map", "lp-radial", "--ell", "4", "--dim", "2", "--z", "1", "--z", "2",
        "--samples", "20000", "--seed", "99", "--out",
    ];
    let path = dir.to_str().unwrap();
    assert_success(&run(&[&args[..], &[path]].concat()));
    let first = snapshot(&dir);
    assert!(first.len() >= 3, "expected several output files, got {:?}", first.keys());
    std::fs::remove_dir_all(&dir).unwrap();
    assert_success(&run(&[&args[..], &[path]].concat()));
    let second = snapshot(&dir);
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>(),
        "file sets differ"
    );
    for (name, bytes) in &first {
        assert_eq!(bytes, &second[name], "file {name} differs between identical runs");
    }
    // a different seed must actually move the Monte Carlo estimate
    let other = tmp("det-seed");
    let mut reseeded: Vec<&str> = args.to_vec();
    let seed_pos = reseeded.iter().position(|a| *a == "--seed").unwrap();
    reseeded[seed_pos + 1] = "100";
    let out = bin().args(&reseeded).arg(other.to_str().unwrap()).output().unwrap();
    assert_success(&out);
    let changed = std::fs::read(other.join("weight.csv")).unwrap();
    assert_ne!(&changed, &first["weight.csv"], "seed change left estimates untouched");
}

#[test]
fn sweep_results_do_not_depend_on_thread_count() {
    let serial = tmp("thr1");
    let pooled = tmp("thr3");
    let base = [
        "delta-r", "--map", "radial", "--dim", "2", "--A", "6", "--A", "9", "--A", "12",
        "--num-samples", "20000", "--den-samples", "80000",
    ];
    assert_success(&bin().args(base).args(["--threads", "1", "--out", serial.to_str().unwrap()]).output().unwrap());
    assert_success(&bin().args(base).args(["--threads", "3", "--out", pooled.to_str().unwrap()]).output().unwrap());
    for file in ["deltas.csv", "summary.json", "A_6/result.json", "A_9/result.json", "A_12/result.json"] {
        let a = std::fs::read(serial.join(file)).unwrap();
        let b = std::fs::read(pooled.join(file)).unwrap();
        assert_eq!(a, b, "{file} depends on the thread count");
    }
}

#[test]
fn net_build_covers_and_separates() {
    let dir = tmp("net");
    let out = run(&["net-build", "--dim", "2", "--out", dir.to_str().unwrap()]);
    assert_success(&out);
    let summary = stdout_json(&out);
    assert_eq!(summary["separated"], serde_json::json!(true));
    assert!(summary["covering_fraction"].as_f64().unwrap() >= 0.999);
    assert!(summary["quasiorbits"].as_u64().unwrap() >= 2);
    let csv = std::fs::read_to_string(dir.join("net.csv")).unwrap();
    assert!(csv.starts_with("x0,x1,quasiorbit\r\n"));
    assert!(dir.join("net.json").is_file());
}

#[test]
fn quasisym_separates_positive_and_negative_profiles() {
    let shell = run(&["quasisym", "--out", tmp("qs-pos").to_str().unwrap()]);
    assert_success(&shell);
    assert_eq!(stdout_json(&shell)["satisfied"], serde_json::json!(true));
    let offset = run(&["quasisym", "--profile", "offset", "--out", tmp("qs-neg").to_str().unwrap()]);
    assert_success(&offset);
    assert_eq!(stdout_json(&offset)["satisfied"], serde_json::json!(false));
}

#[test]
fn exit_codes_follow_the_contract() {
    // unknown subcommand: validation failure, usage on stderr
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("ERR:"), "stderr: {err}");
    assert!(err.contains("Usage"), "no usage text: {err}");

    // missing required flag
    let out = run(&["psi", "--map", "radial", "--dim", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ERR:"));

    // config rejected by the library
    let out = run(&[
        "psi", "--map", "bulged", "--dim", "3", "--z", "1",
        "--out", tmp("bad-map").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ERR: config"));

    // numerical condition at runtime: iteration budget too small
    let out = run(&[
        "ground-state", "--dim", "3", "--max-iter", "3",
        "--out", tmp("bad-budget").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ERR: budget"));

    // help and version succeed on stdout
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    let out = run(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
}
