use std::fs;
use std::process::{Command, Output};

fn clampmrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clampmrf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_ok(args: &[&str]) -> String {
    let out = clampmrf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn log_z(report: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix("log_z: "))
        .expect("log_z line")
        .parse()
        .unwrap()
}

#[test]
fn exact_on_symmetric_k5() {
    let out = stdout_ok(&["infer", "--family", "complete", "--n", "5", "--w-uniform", "6", "--method", "exact"]);
    // Brute force over 32 states with W=6 on every edge of K5.
    let states: Vec<f64> = (0..32u32)
        .map(|s| {
            let bits: Vec<u32> = (0..5).map(|i| (s >> i) & 1).collect();
            let mut e = 0.0;
            for i in 0..5 {
                for j in i + 1..5 {
                    if bits[i] == bits[j] {
                        e += 3.0;
                    }
                }
            }
            e
        })
        .collect();
    let m = states.iter().cloned().fold(f64::MIN, f64::max);
    let want = m + states.iter().map(|e| (e - m).exp()).sum::<f64>().ln();
    assert!((log_z(&out) - want).abs() < 1e-9, "{out}");
}

#[test]
fn trw_is_exact_on_a_tree_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tree.uai");
    let p = path.to_str().unwrap();
    stdout_ok(&["gen", "--family", "grid", "--rows", "1", "--cols", "6", "--open", "--seed", "3", "--out", p]);
    let exact = log_z(&stdout_ok(&["infer", "--model", p, "--method", "exact"]));
    let trw = log_z(&stdout_ok(&["infer", "--model", p, "--method", "trw"]));
    let bethe = log_z(&stdout_ok(&["infer", "--model", p, "--method", "bethe"]));
    assert!((exact - trw).abs() < 1e-6, "{exact} vs {trw}");
    assert!((exact - bethe).abs() < 1e-6, "{exact} vs {bethe}");
}

#[test]
fn mean_field_is_deterministic_per_seed() {
    let args = ["infer", "--family", "erdos", "--n", "10", "--seed", "7", "--method", "mf"];
    assert_eq!(log_z(&stdout_ok(&args)), log_z(&stdout_ok(&args)));
}

#[test]
fn generated_model_round_trips_through_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let uai = dir.path().join("m.uai");
    let native = dir.path().join("m.mrf");
    for path in [&uai, &native] {
        stdout_ok(&["gen", "--family", "regular", "--n", "8", "--degree", "3", "--seed", "2", "--out", path.to_str().unwrap()]);
    }
    let direct = log_z(&stdout_ok(&["infer", "--family", "regular", "--n", "8", "--degree", "3", "--seed", "2", "--method", "exact"]));
    for path in [&uai, &native] {
        let loaded = log_z(&stdout_ok(&["infer", "--model", path.to_str().unwrap(), "--method", "exact"]));
        assert!((direct - loaded).abs() < 1e-9);
    }
}

#[test]
fn clamp_csv_is_byte_identical_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        stdout_ok(&[
            "clamp", "--family", "grid", "--n", "3", "--runs", "2", "--rounds", "2", "--methods", "mf,trw",
            "--selector", "maxW,greedy", "--no-timing", "--out", path.to_str().unwrap(),
        ]);
        fs::read(path).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# grid"));
    assert!(text.lines().nth(1).unwrap().starts_with("run,method,selector,round"));
}

#[test]
fn oversized_sweep_is_refused() {
    let out = clampmrf(&["sweep", "--n", "40", "--w-grid", "1"]);
    assert!(!out.status.success());
}

#[test]
fn missing_model_is_an_error() {
    let out = clampmrf(&["infer", "--model", "/nonexistent/model.uai"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
