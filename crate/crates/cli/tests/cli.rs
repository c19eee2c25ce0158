use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[model]
type = "lorenz96"
d_x = 8

[integration]
h = 0.01

[filter]
N = 40

[run]
M = 8
seed = 3
spinup = 0.5
"#;

fn cpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpf")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn simulate_and_filter_are_deterministic_across_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let mut runs = Vec::new();
    for (k, mode) in ["seq", "auto", "seq"].iter().enumerate() {
        let data = tmp.path().join(format!("data{k}"));
        let out = tmp.path().join(format!("out{k}"));
        let o = cpf(&["simulate", "--config", &cfg, "--out", s(&data), "--parallel", mode]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for alg in ["bootstrap", "auxiliary", "constrained-barrier"] {
            let o = cpf(&[
                "filter", "--config", &cfg, "--data", s(&data), "--out", s(&out.join(alg)), "--parallel", mode,
                "--algorithm", alg, "--kde", "1:4,8:8",
            ]);
            assert!(o.status.success(), "{alg}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let mut all = files(&data);
        for alg in ["bootstrap", "auxiliary", "constrained-barrier"] {
            all.extend(files(&out.join(alg)));
        }
        runs.push(all);
    }
    assert_eq!(runs[0].len(), 3 + 3 * 4);
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn csv_outputs_carry_metadata_and_header() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    assert!(cpf(&["simulate", "--config", &cfg, "--out", s(&data)]).status.success());
    assert!(cpf(&["filter", "--config", &cfg, "--data", s(&data), "--out", s(&out), "--kde", "2:5"]).status.success());
    for f in [data.join("truth.csv"), data.join("observations.csv"), data.join("H.csv"), out.join("estimates.csv"), out.join("diagnostics.csv"), out.join("kde.csv")] {
        let text = std::fs::read_to_string(&f).unwrap();
        let mut lines = text.lines();
        let meta = lines.next().unwrap();
        assert!(meta.starts_with("# config_hash=") && meta.ends_with(" seed=3"), "{f:?}: {meta}");
        assert!(lines.next().unwrap().chars().next().unwrap().is_alphabetic(), "{f:?}");
    }
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("record.json")).unwrap()).unwrap();
    assert_eq!(record["seed"], 3);
    assert_eq!(record["steps_completed"], 8);
    assert!(record["nmse"].as_f64().unwrap().is_finite());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let bad = write_config(tmp.path(), &TINY.replace("N = 40", "N = 0"));
    let o = cpf(&["simulate", "--config", &bad, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("filter.N"));
    let unknown = write_config(tmp.path(), &format!("{TINY}\n[extra]\nx = 1\n"));
    assert_eq!(cpf(&["simulate", "--config", &unknown, "--out", s(&out)]).status.code(), Some(2));
    let missing = tmp.path().join("nope.toml");
    assert_eq!(cpf(&["simulate", "--config", s(&missing), "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn infeasible_constraint_exits_3_with_step_index() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("N = 40", "N = 40\nalgorithm = \"constrained-rejection\"\nmax_attempts = 5\n[filter.constraint]\nthreshold = 100.0");
    let cfg = write_config(tmp.path(), &text);
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    assert!(cpf(&["simulate", "--config", &cfg, "--out", s(&data)]).status.success());
    let o = cpf(&["filter", "--config", &cfg, "--data", s(&data), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("step 1") && err.contains("infeasible"), "{err}");
    assert!(out.join("record.json").exists());
}

#[test]
fn data_inconsistent_with_config_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let data = tmp.path().join("data");
    assert!(cpf(&["simulate", "--config", &cfg, "--out", s(&data)]).status.success());
    let other = tmp.path().join("other");
    std::fs::create_dir_all(&other).unwrap();
    let cfg10 = write_config(&other, &TINY.replace("d_x = 8", "d_x = 10"));
    let o = cpf(&["filter", "--config", &cfg10, "--data", s(&data), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn benchmark_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("seed = 3", "seed = 3\nrepetitions = 2") + "\n[benchmark]\ndims = [8]\nalgorithms = [\"bootstrap\"]\n";
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("bench");
    let o = cpf(&["benchmark", "--config", &cfg, "--out", s(&out), "--paper-mode"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("benchmark.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "d_x,algorithm,reps,mean_nmse,std_nmse,degenerate_runs");
    assert!(lines[2].starts_with("8,bootstrap,2,"));
}

#[test]
fn verify_suite_passes_and_unknown_suite_is_rejected() {
    let o = cpf(&["verify", "constraint-gap"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("[PASS]"));
    assert_eq!(cpf(&["verify", "bogus"]).status.code(), Some(2));
}
