use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deferral::dp::ThresholdSet;

const PROBLEM: &str = r#"
[problem]
horizon = 6
demand = 3.0
v_max = 1.0
penalty = { c1 = 0.8, c2 = 0.05 }
tariff = [{ start_interval = 1, buy = 0.4, sell = 0.1 }]

[dg]
model = { kind = "independent", mean = [0.5, 0.6, 0.7, 0.6, 0.5, 0.4], std = [0.3, 0.3, 0.3, 0.3, 0.3, 0.3], g_max = 1.5 }

[grid]
dy = 0.25
g_bins = 6
"#;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format!("version = 1\nseed = 5\n{body}")).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deferral"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env("DEFERRAL_OUTPUT_DIR", out)
        .output()
        .unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn solve_outputs_are_named_headed_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", PROBLEM);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["solve"], &cfg, &a).status.success());
    assert!(run(&["--workers", "1", "solve"], &cfg, &b).status.success());
    let fa = files(&a);
    assert_eq!(fa.len(), 4);
    for f in &fa {
        let name = f.file_name().unwrap().to_str().unwrap();
        assert!(name.starts_with("solve-") && name.contains("-5."), "{name}");
        let other = b.join(name);
        assert_eq!(std::fs::read(f).unwrap(), std::fs::read(other).unwrap(), "{name}");
        if name.ends_with(".csv") {
            assert!(std::fs::read_to_string(f).unwrap().starts_with("# config_hash="));
        }
    }
}

#[test]
fn flat_pure_deferrable_threshold_column_is_the_laxity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", PROBLEM);
    let out = tmp.path().join("out");
    assert!(run(&["solve"], &cfg, &out).status.success());
    let path = files(&out).into_iter().find(|p| p.to_str().unwrap().ends_with(".thresholds.csv")).unwrap();
    let set = ThresholdSet::from_csv(std::fs::File::open(path).unwrap(), 1.5).unwrap();
    for t in 0..6 {
        for b in 0..6 {
            assert_eq!(set.get(t, b).theta_plus, (5 - t) as f64);
        }
    }
}

#[test]
fn seed_changes_names_but_not_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", &format!("{PROBLEM}\n[simulate]\npolicy = \"greedy\"\nepisodes = 10\n"));
    let out = tmp.path().join("out");
    assert!(run(&["simulate"], &cfg, &out).status.success());
    assert!(run(&["simulate", "--seed", "6"], &cfg, &out).status.success());
    let names: Vec<String> = files(&out).iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    let hash = |s: &str| s.split('-').nth(1).unwrap().to_string();
    assert!(names.iter().any(|n| n.ends_with("-5.json")) && names.iter().any(|n| n.ends_with("-6.json")));
    assert!(names.iter().all(|n| hash(n) == hash(&names[0])));
}

#[test]
fn invalid_configs_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let arbitrage = PROBLEM.replace("buy = 0.4, sell = 0.1", "buy = 0.1, sell = 0.4");
    let cases = [
        ("version.toml", PROBLEM.to_string(), "version = 2\n"),
        ("unknown.toml", format!("{PROBLEM}\n[grid2]\nx = 1\n"), ""),
        ("tariff.toml", arbitrage, ""),
        ("grid.toml", PROBLEM.replace("dy = 0.25", "dy = 0.3"), ""),
        ("policy.toml", format!("{PROBLEM}\n[simulate]\npolicy = \"oracle\"\n"), ""),
    ];
    for (name, body, prefix) in cases {
        let path = tmp.path().join(name);
        let text = if prefix.is_empty() { format!("version = 1\n{body}") } else { format!("{prefix}{body}") };
        std::fs::write(&path, text).unwrap();
        let o = run(&["solve"], &path, &out);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stderr_json(&o)["exit_code"], 2);
    }
    let missing = run(&["solve"], &tmp.path().join("nope.toml"), &out);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn oversized_grid_hits_the_budget_guard() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", &format!("{PROBLEM}\n[solver]\nbudget = 1000\n"));
    let o = run(&["solve"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stderr_json(&o)["error"], "budget_exceeded");
}

#[test]
fn compare_lists_the_reference_first_with_zero_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "{PROBLEM}\n[compare]\nepisodes = 200\npolicies = [\"dp\", \"procrastination\", \"greedy\", \"ptrl-checkpoint\"]\n\n[learn]\nepisodes = 160\n"
    );
    let cfg = write_config(tmp.path(), "run.toml", &body);
    let out = tmp.path().join("out");
    assert!(run(&["compare"], &cfg, &out).status.success());
    let table = files(&out).into_iter().find(|p| p.to_str().unwrap().ends_with(".table.csv")).unwrap();
    let text = std::fs::read_to_string(table).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    let first: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(first[0], "dp");
    assert_eq!(first[5], "0");
    assert!(rows[3].starts_with("ptrl-checkpoint,"));
}

#[test]
fn learned_checkpoint_drives_simulate_with_complete_energy_mix() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let learn = write_config(tmp.path(), "learn.toml", &format!("{PROBLEM}\n[learn]\nepisodes = 160\n"));
    let o = run(&["learn"], &learn, &out);
    assert!(o.status.success());
    let ckpt = String::from_utf8(o.stdout).unwrap().lines().find(|l| l.ends_with(".checkpoint.json")).unwrap().to_string();
    let body = format!("{PROBLEM}\n[simulate]\npolicy = \"ptrl-checkpoint\"\nepisodes = 50\ncheckpoint = \"{ckpt}\"\n");
    let sim = write_config(tmp.path(), "sim.toml", &body);
    let o = run(&["simulate"], &sim, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mix = String::from_utf8(o.stdout).unwrap().lines().find(|l| l.ends_with(".energy_mix.csv")).unwrap().to_string();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(mix).unwrap();
    let mut n = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let x: Vec<f64> = (1..=6).map(|i| rec[i].parse().unwrap()).collect();
        assert!((x[0] + x[1] + x[2] + x[3] - x[5]).abs() < 1e-9);
        assert!((x[4] - x[5]).abs() < 1e-9);
        n += 1;
    }
    assert_eq!(n, 50);
}

#[test]
fn fit_dg_recovers_the_bundled_trace_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic_ar1_trace.csv");
    let body = format!("[fit]\ntrace = \"{}\"\nvariant = {{ kind = \"ar1\" }}\n", trace.display());
    let cfg = write_config(tmp.path(), "fit.toml", &body);
    let out = tmp.path().join("out");
    let o = run(&["fit-dg"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&files(&out)[0]).unwrap()).unwrap();
    let m = &json["result"]["model"];
    assert_eq!(m["kind"], "ar1");
    let get = |k: &str| m[k].as_f64().unwrap();
    assert!((get("phi") - 0.7).abs() < 0.05, "{m}");
    assert!((get("c") - 0.3).abs() < 0.05, "{m}");
    assert!((get("sigma") - 0.2).abs() < 0.02, "{m}");
}
