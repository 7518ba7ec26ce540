use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MARKOV_SIR: &str = r#"
[model]
kind = "SIR"
lambda = 1.5
infectious = { family = "exponential", params = [1.0] }
init = { infectious = 0.05 }

[grid]
horizon = 20.0
dt = 0.001
"#;

const SMALL_SIM: &str = r#"
engine = "simulate"

[model]
kind = "SEIR"
lambda = 2.0
latent = { family = "gamma", params = [2.0, 4.0] }
infectious = { family = "lognormal_mean", params = [1.0, 0.5] }
init = { exposed = 0.02, infectious = 0.03 }

[grid]
horizon = 3.0
dt = 0.05

[ensemble]
n = 2000
reps = 8
seed = 11
"#;

fn epilimit(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epilimit"))
        .args(args)
        .env("EPILIMIT_OUTPUT_DIR", out)
        .env_remove("EPILIMIT_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_markovian_sir_passes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "markov.toml", MARKOV_SIR);
    let runs = tmp.path().join("runs");
    let o = epilimit(&["verify", cfg.to_str().unwrap()], &runs);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(runs.join("markov/verify.json"));
    assert!(report["max_sup_norm"].as_f64().unwrap() < 1e-4);
    assert_eq!(report["passed"], true);
    let manifest = json(runs.join("markov/manifest.json"));
    assert_eq!(manifest["status"], "passed");
    assert_eq!(manifest["engine"], "verify");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(fs::read(runs.join("markov/config.toml")).unwrap(), MARKOV_SIR.as_bytes());
}

#[test]
fn failed_check_exits_three_and_still_writes_the_manifest() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{MARKOV_SIR}\n[verify]\ntolerance = 1e-15\n").replace("horizon = 20.0", "horizon = 2.0");
    let cfg = write(&tmp, "strict.toml", &text);
    let runs = tmp.path().join("runs");
    let o = epilimit(&["verify", cfg.to_str().unwrap()], &runs);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(json(runs.join("strict/manifest.json"))["status"], "failed");
}

#[test]
fn zero_step_is_a_validation_error_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "bad.toml", &MARKOV_SIR.replace("dt = 0.001", "dt = 0"));
    let runs = tmp.path().join("runs");
    let o = epilimit(&["fluid", cfg.to_str().unwrap()], &runs);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid.dt"), "{}", stderr(&o));
    assert!(!runs.join("bad").exists());
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let tmp = TempDir::new().unwrap();
    let text = MARKOV_SIR.replace("params = [1.0] }", "params = [1.0], scale = 2.0 }");
    let cfg = write(&tmp, "typo.toml", &text);
    let o = epilimit(&["fluid", cfg.to_str().unwrap()], &tmp.path().join("runs"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.infectious.scale"), "{}", stderr(&o));
}

#[test]
fn reruns_produce_byte_identical_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "sim.toml", SMALL_SIM);
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = epilimit(&["simulate", cfg], &a);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = epilimit(&["--threads", "2", "run", cfg], &b);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = json(a.join("sim/manifest.json"));
    let files: Vec<String> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(files.iter().any(|f| f == "paths.csv"));
    assert!(files.iter().any(|f| f == "fluctuation_stats.csv"));
    let counts = json(a.join("sim/initial_counts.json"));
    assert_eq!(counts["exposed"], 40);
    assert_eq!(counts["infectious"], 60);
    assert_eq!(counts["rounded"], false);
    for f in &files {
        assert_eq!(
            fs::read(a.join("sim").join(f)).unwrap(),
            fs::read(b.join("sim").join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
    let text = fs::read_to_string(a.join("sim/paths.csv")).unwrap();
    assert!(text.starts_with("rep,t,S,E,I,R\n"));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 1 + 8 * 61);
}

#[test]
fn run_directories_need_force_to_be_replaced() {
    let tmp = TempDir::new().unwrap();
    let text = MARKOV_SIR.replace("horizon = 20.0", "horizon = 1.0").replace("dt = 0.001", "dt = 0.01");
    let cfg = write(&tmp, "fl.toml", &text);
    let cfg = cfg.to_str().unwrap();
    let runs = tmp.path().join("runs");
    assert_eq!(epilimit(&["fluid", cfg], &runs).status.code(), Some(0));
    fs::write(runs.join("fl/marker"), "x").unwrap();
    let o = epilimit(&["fluid", cfg], &runs);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));
    assert!(runs.join("fl/marker").exists());
    assert_eq!(epilimit(&["fluid", cfg, "--force"], &runs).status.code(), Some(0));
    assert!(!runs.join("fl/marker").exists());
    let fluid = fs::read_to_string(runs.join("fl/fluid.csv")).unwrap();
    assert!(fluid.starts_with("t,S,I,R,A\n0,0.95,0.05,0,0\n"), "{fluid}");
}

#[test]
fn engine_key_must_agree_with_the_subcommand() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "sim.toml", SMALL_SIM);
    let o = epilimit(&["fluid", cfg.to_str().unwrap()], &tmp.path().join("runs"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("engine"));
    let cfg = write(&tmp, "plain.toml", MARKOV_SIR);
    let o = epilimit(&["run", cfg.to_str().unwrap()], &tmp.path().join("runs"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn equilibrium_engine_reports_the_closed_form_point() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
[model]
kind = "SIS"
lambda = 2.0
infectious = { family = "lognormal_mean", params = [1.0, 0.5] }
initial_laws = "stationary"
init = { infectious = 0.1 }

[grid]
horizon = 30.0
dt = 0.01

[verify]
tolerance = 1e-4
"#;
    let cfg = write(&tmp, "sis.toml", text);
    let runs = tmp.path().join("runs");
    let o = epilimit(&["equilibrium", cfg.to_str().unwrap()], &runs);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rep = json(runs.join("sis/equilibrium.json"));
    assert!((rep["point"]["i"].as_f64().unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(rep["identities"]["passed"], true);
    assert_eq!(rep["stationary_initial_laws"], true);
    assert!(rep["fluid_distance"].as_f64().unwrap() < 1e-3);
}

#[test]
fn fclt_and_rate_engines_write_their_reports() {
    let tmp = TempDir::new().unwrap();
    let runs = tmp.path().join("runs");
    let fclt = MARKOV_SIR.replace("horizon = 20.0", "horizon = 2.0").replace("dt = 0.001", "dt = 0.1")
        + "\n[ensemble]\nreps = 20\nseed = 5\n\n[fclt]\nkeep_drivers = true\n";
    let cfg = write(&tmp, "fc.toml", &fclt);
    let o = epilimit(&["fclt", cfg.to_str().unwrap()], &runs);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let drivers = fs::read_to_string(runs.join("fc/drivers.csv")).unwrap();
    assert!(drivers.starts_with("rep,t,"));
    assert_eq!(json(runs.join("fc/ensemble_stats.json"))["reps"], 20);

    let rate = MARKOV_SIR.replace("horizon = 20.0", "horizon = 5.0").replace("dt = 0.001", "dt = 0.05")
        + "\n[ensemble]\nreps = 4\nn_list = [100, 1000, 10000]\n";
    let cfg = write(&tmp, "rt.toml", &rate);
    let o = epilimit(&["rate", cfg.to_str().unwrap()], &runs);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = json(runs.join("rt/rate_fit.json"));
    assert_eq!(fit["errors"].as_array().unwrap().len(), 3);
    assert!(fit["slope"].as_f64().unwrap() < 0.0);
}

#[test]
fn describe_prints_equations_and_laws() {
    let tmp = TempDir::new().unwrap();
    let sir = stdout(&epilimit(&["describe", "SIR"], tmp.path()));
    for needle in ["S(t) = S(0) - A(t)", "I(t) =", "R(t) =", "F0"] {
        assert!(sir.contains(needle), "{needle}");
    }
    let seir = stdout(&epilimit(&["describe", "seir"], tmp.path()));
    for needle in ["Phi(t)", "Psi(t)", "Phi0", "Psi0"] {
        assert!(seir.contains(needle), "{needle}");
    }
    let sis = stdout(&epilimit(&["describe", "SIS"], tmp.path()));
    assert!(sis.contains("S + I = 1"));
    let o = epilimit(&["describe", "SEIRS"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}
