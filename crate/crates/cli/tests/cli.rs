use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_she-moments"))
}

fn sample(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs");
    status.status.code().expect("exit code")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

/// Column `name` of a CSV with a header row, parsed as floats.
fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let i = r
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    r.records().map(|rec| rec.unwrap()[i].parse().unwrap()).collect()
}

fn key_value(path: &Path, key: &str) -> String {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap())
        .find(|rec| &rec[0] == key)
        .map(|rec| rec[1].to_string())
        .unwrap_or_else(|| panic!("no key {key}"))
}

#[test]
fn missing_config_is_a_config_error() {
    let out = TempDir::new().unwrap();
    let code = bin()
        .arg("kernel")
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap()
        .status
        .code();
    assert_eq!(code, Some(2));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "[kernel]\ntype = \"white_noise\"\n[heat]\nnu = 1.0\nspeed = 3\n",
    );
    assert_eq!(run("kernel", &cfg, dir.path(), &[]), 2);
}

#[test]
fn zero_threads_is_rejected() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        run("kernel", &sample("white_noise.toml"), dir.path(), &["--threads", "0"]),
        2
    );
}

#[test]
fn missing_section_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run("fronts", &sample("riesz_d3.toml"), dir.path(), &[]), 2);
}

#[test]
fn white_noise_k_is_the_heat_kernel_at_the_origin() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run("kernel", &sample("white_noise.toml"), dir.path(), &[]), 0);
    let csv = dir.path().join("kernel.csv");
    let t = column(&csv, "t [time]");
    let k = column(&csv, "k [f]");
    let h = column(&csv, "h1 [f*time]");
    for i in 0..t.len() {
        let g = (2.0 * std::f64::consts::PI * t[i]).powf(-0.5);
        assert!((k[i] - g).abs() <= 1e-10 * g, "t = {}", t[i]);
        let h_exact = (2.0 * t[i] / std::f64::consts::PI).sqrt();
        assert!((h[i] - h_exact).abs() <= 1e-8 * h_exact, "t = {}", t[i]);
    }
    assert!(dir.path().join("kernel.svg").exists());
}

#[test]
fn riesz_k_has_log_log_slope_minus_half_alpha() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run("kernel", &sample("riesz_d3.toml"), dir.path(), &[]), 0);
    let csv = dir.path().join("kernel.csv");
    let t = column(&csv, "t [time]");
    let k = column(&csv, "k [f]");
    for w in 0..t.len() - 1 {
        let slope = (k[w + 1] / k[w]).ln() / (t[w + 1] / t[w]).ln();
        assert!((slope + 0.5).abs() < 1e-9, "slope {slope}");
    }
}

#[test]
fn phase_verdicts() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run("phase", &sample("riesz_d3.toml"), dir.path(), &[]), 0);
    assert_eq!(
        key_value(&dir.path().join("phase.csv"), "verdict"),
        "FULLY_INTERMITTENT_ALL_LAMBDA"
    );
    let dir = TempDir::new().unwrap();
    assert_eq!(run("phase", &sample("ou_d3.toml"), dir.path(), &[]), 0);
    assert_eq!(key_value(&dir.path().join("phase.csv"), "verdict"), "PHASE_TRANSITION");
}

#[test]
fn white_noise_lower_front_index() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run("fronts", &sample("white_noise.toml"), dir.path(), &[]), 0);
    let csv = dir.path().join("fronts.csv");
    let lam = column(&csv, "lambda [1]");
    let lower = column(&csv, "lower_index [length/time]");
    let upper = column(&csv, "upper_index [length/time]");
    for i in 0..lam.len() {
        let c = lower[i] / (lam[i] * lam[i]);
        assert!((c - 0.0847335).abs() < 5e-8, "{c}");
        assert!(lower[i] <= upper[i]);
    }
}

#[test]
fn upsilon_json_output() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        run("upsilon", &sample("ou_d3.toml"), dir.path(), &["--format", "json"]),
        0
    );
    let text = std::fs::read_to_string(dir.path().join("upsilon.json")).unwrap();
    let rows: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(rows.as_array().is_some_and(|a| !a.is_empty()));
}

const DIRAC_BASE: &str = r#"seed = 5
[kernel]
type = "white_noise"
[heat]
nu = 1.0
[measure]
type = "dirac"
at = [0.0]
"#;

#[test]
fn validate_without_noise_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "{DIRAC_BASE}[simulate]\nrho = {{ type = \"linear\", lambda = 0.0 }}\nhalf_width = 5.0\nn_x = 201\nt_max = 0.5\nn_t = 400\nn_paths = 60\ntargets = [ {{ t = 0.5, x = 0.0, xp = 0.0 }}, {{ t = 0.5, x = 0.5, xp = -1.0 }} ]\n"
        ),
    );
    assert_eq!(run("validate", &cfg, dir.path(), &[]), 0);
    let pass = std::fs::read_to_string(dir.path().join("validation.csv")).unwrap();
    assert_eq!(pass.matches(",true").count(), 2);
}

#[test]
fn under_resolved_validation_exits_with_four() {
    // dx = 1 cannot resolve G(0.02, .)
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "{DIRAC_BASE}[simulate]\nrho = {{ type = \"linear\", lambda = 0.0 }}\nhalf_width = 4.0\nn_x = 9\nt_max = 0.02\nn_t = 40\nn_paths = 60\ntargets = [ {{ t = 0.02, x = 0.0, xp = 0.0 }} ]\n"
        ),
    );
    assert_eq!(run("validate", &cfg, dir.path(), &[]), 4);
    assert!(dir.path().join("validation.csv").exists());
}

#[test]
fn unstable_time_step_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "{DIRAC_BASE}[simulate]\nrho = {{ type = \"linear\", lambda = 1.0 }}\nhalf_width = 4.0\nn_x = 161\nt_max = 1.0\nn_t = 10\nn_paths = 60\ntargets = []\n"
        ),
    );
    assert_eq!(run("simulate", &cfg, dir.path(), &[]), 2);
}

#[test]
fn simulation_is_reproducible_and_seeded() {
    let small = format!(
        "{DIRAC_BASE}[simulate]\nrho = {{ type = \"linear\", lambda = 1.0 }}\nhalf_width = 4.0\nn_x = 81\nt_max = 0.25\nn_t = 200\nn_paths = 120\ntargets = [ {{ t = 0.25, x = 0.0, xp = 0.0 }} ]\n"
    );
    let read = |seed: &str| {
        let dir = TempDir::new().unwrap();
        let cfg = write_config(dir.path(), &small);
        assert_eq!(run("simulate", &cfg, dir.path(), &["--seed", seed]), 0);
        std::fs::read(dir.path().join("sim_targets.csv")).unwrap()
    };
    let a = read("9");
    assert_eq!(a, read("9"));
    assert_ne!(a, read("10"));
}
