//! End-to-end checks of the binary: exit codes, artifact layout, and
//! byte-for-byte reproducibility of every output.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gem_mix(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gem-mix"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, content).unwrap();
    p.display().to_string()
}

const TINY_CONVERGENCE: &str = r#"
kind = "convergence"
name = "conv"
trials = 3
n = 600
snr_grid = [2.0, 5.0]
seed = 9
max_iters = 40

[model]
m = 3
d = 2
ratio = 1.5
"#;

#[test]
fn missing_spec_flag_is_a_spec_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gem_mix(&["convergence"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unparseable_spec_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "bad.toml", "kind = \"convergence\"\nbogus_key = 3\n");
    let out = gem_mix(&["convergence", "--spec", &spec, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spec error"));
}

#[test]
fn kind_mismatch_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "conv.toml", TINY_CONVERGENCE);
    let out = gem_mix(&["bounds", "--spec", &spec, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_generator_exits_one_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "bad_ratio.toml",
        r#"
kind = "convergence"
trials = 2
n = 100
snr_grid = [2.0]
[model]
m = 3
d = 2
ratio = 3.0
"#,
    );
    let out = gem_mix(&["convergence", "--spec", &spec, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn convergence_outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "conv.toml", TINY_CONVERGENCE);
    let run = |out_dir: &str| {
        let out = gem_mix(&["convergence", "--spec", &spec, "--out", out_dir], tmp.path());
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    };
    run("a");
    run("b");
    for name in ["conv_curves.csv", "conv_summary.csv", "conv.svg", "conv_meta.json"] {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(!a.is_empty());
    }
    let curves = fs::read_to_string(tmp.path().join("a/conv_curves.csv")).unwrap();
    assert!(curves.starts_with("snr,t,mean_log_err,sd_log_err"));
    let svg = fs::read_to_string(tmp.path().join("a/conv.svg")).unwrap();
    assert!(svg.starts_with("<svg xmlns"));
    assert!(svg.trim_end().ends_with("</svg>"));
}

#[test]
fn seed_flag_overrides_spec_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "conv.toml", TINY_CONVERGENCE);
    let base = gem_mix(&["convergence", "--spec", &spec, "--out", "a"], tmp.path());
    assert_eq!(base.status.code(), Some(0));
    let seeded = gem_mix(&["convergence", "--spec", &spec, "--out", "c", "--seed", "123"], tmp.path());
    assert_eq!(seeded.status.code(), Some(0));
    let a = fs::read(tmp.path().join("a/conv_curves.csv")).unwrap();
    let c = fs::read(tmp.path().join("c/conv_curves.csv")).unwrap();
    assert_ne!(a, c, "different master seeds must change the curves");
}

#[test]
fn bounds_prints_certificate_table() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "bounds.toml",
        r#"
kind = "bounds"
name = "bounds"
n = 5000
mc_samples = 20000
[model]
m = 3
d = 2
ratio = 1.5
r_min = 28.3
"#,
    );
    let out = gem_mix(&["bounds", "--spec", &spec, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("zeta"));
    assert!(stdout.contains("predicted iterations"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/bounds_report.json")).unwrap())
            .unwrap();
    assert!(report["report"]["gamma"].as_f64().unwrap() > 0.0);
    let predicted = report["companion_run"]["predicted_iterations"].as_u64().unwrap();
    let measured = report["companion_run"]["measured_iterations"].as_u64().unwrap();
    assert!(
        measured <= 2 * predicted.max(1),
        "measured {measured} exceeds twice the predicted {predicted}"
    );
    assert!(tmp.path().join("o/bounds_trajectory.csv").exists());
}

#[test]
fn bounds_without_certificate_still_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "tiny.toml",
        r#"
kind = "bounds"
name = "bounds"
n = 5000
[model]
m = 3
d = 2
ratio = 1.5
r_min = 2.0
"#,
    );
    let out = gem_mix(&["bounds", "--spec", &spec, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("separation too small"));
    let report = fs::read_to_string(tmp.path().join("o/bounds_report.json")).unwrap();
    assert!(report.contains("\"certificate\": \"none\""));
}

#[test]
fn verify_gs_reports_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "gs.toml",
        r#"
kind = "verify-gs"
name = "verify_gs"
seed = 5
mc_samples = 50000
[model]
m = 3
d = 2
ratio = 1.5
r_min = 28.3
"#,
    );
    let out = gem_mix(&["verify-gs", "--spec", &spec, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("o/verify_gs_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["pass"], serde_json::json!(true));
    let trials = fs::read_to_string(tmp.path().join("o/verify_gs_trials.csv")).unwrap();
    assert!(trials.starts_with("trial,displacement,ratio,std_err,skipped"));
}

#[test]
fn rademacher_scaling_tiny_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "rad.toml",
        r#"
kind = "rademacher-scaling"
name = "rad"
trials = 3
seed = 2
n_grid = [200, 400, 800]
d_grid = [2, 3, 4]
multistarts = 3
replications = 2
max_ascent_iters = 40
[model]
m = 3
d = 2
ratio = 1.5
r_min = 5.0
"#,
    );
    let out = gem_mix(&["rademacher-scaling", "--spec", &spec, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("o/rad_scaling.csv")).unwrap();
    assert!(csv.starts_with("quantity,n,d,median,iqr,slope_fit"));
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(tmp.path().join("o/rad_n.svg").exists());
    assert!(tmp.path().join("o/rad_d.svg").exists());
}

#[test]
fn stochastic_tiny_run() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "st.toml",
        r#"
kind = "stochastic"
name = "st"
trials = 3
seed = 4
batch = 1
max_iters = 500
projection_radius = 10.0
[model]
weights = [1.0]
means = [[0.0, 0.0]]
dim = 2
"#,
    );
    let out = gem_mix(&["stochastic", "--spec", &spec, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("o/st_curve.csv")).unwrap();
    assert!(csv.starts_with("t,mean_sq_err"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("slope"));
}

#[test]
fn suite_manifest_checksums_are_stable_and_failures_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "suite.toml",
        r#"
[[experiments]]
kind = "convergence"
name = "conv"
trials = 2
n = 400
snr_grid = [2.0, 5.0]
seed = 9
max_iters = 30
[experiments.model]
m = 3
d = 2
ratio = 1.5

[[experiments]]
kind = "region-probe"
name = "probe"
trials = 2
n = 400
seed = 9
max_iters = 30
eps_grid = [0.0, 0.1]
[experiments.model]
m = 3
d = 2
ratio = 1.5
r_min = 5.0

[[experiments]]
kind = "region-probe"
name = "broken"
trials = 2
n = 400
[experiments.model]
weights = [0.5, 0.5]
means = [[0.0, 0.0], [5.0, 0.0]]
dim = 2
"#,
    );
    let run = |out_dir: &str| {
        let out = gem_mix(&["suite", "--spec", &spec, "--out", out_dir], tmp.path());
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    };
    run("s1");
    run("s2");
    let m1: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("s1/manifest.json")).unwrap())
            .unwrap();
    let m2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("s2/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m1, m2, "manifests differ across identical suite runs");
    let exps = m1["experiments"].as_array().unwrap();
    assert_eq!(exps.len(), 3);
    assert_eq!(exps[0]["status"], "ok");
    assert_eq!(exps[1]["status"], "ok");
    // The two-component probe cannot straddle a third center.
    assert_eq!(exps[2]["status"], "error");
    assert!(exps[0]["artifacts"].as_array().unwrap().len() >= 4);
    for a in exps[0]["artifacts"].as_array().unwrap() {
        assert_eq!(a["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn repo_example_specs_parse() {
    let specs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    for entry in fs::read_dir(specs).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        if text.contains("[[experiments]]") {
            toml::from_str::<gem_mix::spec::SuiteSpec>(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        } else {
            toml::from_str::<gem_mix::spec::ExperimentSpec>(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}
