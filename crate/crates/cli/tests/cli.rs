use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pursuit_cli::commands::{cmd_calibrate, cmd_mdp, matrix_path};
use pursuit_cli::ExperimentConfig;
use pursuit_core::policy::CacheStatus;
use pursuit_core::target::TransitionMatrix;

fn pursuit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pursuit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    let text = format!("out = \"{}\"\n{body}", dir.join("out").display());
    fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = r#"
episodes = 6
jobs = 1
max_steps = 300

[grid]
side = 11

[sweep]
persistence_times = [5.0]
weights = [0.0, 0.5, 1.0]
alphas = [0.1, 0.5]
"#;

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn mdp_cache_is_idempotent_and_self_healing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    cfg.out = dir.path().to_path_buf();
    cfg.sweep.persistence_times = vec![2.0, 5.0, 10.0, 25.0];
    let first = cmd_mdp(&cfg, false).unwrap();
    assert_eq!(first.len(), 4);
    assert!(first.iter().all(|e| e.status == CacheStatus::Miss));
    let second = cmd_mdp(&cfg, false).unwrap();
    assert!(second.iter().all(|e| e.status == CacheStatus::Hit));
    assert_eq!(fs::read_dir(cfg.cache_dir()).unwrap().count(), 4);

    let victim = &second[1].path;
    let mut bytes = fs::read(victim).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x5a;
    fs::write(victim, bytes).unwrap();
    let third = cmd_mdp(&cfg, false).unwrap();
    assert_eq!(third[1].status, CacheStatus::Rebuilt);
    assert!(third.iter().enumerate().all(|(k, e)| k == 1 || e.status == CacheStatus::Hit));
}

#[test]
fn run_needs_cache_or_auto_build() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = pursuit(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing Q-table cache"));

    let out = pursuit(&["mdp", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = pursuit(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_sweep_best_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("per_episode = true\nccdf = true\njson = true\n{SMALL}");
    let cfg = write_config(dir.path(), &body);
    let out = pursuit(&["run", "--config", cfg.to_str().unwrap(), "--auto-build", "--seed", "11"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.path().join("out");

    let sweep = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let hash = ExperimentConfig::load(&cfg).map(|mut c| {
        c.seed = 11;
        c.hash()
    });
    assert!(sweep.contains(&format!("# config_sha256 {}", hash.unwrap())));
    assert!(sweep.lines().next().unwrap().starts_with("# pursuit v"));
    let rows = data_lines(&sweep);
    assert_eq!(rows[0], "tau_p,speed_ratio,w,mean_T,stderr,capture_fraction,truncated,n");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("5,,0,"));
    assert!(rows[3].starts_with("5,,1,"));

    let best = fs::read_to_string(out_dir.join("best.csv")).unwrap();
    let b = data_lines(&best);
    assert_eq!(b.len(), 3);
    assert!(b[1].starts_with("best,5,,"));
    assert!(b[2].starts_with("infotaxis,5,,0,"));

    for w in ["0", "0.5", "1"] {
        let ccdf = fs::read_to_string(out_dir.join(format!("ccdf_tp5_w{w}.csv"))).unwrap();
        let values: Vec<f64> = data_lines(&ccdf)[1..]
            .iter()
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(values[0], 1.0);
        assert!(values.windows(2).all(|p| p[1] <= p[0]));
        let episodes = fs::read_to_string(out_dir.join(format!("episodes_tp5_w{w}.csv"))).unwrap();
        assert_eq!(data_lines(&episodes).len(), 7);
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 3);

    let plot = out_dir.join("plot.csv");
    let out = pursuit(&[
        "plotdata",
        out_dir.join("sweep.csv").to_str().unwrap(),
        "--out",
        plot.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&plot).unwrap();
    let lines = data_lines(&text);
    assert_eq!(lines[0], "tau_p,speed_ratio,w,quantity,value");
    assert_eq!(lines.len(), 1 + 3 * 4);
    assert!(lines.contains(&"5,,0,ratio_to_infotaxis,1.000000"));
}

#[test]
fn seeds_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let cfg = cfg.to_str().unwrap();
    let read = |sub: &str| {
        let t = fs::read_to_string(dir.path().join(sub).join("sweep.csv")).unwrap();
        data_lines(&t).join("\n")
    };
    for (sub, jobs) in [("a", "1"), ("b", "3")] {
        let out_dir = dir.path().join(sub);
        let out = pursuit(&["run", "--config", cfg, "--auto-build", "--jobs", jobs, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(read("a"), read("b"));
}

#[test]
fn plotdata_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let header = "tau_p,speed_ratio,w,mean_T,stderr,capture_fraction,truncated,n";
    let no_base = dir.path().join("no_base.csv");
    fs::write(&no_base, format!("{header}\n25,,0.5,100,1,1,0,10\n")).unwrap();
    let out = pursuit(&["plotdata", no_base.to_str().unwrap(), "--out", dir.path().join("p.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no Infotaxis baseline"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, format!("# c\n{header}\n25,,0,100,1,1,0,10\n25,,0.5,abc,1,1,0,10\n")).unwrap();
    let out = pursuit(&["plotdata", bad.to_str().unwrap(), "--out", dir.path().join("p.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\nweights = []\n");
    let out = pursuit(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = pursuit(&["run", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = pursuit(&["run", "--episodes", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = pursuit(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn random_baseline_reports_best_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = pursuit(&["random-baseline", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("best alpha="));
    let text = fs::read_to_string(dir.path().join("out/random.csv")).unwrap();
    let rows = data_lines(&text);
    assert_eq!(rows[0], "tau_p,speed_ratio,alpha,mean_T,stderr,capture_fraction,truncated,n");
    assert_eq!(rows.len(), 3);
    let best = fs::read_to_string(dir.path().join("out/random_best.csv")).unwrap();
    assert_eq!(data_lines(&best).len(), 2);
}

const CONTINUOUS: &str = r#"
environment = "continuous"
episodes = 3
jobs = 1
max_steps = 200

[grid]
side = 11

[target]
bootstrap = 20

[sweep]
persistence_times = [1.0]
weights = [0.0, 0.5]
alphas = [0.2]
speed_ratios = [0.1]
"#;

#[test]
fn calibration_is_reproducible_within_bootstrap_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_toml(CONTINUOUS).unwrap();
    cfg.out = dir.path().to_path_buf();
    let a = cmd_calibrate(&cfg).unwrap().remove(0);
    assert!(a.warning.is_none());
    let (m, meta) = TransitionMatrix::read(&a.path).unwrap();
    assert_eq!(m, a.matrix);
    assert!(m.stochasticity_error() < 1e-12);
    assert!(m.symmetry_error() < 1e-12);
    for key in ["tau_p", "speed", "trajectory_steps", "seed", "config_sha256"] {
        assert!(meta.iter().any(|(k, _)| k == key), "{key}");
    }

    let mut other = cfg.clone();
    other.seed = 2;
    other.out = dir.path().join("other");
    let b = cmd_calibrate(&other).unwrap().remove(0);
    let sigma = a.max_sigma.max(b.max_sigma);
    for (x, y) in a.matrix.as_slice().iter().zip(b.matrix.as_slice()) {
        assert!((x - y).abs() <= 3.0 * sigma * 2f64.sqrt(), "{x} vs {y}, sigma {sigma}");
    }
}

#[test]
fn calibration_warns_at_long_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_toml(CONTINUOUS).unwrap();
    cfg.out = dir.path().to_path_buf();
    cfg.sweep.persistence_times = vec![50.0];
    cfg.target.bootstrap = 0;
    let c = cmd_calibrate(&cfg).unwrap().remove(0);
    let w = c.warning.expect("warning at long persistence");
    assert!(w.contains("underestimates the persistence"));

    let out = pursuit(&["calibrate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn continuous_run_builds_matrix_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), CONTINUOUS);
    let out = pursuit(&["run", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing transition matrix"));

    let out = pursuit(&["run", "--config", cfg_path.to_str().unwrap(), "--auto-build"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert!(matrix_path(&cfg, 1.0).exists());
    let sweep = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let rows = data_lines(&sweep);
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1,0.1,0,"));
}
