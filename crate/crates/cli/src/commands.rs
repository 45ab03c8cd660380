//! Subcommand implementations. Each returns the paths it wrote.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pursuit_core::episode::{ccdf_to_csv, records_to_csv, run_batch, Batch, BatchStats, Scenario};
use pursuit_core::policy::{load_cached, load_or_compute, CacheStatus, PolicySpec, QTable};
use pursuit_core::target::{
    discrete_transition_matrix, estimate_discretized_transition, ContinuousRtParams, DiscreteRtParams,
    TransitionMatrix,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{EnvironmentKind, ExperimentConfig};
use crate::table::{self, SweepRow, RANDOM_HEADER, SWEEP_HEADER};
use crate::CliError;

/// Effective worker count; `0` means every available core.
pub fn worker_count(jobs: usize) -> usize {
    if jobs > 0 {
        jobs
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}

fn tag(tau: f64, ratio: Option<f64>) -> String {
    match ratio {
        Some(r) => format!("tp{tau}_r{r}"),
        None => format!("tp{tau}"),
    }
}

/// Cache file holding the calibrated lattice chain for a continuous run time.
pub fn matrix_path(cfg: &ExperimentConfig, tau: f64) -> PathBuf {
    cfg.cache_dir()
        .join(format!("matrix_L{}_U{}_tp{}.txt", cfg.grid.side, cfg.target.speed, tau))
}

/// Result of calibrating one run time.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub path: PathBuf,
    pub matrix: TransitionMatrix,
    pub implied_persistence: f64,
    pub max_sigma: f64,
    pub warning: Option<String>,
}

fn calibrate_one(cfg: &ExperimentConfig, tau: f64) -> Result<Calibration, CliError> {
    let grid = cfg.grid()?;
    let params = ContinuousRtParams::new(cfg.target.speed, tau, cfg.target.substep)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(tau.to_bits());
    let est = estimate_discretized_transition(&params, &grid, cfg.target.trajectory_steps, &mut rng)?;
    let sigma = if cfg.target.bootstrap > 1 {
        est.bootstrap_sigma(cfg.target.bootstrap, &mut rng)?
    } else {
        Vec::new()
    };
    let max_sigma = sigma.iter().cloned().fold(0.0, f64::max);
    let implied = est.implied_persistence_time();
    let run_cells = tau * cfg.target.speed / grid.spacing();
    let warning = (implied < 0.5 * run_cells).then(|| {
        format!(
            "run time {tau}: runs span {run_cells:.2} cells but the one-step lattice chain keeps a \
             direction for only {implied:.2} steps on average; it underestimates the persistence"
        )
    });
    let metadata = vec![
        ("tau_p".to_string(), tau.to_string()),
        ("speed".to_string(), cfg.target.speed.to_string()),
        ("substep".to_string(), cfg.target.substep.to_string()),
        ("trajectory_steps".to_string(), cfg.target.trajectory_steps.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("stream".to_string(), tau.to_bits().to_string()),
        ("bootstrap_resamples".to_string(), cfg.target.bootstrap.to_string()),
        ("max_bootstrap_sigma".to_string(), format!("{max_sigma:.3e}")),
        ("implied_persistence".to_string(), format!("{implied:.6}")),
        ("version".to_string(), crate::VERSION.to_string()),
        ("config_sha256".to_string(), cfg.hash()),
    ];
    let path = matrix_path(cfg, tau);
    fs::create_dir_all(cfg.cache_dir())?;
    est.matrix.write(&path, &metadata)?;
    Ok(Calibration {
        path,
        matrix: est.matrix,
        implied_persistence: implied,
        max_sigma,
        warning,
    })
}

/// Estimate and store the lattice chain of every continuous run time.
pub fn cmd_calibrate(cfg: &ExperimentConfig) -> Result<Vec<Calibration>, CliError> {
    if cfg.environment != EnvironmentKind::Continuous {
        return Err(CliError::Config("calibrate needs environment = \"continuous\"".into()));
    }
    cfg.sweep
        .persistence_times
        .iter()
        .map(|&tau| calibrate_one(cfg, tau))
        .collect()
}

/// Lattice chain the agent uses at persistence time `tau`.
pub fn agent_matrix(cfg: &ExperimentConfig, tau: f64, build: bool) -> Result<TransitionMatrix, CliError> {
    match cfg.environment {
        EnvironmentKind::Discrete => Ok(discrete_transition_matrix(
            DiscreteRtParams::from_persistence_time(tau).map_err(|e| CliError::Config(e.to_string()))?,
        )),
        EnvironmentKind::Continuous => {
            let path = matrix_path(cfg, tau);
            if path.exists() {
                let (m, _) = TransitionMatrix::read(&path)?;
                Ok(m)
            } else if build {
                let c = calibrate_one(cfg, tau)?;
                if let Some(w) = &c.warning {
                    eprintln!("warning: {w}");
                }
                Ok(c.matrix)
            } else {
                Err(CliError::MissingCache(format!(
                    "missing transition matrix {}; run `pursuit calibrate` or pass --auto-build",
                    path.display()
                )))
            }
        }
    }
}

fn q_table(cfg: &ExperimentConfig, p: &TransitionMatrix, build: bool) -> Result<QTable, CliError> {
    let grid = cfg.grid()?;
    let dir = cfg.cache_dir();
    if let Some(t) = load_cached(&dir, p, &grid, cfg.mdp.gamma)? {
        return Ok(t);
    }
    if !build {
        return Err(CliError::MissingCache(format!(
            "missing Q-table cache {}; run `pursuit mdp` or pass --auto-build",
            pursuit_core::policy::mdp::cache_path(&dir, p, &grid, cfg.mdp.gamma).display()
        )));
    }
    fs::create_dir_all(&dir)?;
    Ok(load_or_compute(&dir, p, &grid, cfg.mdp.gamma, cfg.mdp.tolerance)?.0)
}

/// One Q-table cache entry.
#[derive(Debug, Clone)]
pub struct MdpEntry {
    pub tau_p: f64,
    pub path: PathBuf,
    pub status: CacheStatus,
    pub sweeps: usize,
}

/// Build (or confirm) the Q-table cache for every persistence time.
pub fn cmd_mdp(cfg: &ExperimentConfig, auto_build: bool) -> Result<Vec<MdpEntry>, CliError> {
    let grid = cfg.grid()?;
    let dir = cfg.cache_dir();
    fs::create_dir_all(&dir)?;
    let mut out = Vec::new();
    for &tau in &cfg.sweep.persistence_times {
        let p = agent_matrix(cfg, tau, auto_build)?;
        let (t, status) = load_or_compute(&dir, &p, &grid, cfg.mdp.gamma, cfg.mdp.tolerance)?;
        out.push(MdpEntry {
            tau_p: tau,
            path: pursuit_core::policy::mdp::cache_path(&dir, &p, &grid, cfg.mdp.gamma),
            status,
            sweeps: t.sweeps(),
        });
    }
    Ok(out)
}

fn scenario(
    cfg: &ExperimentConfig,
    tau: f64,
    ratio: Option<f64>,
    policy: PolicySpec,
    matrix: &TransitionMatrix,
    q: Option<Arc<QTable>>,
) -> Result<Scenario, CliError> {
    let grid = cfg.grid()?;
    let max_steps = cfg.max_steps(&grid);
    let s = match (cfg.environment, ratio) {
        (EnvironmentKind::Continuous, Some(r)) => {
            let params = ContinuousRtParams::new(cfg.target.speed, tau, cfg.target.substep)?;
            Scenario::continuous(grid, cfg.continuous_model(r)?, params, matrix.clone(), policy, max_steps, q)?
        }
        _ => Scenario::discrete(
            grid,
            cfg.lattice_model()?,
            DiscreteRtParams::from_persistence_time(tau)?,
            policy,
            max_steps,
            q,
        )?,
    };
    Ok(s)
}

#[derive(Debug, Serialize)]
struct SummaryEntry {
    tau_p: f64,
    speed_ratio: Option<f64>,
    policy: PolicySpec,
    stats: BatchStats,
}

fn row_from(tau: f64, ratio: Option<f64>, param: f64, stats: &BatchStats) -> SweepRow {
    SweepRow {
        tau_p: tau,
        speed_ratio: ratio,
        param,
        mean: stats.mean,
        stderr: stats.stderr,
        capture_fraction: stats.capture_fraction,
        truncated: stats.truncated,
        n: stats.n,
    }
}

struct SweepWriter {
    file: File,
    header: Vec<String>,
    out: PathBuf,
    per_episode: bool,
    ccdf: bool,
    summary: Vec<SummaryEntry>,
}

impl SweepWriter {
    fn create(cfg: &ExperimentConfig, name: &str, columns: &str, command: &str) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out)?;
        let header = cfg.provenance(command);
        let mut file = File::create(cfg.out.join(name))?;
        file.write_all(table::comment_lines(&header).as_bytes())?;
        writeln!(file, "{columns}")?;
        Ok(Self {
            file,
            header,
            out: cfg.out.clone(),
            per_episode: cfg.per_episode,
            ccdf: cfg.ccdf,
            summary: Vec::new(),
        })
    }

    fn push(&mut self, row: &SweepRow, label: &str, policy: PolicySpec, batch: &Batch) -> Result<(), CliError> {
        writeln!(self.file, "{}", row.to_csv_line())?;
        self.file.flush()?;
        let stem = format!("{}_{label}", tag(row.tau_p, row.speed_ratio));
        if self.per_episode {
            fs::write(
                self.out.join(format!("episodes_{stem}.csv")),
                records_to_csv(&batch.records, &self.header),
            )?;
        }
        if self.ccdf {
            fs::write(self.out.join(format!("ccdf_{stem}.csv")), ccdf_to_csv(&batch.stats, &self.header))?;
        }
        self.summary.push(SummaryEntry {
            tau_p: row.tau_p,
            speed_ratio: row.speed_ratio,
            policy,
            stats: batch.stats.clone(),
        });
        Ok(())
    }

    fn write_json(&self, name: &str) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        fs::write(self.out.join(name), text)?;
        Ok(())
    }
}

fn progress(what: &str, tau: f64, ratio: Option<f64>, stats: &BatchStats) {
    let r = ratio.map(|r| format!(" U*tau_d/lambda={r}")).unwrap_or_default();
    eprintln!(
        "tau_p={tau}{r} {what}: <T>={:.2} +- {:.2} (captured {:.3}, n={})",
        stats.mean, stats.stderr, stats.capture_fraction, stats.n
    );
}

/// Outputs of `run`.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub sweep: PathBuf,
    pub best: PathBuf,
    pub rows: Vec<SweepRow>,
}

/// Sweep `w` at every persistence time (and speed ratio), one batch per point.
/// All points share the master seed, so episodes are paired across `w`.
pub fn cmd_run(cfg: &ExperimentConfig, auto_build: bool) -> Result<RunOutput, CliError> {
    let jobs = worker_count(cfg.jobs);
    let mut writer = SweepWriter::create(cfg, "sweep.csv", SWEEP_HEADER, "run")?;
    let mut rows = Vec::new();
    let needs_q = cfg.sweep.weights.iter().any(|&w| w > 0.0);
    for ratio in cfg.speed_ratios() {
        for &tau in &cfg.sweep.persistence_times {
            let matrix = agent_matrix(cfg, tau, auto_build)?;
            let q = if needs_q {
                Some(Arc::new(q_table(cfg, &matrix, auto_build)?))
            } else {
                None
            };
            for &w in &cfg.sweep.weights {
                let policy = PolicySpec::Hybrid { w };
                let s = scenario(cfg, tau, ratio, policy, &matrix, q.clone())?;
                let batch = run_batch(&s, cfg.episodes, cfg.seed, jobs)?;
                progress(&format!("w={w}"), tau, ratio, &batch.stats);
                let row = row_from(tau, ratio, w, &batch.stats);
                writer.push(&row, &format!("w{w}"), policy, &batch)?;
                rows.push(row);
            }
        }
    }
    if cfg.json {
        writer.write_json("summary.json")?;
    }
    let best = write_best(cfg, &rows, "best.csv", "w", "run")?;
    Ok(RunOutput {
        sweep: cfg.out.join("sweep.csv"),
        best,
        rows,
    })
}

/// Per group, the minimizing row and (for `w`) the Infotaxis row.
fn write_best(
    cfg: &ExperimentConfig,
    rows: &[SweepRow],
    name: &str,
    param: &str,
    command: &str,
) -> Result<PathBuf, CliError> {
    let mut text = table::comment_lines(&cfg.provenance(command));
    text.push_str(&format!("kind,{}\n", SWEEP_HEADER.replace(",w,", &format!(",{param},"))));
    for g in table::groups(rows) {
        let b = table::best(&g);
        text.push_str(&format!("best,{}\n", b.to_csv_line()));
        if param == "w" {
            if let Some(r) = g.iter().find(|r| r.param == 0.0) {
                text.push_str(&format!("infotaxis,{}\n", r.to_csv_line()));
            }
        }
    }
    let path = cfg.out.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

/// Sweep the tumble probability of the random-walk baseline and report the
/// minimizing value per persistence time.
pub fn cmd_random_baseline(cfg: &ExperimentConfig, auto_build: bool) -> Result<RunOutput, CliError> {
    let jobs = worker_count(cfg.jobs);
    let mut writer = SweepWriter::create(cfg, "random.csv", RANDOM_HEADER, "random-baseline")?;
    let mut rows = Vec::new();
    for ratio in cfg.speed_ratios() {
        for &tau in &cfg.sweep.persistence_times {
            let matrix = agent_matrix(cfg, tau, auto_build)?;
            let mut group = Vec::new();
            for &alpha in &cfg.sweep.alphas {
                let policy = PolicySpec::Random { alpha };
                let s = scenario(cfg, tau, ratio, policy, &matrix, None)?;
                let batch = run_batch(&s, cfg.episodes, cfg.seed, jobs)?;
                progress(&format!("random alpha={alpha}"), tau, ratio, &batch.stats);
                let row = row_from(tau, ratio, alpha, &batch.stats);
                writer.push(&row, &format!("alpha{alpha}"), policy, &batch)?;
                group.push(row);
            }
            let refs: Vec<&SweepRow> = group.iter().collect();
            let b = table::best(&refs);
            eprintln!("tau_p={tau}: best alpha={} with <T>={:.2}", b.param, b.mean);
            rows.extend(group);
        }
    }
    if cfg.json {
        writer.write_json("random_summary.json")?;
    }
    let best = write_best(cfg, &rows, "random_best.csv", "alpha", "random-baseline")?;
    Ok(RunOutput {
        sweep: cfg.out.join("random.csv"),
        best,
        rows,
    })
}

/// Turn a `sweep.csv` into the long-format plotting table.
pub fn cmd_plotdata(input: &Path, output: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(input)
        .map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let rows = table::parse_sweep(&text).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", input.display())),
        other => other,
    })?;
    let header = vec![
        format!("pursuit {} (plotdata)", crate::VERSION),
        format!("source {}", input.display()),
    ];
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(output, table::plotdata(&rows, &header)?)?;
    Ok(())
}
