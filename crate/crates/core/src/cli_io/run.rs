//! Executes one configuration and writes its tables, report and manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{render, ConfigErrors, OutputFormat, RunConfig};
use crate::blowup::{self, BlowupConstants, BlowupFit, CertificateEntry, CrossingReport};
use crate::integrator::{self, Stats, Termination, Trajectory};
use crate::shell::{self, ModelKind, ModelParams};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const PLOT_SCRIPT: &str = include_str!("plot.py");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the rendered configuration.
    pub config_hash: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub termination: Option<Termination>,
    pub complete: bool,
    pub error: Option<String>,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io failure at {}: {message}", path.display())]
    Io {
        path: PathBuf,
        message: String,
        partial: Box<RunManifest>,
    },
}

impl RunError {
    /// Process exit code: 1 config, 2 numeric, 3 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Numeric(_) => 2,
            RunError::Io { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: ModelParams,
    pub initial_energy: f64,
    pub final_time: f64,
    pub termination: Termination,
    pub stats: Stats,
    /// `max |E(t) - E(0)| / E(0)` over the samples.
    pub max_energy_change: f64,
    pub constants: Option<BlowupConstants>,
    pub cascade: Option<CrossingReport>,
    /// `ρ^J / (1 - ρ)`, the limit of the cumulative crossing bound.
    pub cascade_time_bound: Option<f64>,
    pub certificate: Option<Vec<CertificateEntry>>,
    pub blowup_fit: Option<BlowupFit>,
    /// `(j, flux through j)` on the final state of an Obukhov run.
    pub obukhov_flux: Option<Vec<(i32, f64)>>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub trajectory: Trajectory,
    pub report: Option<RunReport>,
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Writer {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Writer {
    fn fail(&mut self, path: PathBuf, e: std::io::Error) -> RunError {
        self.manifest.finished_unix = now_unix();
        self.manifest.error = Some(format!("{}: {e}", path.display()));
        // best effort: the directory may be the thing that failed
        if let Ok(text) = serde_json::to_string_pretty(&self.manifest) {
            let _ = fs::write(self.dir.join("manifest.json"), text);
        }
        RunError::Io {
            path,
            message: e.to_string(),
            partial: Box::new(self.manifest.clone()),
        }
    }

    fn write(&mut self, name: &str, body: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        if let Err(e) = fs::write(&path, body) {
            return Err(self.fail(path, e));
        }
        self.manifest.files.push(FileEntry {
            name: name.to_string(),
            bytes: body.len() as u64,
            sha256: sha256_hex(body),
        });
        Ok(())
    }
}

fn shell_label(j: i32) -> String {
    format!("a_{j}")
}

/// `t, a_{j0}, …` rows at every `stride`-th sample plus the last.
pub fn trajectory_csv(traj: &Trajectory, stride: usize) -> String {
    let mut out = String::from("t");
    for (j, _) in traj.first().shells() {
        out.push(',');
        out.push_str(&shell_label(j));
    }
    out.push('\n');
    for s in strided(&traj.samples, stride) {
        let _ = write!(out, "{:?}", s.t);
        for v in &s.a {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

fn strided<T>(items: &[T], stride: usize) -> impl Iterator<Item = &T> {
    let last = items.len().saturating_sub(1);
    items
        .iter()
        .enumerate()
        .filter(move |(i, _)| i % stride == 0 || *i == last)
        .map(|(_, x)| x)
}

/// `t, energy, tail_{j}…, hnorm_{α}…` rows.
pub fn diagnostics_csv(traj: &Trajectory, config: &RunConfig) -> String {
    let tails = config.tail_shells();
    let alphas = &config.analysis.alphas;
    let mu = config.mu();
    let mut out = String::from("t,energy");
    for j in &tails {
        let _ = write!(out, ",tail_{j}");
    }
    for a in alphas {
        let _ = write!(out, ",hnorm_{a:?}");
    }
    out.push('\n');
    for s in strided(&traj.samples, config.output.stride) {
        let _ = write!(out, "{:?},{:?}", s.t, shell::energy(s));
        let all_tails = shell::tail_energies(s);
        for j in &tails {
            let _ = write!(out, ",{:?}", all_tails[(j - s.j0) as usize]);
        }
        for a in alphas {
            let _ = write!(out, ",{:?}", shell::sobolev_norm_sq(s, *a, mu).sqrt());
        }
        out.push('\n');
    }
    out
}

/// `k, t_k, bound, satisfied`; unresolved rows have an empty `t_k`.
pub fn crossings_csv(report: &CrossingReport) -> String {
    let mut out = String::from("k,t_k,bound,satisfied\n");
    for s in &report.steps {
        let t = s.t_k.map_or(String::new(), |t| format!("{t:?}"));
        let ok = s
            .satisfied
            .map_or("unresolved".to_string(), |b| b.to_string());
        let _ = writeln!(out, "{},{t},{:?},{ok}", s.k, s.bound);
    }
    out
}

/// Smallest `J` in range whose tail energy meets `q^J` at `t = 0`.
fn auto_cascade_start(traj_start: &shell::ShellState, params: &ModelParams, q: f64) -> Option<i32> {
    (params.j0..=blowup::last_checked_shell(params))
        .find(|&j| shell::tail_energy(traj_start, j).is_ok_and(|e| e >= q.powi(j)))
}

/// Runs `config`, writing outputs into `config.output.dir`.
pub fn run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    run_in(config, Path::new(&config.output.dir))
}

/// Runs `config`, writing outputs into `dir`.
pub fn run_in(config: &RunConfig, dir: &Path) -> Result<RunOutcome, RunError> {
    let started = now_unix();
    let numeric = |e: &dyn std::fmt::Display| RunError::Numeric(e.to_string());
    let params = config.params().map_err(|e| numeric(&e))?;
    let initial = config.initial_state().map_err(|e| numeric(&e))?;
    let analysis = &config.analysis;
    let mut notes = Vec::new();

    let constants = if analysis.enabled && params.kind.is_chain() {
        match config.constants() {
            Ok(c) => Some(c),
            Err(e) => {
                notes.push(format!("constants unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    let cascade_start = match (&constants, analysis.cascade) {
        (Some(c), true) if c.valid_req => {
            let start = analysis
                .cascade_start
                .or_else(|| auto_cascade_start(&initial, &params, c.q));
            if start.is_none() {
                notes.push("cascade skipped: no shell meets the seed condition".into());
            }
            start
        }
        (Some(c), true) => {
            notes.push(format!(
                "cascade skipped: constants fail the crossing condition (lambda rho sqrt(q) = {:?})",
                c.lambda * c.rho * c.q.sqrt()
            ));
            None
        }
        _ => None,
    };
    if analysis.enabled && analysis.cascade && !params.kind.is_chain() {
        notes.push("cascade skipped: not defined for the obukhov model".into());
    }

    let mut icfg = config.integrator.clone();
    if let (Some(c), Some(j)) = (&constants, cascade_start) {
        icfg.events = blowup::cascade_events(&params, c.q, j);
    }
    let trajectory = integrator::integrate(&params, &initial, &icfg).map_err(|e| numeric(&e))?;

    let mut writer = Writer {
        dir: dir.to_path_buf(),
        manifest: RunManifest {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            config_hash: sha256_hex(render(config).as_bytes()),
            started_unix: started,
            finished_unix: started,
            termination: Some(trajectory.termination),
            complete: false,
            error: None,
            files: Vec::new(),
        },
    };
    if let Err(e) = fs::create_dir_all(dir) {
        return Err(writer.fail(dir.to_path_buf(), e));
    }
    writer.write(
        "trajectory.csv",
        trajectory_csv(&trajectory, config.output.stride).as_bytes(),
    )?;

    let report = if analysis.enabled {
        let report = analyse(config, &trajectory, constants, cascade_start, notes);
        writer.write(
            "diagnostics.csv",
            diagnostics_csv(&trajectory, config).as_bytes(),
        )?;
        if let Some(c) = &report.cascade {
            writer.write("crossings.csv", crossings_csv(c).as_bytes())?;
        }
        if config.wants(OutputFormat::Json) {
            let text = serde_json::to_string_pretty(&report).map_err(|e| numeric(&e))?;
            writer.write("report.json", text.as_bytes())?;
        }
        if config.wants(OutputFormat::Plot) {
            writer.write("plot.py", PLOT_SCRIPT.as_bytes())?;
        }
        Some(report)
    } else {
        None
    };

    writer.manifest.finished_unix = now_unix();
    writer.manifest.complete = true;
    let text = serde_json::to_string_pretty(&writer.manifest).map_err(|e| numeric(&e))?;
    let path = dir.join("manifest.json");
    if let Err(e) = fs::write(&path, text) {
        return Err(writer.fail(path, e));
    }
    Ok(RunOutcome {
        manifest: writer.manifest,
        trajectory,
        report,
    })
}

fn analyse(
    config: &RunConfig,
    traj: &Trajectory,
    constants: Option<BlowupConstants>,
    cascade_start: Option<i32>,
    mut notes: Vec<String>,
) -> RunReport {
    let analysis = &config.analysis;
    let params = traj.params;
    let e0 = shell::energy(traj.first());
    let max_energy_change = traj
        .samples
        .iter()
        .map(|s| (shell::energy(s) - e0).abs() / e0.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);

    let mut cascade = None;
    let mut cascade_time_bound = None;
    let mut certificate = None;
    if let (Some(c), Some(j)) = (&constants, cascade_start) {
        match blowup::verify_lemma_cascade(traj, c, j) {
            Ok(r) => {
                cascade_time_bound = Some(c.rho.powi(j) / (1.0 - c.rho));
                if analysis.certificate {
                    certificate = Some(blowup::norm_divergence_certificate(traj, c, &r));
                }
                cascade = Some(r);
            }
            Err(e) => notes.push(format!("cascade not verified: {e}")),
        }
    }
    // the norm the constants certify, when there are constants
    let (alpha, mu) = constants
        .as_ref()
        .map_or((analysis.alphas[0], config.mu()), |c| (c.alpha, c.mu));
    let blowup_fit = if analysis.fit {
        match blowup::estimate_blowup_time(traj, alpha, mu) {
            Ok(f) => Some(f),
            Err(e) => {
                notes.push(format!("blow-up fit: {e}"));
                None
            }
        }
    } else {
        None
    };
    let obukhov_flux = (params.kind == ModelKind::Obukhov).then(|| {
        let last = traj.last();
        (params.j0 + 1..=params.last_shell())
            .filter_map(|j| blowup::obukhov_flux(&params, last, j).ok().map(|f| (j, f)))
            .collect()
    });
    RunReport {
        model: params,
        initial_energy: e0,
        final_time: traj.last().t,
        termination: traj.termination,
        stats: traj.stats,
        max_energy_change,
        constants,
        cascade,
        cascade_time_bound,
        certificate,
        blowup_fit,
        obukhov_flux,
        notes,
    }
}
