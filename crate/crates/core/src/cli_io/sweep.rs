//! Parameter sweeps: one run per grid cell, joined into `sweep_summary.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{
    build_config, ConfigError, ConfigErrorKind, ConfigErrors, Entries, KNOWN_KEYS,
};
use super::run::{run_in, RunError, RunManifest, RunOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Parses `key=v1,v2;key2=w1,w2`. An empty spec is an empty grid.
pub fn parse_grid(spec: &str) -> Result<Vec<GridAxis>, ConfigErrors> {
    let mut axes = Vec::new();
    let mut errors = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((key, values)) = part.split_once('=') else {
            errors.push(ConfigError {
                line: 0,
                kind: ConfigErrorKind::Syntax,
                message: format!("grid axis {part:?} is not `key=v1,v2,...`"),
            });
            continue;
        };
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            errors.push(ConfigError {
                line: 0,
                kind: ConfigErrorKind::UnknownKey,
                message: format!("grid key {key:?} is not a config key"),
            });
            continue;
        }
        if axes.iter().any(|a: &GridAxis| a.key == key) {
            errors.push(ConfigError {
                line: 0,
                kind: ConfigErrorKind::Syntax,
                message: format!("grid key {key:?} repeated"),
            });
            continue;
        }
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        axes.push(GridAxis {
            key: key.to_string(),
            values,
        });
    }
    if errors.is_empty() {
        Ok(axes)
    } else {
        Err(ConfigErrors(errors))
    }
}

/// Cartesian product of the axes, first axis slowest. No axes, no cells.
pub fn grid_cells(axes: &[GridAxis]) -> Vec<Vec<(String, String)>> {
    if axes.is_empty() {
        return Vec::new();
    }
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                axis.values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((axis.key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub index: usize,
    pub assignments: Vec<(String, String)>,
    pub dir: PathBuf,
    pub error: Option<String>,
    pub termination: Option<String>,
    pub t_star: Option<f64>,
    pub resolved_depth: Option<usize>,
    pub valid_req: Option<bool>,
    pub valid_bucond: Option<bool>,
    pub manifest: Option<RunManifest>,
}

impl CellSummary {
    pub fn valid(&self) -> Option<bool> {
        Some(self.valid_req? && self.valid_bucond?)
    }
}

fn summarize(
    index: usize,
    assignments: Vec<(String, String)>,
    dir: PathBuf,
    outcome: Result<RunOutcome, RunError>,
) -> CellSummary {
    let mut s = CellSummary {
        index,
        assignments,
        dir,
        error: None,
        termination: None,
        t_star: None,
        resolved_depth: None,
        valid_req: None,
        valid_bucond: None,
        manifest: None,
    };
    match outcome {
        Ok(o) => {
            s.termination = Some(o.trajectory.termination.name().to_string());
            if let Some(r) = &o.report {
                s.t_star = r.blowup_fit.as_ref().map(|f| f.t_star);
                s.resolved_depth = r.cascade.as_ref().map(|c| c.resolved_depth());
                s.valid_req = r.constants.map(|c| c.valid_req);
                s.valid_bucond = r.constants.map(|c| c.valid_bucond);
            }
            s.manifest = Some(o.manifest);
        }
        Err(e) => s.error = Some(e.to_string()),
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt<T: std::fmt::Debug>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| format!("{x:?}"))
}

pub fn summary_csv(axes: &[GridAxis], cells: &[CellSummary]) -> String {
    let mut out = String::from("cell");
    for a in axes {
        out.push(',');
        out.push_str(&csv_field(&a.key));
    }
    out.push_str(",status,termination,t_star,resolved_depth,valid_req,valid_bucond,valid\n");
    for c in cells {
        out.push_str(&c.index.to_string());
        for (_, v) in &c.assignments {
            out.push(',');
            out.push_str(&csv_field(v));
        }
        let status = c
            .error
            .as_ref()
            .map_or("ok".to_string(), |e| format!("error: {e}"));
        out.push_str(&format!(
            ",{},{},{},{},{},{},{}\n",
            csv_field(&status),
            c.termination.clone().unwrap_or_default(),
            opt(c.t_star),
            c.resolved_depth.map_or(String::new(), |d| d.to_string()),
            c.valid_req.map_or(String::new(), |b| b.to_string()),
            c.valid_bucond.map_or(String::new(), |b| b.to_string()),
            c.valid().map_or(String::new(), |b| b.to_string()),
        ));
    }
    out
}

/// Runs every cell of `axes` over `template` with up to `workers` threads.
/// Cell failures are recorded in the summary; only a bad template, a bad
/// grid key or an unwritable summary fail the sweep.
pub fn sweep(
    template: &str,
    axes: &[GridAxis],
    out: &Path,
    workers: usize,
) -> Result<Vec<CellSummary>, RunError> {
    let entries = Entries::parse(template)?;
    // the template must stand on its own
    build_config(entries.clone())?;
    let cells = grid_cells(axes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Numeric(format!("thread pool: {e}")))?;
    let summaries: Vec<CellSummary> = pool.install(|| {
        cells
            .into_par_iter()
            .enumerate()
            .map(|(index, assignments)| {
                let dir = out.join(format!("cell_{index:03}"));
                let mut e = entries.clone();
                let outcome = assignments
                    .iter()
                    .try_for_each(|(k, v)| e.set(k, v))
                    .map_err(|err| RunError::Config(ConfigErrors(vec![err])))
                    .and_then(|_| build_config(e).map_err(RunError::Config))
                    .and_then(|cfg| run_in(&cfg, &dir));
                summarize(index, assignments, dir, outcome)
            })
            .collect()
    });
    let path = out.join("sweep_summary.csv");
    let write =
        fs::create_dir_all(out).and_then(|_| fs::write(&path, summary_csv(axes, &summaries)));
    if let Err(e) = write {
        return Err(RunError::Io {
            path,
            message: e.to_string(),
            partial: Box::new(RunManifest {
                tool: super::run::TOOL_NAME.into(),
                version: super::run::TOOL_VERSION.into(),
                config_hash: super::run::sha256_hex(template.as_bytes()),
                started_unix: 0.0,
                finished_unix: 0.0,
                termination: None,
                complete: false,
                error: Some(e.to_string()),
                files: Vec::new(),
            }),
        });
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing_and_product() {
        assert!(parse_grid("").unwrap().is_empty());
        assert!(grid_cells(&[]).is_empty());
        let axes = parse_grid("analysis.delta=0.5,1; model.lambda = 2,3,4").unwrap();
        let cells = grid_cells(&axes);
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1][1], ("model.lambda".to_string(), "3".to_string()));
        assert!(parse_grid("model.lamda=2").is_err());
        assert!(parse_grid("model.lambda").is_err());
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
