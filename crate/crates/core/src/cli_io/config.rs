//! Line-oriented run configuration: one `section.key = value` per line,
//! `#` comments and blank lines ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blowup::{self, BlowupConstants, TRUNCATION_BUFFER};
use crate::integrator::IntegratorConfig;
use crate::shell::{self, ModelKind, ModelParams, ShellState, Viscosity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConfigErrorKind {
    Syntax,
    UnknownKey,
    Range,
    Consistency,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("line {line}: {kind:?}: {message}")]
pub struct ConfigError {
    /// 1-based; 0 when the problem is not tied to a line.
    pub line: usize,
    pub kind: ConfigErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub lambda: f64,
    pub j0: i32,
    pub n_shells: usize,
    pub nu: f64,
    pub viscosity_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitCondition {
    SingleShell {
        shell: i32,
        amplitude: f64,
    },
    /// All energy at `shell`, with `E_B(shell) = max(q^shell, energy)`.
    Seed {
        shell: i32,
        energy: f64,
    },
    PowerLaw {
        flux: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstantsChoice {
    /// `q = μ^{-2α+δ}` with the midpoint `ρ`.
    Pick,
    /// `q = 2^{-3-ε}`, `ρ = 2^{-ε}`, `μ = 2`, `α = 3/2 + ε`.
    FpEpsilon(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSection {
    pub enabled: bool,
    pub alphas: Vec<f64>,
    /// `None` ties `μ` to the model's `λ` (written `lambda`).
    pub mu: Option<f64>,
    pub delta: f64,
    pub constants: ConstantsChoice,
    pub cascade: bool,
    pub certificate: bool,
    pub fit: bool,
    /// `None` picks the smallest shell meeting the seed condition.
    pub cascade_start: Option<i32>,
    /// `None` means every shell.
    pub tail_shells: Option<Vec<i32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    Csv,
    Json,
    Plot,
}

impl OutputFormat {
    pub fn name(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Plot => "plot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: String,
    pub stride: usize,
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSection,
    pub init: InitCondition,
    pub integrator: IntegratorConfig,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
}

pub const KNOWN_KEYS: &[&str] = &[
    "model.kind",
    "model.lambda",
    "model.j0",
    "model.n_shells",
    "model.nu",
    "model.viscosity_exponent",
    "init.kind",
    "init.shell",
    "init.amplitude",
    "init.energy",
    "init.flux",
    "init.values",
    "integrator.rel_tol",
    "integrator.abs_tol",
    "integrator.max_step",
    "integrator.t_end",
    "integrator.stop_norm",
    "integrator.max_steps",
    "analysis.enabled",
    "analysis.alpha",
    "analysis.mu",
    "analysis.delta",
    "analysis.constants",
    "analysis.epsilon",
    "analysis.cascade",
    "analysis.certificate",
    "analysis.fit",
    "analysis.cascade_start",
    "analysis.tail_shells",
    "output.dir",
    "output.stride",
    "output.formats",
];

pub fn model_kind_from_name(name: &str) -> Option<ModelKind> {
    [
        ModelKind::GenericChain,
        ModelKind::KatzPavlovicChain,
        ModelKind::FriedlanderPavlovic,
        ModelKind::Obukhov,
    ]
    .into_iter()
    .find(|k| k.name() == name)
}

/// Raw `key → (line, value)` entries in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        let (entries, errors) = Self::parse_partial(text);
        if errors.is_empty() {
            Ok(entries)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// Every well-formed entry plus the errors for the rest.
    fn parse_partial(text: &str) -> (Self, Vec<ConfigError>) {
        let mut map = BTreeMap::new();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            // `#` starts a comment anywhere on the line
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            let Some((key, value)) = s.split_once('=') else {
                errors.push(ConfigError {
                    line,
                    kind: ConfigErrorKind::Syntax,
                    message: format!("expected `section.key = value`, got {s:?}"),
                });
                continue;
            };
            let key = key.trim();
            if !key.contains('.') || key.contains(char::is_whitespace) {
                errors.push(ConfigError {
                    line,
                    kind: ConfigErrorKind::Syntax,
                    message: format!("malformed key {key:?}"),
                });
                continue;
            }
            if !KNOWN_KEYS.contains(&key) {
                errors.push(ConfigError {
                    line,
                    kind: ConfigErrorKind::UnknownKey,
                    message: format!("unknown key {key:?}"),
                });
                continue;
            }
            if let Some((first, _)) = map.get(key) {
                errors.push(ConfigError {
                    line,
                    kind: ConfigErrorKind::Syntax,
                    message: format!("{key} already set on line {first}"),
                });
                continue;
            }
            map.insert(key.to_string(), (line, value.trim().to_string()));
        }
        (Self { map }, errors)
    }

    /// Replaces or adds `key`; the entry loses its line number.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError {
                line: 0,
                kind: ConfigErrorKind::UnknownKey,
                message: format!("unknown key {key:?}"),
            });
        }
        self.map.insert(key.to_string(), (0, value.to_string()));
        Ok(())
    }
}

struct Reader {
    map: BTreeMap<String, (usize, String)>,
    errors: Vec<ConfigError>,
}

impl Reader {
    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |e| e.0)
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn push(&mut self, line: usize, kind: ConfigErrorKind, message: String) {
        self.errors.push(ConfigError {
            line,
            kind,
            message,
        });
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parse_value<T: FromStr>(&mut self, key: &str, line: usize, v: &str) -> Option<T> {
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.errors.push(ConfigError {
                    line,
                    kind: ConfigErrorKind::Syntax,
                    message: format!("{key}: cannot parse {v:?}"),
                });
                None
            }
        }
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T {
        match self.raw(key) {
            Some((line, v)) => self.parse_value(key, line, &v).unwrap_or(default),
            None => default,
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Vec<T> {
        let Some((line, v)) = self.raw(key) else {
            return default;
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .filter_map(|item| self.parse_value(key, line, item))
            .collect()
    }
}

/// Parses and validates `text`, reporting every error found in one pass.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let (entries, mut errors) = Entries::parse_partial(text);
    match build_config(entries) {
        Ok(config) if errors.is_empty() => Ok(config),
        Ok(_) => Err(ConfigErrors(errors)),
        Err(ConfigErrors(more)) => {
            errors.extend(more);
            errors.sort_by_key(|e| e.line);
            Err(ConfigErrors(errors))
        }
    }
}

/// Validates entries into a [`RunConfig`], applying defaults for absent keys.
pub fn build_config(entries: Entries) -> Result<RunConfig, ConfigErrors> {
    use ConfigErrorKind::*;
    let mut r = Reader {
        map: entries.map,
        errors: Vec::new(),
    };

    // model
    let kind_line = r.line("model.kind");
    let kind_name: String = r.get("model.kind", "generic".to_string());
    let kind = model_kind_from_name(&kind_name).unwrap_or_else(|| {
        r.push(
            kind_line,
            Range,
            format!("model.kind: unknown model {kind_name:?} (generic, kp, fp, obukhov)"),
        );
        ModelKind::GenericChain
    });
    let forced = match kind {
        ModelKind::KatzPavlovicChain => Some(2.0),
        ModelKind::FriedlanderPavlovic => Some(shell::fp_lambda()),
        _ => None,
    };
    let lambda_given = r.has("model.lambda");
    let lambda_line = r.line("model.lambda");
    let mut lambda: f64 = r.get("model.lambda", forced.unwrap_or(2.0));
    if let Some(f) = forced {
        if lambda_given && (lambda - f).abs() > 1e-12 * f {
            r.push(lambda_line, Consistency, format!(
                    "model.lambda = {lambda} conflicts with model.kind = {kind_name}, which fixes lambda = {f:?}"
                ));
        }
        lambda = f;
    }
    if !(lambda > 1.0 && lambda.is_finite()) {
        r.push(
            lambda_line,
            Range,
            format!("model.lambda: {lambda} must be > 1"),
        );
    }
    let j0: i32 = r.get("model.j0", 0);
    let n_line = r.line("model.n_shells");
    let n_shells: usize = r.get("model.n_shells", 40);
    if n_shells < 2 {
        r.push(
            n_line,
            Range,
            format!("model.n_shells: {n_shells} must be >= 2"),
        );
    }
    let nu_line = r.line("model.nu");
    let nu: f64 = r.get("model.nu", 0.0);
    if !(nu >= 0.0 && nu.is_finite()) {
        r.push(nu_line, Range, format!("model.nu: {nu} must be >= 0"));
    } else if nu > 0.0 && kind.is_chain() {
        r.push(
            nu_line,
            Consistency,
            format!("model.nu applies to obukhov only, not {kind_name}"),
        );
    }
    let viscosity_exponent: f64 = r.get("model.viscosity_exponent", 2.0);
    let last = j0 + n_shells as i32 - 1;
    let in_range = |j: i32| j >= j0 && j <= last;

    // init
    let init_kind_line = r.line("init.kind");
    let init_kind: String = r.get("init.kind", "single_shell".to_string());
    let mut inapplicable: Vec<&str> = Vec::new();
    let init = match init_kind.as_str() {
        "single_shell" => {
            inapplicable.extend(["init.energy", "init.flux", "init.values"]);
            let l = r.line("init.shell");
            let shell: i32 = r.get("init.shell", j0);
            if !in_range(shell) {
                r.push(
                    l,
                    Range,
                    format!("init.shell: {shell} outside [{j0}, {last}]"),
                );
            }
            let amplitude: f64 = r.get("init.amplitude", 1.0);
            InitCondition::SingleShell { shell, amplitude }
        }
        "seed" => {
            inapplicable.extend(["init.amplitude", "init.flux", "init.values"]);
            let l = r.line("init.shell");
            let shell: i32 = r.get("init.shell", j0);
            if !in_range(shell) {
                r.push(
                    l,
                    Range,
                    format!("init.shell: {shell} outside [{j0}, {last}]"),
                );
            }
            let l = r.line("init.energy");
            let energy: f64 = r.get("init.energy", 0.0);
            if !(energy >= 0.0 && energy.is_finite()) {
                r.push(l, Range, format!("init.energy: {energy} must be >= 0"));
            }
            InitCondition::Seed { shell, energy }
        }
        "powerlaw" => {
            inapplicable.extend(["init.shell", "init.amplitude", "init.energy", "init.values"]);
            let flux: f64 = r.get("init.flux", 1.0);
            InitCondition::PowerLaw { flux }
        }
        "explicit" => {
            inapplicable.extend(["init.shell", "init.amplitude", "init.energy", "init.flux"]);
            let l = r.line("init.values");
            let values: Vec<f64> = r.list("init.values", Vec::new());
            if values.len() != n_shells {
                r.push(
                    l,
                    Range,
                    format!("init.values: {} values for {n_shells} shells", values.len()),
                );
            }
            InitCondition::Explicit { values }
        }
        other => {
            r.push(init_kind_line, Range, format!(
                    "init.kind: unknown initializer {other:?} (single_shell, seed, powerlaw, explicit)"
                ));
            InitCondition::SingleShell {
                shell: j0,
                amplitude: 1.0,
            }
        }
    };
    if let InitCondition::SingleShell { amplitude: v, .. } | InitCondition::PowerLaw { flux: v } =
        init
    {
        if !v.is_finite() {
            r.push(
                init_kind_line,
                Range,
                "initial amplitude must be finite".into(),
            );
        }
    }

    // integrator
    let d = IntegratorConfig::default();
    let mut cfg = IntegratorConfig::default();
    for (key, slot, default) in [
        ("integrator.rel_tol", &mut cfg.rel_tol, d.rel_tol),
        ("integrator.abs_tol", &mut cfg.abs_tol, d.abs_tol),
        ("integrator.t_end", &mut cfg.t_end, d.t_end),
    ] {
        let l = r.line(key);
        *slot = r.get(key, default);
        if !(*slot > 0.0 && slot.is_finite()) {
            r.push(
                l,
                Range,
                format!("{key}: {} must be positive and finite", slot),
            );
        }
    }
    let l = r.line("integrator.max_step");
    cfg.max_step = r.get("integrator.max_step", d.max_step);
    if !(cfg.max_step > 0.0) {
        r.push(
            l,
            Range,
            format!("integrator.max_step: {} must be positive", cfg.max_step),
        );
    }
    let l = r.line("integrator.stop_norm");
    cfg.stop_norm = r.get("integrator.stop_norm", d.stop_norm);
    if !(cfg.stop_norm > 1.0) {
        r.push(
            l,
            Range,
            format!("integrator.stop_norm: {} must be > 1", cfg.stop_norm),
        );
    }
    let l = r.line("integrator.max_steps");
    cfg.max_steps = r.get("integrator.max_steps", d.max_steps);
    if cfg.max_steps == 0 {
        r.push(l, Range, "integrator.max_steps must be >= 1".into());
    }

    // analysis
    let enabled: bool = r.get("analysis.enabled", true);
    let l = r.line("analysis.alpha");
    let alphas: Vec<f64> = r.list("analysis.alpha", vec![1.0]);
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        r.push(
            l,
            Range,
            format!("analysis.alpha: values must be > 0 and at least one given, got {alphas:?}"),
        );
    }
    let l = r.line("analysis.mu");
    let mu_text: String = r.get("analysis.mu", "2".to_string());
    let mu = if mu_text == "lambda" {
        None
    } else {
        let mu = r.parse_value::<f64>("analysis.mu", l, &mu_text);
        if let Some(mu) = mu {
            if !(mu > 1.0 && mu.is_finite()) {
                r.push(l, Range, format!("analysis.mu: {mu} must be > 1"));
            }
        }
        Some(mu.unwrap_or(2.0))
    };
    let delta: f64 = r.get("analysis.delta", 1.0);
    let l = r.line("analysis.constants");
    let choice: String = r.get("analysis.constants", "pick".to_string());
    let constants = match choice.as_str() {
        "pick" => {
            inapplicable.push("analysis.epsilon");
            ConstantsChoice::Pick
        }
        "fp_epsilon" => {
            let l = r.line("analysis.epsilon");
            let eps: f64 = r.get("analysis.epsilon", 0.5);
            if !eps.is_finite() {
                r.push(l, Range, "analysis.epsilon must be finite".into());
            }
            if kind != ModelKind::FriedlanderPavlovic {
                r.push(
                    l,
                    Consistency,
                    format!(
                        "analysis.constants = fp_epsilon needs model.kind = fp, got {kind_name}"
                    ),
                );
            }
            ConstantsChoice::FpEpsilon(eps)
        }
        other => {
            r.push(
                l,
                Range,
                format!("analysis.constants: unknown choice {other:?} (pick, fp_epsilon)"),
            );
            ConstantsChoice::Pick
        }
    };
    let cascade: bool = r.get("analysis.cascade", true);
    let certificate: bool = r.get("analysis.certificate", true);
    let fit: bool = r.get("analysis.fit", true);
    let l = r.line("analysis.cascade_start");
    let start: String = r.get("analysis.cascade_start", "auto".to_string());
    let cascade_start = if start == "auto" {
        None
    } else {
        let j = r.parse_value::<i32>("analysis.cascade_start", l, &start);
        if let Some(j) = j {
            if j < j0 || j > last - TRUNCATION_BUFFER {
                r.push(
                    l,
                    Range,
                    format!(
                        "analysis.cascade_start: {j} outside [{j0}, {}]",
                        last - TRUNCATION_BUFFER
                    ),
                );
            }
        }
        j
    };
    let l = r.line("analysis.tail_shells");
    let tails: String = r.get("analysis.tail_shells", "all".to_string());
    let tail_shells = if tails == "all" {
        None
    } else {
        let mut v = Vec::new();
        for item in tails.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if let Some(j) = r.parse_value::<i32>("analysis.tail_shells", l, item) {
                if !in_range(j) {
                    r.push(
                        l,
                        Range,
                        format!("analysis.tail_shells: {j} outside [{j0}, {last}]"),
                    );
                }
                v.push(j);
            }
        }
        Some(v)
    };

    // output
    let l = r.line("output.dir");
    let dir: String = r.get("output.dir", "out".to_string());
    if dir.is_empty() {
        r.push(l, Range, "output.dir must not be empty".into());
    }
    let l = r.line("output.stride");
    let stride: usize = r.get("output.stride", 1);
    if stride == 0 {
        r.push(l, Range, "output.stride must be >= 1".into());
    }
    let l = r.line("output.formats");
    let names: Vec<String> = r.list(
        "output.formats",
        vec!["csv".into(), "json".into(), "plot".into()],
    );
    let mut formats = Vec::new();
    for n in &names {
        match n.as_str() {
            "csv" => formats.push(OutputFormat::Csv),
            "json" => formats.push(OutputFormat::Json),
            "plot" => formats.push(OutputFormat::Plot),
            other => r.push(
                l,
                Range,
                format!("output.formats: unknown format {other:?} (csv, json, plot)"),
            ),
        }
    }
    if !formats.contains(&OutputFormat::Csv) {
        r.push(l, Range, "output.formats must include csv".into());
    }

    // keys present but not meaningful for the chosen variant
    for key in inapplicable {
        if let Some((line, _)) = r.map.get(key) {
            let line = *line;
            r.push(
                line,
                Consistency,
                format!("{key} does not apply to this configuration"),
            );
        }
    }

    let config = RunConfig {
        model: ModelSection {
            kind,
            lambda,
            j0,
            n_shells,
            nu,
            viscosity_exponent,
        },
        init,
        integrator: cfg,
        analysis: AnalysisSection {
            enabled,
            alphas,
            mu,
            delta,
            constants,
            cascade,
            certificate,
            fit,
            cascade_start,
            tail_shells,
        },
        output: OutputSection {
            dir,
            stride,
            formats,
        },
    };
    if r.errors.is_empty() {
        if let Err(e) = config.params() {
            r.push(0, Consistency, e.to_string());
        }
    }
    if r.errors.is_empty() {
        Ok(config)
    } else {
        r.errors.sort_by_key(|e| e.line);
        Err(ConfigErrors(r.errors))
    }
}

fn join<T: fmt::Debug>(v: &[T]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Canonical text for `config`; [`parse_config`] reads it back unchanged.
pub fn render(config: &RunConfig) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    let m = &config.model;
    put("model.kind", m.kind.name().into());
    put("model.lambda", format!("{:?}", m.lambda));
    put("model.j0", m.j0.to_string());
    put("model.n_shells", m.n_shells.to_string());
    put("model.nu", format!("{:?}", m.nu));
    put(
        "model.viscosity_exponent",
        format!("{:?}", m.viscosity_exponent),
    );
    match &config.init {
        InitCondition::SingleShell { shell, amplitude } => {
            put("init.kind", "single_shell".into());
            put("init.shell", shell.to_string());
            put("init.amplitude", format!("{amplitude:?}"));
        }
        InitCondition::Seed { shell, energy } => {
            put("init.kind", "seed".into());
            put("init.shell", shell.to_string());
            put("init.energy", format!("{energy:?}"));
        }
        InitCondition::PowerLaw { flux } => {
            put("init.kind", "powerlaw".into());
            put("init.flux", format!("{flux:?}"));
        }
        InitCondition::Explicit { values } => {
            put("init.kind", "explicit".into());
            put("init.values", join(values));
        }
    }
    let c = &config.integrator;
    put("integrator.rel_tol", format!("{:?}", c.rel_tol));
    put("integrator.abs_tol", format!("{:?}", c.abs_tol));
    put("integrator.max_step", format!("{:?}", c.max_step));
    put("integrator.t_end", format!("{:?}", c.t_end));
    put("integrator.stop_norm", format!("{:?}", c.stop_norm));
    put("integrator.max_steps", c.max_steps.to_string());
    let a = &config.analysis;
    put("analysis.enabled", a.enabled.to_string());
    put("analysis.alpha", join(&a.alphas));
    put(
        "analysis.mu",
        a.mu.map_or("lambda".into(), |m| format!("{m:?}")),
    );
    put("analysis.delta", format!("{:?}", a.delta));
    match a.constants {
        ConstantsChoice::Pick => put("analysis.constants", "pick".into()),
        ConstantsChoice::FpEpsilon(e) => {
            put("analysis.constants", "fp_epsilon".into());
            put("analysis.epsilon", format!("{e:?}"));
        }
    }
    put("analysis.cascade", a.cascade.to_string());
    put("analysis.certificate", a.certificate.to_string());
    put("analysis.fit", a.fit.to_string());
    put(
        "analysis.cascade_start",
        a.cascade_start.map_or("auto".into(), |j| j.to_string()),
    );
    put(
        "analysis.tail_shells",
        a.tail_shells.as_ref().map_or("all".into(), |v| join(v)),
    );
    let o = &config.output;
    put("output.dir", o.dir.clone());
    put("output.stride", o.stride.to_string());
    put(
        "output.formats",
        o.formats
            .iter()
            .map(|f| f.name())
            .collect::<Vec<_>>()
            .join(", "),
    );
    out
}

impl RunConfig {
    pub fn params(&self) -> Result<ModelParams, shell::ShellError> {
        let m = &self.model;
        let viscosity = if m.nu > 0.0 {
            Viscosity::Power {
                nu: m.nu,
                exponent: m.viscosity_exponent,
            }
        } else {
            Viscosity::None
        };
        ModelParams::new(m.kind, m.lambda, m.j0, m.n_shells, viscosity)
    }

    pub fn constants(&self) -> Result<BlowupConstants, blowup::BlowupError> {
        match self.analysis.constants {
            ConstantsChoice::Pick => blowup::pick_constants(
                self.model.lambda,
                self.mu(),
                self.analysis.alphas[0],
                self.analysis.delta,
            ),
            ConstantsChoice::FpEpsilon(eps) => Ok(blowup::fp_epsilon_constants(eps)),
        }
    }

    pub fn initial_state(&self) -> Result<ShellState, blowup::BlowupError> {
        let params = self.params()?;
        Ok(match &self.init {
            InitCondition::SingleShell { shell, amplitude } => {
                ShellState::single_shell(&params, *shell, *amplitude)?
            }
            InitCondition::Seed { shell, energy } => {
                blowup::seed_state(&params, *shell, self.constants()?.q, *energy)?
            }
            InitCondition::PowerLaw { flux } => blowup::obukhov_powerlaw_state(&params, *flux),
            InitCondition::Explicit { values } => ShellState::new(0.0, params.j0, values.clone()),
        })
    }

    pub fn mu(&self) -> f64 {
        self.analysis.mu.unwrap_or(self.model.lambda)
    }

    /// Shells whose tail energies go into diagnostics.
    pub fn tail_shells(&self) -> Vec<i32> {
        match &self.analysis.tail_shells {
            Some(v) => v.clone(),
            None => (self.model.j0..self.model.j0 + self.model.n_shells as i32).collect(),
        }
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.output.formats.contains(&format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_mapping() {
        let c = parse_config("model.kind = generic\nmodel.lambda = 2.0\n").unwrap();
        assert_eq!(c.model.kind, ModelKind::GenericChain);
        assert_eq!(c.model.lambda, 2.0);
        assert_eq!(c.params().unwrap().lhs_scale, 1.0);
    }

    #[test]
    fn trailing_comments_ignored() {
        let c = parse_config("# header\nmodel.lambda = 3.0   # ratio\nanalysis.mu = lambda#tied\n")
            .unwrap();
        assert_eq!(c.model.lambda, 3.0);
        assert_eq!(c.mu(), 3.0);
    }

    #[test]
    fn lambda_range_violation() {
        let e = parse_config("# header\nmodel.lambda = 0.5\n").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].line, 2);
        assert_eq!(e.0[0].kind, ConfigErrorKind::Range);
    }

    #[test]
    fn fp_lambda_consistency() {
        let e = parse_config("model.kind = fp\nmodel.lambda = 2.0\n").unwrap_err();
        assert_eq!(e.0[0].kind, ConfigErrorKind::Consistency);
        assert_eq!(e.0[0].line, 2);
        let c = parse_config("model.kind = fp\n").unwrap();
        assert_eq!(c.model.lambda, shell::fp_lambda());
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let e = parse_config("model.kind = generic\nmodel.lamda = 2\nmodel.kind = kp\nnonsense\n")
            .unwrap_err();
        let kinds: Vec<_> = e.0.iter().map(|e| (e.line, e.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                (2, ConfigErrorKind::UnknownKey),
                (3, ConfigErrorKind::Syntax),
                (4, ConfigErrorKind::Syntax)
            ]
        );
    }

    #[test]
    fn inapplicable_keys_are_errors() {
        let e = parse_config("init.kind = powerlaw\ninit.amplitude = 2\n").unwrap_err();
        assert_eq!(e.0[0].line, 2);
        assert_eq!(e.0[0].kind, ConfigErrorKind::Consistency);
    }

    #[test]
    fn viscosity_only_for_obukhov() {
        assert!(parse_config("model.nu = 0.1\n").is_err());
        let c = parse_config("model.kind = obukhov\nmodel.nu = 0.1\n").unwrap();
        assert!(!c.params().unwrap().is_inviscid());
    }

    #[test]
    fn shells_checked_against_truncation() {
        assert!(parse_config("model.n_shells = 10\ninit.shell = 10\n").is_err());
        assert!(parse_config("model.n_shells = 10\nanalysis.cascade_start = 5\n").is_err());
        assert!(parse_config("model.n_shells = 10\nanalysis.cascade_start = 4\n").is_ok());
        assert!(
            parse_config("init.kind = explicit\nmodel.n_shells = 3\ninit.values = 1, 2\n").is_err()
        );
    }

    #[test]
    fn render_round_trip() {
        let text = "model.kind = kp\nmodel.n_shells = 12\ninit.kind = explicit\n\
                    init.values = 1.0, 0.5, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1e-300\n\
                    analysis.alpha = 1, 1.5\nanalysis.tail_shells = 0, 3\n\
                    output.formats = csv\n";
        let c = parse_config(text).unwrap();
        assert_eq!(parse_config(&render(&c)).unwrap(), c);
    }
}
