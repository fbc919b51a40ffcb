//! Executable blow-up predicates for the chain models.
//!
//! For the chain `da_j/dt = λ^j a_{j-1}^2 - λ^{j+1} a_j a_{j+1}` with
//! non-negative data, the tail energy `E_B(j)` only grows. If
//! `E_B(J)(0) ≥ q^J`, the crossing times
//!
//! ```text
//! t_k = first t ≥ t_{k-1} with E_B(J+k)(t) ≥ q^{J+k}
//! ```
//!
//! satisfy `t_k - t_{k-1} ≤ ρ^{J+k-1}` whenever `λ ρ √q > 1`, so
//! `t_k ≤ ρ^J (1 - ρ^k) / (1 - ρ)` stays bounded while
//! `‖a‖²_{H^α} ≥ μ^{2α(J+k)} q^{J+k}` diverges when `μ^{2α} q > 1`.
//! This module checks those statements on computed trajectories and fits the
//! blow-up time, and also hosts the Obukhov flux and power-law diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{self, EventSpec, IntegratorConfig, IntegratorError, Trajectory};
use crate::shell::{self, ModelKind, ModelParams, ShellError, ShellState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlowupError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("constants are not admissible (valid_req={valid_req}, valid_bucond={valid_bucond})")]
    InadmissibleConstants { valid_req: bool, valid_bucond: bool },
    #[error("seed condition fails: E_B({shell}) = {tail:e} < q^J = {threshold:e}")]
    SeedConditionNotMet {
        shell: i32,
        tail: f64,
        threshold: f64,
    },
    #[error("initial data must be non-negative (a_{shell} = {value:e})")]
    NegativeData { shell: i32, value: f64 },
    #[error("no blow-up estimate: {0}")]
    NoEstimate(String),
    #[error("no starting shell in [{lo}, {hi}] passes the cascade check")]
    NoFloor { lo: i32, hi: i32 },
    #[error(transparent)]
    Shell(#[from] ShellError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// Relative slack on crossing-time bounds.
pub const CROSSING_TIME_TOL: f64 = 1e-6;
/// Shells at the top of the truncation excluded from crossing checks.
pub const TRUNCATION_BUFFER: i32 = 5;
/// Minimum growth of the norm, in decades, required for a blow-up fit.
pub const MIN_GROWTH_DECADES: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupConstants {
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub delta: f64,
    pub q: f64,
    pub rho: f64,
    /// `λ ρ √q > 1` with `0 < q < 1` and `0 < ρ < 1`.
    pub valid_req: bool,
    /// `μ^{2α} q > 1`.
    pub valid_bucond: bool,
}

pub fn req_holds(lambda: f64, rho: f64, q: f64) -> bool {
    q > 0.0 && q < 1.0 && rho > 0.0 && rho < 1.0 && lambda * rho * q.sqrt() > 1.0
}

pub fn bucond_holds(mu: f64, alpha: f64, q: f64) -> bool {
    mu.powf(2.0 * alpha) * q > 1.0
}

impl BlowupConstants {
    /// Constants with an explicitly chosen `(q, ρ)`; `δ` is recovered from
    /// `q = μ^{-2α+δ}`.
    pub fn from_parts(lambda: f64, mu: f64, alpha: f64, q: f64, rho: f64) -> Self {
        let delta = q.ln() / mu.ln() + 2.0 * alpha;
        Self {
            lambda,
            mu,
            alpha,
            delta,
            q,
            rho,
            valid_req: req_holds(lambda, rho, q),
            valid_bucond: bucond_holds(mu, alpha, q),
        }
    }

    pub fn is_admissible(&self) -> bool {
        self.valid_req && self.valid_bucond
    }

    /// Open interval `(λ^{-1} q^{-1/2}, 1)` of admissible `ρ`, if non-empty.
    pub fn rho_interval(&self) -> Option<(f64, f64)> {
        rho_interval(self.lambda, self.q)
    }

    /// `ρ^J (1 - ρ^k) / (1 - ρ)`.
    pub fn cumulative_bound(&self, start_shell: i32, k: usize) -> f64 {
        self.rho.powi(start_shell) * (1.0 - self.rho.powi(k as i32)) / (1.0 - self.rho)
    }

    /// Seed threshold `q^j`.
    pub fn threshold(&self, j: i32) -> f64 {
        self.q.powi(j)
    }

    /// `μ^{2α j} q^j`.
    pub fn norm_lower_bound(&self, j: i32) -> f64 {
        (j as f64 * (2.0 * self.alpha * self.mu.ln() + self.q.ln())).exp()
    }
}

fn rho_interval(lambda: f64, q: f64) -> Option<(f64, f64)> {
    if !(q > 0.0 && q < 1.0) {
        return None;
    }
    let lo = 1.0 / (lambda * q.sqrt());
    (lo < 1.0).then_some((lo, 1.0))
}

/// `q = μ^{-2α+δ}` and `ρ` at the midpoint of its admissible interval.
///
/// When that interval is empty `ρ` is set to 1 and `valid_req` is false.
pub fn pick_constants(
    lambda: f64,
    mu: f64,
    alpha: f64,
    delta: f64,
) -> Result<BlowupConstants, BlowupError> {
    if !(lambda > 1.0 && mu > 1.0 && alpha > 0.0 && delta.is_finite()) {
        return Err(BlowupError::InvalidInput(format!(
            "need lambda > 1, mu > 1, alpha > 0 (got {lambda}, {mu}, {alpha}, delta {delta})"
        )));
    }
    let q = mu.powf(-2.0 * alpha + delta);
    let rho = rho_interval(lambda, q).map_or(1.0, |(lo, hi)| 0.5 * (lo + hi));
    Ok(BlowupConstants {
        lambda,
        mu,
        alpha,
        delta,
        q,
        rho,
        valid_req: req_holds(lambda, rho, q),
        valid_bucond: bucond_holds(mu, alpha, q),
    })
}

/// The Friedlander-Pavlovic choice `λ = 2^{5/2}`, `μ = 2`,
/// `q = 2^{-3-ε}`, `ρ = 2^{-ε}` for the `H^{3/2+ε}` norm.
pub fn fp_epsilon_constants(epsilon: f64) -> BlowupConstants {
    let q = 2f64.powf(-3.0 - epsilon);
    let rho = 2f64.powf(-epsilon);
    BlowupConstants::from_parts(shell::fp_lambda(), 2.0, 1.5 + epsilon, q, rho)
}

/// All energy at shell `j` with `E_B(j)(0) = max(q^j, energy)`.
pub fn seed_state(
    params: &ModelParams,
    shell: i32,
    q: f64,
    energy: f64,
) -> Result<ShellState, BlowupError> {
    let e = q.powi(shell).max(energy);
    Ok(ShellState::single_shell(params, shell, e.sqrt())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingStep {
    pub k: usize,
    pub shell: i32,
    pub threshold: f64,
    /// `None` when the trajectory ended before the crossing.
    pub t_k: Option<f64>,
    /// `ρ^{J+k-1}`.
    pub bound: f64,
    pub satisfied: Option<bool>,
    /// `ρ^J (1 - ρ^k) / (1 - ρ)`.
    pub cumulative_bound: f64,
    pub cumulative_satisfied: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub start_shell: i32,
    pub q: f64,
    pub rho: f64,
    pub t0: f64,
    pub steps: Vec<CrossingStep>,
    /// Deepest `k` checked before the truncation buffer.
    pub max_k: usize,
}

impl CrossingReport {
    pub fn resolved(&self) -> impl Iterator<Item = &CrossingStep> {
        self.steps.iter().filter(|s| s.t_k.is_some())
    }

    pub fn resolved_depth(&self) -> usize {
        self.steps.iter().take_while(|s| s.t_k.is_some()).count()
    }

    /// Every resolved step meets both its own and the cumulative bound.
    pub fn all_satisfied(&self) -> bool {
        self.resolved()
            .all(|s| s.satisfied == Some(true) && s.cumulative_satisfied == Some(true))
    }
}

/// Last shell used by crossing checks on a model.
pub fn last_checked_shell(params: &ModelParams) -> i32 {
    params.last_shell() - TRUNCATION_BUFFER
}

/// Threshold events `(J+k, q^{J+k})` for `k = 0..`, up to the buffer.
pub fn cascade_events(params: &ModelParams, q: f64, start_shell: i32) -> Vec<EventSpec> {
    (start_shell..=last_checked_shell(params))
        .map(|j| EventSpec::up(j, q.powi(j)))
        .collect()
}

/// Measures the crossing cascade from shell `start_shell` along `trajectory`.
pub fn verify_lemma_cascade(
    trajectory: &Trajectory,
    constants: &BlowupConstants,
    start_shell: i32,
) -> Result<CrossingReport, BlowupError> {
    let params = &trajectory.params;
    if !params.kind.is_chain() {
        return Err(ShellError::UnsupportedKind(params.kind).into());
    }
    if !constants.valid_req {
        return Err(BlowupError::InadmissibleConstants {
            valid_req: constants.valid_req,
            valid_bucond: constants.valid_bucond,
        });
    }
    let first = trajectory.first();
    if let Some((shell, value)) = first.shells().find(|&(_, v)| v < 0.0) {
        return Err(BlowupError::NegativeData { shell, value });
    }
    let last = last_checked_shell(params);
    if start_shell < params.j0 || start_shell > last {
        return Err(ShellError::ShellOutOfRange {
            shell: start_shell,
            lo: params.j0,
            hi: last,
        }
        .into());
    }
    let seed_tail = shell::tail_energy(first, start_shell)?;
    let seed_threshold = constants.threshold(start_shell);
    if seed_tail < seed_threshold {
        return Err(BlowupError::SeedConditionNotMet {
            shell: start_shell,
            tail: seed_tail,
            threshold: seed_threshold,
        });
    }

    let q = constants.q;
    let rho = constants.rho;
    let thresholds: Vec<(i32, f64)> = (start_shell + 1..=last).map(|j| (j, q.powi(j))).collect();
    let first_times = integrator::crossing_times(trajectory, &thresholds)?;
    let t0 = first.t;
    let mut prev = Some(t0);
    let mut steps = Vec::with_capacity(thresholds.len());
    for (i, (&(j, theta), first_t)) in thresholds.iter().zip(first_times).enumerate() {
        let k = i + 1;
        // the tail is non-decreasing, so the first time after t_{k-1} is the max
        let t_k = match (prev, first_t) {
            (Some(p), Some(t)) => Some(t.max(p)),
            _ => None,
        };
        let bound = rho.powi(start_shell + k as i32 - 1);
        let cumulative_bound = constants.cumulative_bound(start_shell, k);
        let satisfied = match (prev, t_k) {
            (Some(p), Some(t)) => Some(t - p <= bound * (1.0 + CROSSING_TIME_TOL)),
            _ => None,
        };
        let cumulative_satisfied =
            t_k.map(|t| t - t0 <= cumulative_bound * (1.0 + CROSSING_TIME_TOL));
        steps.push(CrossingStep {
            k,
            shell: j,
            threshold: theta,
            t_k,
            bound,
            satisfied,
            cumulative_bound,
            cumulative_satisfied,
        });
        prev = t_k;
    }
    Ok(CrossingReport {
        start_shell,
        q,
        rho,
        t0,
        max_k: steps.len(),
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub k: usize,
    pub t_k: f64,
    /// `μ^{2α(J+k)} q^{J+k}`.
    pub lower_bound: f64,
    /// Squared `H^α` norm of the state at `t_k`.
    pub measured: f64,
    pub holds: bool,
}

/// Squared `H^α` norm against its crossing lower bound at every resolved
/// `t_k`.
pub fn norm_divergence_certificate(
    trajectory: &Trajectory,
    constants: &BlowupConstants,
    report: &CrossingReport,
) -> Vec<CertificateEntry> {
    report
        .steps
        .iter()
        .filter_map(|s| {
            let t = s.t_k?;
            let state = trajectory.state_at(t);
            let measured = shell::sobolev_norm_sq(&state, constants.alpha, constants.mu);
            let lower_bound = constants.norm_lower_bound(s.shell);
            Some(CertificateEntry {
                k: s.k,
                t_k: t,
                lower_bound,
                measured,
                holds: measured >= lower_bound,
            })
        })
        .collect()
}

/// Outcome of the search for the smallest start shell that passes.
#[derive(Debug, Clone)]
pub struct CascadeFloor {
    pub start_shell: i32,
    pub report: CrossingReport,
    pub trajectory: Trajectory,
    /// Start shells tried below the floor, with their failing reports.
    pub below_floor: Vec<CrossingReport>,
}

/// Seeds each candidate `J = j0, j0+1, …` with `a_J = q^{J/2}`, integrates
/// with crossing events, and returns the first `J` whose cascade resolves at
/// least `min_levels` levels with every step inside its bound.
pub fn find_cascade_floor(
    params: &ModelParams,
    constants: &BlowupConstants,
    base: &IntegratorConfig,
    min_levels: usize,
) -> Result<CascadeFloor, BlowupError> {
    if !constants.is_admissible() {
        return Err(BlowupError::InadmissibleConstants {
            valid_req: constants.valid_req,
            valid_bucond: constants.valid_bucond,
        });
    }
    let hi = last_checked_shell(params) - min_levels as i32;
    let mut below_floor = Vec::new();
    for start in params.j0..=hi {
        let init = seed_state(params, start, constants.q, 0.0)?;
        let mut cfg = base.clone();
        cfg.events = cascade_events(params, constants.q, start);
        let traj = integrator::integrate(params, &init, &cfg)?;
        let report = verify_lemma_cascade(&traj, constants, start)?;
        if report.resolved_depth() >= min_levels && report.all_satisfied() {
            return Ok(CascadeFloor {
                start_shell: start,
                report,
                trajectory: traj,
                below_floor,
            });
        }
        below_floor.push(report);
    }
    Err(BlowupError::NoFloor { lo: params.j0, hi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    pub t_star: f64,
    /// Exponent in `‖a‖ ≈ C (t* - t)^{-γ}`.
    pub gamma: f64,
    pub log_prefactor: f64,
    pub rms_residual: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub points: usize,
    pub growth_decades: f64,
}

/// Fits `ln n = c - γ ln(t* - t)` over the final growth window of a norm
/// series. The window holds the samples in the upper 60% of the log-growth
/// range, excluding the last two samples.
pub fn fit_blowup_series(times: &[f64], norms: &[f64]) -> Result<BlowupFit, BlowupError> {
    if times.len() != norms.len() {
        return Err(BlowupError::InvalidInput(
            "times and norms differ in length".into(),
        ));
    }
    if times.len() < 8 {
        return Err(BlowupError::NoEstimate(format!(
            "{} samples, need at least 8",
            times.len()
        )));
    }
    if norms.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
        return Err(BlowupError::NoEstimate(
            "norms must be positive and finite".into(),
        ));
    }
    let usable = times.len() - 2;
    let logs: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    let l_min = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let growth_decades =
        (logs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - l_min) / std::f64::consts::LN_10;
    if growth_decades < MIN_GROWTH_DECADES * (1.0 - 1e-9) {
        return Err(BlowupError::NoEstimate(format!(
            "norm grows by {growth_decades:.2} decades, need {MIN_GROWTH_DECADES}"
        )));
    }
    let l_max = logs[..usable]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let cut = l_min + 0.4 * (l_max - l_min);
    let window: Vec<usize> = (0..usable).filter(|&i| logs[i] >= cut).collect();
    if window.len() < 4 {
        return Err(BlowupError::NoEstimate(format!(
            "only {} samples in the fit window",
            window.len()
        )));
    }
    let t_last = times[times.len() - 1];
    let t_first = times[window[0]];
    let span = (t_last - t_first).max(f64::EPSILON * t_last.abs().max(1.0));

    // for fixed t*, (c, γ) follow from linear least squares
    let solve_at = |t_star: f64| -> (f64, f64, f64) {
        let n = window.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &i in &window {
            let x = -(t_star - times[i]).ln();
            let y = logs[i];
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let det = n * sxx - sx * sx;
        let gamma = if det.abs() > 0.0 {
            (n * sxy - sx * sy) / det
        } else {
            0.0
        };
        let c = (sy - gamma * sx) / n;
        let rss: f64 = window
            .iter()
            .map(|&i| {
                let r = logs[i] - c + gamma * (t_star - times[i]).ln();
                r * r
            })
            .sum();
        (c, gamma, rss)
    };

    // search over s = ln(t* - t_last)
    let s_lo = (span * 1e-12).ln();
    let s_hi = (span * 100.0).ln();
    let grid = 400;
    let rss_at = |s: f64| solve_at(t_last + s.exp()).2;
    let mut best = (s_lo, f64::INFINITY);
    for g in 0..=grid {
        let s = s_lo + (s_hi - s_lo) * g as f64 / grid as f64;
        let r = rss_at(s);
        if r < best.1 {
            best = (s, r);
        }
    }
    let h = (s_hi - s_lo) / grid as f64;
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (rss_at(x1), rss_at(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = rss_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = rss_at(x2);
        }
    }
    let s = 0.5 * (a + b);
    let t_star = t_last + s.exp();
    let (c, gamma, rss) = solve_at(t_star);
    if !(gamma > 0.0) {
        return Err(BlowupError::NoEstimate(format!(
            "fitted exponent {gamma} is not positive"
        )));
    }
    Ok(BlowupFit {
        t_star,
        gamma,
        log_prefactor: c,
        rms_residual: (rss / window.len() as f64).sqrt(),
        window_start: t_first,
        window_end: times[window[window.len() - 1]],
        points: window.len(),
        growth_decades,
    })
}

/// Blow-up time from the `H^α` norm history of a trajectory.
pub fn estimate_blowup_time(
    trajectory: &Trajectory,
    alpha: f64,
    mu: f64,
) -> Result<BlowupFit, BlowupError> {
    let times: Vec<f64> = trajectory.times().collect();
    let norms: Vec<f64> = trajectory
        .samples
        .iter()
        .map(|s| shell::sobolev_norm_sq(s, alpha, mu).sqrt())
        .collect();
    fit_blowup_series(&times, &norms)
}

fn require_obukhov(params: &ModelParams) -> Result<(), BlowupError> {
    if params.kind != ModelKind::Obukhov {
        return Err(ShellError::UnsupportedKind(params.kind).into());
    }
    Ok(())
}

/// Energy flux `½ d/dt E_B(j)` through shell `j` of the Obukhov model:
/// the inflow `λ^j a_{j-1} a_j^2` minus viscous losses above `j`, over the
/// left-hand factor.
pub fn obukhov_flux(params: &ModelParams, state: &ShellState, j: i32) -> Result<f64, BlowupError> {
    require_obukhov(params)?;
    state.conforms_to(params)?;
    if !params.contains_shell(j) {
        return Err(ShellError::ShellOutOfRange {
            shell: j,
            lo: params.j0,
            hi: params.last_shell(),
        }
        .into());
    }
    let a_j = state.amplitude(j);
    let inflow = params.wavenumber(j) * state.amplitude(j - 1) * a_j * a_j;
    let dissipation: f64 = (j..=params.last_shell())
        .map(|l| params.viscosity_at(l) * state.amplitude(l).powi(2))
        .sum();
    Ok((inflow - dissipation) / params.lhs_scale)
}

/// Constant-flux amplitude `a_j = λ^{-2/9} 𝓔^{1/3} λ^{-j/3}`.
pub fn obukhov_powerlaw(lambda: f64, flux: f64, j: i32) -> f64 {
    lambda.powf(-2.0 / 9.0) * flux.cbrt() * lambda.powf(-(j as f64) / 3.0)
}

pub fn obukhov_powerlaw_state(params: &ModelParams, flux: f64) -> ShellState {
    let a = (params.j0..=params.last_shell())
        .map(|j| obukhov_powerlaw(params.lambda, flux, j))
        .collect();
    ShellState::new(0.0, params.j0, a)
}

/// Whether energy passes from shell `l` to `l+1`: `λ^{l+1} a_l > ν_{l+1}`
/// (local Reynolds number above one).
pub fn cascade_criterion(
    params: &ModelParams,
    state: &ShellState,
    l: i32,
) -> Result<bool, BlowupError> {
    require_obukhov(params)?;
    state.conforms_to(params)?;
    if !params.contains_shell(l) {
        return Err(ShellError::ShellOutOfRange {
            shell: l,
            lo: params.j0,
            hi: params.last_shell(),
        }
        .into());
    }
    Ok(params.wavenumber(l + 1) * state.amplitude(l) > params.viscosity_at(l + 1))
}

/// For `a_j ∝ λ^{βj}`, positivity of the inviscid Obukhov flow requires
/// `β ≤ -1/3`.
pub fn powerlaw_positivity_exponent_ok(beta: f64) -> bool {
    beta <= -1.0 / 3.0
}

/// Checks `a_{j-1} a_j ≥ λ a_{j+1}^2` for `a_j = λ^{βj}` at each sampled
/// shell, comparing exponents of `λ` with a relative slack of `1e-12`.
pub fn powerlaw_positivity_sampled(beta: f64, shells: impl IntoIterator<Item = i32>) -> bool {
    shells.into_iter().all(|j| {
        let j = j as f64;
        let lhs = beta * (2.0 * j - 1.0);
        let rhs = 1.0 + 2.0 * beta * (j + 1.0);
        lhs >= rhs - 1e-12 * (1.0 + lhs.abs() + rhs.abs())
    })
}
