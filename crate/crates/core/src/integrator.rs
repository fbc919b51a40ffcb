//! Adaptive Dormand-Prince 5(4) integration with event location.
//!
//! The stepper is generic over [`OdeSystem`]; [`integrate`] wraps it for the
//! chain models and packages the result as a [`Trajectory`]. Between accepted
//! steps the solution is represented by the cubic Hermite interpolant built
//! from the endpoint states and derivatives, and event times (tail-energy
//! threshold crossings, the blow-up stop) are located by bisection on it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shell::{self, ChainModel, ModelParams, ShellError, ShellState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Shell(#[from] ShellError),
}

/// Failure of a right-hand-side evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsError {
    /// Some component exceeded the representable-amplitude threshold.
    Overflow,
    /// Some component is NaN or infinite.
    NonFinite,
}

impl From<ShellError> for RhsError {
    fn from(e: ShellError) -> Self {
        match e {
            ShellError::NumericOverflow { value, .. } if value.is_finite() => RhsError::Overflow,
            _ => RhsError::NonFinite,
        }
    }
}

pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), RhsError>;

    /// Blow-up indicator compared against `stop_norm`.
    fn stop_measure(&self, y: &[f64]) -> f64 {
        y.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Adapts a closure `(t, y, dydt)` into an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), RhsError> {
        (self.f)(t, y, dydt);
        if dydt.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(RhsError::NonFinite)
        }
    }
}

impl OdeSystem for ChainModel {
    fn dim(&self) -> usize {
        ChainModel::dim(self)
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), RhsError> {
        self.rhs_into(y, dydt).map_err(RhsError::from)
    }

    fn stop_measure(&self, y: &[f64]) -> f64 {
        self.slope_measure(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

/// Tail-energy threshold event on absolute shell `shell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub shell: i32,
    pub threshold: f64,
    pub direction: Direction,
}

impl EventSpec {
    pub fn up(shell: i32, threshold: f64) -> Self {
        Self {
            shell,
            threshold,
            direction: Direction::Up,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_end: f64,
    /// Halt once the system's stop measure exceeds this value.
    pub stop_norm: f64,
    /// Budget of attempted steps.
    pub max_steps: usize,
    pub events: Vec<EventSpec>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            t_end: 1.0,
            stop_norm: 1e12,
            max_steps: 2_000_000,
            events: Vec::new(),
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(t_end: f64) -> Self {
        Self {
            t_end,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        let bad = |m: String| Err(IntegratorError::InvalidConfig(m));
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad(format!(
                "tolerances must be positive (rel_tol={}, abs_tol={})",
                self.rel_tol, self.abs_tol
            ));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!(
                "t_end must be positive and finite, got {}",
                self.t_end
            ));
        }
        if !(self.stop_norm > 1.0) {
            return bad(format!("stop_norm must exceed 1, got {}", self.stop_norm));
        }
        if !(self.max_step > 0.0) {
            return bad(format!("max_step must be positive, got {}", self.max_step));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ReachedTEnd,
    /// Stop measure exceeded `stop_norm`, amplitude overflow, or step-size
    /// underflow.
    BlowupStop,
    /// Non-finite values appeared.
    Overflow,
    /// `max_steps` attempted steps without reaching any other stop.
    StepLimit,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::BlowupStop => "blowup_stop",
            Termination::Overflow => "overflow",
            Termination::StepLimit => "step_limit",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Event fired by the generic stepper: `index` refers to the event list.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHit {
    pub index: usize,
    pub t: f64,
    pub value: f64,
}

/// Tail sum of squares from component `offset`, compared against `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEvent {
    pub offset: usize,
    pub threshold: f64,
    pub direction: Direction,
}

impl TailEvent {
    fn value(&self, y: &[f64]) -> f64 {
        y[self.offset.min(y.len())..].iter().map(|v| v * v).sum()
    }

    fn fired(&self, before: f64, after: f64) -> bool {
        match self.direction {
            Direction::Up => before < self.threshold && after >= self.threshold,
            Direction::Down => before > self.threshold && after <= self.threshold,
        }
    }

    fn already(&self, value: f64) -> bool {
        match self.direction {
            Direction::Up => value >= self.threshold,
            Direction::Down => value <= self.threshold,
        }
    }
}

/// Output of the generic stepper.
#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    pub events: Vec<EventHit>,
    pub termination: Termination,
    pub stats: Stats,
}

impl Solution {
    pub fn last_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("solution has at least the initial sample")
    }

    pub fn last_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("solution has at least the initial sample")
    }

    /// Hermite interpolant at `t` inside the sampled range.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        dense_at(&self.times, &self.states, &self.derivatives, t)
    }
}

pub(crate) fn dense_at(
    times: &[f64],
    states: &[Vec<f64>],
    derivs: &[Vec<f64>],
    t: f64,
) -> Vec<f64> {
    let n = times.len();
    if n == 1 || t <= times[0] {
        return states[0].clone();
    }
    if t >= times[n - 1] {
        return states[n - 1].clone();
    }
    let i = times.partition_point(|&s| s <= t) - 1;
    let step = HermiteStep {
        t0: times[i],
        h: times[i + 1] - times[i],
        y0: &states[i],
        f0: &derivs[i],
        y1: &states[i + 1],
        f1: &derivs[i + 1],
    };
    let mut out = vec![0.0; states[i].len()];
    step.eval(t, &mut out);
    out
}

struct HermiteStep<'a> {
    t0: f64,
    h: f64,
    y0: &'a [f64],
    f0: &'a [f64],
    y1: &'a [f64],
    f1: &'a [f64],
}

impl HermiteStep<'_> {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let s = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for i in 0..out.len() {
            out[i] = h00 * self.y0[i]
                + h10 * self.h * self.f0[i]
                + h01 * self.y1[i]
                + h11 * self.h * self.f1[i];
        }
    }

    /// First `t` in the step where `g(y(t))` changes from `!hit` to `hit`,
    /// assuming `hit` is false at the left end and true at the right end.
    fn locate(&self, mut hit: impl FnMut(&[f64]) -> bool, time_tol: f64) -> f64 {
        let mut lo = self.t0;
        let mut hi = self.t0 + self.h;
        let mut buf = vec![0.0; self.y0.len()];
        for _ in 0..200 {
            if hi - lo <= time_tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            self.eval(mid, &mut buf);
            if hit(&buf) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Accuracy of event location relative to the time scale of the step.
pub const EVENT_TIME_TOL: f64 = 1e-12;

mod dp54 {
    pub const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    pub const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    /// Difference between the 5th- and 4th-order weights.
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
}

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

struct Workspace {
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            y_stage: vec![0.0; n],
            y_new: vec![0.0; n],
        }
    }
}

/// Attempts one step of size `h` from `(t, y)` with `k[0] = f(t, y)`.
/// On success `ws.y_new` holds the 5th-order solution, `ws.k[6]` its
/// derivative, and the scaled max-norm error estimate is returned.
fn try_step<S: OdeSystem>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    cfg: &IntegratorConfig,
    ws: &mut Workspace,
    stats: &mut Stats,
) -> Result<f64, RhsError> {
    let n = y.len();
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (r, a) in dp54::A[s][..s].iter().enumerate() {
                acc += a * ws.k[r][i];
            }
            ws.y_stage[i] = y[i] + h * acc;
        }
        sys.rhs(t + dp54::C[s] * h, &ws.y_stage, &mut ws.k[s])?;
        stats.rhs_evals += 1;
    }
    // stage 7 is evaluated at the 5th-order solution (FSAL)
    ws.y_new.copy_from_slice(&ws.y_stage);
    let mut err: f64 = 0.0;
    for i in 0..n {
        let mut e = 0.0;
        for (r, w) in dp54::E.iter().enumerate() {
            e += w * ws.k[r][i];
        }
        let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(ws.y_new[i].abs());
        err = err.max((h * e).abs() / scale);
    }
    if !err.is_finite() || ws.y_new.iter().any(|v| !v.is_finite()) {
        return Err(RhsError::NonFinite);
    }
    Ok(err)
}

fn initial_step<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    cfg: &IntegratorConfig,
    stats: &mut Stats,
) -> f64 {
    let n = y0.len().max(1) as f64;
    let scaled = |v: &[f64]| -> f64 {
        (v.iter()
            .zip(y0)
            .map(|(x, y)| (x / (cfg.abs_tol + cfg.rel_tol * y.abs())).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = scaled(y0);
    let d1 = scaled(f0);
    let span = cfg.t_end - t0;
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span).min(cfg.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    if sys.rhs(t0 + h0, &y1, &mut f1).is_err() {
        return h0 * 1e-3;
    }
    stats.rhs_evals += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).min(cfg.max_step)
}

/// Integrates `sys` from `(t0, y0)` up to `cfg.t_end` or the first stop
/// condition. Events are tail sums of squares over state components.
pub fn solve<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    cfg: &IntegratorConfig,
    events: &[TailEvent],
) -> Result<Solution, IntegratorError> {
    cfg.validate()?;
    let n = sys.dim();
    if y0.len() != n {
        return Err(IntegratorError::InvalidConfig(format!(
            "initial state has {} components, system has {n}",
            y0.len()
        )));
    }
    if cfg.t_end <= t0 {
        return Err(IntegratorError::InvalidConfig(format!(
            "t_end {} must exceed the initial time {t0}",
            cfg.t_end
        )));
    }
    let mut stats = Stats::default();
    let mut f0 = vec![0.0; n];
    let mut sol = Solution {
        times: vec![t0],
        states: vec![y0.to_vec()],
        derivatives: Vec::new(),
        events: Vec::new(),
        termination: Termination::ReachedTEnd,
        stats,
    };
    if let Err(e) = sys.rhs(t0, y0, &mut f0) {
        sol.derivatives.push(vec![0.0; n]);
        sol.termination = match e {
            RhsError::Overflow => Termination::BlowupStop,
            RhsError::NonFinite => Termination::Overflow,
        };
        return Ok(sol);
    }
    stats.rhs_evals += 1;
    sol.derivatives.push(f0.clone());

    let mut pending: Vec<bool> = vec![true; events.len()];
    let mut values: Vec<f64> = events.iter().map(|e| e.value(y0)).collect();
    for (i, ev) in events.iter().enumerate() {
        if ev.already(values[i]) {
            sol.events.push(EventHit {
                index: i,
                t: t0,
                value: values[i],
            });
            pending[i] = false;
        }
    }
    if sys.stop_measure(y0) >= cfg.stop_norm {
        sol.termination = Termination::BlowupStop;
        sol.stats = stats;
        return Ok(sol);
    }

    let mut ws = Workspace::new(n);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f = f0;
    let mut h = initial_step(sys, t0, &y, &f, cfg, &mut stats);
    let mut err_prev: f64 = 1e-4;
    let mut last_failure: Option<RhsError> = None;
    let mut rejected_last = false;

    loop {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            sol.termination = Termination::StepLimit;
            break;
        }
        let remaining = cfg.t_end - t;
        let last_step = h >= remaining;
        let h_try = if last_step {
            remaining
        } else {
            h.min(cfg.max_step)
        };
        let min_step = 16.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE);
        if h_try < min_step && !last_step {
            sol.termination = match last_failure {
                Some(RhsError::NonFinite) => Termination::Overflow,
                _ => Termination::BlowupStop,
            };
            break;
        }
        ws.k[0].copy_from_slice(&f);
        let err = match try_step(sys, t, &y, h_try, cfg, &mut ws, &mut stats) {
            Ok(e) => e,
            Err(e) => {
                last_failure = Some(e);
                stats.rejected += 1;
                rejected_last = true;
                h = 0.25 * h_try;
                continue;
            }
        };
        if err > 1.0 {
            stats.rejected += 1;
            let fac = (SAFETY * err.powf(-PI_ALPHA)).clamp(FAC_MIN, 1.0);
            h = h_try * fac;
            rejected_last = true;
            continue;
        }
        last_failure = None;
        stats.accepted += 1;
        let t_new = if last_step { cfg.t_end } else { t + h_try };
        let y_new = ws.y_new.clone();
        let f_new = ws.k[6].clone();

        let step = HermiteStep {
            t0: t,
            h: t_new - t,
            y0: &y,
            f0: &f,
            y1: &y_new,
            f1: &f_new,
        };
        let time_tol = EVENT_TIME_TOL * t_new.abs().max(t_new - t);

        let stop_t = if sys.stop_measure(&y_new) >= cfg.stop_norm {
            Some(step.locate(|s| sys.stop_measure(s) >= cfg.stop_norm, time_tol))
        } else {
            None
        };
        let horizon = stop_t.unwrap_or(t_new);

        let mut fired: Vec<(f64, usize)> = Vec::new();
        for (i, ev) in events.iter().enumerate() {
            if !pending[i] {
                continue;
            }
            let v_new = ev.value(&y_new);
            if ev.fired(values[i], v_new) {
                let te = step.locate(|s| ev.already(ev.value(s)), time_tol);
                if te <= horizon {
                    fired.push((te, i));
                    pending[i] = false;
                }
            }
            values[i] = v_new;
        }
        fired.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut buf = vec![0.0; n];
        for &(te, i) in &fired {
            step.eval(te, &mut buf);
            sol.events.push(EventHit {
                index: i,
                t: te,
                value: events[i].value(&buf),
            });
            if te > t && te < horizon && te > *sol.times.last().unwrap() {
                let mut d = vec![0.0; n];
                if sys.rhs(te, &buf, &mut d).is_ok() {
                    stats.rhs_evals += 1;
                    sol.times.push(te);
                    sol.states.push(buf.clone());
                    sol.derivatives.push(d);
                }
            }
        }

        if let Some(ts) = stop_t {
            if ts > *sol.times.last().unwrap() {
                step.eval(ts, &mut buf);
                let mut d = vec![0.0; n];
                if sys.rhs(ts, &buf, &mut d).is_ok() {
                    stats.rhs_evals += 1;
                    sol.times.push(ts);
                    sol.states.push(buf);
                    sol.derivatives.push(d);
                }
            }
            sol.termination = Termination::BlowupStop;
            break;
        }

        sol.times.push(t_new);
        sol.states.push(y_new.clone());
        sol.derivatives.push(f_new.clone());
        t = t_new;
        y = y_new;
        f = f_new;
        if last_step {
            sol.termination = Termination::ReachedTEnd;
            break;
        }

        // PI step-size control
        let err_c = err.max(1e-10);
        let mut fac = SAFETY * err_c.powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
        fac = fac.clamp(FAC_MIN, FAC_MAX);
        if rejected_last {
            fac = fac.min(1.0);
        }
        rejected_last = false;
        err_prev = err_c;
        h = h_try * fac;
    }
    sol.stats = stats;
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub direction: Direction,
    pub shell: i32,
    pub threshold: f64,
    /// Tail energy at the located time.
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub config: IntegratorConfig,
    pub samples: Vec<ShellState>,
    pub events: Vec<EventRecord>,
    pub termination: Termination,
    pub stats: Stats,
    #[serde(skip)]
    derivatives: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn first(&self) -> &ShellState {
        &self.samples[0]
    }

    pub fn last(&self) -> &ShellState {
        self.samples.last().expect("trajectory is never empty")
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    fn derivative_table(&self) -> Vec<Vec<f64>> {
        if self.derivatives.len() == self.samples.len() {
            return self.derivatives.clone();
        }
        let model = ChainModel::new(self.params).expect("validated parameters");
        self.samples
            .iter()
            .map(|s| {
                let mut d = vec![0.0; s.a.len()];
                let _ = model.rhs_into(&s.a, &mut d);
                d
            })
            .collect()
    }

    fn derivative(&self, i: usize) -> Vec<f64> {
        if self.derivatives.len() == self.samples.len() {
            return self.derivatives[i].clone();
        }
        let model = ChainModel::new(self.params).expect("validated parameters");
        let mut d = vec![0.0; self.samples[i].a.len()];
        let _ = model.rhs_into(&self.samples[i].a, &mut d);
        d
    }

    /// Dense-output state at `t`, clamped to the sampled time range.
    pub fn state_at(&self, t: f64) -> ShellState {
        let times: Vec<f64> = self.times().collect();
        let n = times.len();
        let j0 = self.params.j0;
        if n == 1 || t <= times[0] {
            return ShellState::new(times[0], j0, self.samples[0].a.clone());
        }
        if t >= times[n - 1] {
            return ShellState::new(times[n - 1], j0, self.last().a.clone());
        }
        let i = times.partition_point(|&s| s <= t) - 1;
        let (f0, f1) = (self.derivative(i), self.derivative(i + 1));
        let step = HermiteStep {
            t0: times[i],
            h: times[i + 1] - times[i],
            y0: &self.samples[i].a,
            f0: &f0,
            y1: &self.samples[i + 1].a,
            f1: &f1,
        };
        let mut a = vec![0.0; self.params.n_shells];
        step.eval(t, &mut a);
        ShellState::new(t, j0, a)
    }

    /// Rebuilds the derivative cache after deserialisation.
    pub fn with_derivatives(mut self) -> Self {
        self.derivatives = self.derivative_table();
        self
    }
}

/// Integrates a chain model from `initial`.
pub fn integrate(
    params: &ModelParams,
    initial: &ShellState,
    config: &IntegratorConfig,
) -> Result<Trajectory, IntegratorError> {
    config.validate()?;
    initial.conforms_to(params)?;
    let model = ChainModel::new(*params)?;
    let mut tail_events = Vec::with_capacity(config.events.len());
    for ev in &config.events {
        if !params.contains_shell(ev.shell) {
            return Err(ShellError::ShellOutOfRange {
                shell: ev.shell,
                lo: params.j0,
                hi: params.last_shell(),
            }
            .into());
        }
        tail_events.push(TailEvent {
            offset: (ev.shell - params.j0) as usize,
            threshold: ev.threshold,
            direction: ev.direction,
        });
    }
    let sol = solve(&model, initial.t, &initial.a, config, &tail_events)?;
    let j0 = params.j0;
    let samples = sol
        .times
        .iter()
        .zip(sol.states)
        .map(|(&t, a)| ShellState::new(t, j0, a))
        .collect();
    let events = sol
        .events
        .iter()
        .map(|hit| {
            let spec = config.events[hit.index];
            EventRecord {
                t: hit.t,
                direction: spec.direction,
                shell: spec.shell,
                threshold: spec.threshold,
                value: hit.value,
            }
        })
        .collect();
    Ok(Trajectory {
        params: *params,
        config: config.clone(),
        samples,
        events,
        termination: sol.termination,
        stats: sol.stats,
        derivatives: sol.derivatives,
    })
}

/// First time the tail energy `E_B(j)` reaches `θ`, for each `(j, θ)`.
///
/// Matching upward event records are used directly; otherwise the first
/// bracketing pair of samples is refined by bisection on the dense output.
pub fn crossing_times(
    trajectory: &Trajectory,
    thresholds: &[(i32, f64)],
) -> Result<Vec<Option<f64>>, IntegratorError> {
    let params = &trajectory.params;
    let mut out = Vec::with_capacity(thresholds.len());
    for &(j, theta) in thresholds {
        if !params.contains_shell(j) {
            return Err(ShellError::ShellOutOfRange {
                shell: j,
                lo: params.j0,
                hi: params.last_shell(),
            }
            .into());
        }
        if let Some(ev) = trajectory
            .events
            .iter()
            .find(|e| e.shell == j && e.threshold == theta && e.direction == Direction::Up)
        {
            out.push(Some(ev.t));
            continue;
        }
        let tail = |s: &ShellState| shell::tail_energy(s, j).expect("shell checked above");
        let Some(i) = trajectory.samples.iter().position(|s| tail(s) >= theta) else {
            out.push(None);
            continue;
        };
        if i == 0 {
            out.push(Some(trajectory.samples[0].t));
            continue;
        }
        let (f0, f1) = (trajectory.derivative(i - 1), trajectory.derivative(i));
        let (s0, s1) = (&trajectory.samples[i - 1], &trajectory.samples[i]);
        let step = HermiteStep {
            t0: s0.t,
            h: s1.t - s0.t,
            y0: &s0.a,
            f0: &f0,
            y1: &s1.a,
            f1: &f1,
        };
        let offset = (j - params.j0) as usize;
        let time_tol = EVENT_TIME_TOL * s1.t.abs().max(s1.t - s0.t);
        let t = step.locate(
            |a| a[offset..].iter().map(|v| v * v).sum::<f64>() >= theta,
            time_tol,
        );
        out.push(Some(t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> FnSystem<impl Fn(f64, &[f64], &mut [f64])> {
        FnSystem::new(1, |_t, y: &[f64], d: &mut [f64]| d[0] = -y[0])
    }

    #[test]
    fn exponential_decay_closed_form() {
        let cfg = IntegratorConfig::with_t_end(1.0);
        let sol = solve(&decay(), 0.0, &[1.0], &cfg, &[]).unwrap();
        assert_eq!(sol.termination, Termination::ReachedTEnd);
        assert_eq!(sol.last_time(), 1.0);
        let exact = (-1.0f64).exp();
        assert!((sol.last_state()[0] - exact).abs() <= 1e-10 * exact);
    }

    #[test]
    fn samples_strictly_increasing() {
        let cfg = IntegratorConfig::with_t_end(3.0);
        let ev = [TailEvent {
            offset: 0,
            threshold: 0.25,
            direction: Direction::Down,
        }];
        let sol = solve(&decay(), 0.0, &[1.0], &cfg, &ev).unwrap();
        assert!(sol.times.windows(2).all(|w| w[0] < w[1]));
        // y^2 = 1/4 at t = ln 2
        assert_eq!(sol.events.len(), 1);
        assert!((sol.events[0].t - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn stop_norm_halts_scalar_blowup() {
        // dζ/dt = -ζ², ζ(0) = -2 blows up at t = 1/2
        let sys = FnSystem::new(1, |_t, y: &[f64], d: &mut [f64]| d[0] = -y[0] * y[0]);
        let mut prev_gap = f64::INFINITY;
        for stop in [1e4, 1e6, 1e8] {
            let cfg = IntegratorConfig {
                t_end: 2.0,
                stop_norm: stop,
                ..Default::default()
            };
            let sol = solve(&sys, 0.0, &[-2.0], &cfg, &[]).unwrap();
            assert_eq!(sol.termination, Termination::BlowupStop);
            let t_stop = sol.last_time();
            // ζ reaches -S at t = 1/2 - 1/S
            assert!((t_stop - (0.5 - 1.0 / stop)).abs() < 1e-6 / stop.sqrt());
            let gap = 0.5 - t_stop;
            assert!(gap > 0.0 && gap < prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn non_finite_rhs_reports_overflow() {
        let sys = FnSystem::new(1, |t, _y: &[f64], d: &mut [f64]| {
            d[0] = if t > 0.5 { f64::NAN } else { 1.0 }
        });
        let sol = solve(&sys, 0.0, &[0.0], &IntegratorConfig::with_t_end(1.0), &[]).unwrap();
        assert_eq!(sol.termination, Termination::Overflow);
        assert!(sol.last_time() <= 0.5 + 1e-12);
    }

    #[test]
    fn step_limit_is_reported() {
        let cfg = IntegratorConfig {
            t_end: 100.0,
            max_steps: 5,
            ..Default::default()
        };
        let sol = solve(&decay(), 0.0, &[1.0], &cfg, &[]).unwrap();
        assert_eq!(sol.termination, Termination::StepLimit);
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            IntegratorConfig {
                rel_tol: 0.0,
                ..Default::default()
            },
            IntegratorConfig {
                t_end: -1.0,
                ..Default::default()
            },
            IntegratorConfig {
                stop_norm: 1.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                solve(&decay(), 0.0, &[1.0], &cfg, &[]),
                Err(IntegratorError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn chain_events_bracketed_and_recorded() {
        let p = ModelParams::generic(2.0, 0, 12).unwrap();
        let init = ShellState::single_shell(&p, 0, 1.0).unwrap();
        let cfg = IntegratorConfig {
            t_end: 0.8,
            events: vec![EventSpec::up(3, 0.1), EventSpec::up(5, 0.01)],
            ..Default::default()
        };
        let traj = integrate(&p, &init, &cfg).unwrap();
        assert_eq!(traj.events.len(), 2);
        for ev in &traj.events {
            let idx = traj.samples.iter().position(|s| s.t >= ev.t).unwrap();
            let before = &traj.samples[idx - 1];
            let after = traj.samples.iter().find(|s| s.t > ev.t).unwrap();
            assert!(shell::tail_energy(before, ev.shell).unwrap() < ev.threshold);
            assert!(shell::tail_energy(after, ev.shell).unwrap() >= ev.threshold);
            assert!((ev.value - ev.threshold).abs() < 1e-9 * ev.threshold);
        }
        // sample-based refinement agrees with the event records
        let mut bare = traj.clone();
        bare.events.clear();
        let t = crossing_times(&bare, &[(3, 0.1), (5, 0.01)]).unwrap();
        assert!((t[0].unwrap() - traj.events[0].t).abs() < 1e-10);
        assert!((t[1].unwrap() - traj.events[1].t).abs() < 1e-10);
    }

    #[test]
    fn crossing_times_edge_cases() {
        let p = ModelParams::generic(2.0, 0, 10).unwrap();
        let init = ShellState::single_shell(&p, 0, 1.0).unwrap();
        let traj = integrate(&p, &init, &IntegratorConfig::with_t_end(0.3)).unwrap();
        let out = crossing_times(&traj, &[(4, 0.0), (0, 2.0)]).unwrap();
        assert_eq!(out[0], Some(0.0));
        assert_eq!(out[1], None);
        assert!(crossing_times(&traj, &[(10, 0.1)]).is_err());
    }

    #[test]
    fn integrate_rejects_bad_event_shell() {
        let p = ModelParams::generic(2.0, 0, 4).unwrap();
        let init = ShellState::single_shell(&p, 0, 1.0).unwrap();
        let cfg = IntegratorConfig {
            events: vec![EventSpec::up(7, 0.1)],
            ..Default::default()
        };
        assert!(integrate(&p, &init, &cfg).is_err());
    }

    #[test]
    fn state_at_hits_samples() {
        let p = ModelParams::generic(2.0, 0, 8).unwrap();
        let init = ShellState::single_shell(&p, 0, 1.0).unwrap();
        let traj = integrate(&p, &init, &IntegratorConfig::with_t_end(0.4)).unwrap();
        let mid = &traj.samples[traj.samples.len() / 2];
        assert_eq!(traj.state_at(mid.t).a, mid.a);
    }
}
