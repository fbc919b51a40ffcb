//! Reference machinery for the inviscid Burgers equation `u_t + u u_x = 0`.
//!
//! The characteristics solution `u = f(η)`, `x = η + t f(η)` gives exact
//! values up to the shock time `t* = -1 / min f'`. Fourier coefficients are
//! computed from the integrated-by-parts form
//!
//! ```text
//! û(k, t) = 1/(i k P) ∫ f'(η) exp(-i k [η + t f(η)]) dη
//! ```
//!
//! with `P = 2π` on the line and `P` the period for periodic data. The
//! spectral part covers the Galerkin system for odd periodic fields and the
//! exact enumeration behind the dyadic restriction.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{OdeSystem, RhsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BurgersError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("k = {k} is outside the domain of the integrated-by-parts formula")]
    DivisionDomain { k: f64 },
    #[error("t = {t} is past the shock time {t_star}")]
    AfterShock { t: f64, t_star: f64 },
    #[error("quadrature accuracy not met: estimate {achieved:e} > target {target:e}")]
    AccuracyNotMet { achieved: f64, target: f64 },
    #[error("degenerate phase: f'''(eta0) = {f3:e}")]
    DegeneratePhase { f3: f64 },
    #[error("profile forms no shock")]
    NoShock,
    #[error("no estimate: {0}")]
    NoEstimate(String),
    #[error("root finder failed on [{lo}, {hi}] (g = {g_lo:e}, {g_hi:e})")]
    RootNotConverged {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },
}

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Step for first-derivative central differences.
pub const FD_STEP: f64 = 1e-5;
const FD_STEP_2: f64 = 1e-4;
const FD_STEP_3: f64 = 1e-3;
/// Relative spread under which two minima of `f'` count as a tie.
pub const TIE_TOL: f64 = 1e-8;
const SCAN_POINTS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Support {
    /// Decaying on the line; integrals are truncated to `[-L, L]`.
    Decaying,
    /// Periodic with period `2π / 2^{j0}`.
    Periodic { j0: i32 },
}

impl Support {
    /// Normalising length `P` in `û = (1/P) ∫ u e^{-ikx} dx`.
    pub fn period(&self) -> f64 {
        match *self {
            Support::Decaying => 2.0 * PI,
            Support::Periodic { j0 } => 2.0 * PI / 2f64.powi(j0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Truncation half-width `L` for decaying profiles.
    pub half_width: f64,
    /// Minimum panels per local phase period.
    pub panels_per_period: usize,
    pub max_panel: f64,
    pub nodes_per_panel: usize,
    pub max_refinements: u32,
    pub rel_tol: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            panels_per_period: 8,
            max_panel: 0.25,
            nodes_per_panel: 16,
            max_refinements: 4,
            rel_tol: 1e-6,
        }
    }
}

/// An initial profile `u(x, 0) = f(x)` with derivative evaluators.
#[derive(Clone)]
pub struct BurgersProfile {
    pub name: String,
    pub support: Support,
    pub quadrature: QuadratureSettings,
    f: RealFn,
    derivatives: [Option<RealFn>; 3],
}

impl fmt::Debug for BurgersProfile {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("BurgersProfile")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("quadrature", &self.quadrature)
            .field(
                "analytic_derivatives",
                &self
                    .derivatives
                    .iter()
                    .map(Option::is_some)
                    .collect::<Vec<_>>(),
            )
            .finish()
    }
}

fn smooth_step(s: f64) -> f64 {
    let psi = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let a = psi(s);
    let b = psi(1.0 - s);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

impl BurgersProfile {
    /// Profile with derivatives from central differences.
    pub fn custom(
        name: impl Into<String>,
        support: Support,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            support,
            quadrature: QuadratureSettings::default(),
            f: Arc::new(f),
            derivatives: [None, None, None],
        }
    }

    pub fn with_derivatives(mut self, d1: RealFn, d2: RealFn, d3: RealFn) -> Self {
        self.derivatives = [Some(d1), Some(d2), Some(d3)];
        self
    }

    pub fn with_quadrature(mut self, quadrature: QuadratureSettings) -> Self {
        self.quadrature = quadrature;
        self
    }

    /// `f(η) = -η e^{-η²}`, shocking at `t* = 1`, `η0 = 0`.
    pub fn canonical() -> Self {
        Self {
            name: "canonical".into(),
            ..Self::gaussian(1.0)
        }
    }

    /// `f(η) = -A η e^{-η²}`, shocking at `t* = 1/A`.
    pub fn gaussian(amplitude: f64) -> Self {
        let a = amplitude;
        Self::custom("gaussian", Support::Decaying, move |x| {
            -a * x * (-x * x).exp()
        })
        .with_derivatives(
            Arc::new(move |x| a * (2.0 * x * x - 1.0) * (-x * x).exp()),
            Arc::new(move |x| a * (6.0 * x - 4.0 * x.powi(3)) * (-x * x).exp()),
            Arc::new(move |x| a * (6.0 - 24.0 * x * x + 8.0 * x.powi(4)) * (-x * x).exp()),
        )
    }

    /// `f(η) = -η` for `|η| ≤ w`, smoothly cut off to zero at `|η| = 2w`.
    pub fn linear_core(width: f64) -> Self {
        Self::custom("linear_core", Support::Decaying, move |x| {
            -x * smooth_step(2.0 - x.abs() / width)
        })
    }

    /// `f(η) = -A sin(2^{j0} η)` with period `2π / 2^{j0}`.
    pub fn sine(amplitude: f64, j0: i32) -> Self {
        let a = amplitude;
        let k = 2f64.powi(j0);
        Self::custom("sine", Support::Periodic { j0 }, move |x| {
            -a * (k * x).sin()
        })
        .with_derivatives(
            Arc::new(move |x| -a * k * (k * x).cos()),
            Arc::new(move |x| a * k * k * (k * x).sin()),
            Arc::new(move |x| a * k.powi(3) * (k * x).cos()),
        )
    }

    /// Parses `name` or `name:p1,p2`, e.g. `canonical`, `gaussian:2`,
    /// `linear_core:1`, `sine:0.5,0`.
    pub fn from_spec(spec: &str) -> Result<Self, BurgersError> {
        let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
        let args: Vec<f64> = args
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| BurgersError::InvalidInput(format!("bad profile parameter {s:?}")))
            })
            .collect::<Result<_, _>>()?;
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(BurgersError::InvalidInput(format!(
                    "profile {name} takes {n} parameter(s), got {}",
                    args.len()
                )))
            }
        };
        match name.trim() {
            "canonical" => arity(0).map(|_| Self::canonical()),
            "gaussian" => arity(1).map(|_| Self::gaussian(args[0])),
            "linear_core" => arity(1).map(|_| Self::linear_core(args[0])),
            "sine" => {
                arity(2)?;
                if args[1].fract() != 0.0 {
                    return Err(BurgersError::InvalidInput(
                        "sine j0 must be an integer".into(),
                    ));
                }
                Ok(Self::sine(args[0], args[1] as i32))
            }
            other => Err(BurgersError::InvalidInput(format!(
                "unknown profile {other:?}"
            ))),
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn f1(&self, x: f64) -> f64 {
        match &self.derivatives[0] {
            Some(d) => d(x),
            None => (self.f(x + FD_STEP) - self.f(x - FD_STEP)) / (2.0 * FD_STEP),
        }
    }

    pub fn f2(&self, x: f64) -> f64 {
        match &self.derivatives[1] {
            Some(d) => d(x),
            None => {
                let h = FD_STEP_2;
                (self.f(x + h) - 2.0 * self.f(x) + self.f(x - h)) / (h * h)
            }
        }
    }

    pub fn f3(&self, x: f64) -> f64 {
        match &self.derivatives[2] {
            Some(d) => d(x),
            None => {
                let h = FD_STEP_3;
                (self.f(x + 2.0 * h) - 2.0 * self.f(x + h) + 2.0 * self.f(x - h)
                    - self.f(x - 2.0 * h))
                    / (2.0 * h.powi(3))
            }
        }
    }

    /// Interval scanned for extrema: `[-L, L]` or one period centred at 0.
    pub fn scan_domain(&self) -> (f64, f64) {
        match self.support {
            Support::Decaying => (-self.quadrature.half_width, self.quadrature.half_width),
            Support::Periodic { .. } => {
                let p = self.support.period();
                (-0.5 * p, 0.5 * p)
            }
        }
    }

    fn scan(&self) -> Vec<f64> {
        let (a, b) = self.scan_domain();
        let n = SCAN_POINTS;
        (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    }

    fn sup_abs(&self) -> f64 {
        self.scan()
            .into_iter()
            .fold(0.0, |m, x| m.max(self.f(x).abs()))
    }
}

fn golden_min(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut g1, mut g2) = (g(x1), g(x2));
    for _ in 0..300 {
        if b - a <= tol {
            break;
        }
        if g1 < g2 {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - r * (b - a);
            g1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + r * (b - a);
            g2 = g(x2);
        }
    }
    0.5 * (a + b)
}

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64, BurgersError> {
    let mut g_lo = g(lo);
    let g_hi = g(hi);
    if !(g_lo.is_finite() && g_hi.is_finite()) || g_lo * g_hi > 0.0 {
        return Err(BurgersError::RootNotConverged { lo, hi, g_lo, g_hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let gm = g(mid);
        if !gm.is_finite() {
            return Err(BurgersError::RootNotConverged {
                lo,
                hi,
                g_lo,
                g_hi: gm,
            });
        }
        if gm == 0.0 {
            return Ok(mid);
        }
        if (gm < 0.0) == (g_lo < 0.0) {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockInfo {
    pub t_star: f64,
    pub eta0: f64,
    /// `f'(η0)`, the minimum slope.
    pub min_slope: f64,
    /// Another point within [`TIE_TOL`] of the minimum was found, so `η0`
    /// is not the unique minimiser.
    pub tie: bool,
}

/// First gradient catastrophe `t* = -1 / min f'`, or `None` when `f' ≥ 0`.
pub fn shock_time(profile: &BurgersProfile) -> Option<ShockInfo> {
    let grid = profile.scan();
    let slopes: Vec<f64> = grid.iter().map(|&x| profile.f1(x)).collect();
    let (i_min, &s_min) = slopes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    if s_min >= 0.0 {
        return None;
    }
    let h = grid[1] - grid[0];
    let mut eta0 = golden_min(|x| profile.f1(x), grid[i_min] - h, grid[i_min] + h, 1e-13);
    // polish on f'' = 0
    for _ in 0..3 {
        let f3 = profile.f3(eta0);
        if f3 <= 0.0 {
            break;
        }
        let step = profile.f2(eta0) / f3;
        if !(step.abs() < h) {
            break;
        }
        let candidate = eta0 - step;
        if profile.f1(candidate) <= profile.f1(eta0) {
            eta0 = candidate;
        } else {
            break;
        }
    }
    let min_slope = profile.f1(eta0).min(s_min);
    let period = match profile.support {
        Support::Periodic { .. } => Some(profile.support.period()),
        Support::Decaying => None,
    };
    let distance = |x: f64| {
        let d = (x - eta0).abs();
        period.map_or(d, |p| d.min(p - d % p).min(d % p))
    };
    let tol = TIE_TOL * min_slope.abs().max(1.0);
    let tie = grid
        .iter()
        .zip(&slopes)
        .any(|(&x, &s)| distance(x) > 2.0 * h && s <= min_slope + tol);
    Some(ShockInfo {
        t_star: -1.0 / min_slope,
        eta0,
        min_slope,
        tie,
    })
}

/// All values `f(η)` at roots of `η + t f(η) = x`. A single value before the
/// shock; every branch afterwards.
pub fn characteristics_solution(
    profile: &BurgersProfile,
    x: f64,
    t: f64,
) -> Result<Vec<f64>, BurgersError> {
    if !(t >= 0.0 && t.is_finite() && x.is_finite()) {
        return Err(BurgersError::InvalidInput(format!(
            "need finite x and t >= 0, got x={x}, t={t}"
        )));
    }
    if t == 0.0 {
        return Ok(vec![profile.f(x)]);
    }
    Ok(characteristic_roots(profile, x, t)?
        .into_iter()
        .map(|eta| profile.f(eta))
        .collect())
}

/// Roots `η` of `η + t f(η) = x`, ascending.
pub fn characteristic_roots(
    profile: &BurgersProfile,
    x: f64,
    t: f64,
) -> Result<Vec<f64>, BurgersError> {
    let g = |eta: f64| eta + t * profile.f(eta) - x;
    let gp = |eta: f64| 1.0 + t * profile.f1(eta);
    // every root satisfies |η - x| ≤ t sup|f|
    let reach = t * profile.sup_abs() * (1.0 + 1e-3) + 1e-9 * (1.0 + x.abs());
    let (a, b) = (x - reach, x + reach);
    let n = 1024;
    let nodes: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let mut breaks = vec![a];
    for w in nodes.windows(2) {
        let (d0, d1) = (gp(w[0]), gp(w[1]));
        if d0 * d1 < 0.0 {
            breaks.push(bisect(gp, w[0], w[1])?);
        }
    }
    breaks.push(b);

    let mut roots: Vec<f64> = Vec::new();
    let mut push = |r: f64| {
        if roots
            .last()
            .is_none_or(|&p| (r - p).abs() > 1e-10 * (1.0 + r.abs()))
        {
            roots.push(r);
        }
    };
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (g_lo, g_hi) = (g(lo), g(hi));
        if g_lo == 0.0 {
            push(lo);
        } else if g_lo * g_hi < 0.0 {
            push(bisect(g, lo, hi)?);
        }
        if g_hi == 0.0 {
            push(hi);
        }
    }
    Ok(roots)
}

/// `max_x |∂u/∂x|` at time `t < t*`, from `u_x = f' / (1 + t f')`.
pub fn max_gradient(profile: &BurgersProfile, t: f64) -> Result<f64, BurgersError> {
    if let Some(s) = shock_time(profile) {
        if t >= s.t_star {
            return Err(BurgersError::AfterShock {
                t,
                t_star: s.t_star,
            });
        }
    }
    let ux = |eta: f64| {
        let s = profile.f1(eta);
        (s / (1.0 + t * s)).abs()
    };
    let grid = profile.scan();
    let (i, _) = grid
        .iter()
        .map(|&x| ux(x))
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("scan grid is non-empty");
    let h = grid[1] - grid[0];
    let eta = golden_min(|x| -ux(x), grid[i] - h, grid[i] + h, 1e-13);
    Ok(ux(eta).max(ux(grid[i])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierEstimate {
    pub value: Complex64,
    pub error_estimate: f64,
    pub panels: usize,
}

fn gauss_rule(nodes: usize) -> Result<Vec<(f64, f64)>, BurgersError> {
    GaussLegendre::new(nodes)
        .map(|r| r.into_node_weight_pairs())
        .map_err(|e| BurgersError::InvalidInput(format!("quadrature rule: {e}")))
}

/// `Σ` over `panels` equal panels of `∫ f'(η) e^{-ik(η + t f(η))} dη`, with
/// the sum of absolute contributions.
fn panel_sum(
    profile: &BurgersProfile,
    rule: &[(f64, f64)],
    (a, b): (f64, f64),
    panels: usize,
    k: f64,
    t: f64,
) -> (Complex64, f64) {
    let h = (b - a) / panels as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for &(x, w) in rule {
            let eta = mid + 0.5 * h * x;
            let amp = profile.f1(eta) * w * 0.5 * h;
            let phase = -k * (eta + t * profile.f(eta));
            sum += Complex64::from_polar(amp, phase);
            abs += amp.abs();
        }
    }
    (sum, abs)
}

fn check_wavenumber(profile: &BurgersProfile, k: f64) -> Result<(), BurgersError> {
    if k == 0.0 {
        return Err(BurgersError::DivisionDomain { k });
    }
    if !k.is_finite() {
        return Err(BurgersError::InvalidInput(format!(
            "wavenumber {k} is not finite"
        )));
    }
    if let Support::Periodic { j0 } = profile.support {
        let l = k / 2f64.powi(j0);
        if (l - l.round()).abs() > 1e-9 * l.abs().max(1.0) {
            return Err(BurgersError::InvalidInput(format!(
                "k = {k} is not a multiple of the base wavenumber 2^{j0}"
            )));
        }
    }
    Ok(())
}

/// `û(k, t)` by Gauss-Legendre panels sized to resolve the phase, doubling
/// the panel count until successive estimates agree to the relative target.
pub fn fourier_coefficient(
    profile: &BurgersProfile,
    k: f64,
    t: f64,
) -> Result<FourierEstimate, BurgersError> {
    check_wavenumber(profile, k)?;
    if !(t >= 0.0) {
        return Err(BurgersError::InvalidInput(format!(
            "t = {t} must be non-negative"
        )));
    }
    if let Some(s) = shock_time(profile) {
        if t > s.t_star * (1.0 + 1e-12) {
            return Err(BurgersError::AfterShock {
                t,
                t_star: s.t_star,
            });
        }
    }
    let qs = profile.quadrature;
    let domain = profile.scan_domain();
    let rate = profile
        .scan()
        .into_iter()
        .fold(0.0f64, |m, x| m.max((1.0 + t * profile.f1(x)).abs()))
        .max(1e-3);
    let phase_period = 2.0 * PI / (k.abs() * rate);
    let h = (phase_period / qs.panels_per_period as f64).min(qs.max_panel);
    let mut panels = (((domain.1 - domain.0) / h).ceil() as usize).max(2);
    let rule = gauss_rule(qs.nodes_per_panel)?;
    let prefactor = 1.0 / (Complex64::i() * k * profile.support.period());

    let (mut coarse, _) = panel_sum(profile, &rule, domain, panels / 2, k, t);
    let mut last_estimate = f64::INFINITY;
    for _ in 0..=qs.max_refinements {
        let (fine, abs) = panel_sum(profile, &rule, domain, panels, k, t);
        let roundoff = 10.0 * f64::EPSILON * abs * ((panels * rule.len()) as f64).sqrt();
        let diff = (fine - coarse).norm();
        let scale = prefactor.norm();
        let estimate = diff.max(roundoff) * scale;
        let value = fine * prefactor;
        if diff <= (qs.rel_tol * fine.norm()).max(roundoff) {
            return Ok(FourierEstimate {
                value,
                error_estimate: estimate,
                panels,
            });
        }
        last_estimate = estimate;
        coarse = fine;
        panels *= 2;
    }
    Err(BurgersError::AccuracyNotMet {
        achieved: last_estimate,
        target: qs.rel_tol,
    })
}

/// [`fourier_coefficient`] over many wavenumbers in parallel.
pub fn fourier_coefficients(
    profile: &BurgersProfile,
    ks: &[f64],
    t: f64,
) -> Vec<Result<FourierEstimate, BurgersError>> {
    ks.par_iter()
        .map(|&k| fourier_coefficient(profile, k, t))
        .collect()
}

/// `Ai(0) = 3^{-2/3} / Γ(2/3)`.
pub fn airy_ai0() -> f64 {
    3f64.powf(-2.0 / 3.0) / statrs::function::gamma::gamma(2.0 / 3.0)
}

/// Leading large-`k` behaviour at time `t` from the degenerate stationary
/// point `η0`:
/// `(Ai(0)/(ik)) (2/(k t |f'''(η0)|))^{1/3} f'(η0) e^{-ik[η0 + t f(η0)]}`,
/// rescaled by `2π/P` for periodic data.
pub fn stationary_phase_asymptote(
    profile: &BurgersProfile,
    k: f64,
    t: f64,
) -> Result<Complex64, BurgersError> {
    check_wavenumber(profile, k)?;
    let shock = shock_time(profile).ok_or(BurgersError::NoShock)?;
    let eta0 = shock.eta0;
    let f3 = profile.f3(eta0);
    // differenced third derivatives carry O(1e-6) error
    let floor = if profile.derivatives[2].is_some() {
        1e-12
    } else {
        1e-4
    };
    if f3.abs() <= floor * profile.f1(eta0).abs().max(1.0) {
        return Err(BurgersError::DegeneratePhase { f3 });
    }
    if !(t > 0.0) {
        return Err(BurgersError::InvalidInput(format!(
            "t = {t} must be positive"
        )));
    }
    let width = (2.0 / (k.abs() * t * f3.abs())).cbrt();
    let phase = Complex64::from_polar(1.0, -k * (eta0 + t * profile.f(eta0)));
    let norm = 2.0 * PI / profile.support.period();
    Ok(airy_ai0() / (Complex64::i() * k) * width * profile.f1(eta0) * phase * norm)
}

/// Divergence of `∫ (1 + k^{2α}) k^{-2p} dk`: true iff `2α ≥ 2p - 1`.
pub fn diverges(p: f64, alpha: f64) -> bool {
    2.0 * alpha >= 2.0 * p - 1.0 - 1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumNorm {
    /// `∫ (1 + k^{2α}) |û|² dk` over the sampled range.
    pub truncated: f64,
    /// Fitted `p` in `|û| ~ k^{-p}`.
    pub decay_exponent: f64,
    pub diverges: bool,
    pub fit_points: usize,
}

/// Least-squares `p` in `|û| ~ k^{-p}` over the upper half of the samples
/// (at least four).
pub fn fit_decay_exponent(samples: &[(f64, f64)]) -> Result<(f64, usize), BurgersError> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(k, a)| *k > 0.0 && *a > 0.0 && a.is_finite())
        .map(|&(k, a)| (k.ln(), a.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(BurgersError::NoEstimate(format!(
            "{} usable samples, need at least 4",
            pts.len()
        )));
    }
    let take = (pts.len() / 2).max(4);
    let tail = &pts[pts.len() - take..];
    let n = tail.len() as f64;
    let (sx, sy) = tail
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = tail.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx).powi(2), b + (x - mx) * (y - my))
    });
    if sxx == 0.0 {
        return Err(BurgersError::NoEstimate(
            "samples share one wavenumber".into(),
        ));
    }
    Ok((-sxy / sxx, take))
}

/// Truncated continuum `H^α` norm from `(k, |û(k)|)` samples on the positive
/// half-line, sorted by `k`, with the divergence classification.
pub fn continuum_sobolev_norm_sq(
    samples: &[(f64, f64)],
    alpha: f64,
) -> Result<ContinuumNorm, BurgersError> {
    if !(alpha > 0.0) {
        return Err(BurgersError::InvalidInput(format!(
            "alpha = {alpha} must be positive"
        )));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) || samples.iter().any(|s| !(s.0 > 0.0)) {
        return Err(BurgersError::InvalidInput(
            "samples need positive, strictly increasing k".into(),
        ));
    }
    let (p, fit_points) = fit_decay_exponent(samples)?;
    // trapezoid in ln k: ∫ g dk = ∫ g k d(ln k)
    let g = |(k, a): (f64, f64)| (1.0 + k.powf(2.0 * alpha)) * a * a * k;
    let truncated = samples
        .windows(2)
        .map(|w| 0.5 * (g(w[0]) + g(w[1])) * (w[1].0.ln() - w[0].0.ln()))
        .sum();
    Ok(ContinuumNorm {
        truncated,
        decay_exponent: p,
        diverges: diverges(p, alpha),
        fit_points,
    })
}

/// Odd real periodic field `u = Σ_{l≥1} (i v_l e^{i k_l x} + c.c.)` with
/// `k_l = 2^{j0} l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    pub j0: i32,
    /// `modes[l - 1] = v_l`.
    pub modes: Vec<f64>,
}

impl SpectralField {
    pub fn new(j0: i32, modes: Vec<f64>) -> Self {
        Self { j0, modes }
    }

    pub fn zeros(j0: i32, l_max: usize) -> Self {
        Self::new(j0, vec![0.0; l_max])
    }

    pub fn l_max(&self) -> usize {
        self.modes.len()
    }

    pub fn wavenumber(&self, l: i64) -> f64 {
        2f64.powi(self.j0) * l as f64
    }

    /// `v_l` for any integer `l`, using `v_{-l} = -v_l` and zero outside the
    /// truncation.
    pub fn mode(&self, l: i64) -> f64 {
        mode_of(&self.modes, l)
    }

    pub fn energy(&self) -> f64 {
        self.modes.iter().map(|v| v * v).sum()
    }

    /// `u(x) = -2 Σ v_l sin(k_l x)`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let k0 = 2f64.powi(self.j0);
        -2.0 * self
            .modes
            .iter()
            .enumerate()
            .map(|(i, v)| v * (k0 * (i + 1) as f64 * x).sin())
            .sum::<f64>()
    }
}

fn mode_of(modes: &[f64], l: i64) -> f64 {
    let n = l.unsigned_abs() as usize;
    if n == 0 || n > modes.len() {
        0.0
    } else if l > 0 {
        modes[n - 1]
    } else {
        -modes[n - 1]
    }
}

fn galerkin_into(j0: i32, v: &[f64], out: &mut [f64]) {
    let big = v.len() as i64;
    let k0 = 2f64.powi(j0);
    for l in 1..=big {
        let mut s = 0.0;
        for n in (l - big)..=big {
            if n != 0 && n != l {
                s += mode_of(v, n) * mode_of(v, l - n);
            }
        }
        out[(l - 1) as usize] = k0 * l as f64 * s;
    }
}

/// `dv_l/dt = k_l Σ_n v_n v_{l-n}` over the truncated modes.
pub fn galerkin_rhs(field: &SpectralField) -> Vec<f64> {
    let mut out = vec![0.0; field.l_max()];
    galerkin_into(field.j0, &field.modes, &mut out);
    out
}

/// `d/dt Σ v_l²` under [`galerkin_rhs`]; zero up to rounding.
pub fn galerkin_energy_rate(field: &SpectralField) -> f64 {
    2.0 * field
        .modes
        .iter()
        .zip(galerkin_rhs(field))
        .map(|(v, d)| v * d)
        .sum::<f64>()
}

/// The Galerkin system as an ODE. Its field `w` solves `w_t + 2 w w_x = 0`,
/// so `2w` is the Burgers solution from `2w(x, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct GalerkinSystem {
    pub j0: i32,
    pub l_max: usize,
}

impl OdeSystem for GalerkinSystem {
    fn dim(&self) -> usize {
        self.l_max
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), RhsError> {
        galerkin_into(self.j0, y, dydt);
        if dydt.iter().all(|d| d.is_finite()) {
            Ok(())
        } else {
            Err(RhsError::NonFinite)
        }
    }
}

/// Slope along the steepest characteristic, `dζ/dt = -ζ²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SlopeOde;

impl SlopeOde {
    /// `ζ(t) = ζ0 / (1 + ζ0 t)`, singular at `t = -1/ζ0`.
    pub fn exact(zeta0: f64, t: f64) -> f64 {
        zeta0 / (1.0 + zeta0 * t)
    }
}

impl OdeSystem for SlopeOde {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), RhsError> {
        dydt[0] = -y[0] * y[0];
        if dydt[0].is_finite() {
            Ok(())
        } else {
            Err(RhsError::Overflow)
        }
    }
}

/// Quadratic monomial `a_p a_q` (with `p ≤ q`) as shell offsets from `j0`.
pub type Monomial = (u32, u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionLevel {
    pub m: u32,
    pub l: i64,
    /// Index pairs `(n, l - n)` with both `|n|` and `|l - n|` powers of two.
    pub pairs: Vec<(i64, i64)>,
    pub coefficients: Vec<(Monomial, i64)>,
    pub expected: Vec<(Monomial, i64)>,
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub m_max: u32,
    pub levels: Vec<ProjectionLevel>,
    pub all_match: bool,
}

fn power_of_two_exponent(n: i64) -> Option<u32> {
    let a = n.unsigned_abs();
    (a != 0 && a.is_power_of_two()).then(|| a.trailing_zeros())
}

/// Restricts the Galerkin sum to `l = 2^m` and enumerates every pair
/// `(n, l - n)` with both indices `±2^p`, `p ≤ m_max + 1`. With
/// `a_{j0+p} = v_{2^p}` the sum must be `a_{m-1}^2 - 2 a_m a_{m+1}`
/// (only `-2 a_0 a_1` at `m = 0`), times `k_l`.
pub fn dyadic_projection_check(m_max: u32) -> Result<ProjectionReport, BurgersError> {
    if !(2..=40).contains(&m_max) {
        return Err(BurgersError::InvalidInput(format!(
            "m_max = {m_max} must be in 2..=40"
        )));
    }
    let top = m_max + 1;
    let bound = 1i64 << (top + 1);
    let in_range = |n: i64| power_of_two_exponent(n).filter(|&p| p <= top);
    let levels: Vec<ProjectionLevel> = (0..=m_max)
        .map(|m| {
            let l = 1i64 << m;
            let mut pairs = Vec::new();
            let mut acc: BTreeMap<Monomial, i64> = BTreeMap::new();
            for n in -bound..=bound {
                let (Some(p), Some(q)) = (in_range(n), in_range(l - n)) else {
                    continue;
                };
                pairs.push((n, l - n));
                let sign = n.signum() * (l - n).signum();
                *acc.entry((p.min(q), p.max(q))).or_insert(0) += sign;
            }
            acc.retain(|_, c| *c != 0);
            let mut expected = BTreeMap::new();
            if m > 0 {
                expected.insert((m - 1, m - 1), 1);
            }
            expected.insert((m, m + 1), -2);
            let coefficients: Vec<_> = acc.into_iter().collect();
            let expected: Vec<_> = expected.into_iter().collect();
            let matches = coefficients == expected;
            ProjectionLevel {
                m,
                l,
                pairs,
                coefficients,
                expected,
                matches,
            }
        })
        .collect();
    Ok(ProjectionReport {
        m_max,
        all_match: levels.iter().all(|l| l.matches),
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{solve, IntegratorConfig};

    #[test]
    fn canonical_derivatives_at_origin() {
        let p = BurgersProfile::canonical();
        assert_eq!(p.f1(0.0), -1.0);
        assert_eq!(p.f2(0.0), 0.0);
        assert_eq!(p.f3(0.0), 6.0);
        let fd = BurgersProfile::custom("fd", Support::Decaying, |x| -x * (-x * x).exp());
        for x in [-1.3, -0.2, 0.0, 0.7] {
            assert!((fd.f1(x) - p.f1(x)).abs() < 1e-9);
            assert!((fd.f2(x) - p.f2(x)).abs() < 1e-6);
            assert!((fd.f3(x) - p.f3(x)).abs() < 1e-4);
        }
    }

    #[test]
    fn shock_time_examples() {
        let s = shock_time(&BurgersProfile::canonical()).unwrap();
        assert!((s.t_star - 1.0).abs() < 1e-8);
        assert!(s.eta0.abs() < 1e-8);
        assert!(!s.tie);

        let s = shock_time(&BurgersProfile::linear_core(1.0)).unwrap();
        assert!((s.t_star - 1.0).abs() < 1e-8);
        assert!(s.tie);

        let s = shock_time(&BurgersProfile::sine(0.5, 1)).unwrap();
        assert!((s.t_star - 1.0).abs() < 1e-10);

        let rising = BurgersProfile::custom("rising", Support::Decaying, |x| x.atan());
        assert!(shock_time(&rising).is_none());
    }

    #[test]
    fn two_equal_minima_flag_a_tie() {
        let f = |x: f64| {
            -(x - 2.0) * (-(x - 2.0).powi(2)).exp() - (x + 2.0) * (-(x + 2.0).powi(2)).exp()
        };
        let s = shock_time(&BurgersProfile::custom("twin", Support::Decaying, f)).unwrap();
        assert!(s.tie);
    }

    #[test]
    fn characteristics_examples() {
        let p = BurgersProfile::canonical();
        assert_eq!(
            characteristics_solution(&p, 0.3, 0.0).unwrap(),
            vec![p.f(0.3)]
        );
        let lin = BurgersProfile::linear_core(1.0);
        let u = characteristics_solution(&lin, 0.0, 0.5).unwrap();
        assert_eq!(u.len(), 1);
        assert!(u[0].abs() < 1e-15);
        // x = η + 0.5(-η) gives η = 2x inside the core
        let u = characteristics_solution(&lin, 0.2, 0.5).unwrap();
        assert!((u[0] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn characteristics_branches_after_shock() {
        let p = BurgersProfile::canonical();
        let roots = characteristic_roots(&p, 0.0, 2.0).unwrap();
        assert_eq!(roots.len(), 3);
        let before = characteristic_roots(&p, 0.0, 0.9).unwrap();
        assert_eq!(before.len(), 1);
    }

    #[test]
    fn characteristics_match_newton_continuation() {
        let p = BurgersProfile::canonical();
        let (x, t_end) = (0.001, 0.99);
        let mut eta = x;
        let steps = 2000;
        for i in 1..=steps {
            let t = t_end * i as f64 / steps as f64;
            for _ in 0..50 {
                let g = eta + t * p.f(eta) - x;
                let d = 1.0 + t * p.f1(eta);
                let step = g / d;
                eta -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
        }
        let u = characteristics_solution(&p, x, t_end).unwrap();
        assert_eq!(u.len(), 1);
        assert!((u[0] - p.f(eta)).abs() < 1e-10, "{} vs {}", u[0], p.f(eta));
    }

    #[test]
    fn gradient_grows_like_inverse_distance_to_shock() {
        let p = BurgersProfile::canonical();
        let ts: Vec<f64> = (0..20).map(|i| 0.8 + 0.19 * i as f64 / 19.0).collect();
        let pts: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| ((1.0 - t).ln(), max_gradient(&p, t).unwrap().ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn gaussian_transform_at_time_zero() {
        let p = BurgersProfile::canonical();
        for k in [0.5, 1.0, 2.0, 4.0, 7.0] {
            let got = fourier_coefficient(&p, k, 0.0).unwrap().value;
            let want = Complex64::new(0.0, k * (-k * k / 4.0).exp() / (4.0 * PI.sqrt()));
            assert!(
                (got - want).norm() <= 1e-10 * want.norm().max(1e-12),
                "k={k}"
            );
        }
    }

    #[test]
    fn reality_and_oddness() {
        let p = BurgersProfile::canonical();
        for k in [3.0, 17.0, 60.0] {
            let a = fourier_coefficient(&p, k, 0.7).unwrap();
            let b = fourier_coefficient(&p, -k, 0.7).unwrap();
            assert!(
                (a.value - b.value.conj()).norm() <= 2.0 * (a.error_estimate + b.error_estimate)
            );
            assert!(a.value.re.abs() <= 1e-6 * a.value.norm());
        }
        assert!(matches!(
            fourier_coefficient(&p, 0.0, 0.5),
            Err(BurgersError::DivisionDomain { .. })
        ));
        assert!(matches!(
            fourier_coefficient(&p, 5.0, 1.5),
            Err(BurgersError::AfterShock { .. })
        ));
    }

    #[test]
    fn doubling_panels_stays_within_estimate() {
        let p = BurgersProfile::canonical();
        for k in [10.0, 100.0, 400.0] {
            let est = fourier_coefficient(&p, k, 1.0).unwrap();
            let rule = gauss_rule(16).unwrap();
            let (sum, _) = panel_sum(&p, &rule, p.scan_domain(), 2 * est.panels, k, 1.0);
            let doubled = sum / (Complex64::i() * k * 2.0 * PI);
            assert!((doubled - est.value).norm() <= est.error_estimate, "k={k}");
        }
    }

    #[test]
    fn periodic_coefficients_of_a_sine() {
        // -A sin x = i(A/2) e^{ix} + c.c.
        let p = BurgersProfile::sine(0.3, 0);
        let c = fourier_coefficient(&p, 1.0, 0.0).unwrap().value;
        assert!((c - Complex64::new(0.0, 0.15)).norm() < 1e-12);
        assert!(fourier_coefficient(&p, 2.0, 0.0).unwrap().value.norm() < 1e-12);
        assert!(fourier_coefficient(&p, 1.5, 0.0).is_err());
    }

    #[test]
    fn airy_value_and_integral() {
        let ai0 = airy_ai0();
        assert!((ai0 - 0.355_028_053_887_817).abs() < 1e-13);
        // (1/π) ∫_0^∞ cos(y³/3) dy as an alternating series between zeros
        let rule = gauss_rule(24).unwrap();
        let zero = |n: usize| (3.0 * (PI / 2.0 + n as f64 * PI)).cbrt();
        let seg = |a: f64, b: f64| {
            rule.iter()
                .map(|&(x, w)| {
                    let y = 0.5 * (a + b) + 0.5 * (b - a) * x;
                    0.5 * (b - a) * w * (y.powi(3) / 3.0).cos()
                })
                .sum::<f64>()
        };
        let mut partial = Vec::new();
        let mut s = seg(0.0, zero(0));
        for n in 0..400 {
            s += seg(zero(n), zero(n + 1));
            partial.push(s);
        }
        // repeated averaging of consecutive partial sums
        let mut level = partial;
        for _ in 0..60 {
            level = level.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        }
        let series = level.last().unwrap() / PI;
        assert!((series - ai0).abs() < 1e-8, "{series} vs {ai0}");
    }

    #[test]
    fn stationary_phase_canonical() {
        let p = BurgersProfile::canonical();
        let c = 3f64.powf(-1.0 / 3.0) * airy_ai0();
        for k in [10.0, 100.0] {
            let a = stationary_phase_asymptote(&p, k, 1.0).unwrap();
            let want = Complex64::new(0.0, c * k.powf(-4.0 / 3.0));
            assert!((a - want).norm() < 1e-12 * want.norm());
            let b = stationary_phase_asymptote(&p, 2.0 * k, 1.0).unwrap();
            assert!((b.norm() / a.norm() - 2f64.powf(-4.0 / 3.0)).abs() < 1e-12);
        }
        assert!(matches!(
            stationary_phase_asymptote(&BurgersProfile::linear_core(1.0), 10.0, 1.0),
            Err(BurgersError::DegeneratePhase { .. })
        ));
    }

    #[test]
    fn quadrature_approaches_asymptote() {
        let p = BurgersProfile::canonical();
        let mut prev = f64::INFINITY;
        for k in [50.0, 100.0, 200.0] {
            let q = fourier_coefficient(&p, k, 1.0).unwrap().value;
            let a = stationary_phase_asymptote(&p, k, 1.0).unwrap();
            let dev = (q.norm() / a.norm() - 1.0).abs();
            assert!(dev < 0.1, "k={k}: {dev}");
            assert!(dev <= prev);
            prev = dev;
        }
    }

    #[test]
    fn continuum_norm_closed_form() {
        let n = 4000;
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let k = 10f64.powf(5.0 * i as f64 / n as f64);
                (k, k.powi(-2))
            })
            .collect();
        let r = continuum_sobolev_norm_sq(&samples, 1.0).unwrap();
        // ∫_1^∞ (1 + k²) k^{-4} dk = 4/3, minus a tail of about 1e-5
        assert!((r.truncated - 4.0 / 3.0).abs() < 1e-4);
        assert!((r.decay_exponent - 2.0).abs() < 1e-12);
        assert!(!r.diverges);
        assert!(continuum_sobolev_norm_sq(&samples[..3], 1.0).is_err());
    }

    #[test]
    fn divergence_thresholds() {
        assert!(diverges(4.0 / 3.0, 5.0 / 6.0));
        assert!(!diverges(4.0 / 3.0, 5.0 / 6.0 - 1e-6));
        assert!(diverges(1.0, 0.5));
        assert!(!diverges(1.0, 0.5 - 1e-6));
    }

    #[test]
    fn galerkin_single_mode_and_zero() {
        let f = SpectralField::new(0, vec![1.0, 0.0, 0.0]);
        assert_eq!(galerkin_rhs(&f), vec![0.0, 2.0, 0.0]);
        assert!(galerkin_rhs(&SpectralField::zeros(2, 5))
            .iter()
            .all(|&d| d == 0.0));
        let f = SpectralField::new(1, vec![0.0, 1.0]);
        assert_eq!(galerkin_rhs(&f), vec![0.0, 0.0]);
    }

    #[test]
    fn galerkin_conserves_energy() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for l_max in [1, 2, 3, 5, 8, 17] {
            let modes: Vec<f64> = (0..l_max).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = SpectralField::new(rng.gen_range(-2..3), modes);
            let scale: f64 = galerkin_rhs(&f).iter().map(|d| d.abs()).sum::<f64>() + 1.0;
            assert!(galerkin_energy_rate(&f).abs() < 1e-13 * scale);
        }
    }

    #[test]
    fn galerkin_matches_characteristics() {
        // w = -0.5 sin x, so 2w is Burgers data -sin x with t* = 1
        let l_max = 256;
        let mut v = vec![0.0; l_max];
        v[0] = 0.25;
        let sys = GalerkinSystem { j0: 0, l_max };
        let cfg = IntegratorConfig {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            t_end: 0.5,
            ..IntegratorConfig::default()
        };
        let sol = solve(&sys, 0.0, &v, &cfg, &[]).unwrap();
        let field = SpectralField::new(0, sol.last_state().to_vec());
        let profile = BurgersProfile::sine(1.0, 0);
        for i in 0..32 {
            let x = -PI + 2.0 * PI * i as f64 / 32.0;
            let u = characteristics_solution(&profile, x, 0.5).unwrap();
            assert_eq!(u.len(), 1);
            assert!((field.evaluate(x) - 0.5 * u[0]).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn slope_ode_blows_up_at_inverse_slope() {
        let cfg = IntegratorConfig {
            t_end: 2.0,
            stop_norm: 1e8,
            ..IntegratorConfig::default()
        };
        let sol = solve(&SlopeOde, 0.0, &[-1.0], &cfg, &[]).unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states).take(50) {
            assert!((y[0] - SlopeOde::exact(-1.0, *t)).abs() < 1e-8 * y[0].abs());
        }
        let norms: Vec<f64> = sol.states.iter().map(|y| y[0].abs()).collect();
        let fit = crate::blowup::fit_blowup_series(&sol.times, &norms).unwrap();
        assert!((fit.t_star - 1.0).abs() < 1e-3);
        assert!((fit.gamma - 1.0).abs() < 1e-2);
    }

    #[test]
    fn dyadic_projection_pattern() {
        let r = dyadic_projection_check(10).unwrap();
        assert!(r.all_match);
        let l2 = &r.levels[1];
        let mut pairs = l2.pairs.clone();
        pairs.sort();
        assert_eq!(pairs, vec![(-2, 4), (1, 1), (4, -2)]);
        assert_eq!(r.levels[0].coefficients, vec![((0, 1), -2)]);
        assert!(dyadic_projection_check(1).is_err());
    }

    #[test]
    fn profile_specs() {
        assert_eq!(
            BurgersProfile::from_spec("canonical").unwrap().name,
            "canonical"
        );
        assert!(BurgersProfile::from_spec("sine:0.5,1").is_ok());
        assert!(BurgersProfile::from_spec("sine:0.5").is_err());
        assert!(BurgersProfile::from_spec("cubic").is_err());
    }
}
