//! Chain (shell) models and per-state diagnostics.
//!
//! Every model here evolves a finite run of real amplitudes `a_j`,
//! `j = j0 .. j0 + n_shells - 1`, where `j` is the absolute shell index and
//! `λ^j` the wavenumber of shell `j`. The chain kinds share the
//! nonlinear-steepening right-hand side
//!
//! ```text
//! c · da_j/dt = λ^j a_{j-1}^2 - λ^{j+1} a_j a_{j+1}
//! ```
//!
//! and the Obukhov kind uses the instability-cascade form
//!
//! ```text
//! c · da_j/dt = λ^j a_{j-1} a_j - λ^{j+1} a_{j+1}^2 - ν_j a_j.
//! ```
//!
//! Neighbours outside the stored range are zero (truncation closure), which
//! keeps the inviscid truncated systems exactly energy conserving.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Amplitudes above this magnitude are reported as overflow.
pub const AMPLITUDE_OVERFLOW: f64 = 1e150;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShellError {
    #[error("state has {got} amplitudes, model expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("state starts at shell {got}, model root shell is {expected}")]
    RootMismatch { expected: i32, got: i32 },
    #[error("amplitude at shell {shell} is {value:e}: numeric overflow near blow-up")]
    NumericOverflow { shell: i32, value: f64 },
    #[error("shell {shell} outside the admissible range [{lo}, {hi}]")]
    ShellOutOfRange { shell: i32, lo: i32, hi: i32 },
    #[error("operation is not defined for the {0:?} model")]
    UnsupportedKind(ModelKind),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// `da_j/dt = λ^j a_{j-1}^2 - λ^{j+1} a_j a_{j+1}` for any `λ > 1`.
    GenericChain,
    /// Symmetric chain reduction of the Katz-Pavlovic wavelet tree, in the
    /// rescaled amplitudes `a_j = 2^{3j/2} u_j` (λ = 2).
    KatzPavlovicChain,
    /// Friedlander-Pavlovic scalar chain (λ = 2^{5/2}, factor 2 on the left).
    FriedlanderPavlovic,
    /// Obukhov instability-cascade model.
    Obukhov,
}

impl ModelKind {
    pub fn is_chain(self) -> bool {
        !matches!(self, ModelKind::Obukhov)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GenericChain => "generic",
            ModelKind::KatzPavlovicChain => "kp",
            ModelKind::FriedlanderPavlovic => "fp",
            ModelKind::Obukhov => "obukhov",
        }
    }
}

/// Wavenumber ratio of the Friedlander-Pavlovic chain.
pub fn fp_lambda() -> f64 {
    2f64.powf(2.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Viscosity {
    None,
    /// `ν_j = nu · λ^{exponent · j}`.
    Power {
        nu: f64,
        exponent: f64,
    },
}

impl Viscosity {
    /// `ν_j = ν λ^{2j}`.
    pub fn laplacian(nu: f64) -> Self {
        Viscosity::Power { nu, exponent: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub lambda: f64,
    pub j0: i32,
    pub n_shells: usize,
    /// Factor `c` multiplying `da_j/dt` on the left-hand side.
    pub lhs_scale: f64,
    pub viscosity: Viscosity,
}

impl ModelParams {
    /// Builds parameters for `kind`, deriving the left-hand-side factor from
    /// the kind. `lambda` is ignored for the kinds that fix it.
    pub fn new(
        kind: ModelKind,
        lambda: f64,
        j0: i32,
        n_shells: usize,
        viscosity: Viscosity,
    ) -> Result<Self, ShellError> {
        let lambda = match kind {
            ModelKind::KatzPavlovicChain => 2.0,
            ModelKind::FriedlanderPavlovic => fp_lambda(),
            _ => lambda,
        };
        let lhs_scale = match kind {
            ModelKind::GenericChain => 1.0,
            ModelKind::KatzPavlovicChain => 8.0,
            ModelKind::FriedlanderPavlovic => 2.0,
            ModelKind::Obukhov => lambda.powf(-1.0 / 3.0),
        };
        let params = Self {
            kind,
            lambda,
            j0,
            n_shells,
            lhs_scale,
            viscosity,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn generic(lambda: f64, j0: i32, n_shells: usize) -> Result<Self, ShellError> {
        Self::new(
            ModelKind::GenericChain,
            lambda,
            j0,
            n_shells,
            Viscosity::None,
        )
    }

    pub fn katz_pavlovic(j0: i32, n_shells: usize) -> Result<Self, ShellError> {
        Self::new(
            ModelKind::KatzPavlovicChain,
            2.0,
            j0,
            n_shells,
            Viscosity::None,
        )
    }

    pub fn friedlander_pavlovic(j0: i32, n_shells: usize) -> Result<Self, ShellError> {
        Self::new(
            ModelKind::FriedlanderPavlovic,
            fp_lambda(),
            j0,
            n_shells,
            Viscosity::None,
        )
    }

    pub fn obukhov(
        lambda: f64,
        j0: i32,
        n_shells: usize,
        viscosity: Viscosity,
    ) -> Result<Self, ShellError> {
        Self::new(ModelKind::Obukhov, lambda, j0, n_shells, viscosity)
    }

    pub fn validate(&self) -> Result<(), ShellError> {
        let bad = |m: String| Err(ShellError::InvalidParams(m));
        if !(self.lambda.is_finite() && self.lambda > 1.0) {
            return bad(format!("lambda must exceed 1, got {}", self.lambda));
        }
        if self.n_shells < 2 {
            return bad(format!("need at least 2 shells, got {}", self.n_shells));
        }
        if !(self.lhs_scale.is_finite() && self.lhs_scale > 0.0) {
            return bad(format!(
                "lhs_scale must be positive, got {}",
                self.lhs_scale
            ));
        }
        match self.kind {
            ModelKind::KatzPavlovicChain if self.lambda != 2.0 => {
                return bad(format!(
                    "the KP chain fixes lambda = 2, got {}",
                    self.lambda
                ));
            }
            ModelKind::FriedlanderPavlovic if (self.lambda - fp_lambda()).abs() > 1e-12 => {
                return bad(format!(
                    "the FP chain fixes lambda = 2^(5/2), got {}",
                    self.lambda
                ));
            }
            _ => {}
        }
        if let Viscosity::Power { nu, exponent } = self.viscosity {
            if !(nu.is_finite() && nu >= 0.0 && exponent.is_finite()) {
                return bad(format!("invalid viscosity nu={nu}, exponent={exponent}"));
            }
            if self.kind.is_chain() && nu > 0.0 {
                return bad("viscosity is only defined for the Obukhov model".into());
            }
        }
        Ok(())
    }

    pub fn last_shell(&self) -> i32 {
        self.j0 + self.n_shells as i32 - 1
    }

    pub fn contains_shell(&self, j: i32) -> bool {
        j >= self.j0 && j <= self.last_shell()
    }

    /// `λ^j` for absolute shell `j`.
    pub fn wavenumber(&self, j: i32) -> f64 {
        self.lambda.powi(j)
    }

    pub fn viscosity_at(&self, j: i32) -> f64 {
        match self.viscosity {
            Viscosity::None => 0.0,
            Viscosity::Power { nu, exponent } => nu * self.lambda.powf(exponent * j as f64),
        }
    }

    pub fn is_inviscid(&self) -> bool {
        match self.viscosity {
            Viscosity::None => true,
            Viscosity::Power { nu, .. } => nu == 0.0,
        }
    }

    pub fn zero_state(&self) -> ShellState {
        ShellState::zeros(self.j0, self.n_shells)
    }

    fn check_shell(&self, j: i32, lo: i32, hi: i32) -> Result<usize, ShellError> {
        if j < lo || j > hi {
            return Err(ShellError::ShellOutOfRange { shell: j, lo, hi });
        }
        Ok((j - self.j0) as usize)
    }
}

/// Time plus amplitudes `a[i] = a_{j0+i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellState {
    pub t: f64,
    pub j0: i32,
    pub a: Vec<f64>,
}

impl ShellState {
    pub fn new(t: f64, j0: i32, a: Vec<f64>) -> Self {
        Self { t, j0, a }
    }

    pub fn zeros(j0: i32, n: usize) -> Self {
        Self::new(0.0, j0, vec![0.0; n])
    }

    /// All energy at shell `j` with amplitude `amplitude`.
    pub fn single_shell(params: &ModelParams, j: i32, amplitude: f64) -> Result<Self, ShellError> {
        let i = params.check_shell(j, params.j0, params.last_shell())?;
        let mut s = params.zero_state();
        s.a[i] = amplitude;
        Ok(s)
    }

    pub fn last_shell(&self) -> i32 {
        self.j0 + self.a.len() as i32 - 1
    }

    /// Amplitude of absolute shell `j`, zero outside the stored range.
    pub fn amplitude(&self, j: i32) -> f64 {
        if j < self.j0 {
            return 0.0;
        }
        self.a.get((j - self.j0) as usize).copied().unwrap_or(0.0)
    }

    pub fn shells(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.a
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.j0 + i as i32, v))
    }

    pub fn conforms_to(&self, params: &ModelParams) -> Result<(), ShellError> {
        if self.a.len() != params.n_shells {
            return Err(ShellError::LengthMismatch {
                expected: params.n_shells,
                got: self.a.len(),
            });
        }
        if self.j0 != params.j0 {
            return Err(ShellError::RootMismatch {
                expected: params.j0,
                got: self.j0,
            });
        }
        Ok(())
    }
}

/// Coefficient tables for one [`ModelParams`], used in the RHS hot loop.
#[derive(Debug, Clone)]
pub struct ChainModel {
    params: ModelParams,
    /// `λ^j / c` per stored shell.
    k_over_c: Vec<f64>,
    /// `λ^{j+1} / c` per stored shell.
    k_next_over_c: Vec<f64>,
    /// `ν_j / c` per stored shell.
    nu_over_c: Vec<f64>,
}

impl ChainModel {
    pub fn new(params: ModelParams) -> Result<Self, ShellError> {
        params.validate()?;
        let c = params.lhs_scale;
        let shells = params.j0..=params.last_shell();
        let k_over_c = shells.clone().map(|j| params.wavenumber(j) / c).collect();
        let k_next_over_c = shells
            .clone()
            .map(|j| params.wavenumber(j + 1) / c)
            .collect();
        let nu_over_c = shells.map(|j| params.viscosity_at(j) / c).collect();
        Ok(Self {
            params,
            k_over_c,
            k_next_over_c,
            nu_over_c,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.n_shells
    }

    /// Writes `da/dt` for amplitudes `a` into `out`.
    pub fn rhs_into(&self, a: &[f64], out: &mut [f64]) -> Result<(), ShellError> {
        let n = self.params.n_shells;
        if a.len() != n || out.len() != n {
            return Err(ShellError::LengthMismatch {
                expected: n,
                got: a.len().min(out.len()),
            });
        }
        for (i, &v) in a.iter().enumerate() {
            if !v.is_finite() || v.abs() > AMPLITUDE_OVERFLOW {
                return Err(ShellError::NumericOverflow {
                    shell: self.params.j0 + i as i32,
                    value: v,
                });
            }
        }
        let at = |i: isize| -> f64 {
            if i < 0 || i as usize >= n {
                0.0
            } else {
                a[i as usize]
            }
        };
        if self.params.kind.is_chain() {
            for i in 0..n {
                let prev = at(i as isize - 1);
                let next = at(i as isize + 1);
                out[i] = self.k_over_c[i] * prev * prev - self.k_next_over_c[i] * a[i] * next;
            }
        } else {
            for i in 0..n {
                let prev = at(i as isize - 1);
                let next = at(i as isize + 1);
                out[i] = self.k_over_c[i] * prev * a[i]
                    - self.k_next_over_c[i] * next * next
                    - self.nu_over_c[i] * a[i];
            }
        }
        Ok(())
    }

    /// Largest `λ^j |a_j| / c`: the inverse of the fastest local time scale,
    /// the shell analogue of `max |∂u/∂x|`.
    pub fn slope_measure(&self, a: &[f64]) -> f64 {
        a.iter()
            .zip(&self.k_over_c)
            .map(|(v, k)| (v * k).abs())
            .fold(0.0, f64::max)
    }
}

pub fn rhs(params: &ModelParams, state: &ShellState) -> Result<Vec<f64>, ShellError> {
    state.conforms_to(params)?;
    let model = ChainModel::new(*params)?;
    let mut out = vec![0.0; params.n_shells];
    model.rhs_into(&state.a, &mut out)?;
    Ok(out)
}

pub fn energy(state: &ShellState) -> f64 {
    state.a.iter().map(|v| v * v).sum()
}

/// `E_B(j) = Σ_{l ≥ j} a_l^2` over the stored shells.
pub fn tail_energy(state: &ShellState, j: i32) -> Result<f64, ShellError> {
    let last = state.last_shell();
    if j < state.j0 || j > last {
        return Err(ShellError::ShellOutOfRange {
            shell: j,
            lo: state.j0,
            hi: last,
        });
    }
    Ok(state.a[(j - state.j0) as usize..]
        .iter()
        .map(|v| v * v)
        .sum())
}

/// All tail energies at once, `out[i] = E_B(j0 + i)`.
pub fn tail_energies(state: &ShellState) -> Vec<f64> {
    let mut out = vec![0.0; state.a.len()];
    let mut acc = 0.0;
    for i in (0..state.a.len()).rev() {
        acc += state.a[i] * state.a[i];
        out[i] = acc;
    }
    out
}

/// `d/dt E_B(j) = 2 λ^j a_{j-1}^2 a_j / c` for the chain kinds.
pub fn tail_flux(params: &ModelParams, state: &ShellState, j: i32) -> Result<f64, ShellError> {
    if !params.kind.is_chain() {
        return Err(ShellError::UnsupportedKind(params.kind));
    }
    state.conforms_to(params)?;
    params.check_shell(j, params.j0 + 1, params.last_shell())?;
    let prev = state.amplitude(j - 1);
    Ok(2.0 * params.wavenumber(j) * prev * prev * state.amplitude(j) / params.lhs_scale)
}

/// `Σ_j (1 + μ^{2αj}) a_j^2` with absolute shell indices.
pub fn sobolev_norm_sq(state: &ShellState, alpha: f64, mu: f64) -> f64 {
    let two_alpha_ln_mu = 2.0 * alpha * mu.ln();
    state
        .shells()
        .map(|(j, v)| (1.0 + (two_alpha_ln_mu * j as f64).exp()) * v * v)
        .sum()
}

/// Lower bound for the squared `H^α` norm of the Katz-Pavlovic wavelet field
/// carried by the chain: `2^{-3 j0} Σ_j 2^{2αj} a_j^2`.
pub fn kp_wavelet_norm_lower_bound_sq(state: &ShellState, alpha: f64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let sum: f64 = state
        .shells()
        .map(|(j, v)| (2.0 * alpha * j as f64 * ln2).exp() * v * v)
        .sum();
    (-3.0 * state.j0 as f64 * ln2).exp() * sum
}

fn kp_scale(j: i32) -> f64 {
    (1.5 * j as f64 * std::f64::consts::LN_2).exp()
}

/// `a_j = 2^{3j/2} u_j`, with `u[i]` holding `u_{j0+i}`.
pub fn kp_amplitudes_to_chain(u: &[f64], j0: i32) -> Vec<f64> {
    u.iter()
        .enumerate()
        .map(|(i, &v)| kp_scale(j0 + i as i32) * v)
        .collect()
}

/// Inverse of [`kp_amplitudes_to_chain`].
pub fn chain_to_kp_amplitudes(a: &[f64], j0: i32) -> Vec<f64> {
    a.iter()
        .enumerate()
        .map(|(i, &v)| v / kp_scale(j0 + i as i32))
        .collect()
}

/// Total energy of the symmetric KP branch, `2^{-3 j0} Σ_j 2^{3j} u_j^2`.
pub fn kp_energy(u: &[f64], j0: i32) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let sum: f64 = u
        .iter()
        .enumerate()
        .map(|(i, &v)| (3.0 * (j0 + i as i32) as f64 * ln2).exp() * v * v)
        .sum();
    (-3.0 * j0 as f64 * ln2).exp() * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(j0: i32, a: &[f64]) -> ShellState {
        ShellState::new(0.0, j0, a.to_vec())
    }

    #[test]
    fn generic_rhs_direct_substitution() {
        let p = ModelParams::generic(2.0, 0, 4).unwrap();
        let d = rhs(&p, &state(0, &[1.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(d, vec![-2.0, 2.0, 4.0, 0.0]);
    }

    #[test]
    fn zero_state_is_fixed_point_for_every_kind() {
        for p in [
            ModelParams::generic(3.0, -2, 6).unwrap(),
            ModelParams::katz_pavlovic(1, 5).unwrap(),
            ModelParams::friedlander_pavlovic(0, 5).unwrap(),
            ModelParams::obukhov(2.0, 0, 5, Viscosity::laplacian(0.1)).unwrap(),
        ] {
            let d = rhs(&p, &p.zero_state()).unwrap();
            assert!(d.iter().all(|&v| v == 0.0), "{:?}", p.kind);
        }
    }

    #[test]
    fn lhs_factor_divides_rhs() {
        let a = [0.3, 0.7, 0.2, 0.1];
        let g = rhs(&ModelParams::generic(2.0, 0, 4).unwrap(), &state(0, &a)).unwrap();
        let kp = rhs(&ModelParams::katz_pavlovic(0, 4).unwrap(), &state(0, &a)).unwrap();
        for (x, y) in g.iter().zip(&kp) {
            assert!((x / 8.0 - y).abs() < 1e-15);
        }
    }

    #[test]
    fn obukhov_power_law_is_interior_fixed_point() {
        let lambda: f64 = 2.0;
        let p = ModelParams::obukhov(lambda, 0, 12, Viscosity::None).unwrap();
        let a: Vec<f64> = (0..12)
            .map(|j| lambda.powf(-2.0 / 9.0) * lambda.powf(-(j as f64) / 3.0))
            .collect();
        let d = rhs(&p, &state(0, &a)).unwrap();
        for j in 1..11 {
            let scale = p.wavenumber(j as i32 + 1) * a[j] * a[j];
            assert!(d[j].abs() <= 1e-12 * scale, "shell {j}: {}", d[j]);
        }
        // the truncated boundaries are not steady
        assert!(d[0].abs() > 1e-3 && d[11].abs() > 1e-3);
    }

    #[test]
    fn rhs_rejects_mismatch_and_overflow() {
        let p = ModelParams::generic(2.0, 0, 3).unwrap();
        assert!(matches!(
            rhs(&p, &state(0, &[1.0, 2.0])),
            Err(ShellError::LengthMismatch { .. })
        ));
        assert!(matches!(
            rhs(&p, &state(0, &[1.0, f64::NAN, 0.0])),
            Err(ShellError::NumericOverflow { shell: 1, .. })
        ));
        assert!(matches!(
            rhs(&p, &state(0, &[1.0, 0.0, 1e151])),
            Err(ShellError::NumericOverflow { shell: 2, .. })
        ));
    }

    #[test]
    fn kind_invariants_enforced() {
        let mut p = ModelParams::friedlander_pavlovic(0, 4).unwrap();
        assert!((p.lambda - 2f64.powf(2.5)).abs() < 1e-15);
        p.lambda = 2.0;
        assert!(p.validate().is_err());
        assert!(ModelParams::generic(1.0, 0, 4).is_err());
        assert!(ModelParams::generic(2.0, 0, 1).is_err());
        assert_eq!(ModelParams::katz_pavlovic(0, 4).unwrap().lambda, 2.0);
    }

    #[test]
    fn energy_and_tail_energy() {
        assert_eq!(energy(&state(0, &[3.0, 4.0, 0.0])), 25.0);
        assert_eq!(energy(&state(0, &[0.0; 5])), 0.0);
        let mut a = vec![0.0; 8];
        a[5] = 2.0;
        let s = state(0, &a);
        assert_eq!(tail_energy(&s, 3).unwrap(), 4.0);
        assert_eq!(tail_energy(&s, 6).unwrap(), 0.0);
        assert_eq!(tail_energy(&s, 0).unwrap(), energy(&s));
        assert!(tail_energy(&s, 8).is_err());
        assert!(tail_energy(&s, -1).is_err());
        let all = tail_energies(&s);
        for j in 0..8 {
            assert_eq!(all[j as usize], tail_energy(&s, j).unwrap());
        }
    }

    #[test]
    fn tail_flux_formula() {
        let p = ModelParams::generic(2.0, 0, 4).unwrap();
        let s = state(0, &[1.0, 3.0, 0.0, 0.0]);
        assert_eq!(tail_flux(&p, &s, 1).unwrap(), 12.0);
        assert_eq!(tail_flux(&p, &s, 3).unwrap(), 0.0);
        assert!(tail_flux(&p, &s, 0).is_err());
        let ob = ModelParams::obukhov(2.0, 0, 4, Viscosity::None).unwrap();
        assert!(matches!(
            tail_flux(&ob, &s, 1),
            Err(ShellError::UnsupportedKind(ModelKind::Obukhov))
        ));
    }

    #[test]
    fn tail_flux_equals_rhs_energy_rate() {
        let p = ModelParams::friedlander_pavlovic(-1, 6).unwrap();
        let s = state(-1, &[0.4, 0.9, 0.3, 0.2, 0.05, 0.01]);
        let d = rhs(&p, &s).unwrap();
        for j in 0..5 {
            let i = (j + 1) as usize;
            let direct: f64 = (i..6).map(|l| 2.0 * s.a[l] * d[l]).sum();
            let flux = tail_flux(&p, &s, j).unwrap();
            assert!((direct - flux).abs() <= 1e-12 * flux.abs().max(1.0));
        }
    }

    #[test]
    fn sobolev_norm_values() {
        let mut a = vec![0.0; 5];
        a[3] = 1.0;
        assert!((sobolev_norm_sq(&state(0, &a), 1.0, 2.0) - 65.0).abs() < 1e-12);
        assert_eq!(sobolev_norm_sq(&state(0, &[0.0; 5]), 0.7, 3.0), 0.0);
        // absolute indices: shifting j0 changes the weights
        let s = state(-2, &[1.0, 0.0]);
        assert!((sobolev_norm_sq(&s, 1.0, 2.0) - (1.0 + 2f64.powi(-4))).abs() < 1e-15);
    }

    #[test]
    fn kp_norm_bound_prefactor() {
        assert!((kp_wavelet_norm_lower_bound_sq(&state(0, &[1.0, 0.0]), 1.0) - 1.0).abs() < 1e-15);
        let a = [0.5, 0.25, 0.125];
        let base = kp_wavelet_norm_lower_bound_sq(&state(0, &a), 0.8);
        let shifted = kp_wavelet_norm_lower_bound_sq(&state(2, &a), 0.8);
        // same amplitudes two shells up: weights 2^{1.6·2}, prefactor 2^{-6}
        assert!((shifted - base * 2f64.powf(3.2 - 6.0)).abs() < 1e-14);
    }

    #[test]
    fn kp_mapping() {
        let a = kp_amplitudes_to_chain(&[0.0, 0.0, 1.0], 0);
        assert!((a[2] - 8.0).abs() < 1e-14);
        assert_eq!(kp_amplitudes_to_chain(&[0.0; 3], 4), vec![0.0; 3]);
        let u = [0.3, -0.1, 0.02, 0.004];
        for j0 in [-3, 0, 5] {
            let a = kp_amplitudes_to_chain(&u, j0);
            let back = chain_to_kp_amplitudes(&a, j0);
            for (x, y) in u.iter().zip(&back) {
                assert!((x - y).abs() <= 1e-15 * x.abs().max(1e-300));
            }
            let e_chain = (-3.0 * j0 as f64 * std::f64::consts::LN_2).exp()
                * a.iter().map(|v| v * v).sum::<f64>();
            assert!((kp_energy(&u, j0) - e_chain).abs() <= 1e-13 * e_chain);
        }
    }
}
