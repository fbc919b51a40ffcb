//! Built-in verification suite behind the `check` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blowup;
use crate::burgers;
use crate::shell::{self, ModelParams, Viscosity};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

pub fn dyadic_projection() -> CheckResult {
    match burgers::dyadic_projection_check(10) {
        Ok(r) => result(
            "dyadic projection",
            r.all_match,
            format!("{} levels, m = 0..=10", r.levels.len()),
        ),
        Err(e) => result("dyadic projection", false, e.to_string()),
    }
}

/// Interior residual and flux spread of the constant-flux Obukhov state.
pub fn obukhov_fixed_point() -> CheckResult {
    let name = "obukhov fixed point";
    let flux = 1.0;
    let params = match ModelParams::obukhov(2.0, 0, 24, Viscosity::None) {
        Ok(p) => p,
        Err(e) => return result(name, false, e.to_string()),
    };
    let state = blowup::obukhov_powerlaw_state(&params, flux);
    let d = match shell::rhs(&params, &state) {
        Ok(d) => d,
        Err(e) => return result(name, false, e.to_string()),
    };
    let c = params.lhs_scale;
    let a = &state.a;
    let mut residual = 0.0f64;
    for i in 1..a.len() - 1 {
        let j = params.j0 + i as i32;
        let scale = (params.wavenumber(j) * a[i - 1] * a[i]).abs() / c;
        residual = residual.max(d[i].abs() / scale);
    }
    let mut spread = 0.0f64;
    for j in params.j0 + 1..=params.last_shell() {
        match blowup::obukhov_flux(&params, &state, j) {
            Ok(f) => spread = spread.max((f - flux).abs() / flux),
            Err(e) => return result(name, false, e.to_string()),
        }
    }
    result(
        name,
        residual <= 1e-12 && spread <= 1e-10,
        format!("residual {residual:e}, flux spread {spread:e}"),
    )
}

/// FP `(q, ρ)` validity on the ε grid: valid exactly for `ε < 2/3`.
pub fn fp_constants_table() -> CheckResult {
    let grid = [0.1, 0.3, 0.5, 0.65, 0.67, 0.7];
    let flags: Vec<bool> = grid
        .iter()
        .map(|&e| blowup::fp_epsilon_constants(e).is_admissible())
        .collect();
    let expected: Vec<bool> = grid.iter().map(|&e| e > 0.0 && e < 2.0 / 3.0).collect();
    result(
        "fp constants table",
        flags == expected,
        format!("eps {grid:?} -> {flags:?}"),
    )
}

pub fn reference_constants() -> CheckResult {
    let name = "reference constants";
    match blowup::pick_constants(2.0, 2.0, 1.0, 1.0) {
        Ok(c) => {
            let rho = 0.5 * (1.0 / 2f64.sqrt() + 1.0);
            let ok = (c.q - 0.5).abs() < 1e-15 && (c.rho - rho).abs() < 1e-15 && c.is_admissible();
            result(name, ok, format!("q = {:?}, rho = {:?}", c.q, c.rho))
        }
        Err(e) => result(name, false, e.to_string()),
    }
}

/// Random `(λ, μ, α, δ)`: flags against the inequalities written directly,
/// and, for `μ = λ`, admissibility against `max(0, 2α-2) < δ < 2α`.
pub fn random_constants(seed: u64, cases: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for _ in 0..cases {
        let lambda = rng.gen_range(1.05..8.0);
        let mu = if rng.gen_bool(0.5) {
            lambda
        } else {
            rng.gen_range(1.05..8.0)
        };
        let alpha = rng.gen_range(0.05..4.0);
        let delta = rng.gen_range(-2.0..8.0);
        let Ok(c) = blowup::pick_constants(lambda, mu, alpha, delta) else {
            bad.push((lambda, mu, alpha, delta));
            continue;
        };
        let q = mu.powf(delta - 2.0 * alpha);
        let req = q < 1.0 && lambda * lambda * q > 1.0;
        let bucond = delta > 0.0;
        let mut ok = c.valid_req == req && c.valid_bucond == bucond;
        if mu == lambda {
            let window = delta > (2.0 * alpha - 2.0).max(0.0) && delta < 2.0 * alpha;
            ok &= c.is_admissible() == window;
        }
        if !ok {
            bad.push((lambda, mu, alpha, delta));
        }
    }
    result(
        "random constants",
        bad.is_empty(),
        format!(
            "{cases} cases, seed {seed}, {} mismatches {:?}",
            bad.len(),
            bad.first()
        ),
    )
}

pub fn divergence_classifier() -> CheckResult {
    let ok = burgers::diverges(4.0 / 3.0, 5.0 / 6.0)
        && !burgers::diverges(4.0 / 3.0, 5.0 / 6.0 - 1e-9)
        && burgers::diverges(1.0, 0.5)
        && !burgers::diverges(1.0, 0.5 - 1e-9);
    result(
        "divergence classifier",
        ok,
        "p = 4/3 at alpha = 5/6, p = 1 at alpha = 1/2".into(),
    )
}

pub fn run_checks(seed: u64) -> Vec<CheckResult> {
    vec![
        dyadic_projection(),
        obukhov_fixed_point(),
        fp_constants_table(),
        reference_constants(),
        random_constants(seed, 1000),
        divergence_classifier(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_checks(1) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
