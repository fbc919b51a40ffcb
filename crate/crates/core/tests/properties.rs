use dyadic_lab::blowup;
use dyadic_lab::cli_io::{parse_config, render};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn constants_flags_match_inequalities(
        lambda in 1.01f64..10.0,
        mu in 1.01f64..10.0,
        alpha in 0.01f64..5.0,
        delta in -3.0f64..10.0,
    ) {
        let c = blowup::pick_constants(lambda, mu, alpha, delta).unwrap();
        let q = mu.powf(delta - 2.0 * alpha);
        prop_assert!((c.q - q).abs() <= 1e-12 * q);
        prop_assert_eq!(c.valid_bucond, mu.powf(2.0 * alpha) * q > 1.0);
        if c.valid_req {
            prop_assert!(q > 0.0 && q < 1.0);
            prop_assert!(c.rho > 0.0 && c.rho < 1.0);
            prop_assert!(lambda * c.rho * q.sqrt() > 1.0);
        } else {
            // no ρ in (0, 1) can satisfy λρ√q > 1
            prop_assert!(q >= 1.0 || lambda * q.sqrt() <= 1.0 + 1e-12);
        }
    }
}

fn kind_block(kind: usize, lambda: f64) -> String {
    match kind {
        0 => format!("model.kind = generic\nmodel.lambda = {lambda}\n"),
        1 => "model.kind = kp\n".into(),
        2 => "model.kind = fp\nanalysis.constants = fp_epsilon\nanalysis.epsilon = 0.25\n".into(),
        _ => format!("model.kind = obukhov\nmodel.lambda = {lambda}\nmodel.nu = 0.01\nmodel.viscosity_exponent = 2\n"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn render_then_parse_is_identity(
        kind in 0usize..4,
        lambda in 1.1f64..6.0,
        j0 in -3i32..4,
        n in 8usize..40,
        rel in 1e-13f64..1e-4,
        t_end in 0.01f64..100.0,
        alphas in prop::collection::vec(0.1f64..3.0, 1..4),
        mu_is_lambda in any::<bool>(),
        stride in 1usize..50,
        init in 0usize..3,
    ) {
        let mut text = kind_block(kind, lambda);
        text += &format!("model.j0 = {j0}\nmodel.n_shells = {n}\n");
        text += &match init {
            0 => format!("init.kind = single_shell\ninit.shell = {j0}\ninit.amplitude = 0.75\n"),
            1 if kind != 3 => format!("init.kind = seed\ninit.shell = {}\ninit.energy = 0.5\n", j0 + 1),
            _ => format!("init.kind = explicit\ninit.values = {}\n", vec!["0.5"; n].join(", ")),
        };
        text += &format!("integrator.rel_tol = {rel:e}\nintegrator.t_end = {t_end}\n");
        let alpha_list: Vec<String> = alphas.iter().map(|a| a.to_string()).collect();
        text += &format!("analysis.alpha = {}\n", alpha_list.join(", "));
        if mu_is_lambda && kind != 2 {
            text += "analysis.mu = lambda\n";
        }
        text += &format!("output.stride = {stride}\n");
        let config = parse_config(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let again = parse_config(&render(&config)).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&again, &config);
        prop_assert_eq!(render(&again), render(&config));
    }
}
