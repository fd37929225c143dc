use queuereg_core::solver::{concavity_defect, g_value, solve_alpha_star, solve_x_alpha, sweep, ScenarioConfig};
use queuereg_core::value_models::{AnalyticLaw, MonteCarloConfig, PathSet, StopLaw, TDist, ValueModel};

fn bundled() -> Vec<(&'static str, ValueModel, ScenarioConfig)> {
    vec![
        (
            "exponential",
            ValueModel::ConstantMarginal {
                kappa: 1.0,
                t_dist: TDist::Exponential { rate: 1.0 },
            },
            ScenarioConfig::new(0.5, 1.0),
        ),
        (
            "uniform-linear",
            ValueModel::LinearRemaining {
                t_dist: TDist::Uniform { lo: 0.0, hi: 1.0 },
            },
            ScenarioConfig::new(0.5, 1.0),
        ),
        (
            "poisson",
            ValueModel::PoissonSubordinator { kappa: 2.5, q: 1.0 },
            ScenarioConfig::new(0.4, 1.0),
        ),
    ]
}

#[test]
fn exponential_g_matches_closed_form() {
    let (_, model, sc) = bundled().swap_remove(0);
    let law = AnalyticLaw::new(model).unwrap();
    let (alpha, q, lambda) = (0.5f64, 1.0f64, 0.5f64);
    let expected = alpha - (lambda / (1.0 - lambda * alpha)) * ((1.0 - alpha * q) * (1.0 - alpha * q).ln() + alpha * q) / (q * q);
    let g = g_value(&law, &sc, 1.0, alpha).unwrap();
    assert!((g - expected).abs() < 1e-8, "{g} vs {expected}");
}

#[test]
fn fixed_point_identity_holds_on_bundled_scenarios() {
    for (name, model, sc) in bundled() {
        let law = AnalyticLaw::new(model).unwrap();
        let r = solve_alpha_star(&law, &sc).unwrap();
        assert!(r.x_identity_residual <= 1e-6 * r.x_star.max(1.0), "{name}: {r:?}");
        assert!(r.alpha_star > 0.0 && r.alpha_star < 1.0 / sc.lambda);
        assert!(r.alpha_star <= law.mean_initial_value() / (sc.gamma * sc.lambda));
        assert!(r.x_star > 0.0 && r.g_star > 0.0);
        assert!((r.mean_s - r.alpha_star).abs() <= 1e-9 * r.alpha_star.max(1.0));
    }
}

#[test]
fn g_is_concave_bounded_and_thresholds_decrease() {
    for (name, model, sc) in bundled() {
        let law = AnalyticLaw::new(model.clone()).unwrap();
        let rows = sweep(&law, &sc, 50).unwrap();
        let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.g.map(|g| (r.alpha, g))).collect();
        assert!(pts.len() >= 3, "{name}");
        assert!(concavity_defect(&pts) <= 1e-8, "{name}");
        let bound = law.kappa().powi(2) / (sc.gamma * sc.lambda);
        assert!(pts.iter().all(|&(_, g)| g <= bound), "{name}");
        let xs: Vec<f64> = rows.iter().filter_map(|r| r.x_alpha).collect();
        assert!(xs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{name}");
        // the flag, once raised, stays raised
        let first_flag = rows.iter().position(|r| r.x_alpha.is_none()).unwrap_or(rows.len());
        assert!(rows[first_flag..].iter().all(|r| r.x_alpha.is_none()), "{name}");
    }
}

#[test]
fn threshold_meets_mean_constraint() {
    for (_, model, sc) in bundled() {
        let law = AnalyticLaw::new(model).unwrap();
        for alpha in [0.1, 0.3, 0.6] {
            if let Some(x) = solve_x_alpha(&law, &sc, sc.gamma, alpha).unwrap().root() {
                let c = sc.gamma * sc.lambda / (1.0 - sc.lambda * alpha);
                let m = law.moments(c, x).unwrap().mean;
                assert!((m - alpha).abs() <= 1e-9 * alpha.max(1.0));
            }
        }
    }
}

#[test]
fn monte_carlo_solve_tracks_closed_form() {
    let (_, model, sc) = bundled().swap_remove(1);
    let exact = solve_alpha_star(&AnalyticLaw::new(model.clone()).unwrap(), &sc).unwrap();
    let paths = PathSet::draw(&model, &MonteCarloConfig { paths: 20_000, seed: 4 }).unwrap();
    let mc = solve_alpha_star(&paths, &sc).unwrap();
    assert!(!mc.diagnostics.exact_moments);
    assert!((mc.alpha_star - exact.alpha_star).abs() < 0.02, "{} vs {}", mc.alpha_star, exact.alpha_star);
    assert!((mc.g_star - exact.g_star).abs() < 0.01);
}

#[test]
fn mmff_model_solves() {
    let model = ValueModel::Mmff {
        kappa: 1.0,
        rate_matrix: vec![vec![-1.0, 1.0], vec![2.0, -2.0]],
        drain_rates: vec![1.0, 2.0],
        initial_dist: vec![0.5, 0.5],
    };
    let law = model.law(&MonteCarloConfig { paths: 5_000, seed: 1 }).unwrap();
    let r = solve_alpha_star(law.as_ref(), &ScenarioConfig::new(0.5, 1.0)).unwrap();
    assert!(r.alpha_star > 0.0 && r.g_star > 0.0);
    assert!(r.x_identity_residual <= 1e-6 * r.x_star.max(1.0), "{r:?}");
}
