//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the output.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use queuereg::commands::{BalkingReport, ExternalitiesReport, RetrialReport, SolveReport, VerifyReport};
use queuereg::config::RunConfig;
use queuereg::report::Envelope;
use queuereg_core::balking::{phase_a, phase_b, Scale, TypeDist, TypedValueModel};
use queuereg_core::pricing::build_price;
use queuereg_core::retrial::{g_tilde_grid, solve_retrial, RetrialConfig};
use queuereg_core::simulator::{simulate_mg1, SimConfig};
use queuereg_core::solver::{concavity_defect, solve_alpha_star, sweep, ScenarioConfig};
use queuereg_core::value_models::{
    mean_stop, second_moment_stop, AnalyticLaw, MonteCarloConfig, PathSet, TDist, ValueModel,
};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const BUNDLED: [&str; 4] = ["deterministic", "exponential", "uniform_linear", "poisson"];

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn scenario(name: &str) -> RunConfig {
    RunConfig::load(&scenario_path(name)).expect("bundled scenario parses")
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Runs the binary on a bundled config, optionally patched, and parses the
/// JSON report.
fn cli<T: DeserializeOwned>(command: &str, name: &str, patch: impl FnOnce(&mut Value)) -> Result<(T, Duration), String> {
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(scenario_path(name)).unwrap()).unwrap();
    patch(&mut cfg);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("config.json");
    std::fs::write(&path, cfg.to_string()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_queuereg"))
        .args([command, "--config", path.to_str().unwrap(), "--format", "json"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !out.status.success() {
        return Err(format!("{command} {name}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    let env: Envelope<T> = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    Ok((env.body, elapsed))
}

fn within3(z: Option<f64>) -> bool {
    z.is_some_and(|z| z.abs() <= 3.0)
}

fn fmt_z(z: Option<f64>) -> String {
    z.map_or("n/a".into(), |z| format!("{z:+.2}"))
}

fn deterministic_closed_form() -> Check {
    let sc = ScenarioConfig::new(0.5, 1.0);
    let law = AnalyticLaw::new(ValueModel::ConstantMarginal {
        kappa: 2.0,
        t_dist: TDist::Deterministic { t0: 10.0 },
    })
    .unwrap();
    let start = Instant::now();
    let r = solve_alpha_star(&law, &sc).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let alpha = (4.0 - 3.2f64.sqrt()) / 2.0;
    let slack = 1.0 - 0.5 * alpha;
    let x = 0.25 * alpha * alpha / (2.0 * slack * slack);
    let ea = (r.alpha_star - alpha).abs() / alpha;
    let ex = (r.x_star - x).abs() / x;
    ensure(ea <= 1e-6 && ex <= 1e-6, format!("relative errors {ea:.1e}, {ex:.1e}"))?;
    ensure(elapsed < Duration::from_secs(1), format!("solve took {elapsed:?}"))?;
    let (rep, cli_time) = cli::<SolveReport>("solve", "deterministic", |_| {})?;
    let ca = (rep.alpha_star - alpha).abs() / alpha;
    ensure(ca <= 1e-6 && cli_time < Duration::from_secs(1), format!("cli alpha error {ca:.1e} in {cli_time:?}"))?;
    Ok(format!(
        "alpha* {:.7} x* {:.7}, rel err {ea:.1e}/{ex:.1e}, {elapsed:?}",
        r.alpha_star, r.x_star
    ))
}

fn fixed_point_identity() -> Check {
    let mut worst: f64 = 0.0;
    for name in BUNDLED {
        let cfg = scenario(name);
        let law = cfg.law(0).map_err(|e| e.to_string())?;
        let r = solve_alpha_star(law.as_ref(), &cfg.scenario).map_err(|e| e.to_string())?;
        let rel = r.x_identity_residual / r.x_star.max(1.0);
        ensure(rel <= 1e-6, format!("{name}: residual {:.2e}", r.x_identity_residual))?;
        worst = worst.max(rel);
    }
    Ok(format!("worst residual / max(1, x*) = {worst:.1e} over {} scenarios", BUNDLED.len()))
}

fn concavity_suites() -> Check {
    let retrial = RetrialConfig { theta: 1.0, delta: 1.0 };
    let mut worst = f64::NEG_INFINITY;
    for name in BUNDLED {
        let cfg = scenario(name);
        let law = cfg.law(0).map_err(|e| e.to_string())?;
        let g: Vec<(f64, f64)> = sweep(law.as_ref(), &cfg.scenario, 50)
            .map_err(|e| e.to_string())?
            .into_iter()
            .filter_map(|row| row.g.map(|g| (row.alpha, g)))
            .collect();
        let gt = g_tilde_grid(law.as_ref(), &cfg.scenario, &retrial, 50).map_err(|e| e.to_string())?;
        for (label, pts) in [("g", &g), ("g~", &gt)] {
            ensure(pts.len() >= 3, format!("{name} {label}: only {} admissible points", pts.len()))?;
            let d = concavity_defect(pts);
            ensure(d <= 1e-8, format!("{name} {label}: midpoint defect {d:.2e}"))?;
            worst = worst.max(d);
        }
    }
    Ok(format!("largest midpoint defect {worst:.1e} (slack 1e-8)"))
}

/// Best `kappa ES - gamma lambda ES^2 / (2 (1 - lambda alpha))` over a 1e-3
/// grid of `(alpha, x)` with `ES <= alpha`, given the moments of the
/// threshold rule at drift `c`.
fn grid_oracle(lambda: f64, gamma: f64, kappa: f64, moments: impl Fn(f64, f64) -> (f64, f64)) -> (f64, f64) {
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
    let steps_a = (1.0 / lambda / 1e-3) as usize;
    let steps_x = (kappa / 1e-3).round() as usize;
    for i in 0..steps_a {
        let alpha = i as f64 * 1e-3;
        let slack = 1.0 - lambda * alpha;
        let c = gamma * lambda / slack;
        for j in 0..=steps_x {
            let (es, es2) = moments(c, j as f64 * 1e-3);
            if es <= alpha + 1e-12 {
                let v = kappa * es - gamma * lambda * es2 / (2.0 * slack);
                if v > best {
                    (best, arg) = (v, alpha);
                }
            }
        }
    }
    (best, arg)
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    for name in ["deterministic", "exponential"] {
        let cfg = scenario(name);
        let law = cfg.law(0).map_err(|e| e.to_string())?;
        let r = solve_alpha_star(law.as_ref(), &cfg.scenario).map_err(|e| e.to_string())?;
        let (lambda, gamma) = (cfg.scenario.lambda, cfg.scenario.gamma);
        // V = kappa on [0, T]; the rule stops at min(T, (kappa - x) / c)
        let (best, arg) = match name {
            "deterministic" => grid_oracle(lambda, gamma, 2.0, |c, x| {
                let s = ((2.0 - x) / c).clamp(0.0, 10.0);
                (s, s * s)
            }),
            _ => grid_oracle(lambda, gamma, 1.0, |c, x| {
                let tau = ((1.0 - x) / c).max(0.0);
                let e = (-tau).exp();
                (1.0 - e, 2.0 * (1.0 - e * (1.0 + tau)))
            }),
        };
        ensure(
            best <= r.g_star + 1e-5,
            format!("{name}: grid {best:.8} beats g* {:.8}", r.g_star),
        )?;
        ensure(
            best >= r.g_star - 1e-3 && (arg - r.alpha_star).abs() <= 2e-2,
            format!("{name}: grid optimum {best:.6} at {arg} far from g* {:.6} at {:.4}", r.g_star, r.alpha_star),
        )?;
        notes.push(format!("{name} g*-grid {:.1e}", r.g_star - best));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), format!("took {elapsed:?}"))?;
    Ok(format!("{}, {elapsed:.1?}", notes.join(", ")))
}

fn simulation_vs_analysis() -> Check {
    let mut notes = Vec::new();
    for name in BUNDLED {
        let (rep, elapsed) = cli::<VerifyReport>("verify", name, |c| {
            c["simulation"] = json!({ "horizon": 1_000_000 });
        })?;
        ensure(
            within3(rep.welfare_rate_z) && within3(rep.mean_wait_z),
            format!(
                "{name}: welfare z {} wait z {}",
                fmt_z(rep.welfare_rate_z),
                fmt_z(rep.mean_wait_z)
            ),
        )?;
        ensure(elapsed < Duration::from_secs(300), format!("{name}: {elapsed:?}"))?;
        notes.push(format!(
            "{name} z {}/{} {:.1}s",
            fmt_z(rep.welfare_rate_z),
            fmt_z(rep.mean_wait_z),
            elapsed.as_secs_f64()
        ));
    }
    Ok(notes.join(", "))
}

fn externalities() -> Check {
    let (unit, _) = cli::<ExternalitiesReport>("externalities", "unit_service", |_| {})?;
    let (s, lambda, es, es2) = (2.0, 0.5, 1.0, 1.0);
    let slack: f64 = 1.0 - lambda * es;
    let hand = s * lambda * lambda * es2 / (2.0 * slack.powi(2)) + s * s * lambda / (2.0 * slack);
    ensure((unit.saved_wait_analytic - hand).abs() < 1e-12, "closed form disagrees with the hand value")?;
    let z = (unit.saved_wait - hand) / unit.saved_wait_se;
    ensure(z.abs() <= 3.0, format!("unit service: {:.4} ± {:.4} vs 3", unit.saved_wait, unit.saved_wait_se))?;
    let mut notes = vec![format!("unit saved {:.3} ± {:.3} (z {z:+.2})", unit.saved_wait, unit.saved_wait_se)];
    for (name, s) in [("deterministic", 1.0), ("exponential", 2.0)] {
        let (rep, _) = cli::<ExternalitiesReport>("externalities", name, |c| {
            c["externalities"] = json!({ "s": s, "warmup": 10000, "replications": 2000 });
        })?;
        ensure(
            within3(rep.internalization_z),
            format!(
                "{name}: gamma * saved {:.4} vs price {:.4}, z {}",
                rep.gamma_saved_wait,
                rep.price_net,
                fmt_z(rep.internalization_z)
            ),
        )?;
        notes.push(format!("{name} internalization z {}", fmt_z(rep.internalization_z)));
    }
    Ok(notes.join(", "))
}

fn price_perturbation() -> Check {
    let mut notes = Vec::new();
    for name in ["deterministic", "exponential"] {
        let cfg = scenario(name);
        let law = cfg.law(0).map_err(|e| e.to_string())?;
        let r = solve_alpha_star(law.as_ref(), &cfg.scenario).map_err(|e| e.to_string())?;
        let price = build_price(&cfg.scenario, r.alpha_star, r.x_star).map_err(|e| e.to_string())?;
        let run = |factor: f64| {
            let mut p = price.clone();
            p.linear_coeff *= factor;
            let mut sim = SimConfig::new(cfg.scenario.clone(), cfg.model.clone(), p, 77);
            sim.horizon = 1_000_000;
            simulate_mg1(&sim).map(|rep| rep.welfare_rate).map_err(|e| e.to_string())
        };
        let best = run(1.0)?;
        for f in [0.9, 1.1] {
            let w = run(f)?;
            let se = w.std_error.hypot(best.std_error);
            ensure(
                w.value <= best.value + 3.0 * se,
                format!("{name} x{f}: {:.5} vs optimal {:.5} (se {se:.5})", w.value, best.value),
            )?;
            notes.push(format!("{name} x{f} gain {:+.2} se", (w.value - best.value) / se));
        }
    }
    Ok(notes.join(", "))
}

fn balking() -> Check {
    let base = ValueModel::ConstantMarginal {
        kappa: 2.0,
        t_dist: TDist::Deterministic { t0: 10.0 },
    };
    let typed = TypedValueModel {
        types: TypeDist::Uniform { lo: 0.0, hi: 1.0 },
        scale: Scale::identity(),
        base: base.clone(),
    };
    let law = AnalyticLaw::new(base).unwrap();
    let sc = ScenarioConfig::new(1.0, 1.0);
    let balk = phase_b(&typed, &law, &sc).map_err(|e| e.to_string())?;
    let mut brute = (0.0, f64::NEG_INFINITY);
    for i in 0..1000 {
        let t = i as f64 * 1e-3;
        let v = phase_a(&typed, &law, &sc, t).map_err(|e| e.to_string())?.v;
        if v > brute.1 {
            brute = (t, v);
        }
    }
    ensure(
        (balk.t_star - brute.0).abs() <= 1e-3 + 1e-12,
        format!("t* {:.5} vs brute force {:.3}", balk.t_star, brute.0),
    )?;
    let (rep, _) = cli::<BalkingReport>("balking", "balking", |_| {})?;
    ensure(rep.r_nondecreasing, "r(t) decreases on the outer grid")?;
    ensure(
        rep.sign_change == Some(true),
        format!(
            "benefit {:?} ± {:?} at {:.3}, {:?} ± {:?} at {:.3}",
            rep.benefit_below, rep.benefit_below_se, rep.t_below, rep.benefit_above, rep.benefit_above_se, rep.t_above
        ),
    )?;
    Ok(format!(
        "t* {:.4} (brute {:.3}), simulated benefit {:.3}/{:.3} at t*∓{:.2}",
        balk.t_star,
        brute.0,
        rep.benefit_below.unwrap_or(f64::NAN),
        rep.benefit_above.unwrap_or(f64::NAN),
        rep.t_above - rep.t_star
    ))
}

fn retrial() -> Check {
    let cfg = scenario("retrial");
    let block = cfg.retrial.expect("retrial scenario has a retrial block");
    let law = cfg.law(0).map_err(|e| e.to_string())?;
    let r = solve_retrial(law.as_ref(), &cfg.scenario, &block.solver()).map_err(|e| e.to_string())?;
    // any rule serves s <= T = 10 units at value kappa = 2 each
    let (lambda, ge, theta) = (cfg.scenario.lambda, r.gamma_eff, block.theta);
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
    for i in 0..2000 {
        let alpha = i as f64 * 1e-3;
        let slack = 1.0 - lambda * alpha;
        for j in 0..=2000 {
            let x = j as f64 * 1e-3;
            let s = ((2.0 - x) * slack / (ge * lambda)).clamp(0.0, 10.0);
            if s <= alpha + 1e-12 {
                let v = 2.0 * s - ge * lambda * s * s / (2.0 * slack) - lambda * ge * alpha / (theta * slack);
                if v > best {
                    (best, arg) = (v, alpha);
                }
            }
        }
    }
    ensure(
        best <= r.g_tilde_star + 1e-5 && best >= r.g_tilde_star - 1e-3 && (arg - r.alpha_star).abs() <= 2e-2,
        format!("grid {best:.6} at {arg} vs g~* {:.6} at {:.5}", r.g_tilde_star, r.alpha_star),
    )?;
    let (rep, _) = cli::<RetrialReport>("retrial", "retrial", |_| {})?;
    ensure(
        within3(rep.welfare_rate_z),
        format!(
            "welfare {:.5} ± {:.5} vs {:.5}",
            rep.welfare_rate_simulated, rep.welfare_rate_se, rep.welfare_rate_analytic
        ),
    )?;
    Ok(format!(
        "alpha* {:.5} (grid {arg:.3}), welfare z {}; conjecture at s={}: wait z {}, retrials z {} ({})",
        r.alpha_star,
        fmt_z(rep.welfare_rate_z),
        rep.s,
        fmt_z(rep.saved_wait_z),
        fmt_z(rep.saved_retrials_z),
        if rep.conjecture_agrees { "agrees" } else { "disagrees" }
    ))
}

fn monte_carlo_cross_check() -> Check {
    let families = [
        (
            "constant/deterministic",
            ValueModel::ConstantMarginal {
                kappa: 2.0,
                t_dist: TDist::Deterministic { t0: 10.0 },
            },
            0.5,
        ),
        (
            "constant/exponential",
            ValueModel::ConstantMarginal {
                kappa: 1.0,
                t_dist: TDist::Exponential { rate: 1.0 },
            },
            0.5,
        ),
        (
            "constant/uniform",
            ValueModel::ConstantMarginal {
                kappa: 1.5,
                t_dist: TDist::Uniform { lo: 0.5, hi: 2.0 },
            },
            0.5,
        ),
        (
            "linear/uniform",
            ValueModel::LinearRemaining {
                t_dist: TDist::Uniform { lo: 0.0, hi: 1.0 },
            },
            0.5,
        ),
        ("poisson", ValueModel::PoissonSubordinator { kappa: 2.5, q: 1.0 }, 0.4),
    ];
    let mc = MonteCarloConfig {
        paths: 100_000,
        seed: 2024,
    };
    let mut worst: f64 = 0.0;
    for (name, model, lambda) in families {
        let exact = AnalyticLaw::new(model.clone()).unwrap();
        let sampled = PathSet::draw(&model, &mc).map_err(|e| e.to_string())?;
        let kappa = model.kappa();
        for i in 0..5 {
            let alpha = 0.9 / lambda * i as f64 / 4.0;
            for j in 0..5 {
                let x = kappa * j as f64 / 5.0;
                let pairs = [
                    (
                        mean_stop(&exact, lambda, 1.0, alpha, x),
                        mean_stop(&sampled, lambda, 1.0, alpha, x),
                    ),
                    (
                        second_moment_stop(&exact, lambda, 1.0, alpha, x),
                        second_moment_stop(&sampled, lambda, 1.0, alpha, x),
                    ),
                ];
                for (a, b) in pairs {
                    let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
                    let exact_match = (a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0);
                    let z = if exact_match { 0.0 } else { b.z_score(a.value) };
                    ensure(
                        z.abs() <= 3.0,
                        format!("{name} alpha={alpha:.3} x={x:.3}: {:.6} vs {:.6} ± {:.6}", a.value, b.value, b.std_error),
                    )?;
                    worst = worst.max(z.abs());
                }
            }
        }
    }
    Ok(format!("5 families x 25 points x 2 moments, largest |z| {worst:.2}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("deterministic closed form", deterministic_closed_form),
        ("fixed-point identity", fixed_point_identity),
        ("concavity suites", concavity_suites),
        ("grid-oracle equivalence", oracle_equivalence),
        ("simulation vs analysis", simulation_vs_analysis),
        ("externalities", externalities),
        ("price perturbation", price_perturbation),
        ("balking", balking),
        ("retrial", retrial),
        ("Monte-Carlo cross-checks", monte_carlo_cross_check),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
