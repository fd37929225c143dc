//! The seven subcommands. Each returns a serializable report body.

use queuereg_core::balking::{entry_fee, equilibrium_price, phase_b};
use queuereg_core::pricing::{build_price, externalities, PriceFunction};
use queuereg_core::retrial::{solve_retrial, z_value};
use queuereg_core::simulator::{
    estimate_externalities, pollaczek_khinchine, simulate_balking, simulate_mg1, simulate_retrial, SimReport,
};
use queuereg_core::solver::{solve_alpha_star, sweep, SolveResult, SweepRow};
use queuereg_core::stats::Estimate;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

/// `(estimate - target) / se`, or `None` when that is not finite. Exact
/// estimates that agree with the target to rounding score zero.
fn z(est: Estimate, target: f64) -> Option<f64> {
    if est.std_error == 0.0 && (est.value - target).abs() <= 1e-9 * target.abs().max(1.0) {
        return Some(0.0);
    }
    Some(est.z_score(target)).filter(|z| z.is_finite())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub alpha_star: f64,
    pub x_star: f64,
    pub g_star: f64,
    pub mean_s: f64,
    pub second_moment_s: f64,
    pub welfare_rate: f64,
    pub x_identity_residual: f64,
    pub price_linear_coeff: f64,
    pub price_quad_coeff: f64,
    pub golden_iterations: usize,
    pub polish_iterations: usize,
    pub threshold_iterations: usize,
    pub negative_flags: usize,
    pub domain_edge: f64,
    pub exact_moments: bool,
    pub mean_s_se: f64,
    pub second_moment_s_se: f64,
}

fn solve_optimum(cfg: &RunConfig, seed: u64) -> Result<(SolveResult, PriceFunction), CliError> {
    let law = cfg.law(seed)?;
    let r = solve_alpha_star(law.as_ref(), &cfg.scenario)?;
    let price = build_price(&cfg.scenario, r.alpha_star, r.x_star)?;
    Ok((r, price))
}

pub fn solve(cfg: &RunConfig, seed: u64) -> Result<SolveReport, CliError> {
    let (r, price) = solve_optimum(cfg, seed)?;
    let d = &r.diagnostics;
    Ok(SolveReport {
        alpha_star: r.alpha_star,
        x_star: r.x_star,
        g_star: r.g_star,
        mean_s: r.mean_s,
        second_moment_s: r.second_moment_s,
        welfare_rate: r.welfare_rate,
        x_identity_residual: r.x_identity_residual,
        price_linear_coeff: price.linear_coeff,
        price_quad_coeff: price.quad_coeff,
        golden_iterations: d.golden.iterations,
        polish_iterations: d.polish_iterations,
        threshold_iterations: d.threshold_iterations,
        negative_flags: d.negative_flags,
        domain_edge: d.domain_edge,
        exact_moments: d.exact_moments,
        mean_s_se: d.mean_s_se,
        second_moment_s_se: d.second_moment_s_se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub system: String,
    pub price_pi: f64,
    pub price_linear_coeff: f64,
    pub price_quad_coeff: f64,
    pub welfare_rate: f64,
    pub welfare_rate_se: f64,
    pub mean_wait: f64,
    pub mean_wait_se: f64,
    pub mean_service: f64,
    pub mean_service_se: f64,
    pub service_second_moment: f64,
    pub service_second_moment_se: f64,
    pub utilization: f64,
    pub mean_payment: f64,
    pub customers: u64,
    pub elapsed: f64,
    pub mean_retrials: Option<f64>,
    pub mean_retrials_se: Option<f64>,
}

impl SimulateReport {
    fn new(system: &str, price: &PriceFunction, r: &SimReport) -> Self {
        Self {
            system: system.into(),
            price_pi: price.pi,
            price_linear_coeff: price.linear_coeff,
            price_quad_coeff: price.quad_coeff,
            welfare_rate: r.welfare_rate.value,
            welfare_rate_se: r.welfare_rate.std_error,
            mean_wait: r.mean_wait.value,
            mean_wait_se: r.mean_wait.std_error,
            mean_service: r.mean_service.value,
            mean_service_se: r.mean_service.std_error,
            service_second_moment: r.service_second_moment.value,
            service_second_moment_se: r.service_second_moment.std_error,
            utilization: r.utilization,
            mean_payment: r.mean_payment,
            customers: r.customers,
            elapsed: r.elapsed,
            mean_retrials: r.mean_retrials.map(|e| e.value),
            mean_retrials_se: r.mean_retrials.map(|e| e.std_error),
        }
    }
}

/// Simulates the configured system, retrial if a retrial block is present,
/// under the configured price or else the solved optimum.
pub fn simulate(cfg: &RunConfig, seed: u64) -> Result<SimulateReport, CliError> {
    match cfg.retrial {
        Some(block) => {
            let price = match &cfg.price {
                Some(p) => p.clone(),
                None => {
                    let law = cfg.law(seed)?;
                    solve_retrial(law.as_ref(), &cfg.scenario, &block.solver())?.price
                }
            };
            let mut sim = cfg.sim_config(price.clone(), seed);
            sim.retrial = Some(block.sim());
            Ok(SimulateReport::new("retrial", &price, &simulate_retrial(&sim)?))
        }
        None => {
            let price = match &cfg.price {
                Some(p) => p.clone(),
                None => solve_optimum(cfg, seed)?.1,
            };
            let sim = cfg.sim_config(price.clone(), seed);
            Ok(SimulateReport::new("mg1", &price, &simulate_mg1(&sim)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub alpha_star: f64,
    pub x_star: f64,
    pub g_star: f64,
    pub welfare_rate_analytic: f64,
    pub welfare_rate_simulated: f64,
    pub welfare_rate_se: f64,
    pub welfare_rate_z: Option<f64>,
    pub mean_wait_analytic: f64,
    pub mean_wait_simulated: f64,
    pub mean_wait_se: f64,
    pub mean_wait_z: Option<f64>,
    pub mean_service_analytic: f64,
    pub mean_service_simulated: f64,
    pub mean_service_se: f64,
    pub mean_service_z: Option<f64>,
    pub service_second_moment_analytic: f64,
    pub service_second_moment_simulated: f64,
    pub service_second_moment_se: f64,
    pub service_second_moment_z: Option<f64>,
    pub utilization: f64,
    pub customers: u64,
}

/// Solves, then simulates the plain queue under the solved price.
pub fn verify(cfg: &RunConfig, seed: u64) -> Result<VerifyReport, CliError> {
    let (r, price) = solve_optimum(cfg, seed)?;
    let sim = simulate_mg1(&cfg.sim_config(price, seed))?;
    let pk = pollaczek_khinchine(cfg.scenario.lambda, r.mean_s, r.second_moment_s)?;
    let d = &r.diagnostics;
    // Monte-Carlo moments carry their own error
    let mean = Estimate::new(sim.mean_service.value, sim.mean_service.std_error.hypot(d.mean_s_se));
    let second = Estimate::new(
        sim.service_second_moment.value,
        sim.service_second_moment.std_error.hypot(d.second_moment_s_se),
    );
    Ok(VerifyReport {
        alpha_star: r.alpha_star,
        x_star: r.x_star,
        g_star: r.g_star,
        welfare_rate_analytic: r.welfare_rate,
        welfare_rate_simulated: sim.welfare_rate.value,
        welfare_rate_se: sim.welfare_rate.std_error,
        welfare_rate_z: z(sim.welfare_rate, r.welfare_rate),
        mean_wait_analytic: pk,
        mean_wait_simulated: sim.mean_wait.value,
        mean_wait_se: sim.mean_wait.std_error,
        mean_wait_z: z(sim.mean_wait, pk),
        mean_service_analytic: r.mean_s,
        mean_service_simulated: mean.value,
        mean_service_se: mean.std_error,
        mean_service_z: z(mean, r.mean_s),
        service_second_moment_analytic: r.second_moment_s,
        service_second_moment_simulated: second.value,
        service_second_moment_se: second.std_error,
        service_second_moment_z: z(second, r.second_moment_s),
        utilization: sim.utilization,
        customers: sim.customers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

pub fn sweep_alpha(cfg: &RunConfig, seed: u64) -> Result<SweepReport, CliError> {
    let law = cfg.law(seed)?;
    Ok(SweepReport {
        rows: sweep(law.as_ref(), &cfg.scenario, cfg.sweep.points)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalitiesReport {
    pub s: f64,
    pub replications: u64,
    pub saved_wait: f64,
    pub saved_wait_se: f64,
    /// Closed-form expected waiting time saved by the other customers.
    pub saved_wait_analytic: f64,
    pub saved_wait_z: Option<f64>,
    /// `p(s) - pi - ∫_0^s xi`
    pub price_net: f64,
    pub gamma_saved_wait: f64,
    pub internalization_z: Option<f64>,
    pub mean_coupling_length: f64,
}

/// Twin-run externality of a tagged demand `s` in the plain queue.
pub fn externalities_cmd(cfg: &RunConfig, seed: u64) -> Result<ExternalitiesReport, CliError> {
    let law = cfg.law(seed)?;
    let price = match &cfg.price {
        Some(p) => p.clone(),
        None => solve_optimum(cfg, seed)?.1,
    };
    let m = law.moments(price.drift(), price.linear_coeff)?;
    let s = cfg.externalities.s;
    let lambda = cfg.scenario.lambda;
    let analytic = externalities(s, lambda, m.mean, m.second)?;
    let sim = cfg.sim_config(price.clone(), seed);
    let rep = estimate_externalities(&sim, s, &cfg.externalities.tagged())?;
    let gamma = cfg.scenario.gamma;
    let price_net = price.value(s) - price.pi - price.xi.integral(s);
    let scaled = Estimate::new(gamma * rep.saved_wait.value, gamma * rep.saved_wait.std_error);
    Ok(ExternalitiesReport {
        s,
        replications: rep.replications,
        saved_wait: rep.saved_wait.value,
        saved_wait_se: rep.saved_wait.std_error,
        saved_wait_analytic: analytic,
        saved_wait_z: z(rep.saved_wait, analytic),
        price_net,
        gamma_saved_wait: scaled.value,
        internalization_z: z(scaled, price_net),
        mean_coupling_length: rep.mean_coupling_length,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrialReport {
    pub alpha_star: f64,
    pub x_star: f64,
    pub g_tilde_star: f64,
    pub mean_t: f64,
    pub second_moment_t: f64,
    pub gamma_eff: f64,
    pub z_linear: f64,
    pub z_quad: f64,
    pub price_linear_coeff: f64,
    pub price_quad_coeff: f64,
    pub x_identity_residual: f64,
    pub identity_asserted: bool,
    pub concavity_defect: f64,
    pub grid_fallback: bool,
    pub welfare_rate_analytic: f64,
    pub welfare_rate_simulated: f64,
    pub welfare_rate_se: f64,
    pub welfare_rate_z: Option<f64>,
    pub mean_retrials: Option<f64>,
    pub s: f64,
    pub saved_wait: f64,
    pub saved_wait_se: f64,
    /// `lambda z(s)`
    pub conjectured_wait: f64,
    pub saved_wait_z: Option<f64>,
    pub saved_retrials: Option<f64>,
    pub saved_retrials_se: Option<f64>,
    /// `lambda theta z(s)`
    pub conjectured_retrials: f64,
    pub saved_retrials_z: Option<f64>,
    /// Both conjecture z-scores within 3; reported, not enforced.
    pub conjecture_agrees: bool,
}

/// Solves the retrial optimum, simulates it, and compares twin-run
/// externalities against the conjectured `lambda z(s)`, `lambda theta z(s)`.
pub fn retrial(cfg: &RunConfig, seed: u64) -> Result<RetrialReport, CliError> {
    let block = cfg
        .retrial
        .ok_or_else(|| CliError::Config("retrial: block is required for this command".into()))?;
    let law = cfg.law(seed)?;
    let r = solve_retrial(law.as_ref(), &cfg.scenario, &block.solver())?;
    let mut sim = cfg.sim_config(r.price.clone(), seed);
    sim.retrial = Some(block.sim());
    let run = simulate_retrial(&sim)?;
    let target = r.welfare_rate();
    let s = cfg.externalities.s;
    let ext = estimate_externalities(&sim, s, &cfg.externalities.tagged())?;
    let zs = z_value(&r, s);
    let (wait_target, retrial_target) = (r.lambda * zs, r.lambda * r.theta * zs);
    let saved_wait_z = z(ext.saved_wait, wait_target);
    let saved_retrials_z = ext.saved_retrials.and_then(|e| z(e, retrial_target));
    let within = |z: Option<f64>| z.is_some_and(|z| z.abs() <= 3.0);
    Ok(RetrialReport {
        alpha_star: r.alpha_star,
        x_star: r.x_star,
        g_tilde_star: r.g_tilde_star,
        mean_t: r.mean_t,
        second_moment_t: r.second_moment_t,
        gamma_eff: r.gamma_eff,
        z_linear: r.z_curve.linear,
        z_quad: r.z_curve.quad,
        price_linear_coeff: r.price.linear_coeff,
        price_quad_coeff: r.price.quad_coeff,
        x_identity_residual: r.x_identity_residual,
        identity_asserted: r.identity_asserted,
        concavity_defect: r.concavity_defect,
        grid_fallback: r.grid_fallback,
        welfare_rate_analytic: target,
        welfare_rate_simulated: run.welfare_rate.value,
        welfare_rate_se: run.welfare_rate.std_error,
        welfare_rate_z: z(run.welfare_rate, target),
        mean_retrials: run.mean_retrials.map(|e| e.value),
        s,
        saved_wait: ext.saved_wait.value,
        saved_wait_se: ext.saved_wait.std_error,
        conjectured_wait: wait_target,
        saved_wait_z,
        saved_retrials: ext.saved_retrials.map(|e| e.value),
        saved_retrials_se: ext.saved_retrials.map(|e| e.std_error),
        conjectured_retrials: retrial_target,
        saved_retrials_z,
        conjecture_agrees: within(saved_wait_z) && within(saved_retrials_z),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalkingReport {
    pub t_star: f64,
    pub p_join: f64,
    pub v_star: f64,
    pub pi_star: Option<f64>,
    pub fee_residual: f64,
    pub inner_alpha_star: f64,
    pub inner_x_star: f64,
    pub r_nondecreasing: bool,
    pub welfare_rate_analytic: f64,
    pub welfare_rate_simulated: Option<f64>,
    pub welfare_rate_se: Option<f64>,
    pub welfare_rate_z: Option<f64>,
    pub join_fraction: Option<f64>,
    pub join_fraction_se: Option<f64>,
    pub join_fraction_z: Option<f64>,
    pub t_below: f64,
    pub benefit_below: Option<f64>,
    pub benefit_below_se: Option<f64>,
    pub t_above: f64,
    pub benefit_above: Option<f64>,
    pub benefit_above_se: Option<f64>,
    /// Simulated benefit negative below and positive above `t*`, at 3 SE.
    pub sign_change: Option<bool>,
}

/// Optimal join threshold, its entry fee, and a simulated equilibrium check.
pub fn balking(cfg: &RunConfig, seed: u64) -> Result<BalkingReport, CliError> {
    let block = cfg
        .balking
        .as_ref()
        .ok_or_else(|| CliError::Config("balking: block is required for this command".into()))?;
    let typed = block.typed(&cfg.model);
    let law = cfg.law(seed)?;
    let mut balk = phase_b(&typed, law.as_ref(), &cfg.scenario)?;
    let fee = entry_fee(&typed, law.as_ref(), &cfg.scenario, &balk)?;
    balk.pi_star = fee.pi_star;
    let r_nondecreasing = balk.r_grid.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-9 * w[0].1.abs().max(1.0));
    let t_below = (balk.t_star - block.benefit_offset).max(typed.t_min());
    let t_above = (balk.t_star + block.benefit_offset).min(typed.t_max());
    let analytic = cfg.scenario.lambda * balk.v_star;
    let mut report = BalkingReport {
        t_star: balk.t_star,
        p_join: balk.p_join,
        v_star: balk.v_star,
        pi_star: fee.pi_star,
        fee_residual: fee.residual,
        inner_alpha_star: balk.inner.alpha_star,
        inner_x_star: balk.inner.x_star,
        r_nondecreasing,
        welfare_rate_analytic: analytic,
        welfare_rate_simulated: None,
        welfare_rate_se: None,
        welfare_rate_z: None,
        join_fraction: None,
        join_fraction_se: None,
        join_fraction_z: None,
        t_below,
        benefit_below: None,
        benefit_below_se: None,
        t_above,
        benefit_above: None,
        benefit_above_se: None,
        sign_change: None,
    };
    if !block.simulate {
        return Ok(report);
    }
    let mut price = equilibrium_price(&cfg.scenario, &balk)?;
    price.pi = fee.pi_star.unwrap_or(0.0);
    let sim = cfg.sim_config(price, seed);
    let run = simulate_balking(&sim, &typed, balk.t_star, &[t_below, t_above])?;
    let join = run.join_fraction.expect("balking runs report the join fraction");
    let (below, above) = (run.type_benefits[0].benefit, run.type_benefits[1].benefit);
    report.welfare_rate_simulated = Some(run.welfare_rate.value);
    report.welfare_rate_se = Some(run.welfare_rate.std_error);
    report.welfare_rate_z = z(run.welfare_rate, analytic);
    report.join_fraction = Some(join.value);
    report.join_fraction_se = Some(join.std_error);
    report.join_fraction_z = z(join, balk.p_join);
    report.benefit_below = Some(below.value);
    report.benefit_below_se = Some(below.std_error);
    report.benefit_above = Some(above.value);
    report.benefit_above_se = Some(above.std_error);
    report.sign_change = Some(
        fee.pi_star.is_some()
            && below.value + 3.0 * below.std_error < 0.0
            && above.value - 3.0 * above.std_error > 0.0,
    );
    Ok(report)
}
