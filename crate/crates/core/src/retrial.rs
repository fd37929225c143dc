//! Retrial variant: no waiting room, an orbit of exponential retriers, and a
//! per-retrial cost.
//!
//! Phase I is the standard threshold search with `gamma` replaced by
//! `gamma + theta * delta`; Phase II subtracts the expected orbit cost
//! `lambda (gamma + theta delta) alpha / (theta (1 - lambda alpha))`.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::pricing::PriceFunction;
use crate::search::{golden_section_max, Probe};
use crate::solver::{concavity_defect, maximize, Objective, ScenarioConfig, SolveDiagnostics};
use crate::value_models::StopLaw;

/// Grid size of the concavity check run before trusting golden section.
pub const CONCAVITY_GRID: usize = 50;
pub const CONCAVITY_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrialConfig {
    /// Retrial rate of each orbiting customer.
    pub theta: f64,
    /// Mean cost per retrial.
    pub delta: f64,
}

impl RetrialConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("theta", self.theta)?;
        require_positive("delta", self.delta)
    }

    pub fn gamma_eff(&self, gamma: f64) -> f64 {
        gamma + self.theta * self.delta
    }
}

/// `z(s) = linear * s + quad * s^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZCurve {
    pub linear: f64,
    pub quad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrialResult {
    pub alpha_star: f64,
    pub x_star: f64,
    pub g_tilde_star: f64,
    pub mean_t: f64,
    pub second_moment_t: f64,
    pub gamma_eff: f64,
    pub theta: f64,
    pub lambda: f64,
    pub z_curve: ZCurve,
    pub price: PriceFunction,
    /// `|x* - identity value|`; binding only when `identity_asserted`.
    pub x_identity_residual: f64,
    pub identity_asserted: bool,
    /// Worst midpoint defect of `g~` on the check grid.
    pub concavity_defect: f64,
    pub grid_fallback: bool,
    pub diagnostics: SolveDiagnostics,
}

impl RetrialResult {
    /// Long-run welfare rate `lambda * g~(alpha*)`.
    pub fn welfare_rate(&self) -> f64 {
        self.lambda * self.g_tilde_star
    }
}

/// `x*` implied by the first-order condition at `alpha`.
pub fn identity_threshold(lambda: f64, gamma_eff: f64, theta: f64, alpha: f64, second: f64) -> f64 {
    let slack = 1.0 - lambda * alpha;
    lambda * gamma_eff / slack * (lambda * (0.5 * second + alpha / theta) / slack + 1.0 / theta)
}

/// `g~(alpha)`, or a negative-threshold error beyond the optimum.
pub fn g_tilde(law: &dyn StopLaw, scenario: &ScenarioConfig, cfg: &RetrialConfig, alpha: f64) -> Result<f64> {
    cfg.validate()?;
    let obj = objective(law, scenario, cfg);
    obj.eval(alpha)?
        .map(|p| p.value)
        .ok_or(Error::NegativeThreshold { alpha })
}

fn objective<'a>(law: &'a dyn StopLaw, scenario: &ScenarioConfig, cfg: &RetrialConfig) -> Objective<'a> {
    Objective {
        law,
        lambda: scenario.lambda,
        gamma_eff: cfg.gamma_eff(scenario.gamma),
        theta: Some(cfg.theta),
    }
}

/// `(alpha, g~(alpha))` on an even grid of the domain, skipping flagged points.
pub fn g_tilde_grid(law: &dyn StopLaw, scenario: &ScenarioConfig, cfg: &RetrialConfig, points: usize) -> Result<Vec<(f64, f64)>> {
    let obj = objective(law, scenario, cfg);
    let edge = obj.edge();
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        let alpha = edge * i as f64 / (points - 1).max(1) as f64;
        if let Some(p) = obj.eval(alpha)? {
            out.push((alpha, p.value));
        }
    }
    Ok(out)
}

pub fn solve_retrial(law: &dyn StopLaw, scenario: &ScenarioConfig, cfg: &RetrialConfig) -> Result<RetrialResult> {
    scenario.validate()?;
    cfg.validate()?;
    let obj = objective(law, scenario, cfg);
    let grid = g_tilde_grid(law, scenario, cfg, CONCAVITY_GRID)?;
    let defect = if grid.len() >= 3 { concavity_defect(&grid) } else { f64::NEG_INFINITY };
    let grid_fallback = defect > CONCAVITY_SLACK;

    let (point, diagnostics) = if grid_fallback {
        // Not concave on the grid: refine only around the best grid point.
        let k = (0..grid.len())
            .max_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1))
            .ok_or_else(|| Error::Bracket("no admissible alpha on the grid".into()))?;
        let lo = grid[k.saturating_sub(1)].0;
        let hi = grid.get(k + 1).map_or(grid[k].0, |p| p.0);
        let (alpha, _, golden) = golden_section_max(
            |a| match obj.eval(a) {
                Ok(Some(p)) => Probe::Value(p.value),
                _ => Probe::TooLarge,
            },
            lo,
            hi,
            crate::solver::ALPHA_TOLERANCE,
        );
        let p = obj.eval(alpha)?.ok_or_else(|| Error::Bracket("refined alpha lost its threshold".into()))?;
        let diag = SolveDiagnostics {
            golden,
            domain_edge: obj.edge(),
            exact_moments: law.is_exact(),
            threshold_iterations: p.iterations,
            mean_s_se: p.moments.mean_se,
            second_moment_s_se: p.moments.second_se,
            ..SolveDiagnostics::default()
        };
        (p, diag)
    } else {
        let m = maximize(&obj)?;
        (m.point, m.diagnostics)
    };

    let (lambda, theta, gamma_eff) = (scenario.lambda, cfg.theta, obj.gamma_eff);
    let alpha = point.moments.mean;
    let slack = 1.0 - lambda * alpha;
    let second = point.moments.second;
    let residual = (point.x - identity_threshold(lambda, gamma_eff, theta, alpha, second)).abs();
    let z_curve = ZCurve {
        linear: (lambda * (0.5 * second + alpha / theta) / slack + 1.0 / theta) / slack,
        quad: 1.0 / (2.0 * slack),
    };
    let price = PriceFunction::new(
        scenario.pi,
        lambda * gamma_eff * z_curve.linear,
        lambda * gamma_eff * z_curve.quad,
        scenario.xi.clone(),
    )?;
    Ok(RetrialResult {
        alpha_star: point.alpha,
        x_star: point.x,
        g_tilde_star: point.value,
        mean_t: point.moments.mean,
        second_moment_t: second,
        gamma_eff,
        theta,
        lambda,
        z_curve,
        price,
        x_identity_residual: residual,
        // the first-order condition only binds at an interior optimum
        identity_asserted: law.continuous_paths() && point.alpha > 1e3 * crate::solver::ALPHA_TOLERANCE,
        concavity_defect: defect,
        grid_fallback,
        diagnostics,
    })
}

/// `z(s)`; the conjectured waiting externality is `lambda z(s)` and the
/// retrial externality `lambda theta z(s)`.
pub fn z_value(result: &RetrialResult, s: f64) -> f64 {
    s * (result.z_curve.linear + result.z_curve.quad * s)
}
