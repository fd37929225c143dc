//! Phase I (threshold for a mean constraint) and Phase II (maximization of
//! the welfare curve `g`).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};
use crate::pricing::ServerCost;
use crate::search::{bisect_sign, golden_section_max, GoldenTrace, Probe};
use crate::value_models::{drift, StopLaw, StopMoments};

/// Relative shrink of the right end of the `alpha` domain.
pub const EDGE_SHRINK: f64 = 1e-9;
/// Golden-section tolerance on `alpha`.
pub const ALPHA_TOLERANCE: f64 = 1e-8;
/// Required accuracy of the mean constraint, relative to `max(1, alpha)`.
pub const MEAN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub lambda: f64,
    pub gamma: f64,
    #[serde(default)]
    pub xi: ServerCost,
    #[serde(default)]
    pub pi: f64,
}

impl ScenarioConfig {
    pub fn new(lambda: f64, gamma: f64) -> Self {
        Self {
            lambda,
            gamma,
            xi: ServerCost::zero(),
            pi: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("lambda", self.lambda)?;
        require_positive("gamma", self.gamma)?;
        if !self.pi.is_finite() {
            return Err(invalid("pi", "must be finite"));
        }
        self.xi.validate()
    }
}

/// Outcome of Phase I.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XAlpha {
    Root { x: f64, mean: f64, iterations: usize },
    /// `ES_alpha(0) < alpha`: the threshold would be negative, so `alpha`
    /// lies beyond the optimum.
    Negative { mean_at_zero: f64 },
}

impl XAlpha {
    pub fn root(&self) -> Option<f64> {
        match *self {
            XAlpha::Root { x, .. } => Some(x),
            XAlpha::Negative { .. } => None,
        }
    }
}

/// Solves `ES_alpha(x) = alpha` for `x` in `[0, kappa]` by bisection.
pub fn solve_x_alpha(law: &dyn StopLaw, scenario: &ScenarioConfig, gamma_eff: f64, alpha: f64) -> Result<XAlpha> {
    let c = drift(scenario.lambda, gamma_eff, alpha)?;
    threshold(law, c, alpha)
}

fn threshold(law: &dyn StopLaw, c: f64, alpha: f64) -> Result<XAlpha> {
    let kappa = law.kappa();
    if alpha == 0.0 {
        return Ok(XAlpha::Root {
            x: kappa,
            mean: 0.0,
            iterations: 0,
        });
    }
    let at_zero = law.moments(c, 0.0)?.mean;
    if at_zero < alpha {
        return Ok(XAlpha::Negative { mean_at_zero: at_zero });
    }
    let scale = alpha.max(1.0);
    let (mut lo, mut hi) = (0.0, kappa);
    let (mut best_x, mut best_err, mut best_mean) = (0.0, at_zero - alpha, at_zero);
    let mut iterations = 0;
    while iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let m = law.moments(c, mid)?.mean;
        if (m - alpha).abs() < best_err.abs() {
            (best_x, best_err, best_mean) = (mid, m - alpha, m);
        }
        if (m - alpha).abs() <= 1e-5 * MEAN_TOLERANCE * scale {
            break;
        }
        if m > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(XAlpha::Root {
        x: best_x,
        mean: best_mean,
        iterations,
    })
}

/// `g(alpha) = E ∫_0^{S_alpha} [V(s) - c s] ds` with `c` the drift at `alpha`.
pub fn g_value(law: &dyn StopLaw, scenario: &ScenarioConfig, gamma_eff: f64, alpha: f64) -> Result<f64> {
    let c = drift(scenario.lambda, gamma_eff, alpha)?;
    match threshold(law, c, alpha)? {
        XAlpha::Root { x, .. } => Ok(law.moments(c, x)?.net_value(c)),
        XAlpha::Negative { .. } => Err(Error::NegativeThreshold { alpha }),
    }
}

/// One evaluated point of the Phase II objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Point {
    pub alpha: f64,
    pub x: f64,
    pub moments: StopMoments,
    pub g: f64,
    pub value: f64,
    pub slope: f64,
    pub iterations: usize,
}

/// Phase II objective `g(alpha) - penalty(alpha)`, where the optional
/// penalty `lambda * gamma_eff * alpha / (theta (1 - lambda alpha))` prices
/// orbit time in the retrial model.
pub(crate) struct Objective<'a> {
    pub law: &'a dyn StopLaw,
    pub lambda: f64,
    pub gamma_eff: f64,
    pub theta: Option<f64>,
}

impl Objective<'_> {
    pub fn edge(&self) -> f64 {
        let cap = (self.law.mean_initial_value() / (self.gamma_eff * self.lambda)).min(1.0 / self.lambda);
        cap * (1.0 - EDGE_SHRINK)
    }

    /// `None` when the threshold at `alpha` is negative.
    pub fn eval(&self, alpha: f64) -> Result<Option<Point>> {
        let c = drift(self.lambda, self.gamma_eff, alpha)?;
        let (x, iterations) = match threshold(self.law, c, alpha)? {
            XAlpha::Root { x, iterations, .. } => (x, iterations),
            XAlpha::Negative { .. } => return Ok(None),
        };
        let moments = self.law.moments(c, x)?;
        let g = moments.net_value(c);
        let slack = 1.0 - self.lambda * alpha;
        // envelope theorem: dg/dalpha = x_alpha - (dc/dalpha) E S^2 / 2
        let mut slope = x - self.gamma_eff * self.lambda * self.lambda * moments.second / (2.0 * slack * slack);
        let mut value = g;
        if let Some(theta) = self.theta {
            value -= self.lambda * self.gamma_eff * alpha / (theta * slack);
            slope -= self.lambda * self.gamma_eff / (theta * slack * slack);
        }
        Ok(Some(Point {
            alpha,
            x,
            moments,
            g,
            value,
            slope,
            iterations,
        }))
    }
}

/// Search record of a Phase II solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub golden: GoldenTrace,
    /// Bisection steps on the sign of `g'` after golden section.
    pub polish_iterations: usize,
    pub polish_bracket: (f64, f64),
    /// Bisection steps of Phase I at the reported optimum.
    pub threshold_iterations: usize,
    /// Number of probes that hit the negative-threshold flag.
    pub negative_flags: usize,
    pub domain_edge: f64,
    /// False when moments are Monte-Carlo estimates.
    pub exact_moments: bool,
    pub mean_s_se: f64,
    pub second_moment_s_se: f64,
}

pub(crate) struct Maximum {
    pub point: Point,
    pub diagnostics: SolveDiagnostics,
}

pub(crate) fn maximize(obj: &Objective<'_>) -> Result<Maximum> {
    let edge = obj.edge();
    if !(edge > 0.0) {
        return Err(Error::Bracket(format!("empty alpha domain [0, {edge}]")));
    }
    let mut negative_flags = 0;
    let mut failure = None;
    let (alpha_g, _, golden) = golden_section_max(
        |a| match obj.eval(a) {
            Ok(Some(p)) => Probe::Value(p.value),
            Ok(None) => {
                negative_flags += 1;
                Probe::TooLarge
            }
            Err(e) => {
                failure.get_or_insert(e);
                Probe::TooLarge
            }
        },
        0.0,
        edge,
        ALPHA_TOLERANCE,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let mut best = obj
        .eval(alpha_g)?
        .ok_or_else(|| Error::Bracket(format!("no admissible alpha found below {edge}")))?;

    // Golden section stalls where g is flat to rounding; finish on the sign of g'.
    let slope_at = |a: f64| -> Result<f64> { Ok(obj.eval(a)?.map_or(f64::NEG_INFINITY, |p| p.slope)) };
    let mut width = golden.brackets.last().map_or(ALPHA_TOLERANCE, |b| b.1 - b.0).max(ALPHA_TOLERANCE);
    let (mut lo, mut hi) = ((alpha_g - width).max(0.0), (alpha_g + width).min(edge));
    let mut polish_iterations = 0;
    let mut bracketed = false;
    for _ in 0..64 {
        let (s_lo, s_hi) = (slope_at(lo)?, slope_at(hi)?);
        if s_lo > 0.0 && s_hi <= 0.0 {
            bracketed = true;
            break;
        }
        if s_lo <= 0.0 {
            if lo == 0.0 {
                break;
            }
            lo = (lo - width).max(0.0);
        }
        if s_hi > 0.0 {
            if hi >= edge {
                break;
            }
            hi = (hi + width).min(edge);
        }
        width *= 2.0;
    }
    if bracketed {
        let mut err = None;
        let (root, iters) = bisect_sign(
            |a| match slope_at(a) {
                Ok(s) => s > 0.0,
                Err(e) => {
                    err.get_or_insert(e);
                    false
                }
            },
            lo,
            hi,
            0.0,
            200,
        );
        if let Some(e) = err {
            return Err(e);
        }
        polish_iterations = iters;
        if let Some(p) = obj.eval(root)? {
            // guards against a spurious sign change; g is flat near its peak
            let noise = 1e-9 * best.value.abs().max(1.0) + 3.0 * p.moments.value_integral_se;
            if p.value >= best.value - noise {
                best = p;
            }
        }
    }
    let diagnostics = SolveDiagnostics {
        golden,
        polish_iterations,
        polish_bracket: (lo, hi),
        threshold_iterations: best.iterations,
        negative_flags,
        domain_edge: edge,
        exact_moments: obj.law.is_exact(),
        mean_s_se: best.moments.mean_se,
        second_moment_s_se: best.moments.second_se,
    };
    Ok(Maximum {
        point: best,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub alpha_star: f64,
    pub x_star: f64,
    pub g_star: f64,
    pub mean_s: f64,
    pub second_moment_s: f64,
    pub welfare_rate: f64,
    pub x_identity_residual: f64,
    pub diagnostics: SolveDiagnostics,
}

/// `lambda * [E ∫_0^S V - gamma lambda ES^2 / (2 (1 - lambda ES))]`.
pub fn welfare_rate(lambda: f64, gamma: f64, moments: &StopMoments) -> f64 {
    let slack = 1.0 - lambda * moments.mean;
    lambda * (moments.value_integral - gamma * lambda * moments.second / (2.0 * slack))
}

/// `gamma lambda^2 E S^2 / (2 (1 - lambda ES)^2)`.
pub fn identity_threshold(lambda: f64, gamma: f64, mean_s: f64, second_s: f64) -> f64 {
    let slack = 1.0 - lambda * mean_s;
    gamma * lambda * lambda * second_s / (2.0 * slack * slack)
}

/// Finds `alpha*` maximizing `g` and the matching threshold `x*`.
pub fn solve_alpha_star(law: &dyn StopLaw, scenario: &ScenarioConfig) -> Result<SolveResult> {
    solve_with_gamma(law, scenario, scenario.gamma)
}

pub(crate) fn solve_with_gamma(law: &dyn StopLaw, scenario: &ScenarioConfig, gamma: f64) -> Result<SolveResult> {
    scenario.validate()?;
    let obj = Objective {
        law,
        lambda: scenario.lambda,
        gamma_eff: gamma,
        theta: None,
    };
    let Maximum { point, diagnostics } = maximize(&obj)?;
    let m = point.moments;
    Ok(SolveResult {
        alpha_star: point.alpha,
        x_star: point.x,
        g_star: point.g,
        mean_s: m.mean,
        second_moment_s: m.second,
        welfare_rate: welfare_rate(scenario.lambda, gamma, &m),
        x_identity_residual: (point.x - identity_threshold(scenario.lambda, gamma, m.mean, m.second)).abs(),
        diagnostics,
    })
}

/// One row of an `alpha` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// `None` where the threshold is negative.
    pub x_alpha: Option<f64>,
    pub g: Option<f64>,
}

/// Evaluates `(alpha, x_alpha, g(alpha))` on `points` equally spaced values
/// spanning the Phase II domain.
pub fn sweep(law: &dyn StopLaw, scenario: &ScenarioConfig, points: usize) -> Result<Vec<SweepRow>> {
    scenario.validate()?;
    if points < 2 {
        return Err(invalid("points", "a sweep needs at least two points"));
    }
    let obj = Objective {
        law,
        lambda: scenario.lambda,
        gamma_eff: scenario.gamma,
        theta: None,
    };
    let edge = obj.edge();
    (0..points)
        .map(|i| {
            let alpha = edge * i as f64 / (points - 1) as f64;
            let p = obj.eval(alpha)?;
            Ok(SweepRow {
                alpha,
                x_alpha: p.map(|p| p.x),
                g: p.map(|p| p.g),
            })
        })
        .collect()
}

/// Largest amount by which a midpoint falls below the chord of its
/// neighbours, over consecutive triples of `(alpha, value)` points.
pub fn concavity_defect(points: &[(f64, f64)]) -> f64 {
    points
        .windows(3)
        .map(|w| {
            let t = (w[1].0 - w[0].0) / (w[2].0 - w[0].0);
            let chord = w[0].1 + t * (w[2].1 - w[0].1);
            chord - w[1].1
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
