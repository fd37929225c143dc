//! Optimal quadratic price functions and the M/G/1 externality expression.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::solver::ScenarioConfig;

/// Piecewise-constant, nondecreasing server cost rate `xi(s)`.
///
/// `knots[k] = (s_k, r_k)` means `xi = r_k` on `[s_k, s_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerCost {
    pub knots: Vec<(f64, f64)>,
}

impl Default for ServerCost {
    fn default() -> Self {
        Self::zero()
    }
}

impl ServerCost {
    pub fn zero() -> Self {
        Self { knots: vec![(0.0, 0.0)] }
    }

    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        let cost = Self { knots };
        cost.validate()?;
        Ok(cost)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(&(s0, _)) = self.knots.first() else {
            return Err(invalid("xi", "needs at least one knot"));
        };
        if s0 != 0.0 {
            return Err(invalid("xi", "first knot must be at time 0"));
        }
        for &(s, r) in &self.knots {
            require_nonnegative("xi", s)?;
            require_nonnegative("xi", r)?;
        }
        for w in self.knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(invalid("xi", "knot times must be strictly increasing"));
            }
            if w[1].1 < w[0].1 {
                return Err(invalid("xi", "rates must be nondecreasing"));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.knots.iter().all(|&(_, r)| r == 0.0)
    }

    /// `xi(s)`, right-continuous.
    pub fn rate_at(&self, s: f64) -> f64 {
        let k = self.knots.partition_point(|&(t, _)| t <= s);
        if k == 0 {
            0.0
        } else {
            self.knots[k - 1].1
        }
    }

    /// `∫_0^s xi`.
    pub fn integral(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (k, &(t, r)) in self.knots.iter().enumerate() {
            if t >= s {
                break;
            }
            let end = self.knots.get(k + 1).map_or(s, |&(u, _)| u.min(s));
            total += r * (end - t);
        }
        total
    }
}

/// `p(s) = pi + linear_coeff * s + quad_coeff * s^2 + ∫_0^s xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceFunction {
    pub pi: f64,
    pub linear_coeff: f64,
    pub quad_coeff: f64,
    #[serde(default)]
    pub xi: ServerCost,
}

impl PriceFunction {
    pub fn new(pi: f64, linear_coeff: f64, quad_coeff: f64, xi: ServerCost) -> Result<Self> {
        let price = Self {
            pi,
            linear_coeff,
            quad_coeff,
            xi,
        };
        price.validate()?;
        Ok(price)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.pi.is_finite() {
            return Err(invalid("pi", "must be finite"));
        }
        if !self.linear_coeff.is_finite() {
            return Err(invalid("linear_coeff", "must be finite"));
        }
        require_positive("quad_coeff", self.quad_coeff)?;
        self.xi.validate()
    }

    /// Price that charges `gamma` times the expected externality of demand `s`
    /// in a stationary queue with service moments `mean_s`, `second_s`.
    pub fn internalizing(scenario: &ScenarioConfig, mean_s: f64, second_s: f64) -> Result<Self> {
        let slack = 1.0 - scenario.lambda * mean_s;
        if !(slack > 0.0) {
            return Err(Error::Domain(format!("lambda * ES = {} must be below 1", scenario.lambda * mean_s)));
        }
        let (g, l) = (scenario.gamma, scenario.lambda);
        Self::new(
            scenario.pi,
            g * l * l * second_s / (2.0 * slack * slack),
            g * l / (2.0 * slack),
            scenario.xi.clone(),
        )
    }

    pub fn value(&self, s: f64) -> f64 {
        self.pi + self.linear_coeff * s + self.quad_coeff * s * s + self.xi.integral(s)
    }

    /// Derivative of `p` at `s`, right-continuous at the jumps of `xi`.
    pub fn marginal(&self, s: f64) -> f64 {
        self.linear_coeff + 2.0 * self.quad_coeff * s + self.xi.rate_at(s)
    }

    /// Drift of the stopping rule a price-taking customer follows.
    pub fn drift(&self) -> f64 {
        2.0 * self.quad_coeff
    }

    /// Customer's chosen service: first `s` with `V(s) <= Mp(s) - xi(s)`.
    pub fn service_for(&self, path: &crate::value_models::Path) -> Result<f64> {
        path.stop_time(self.drift(), self.linear_coeff).into_finite()
    }
}

/// The optimal price for mean constraint `alpha` and threshold `x`.
pub fn build_price(scenario: &ScenarioConfig, alpha: f64, x: f64) -> Result<PriceFunction> {
    build_price_with(scenario, scenario.gamma, alpha, x)
}

/// As [`build_price`] with an effective waiting-cost rate in the quadratic term.
pub fn build_price_with(scenario: &ScenarioConfig, gamma_eff: f64, alpha: f64, x: f64) -> Result<PriceFunction> {
    scenario.validate()?;
    let c = crate::value_models::drift(scenario.lambda, gamma_eff, alpha)?;
    PriceFunction::new(scenario.pi, x, 0.5 * c, scenario.xi.clone())
}

pub fn marginal_price(price: &PriceFunction, s: f64) -> f64 {
    price.marginal(s)
}

/// Expected total waiting time that other customers would save if a tagged
/// customer gave up a service demand of `s`.
pub fn externalities(s: f64, lambda: f64, mean_s: f64, second_moment_s: f64) -> Result<f64> {
    require_nonnegative("s", s)?;
    require_positive("lambda", lambda)?;
    require_nonnegative("mean_s", mean_s)?;
    if second_moment_s + 1e-12 * second_moment_s.abs().max(1.0) < mean_s * mean_s {
        return Err(invalid("second_moment_s", "must be at least mean_s^2"));
    }
    let slack = 1.0 - lambda * mean_s;
    if !(slack > 0.0) {
        return Err(Error::Domain(format!("unstable queue: lambda * ES = {}", lambda * mean_s)));
    }
    Ok(s * lambda * lambda * second_moment_s / (2.0 * slack * slack) + s * s * lambda / (2.0 * slack))
}
