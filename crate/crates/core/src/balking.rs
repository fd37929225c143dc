//! Heterogeneous customer types who join only when their type exceeds a
//! threshold.
//!
//! A type-`t` customer has value path `scale(t) * W(·)`. For a join threshold
//! `t`, the joining population is the conditional law of `T` given `T > t`,
//! realised through the quantile map `tau_t(u) = F^{-1}(F(t) + u (1 - F(t)))`.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::pricing::PriceFunction;
use crate::quadrature::integrate_vec;
use crate::search::{golden_section_max, Probe};
use crate::solver::{solve_alpha_star, ScenarioConfig, SolveResult};
use crate::value_models::{scaled_moments, StopLaw, StopMoments, ValueModel, TAIL_TRUNCATION};

/// Grid size of the outer search.
pub const OUTER_GRID: usize = 64;
const MIXTURE_TOLERANCE: f64 = 1e-11;

/// Continuous, strictly increasing type distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TypeDist {
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
}

impl TypeDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TypeDist::Uniform { lo, hi } => {
                require_nonnegative("types.lo", lo)?;
                if !(hi > lo) || !hi.is_finite() {
                    return Err(invalid("types.hi", format!("must exceed lo = {lo}, got {hi}")));
                }
                Ok(())
            }
            TypeDist::Exponential { rate } => require_positive("types.rate", rate),
        }
    }

    pub fn t_min(&self) -> f64 {
        match *self {
            TypeDist::Uniform { lo, .. } => lo,
            TypeDist::Exponential { .. } => 0.0,
        }
    }

    /// Upper end of the support; unbounded laws are cut at the
    /// `1 - TAIL_TRUNCATION` quantile.
    pub fn t_max(&self) -> f64 {
        match *self {
            TypeDist::Uniform { hi, .. } => hi,
            TypeDist::Exponential { rate } => -TAIL_TRUNCATION.ln() / rate,
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            TypeDist::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            TypeDist::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-rate * t).exp_m1()
                }
            }
        }
    }

    /// `P(T > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        match *self {
            TypeDist::Exponential { rate } => (-rate * t.max(0.0)).exp(),
            _ => 1.0 - self.cdf(t),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            TypeDist::Uniform { lo, hi } => lo + p * (hi - lo),
            TypeDist::Exponential { rate } => (-(-p).ln_1p() / rate).min(self.t_max()),
        }
    }

    /// `tau_t(u)`: the `u`-quantile of `T` given `T > t`.
    pub fn conditional_quantile(&self, t: f64, u: f64) -> f64 {
        match *self {
            // memoryless
            TypeDist::Exponential { rate } => (t - (-u).ln_1p() / rate).min(self.t_max()),
            _ => {
                let f = self.cdf(t);
                self.quantile(f + u * (1.0 - f))
            }
        }
    }
}

/// Nonnegative nondecreasing `scale(t) = intercept + slope * t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scale {
    pub intercept: f64,
    pub slope: f64,
}

impl Scale {
    pub fn constant(value: f64) -> Self {
        Self {
            intercept: value,
            slope: 0.0,
        }
    }

    pub fn identity() -> Self {
        Self {
            intercept: 0.0,
            slope: 1.0,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        (self.intercept + self.slope * t).max(0.0)
    }

    pub fn strictly_increasing(&self) -> bool {
        self.slope > 0.0
    }
}

/// Type distribution, value scale and base process `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypedValueModel {
    pub types: TypeDist,
    pub scale: Scale,
    pub base: ValueModel,
}

impl TypedValueModel {
    pub fn validate(&self) -> Result<()> {
        self.types.validate()?;
        self.base.validate()?;
        require_nonnegative("scale.slope", self.scale.slope)?;
        if !self.scale.intercept.is_finite() {
            return Err(invalid("scale.intercept", "must be finite"));
        }
        if self.scale.intercept + self.scale.slope * self.types.t_min() < 0.0 {
            return Err(invalid("scale", "must be nonnegative on the type support"));
        }
        if self.scale.at(self.types.t_max()) <= 0.0 {
            return Err(invalid("scale", "vanishes on the whole support"));
        }
        Ok(())
    }

    pub fn t_min(&self) -> f64 {
        self.types.t_min()
    }

    pub fn t_max(&self) -> f64 {
        self.types.t_max()
    }

    fn check_threshold(&self, t: f64) -> Result<()> {
        if !(t >= self.t_min() && t < self.t_max()) {
            return Err(Error::Domain(format!(
                "threshold {t} outside [{}, {})",
                self.t_min(),
                self.t_max()
            )));
        }
        Ok(())
    }
}

/// Stopping law of the joining population at threshold `t`.
pub struct MixtureLaw<'a> {
    base: &'a dyn StopLaw,
    types: TypeDist,
    scale: Scale,
    t: f64,
}

impl<'a> MixtureLaw<'a> {
    pub fn new(model: &TypedValueModel, base: &'a dyn StopLaw, t: f64) -> Self {
        Self {
            base,
            types: model.types,
            scale: model.scale,
            t,
        }
    }

    fn scale_at(&self, u: f64) -> f64 {
        self.scale.at(self.types.conditional_quantile(self.t, u))
    }
}

impl StopLaw for MixtureLaw<'_> {
    fn moments(&self, drift: f64, x: f64) -> Result<StopMoments> {
        let failure = RefCell::new(None);
        let v = integrate_vec(
            |u| match scaled_moments(self.base, self.scale_at(u), drift, x) {
                Ok(m) => [m.mean, m.second, m.value_integral, m.mean_se, m.second_se, m.value_integral_se],
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    [0.0; 6]
                }
            },
            0.0,
            1.0,
            MIXTURE_TOLERANCE,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        // standard errors of common-path estimates add linearly
        Ok(StopMoments {
            mean: v[0],
            second: v[1],
            value_integral: v[2],
            mean_se: v[3],
            second_se: v[4],
            value_integral_se: v[5],
        })
    }

    fn kappa(&self) -> f64 {
        self.scale.at(self.types.t_max()) * self.base.kappa()
    }

    fn mean_initial_value(&self) -> f64 {
        let [s] = integrate_vec(|u| [self.scale_at(u)], 0.0, 1.0, MIXTURE_TOLERANCE);
        s * self.base.mean_initial_value()
    }

    fn continuous_paths(&self) -> bool {
        self.base.continuous_paths()
    }

    fn is_exact(&self) -> bool {
        self.base.is_exact()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseA {
    pub t: f64,
    /// `P(T > t)`
    pub p_join: f64,
    pub inner: SolveResult,
    /// `v(t) = P_t g*`, welfare per potential arrival
    pub v: f64,
}

impl PhaseA {
    /// `r(t) = v(t) / P_t`
    pub fn r(&self) -> f64 {
        self.inner.g_star
    }
}

/// Solves the inner problem for join threshold `t`: arrival rate
/// `lambda * P_t` and the conditional value law.
pub fn phase_a(model: &TypedValueModel, base: &dyn StopLaw, scenario: &ScenarioConfig, t: f64) -> Result<PhaseA> {
    model.validate()?;
    scenario.validate()?;
    model.check_threshold(t)?;
    let p_join = model.types.survival(t);
    let thinned = ScenarioConfig {
        lambda: scenario.lambda * p_join,
        ..scenario.clone()
    };
    let law = MixtureLaw::new(model, base, t);
    let inner = solve_alpha_star(&law, &thinned)?;
    Ok(PhaseA {
        t,
        p_join,
        v: p_join * inner.g_star,
        inner,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalkingResult {
    pub t_star: f64,
    pub p_join: f64,
    pub inner: SolveResult,
    pub v_star: f64,
    /// Entry fee implementing `t_star`, once computed.
    pub pi_star: Option<f64>,
    /// `(t, v(t))` on the outer grid.
    pub grid: Vec<(f64, f64)>,
    /// `(t, r(t))` on the outer grid.
    pub r_grid: Vec<(f64, f64)>,
}

/// Maximizes `v(t)` over `[t_min, t_max)`: a coarse grid, golden section in
/// the best bracket, and the leftmost near-maximal point on ties.
pub fn phase_b(model: &TypedValueModel, base: &dyn StopLaw, scenario: &ScenarioConfig) -> Result<BalkingResult> {
    model.validate()?;
    let (t_min, t_max) = (model.t_min(), model.t_max());
    let step = (t_max - t_min) / OUTER_GRID as f64;
    let mut grid = Vec::with_capacity(OUTER_GRID);
    let mut r_grid = Vec::with_capacity(OUTER_GRID);
    let mut solved = Vec::with_capacity(OUTER_GRID);
    for i in 0..OUTER_GRID {
        let a = phase_a(model, base, scenario, t_min + step * i as f64)?;
        grid.push((a.t, a.v));
        r_grid.push((a.t, a.r()));
        solved.push(a);
    }
    let best_v = grid.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let k = leftmost_near(&grid, best_v);
    let lo = grid[k.saturating_sub(1)].0;
    let hi = (grid[k].0 + step).min(t_max - 1e-9 * step);
    let mut failure = None;
    let (t_ref, v_ref, _) = golden_section_max(
        |t| match phase_a(model, base, scenario, t) {
            Ok(a) => Probe::Value(a.v),
            Err(e) => {
                failure.get_or_insert(e);
                Probe::TooLarge
            }
        },
        lo,
        hi,
        1e-6 * (t_max - t_min),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let mut best = solved.swap_remove(k);
    if let Some(v) = v_ref {
        if v > best.v + tie_tolerance(best.v) || (v >= best.v - tie_tolerance(best.v) && t_ref < best.t) {
            best = phase_a(model, base, scenario, t_ref)?;
        }
    }
    Ok(BalkingResult {
        t_star: best.t,
        p_join: best.p_join,
        v_star: best.v,
        inner: best.inner,
        pi_star: None,
        grid,
        r_grid,
    })
}

fn tie_tolerance(v: f64) -> f64 {
    1e-9 * v.abs().max(1.0)
}

fn leftmost_near(points: &[(f64, f64)], best: f64) -> usize {
    points.iter().position(|p| p.1 >= best - tie_tolerance(best)).unwrap_or(0)
}

/// The price at which `balk` is implemented, before any entry fee.
pub fn equilibrium_price(scenario: &ScenarioConfig, balk: &BalkingResult) -> Result<PriceFunction> {
    let thinned = ScenarioConfig {
        lambda: scenario.lambda * balk.p_join,
        pi: 0.0,
        ..scenario.clone()
    };
    crate::pricing::build_price(&thinned, balk.inner.alpha_star, balk.inner.x_star)
}

/// Expected benefit `Lambda(pi; t)` of a type-`t` customer who joins the
/// system run at `balk`: value received minus price paid minus expected
/// waiting cost. The server-cost pass-through is netted out of both sides,
/// matching the stopping rule `V <= Mp - xi`.
pub fn expected_benefit(
    model: &TypedValueModel,
    base: &dyn StopLaw,
    scenario: &ScenarioConfig,
    balk: &BalkingResult,
    pi: f64,
    t: f64,
) -> Result<f64> {
    let price = equilibrium_price(scenario, balk)?;
    let m = scaled_moments(base, model.scale.at(t), price.drift(), price.linear_coeff)?;
    let lambda = scenario.lambda * balk.p_join;
    let slack = 1.0 - lambda * balk.inner.mean_s;
    let wait = lambda * balk.inner.second_moment_s / (2.0 * slack);
    Ok(m.value_integral - price.linear_coeff * m.mean - price.quad_coeff * m.second - scenario.gamma * wait - pi)
}

/// Outcome of the entry-fee computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFee {
    /// `None` when the monotone-existence check fails.
    pub pi_star: Option<f64>,
    /// `(t, Lambda(pi*; t))` on the verification grid above `t*`.
    pub check_grid: Vec<(f64, f64)>,
    pub residual: f64,
}

/// Solves `Lambda(pi; t*) = 0` and verifies `Lambda(pi*; t) > 0` above `t*`.
pub fn entry_fee(model: &TypedValueModel, base: &dyn StopLaw, scenario: &ScenarioConfig, balk: &BalkingResult) -> Result<EntryFee> {
    // Lambda is affine in pi with slope -1, so the root is explicit.
    let pi_star = expected_benefit(model, base, scenario, balk, 0.0, balk.t_star)?;
    let residual = expected_benefit(model, base, scenario, balk, pi_star, balk.t_star)?.abs();
    let t_max = model.t_max();
    let check_grid: Vec<(f64, f64)> = (1..=32)
        .map(|i| {
            let t = balk.t_star + (t_max - balk.t_star) * i as f64 / 33.0;
            expected_benefit(model, base, scenario, balk, pi_star, t).map(|l| (t, l))
        })
        .collect::<Result<_>>()?;
    let exists = residual <= 1e-8 && check_grid.iter().all(|&(_, l)| l > 0.0);
    Ok(EntryFee {
        pi_star: exists.then_some(pi_star),
        check_grid,
        residual,
    })
}
