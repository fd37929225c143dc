//! Moments of threshold stopping times.

use serde::{Deserialize, Serialize};

use super::poisson::PoissonCrossing;
use super::{Path, TDist, ValueModel};
use crate::error::{invalid, Error, Result};
use crate::rng::stream;
use crate::stats::{Estimate, Running};

/// Moments of `S = inf{s : V(s) - drift * s <= x}`.
///
/// The `_se` fields carry Monte-Carlo standard errors and are zero for
/// closed-form laws.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StopMoments {
    /// `E S`
    pub mean: f64,
    /// `E S^2`
    pub second: f64,
    /// `E ∫_0^S V(s) ds`
    pub value_integral: f64,
    pub mean_se: f64,
    pub second_se: f64,
    pub value_integral_se: f64,
}

impl StopMoments {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn exact(mean: f64, second: f64, value_integral: f64) -> Self {
        Self {
            mean,
            second,
            value_integral,
            ..Self::default()
        }
    }

    /// `E ∫_0^S [V(s) - drift * s] ds`.
    pub fn net_value(&self, drift: f64) -> f64 {
        self.value_integral - 0.5 * drift * self.second
    }
}

/// Anything that can report stopping-time moments for threshold rules.
pub trait StopLaw: Send + Sync {
    fn moments(&self, drift: f64, x: f64) -> Result<StopMoments>;

    /// Almost-sure upper bound on `V(0)`.
    fn kappa(&self) -> f64;

    /// `E V(0)`.
    fn mean_initial_value(&self) -> f64;

    fn continuous_paths(&self) -> bool;

    /// False for Monte-Carlo backed laws.
    fn is_exact(&self) -> bool;
}

/// Drift `gamma_eff * lambda / (1 - lambda * alpha)` of the threshold rule
/// for mean constraint `alpha`.
pub fn drift(lambda: f64, gamma_eff: f64, alpha: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if !(gamma_eff > 0.0) || !gamma_eff.is_finite() {
        return Err(invalid("gamma_eff", format!("must be positive, got {gamma_eff}")));
    }
    if !(alpha >= 0.0) || lambda * alpha >= 1.0 {
        return Err(Error::Domain(format!(
            "alpha = {alpha} must lie in [0, 1/lambda) = [0, {})",
            1.0 / lambda
        )));
    }
    Ok(gamma_eff * lambda / (1.0 - lambda * alpha))
}

/// `E S_alpha(x)` with its standard error.
pub fn mean_stop(law: &dyn StopLaw, lambda: f64, gamma_eff: f64, alpha: f64, x: f64) -> Result<Estimate> {
    let m = law.moments(drift(lambda, gamma_eff, alpha)?, x)?;
    Ok(Estimate::new(m.mean, m.mean_se))
}

/// `E S_alpha(x)^2` with its standard error.
pub fn second_moment_stop(law: &dyn StopLaw, lambda: f64, gamma_eff: f64, alpha: f64, x: f64) -> Result<Estimate> {
    let m = law.moments(drift(lambda, gamma_eff, alpha)?, x)?;
    Ok(Estimate::new(m.second, m.second_se))
}

fn check_query(drift: f64, x: f64) -> Result<()> {
    if !(drift > 0.0) || !drift.is_finite() {
        return Err(invalid("drift", format!("closed forms need a positive finite drift, got {drift}")));
    }
    if x.is_nan() {
        return Err(invalid("x", "must not be NaN"));
    }
    Ok(())
}

/// Closed-form moments for the constant-marginal, linear-remaining and
/// Poisson-subordinator families.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticLaw {
    model: ValueModel,
}

impl AnalyticLaw {
    pub fn new(model: ValueModel) -> Result<Self> {
        model.validate()?;
        if !model.is_analytic() {
            return Err(invalid("model", "no closed form for this family; use a path set"));
        }
        Ok(Self { model })
    }

    pub fn model(&self) -> &ValueModel {
        &self.model
    }
}

fn constant_marginal(kappa: f64, t_dist: &TDist, drift: f64, x: f64) -> StopMoments {
    if x >= kappa {
        return StopMoments::zero();
    }
    let z = (kappa - x) / drift;
    let served = t_dist.survival_integral(0.0, z, 0);
    if x >= 0.0 {
        // S = T ∧ z
        let second = 2.0 * t_dist.survival_integral(0.0, z, 1);
        StopMoments::exact(served, second, kappa * served)
    } else {
        // S = z ∧ (T ∨ a): the value is exhausted before the drift catches up
        let a = -x / drift;
        let mean = a + t_dist.survival_integral(a, z, 0);
        let second = a * a + 2.0 * t_dist.survival_integral(a, z, 1);
        StopMoments::exact(mean, second, kappa * served)
    }
}

fn linear_remaining(t_dist: &TDist, drift: f64, x: f64) -> StopMoments {
    // On {T >= lower}, S = (T - x) / b; below it S is 0 (x >= 0) or -x/drift (x < 0).
    let b = 1.0 + drift;
    let (lower, floor_stop) = if x >= 0.0 { (x, 0.0) } else { (-x / drift, -x / drift) };
    let i0 = t_dist.survival_integral(lower, f64::INFINITY, 0);
    let i1 = t_dist.survival_integral(lower, f64::INFINITY, 1);
    let excess = i1 - x * i0;
    let mean = floor_stop + i0 / b;
    let second = floor_stop * floor_stop + 2.0 * excess / (b * b);
    let mut value = (1.0 - 1.0 / b) / b * excess + i1 / b;
    if x < 0.0 {
        value += t_dist.survival_integral(0.0, lower, 1);
    }
    StopMoments::exact(mean, second, value)
}

impl StopLaw for AnalyticLaw {
    fn moments(&self, drift: f64, x: f64) -> Result<StopMoments> {
        check_query(drift, x)?;
        Ok(match &self.model {
            ValueModel::ConstantMarginal { kappa, t_dist } => constant_marginal(*kappa, t_dist, drift, x),
            ValueModel::LinearRemaining { t_dist } => linear_remaining(t_dist, drift, x),
            ValueModel::PoissonSubordinator { kappa, q } => {
                PoissonCrossing::new(*kappa, *q, drift, x).moments()
            }
            _ => unreachable!("constructor admits analytic families only"),
        })
    }

    fn kappa(&self) -> f64 {
        self.model.kappa()
    }

    fn mean_initial_value(&self) -> f64 {
        self.model.mean_initial_value()
    }

    fn continuous_paths(&self) -> bool {
        self.model.continuous_paths()
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// Monte-Carlo settings for path-set laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    pub paths: usize,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            seed: 0x5EED,
        }
    }
}

/// A fixed set of sampled paths. Every moment query reuses the same paths
/// (common random numbers), so moments are deterministic functions of
/// `(drift, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    paths: Vec<Path>,
    kappa: f64,
    mean_initial_value: f64,
    continuous: bool,
}

impl PathSet {
    /// Draws `mc.paths` paths; path `i` comes from stream `i` under `mc.seed`.
    pub fn draw(model: &ValueModel, mc: &MonteCarloConfig) -> Result<Self> {
        model.validate()?;
        if mc.paths < 2 {
            return Err(invalid("paths", "Monte Carlo needs at least two paths"));
        }
        let paths = (0..mc.paths as u64)
            .map(|i| model.sample_path(&mut stream(mc.seed, i)))
            .collect();
        Ok(Self {
            paths,
            kappa: model.kappa(),
            mean_initial_value: model.mean_initial_value(),
            continuous: model.continuous_paths(),
        })
    }

    pub fn from_paths(paths: Vec<Path>, continuous: bool) -> Result<Self> {
        if paths.len() < 2 {
            return Err(invalid("paths", "Monte Carlo needs at least two paths"));
        }
        paths.iter().try_for_each(Path::validate)?;
        let v0: Vec<f64> = paths.iter().map(Path::initial_value).collect();
        Ok(Self {
            kappa: v0.iter().copied().fold(0.0, f64::max),
            mean_initial_value: v0.iter().sum::<f64>() / v0.len() as f64,
            paths,
            continuous,
        })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

impl StopLaw for PathSet {
    fn moments(&self, drift: f64, x: f64) -> Result<StopMoments> {
        if !(drift >= 0.0) || x.is_nan() {
            return Err(invalid("drift", format!("invalid query drift = {drift}, x = {x}")));
        }
        let (mut m1, mut m2, mut vi) = (Running::new(), Running::new(), Running::new());
        for path in &self.paths {
            let s = path.stop_time(drift, x).into_finite()?;
            m1.push(s);
            m2.push(s * s);
            vi.push(path.integral_to(s));
        }
        Ok(StopMoments {
            mean: m1.mean(),
            second: m2.mean(),
            value_integral: vi.mean(),
            mean_se: m1.std_error(),
            second_se: m2.std_error(),
            value_integral_se: vi.std_error(),
        })
    }

    fn kappa(&self) -> f64 {
        self.kappa
    }

    fn mean_initial_value(&self) -> f64 {
        self.mean_initial_value
    }

    fn continuous_paths(&self) -> bool {
        self.continuous
    }

    fn is_exact(&self) -> bool {
        false
    }
}

/// Moments of the stopping rule applied to `factor * V(·)`.
///
/// `factor * V(s) - c s <= x` iff `V(s) - (c / factor) s <= x / factor`, so
/// the stopping time is unchanged and the value integral scales by `factor`.
pub fn scaled_moments(law: &dyn StopLaw, factor: f64, drift: f64, x: f64) -> Result<StopMoments> {
    if !(factor >= 0.0) || !factor.is_finite() {
        return Err(invalid("factor", format!("must be finite and nonnegative, got {factor}")));
    }
    if factor == 0.0 {
        if !(drift > 0.0) && x < 0.0 {
            return Err(Error::UnboundedStop);
        }
        let s = if x >= 0.0 { 0.0 } else { -x / drift };
        return Ok(StopMoments::exact(s, s * s, 0.0));
    }
    let m = law.moments(drift / factor, x / factor)?;
    Ok(StopMoments {
        value_integral: factor * m.value_integral,
        value_integral_se: factor * m.value_integral_se,
        ..m
    })
}

/// A law multiplied by a constant factor.
pub struct Scaled {
    inner: Box<dyn StopLaw>,
    factor: f64,
}

impl Scaled {
    pub fn new(inner: Box<dyn StopLaw>, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(invalid("factor", format!("must be positive and finite, got {factor}")));
        }
        Ok(Self { inner, factor })
    }
}

impl StopLaw for Scaled {
    fn moments(&self, drift: f64, x: f64) -> Result<StopMoments> {
        scaled_moments(self.inner.as_ref(), self.factor, drift, x)
    }

    fn kappa(&self) -> f64 {
        self.factor * self.inner.kappa()
    }

    fn mean_initial_value(&self) -> f64 {
        self.factor * self.inner.mean_initial_value()
    }

    fn continuous_paths(&self) -> bool {
        self.inner.continuous_paths()
    }

    fn is_exact(&self) -> bool {
        self.inner.is_exact()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det_model() -> ValueModel {
        ValueModel::ConstantMarginal {
            kappa: 2.0,
            t_dist: TDist::Deterministic { t0: 10.0 },
        }
    }

    #[test]
    fn deterministic_mean_stop_hand_value() {
        let law = AnalyticLaw::new(det_model()).unwrap();
        // z = (2 - 1)(1 - 0.5)/0.5 = 1
        let m = mean_stop(&law, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert!((m.value - 1.0).abs() < 1e-14);
        assert_eq!(m.std_error, 0.0);
        let s2 = second_moment_stop(&law, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert!((s2.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn threshold_at_kappa_gives_zero() {
        let law = AnalyticLaw::new(det_model()).unwrap();
        assert_eq!(mean_stop(&law, 0.5, 1.0, 0.3, 2.0).unwrap().value, 0.0);
        assert_eq!(second_moment_stop(&law, 0.5, 1.0, 0.3, 2.0).unwrap().value, 0.0);
        let p = AnalyticLaw::new(ValueModel::PoissonSubordinator { kappa: 2.5, q: 1.0 }).unwrap();
        assert_eq!(mean_stop(&p, 0.4, 1.0, 0.5, 2.5).unwrap().value, 0.0);
    }

    #[test]
    fn alpha_outside_domain_is_an_error() {
        let law = AnalyticLaw::new(det_model()).unwrap();
        assert!(matches!(mean_stop(&law, 0.5, 1.0, 2.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(mean_stop(&law, 0.5, 1.0, -0.1, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn scaled_law_matches_scaled_kappa() {
        let base = AnalyticLaw::new(det_model()).unwrap();
        let direct = AnalyticLaw::new(ValueModel::ConstantMarginal {
            kappa: 3.0,
            t_dist: TDist::Deterministic { t0: 10.0 },
        })
        .unwrap();
        let a = scaled_moments(&base, 1.5, 0.7, 0.4).unwrap();
        let b = direct.moments(0.7, 0.4).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-14);
        assert!((a.value_integral - b.value_integral).abs() < 1e-13);
    }
}
