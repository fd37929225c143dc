//! Marginal-value process families.
//!
//! A [`ValueModel`] describes the law of a customer's nonincreasing marginal
//! value `V(s)` of the `s`-th unit of service. Models can draw concrete
//! [`Path`]s and expose the moments of threshold stopping times through the
//! [`StopLaw`] trait, either in closed form or by Monte Carlo.

mod law;
mod path;
mod poisson;

pub use law::{
    drift, mean_stop, scaled_moments, second_moment_stop, AnalyticLaw, MonteCarloConfig, PathSet, Scaled, StopLaw,
    StopMoments,
};
pub use path::{stop_time, FluidPath, LinearPath, Path, StepPath, StopTime};
pub use poisson::PoissonCrossing;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_nonnegative, require_positive, Result};
use crate::quadrature;
use crate::rng::Stream;

/// Upper tail mass discarded when an unbounded support is truncated.
pub const TAIL_TRUNCATION: f64 = 1e-9;

/// Law of the message size `T` for the constant-marginal and linear families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TDist {
    Deterministic { t0: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Empirical law of a sample, stored sorted ascending.
    EmpiricalQuantile { sample: Vec<f64> },
}

impl TDist {
    pub fn empirical(mut sample: Vec<f64>) -> Result<Self> {
        sample.sort_by(f64::total_cmp);
        let d = TDist::EmpiricalQuantile { sample };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TDist::Deterministic { t0 } => require_positive("t0", *t0),
            TDist::Exponential { rate } => require_positive("rate", *rate),
            TDist::Uniform { lo, hi } => {
                require_nonnegative("lo", *lo)?;
                require_positive("hi", *hi)?;
                if hi > lo {
                    Ok(())
                } else {
                    Err(invalid("hi", format!("must exceed lo ({lo}), got {hi}")))
                }
            }
            TDist::EmpiricalQuantile { sample } => {
                if sample.is_empty() {
                    return Err(invalid("sample", "must not be empty"));
                }
                if sample.iter().any(|t| !t.is_finite() || *t < 0.0) {
                    return Err(invalid("sample", "values must be finite and nonnegative"));
                }
                if sample.windows(2).any(|w| w[1] < w[0]) {
                    return Err(invalid("sample", "must be sorted ascending"));
                }
                if *sample.last().unwrap() <= 0.0 {
                    return Err(invalid("sample", "P(T > 0) must be positive"));
                }
                Ok(())
            }
        }
    }

    /// `P(T > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 1.0;
        }
        match self {
            TDist::Deterministic { t0 } => {
                if t < *t0 {
                    1.0
                } else {
                    0.0
                }
            }
            TDist::Exponential { rate } => (-rate * t).exp(),
            TDist::Uniform { lo, hi } => {
                if t < *lo {
                    1.0
                } else if t >= *hi {
                    0.0
                } else {
                    (hi - t) / (hi - lo)
                }
            }
            TDist::EmpiricalQuantile { sample } => {
                let below = sample.partition_point(|&x| x <= t);
                (sample.len() - below) as f64 / sample.len() as f64
            }
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        1.0 - self.survival(t)
    }

    pub fn mean(&self) -> f64 {
        match self {
            TDist::Deterministic { t0 } => *t0,
            TDist::Exponential { rate } => 1.0 / rate,
            TDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            TDist::EmpiricalQuantile { sample } => sample.iter().sum::<f64>() / sample.len() as f64,
        }
    }

    /// Right end of the support, truncated at the `1 - 1e-9` quantile when unbounded.
    pub fn upper(&self) -> f64 {
        match self {
            TDist::Deterministic { t0 } => *t0,
            TDist::Exponential { rate } => -TAIL_TRUNCATION.ln() / rate,
            TDist::Uniform { hi, .. } => *hi,
            TDist::EmpiricalQuantile { sample } => *sample.last().unwrap(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, TDist::Exponential { .. })
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match self {
            TDist::Deterministic { t0 } => *t0,
            TDist::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            TDist::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            TDist::EmpiricalQuantile { sample } => sample[rng.random_range(0..sample.len())],
        }
    }

    /// `∫_lo^hi t^power P(T > t) dt` for `power` in `{0, 1}`.
    ///
    /// Step-shaped survival functions are integrated exactly; continuous ones
    /// by adaptive Simpson split at the support breakpoints.
    pub fn survival_integral(&self, lo: f64, hi: f64, power: u8) -> f64 {
        debug_assert!(power <= 1);
        let lo = lo.max(0.0);
        let hi = hi.min(self.upper());
        if !(hi > lo) {
            return 0.0;
        }
        let mono = |a: f64, b: f64| -> f64 {
            if power == 0 {
                b - a
            } else {
                0.5 * (b * b - a * a)
            }
        };
        match self {
            TDist::Deterministic { .. } => mono(lo, hi),
            TDist::EmpiricalQuantile { sample } => {
                let n = sample.len() as f64;
                let start = sample.partition_point(|&x| x <= lo);
                sample[start..]
                    .iter()
                    .map(|&x| mono(lo, x.min(hi)))
                    .sum::<f64>()
                    / n
            }
            TDist::Exponential { .. } => {
                let f = |t: f64| t.powi(power as i32) * self.survival(t);
                quadrature::integrate(f, lo, hi, quadrature::DEFAULT_TOLERANCE)
            }
            TDist::Uniform { lo: a, .. } => {
                let flat = if lo < *a { mono(lo, a.min(hi)) } else { 0.0 };
                let start = lo.max(*a);
                let f = |t: f64| t.powi(power as i32) * self.survival(t);
                flat + quadrature::integrate(f, start, hi, quadrature::DEFAULT_TOLERANCE)
            }
        }
    }
}

/// Parametrized marginal-value process families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueModel {
    /// `V(s) = kappa * 1[0, T](s)`.
    ConstantMarginal { kappa: f64, t_dist: TDist },
    /// `V(s) = (T - s)^+` with `T` bounded.
    LinearRemaining { t_dist: TDist },
    /// `V(s) = kappa - J(s)`, `J` a unit-jump Poisson process with rate `q`.
    PoissonSubordinator { kappa: f64, q: f64 },
    /// `V(s) = kappa - ∫_0^s u_{J(t)} dt` for a finite CTMC `J`.
    Mmff {
        kappa: f64,
        rate_matrix: Vec<Vec<f64>>,
        drain_rates: Vec<f64>,
        initial_dist: Vec<f64>,
    },
    /// Resampling from a fixed collection of step paths.
    Empirical { paths: Vec<StepPath> },
}

impl ValueModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ValueModel::ConstantMarginal { kappa, t_dist } => {
                require_positive("kappa", *kappa)?;
                t_dist.validate()
            }
            ValueModel::LinearRemaining { t_dist } => {
                t_dist.validate()?;
                if t_dist.is_bounded() {
                    Ok(())
                } else {
                    Err(invalid("t_dist", "linear remaining value needs a bounded message size"))
                }
            }
            ValueModel::PoissonSubordinator { kappa, q } => {
                require_positive("kappa", *kappa)?;
                require_positive("q", *q)
            }
            ValueModel::Mmff {
                kappa,
                rate_matrix,
                drain_rates,
                initial_dist,
            } => {
                require_positive("kappa", *kappa)?;
                let n = drain_rates.len();
                if n == 0 {
                    return Err(invalid("drain_rates", "need at least one state"));
                }
                for &u in drain_rates {
                    require_positive("drain_rates", u)?;
                }
                if rate_matrix.len() != n || rate_matrix.iter().any(|r| r.len() != n) {
                    return Err(invalid("rate_matrix", format!("must be {n}x{n}")));
                }
                for (i, row) in rate_matrix.iter().enumerate() {
                    for (j, &q) in row.iter().enumerate() {
                        if !q.is_finite() || (i != j && q < 0.0) {
                            return Err(invalid("rate_matrix", format!("entry ({i},{j}) = {q} is not a valid rate")));
                        }
                    }
                    let sum: f64 = row.iter().sum();
                    let scale = row.iter().map(|q| q.abs()).fold(1.0, f64::max);
                    if sum.abs() > 1e-9 * scale {
                        return Err(invalid("rate_matrix", format!("row {i} sums to {sum}, expected 0")));
                    }
                }
                if initial_dist.len() != n || initial_dist.iter().any(|p| !(*p >= 0.0)) {
                    return Err(invalid("initial_dist", format!("must be {n} nonnegative probabilities")));
                }
                let total: f64 = initial_dist.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid("initial_dist", format!("must sum to 1, got {total}")));
                }
                Ok(())
            }
            ValueModel::Empirical { paths } => {
                if paths.is_empty() {
                    return Err(invalid("paths", "must not be empty"));
                }
                paths.iter().try_for_each(StepPath::validate)
            }
        }
    }

    /// Almost-sure upper bound on `V(0)`.
    pub fn kappa(&self) -> f64 {
        match self {
            ValueModel::ConstantMarginal { kappa, .. }
            | ValueModel::PoissonSubordinator { kappa, .. }
            | ValueModel::Mmff { kappa, .. } => *kappa,
            ValueModel::LinearRemaining { t_dist } => t_dist.upper(),
            ValueModel::Empirical { paths } => paths
                .iter()
                .map(|p| p.knots()[0].1)
                .fold(0.0, f64::max),
        }
    }

    /// `E V(0)`.
    pub fn mean_initial_value(&self) -> f64 {
        match self {
            ValueModel::ConstantMarginal { kappa, .. }
            | ValueModel::PoissonSubordinator { kappa, .. }
            | ValueModel::Mmff { kappa, .. } => *kappa,
            ValueModel::LinearRemaining { t_dist } => t_dist.mean(),
            ValueModel::Empirical { paths } => {
                paths.iter().map(|p| p.knots()[0].1).sum::<f64>() / paths.len() as f64
            }
        }
    }

    /// True when every realization is a continuous function of `s`.
    pub fn continuous_paths(&self) -> bool {
        matches!(self, ValueModel::LinearRemaining { .. } | ValueModel::Mmff { .. })
    }

    /// True when stopping-time moments are available in closed form.
    pub fn is_analytic(&self) -> bool {
        matches!(
            self,
            ValueModel::ConstantMarginal { .. }
                | ValueModel::LinearRemaining { .. }
                | ValueModel::PoissonSubordinator { .. }
        )
    }

    /// Draws one realization of `V(·)`.
    ///
    /// Jump and fluid paths are generated until the value falls to `-kappa`,
    /// which makes crossing times exact for every threshold `x >= -kappa`.
    pub fn sample_path(&self, rng: &mut Stream) -> Path {
        match self {
            ValueModel::ConstantMarginal { kappa, t_dist } => {
                let t = t_dist.sample(rng);
                let knots = if t > 0.0 {
                    vec![(0.0, *kappa), (t, 0.0)]
                } else {
                    vec![(0.0, 0.0)]
                };
                Path::Step(StepPath::from_knots_unchecked(knots))
            }
            ValueModel::LinearRemaining { t_dist } => {
                let t = t_dist.sample(rng);
                Path::Linear(LinearPath {
                    intercept: t,
                    slope: -1.0,
                    floor_time: t,
                })
            }
            ValueModel::PoissonSubordinator { kappa, q } => {
                let exp = Exp::new(*q).expect("validated rate");
                let mut knots = vec![(0.0, *kappa)];
                let (mut t, mut v) = (0.0, *kappa);
                while v > -kappa {
                    t += exp.sample(rng);
                    v -= 1.0;
                    knots.push((t, v));
                }
                Path::Step(StepPath::from_knots_unchecked(knots))
            }
            ValueModel::Mmff {
                kappa,
                rate_matrix,
                drain_rates,
                initial_dist,
            } => sample_fluid(*kappa, rate_matrix, drain_rates, initial_dist, rng),
            ValueModel::Empirical { paths } => {
                Path::Step(paths[rng.random_range(0..paths.len())].clone())
            }
        }
    }

    /// Closed-form law when available, otherwise a Monte-Carlo path set.
    pub fn law(&self, mc: &MonteCarloConfig) -> Result<Box<dyn StopLaw>> {
        self.validate()?;
        if self.is_analytic() {
            Ok(Box::new(AnalyticLaw::new(self.clone())?))
        } else {
            Ok(Box::new(PathSet::draw(self, mc)?))
        }
    }
}

fn pick(weights: &[f64], total: f64, rng: &mut Stream) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // floating-point leftovers land on the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn sample_fluid(
    kappa: f64,
    rate_matrix: &[Vec<f64>],
    drain_rates: &[f64],
    initial_dist: &[f64],
    rng: &mut Stream,
) -> Path {
    let mut state = pick(initial_dist, 1.0, rng);
    let mut knots = vec![(0.0, kappa)];
    let (mut t, mut v) = (0.0, kappa);
    loop {
        let exit = -rate_matrix[state][state];
        let u = drain_rates[state];
        let to_floor = (v + kappa) / u;
        let hold = if exit > 0.0 {
            Exp::new(exit).expect("positive exit rate").sample(rng)
        } else {
            f64::INFINITY
        };
        if hold >= to_floor {
            // floor reached in this state; the last slope continues afterwards
            return Path::Fluid(FluidPath::from_parts_unchecked(knots, -u));
        }
        t += hold;
        v -= u * hold;
        knots.push((t, v));
        let mut jump: Vec<f64> = rate_matrix[state].clone();
        jump[state] = 0.0;
        state = pick(&jump, exit, rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn constant_marginal_path_has_single_drop() {
        let m = ValueModel::ConstantMarginal {
            kappa: 2.0,
            t_dist: TDist::Deterministic { t0: 10.0 },
        };
        let p = m.sample_path(&mut stream(1, 0));
        match &p {
            Path::Step(s) => assert_eq!(s.knots(), &[(0.0, 2.0), (10.0, 0.0)]),
            _ => panic!("expected a step path"),
        }
        assert_eq!(p.value_at(9.999), 2.0);
        assert_eq!(p.value_at(10.0), 0.0);
    }

    #[test]
    fn poisson_path_has_unit_jumps() {
        let m = ValueModel::PoissonSubordinator { kappa: 3.0, q: 1.0 };
        for seed in 0..20 {
            let p = m.sample_path(&mut stream(seed, 3));
            p.validate().unwrap();
            let Path::Step(s) = p else { panic!() };
            for (k, w) in s.knots().windows(2).enumerate() {
                assert!(w[1].0 > w[0].0);
                assert_eq!(w[0].1 - w[1].1, 1.0, "knot {k}");
            }
            assert_eq!(s.knots()[0].1, 3.0);
            assert!(s.tail_value() <= -3.0);
        }
    }

    #[test]
    fn survival_integrals() {
        let u = TDist::Uniform { lo: 0.0, hi: 1.0 };
        // ∫_0^1 (1 - t) dt = 1/2, ∫_0^1 t (1 - t) dt = 1/6
        assert!((u.survival_integral(0.0, 5.0, 0) - 0.5).abs() < 1e-12);
        assert!((u.survival_integral(0.0, 5.0, 1) - 1.0 / 6.0).abs() < 1e-12);
        let e = TDist::Exponential { rate: 2.0 };
        assert!((e.survival_integral(0.0, 1.0, 0) - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-10);
        let d = TDist::Deterministic { t0: 3.0 };
        assert_eq!(d.survival_integral(1.0, 10.0, 0), 2.0);
        let emp = TDist::empirical(vec![3.0, 1.0, 2.0]).unwrap();
        // E min(T, 2) = (1 + 2 + 2) / 3
        assert!((emp.survival_integral(0.0, 2.0, 0) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_models_rejected() {
        let bad = [
            ValueModel::ConstantMarginal {
                kappa: 0.0,
                t_dist: TDist::Deterministic { t0: 1.0 },
            },
            ValueModel::ConstantMarginal {
                kappa: 1.0,
                t_dist: TDist::Deterministic { t0: 0.0 },
            },
            ValueModel::LinearRemaining {
                t_dist: TDist::Exponential { rate: 1.0 },
            },
            ValueModel::PoissonSubordinator { kappa: 1.0, q: -1.0 },
            ValueModel::Mmff {
                kappa: 1.0,
                rate_matrix: vec![vec![-1.0, 0.5], vec![1.0, -1.0]],
                drain_rates: vec![1.0, 2.0],
                initial_dist: vec![0.5, 0.5],
            },
            ValueModel::Mmff {
                kappa: 1.0,
                rate_matrix: vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
                drain_rates: vec![1.0, 2.0],
                initial_dist: vec![0.7, 0.5],
            },
            ValueModel::Empirical { paths: vec![] },
        ];
        for m in &bad {
            assert!(m.validate().is_err(), "{m:?}");
        }
    }
}
