//! Concrete realizations of marginal-value processes and their threshold
//! crossing times.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Outcome of a threshold stopping rule on a single path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopTime {
    At(f64),
    /// The drift-adjusted path never reaches the threshold.
    Never,
}

impl StopTime {
    pub fn into_finite(self) -> Result<f64> {
        match self {
            StopTime::At(s) => Ok(s),
            StopTime::Never => Err(Error::UnboundedStop),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, StopTime::At(_))
    }
}

/// Right-continuous nonincreasing step function.
///
/// Knot `(s_k, v_k)` means the value is `v_k` on `[s_k, s_{k+1})`; the last
/// knot's value holds forever after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepPath {
    knots: Vec<(f64, f64)>,
}

impl StepPath {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        let path = Self { knots };
        path.validate()?;
        Ok(path)
    }

    /// Builds without validation; callers guarantee the invariants.
    pub(crate) fn from_knots_unchecked(knots: Vec<(f64, f64)>) -> Self {
        Self { knots }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Value after the last knot.
    pub fn tail_value(&self) -> f64 {
        self.knots.last().map(|k| k.1).unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(&(t0, v0)) = self.knots.first() else {
            return Err(invalid("knots", "a step path needs at least one knot"));
        };
        if t0 != 0.0 {
            return Err(invalid("knots", format!("first knot must be at time 0, got {t0}")));
        }
        if !v0.is_finite() || v0 < 0.0 {
            return Err(invalid("knots", format!("value at 0 must be finite and nonnegative, got {v0}")));
        }
        for w in self.knots.windows(2) {
            let ((ta, va), (tb, vb)) = (w[0], w[1]);
            if !(tb > ta) || !tb.is_finite() {
                return Err(invalid("knots", format!("times must strictly increase ({ta} then {tb})")));
            }
            if !(vb <= va) {
                return Err(invalid("knots", format!("values must not increase ({va} then {vb})")));
            }
        }
        Ok(())
    }

    pub fn value_at(&self, s: f64) -> f64 {
        let idx = self.knots.partition_point(|k| k.0 <= s);
        self.knots[idx.saturating_sub(1)].1
    }

    pub fn stop_time(&self, drift: f64, x: f64) -> StopTime {
        let n = self.knots.len();
        for (k, &(start, value)) in self.knots.iter().enumerate() {
            if value - drift * start <= x {
                return StopTime::At(start);
            }
            let end = if k + 1 < n { self.knots[k + 1].0 } else { f64::INFINITY };
            if drift > 0.0 {
                let cross = ((value - x) / drift).max(start);
                if cross < end {
                    return StopTime::At(cross);
                }
            }
        }
        StopTime::Never
    }

    pub fn integral_to(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &(start, value)) in self.knots.iter().enumerate() {
            if start >= s {
                break;
            }
            let end = self.knots.get(k + 1).map_or(f64::INFINITY, |n| n.0).min(s);
            acc += value * (end - start);
        }
        acc
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            knots: self.knots.iter().map(|&(t, v)| (t, v * factor)).collect(),
        }
    }
}

/// `intercept + slope * min(s, floor_time)`: a linear decay that freezes at
/// `floor_time`, e.g. `(T - s)^+` with intercept `T`, slope `-1`, floor time `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPath {
    pub intercept: f64,
    pub slope: f64,
    pub floor_time: f64,
}

impl LinearPath {
    pub fn new(intercept: f64, slope: f64, floor_time: f64) -> Result<Self> {
        let path = Self {
            intercept,
            slope,
            floor_time,
        };
        path.validate()?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.intercept.is_finite() || self.intercept < 0.0 {
            return Err(invalid("intercept", format!("must be finite and nonnegative, got {}", self.intercept)));
        }
        if !self.slope.is_finite() || self.slope > 0.0 {
            return Err(invalid("slope", format!("must be finite and nonpositive, got {}", self.slope)));
        }
        if !(self.floor_time >= 0.0) {
            return Err(invalid("floor_time", format!("must be nonnegative, got {}", self.floor_time)));
        }
        Ok(())
    }

    pub fn tail_value(&self) -> f64 {
        if self.floor_time.is_finite() {
            self.intercept + self.slope * self.floor_time
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn value_at(&self, s: f64) -> f64 {
        self.intercept + self.slope * s.min(self.floor_time)
    }

    pub fn stop_time(&self, drift: f64, x: f64) -> StopTime {
        if self.intercept <= x {
            return StopTime::At(0.0);
        }
        let rate = drift - self.slope;
        if rate > 0.0 {
            let cross = (self.intercept - x) / rate;
            if cross < self.floor_time {
                return StopTime::At(cross);
            }
        }
        if !self.floor_time.is_finite() {
            return StopTime::Never;
        }
        let tail = self.tail_value();
        if tail - drift * self.floor_time <= x {
            StopTime::At(self.floor_time)
        } else if drift > 0.0 {
            StopTime::At(((tail - x) / drift).max(self.floor_time))
        } else {
            StopTime::Never
        }
    }

    pub fn integral_to(&self, s: f64) -> f64 {
        let m = s.min(self.floor_time);
        let mut acc = self.intercept * m + 0.5 * self.slope * m * m;
        if s > self.floor_time {
            acc += self.tail_value() * (s - self.floor_time);
        }
        acc
    }
}

/// Continuous piecewise-linear nonincreasing path (fluid-flow realization).
///
/// Values are interpolated linearly between knots and continue with
/// `final_slope` after the last knot. Crossing times are solved exactly on
/// each segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidPath {
    knots: Vec<(f64, f64)>,
    final_slope: f64,
}

impl FluidPath {
    pub fn new(knots: Vec<(f64, f64)>, final_slope: f64) -> Result<Self> {
        let path = Self { knots, final_slope };
        path.validate()?;
        Ok(path)
    }

    pub(crate) fn from_parts_unchecked(knots: Vec<(f64, f64)>, final_slope: f64) -> Self {
        Self { knots, final_slope }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn final_slope(&self) -> f64 {
        self.final_slope
    }

    pub fn validate(&self) -> Result<()> {
        StepPath::from_knots_unchecked(self.knots.clone()).validate()?;
        if !self.final_slope.is_finite() || self.final_slope > 0.0 {
            return Err(invalid("final_slope", format!("must be finite and nonpositive, got {}", self.final_slope)));
        }
        Ok(())
    }

    /// Slopes of the interior segments followed by the final slope.
    pub fn slopes(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .knots
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect();
        out.push(self.final_slope);
        out
    }

    pub fn value_at(&self, s: f64) -> f64 {
        let idx = self.knots.partition_point(|k| k.0 <= s).saturating_sub(1);
        let (t0, v0) = self.knots[idx];
        match self.knots.get(idx + 1) {
            Some(&(t1, v1)) => v0 + (v1 - v0) * (s - t0) / (t1 - t0),
            None => v0 + self.final_slope * (s - t0),
        }
    }

    pub fn stop_time(&self, drift: f64, x: f64) -> StopTime {
        let (_, v0) = self.knots[0];
        if v0 <= x {
            return StopTime::At(0.0);
        }
        for w in self.knots.windows(2) {
            let ((ta, va), (tb, vb)) = (w[0], w[1]);
            let wa = va - drift * ta;
            let wb = vb - drift * tb;
            if wb <= x {
                let frac = if wa > wb { (wa - x) / (wa - wb) } else { 0.0 };
                return StopTime::At(ta + frac.clamp(0.0, 1.0) * (tb - ta));
            }
        }
        let &(tk, vk) = self.knots.last().expect("validated path has knots");
        let wk = vk - drift * tk;
        let rate = drift - self.final_slope;
        if rate > 0.0 {
            StopTime::At(tk + (wk - x) / rate)
        } else {
            StopTime::Never
        }
    }

    pub fn integral_to(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for w in self.knots.windows(2) {
            let ((ta, va), (tb, vb)) = (w[0], w[1]);
            if ta >= s {
                return acc;
            }
            if tb <= s {
                acc += 0.5 * (va + vb) * (tb - ta);
            } else {
                let vs = va + (vb - va) * (s - ta) / (tb - ta);
                acc += 0.5 * (va + vs) * (s - ta);
                return acc;
            }
        }
        let &(tk, vk) = self.knots.last().expect("validated path has knots");
        if s > tk {
            let d = s - tk;
            acc += vk * d + 0.5 * self.final_slope * d * d;
        }
        acc
    }

    /// Step approximation on a uniform grid of width `step`, for storage and
    /// plotting. Grid values are taken at the right end of each cell so the
    /// approximation never exceeds the path.
    pub fn discretize(&self, step: f64, until: f64) -> Result<StepPath> {
        if !(step > 0.0) {
            return Err(invalid("step", "must be positive"));
        }
        let cells = (until / step).ceil().max(1.0) as usize;
        let mut knots = Vec::with_capacity(cells + 1);
        knots.push((0.0, self.knots[0].1));
        for i in 1..=cells {
            let t = i as f64 * step;
            knots.push((t, self.value_at(t + step)));
        }
        knots[0].1 = self.value_at(step);
        StepPath::new(knots)
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            knots: self.knots.iter().map(|&(t, v)| (t, v * factor)).collect(),
            final_slope: self.final_slope * factor,
        }
    }
}

/// Any realization produced by a value model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Path {
    Step(StepPath),
    Linear(LinearPath),
    Fluid(FluidPath),
}

impl Path {
    pub fn validate(&self) -> Result<()> {
        match self {
            Path::Step(p) => p.validate(),
            Path::Linear(p) => p.validate(),
            Path::Fluid(p) => p.validate(),
        }
    }

    pub fn value_at(&self, s: f64) -> f64 {
        match self {
            Path::Step(p) => p.value_at(s),
            Path::Linear(p) => p.value_at(s),
            Path::Fluid(p) => p.value_at(s),
        }
    }

    pub fn initial_value(&self) -> f64 {
        self.value_at(0.0)
    }

    /// `inf{s >= 0 : V(s) - drift * s <= x}`.
    pub fn stop_time(&self, drift: f64, x: f64) -> StopTime {
        match self {
            Path::Step(p) => p.stop_time(drift, x),
            Path::Linear(p) => p.stop_time(drift, x),
            Path::Fluid(p) => p.stop_time(drift, x),
        }
    }

    /// `∫_0^s V(u) du`.
    pub fn integral_to(&self, s: f64) -> f64 {
        match self {
            Path::Step(p) => p.integral_to(s),
            Path::Linear(p) => p.integral_to(s),
            Path::Fluid(p) => p.integral_to(s),
        }
    }

    /// The path multiplied pointwise by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Path {
        match self {
            Path::Step(p) => Path::Step(p.scaled(factor)),
            Path::Linear(p) => Path::Linear(LinearPath {
                intercept: p.intercept * factor,
                slope: p.slope * factor,
                floor_time: p.floor_time,
            }),
            Path::Fluid(p) => Path::Fluid(p.scaled(factor)),
        }
    }
}

/// Free-function form of [`Path::stop_time`].
pub fn stop_time(path: &Path, drift: f64, x: f64) -> Result<StopTime> {
    if !(drift >= 0.0) || !drift.is_finite() {
        return Err(invalid("drift", format!("must be finite and nonnegative, got {drift}")));
    }
    if x.is_nan() {
        return Err(invalid("x", "must not be NaN"));
    }
    Ok(path.stop_time(drift, x))
}
