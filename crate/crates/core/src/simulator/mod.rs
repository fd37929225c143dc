//! Discrete-event simulation of the queue under a given price function.
//!
//! Every run draws from fixed ChaCha streams keyed by the configured seed:
//! one for interarrival gaps, one for value paths, one for cost draws and
//! one for customer types. Identical configurations therefore give
//! bit-identical reports.

mod balking;
mod events;
mod externalities;
mod mg1;
mod retrial;

pub use balking::{simulate_balking, TypeBenefit};
pub use events::EventQueue;
pub use externalities::{estimate_externalities, ExternalityReport, TaggedConfig};
pub use mg1::simulate_mg1;
pub use retrial::simulate_retrial;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};
use crate::pricing::PriceFunction;
use crate::rng::{stream, Stream};
use crate::solver::ScenarioConfig;
use crate::stats::{batch_means, batch_ratio, Estimate};
use crate::value_models::{Path, ValueModel};

/// Running utilization above which a run is aborted.
pub const UTILIZATION_GUARD: f64 = 1.0 - 1e-3;
const GUARD_EVERY: usize = 10_000;

const ARRIVAL_STREAM: u64 = 0;
const PATH_STREAM: u64 = 1;
const COST_STREAM: u64 = 2;
const TYPE_STREAM: u64 = 3;
pub(crate) const RETRIAL_LABEL: u64 = 4;

/// Per-customer cost draw with a given mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostDist {
    Deterministic { value: f64 },
    Exponential { mean: f64 },
}

impl CostDist {
    pub fn mean(&self) -> f64 {
        match *self {
            CostDist::Deterministic { value } => value,
            CostDist::Exponential { mean } => mean,
        }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        match *self {
            CostDist::Deterministic { value } if value >= 0.0 && value.is_finite() => Ok(()),
            CostDist::Exponential { mean } => require_positive(name, mean),
            _ => Err(invalid(name, "cost must be nonnegative and finite")),
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            CostDist::Deterministic { value } => value,
            CostDist::Exponential { mean } => Exp::new(1.0 / mean).expect("validated mean").sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrialSim {
    pub theta: f64,
    pub retrial_cost: CostDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub model: ValueModel,
    pub price: PriceFunction,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to a deterministic cost equal to `scenario.gamma`.
    #[serde(default)]
    pub waiting_cost: Option<CostDist>,
    #[serde(default)]
    pub retrial: Option<RetrialSim>,
}

fn default_horizon() -> u64 {
    1_000_000
}

fn default_warmup() -> f64 {
    0.1
}

fn default_batches() -> usize {
    20
}

impl SimConfig {
    pub fn new(scenario: ScenarioConfig, model: ValueModel, price: PriceFunction, seed: u64) -> Self {
        Self {
            scenario,
            model,
            price,
            horizon: default_horizon(),
            warmup_fraction: default_warmup(),
            batches: default_batches(),
            seed,
            waiting_cost: None,
            retrial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.model.validate()?;
        self.price.validate()?;
        if self.horizon < 1_000 {
            return Err(invalid("horizon", format!("must be at least 1000 arrivals, got {}", self.horizon)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(invalid("warmup_fraction", "must lie in [0, 1)"));
        }
        if self.batches < 2 {
            return Err(invalid("batches", "need at least two batches"));
        }
        self.waiting_cost().validate("waiting_cost")?;
        if let Some(r) = &self.retrial {
            require_positive("retrial.theta", r.theta)?;
            r.retrial_cost.validate("retrial.retrial_cost")?;
        }
        let kept = self.horizon - self.warmup_count() as u64;
        if (kept as usize) < self.batches {
            return Err(Error::DegenerateHorizon(format!(
                "{kept} post-warmup customers cannot fill {} batches",
                self.batches
            )));
        }
        Ok(())
    }

    pub fn waiting_cost(&self) -> CostDist {
        self.waiting_cost.unwrap_or(CostDist::Deterministic {
            value: self.scenario.gamma,
        })
    }

    pub(crate) fn warmup_count(&self) -> usize {
        (self.horizon as f64 * self.warmup_fraction).floor() as usize
    }
}

/// Point estimates with batch-means standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub welfare_rate: Estimate,
    pub mean_wait: Estimate,
    pub mean_service: Estimate,
    pub service_second_moment: Estimate,
    pub utilization: f64,
    pub mean_payment: f64,
    /// Post-warmup arrivals.
    pub customers: u64,
    pub elapsed: f64,
    #[serde(default)]
    pub mean_retrials: Option<Estimate>,
    #[serde(default)]
    pub join_fraction: Option<Estimate>,
    #[serde(default)]
    pub type_benefits: Vec<TypeBenefit>,
}

/// Draws interarrival gaps, value paths and cost draws from their streams.
#[derive(Debug, Clone)]
pub(crate) struct Source<'a> {
    cfg: &'a SimConfig,
    arrivals: Stream,
    paths: Stream,
    costs: Stream,
    pub types: Stream,
    gap: Exp<f64>,
}

/// What a single arriving customer brings.
#[derive(Debug, Clone)]
pub(crate) struct Arrival {
    pub gap: f64,
    pub service: f64,
    pub value: f64,
    pub waiting_cost: f64,
    pub retrial_cost: f64,
}

impl<'a> Source<'a> {
    pub fn new(cfg: &'a SimConfig, seed: u64) -> Self {
        Self {
            cfg,
            arrivals: stream(seed, ARRIVAL_STREAM),
            paths: stream(seed, PATH_STREAM),
            costs: stream(seed, COST_STREAM),
            types: stream(seed, TYPE_STREAM),
            gap: Exp::new(cfg.scenario.lambda).expect("validated lambda"),
        }
    }

    pub fn gap(&mut self) -> f64 {
        self.gap.sample(&mut self.arrivals)
    }

    pub fn path(&mut self) -> Path {
        self.cfg.model.sample_path(&mut self.paths)
    }

    pub fn uniform_type(&mut self) -> f64 {
        self.types.random::<f64>()
    }

    /// Service chosen under the configured price and the realised value.
    pub fn serve(&self, path: &Path) -> Result<(f64, f64)> {
        let s = self.cfg.price.service_for(path)?;
        Ok((s, path.integral_to(s)))
    }

    pub fn costs(&mut self) -> (f64, f64) {
        let c = self.cfg.waiting_cost().sample(&mut self.costs);
        let d = self.cfg.retrial.map_or(0.0, |r| r.retrial_cost.sample(&mut self.costs));
        (c, d)
    }

    pub fn next(&mut self) -> Result<Arrival> {
        let gap = self.gap();
        let path = self.path();
        let (service, value) = self.serve(&path)?;
        let (waiting_cost, retrial_cost) = self.costs();
        Ok(Arrival {
            gap,
            service,
            value,
            waiting_cost,
            retrial_cost,
        })
    }
}

/// Post-warmup per-customer records, in arrival order.
#[derive(Debug, Default)]
pub(crate) struct Records {
    pub gaps: Vec<f64>,
    pub welfare: Vec<f64>,
    pub wait: Vec<f64>,
    pub service: Vec<f64>,
    pub service_sq: Vec<f64>,
    pub payment: Vec<f64>,
    pub retrials: Vec<f64>,
    pub joined: Vec<f64>,
    busy: f64,
    elapsed: f64,
}

impl Records {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            gaps: Vec::with_capacity(n),
            welfare: Vec::with_capacity(n),
            wait: Vec::with_capacity(n),
            service: Vec::with_capacity(n),
            service_sq: Vec::with_capacity(n),
            payment: Vec::with_capacity(n),
            ..Self::default()
        }
    }

    /// Adds the arrival-time part of a record and runs the instability guard.
    pub fn arrive(&mut self, gap: f64, service: f64) -> Result<()> {
        self.gaps.push(gap);
        self.service.push(service);
        self.service_sq.push(service * service);
        self.busy += service;
        self.elapsed += gap;
        if self.gaps.len().is_multiple_of(GUARD_EVERY) {
            let utilization = self.busy / self.elapsed;
            if utilization > UTILIZATION_GUARD {
                return Err(Error::Unstable { utilization });
            }
        }
        Ok(())
    }

    pub fn report(&self, batches: usize, price: &PriceFunction) -> Result<SimReport> {
        let n = self.gaps.len();
        if n == 0 {
            return Err(Error::DegenerateHorizon("no post-warmup customers".into()));
        }
        let utilization = self.busy / self.elapsed;
        if utilization > UTILIZATION_GUARD {
            return Err(Error::Unstable { utilization });
        }
        let joined_service: Vec<f64>;
        let joined_sq: Vec<f64>;
        let (service, service_sq) = if self.joined.is_empty() {
            (&self.service, &self.service_sq)
        } else {
            let keep = |v: &[f64]| -> Vec<f64> {
                v.iter().zip(&self.joined).filter(|(_, j)| **j > 0.0).map(|(x, _)| *x).collect()
            };
            joined_service = keep(&self.service);
            joined_sq = keep(&self.service_sq);
            (&joined_service, &joined_sq)
        };
        let payment = if self.payment.is_empty() {
            service.iter().map(|&s| price.value(s)).sum::<f64>() / service.len().max(1) as f64
        } else {
            self.payment.iter().sum::<f64>() / self.payment.len() as f64
        };
        Ok(SimReport {
            welfare_rate: batch_ratio(&self.welfare, &self.gaps, batches),
            mean_wait: batch_means(&self.wait, batches),
            mean_service: batch_means(service, batches),
            service_second_moment: batch_means(service_sq, batches),
            utilization,
            mean_payment: payment,
            customers: n as u64,
            elapsed: self.elapsed,
            mean_retrials: (!self.retrials.is_empty()).then(|| batch_means(&self.retrials, batches)),
            join_fraction: (!self.joined.is_empty()).then(|| batch_means(&self.joined, batches)),
            type_benefits: Vec::new(),
        })
    }
}

/// Analytic M/G/1 mean wait `lambda E S^2 / (2 (1 - lambda E S))`.
pub fn pollaczek_khinchine(lambda: f64, mean_s: f64, second_s: f64) -> Result<f64> {
    let slack = 1.0 - lambda * mean_s;
    if !(slack > 0.0) {
        return Err(Error::Domain(format!("lambda * ES = {} is not below 1", lambda * mean_s)));
    }
    Ok(lambda * second_s / (2.0 * slack))
}

/// Estimates from a replication-free summary of a stream of values.
pub(crate) fn estimate(values: &[f64]) -> Estimate {
    let mut r = crate::stats::Running::new();
    values.iter().for_each(|&v| r.push(v));
    r.estimate()
}
