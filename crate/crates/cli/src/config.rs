//! Run configuration: one JSON document, strictly validated.

use std::path::Path;

use queuereg_core::balking::{Scale, TypeDist, TypedValueModel};
use queuereg_core::pricing::PriceFunction;
use queuereg_core::retrial::RetrialConfig;
use queuereg_core::rng::derive_seed;
use queuereg_core::simulator::{CostDist, RetrialSim, SimConfig, TaggedConfig};
use queuereg_core::solver::ScenarioConfig;
use queuereg_core::value_models::{AnalyticLaw, MonteCarloConfig, PathSet, StopLaw, ValueModel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Label mixed into the run seed for Monte-Carlo path sets.
const PATHS_LABEL: u64 = 0x9A7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub model: ValueModel,
    /// Overridden by `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Path count for models without closed-form moments.
    #[serde(default = "default_paths")]
    pub monte_carlo_paths: usize,
    /// Price for `simulate` and `externalities`; the solved optimum if absent.
    #[serde(default)]
    pub price: Option<PriceFunction>,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub externalities: ExternalityBlock,
    #[serde(default)]
    pub retrial: Option<RetrialBlock>,
    #[serde(default)]
    pub balking: Option<BalkingBlock>,
}

fn default_paths() -> usize {
    MonteCarloConfig::default().paths
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub horizon: u64,
    pub warmup_fraction: f64,
    pub batches: usize,
    /// Deterministic at `scenario.gamma` if absent.
    pub waiting_cost: Option<CostDist>,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            horizon: 1_000_000,
            warmup_fraction: 0.1,
            batches: 20,
            waiting_cost: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub points: usize,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self { points: 101 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExternalityBlock {
    /// Demand of the tagged customer.
    pub s: f64,
    pub warmup: u64,
    pub replications: u64,
}

impl Default for ExternalityBlock {
    fn default() -> Self {
        let tagged = TaggedConfig::default();
        Self {
            s: 1.0,
            warmup: tagged.warmup,
            replications: tagged.replications,
        }
    }
}

impl ExternalityBlock {
    pub fn tagged(&self) -> TaggedConfig {
        TaggedConfig {
            warmup: self.warmup,
            replications: self.replications,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrialBlock {
    pub theta: f64,
    pub delta: f64,
    /// Per-retrial cost draw; deterministic at `delta` if absent.
    #[serde(default)]
    pub retrial_cost: Option<CostDist>,
}

impl RetrialBlock {
    pub fn solver(&self) -> RetrialConfig {
        RetrialConfig {
            theta: self.theta,
            delta: self.delta,
        }
    }

    pub fn sim(&self) -> RetrialSim {
        RetrialSim {
            theta: self.theta,
            retrial_cost: self.retrial_cost.unwrap_or(CostDist::Deterministic { value: self.delta }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalkingBlock {
    pub types: TypeDist,
    pub scale: Scale,
    /// Distance from `t*` of the two types whose benefit is simulated.
    #[serde(default = "default_offset")]
    pub benefit_offset: f64,
    #[serde(default = "default_true")]
    pub simulate: bool,
}

fn default_offset() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

impl BalkingBlock {
    pub fn typed(&self, base: &ValueModel) -> TypedValueModel {
        TypedValueModel {
            types: self.types,
            scale: self.scale,
            base: base.clone(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every block, naming the block in the message.
    pub fn validate(&self) -> Result<(), CliError> {
        let section = |name: &str, r: queuereg_core::Result<()>| r.map_err(|e| CliError::Config(format!("{name}: {e}")));
        section("scenario", self.scenario.validate())?;
        section("model", self.model.validate())?;
        if let Some(p) = &self.price {
            section("price", p.validate())?;
        }
        if let Some(r) = &self.retrial {
            section("retrial", r.solver().validate())?;
            if let Some(c) = &r.retrial_cost {
                section("retrial", c.validate("retrial_cost"))?;
            }
        }
        if let Some(b) = &self.balking {
            section("balking", b.typed(&self.model).validate())?;
            if !(b.benefit_offset > 0.0 && b.benefit_offset.is_finite()) {
                return Err(CliError::Config(format!(
                    "balking: benefit_offset must be positive, got {}",
                    b.benefit_offset
                )));
            }
        }
        if self.monte_carlo_paths < 2 {
            return Err(CliError::Config("monte_carlo_paths: need at least two paths".into()));
        }
        if self.sweep.points < 2 {
            return Err(CliError::Config("sweep.points: need at least two points".into()));
        }
        let e = &self.externalities;
        if !(e.s >= 0.0 && e.s.is_finite()) || e.replications < 2 {
            return Err(CliError::Config(
                "externalities: s must be nonnegative and replications at least 2".into(),
            ));
        }
        // horizon, warmup and batch checks live with the simulator
        let probe = self.sim_config(PriceFunction::new(0.0, 0.0, 1.0, Default::default()).expect("valid probe price"), 0);
        section("simulation", probe.validate())
    }

    /// Stop-time law: closed form where available, else a seeded path set.
    pub fn law(&self, seed: u64) -> Result<Box<dyn StopLaw>, CliError> {
        if self.model.is_analytic() {
            return Ok(Box::new(AnalyticLaw::new(self.model.clone())?));
        }
        let mc = MonteCarloConfig {
            paths: self.monte_carlo_paths,
            seed: derive_seed(seed, PATHS_LABEL),
        };
        Ok(Box::new(PathSet::draw(&self.model, &mc)?))
    }

    /// Plain-queue simulation settings; callers attach a retrial block.
    pub fn sim_config(&self, price: PriceFunction, seed: u64) -> SimConfig {
        let mut cfg = SimConfig::new(self.scenario.clone(), self.model.clone(), price, seed);
        cfg.horizon = self.simulation.horizon;
        cfg.warmup_fraction = self.simulation.warmup_fraction;
        cfg.batches = self.simulation.batches;
        cfg.waiting_cost = self.simulation.waiting_cost;
        cfg
    }
}
