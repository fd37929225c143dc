//! FCFS queue with type-threshold joining.

use serde::{Deserialize, Serialize};

use super::{Records, SimConfig, SimReport, Source};
use crate::balking::TypedValueModel;
use crate::error::{invalid, Result};
use crate::stats::{batch_means, Estimate};

/// Estimated expected benefit of a hypothetical type-`t` arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeBenefit {
    pub t: f64,
    pub benefit: Estimate,
}

/// Simulates arrivals of random type that join iff their type exceeds
/// `join_threshold`. A joining type-`tau` customer has path `scale(tau) W`
/// with `W` drawn from `typed.base`, which must equal `cfg.model`.
///
/// Every arrival also scores each type on `type_grid`: the value that type
/// would collect under the price, minus the price paid net of the server-cost
/// pass-through, minus its own waiting cost for the virtual wait seen on
/// arrival.
pub fn simulate_balking(cfg: &SimConfig, typed: &TypedValueModel, join_threshold: f64, type_grid: &[f64]) -> Result<SimReport> {
    cfg.validate()?;
    typed.validate()?;
    if typed.base != cfg.model {
        return Err(invalid("model", "simulation model must be the typed model's base process"));
    }
    let warmup = cfg.warmup_count();
    let kept = cfg.horizon as usize - warmup;
    let mut src = Source::new(cfg, cfg.seed);
    let mut records = Records::with_capacity(kept);
    records.joined.reserve(kept);
    let mut scores: Vec<Vec<f64>> = type_grid.iter().map(|_| Vec::with_capacity(kept)).collect();
    // workload left by the last joining customer, and the time since it arrived
    let (mut work, mut since) = (0.0, 0.0);
    for i in 0..cfg.horizon as usize {
        let gap = src.gap();
        let u = src.uniform_type();
        let base = src.path();
        let (c, _) = src.costs();
        since += gap;
        let virtual_wait = (work - since).max(0.0);
        let tau = typed.types.quantile(u);
        let joins = tau > join_threshold;
        let (service, value) = if joins {
            src.serve(&base.scaled(typed.scale.at(tau)))?
        } else {
            (0.0, 0.0)
        };
        if joins {
            work = virtual_wait + service;
            since = 0.0;
        }
        if i >= warmup {
            records.arrive(gap, service)?;
            records.joined.push(if joins { 1.0 } else { 0.0 });
            if joins {
                records.wait.push(virtual_wait);
                records.payment.push(cfg.price.value(service));
            }
            records.welfare.push(if joins { value - c * virtual_wait } else { 0.0 });
            for (k, &t) in type_grid.iter().enumerate() {
                let (s, v) = src.serve(&base.scaled(typed.scale.at(t)))?;
                scores[k].push(v - (cfg.price.value(s) - cfg.price.xi.integral(s)) - c * virtual_wait);
            }
        }
    }
    if records.wait.len() < cfg.batches {
        return Err(crate::error::Error::DegenerateHorizon(format!(
            "only {} customers joined after warmup",
            records.wait.len()
        )));
    }
    let mut report = records.report(cfg.batches, &cfg.price)?;
    report.type_benefits = type_grid
        .iter()
        .zip(&scores)
        .map(|(&t, v)| TypeBenefit {
            t,
            benefit: batch_means(v, cfg.batches),
        })
        .collect();
    Ok(report)
}
