//! FCFS M/G/1 queue via the Lindley recursion.

use super::{Records, SimConfig, SimReport, Source};
use crate::error::Result;

/// Simulates `cfg.horizon` arrivals and reports post-warmup estimates.
pub fn simulate_mg1(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let warmup = cfg.warmup_count();
    let mut src = Source::new(cfg, cfg.seed);
    let mut records = Records::with_capacity(cfg.horizon as usize - warmup);
    let (mut wait, mut prev_service) = (0.0, 0.0);
    for i in 0..cfg.horizon as usize {
        let a = src.next()?;
        wait = if i == 0 { 0.0 } else { (wait + prev_service - a.gap).max(0.0) };
        prev_service = a.service;
        if i >= warmup {
            records.arrive(a.gap, a.service)?;
            records.wait.push(wait);
            records.welfare.push(a.value - a.waiting_cost * wait);
            records.payment.push(cfg.price.value(a.service));
        }
    }
    records.report(cfg.batches, &cfg.price)
}
