//! Coupled twin runs measuring what other customers save when a tagged
//! customer drops a demand of `s`.

use serde::{Deserialize, Serialize};

use super::retrial::{RetrialSystem, TAGGED};
use super::{estimate, SimConfig, Source};
use crate::error::{invalid, require_nonnegative, Error, Result};
use crate::rng::derive_seed;
use crate::stats::Estimate;

/// Coupling that has not closed after this many arrivals is treated as a
/// runaway system.
const COUPLING_CAP: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaggedConfig {
    /// Arrivals simulated before the tagged customer enters.
    pub warmup: u64,
    pub replications: u64,
}

impl Default for TaggedConfig {
    fn default() -> Self {
        Self {
            warmup: 100_000,
            replications: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalityReport {
    pub s: f64,
    pub replications: u64,
    /// Total waiting (orbit) time saved by the other customers.
    pub saved_wait: Estimate,
    /// Retrial attempts saved by the other customers; retrial runs only.
    pub saved_retrials: Option<Estimate>,
    /// Mean number of arrivals until the twins coincide again.
    pub mean_coupling_length: f64,
}

/// Runs `tagged.replications` twin pairs, one with the tagged demand `s`
/// and one without it, on common random numbers. Uses the retrial queue when
/// `cfg.retrial` is set, the FCFS queue otherwise.
pub fn estimate_externalities(cfg: &SimConfig, s: f64, tagged: &TaggedConfig) -> Result<ExternalityReport> {
    cfg.scenario.validate()?;
    cfg.model.validate()?;
    cfg.price.validate()?;
    require_nonnegative("s", s)?;
    if tagged.replications < 2 {
        return Err(invalid("replications", "need at least two twin pairs"));
    }
    let mut waits = Vec::with_capacity(tagged.replications as usize);
    let mut retrials = Vec::with_capacity(tagged.replications as usize);
    let mut coupling = 0.0;
    for r in 0..tagged.replications {
        let seed = derive_seed(cfg.seed, r);
        let (w, n, len) = if cfg.retrial.is_some() {
            retrial_pair(cfg, seed, s, tagged.warmup)?
        } else {
            fcfs_pair(cfg, seed, s, tagged.warmup).map(|(w, len)| (w, 0.0, len))?
        };
        waits.push(w);
        retrials.push(n);
        coupling += len as f64;
    }
    Ok(ExternalityReport {
        s,
        replications: tagged.replications,
        saved_wait: estimate(&waits),
        saved_retrials: cfg.retrial.is_some().then(|| estimate(&retrials)),
        mean_coupling_length: coupling / tagged.replications as f64,
    })
}

fn fcfs_pair(cfg: &SimConfig, seed: u64, s: f64, warmup: u64) -> Result<(f64, u64)> {
    let mut src = Source::new(cfg, seed);
    let (mut wait, mut prev) = (0.0, 0.0);
    for i in 0..warmup {
        let a = src.next()?;
        wait = if i == 0 { 0.0 } else { (wait + prev - a.gap).max(0.0) };
        prev = a.service;
    }
    // The tagged customer takes the place of the next Poisson arrival, so by
    // PASTA it sees the stationary workload.
    let tagged_gap = src.gap();
    let seen = if warmup == 0 { 0.0 } else { (wait + prev - tagged_gap).max(0.0) };
    let (mut with, mut without) = (seen + s, seen);
    let mut saved = 0.0;
    let mut n = 0;
    while with > without {
        let next = src.next()?;
        let (w1, w0) = ((with - next.gap).max(0.0), (without - next.gap).max(0.0));
        saved += w1 - w0;
        with = w1 + next.service;
        without = w0 + next.service;
        n += 1;
        if n > COUPLING_CAP {
            return Err(Error::Unstable { utilization: f64::NAN });
        }
    }
    Ok((saved, n))
}

fn retrial_pair(cfg: &SimConfig, seed: u64, s: f64, warmup: u64) -> Result<(f64, f64, u64)> {
    let mut sys = RetrialSystem::new(cfg, seed, None)?;
    for _ in 0..warmup {
        sys.advance_to_arrival();
        sys.process_arrival()?;
    }
    sys.advance_to_arrival();
    sys.served.clear();
    // the tagged customer takes the place of a Poisson arrival (PASTA)
    let mut without = sys.clone();
    let mut with = sys;
    with.replace_next_arrival(s)?;
    without.replace_next_arrival(0.0)?;
    let (mut wait, mut tries) = (0.0, 0.0);
    let mut n = 0;
    loop {
        for (sign, sys) in [(1.0, &mut with), (-1.0, &mut without)] {
            sys.advance_to_arrival();
            for served in sys.served.drain(..).filter(|x| x.index != TAGGED) {
                wait += sign * served.wait;
                tries += sign * f64::from(served.attempts);
            }
        }
        if with.is_empty() && without.is_empty() {
            break;
        }
        with.process_arrival()?;
        without.process_arrival()?;
        n += 1;
        if n > COUPLING_CAP {
            return Err(Error::Unstable { utilization: f64::NAN });
        }
    }
    Ok((wait, tries, n))
}
