//! Retrial queue: no waiting room, exponential retrials from an orbit.

use std::collections::HashMap;

use rand_distr::{Distribution, Exp};

use super::events::EventQueue;
use super::{Arrival, Records, SimConfig, SimReport, Source, RETRIAL_LABEL};
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, stream, Stream};

/// Orbit size treated as a runaway system.
const ORBIT_GUARD: usize = 1_000_000;
pub(crate) const TAGGED: u64 = u64::MAX;

#[derive(Debug, Clone, Copy)]
enum Event {
    Departure,
    Retry(u64),
}

#[derive(Debug, Clone)]
struct Orbiter {
    arrived: f64,
    customer: Arrival,
    rng: Stream,
    attempts: u32,
}

/// A customer entering service.
#[derive(Debug, Clone)]
pub(crate) struct Served {
    pub index: u64,
    pub wait: f64,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct RetrialSystem<'a> {
    src: Source<'a>,
    retry_gap: Exp<f64>,
    retrial_seed: u64,
    events: EventQueue<Event>,
    now: f64,
    busy: bool,
    orbit: HashMap<u64, Orbiter>,
    upcoming: Option<(f64, u64, Arrival)>,
    limit: Option<u64>,
    pub served: Vec<Served>,
}

impl<'a> RetrialSystem<'a> {
    pub fn new(cfg: &'a SimConfig, seed: u64, limit: Option<u64>) -> Result<Self> {
        let theta = cfg
            .retrial
            .ok_or_else(|| invalid("retrial", "retrial simulation needs a retrial block"))?
            .theta;
        let mut src = Source::new(cfg, seed);
        let first = src.next()?;
        Ok(Self {
            src,
            retry_gap: Exp::new(theta).expect("validated theta"),
            retrial_seed: derive_seed(seed, RETRIAL_LABEL),
            events: EventQueue::new(),
            now: 0.0,
            busy: false,
            orbit: HashMap::new(),
            upcoming: Some((first.gap, 0, first)),
            limit,
            served: Vec::new(),
        })
    }

    pub fn is_empty(&self) -> bool {
        !self.busy && self.orbit.is_empty()
    }

    pub fn next_index(&self) -> Option<u64> {
        self.upcoming.as_ref().map(|u| u.1)
    }

    fn start(&mut self, index: u64, wait: f64, attempts: u32, service: f64) {
        self.busy = true;
        self.events.push(self.now + service, Event::Departure);
        self.served.push(Served { index, wait, attempts });
    }

    fn enter(&mut self, index: u64, customer: Arrival) -> Result<()> {
        if !self.busy {
            let service = customer.service;
            self.start(index, 0.0, 0, service);
            return Ok(());
        }
        let mut rng = stream(self.retrial_seed, index);
        let next = self.now + self.retry_gap.sample(&mut rng);
        self.events.push(next, Event::Retry(index));
        self.orbit.insert(
            index,
            Orbiter {
                arrived: self.now,
                customer,
                rng,
                attempts: 0,
            },
        );
        if self.orbit.len() > ORBIT_GUARD {
            return Err(Error::Unstable { utilization: f64::NAN });
        }
        Ok(())
    }

    fn handle(&mut self, time: f64, event: Event) {
        self.now = time;
        match event {
            Event::Departure => self.busy = false,
            Event::Retry(index) => {
                let busy = self.busy;
                let o = self.orbit.get_mut(&index).expect("retrying customer is in orbit");
                o.attempts += 1;
                if busy {
                    let next = time + self.retry_gap.sample(&mut o.rng);
                    self.events.push(next, Event::Retry(index));
                } else {
                    let o = self.orbit.remove(&index).expect("present");
                    self.start(index, time - o.arrived, o.attempts, o.customer.service);
                }
            }
        }
    }

    /// Processes every event strictly before the next arrival (or all events
    /// when arrivals have stopped).
    pub fn advance_to_arrival(&mut self) {
        let horizon = self.upcoming.as_ref().map_or(f64::INFINITY, |u| u.0);
        while let Some(t) = self.events.peek_time() {
            if t >= horizon {
                break;
            }
            let (t, e) = self.events.pop().expect("peeked");
            self.handle(t, e);
        }
    }

    /// Takes the next arrival off the stream and draws the one after it.
    fn take_arrival(&mut self) -> Result<Option<(u64, Arrival)>> {
        let Some((time, index, customer)) = self.upcoming.take() else {
            return Ok(None);
        };
        self.now = time;
        if self.limit.is_none_or(|l| index + 1 < l) {
            let next = self.src.next()?;
            self.upcoming = Some((time + next.gap, index + 1, next));
        }
        Ok(Some((index, customer)))
    }

    /// Admits the next arrival. Returns its index and data.
    pub fn process_arrival(&mut self) -> Result<Option<(u64, Arrival)>> {
        let Some((index, customer)) = self.take_arrival()? else {
            return Ok(None);
        };
        self.enter(index, customer.clone())?;
        Ok(Some((index, customer)))
    }

    /// Replaces the next arrival by a tagged customer with deterministic
    /// demand `service`; zero demand drops the arrival altogether.
    pub fn replace_next_arrival(&mut self, service: f64) -> Result<()> {
        if let Some((_, mut customer)) = self.take_arrival()? {
            if service > 0.0 {
                customer.service = service;
                self.enter(TAGGED, customer)?;
            }
        }
        Ok(())
    }
}

/// Simulates the retrial queue under `cfg.price`. Waits are orbit times and
/// every retrial attempt, including the successful one, is counted.
pub fn simulate_retrial(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let warmup = cfg.warmup_count() as u64;
    let kept = (cfg.horizon - warmup) as usize;
    let mut sys = RetrialSystem::new(cfg, cfg.seed, Some(cfg.horizon))?;
    let mut records = Records::with_capacity(kept);
    let mut wait = vec![f64::NAN; kept];
    let mut attempts = vec![0.0; kept];
    let mut customers = Vec::with_capacity(kept);
    let mut drain = |sys: &mut RetrialSystem<'_>| {
        for s in sys.served.drain(..) {
            if s.index >= warmup {
                wait[(s.index - warmup) as usize] = s.wait;
                attempts[(s.index - warmup) as usize] = f64::from(s.attempts);
            }
        }
    };
    while sys.next_index().is_some() {
        sys.advance_to_arrival();
        drain(&mut sys);
        let (index, a) = sys.process_arrival()?.expect("checked");
        drain(&mut sys);
        if index >= warmup {
            records.arrive(a.gap, a.service)?;
            customers.push((a.value, a.waiting_cost, a.retrial_cost, a.service));
        }
    }
    sys.advance_to_arrival();
    drain(&mut sys);
    for (k, &(value, c, d, s)) in customers.iter().enumerate() {
        records.wait.push(wait[k]);
        records.retrials.push(attempts[k]);
        records.welfare.push(value - c * wait[k] - d * attempts[k]);
        records.payment.push(cfg.price.value(s));
    }
    records.report(cfg.batches, &cfg.price)
}
