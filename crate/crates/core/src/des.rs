//! Discrete-event simulation of the full system: `N` devices, each with a
//! local processor, sharing one edge server. Every server runs LCFS with
//! priority preemption and discards preempted packets.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::models::types::{ClassMap, Policy, SystemConfig, TaskClass, UeProfile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoppingRule {
    /// Number of processed events, warmup included.
    Events(u64),
    /// Simulated time, warmup included.
    Horizon(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub system: SystemConfig,
    /// One policy per device.
    pub policies: Vec<Policy>,
    pub stop: StoppingRule,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Two-sided level of the reported half-widths.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_warmup() -> f64 {
    0.1
}

fn default_batches() -> usize {
    20
}

fn default_confidence() -> f64 {
    0.99
}

impl SimConfig {
    pub fn new(
        system: SystemConfig,
        policies: Vec<Policy>,
        stop: StoppingRule,
        rng_seed: u64,
    ) -> Self {
        Self {
            system,
            policies,
            stop,
            warmup_fraction: default_warmup(),
            rng_seed,
            batches: default_batches(),
            confidence: default_confidence(),
        }
    }

    /// Same policy on every device.
    pub fn symmetric(
        system: SystemConfig,
        policy: Policy,
        stop: StoppingRule,
        rng_seed: u64,
    ) -> Self {
        let n = system.num_ues;
        Self::new(system, vec![policy; n], stop, rng_seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let sys = &self.system;
        if sys.num_ues == 0 {
            return bad("num_ues must be positive".into());
        }
        if !(sys.es_rate > 0.0 && sys.es_rate.is_finite()) {
            return bad(format!("es_rate must be positive, got {}", sys.es_rate));
        }
        if sys.profiles.is_empty() {
            return bad("at least one profile is required".into());
        }
        for (k, p) in sys.profiles.iter().enumerate() {
            for c in TaskClass::ALL {
                let r = p.arrival_rates[c];
                if !(r > 0.0 && r.is_finite()) {
                    return bad(format!(
                        "profiles[{k}].arrival_rates.{c} must be positive, got {r}"
                    ));
                }
            }
            if !(p.eta >= 0.0 && p.eta.is_finite()) {
                return bad(format!(
                    "profiles[{k}].eta must be nonnegative, got {}",
                    p.eta
                ));
            }
            if !(p.weight > 0.0 && p.weight.is_finite()) {
                return bad(format!(
                    "profiles[{k}].weight must be positive, got {}",
                    p.weight
                ));
            }
        }
        if self.policies.len() != sys.num_ues {
            return bad(format!(
                "{} policies given for {} devices",
                self.policies.len(),
                sys.num_ues
            ));
        }
        let types = sys.assign_types();
        for (i, (pol, &t)) in self.policies.iter().zip(&types).enumerate() {
            if !pol.is_feasible(sys.profiles[t].f_max) {
                return bad(format!(
                    "policies[{i}] = {pol:?} is outside the feasible box"
                ));
            }
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!(
                "warmup_fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            ));
        }
        if self.batches < 2 {
            return bad(format!(
                "at least 2 batches are required, got {}",
                self.batches
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            ));
        }
        match self.stop {
            StoppingRule::Events(e) => {
                let measured = e - warmup_events(e, self.warmup_fraction);
                if measured < self.batches as u64 {
                    return bad(format!(
                        "{measured} events after warmup cannot fill {} batches",
                        self.batches
                    ));
                }
            }
            StoppingRule::Horizon(t) => {
                if !(t > 0.0 && t.is_finite()) {
                    return bad(format!("horizon must be positive, got {t}"));
                }
            }
        }
        Ok(())
    }
}

fn warmup_events(total: u64, fraction: f64) -> u64 {
    (total as f64 * fraction).floor() as u64
}

/// Where a packet currently is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Local(usize),
    Es,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketRecord {
    pub owner: usize,
    pub task_class: TaskClass,
    pub generation_time: f64,
    pub location: Location,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    /// Time-average age over the measurement window.
    pub aoi: f64,
    pub aoi_half_width: f64,
    /// Completions that lowered the age.
    pub delivered: u64,
    /// Completions older than the freshest delivered packet.
    pub stale: u64,
    pub preempted: u64,
    /// Arrivals turned away by a higher-priority packet in service.
    pub blocked: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeStats {
    pub classes: ClassMap<ClassStats>,
    /// Fraction of time the local processor serves each class.
    pub busy: ClassMap<f64>,
    pub busy_half_width: ClassMap<f64>,
    /// `η μ0³` times the total local busy fraction.
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub ues: Vec<UeStats>,
    /// Fraction of time the edge server serves each class.
    pub es_busy: ClassMap<f64>,
    pub events: u64,
    pub measured_time: f64,
    pub end_time: f64,
}

impl SimStats {
    /// Average over devices of a per-device statistic.
    pub fn device_mean(&self, f: impl Fn(&UeStats) -> f64) -> f64 {
        self.ues.iter().map(f).sum::<f64>() / self.ues.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Purpose {
    Arrival = 0,
    Route = 1,
    LocalService = 2,
    EsService = 3,
}

fn stream_id(ue: usize, c: TaskClass, purpose: Purpose) -> usize {
    (ue * 3 + c.index()) * 4 + purpose as usize
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Arrival { ue: usize, class: TaskClass },
    Completion { server: usize, version: u64 },
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Server {
    job: Option<PacketRecord>,
    version: u64,
    since: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct AgeTrack {
    freshest: f64,
    last: f64,
    area: f64,
}

impl AgeTrack {
    fn advance(&mut self, now: f64) {
        let a = self.last - self.freshest;
        let b = now - self.freshest;
        self.area += 0.5 * (b * b - a * a);
        self.last = now;
    }
}

/// Running accumulators of one batch.
#[derive(Clone, Debug)]
struct Batch {
    start: f64,
    end: f64,
    area: Vec<[f64; 3]>,
    busy: Vec<[f64; 3]>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    profiles: Vec<UeProfile>,
    rngs: Vec<ChaCha8Rng>,
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: f64,
    servers: Vec<Server>,
    ages: Vec<[AgeTrack; 3]>,
    counts: Vec<[ClassStats; 3]>,
    busy: Vec<[f64; 3]>,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let n = cfg.system.num_ues;
        let types = cfg.system.assign_types();
        let profiles = types.iter().map(|&t| cfg.system.profiles[t]).collect();
        let rngs = (0..n * 12)
            .map(|s| {
                let mut r = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
                r.set_stream(s as u64);
                r
            })
            .collect();
        let mut sim = Self {
            cfg,
            profiles,
            rngs,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            servers: vec![Server::default(); n + 1],
            ages: vec![[AgeTrack::default(); 3]; n],
            counts: vec![[ClassStats::default(); 3]; n],
            busy: vec![[0.0; 3]; n + 1],
        };
        for ue in 0..n {
            for c in TaskClass::ALL {
                sim.schedule_arrival(ue, c);
            }
        }
        sim
    }

    fn es(&self) -> usize {
        self.cfg.system.num_ues
    }

    fn exp(&mut self, stream: usize, rate: f64) -> f64 {
        let e: f64 = self.rngs[stream].sample(Exp1);
        e / rate
    }

    fn push(&mut self, time: f64, kind: Kind) {
        self.seq += 1;
        self.heap.push(Reverse(Event {
            time,
            seq: self.seq,
            kind,
        }));
    }

    fn schedule_arrival(&mut self, ue: usize, c: TaskClass) {
        let rate = self.profiles[ue].arrival_rates[c];
        let dt = self.exp(stream_id(ue, c, Purpose::Arrival), rate);
        self.push(self.now + dt, Kind::Arrival { ue, class: c });
    }

    /// Charges the current occupant of `server` up to now.
    fn charge(&mut self, server: usize) {
        let s = &mut self.servers[server];
        if let Some(job) = s.job {
            self.busy[server][job.task_class.index()] += self.now - s.since;
        }
        s.since = self.now;
    }

    fn start_service(&mut self, server: usize, job: PacketRecord) {
        self.charge(server);
        let (rate, stream) = if server == self.es() {
            (
                self.cfg.system.es_rate,
                stream_id(job.owner, job.task_class, Purpose::EsService),
            )
        } else {
            (
                self.cfg.policies[server].mu0,
                stream_id(job.owner, job.task_class, Purpose::LocalService),
            )
        };
        let s = &mut self.servers[server];
        s.version += 1;
        s.job = Some(job);
        let version = s.version;
        if rate > 0.0 {
            let dt = self.exp(stream, rate);
            self.push(self.now + dt, Kind::Completion { server, version });
        }
    }

    fn on_arrival(&mut self, ue: usize, c: TaskClass) {
        let p = self.cfg.policies[ue].p[c];
        let u: f64 = self.rngs[stream_id(ue, c, Purpose::Route)].random();
        let server = if u < p { ue } else { self.es() };
        let job = PacketRecord {
            owner: ue,
            task_class: c,
            generation_time: self.now,
            location: if server == ue {
                Location::Local(ue)
            } else {
                Location::Es
            },
        };
        match self.servers[server].job {
            Some(current) if c < current.task_class => {
                self.counts[ue][c.index()].blocked += 1;
            }
            current => {
                if let Some(old) = current {
                    debug_assert!(c >= old.task_class, "lower-priority preemption");
                    self.counts[old.owner][old.task_class.index()].preempted += 1;
                }
                self.start_service(server, job);
            }
        }
        self.schedule_arrival(ue, c);
    }

    fn on_completion(&mut self, server: usize) {
        self.charge(server);
        let Some(job) = self.servers[server].job.take() else {
            return;
        };
        let track = &mut self.ages[job.owner][job.task_class.index()];
        let stats = &mut self.counts[job.owner][job.task_class.index()];
        debug_assert!(job.generation_time <= self.now);
        if job.generation_time > track.freshest {
            track.advance(self.now);
            track.freshest = job.generation_time;
            stats.delivered += 1;
        } else {
            stats.stale += 1;
        }
    }

    /// Brings every integral up to now.
    fn flush(&mut self) {
        let now = self.now;
        for tracks in &mut self.ages {
            for t in tracks.iter_mut() {
                t.advance(now);
            }
        }
        for s in 0..self.servers.len() {
            self.charge(s);
        }
    }

    fn open_batch(&mut self) -> Batch {
        self.flush();
        for tracks in &mut self.ages {
            for t in tracks.iter_mut() {
                t.area = 0.0;
            }
        }
        for b in &mut self.busy {
            *b = [0.0; 3];
        }
        Batch {
            start: self.now,
            end: self.now,
            area: Vec::new(),
            busy: Vec::new(),
        }
    }

    fn close_batch(&mut self, mut batch: Batch) -> Batch {
        self.flush();
        batch.end = self.now;
        batch.area = self
            .ages
            .iter()
            .map(|t| [t[0].area, t[1].area, t[2].area])
            .collect();
        batch.busy = self.busy.clone();
        batch
    }

    /// Pops and processes one event. Returns `false` if the event was stale.
    fn step(&mut self, until: f64) -> Option<bool> {
        let Reverse(ev) = *self.heap.peek()?;
        if ev.time > until {
            return None;
        }
        self.heap.pop();
        debug_assert!(ev.time >= self.now, "event out of order");
        match ev.kind {
            Kind::Arrival { ue, class } => {
                self.now = ev.time;
                self.on_arrival(ue, class);
                Some(true)
            }
            Kind::Completion { server, version } => {
                if self.servers[server].version != version || self.servers[server].job.is_none() {
                    return Some(false);
                }
                self.now = ev.time;
                self.on_completion(server);
                Some(true)
            }
        }
    }

    fn run(mut self) -> SimStats {
        let cfg = self.cfg;
        let b = cfg.batches;
        let mut batches = Vec::with_capacity(b);
        let mut events = 0u64;
        match cfg.stop {
            StoppingRule::Events(total) => {
                let warm = warmup_events(total, cfg.warmup_fraction);
                let measured = total - warm;
                let mut run_events = |sim: &mut Self, n: u64| {
                    let mut done = 0;
                    while done < n {
                        if sim
                            .step(f64::INFINITY)
                            .expect("arrival streams never run dry")
                        {
                            done += 1;
                        }
                    }
                    events += n;
                };
                run_events(&mut self, warm);
                self.reset_counts();
                for k in 0..b as u64 {
                    let n = measured * (k + 1) / b as u64 - measured * k / b as u64;
                    let batch = self.open_batch();
                    run_events(&mut self, n);
                    batches.push(self.close_batch(batch));
                }
            }
            StoppingRule::Horizon(horizon) => {
                let warm = horizon * cfg.warmup_fraction;
                let mut run_until = |sim: &mut Self, t: f64| {
                    while let Some(valid) = sim.step(t) {
                        events += valid as u64;
                    }
                    sim.now = t;
                };
                run_until(&mut self, warm);
                self.reset_counts();
                for k in 0..b {
                    let end = warm + (horizon - warm) * (k + 1) as f64 / b as f64;
                    let batch = self.open_batch();
                    run_until(&mut self, end);
                    batches.push(self.close_batch(batch));
                }
            }
        }
        self.summarize(&batches, events)
    }

    fn reset_counts(&mut self) {
        for c in &mut self.counts {
            *c = [ClassStats::default(); 3];
        }
    }

    fn summarize(&self, batches: &[Batch], events: u64) -> SimStats {
        let n = self.cfg.system.num_ues;
        let b = batches.len();
        let dur: Vec<f64> = batches.iter().map(|x| x.end - x.start).collect();
        let total: f64 = dur.iter().sum();
        let tq = StudentsT::new(0.0, 1.0, (b - 1) as f64)
            .expect("at least two batches")
            .inverse_cdf(0.5 + self.cfg.confidence / 2.0);
        let estimate = |get: &dyn Fn(&Batch) -> f64| {
            let point = batches.iter().map(get).sum::<f64>() / total;
            let means: Vec<f64> = batches.iter().zip(&dur).map(|(x, d)| get(x) / d).collect();
            let m = means.iter().sum::<f64>() / b as f64;
            let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b - 1) as f64;
            (point, tq * (var / b as f64).sqrt())
        };
        let ues = (0..n)
            .map(|ue| {
                let mut classes = ClassMap::splat(ClassStats::default());
                let mut busy = ClassMap::splat(0.0);
                let mut busy_hw = ClassMap::splat(0.0);
                for c in TaskClass::ALL {
                    let k = c.index();
                    let (aoi, hw) = estimate(&|x: &Batch| x.area[ue][k]);
                    classes[c] = ClassStats {
                        aoi,
                        aoi_half_width: hw,
                        ..self.counts[ue][k]
                    };
                    let (t, thw) = estimate(&|x: &Batch| x.busy[ue][k]);
                    busy[c] = t;
                    busy_hw[c] = thw;
                }
                let policy = &self.cfg.policies[ue];
                let total_busy: f64 = busy.to_array().iter().sum();
                UeStats {
                    classes,
                    busy,
                    busy_half_width: busy_hw,
                    power: self.profiles[ue].eta * policy.mu0.powi(3) * total_busy,
                }
            })
            .collect();
        let es = self.es();
        let es_busy = ClassMap::from_fn(|c| estimate(&|x: &Batch| x.busy[es][c.index()]).0);
        SimStats {
            ues,
            es_busy,
            events,
            measured_time: total,
            end_time: self.now,
        }
    }
}

/// One replication.
pub fn simulate(config: &SimConfig) -> Result<SimStats> {
    config.validate()?;
    Ok(Sim::new(config).run())
}

/// Mean and standard error of one statistic across replications.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard error; `NaN` for a single replication.
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            std_error: (var / n).sqrt(),
        }
    }

    /// Two-sided Student-t half-width at `confidence` with `runs - 1` degrees
    /// of freedom.
    pub fn half_width(&self, runs: usize, confidence: f64) -> f64 {
        if runs < 2 {
            return f64::NAN;
        }
        let t = StudentsT::new(0.0, 1.0, (runs - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.5 + confidence / 2.0);
        t * self.std_error
    }

    pub fn covers(&self, value: f64, runs: usize, confidence: f64) -> bool {
        (self.mean - value).abs() <= self.half_width(runs, confidence)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicatedStats {
    /// One entry per seed `rng_seed + r`.
    pub runs: Vec<SimStats>,
    pub aoi: Vec<ClassMap<Estimate>>,
    pub busy: Vec<ClassMap<Estimate>>,
    pub power: Vec<Estimate>,
    pub es_busy: ClassMap<Estimate>,
}

impl ReplicatedStats {
    fn from_runs(runs: Vec<SimStats>) -> Self {
        let n = runs[0].ues.len();
        let est = |f: &dyn Fn(&SimStats) -> f64| {
            Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>())
        };
        let aoi = (0..n)
            .map(|ue| ClassMap::from_fn(|c| est(&|s| s.ues[ue].classes[c].aoi)))
            .collect();
        let busy = (0..n)
            .map(|ue| ClassMap::from_fn(|c| est(&|s| s.ues[ue].busy[c])))
            .collect();
        let power = (0..n).map(|ue| est(&|s| s.ues[ue].power)).collect();
        let es_busy = ClassMap::from_fn(|c| est(&|s| s.es_busy[c]));
        Self {
            runs,
            aoi,
            busy,
            power,
            es_busy,
        }
    }

    /// Estimate of any scalar function of a run.
    pub fn estimate(&self, f: impl Fn(&SimStats) -> f64) -> Estimate {
        Estimate::from_samples(&self.runs.iter().map(f).collect::<Vec<_>>())
    }
}

/// Independent replications with seeds `rng_seed, rng_seed + 1, …`, run in
/// parallel on the current rayon pool.
pub fn replicate(config: &SimConfig, replications: usize) -> Result<ReplicatedStats> {
    config.validate()?;
    if replications == 0 {
        return Err(Error::InvalidConfig(
            "at least one replication is required".into(),
        ));
    }
    let runs: Vec<SimStats> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = SimConfig {
                rng_seed: config.rng_seed.wrapping_add(r),
                ..config.clone()
            };
            Sim::new(&cfg).run()
        })
        .collect();
    Ok(ReplicatedStats::from_runs(runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(rates: ClassMap<f64>) -> SystemConfig {
        SystemConfig {
            num_ues: 1,
            es_rate: 5.0,
            scalarization: 10.0,
            aoi_weights: ClassMap::splat(1.0),
            profiles: vec![UeProfile {
                arrival_rates: rates,
                eta: 1.0,
                f_max: 2.0,
                weight: 1.0,
            }],
        }
    }

    #[test]
    fn event_ordering_breaks_ties_by_sequence() {
        let a = Event {
            time: 1.0,
            seq: 2,
            kind: Kind::Arrival {
                ue: 0,
                class: TaskClass::Red,
            },
        };
        let b = Event {
            time: 1.0,
            seq: 1,
            kind: Kind::Arrival {
                ue: 0,
                class: TaskClass::Red,
            },
        };
        let c = Event {
            time: 0.5,
            seq: 9,
            kind: Kind::Arrival {
                ue: 0,
                class: TaskClass::Red,
            },
        };
        let mut h = BinaryHeap::from(vec![Reverse(a), Reverse(b), Reverse(c)]);
        assert_eq!(h.pop().unwrap().0.seq, 9);
        assert_eq!(h.pop().unwrap().0.seq, 1);
        assert_eq!(h.pop().unwrap().0.seq, 2);
    }

    #[test]
    fn age_area_is_a_trapezoid() {
        let mut t = AgeTrack::default();
        t.advance(2.0);
        assert_eq!(t.area, 2.0);
        t.freshest = 1.5;
        t.advance(3.0);
        assert!((t.area - (2.0 + 0.5 * (1.5 * 1.5 - 0.25))).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let policy = Policy::new(1.0, 1.0, 1.0, 2.0);
        let sys = single(ClassMap::new(1.0, 1.0, 1.0));
        assert!(
            SimConfig::symmetric(sys.clone(), policy, StoppingRule::Events(1000), 0)
                .validate()
                .is_ok()
        );
        let zero = SimConfig::symmetric(sys.clone(), policy, StoppingRule::Horizon(0.0), 0);
        assert!(matches!(simulate(&zero), Err(Error::InvalidConfig(_))));
        let few = SimConfig::symmetric(sys.clone(), policy, StoppingRule::Events(10), 0);
        assert!(matches!(simulate(&few), Err(Error::InvalidConfig(_))));
        let wrong = SimConfig::new(sys, vec![], StoppingRule::Events(1000), 0);
        assert!(matches!(simulate(&wrong), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn identical_seeds_identical_output() {
        let policy = Policy::new(0.5, 0.5, 0.5, 1.0);
        let sys = single(ClassMap::new(1.0, 2.0, 3.0));
        let cfg = SimConfig::symmetric(sys, policy, StoppingRule::Events(20_000), 7);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = SimConfig {
            rng_seed: 8,
            ..cfg.clone()
        };
        assert_ne!(simulate(&cfg).unwrap(), simulate(&other).unwrap());
    }

    #[test]
    fn horizon_rule_stops_at_the_horizon() {
        let policy = Policy::new(0.5, 0.5, 0.5, 1.0);
        let sys = single(ClassMap::new(1.0, 2.0, 3.0));
        let s = simulate(&SimConfig::symmetric(
            sys,
            policy,
            StoppingRule::Horizon(500.0),
            1,
        ))
        .unwrap();
        assert_eq!(s.end_time, 500.0);
        assert!((s.measured_time - 450.0).abs() < 1e-9);
    }

    #[test]
    fn all_local_red_only_single_queue() {
        let policy = Policy::new(1.0, 1.0, 1.0, 2.0);
        let sys = single(ClassMap::new(1.0, 1.0, 1.0));
        let s = simulate(&SimConfig::symmetric(
            sys,
            policy,
            StoppingRule::Events(400_000),
            3,
        ))
        .unwrap();
        let red = s.ues[0].classes.red;
        assert!((red.aoi - 1.5).abs() < 0.05, "{red:?}");
        assert!((s.ues[0].busy.red - 1.0 / 3.0).abs() < 0.01);
        assert_eq!(s.es_busy, ClassMap::splat(0.0));
    }

    #[test]
    fn single_replication_matches_simulate() {
        let policy = Policy::new(0.5, 0.5, 0.5, 1.0);
        let sys = single(ClassMap::new(1.0, 2.0, 3.0));
        let cfg = SimConfig::symmetric(sys, policy, StoppingRule::Events(20_000), 11);
        let rep = replicate(&cfg, 1).unwrap();
        assert_eq!(rep.runs[0], simulate(&cfg).unwrap());
        assert_eq!(rep.aoi[0].red.mean, rep.runs[0].ues[0].classes.red.aoi);
        assert!(rep.aoi[0].red.std_error.is_nan());
    }
}
