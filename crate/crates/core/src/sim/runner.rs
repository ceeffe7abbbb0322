//! The event loop: arrivals, buffer and cache decisions, flushes and fetches.

use rustc_hash::FxHashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::clock::SimClock;
use super::workload::{Burst, KeyGen};
use super::Scenario;
use crate::config::ClientId;
use crate::error::Result;
use crate::io_sched::{CompletedTask, Direction, IoKind, IoScheduler};
use crate::metrics::{
    summarize, ClientLabel, LatencyRecorder, MetricsRecord, Stream, ThroughputTracker,
};
use crate::read_cache::{CachePage, CacheState};
use crate::reservation::{plan_reservations, Composition, ReservationPlan};
use crate::write_buffer::{AllocationOutcome, BufferState, WriteRequest};

#[derive(Debug, Clone, Copy)]
enum Event {
    Burst { client: usize, phase: usize },
}

#[derive(Debug, Clone, Copy)]
enum Waiter {
    Plain {
        arrival: u64,
        bytes: u64,
        throttled: bool,
    },
    Part(usize),
}

/// A request made of several parts whose latency ends when the last part does.
#[derive(Debug, Clone)]
struct Compound {
    client: usize,
    arrival: u64,
    stream: Stream,
    reads_left: u64,
    writes_left: u32,
    /// Write issued once all reads finish (sequential composition).
    deferred_write: u64,
}

const OPS: usize = 3;
const READ: usize = 0;
const WRITE: usize = 1;
const SCAN: usize = 2;

struct Sim<'a> {
    sc: &'a Scenario,
    plan: ReservationPlan,
    buffer: BufferState,
    cache: CacheState,
    io: IoScheduler,
    clock: SimClock<Event>,
    rngs: Vec<ChaCha8Rng>,
    keys: Vec<KeyGen>,
    next: Vec<[u64; OPS]>,
    interval: Vec<[u64; OPS]>,
    thresholds: Vec<u64>,
    waiters: FxHashMap<u64, Waiter>,
    inflight: FxHashMap<CachePage, Vec<Waiter>>,
    compounds: Vec<Compound>,
    outstanding: Vec<u64>,
    next_req: u64,
    lat: LatencyRecorder,
    tput: ThroughputTracker,
}

fn interval_for(bytes_per_op: u64, rate: u64) -> u64 {
    if rate == 0 {
        u64::MAX
    } else {
        crate::units::time_for(bytes_per_op, rate).max(1)
    }
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        sc.validate()?;
        let n = sc.n();
        let p = &sc.params;
        let plan = plan_reservations(&sc.spec, &sc.shares, &sc.delta, &sc.refill)?;
        let buffer = BufferState::new(
            sc.spec.buffer_capacity,
            sc.spec.segment_size,
            sc.shares.buffer.clone(),
            plan.rho_buffer.clone(),
        );
        let mut cache = CacheState::new(
            sc.spec.cache_capacity,
            p.page_size,
            sc.shares.cache.clone(),
            p.cache_shards,
        );
        cache.set_thresholds(&plan.rho_cache);
        let mut io = IoScheduler::new(
            sc.spec.read_bw,
            sc.spec.write_bw,
            sc.spec.compaction_fraction,
            n,
            p.tick,
        );
        io.set_work_conserving(p.work_conserving);
        let mut rngs = Vec::with_capacity(n);
        let mut keys = Vec::with_capacity(n);
        let mut next = Vec::with_capacity(n);
        let mut interval = Vec::with_capacity(n);
        for (i, c) in sc.clients.iter().enumerate() {
            let mut rng =
                ChaCha8Rng::seed_from_u64(p.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i as u64);
            let iv = [
                interval_for(c.record_size, c.read_rate()),
                interval_for(c.record_size, c.write_rate()),
                interval_for(c.record_size * c.scan_length.max(1) as u64, c.scan_rate()),
            ];
            let mut nx = [u64::MAX; OPS];
            for op in 0..OPS {
                if iv[op] != u64::MAX {
                    nx[op] = rng.random_range(0..iv[op]);
                }
            }
            keys.push(KeyGen::new(c.records(), c.zipf)?);
            rngs.push(rng);
            next.push(nx);
            interval.push(iv);
        }
        let thresholds = sc
            .shares
            .buffer
            .iter()
            .map(|&f| ((f as f64 * p.flush_trigger) as u64).max(1))
            .collect();
        let mut sim = Self {
            sc,
            plan,
            buffer,
            cache,
            io,
            clock: SimClock::default(),
            rngs,
            keys,
            next,
            interval,
            thresholds,
            waiters: FxHashMap::default(),
            inflight: FxHashMap::default(),
            compounds: Vec::new(),
            outstanding: vec![0; n],
            next_req: 0,
            lat: LatencyRecorder::new(p.warmup),
            tput: ThroughputTracker::new(n, p.warmup, p.window),
        };
        sim.prewarm()?;
        sim.schedule_bursts();
        Ok(sim)
    }

    fn prewarm(&mut self) -> Result<()> {
        let page = self.sc.params.page_size;
        for (i, c) in self.sc.clients.iter().enumerate() {
            if !c.prewarm {
                continue;
            }
            let fit = self.sc.shares.cache[i] / page;
            let n = c.records().min(fit);
            // most popular keys admitted last, so they are the most recent
            for key in (0..n).rev() {
                self.cache.admit(CachePage {
                    owner: ClientId(i as u32),
                    key,
                })?;
            }
        }
        Ok(())
    }

    fn schedule_bursts(&mut self) {
        let end = self.sc.params.duration;
        for (i, c) in self.sc.clients.iter().enumerate() {
            for (j, ph) in c.schedule.iter().enumerate() {
                let Some(b) = ph.burst else { continue };
                let stop = ph.stop.unwrap_or(end).min(end);
                let mut t = ph.start;
                while t < stop {
                    self.clock.schedule(
                        t,
                        Event::Burst {
                            client: i,
                            phase: j,
                        },
                    );
                    match b.every {
                        Some(p) if p > 0 => t += p,
                        _ => break,
                    }
                }
            }
        }
    }

    fn run(mut self) -> Result<MetricsRecord> {
        let p = &self.sc.params;
        let (tick, duration, window) = (p.tick, p.duration, p.window);
        let mut t0 = 0;
        while t0 < duration {
            let t1 = t0 + tick;
            self.buffer.set_time(t0);
            self.cache.set_time(t0);
            while let Some((t, ev)) = self.clock.pop_before(t1) {
                self.handle_event(t, ev)?;
            }
            self.arrivals(t1)?;
            for task in self.buffer.schedule_flush(&self.thresholds) {
                let mut left = task.bytes;
                while left > 0 {
                    let chunk = left.min(self.sc.params.flush_chunk);
                    self.io
                        .submit(task.client, IoKind::Flush, Direction::Write, chunk, 0)?;
                    left -= chunk;
                }
            }
            for done in self.io.advance() {
                self.complete(done)?;
            }
            if t1 % window == 0 {
                self.tput
                    .sample_usage(t0, self.buffer.usages(), self.cache.usages());
            }
            t0 = t1;
        }
        Ok(self.finish())
    }

    fn finish(self) -> MetricsRecord {
        let labels: Vec<ClientLabel> = self
            .sc
            .clients
            .iter()
            .enumerate()
            .map(|(i, c)| ClientLabel {
                kind: c.kind.to_string(),
                reservation_buffer: self.plan.rho_buffer[i],
                reservation_cache: self.plan.rho_cache[i],
            })
            .collect();
        let measured = self.sc.params.duration - self.sc.params.warmup;
        summarize(&self.sc.name, &labels, &self.lat, &self.tput, measured)
    }

    fn handle_event(&mut self, t: u64, ev: Event) -> Result<()> {
        match ev {
            Event::Burst { client, phase } => {
                let b = self.sc.clients[client].schedule[phase]
                    .burst
                    .expect("burst phase");
                if b.ramp {
                    self.ramp_burst(client, t, b)
                } else {
                    self.bulk_burst(client, t, b)
                }
            }
        }
    }

    fn arrivals(&mut self, t1: u64) -> Result<()> {
        for c in 0..self.sc.n() {
            for op in 0..OPS {
                while self.next[c][op] < t1 {
                    let t = self.next[c][op];
                    self.next[c][op] = t.saturating_add(self.interval[c][op]);
                    if !self.sc.clients[c].active_at(t) {
                        continue;
                    }
                    if self.outstanding[c] >= self.sc.params.max_outstanding {
                        continue;
                    }
                    match op {
                        READ => {
                            let key = self.keys[c].sample(&mut self.rngs[c]);
                            self.read(c, key, t, None)?;
                        }
                        WRITE => {
                            let size = self.sc.clients[c].record_size;
                            self.write(c, size, t, None)?;
                        }
                        SCAN => self.scan(c, t)?,
                        _ => unreachable!(),
                    }
                }
            }
        }
        Ok(())
    }

    fn record(&mut self, c: usize, stream: Stream, arrival: u64, at: u64) -> Result<()> {
        let lat = at.saturating_sub(arrival) as i64;
        self.lat.record(ClientId(c as u32), stream, arrival, lat)
    }

    /// A single-record read; `part` links it to a compound request.
    fn read(&mut self, c: usize, key: u64, t: u64, part: Option<usize>) -> Result<()> {
        let page = CachePage {
            owner: ClientId(c as u32),
            key,
        };
        let size = self.sc.params.page_size;
        if self.cache.lookup(page) {
            self.tput.add_read(page.owner, t, size);
            return match part {
                None => self.record(c, Stream::Read, t, t),
                Some(ci) => self.part_done(ci, true, t),
            };
        }
        let waiter = match part {
            None => {
                self.outstanding[c] += size;
                Waiter::Plain {
                    arrival: t,
                    bytes: size,
                    throttled: true,
                }
            }
            Some(ci) => Waiter::Part(ci),
        };
        if let Some(list) = self.inflight.get_mut(&page) {
            list.push(waiter);
            return Ok(());
        }
        self.inflight.insert(page, vec![waiter]);
        let disk = (size as f64 * self.sc.spec.amp_factor).ceil() as u64;
        self.io
            .submit(page.owner, IoKind::Fetch, Direction::Read, disk, key)?;
        Ok(())
    }

    fn write(&mut self, c: usize, size: u64, t: u64, part: Option<usize>) -> Result<()> {
        let id = self.next_req;
        self.next_req += 1;
        let req = WriteRequest {
            id,
            client: ClientId(c as u32),
            size,
            enqueue_time: t,
        };
        match self.buffer.try_allocate(req)? {
            AllocationOutcome::Queued => {
                let waiter = match part {
                    None => {
                        self.outstanding[c] += size;
                        Waiter::Plain {
                            arrival: t,
                            bytes: size,
                            throttled: true,
                        }
                    }
                    Some(ci) => Waiter::Part(ci),
                };
                self.waiters.insert(id, waiter);
                Ok(())
            }
            _ => {
                self.tput.add_write(req.client, t, size);
                match part {
                    None => self.record(c, Stream::Write, t, t),
                    Some(ci) => self.part_done(ci, false, t),
                }
            }
        }
    }

    fn scan(&mut self, c: usize, t: u64) -> Result<()> {
        let prof = &self.sc.clients[c];
        let len = prof.scan_length.max(1) as u64;
        let records = prof.records();
        let start = self.keys[c].sample(&mut self.rngs[c]);
        let ci = self.compounds.len();
        self.compounds.push(Compound {
            client: c,
            arrival: t,
            stream: Stream::Read,
            reads_left: len,
            writes_left: 0,
            deferred_write: 0,
        });
        for i in 0..len {
            self.read(c, (start + i) % records, t, Some(ci))?;
        }
        Ok(())
    }

    fn ramp_burst(&mut self, c: usize, t: u64, b: Burst) -> Result<()> {
        let prof = &self.sc.clients[c];
        let page = self.sc.params.page_size;
        let reads = (b.read / page).min(prof.records());
        let sequential = b.mode == Composition::Sequential && reads > 0;
        let ci = self.compounds.len();
        self.compounds.push(Compound {
            client: c,
            arrival: t,
            stream: Stream::Ramp,
            reads_left: reads,
            writes_left: (b.write > 0) as u32,
            deferred_write: if sequential { b.write } else { 0 },
        });
        if b.write > 0 && !sequential {
            self.write(c, b.write, t, Some(ci))?;
        }
        for key in 0..reads {
            self.read(c, key, t, Some(ci))?;
        }
        if reads == 0 && b.write == 0 {
            self.record(c, Stream::Ramp, t, t)?;
        }
        Ok(())
    }

    /// A non-ramp burst: independent operations that bypass throttling.
    /// Writes are batched to at least one flush chunk each.
    fn bulk_burst(&mut self, c: usize, t: u64, b: Burst) -> Result<()> {
        let prof = &self.sc.clients[c];
        let size = prof.record_size.max(self.sc.params.flush_chunk);
        let mut left = b.write;
        while left > 0 {
            let s = left.min(size);
            let id = self.next_req;
            self.write(c, s, t, None)?;
            if let Some(Waiter::Plain { throttled, .. }) = self.waiters.get_mut(&id) {
                *throttled = false;
                self.outstanding[c] -= s;
            }
            left -= s;
        }
        let reads = (b.read / self.sc.params.page_size).min(prof.records());
        for key in 0..reads {
            self.read(c, key, t, None)?;
        }
        Ok(())
    }

    fn part_done(&mut self, ci: usize, read: bool, at: u64) -> Result<()> {
        let comp = &mut self.compounds[ci];
        if read {
            comp.reads_left -= 1;
        } else {
            comp.writes_left -= 1;
        }
        if comp.reads_left == 0 && comp.deferred_write > 0 {
            let (c, bytes) = (comp.client, comp.deferred_write);
            comp.deferred_write = 0;
            return self.write(c, bytes, at, Some(ci));
        }
        if comp.reads_left == 0 && comp.writes_left == 0 {
            let (c, stream, arrival) = (comp.client, comp.stream, comp.arrival);
            self.record(c, stream, arrival, at)?;
        }
        Ok(())
    }

    fn finish_waiter(
        &mut self,
        c: usize,
        w: Waiter,
        stream: Stream,
        bytes: u64,
        at: u64,
    ) -> Result<()> {
        match w {
            Waiter::Plain {
                arrival,
                bytes: b,
                throttled,
            } => {
                if throttled {
                    self.outstanding[c] -= b;
                }
                match stream {
                    Stream::Write => self.tput.add_write(ClientId(c as u32), at, bytes),
                    _ => self.tput.add_read(ClientId(c as u32), at, bytes),
                }
                self.record(c, stream, arrival, at)
            }
            Waiter::Part(ci) => {
                match stream {
                    Stream::Write => self.tput.add_write(ClientId(c as u32), at, bytes),
                    _ => self.tput.add_read(ClientId(c as u32), at, bytes),
                }
                self.part_done(ci, stream != Stream::Write, at)
            }
        }
    }

    fn complete(&mut self, done: CompletedTask) -> Result<()> {
        let at = done.completion_time;
        let task = done.task;
        match task.kind {
            IoKind::Flush => {
                let grants = self.buffer.on_flush_complete(task.client, task.bytes)?;
                if self.sc.params.compaction_ratio > 0.0 {
                    let comp = (task.bytes as f64 * self.sc.params.compaction_ratio) as u64;
                    if comp > 0 {
                        self.io.submit(
                            task.client,
                            IoKind::Compaction,
                            Direction::Write,
                            comp,
                            0,
                        )?;
                    }
                }
                for (req, _) in grants {
                    let w = self
                        .waiters
                        .remove(&req.id)
                        .expect("granted request was waiting");
                    self.finish_waiter(req.client.index(), w, Stream::Write, req.size, at)?;
                }
            }
            IoKind::Fetch => {
                let page = CachePage {
                    owner: task.client,
                    key: task.tag,
                };
                self.cache.admit(page)?;
                let size = self.sc.params.page_size;
                for w in self.inflight.remove(&page).unwrap_or_default() {
                    self.finish_waiter(task.client.index(), w, Stream::Read, size, at)?;
                }
            }
            IoKind::Compaction => {}
        }
        Ok(())
    }
}

/// Runs one scenario to completion. Deterministic for a given seed.
pub fn run_scenario(scenario: &Scenario) -> Result<MetricsRecord> {
    Sim::new(scenario)?.run()
}

/// Runs a scenario with every ramp burst combining its read and write in `mode`.
pub fn run_composition_scenario(scenario: &Scenario, mode: Composition) -> Result<MetricsRecord> {
    let mut sc = scenario.clone();
    for c in &mut sc.clients {
        for ph in &mut c.schedule {
            if let Some(b) = ph.burst.as_mut().filter(|b| b.ramp) {
                b.mode = mode;
            }
        }
    }
    run_scenario(&sc)
}
