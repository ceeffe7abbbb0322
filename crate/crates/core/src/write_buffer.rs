//! Write buffer manager with a shared reserved pool and an elastic global pool.
//!
//! Capacity `C` is split into a reserved pool holding the sum of all buffer
//! reservations and a global pool `G = C - rho_total`. A client below its fair
//! share that holds a nonzero reservation draws from the reserved pool first,
//! then the global pool; every other client draws only
//! from the global pool. Clients without a reservation waive the delay bound
//! and must not drain the pool that backs the bound for those that kept it.
//! Bytes a client freed refill the reserved pool up to what it had drawn from
//! it, the rest go to the global pool, so the reserved pool always equals the
//! sum of unused reservations. Queued requests are drained in increasing order
//! of `U_i / f_i`, ties broken by arrival.
//!
//! While a request from a below-share client is waiting, requests from
//! clients at or above their share are queued behind it even if space is
//! free. Otherwise the space the waiting client is accumulating would be
//! handed straight back to the clients it is being reclaimed from.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::ClientId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WriteRequest {
    pub id: u64,
    pub client: ClientId,
    pub size: u64,
    pub enqueue_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AllocationOutcome {
    GrantedFromReserved,
    GrantedFromGlobal,
    GrantedSplit { reserved: u64, global: u64 },
    Queued,
}

impl AllocationOutcome {
    pub fn is_granted(self) -> bool {
        !matches!(self, AllocationOutcome::Queued)
    }

    /// Bytes taken from the reserved pool.
    pub fn reserved_bytes(self, size: u64) -> u64 {
        match self {
            AllocationOutcome::GrantedFromReserved => size,
            AllocationOutcome::GrantedSplit { reserved, .. } => reserved,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlushTask {
    pub client: ClientId,
    pub num_segments: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransitionRecord {
    pub time: u64,
    pub op: &'static str,
    pub client: ClientId,
    pub size: u64,
    pub outcome: String,
    pub reserved_free: u64,
    pub global_free: u64,
}

#[derive(Debug, Clone, Default)]
struct ClientQueue {
    reqs: BTreeMap<(u64, u64), WriteRequest>,
    /// Multiset of queued sizes.
    sizes: BTreeMap<u64, u32>,
}

impl ClientQueue {
    fn push(&mut self, key: (u64, u64), req: WriteRequest) {
        self.reqs.insert(key, req);
        *self.sizes.entry(req.size).or_default() += 1;
    }

    fn remove(&mut self, key: (u64, u64)) {
        let req = self.reqs.remove(&key).expect("queued request");
        let n = self.sizes.get_mut(&req.size).expect("size tracked");
        *n -= 1;
        if *n == 0 {
            self.sizes.remove(&req.size);
        }
    }

    fn min_size(&self) -> u64 {
        self.sizes.keys().next().copied().unwrap_or(u64::MAX)
    }
}

#[derive(Debug, Clone)]
pub struct BufferState {
    capacity: u64,
    segment: u64,
    rho: Vec<u64>,
    rho_total: u64,
    /// Bytes each client currently holds from the reserved pool.
    held: Vec<u64>,
    reserved_free: u64,
    global_free: u64,
    fair_share: Vec<u64>,
    usage: Vec<u64>,
    flushing: Vec<u64>,
    /// Waiting requests per client, keyed by (enqueue time, arrival sequence).
    queues: Vec<ClientQueue>,
    queued: usize,
    seq: u64,
    now: u64,
    log: Option<Vec<TransitionRecord>>,
}

impl BufferState {
    pub fn new(capacity: u64, segment: u64, fair_share: Vec<u64>, rho: Vec<u64>) -> Self {
        assert_eq!(fair_share.len(), rho.len(), "one reservation per client");
        let rho_total: u64 = rho.iter().sum();
        assert!(rho_total <= capacity, "reservations exceed buffer capacity");
        let n = fair_share.len();
        Self {
            rho,
            capacity,
            segment,
            rho_total,
            reserved_free: rho_total,
            global_free: capacity - rho_total,
            fair_share,
            usage: vec![0; n],
            held: vec![0; n],
            flushing: vec![0; n],
            queues: vec![ClientQueue::default(); n],
            queued: 0,
            seq: 0,
            now: 0,
            log: None,
        }
    }

    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn log(&self) -> &[TransitionRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn set_time(&mut self, now: u64) {
        self.now = now;
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn rho_total(&self) -> u64 {
        self.rho_total
    }

    pub fn global_capacity(&self) -> u64 {
        self.capacity - self.rho_total
    }

    pub fn reserved_free(&self) -> u64 {
        self.reserved_free
    }

    pub fn global_free(&self) -> u64 {
        self.global_free
    }

    pub fn usage(&self, c: ClientId) -> u64 {
        self.usage[c.index()]
    }

    pub fn usages(&self) -> &[u64] {
        &self.usage
    }

    pub fn fair_share(&self, c: ClientId) -> u64 {
        self.fair_share[c.index()]
    }

    /// Bytes of `c` not yet handed to a flush.
    pub fn unflushed(&self, c: ClientId) -> u64 {
        self.usage[c.index()] - self.flushing[c.index()]
    }

    /// Waiting requests in client order, FIFO within a client.
    pub fn queued(&self) -> impl Iterator<Item = &WriteRequest> {
        self.queues.iter().flat_map(|q| q.reqs.values())
    }

    pub fn queue_len(&self) -> usize {
        self.queued
    }

    pub fn below_share(&self, c: ClientId) -> bool {
        self.usage[c.index()] < self.fair_share[c.index()]
    }

    /// Whether `c` may currently draw from the reserved pool.
    pub fn reserved_eligible(&self, c: ClientId) -> bool {
        self.rho[c.index()] > 0 && self.below_share(c)
    }

    /// Compares `U_a / f_a` with `U_b / f_b` exactly.
    fn cmp_ratio(&self, a: ClientId, b: ClientId) -> Ordering {
        let (ua, fa) = (
            self.usage[a.index()] as u128,
            self.fair_share[a.index()].max(1) as u128,
        );
        let (ub, fb) = (
            self.usage[b.index()] as u128,
            self.fair_share[b.index()].max(1) as u128,
        );
        (ua * fb).cmp(&(ub * fa))
    }

    fn below_share_waiting(&self) -> bool {
        (0..self.queues.len())
            .any(|i| !self.queues[i].reqs.is_empty() && self.usage[i] < self.fair_share[i])
    }

    /// Largest request `client` could be granted right now.
    fn admissible_size(&self, client: ClientId) -> u64 {
        if self.reserved_eligible(client) {
            self.reserved_free + self.global_free
        } else {
            self.global_free
        }
    }

    /// Pool rule only: which pools a request would come from, without mutating.
    fn pool_split(&self, client: ClientId, size: u64) -> Option<(u64, u64)> {
        if self.reserved_eligible(client) {
            let reserved = size.min(self.reserved_free);
            let global = size - reserved;
            (global <= self.global_free).then_some((reserved, global))
        } else {
            (size <= self.global_free).then_some((0, size))
        }
    }

    fn grant(&mut self, client: ClientId, size: u64, split: (u64, u64)) -> AllocationOutcome {
        let (reserved, global) = split;
        self.reserved_free -= reserved;
        self.global_free -= global;
        self.held[client.index()] += reserved;
        self.usage[client.index()] += size;
        match (reserved, global) {
            (_, 0) => AllocationOutcome::GrantedFromReserved,
            (0, _) => AllocationOutcome::GrantedFromGlobal,
            (reserved, global) => AllocationOutcome::GrantedSplit { reserved, global },
        }
    }

    fn record(&mut self, op: &'static str, client: ClientId, size: u64, outcome: String) {
        let (now, reserved_free, global_free) = (self.now, self.reserved_free, self.global_free);
        if let Some(log) = self.log.as_mut() {
            log.push(TransitionRecord {
                time: now,
                op,
                client,
                size,
                outcome,
                reserved_free,
                global_free,
            });
        }
    }

    /// Admits a write or queues it. A queued request is granted later by
    /// [`BufferState::on_flush_complete`].
    pub fn try_allocate(&mut self, req: WriteRequest) -> Result<AllocationOutcome> {
        if req.size > self.capacity {
            return Err(Error::ExceedsCapacity {
                size: req.size,
                capacity: self.capacity,
            });
        }
        assert!(req.size > 0, "write requests carry at least one byte");
        let gated = !self.below_share(req.client) && self.below_share_waiting();
        let outcome = match (gated, self.pool_split(req.client, req.size)) {
            (false, Some(split)) => self.grant(req.client, req.size, split),
            _ => {
                self.queues[req.client.index()].push((req.enqueue_time, self.seq), req);
                self.queued += 1;
                self.seq += 1;
                AllocationOutcome::Queued
            }
        };
        self.record("alloc", req.client, req.size, format!("{outcome:?}"));
        Ok(outcome)
    }

    /// Returns `freed` bytes of `client` to the pools (reserved first) and drains
    /// the queue. Returns the grants in the order they were made.
    pub fn on_flush_complete(
        &mut self,
        client: ClientId,
        freed: u64,
    ) -> Result<Vec<(WriteRequest, AllocationOutcome)>> {
        let usage = self.usage[client.index()];
        if freed > usage {
            return Err(Error::OverFree {
                client: client.0,
                freed,
                usage,
            });
        }
        self.usage[client.index()] -= freed;
        let fl = &mut self.flushing[client.index()];
        *fl = fl.saturating_sub(freed);
        let to_reserved = freed.min(self.held[client.index()]);
        self.held[client.index()] -= to_reserved;
        self.reserved_free += to_reserved;
        self.global_free += freed - to_reserved;
        self.record("free", client, freed, String::new());
        Ok(self.drain())
    }

    /// Grants queued requests greedily: each step picks the admissible request
    /// with the lowest utilization ratio, re-evaluated after every grant.
    pub fn drain(&mut self) -> Vec<(WriteRequest, AllocationOutcome)> {
        let mut grants = Vec::new();
        loop {
            let gate = self.below_share_waiting();
            let mut best: Option<((u64, u64), WriteRequest, (u64, u64))> = None;
            for (i, q) in self.queues.iter().enumerate() {
                let client = ClientId(i as u32);
                if q.reqs.is_empty() || (gate && !self.below_share(client)) {
                    continue;
                }
                // pool admission depends only on size, so the first request
                // that fits is this client's candidate
                let limit = self.admissible_size(client);
                if q.min_size() > limit {
                    continue;
                }
                let Some((&key, req)) = q.reqs.iter().find(|(_, r)| r.size <= limit) else {
                    continue;
                };
                let split = self
                    .pool_split(client, req.size)
                    .expect("size within limit");
                let better = match &best {
                    None => true,
                    Some((bk, breq, _)) => match self.cmp_ratio(req.client, breq.client) {
                        Ordering::Less => true,
                        Ordering::Equal => key < *bk,
                        Ordering::Greater => false,
                    },
                };
                if better {
                    best = Some((key, *req, split));
                }
            }
            let Some((key, req, split)) = best else { break };
            self.queues[req.client.index()].remove(key);
            self.queued -= 1;
            let outcome = self.grant(req.client, req.size, split);
            self.record("drain", req.client, req.size, format!("{outcome:?}"));
            grants.push((req, outcome));
        }
        grants
    }

    /// Emits flush work for every client whose unflushed bytes reach its
    /// threshold, in whole segments. If requests are waiting and nothing is
    /// flushing or eligible, the client with the most unflushed bytes flushes
    /// a partial segment so the queue cannot stall.
    pub fn schedule_flush(&mut self, thresholds: &[u64]) -> Vec<FlushTask> {
        let mut tasks = Vec::new();
        for i in 0..self.usage.len() {
            let c = ClientId(i as u32);
            let pending = self.unflushed(c);
            if pending > 0 && pending >= thresholds[i] {
                let segs = pending / self.segment;
                if segs > 0 {
                    let bytes = segs * self.segment;
                    self.flushing[i] += bytes;
                    tasks.push(FlushTask {
                        client: c,
                        num_segments: segs,
                        bytes,
                    });
                }
            }
        }
        let idle = self.flushing.iter().all(|&f| f == 0);
        if tasks.is_empty() && idle && self.queued > 0 {
            let victim = (0..self.usage.len())
                .max_by_key(|&i| (self.usage[i] - self.flushing[i], std::cmp::Reverse(i)));
            if let Some(i) = victim {
                let bytes = self.usage[i] - self.flushing[i];
                if bytes > 0 {
                    self.flushing[i] += bytes;
                    tasks.push(FlushTask {
                        client: ClientId(i as u32),
                        num_segments: 1,
                        bytes,
                    });
                }
            }
        }
        tasks
    }

    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let used: u128 = self.usage.iter().map(|&u| u as u128).sum();
        let total = used + self.reserved_free as u128 + self.global_free as u128;
        if total != self.capacity as u128 {
            return Err(format!(
                "pool conservation broken: {total} != {}",
                self.capacity
            ));
        }
        let held: u64 = self.held.iter().sum();
        if self.reserved_free + held != self.rho_total {
            return Err(format!(
                "reserved pool broken: {} free + {held} held != {}",
                self.reserved_free, self.rho_total
            ));
        }
        for i in 0..self.usage.len() {
            if self.held[i] > self.usage[i] || (self.rho[i] == 0 && self.held[i] > 0) {
                return Err(format!("client c{i} holds {} reserved bytes", self.held[i]));
            }
        }
        if self.global_free > self.global_capacity() {
            return Err("global_free above G".into());
        }
        if self.flushing.iter().zip(&self.usage).any(|(f, u)| f > u) {
            return Err("flushing more than used".into());
        }
        Ok(())
    }
}
