//! Deterministic discrete-event simulator of a multi-tenant key-value store.
//!
//! Clients issue open-loop reads and writes. Writes go through the write
//! buffer manager and come back out as flush I/O; reads go through the read
//! cache and misses become fetch I/O. Both kinds of I/O share the fair
//! scheduler. Time advances in fixed ticks; events inside a tick carry
//! nanosecond timestamps.

pub mod clock;
pub mod runner;
pub mod sweep;
pub mod tracegen;
pub mod workload;

use serde::Serialize;

use crate::config::{
    validate_refill, validate_scenario, DeltaConfig, FairShareVector, RefillModel, ResourceSpec,
};
use crate::error::{Error, Result};
use crate::units::{KIB, MIB, NANOS_PER_MS, NANOS_PER_SEC};

pub use clock::SimClock;
pub use runner::{run_composition_scenario, run_scenario};
pub use sweep::{
    apply_all, run_point, sweep, sweep_markdown, write_sweep_csv, SweepParam, SweepPoint, SweepRow,
};
pub use workload::{Burst, ClientKind, ClientProfile, KeyGen, Phase};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimParams {
    pub seed: u64,
    pub duration: u64,
    /// Latency samples and throughput before this time are discarded.
    pub warmup: u64,
    pub tick: u64,
    pub window: u64,
    /// Cache page size; every reading client's record size must match it.
    pub page_size: u64,
    /// A client starts flushing once its unflushed bytes reach this fraction of its share.
    pub flush_trigger: f64,
    /// Flushed bytes return to the buffer in chunks of this size.
    pub flush_chunk: u64,
    /// Compaction bytes generated per flushed byte.
    pub compaction_ratio: f64,
    pub work_conserving: bool,
    pub cache_shards: usize,
    /// Open-loop operations are dropped while a client has this many bytes waiting.
    pub max_outstanding: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            seed: 1,
            duration: 10 * NANOS_PER_SEC,
            warmup: 0,
            tick: NANOS_PER_MS,
            window: 100 * NANOS_PER_MS,
            page_size: 4 * KIB,
            flush_trigger: 0.5,
            flush_chunk: MIB,
            compaction_ratio: 0.25,
            work_conserving: false,
            cache_shards: crate::read_cache::CacheState::DEFAULT_SHARDS,
            max_outstanding: 64 * MIB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub spec: ResourceSpec,
    pub shares: FairShareVector,
    pub delta: DeltaConfig,
    pub refill: RefillModel,
    pub clients: Vec<ClientProfile>,
    pub params: SimParams,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.clients.len()
    }

    /// Checks everything a run depends on and returns the first failure.
    pub fn validate(&self) -> Result<()> {
        let mut report = validate_scenario(&self.spec, &self.shares, &self.delta);
        report.merge(validate_refill(&self.spec, &self.refill));
        if !report.is_pass() {
            return Err(Error::Invalid(report.to_string().trim_end().to_string()));
        }
        if self.clients.len() != self.shares.len() {
            return Err(Error::Invalid("one profile per fair share required".into()));
        }
        let p = &self.params;
        if p.tick == 0
            || p.window == 0
            || p.flush_chunk == 0
            || p.page_size == 0
            || p.cache_shards == 0
        {
            return Err(Error::Invalid(
                "tick, window, flush_chunk, page_size and shards must be positive".into(),
            ));
        }
        if p.warmup >= p.duration {
            return Err(Error::Invalid("warmup must end before the run does".into()));
        }
        if !(p.flush_trigger > 0.0 && p.flush_trigger <= 1.0) {
            return Err(Error::Invalid("flush_trigger must lie in (0, 1]".into()));
        }
        for (i, c) in self.clients.iter().enumerate() {
            c.validate()
                .map_err(|e| Error::Invalid(format!("client c{i}: {e}")))?;
            let reads = c.read_fraction + c.scan_fraction > 0.0
                || c.schedule
                    .iter()
                    .any(|ph| ph.burst.is_some_and(|b| b.read > 0));
            if reads && c.record_size != p.page_size {
                return Err(Error::Invalid(format!(
                    "client c{i}: record_size must equal the cache page size"
                )));
            }
            for ph in &c.schedule {
                if let Some(b) = ph.burst {
                    if b.ramp && b.write > self.spec.buffer_capacity {
                        return Err(Error::ExceedsCapacity {
                            size: b.write,
                            capacity: self.spec.buffer_capacity,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}
