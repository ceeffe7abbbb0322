//! Domain types shared by every policy and the simulator.
//!
//! Bytes are `u64`, durations are integer nanoseconds, bandwidths are bytes
//! per second. Everything here is immutable once a scenario is built.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::units::Delay;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClientId(pub u32);

impl ClientId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Per-client delays replacing the global ones; `None` inherits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayOverride {
    pub buffer: Option<Delay>,
    pub cache: Option<Delay>,
}

/// The two tunables: per-resource maximum delays and the ramp-up threshold `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaConfig {
    pub delta_buffer: Delay,
    pub delta_cache: Delay,
    pub per_client_overrides: BTreeMap<ClientId, DelayOverride>,
    pub ramp_up_threshold_k: u32,
}

impl DeltaConfig {
    pub fn uniform(delta_buffer: Delay, delta_cache: Delay, k: u32) -> Self {
        Self {
            delta_buffer,
            delta_cache,
            per_client_overrides: BTreeMap::new(),
            ramp_up_threshold_k: k,
        }
    }

    pub fn buffer_delay(&self, client: ClientId) -> Delay {
        self.per_client_overrides
            .get(&client)
            .and_then(|d| d.buffer)
            .unwrap_or(self.delta_buffer)
    }

    pub fn cache_delay(&self, client: ClientId) -> Delay {
        self.per_client_overrides
            .get(&client)
            .and_then(|d| d.cache)
            .unwrap_or(self.delta_cache)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub buffer_capacity: u64,
    pub segment_size: u64,
    pub cache_capacity: u64,
    pub write_bw: u64,
    pub read_bw: u64,
    pub amp_factor: f64,
    /// Share of each I/O direction set aside for compactions.
    pub compaction_fraction: f64,
}

impl ResourceSpec {
    /// Write bandwidth left for foreground traffic and flushes.
    pub fn client_write_bw(&self) -> u64 {
        (self.write_bw as f64 * (1.0 - self.compaction_fraction)).floor() as u64
    }

    pub fn client_read_bw(&self) -> u64 {
        (self.read_bw as f64 * (1.0 - self.compaction_fraction)).floor() as u64
    }
}

/// Per-client fair shares of the buffer and the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairShareVector {
    pub buffer: Vec<u64>,
    pub cache: Vec<u64>,
    pub weights: Option<Vec<f64>>,
}

impl FairShareVector {
    pub fn equal(n: usize, spec: &ResourceSpec) -> Self {
        let n64 = n.max(1) as u64;
        Self {
            buffer: vec![spec.buffer_capacity / n64; n],
            cache: vec![spec.cache_capacity / n64; n],
            weights: None,
        }
    }

    /// Weight-proportional shares, each rounded down to a whole byte.
    pub fn weighted(weights: &[f64], spec: &ResourceSpec) -> Self {
        let total: f64 = weights.iter().sum();
        let split = |cap: u64| -> Vec<u64> {
            weights
                .iter()
                .map(|w| ((cap as f64) * w / total).floor() as u64)
                .collect()
        };
        Self {
            buffer: split(spec.buffer_capacity),
            cache: split(spec.cache_capacity),
            weights: Some(weights.to_vec()),
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }
}

/// Worst-case reclamation bandwidths fed into the reservation formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefillModel {
    /// Bytes/s available to flush segments while ramping clients reclaim.
    pub flush_budget: u64,
    /// Cached bytes/s that can be refilled, already divided by AMP but not by `k`.
    pub refill_budget: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }

    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            message: message.into(),
        });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pass() {
            return f.write_str("pass");
        }
        for v in &self.violations {
            writeln!(f, "{}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}

pub fn validate_scenario(
    spec: &ResourceSpec,
    shares: &FairShareVector,
    cfg: &DeltaConfig,
) -> ValidationReport {
    let mut r = ValidationReport::default();
    let n = shares.len();
    if n == 0 {
        r.fail("clients", "at least one client is required");
    }
    if shares.cache.len() != n {
        r.fail("clients", "buffer and cache share vectors differ in length");
    }
    let k = cfg.ramp_up_threshold_k;
    if k == 0 || k as usize > n.max(1) {
        r.fail("ramp_up_threshold_k", format!("k={k} must lie in 1..={n}"));
    }
    if spec.segment_size == 0 {
        r.fail("segment_size", "must be positive");
    } else if spec.buffer_capacity == 0 || spec.buffer_capacity % spec.segment_size != 0 {
        r.fail(
            "buffer_capacity",
            "must be a positive multiple of segment_size",
        );
    }
    if spec.cache_capacity == 0 {
        r.fail("cache_capacity", "must be positive");
    }
    if spec.write_bw == 0 {
        r.fail("write_bw", "must be positive");
    }
    if spec.read_bw == 0 {
        r.fail("read_bw", "must be positive");
    }
    if !(spec.amp_factor >= 1.0) {
        r.fail("amp_factor", "must be at least 1");
    }
    if !(0.0..1.0).contains(&spec.compaction_fraction) {
        r.fail("compaction_fraction", "must lie in [0, 1)");
    }
    if shares.buffer.iter().chain(&shares.cache).any(|&f| f == 0) {
        r.fail("shares", "every fair share must be positive");
    }
    let buf_sum: u128 = shares.buffer.iter().map(|&f| f as u128).sum();
    let cache_sum: u128 = shares.cache.iter().map(|&f| f as u128).sum();
    if buf_sum > spec.buffer_capacity as u128 {
        r.fail(
            "shares exceed capacity",
            "buffer shares sum above buffer_capacity",
        );
    }
    if cache_sum > spec.cache_capacity as u128 {
        r.fail(
            "shares exceed capacity",
            "cache shares sum above cache_capacity",
        );
    }
    if let Some(w) = &shares.weights {
        if w.len() != n || w.iter().any(|&x| !(x > 0.0)) {
            r.fail("weights", "one positive weight per client required");
        }
    }
    for c in cfg.per_client_overrides.keys() {
        if c.index() >= n {
            r.fail("per_client_overrides", format!("unknown client {c}"));
        }
    }
    r
}

pub fn validate_refill(spec: &ResourceSpec, refill: &RefillModel) -> ValidationReport {
    let mut r = ValidationReport::default();
    if refill.flush_budget > spec.client_write_bw() {
        r.fail(
            "flush_budget",
            "exceeds write bandwidth left after the compaction carve-out",
        );
    }
    let max_refill = (spec.read_bw as f64 / spec.amp_factor.max(1.0)).floor() as u64;
    if refill.refill_budget > max_refill {
        r.fail("refill_budget", "exceeds read bandwidth divided by AMP");
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{GIB, MIB};

    pub(crate) fn micro_spec() -> ResourceSpec {
        ResourceSpec {
            buffer_capacity: 2 * GIB,
            segment_size: 64 * MIB,
            cache_capacity: 10 * GIB,
            write_bw: 1400 * MIB,
            read_bw: 1400 * MIB,
            amp_factor: 1.0,
            compaction_fraction: 0.3,
        }
    }

    #[test]
    fn buffer_microbenchmark_scenario_passes() {
        let spec = micro_spec();
        let shares = FairShareVector::equal(16, &spec);
        assert_eq!(shares.buffer[0], 128 * MIB);
        let cfg = DeltaConfig::uniform(Delay::from_millis(350), Delay::Unbounded, 2);
        let report = validate_scenario(&spec, &shares, &cfg);
        assert!(report.is_pass(), "{report}");
    }

    #[test]
    fn zero_k_is_rejected() {
        let spec = micro_spec();
        let shares = FairShareVector::equal(16, &spec);
        let cfg = DeltaConfig::uniform(Delay::ZERO, Delay::ZERO, 0);
        assert!(validate_scenario(&spec, &shares, &cfg).mentions("ramp_up_threshold_k"));
    }

    #[test]
    fn oversubscribed_shares_are_rejected() {
        let spec = micro_spec();
        let mut shares = FairShareVector::equal(16, &spec);
        shares.buffer = vec![192 * MIB; 16]; // 3 GiB over a 2 GiB buffer
        let cfg = DeltaConfig::uniform(Delay::ZERO, Delay::ZERO, 2);
        assert!(validate_scenario(&spec, &shares, &cfg).mentions("shares exceed capacity"));
    }

    #[test]
    fn capacity_must_be_segment_multiple() {
        let mut spec = micro_spec();
        spec.buffer_capacity = 2 * GIB + 1;
        let shares = FairShareVector::equal(16, &spec);
        let cfg = DeltaConfig::uniform(Delay::ZERO, Delay::ZERO, 2);
        assert!(validate_scenario(&spec, &shares, &cfg).mentions("buffer_capacity"));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = DeltaConfig::uniform(Delay::from_millis(350), Delay::from_millis(250), 2);
        let only_buffer = DelayOverride {
            buffer: Some(Delay::Unbounded),
            cache: None,
        };
        cfg.per_client_overrides.insert(ClientId(3), only_buffer);
        assert_eq!(cfg.buffer_delay(ClientId(3)), Delay::Unbounded);
        assert_eq!(cfg.buffer_delay(ClientId(0)), Delay::from_millis(350));
        cfg.delta_cache = Delay::ZERO;
        assert_eq!(
            cfg.cache_delay(ClientId(3)),
            Delay::ZERO,
            "cache inherits the global delay"
        );
    }

    #[test]
    fn refill_budget_bounded_by_amplified_read_rate() {
        let mut spec = micro_spec();
        spec.amp_factor = 2.0;
        let ok = RefillModel {
            flush_budget: 380 * MIB,
            refill_budget: 700 * MIB,
        };
        assert!(validate_refill(&spec, &ok).is_pass());
        let bad = RefillModel {
            flush_budget: 990 * MIB,
            refill_budget: 701 * MIB,
        };
        let r = validate_refill(&spec, &bad);
        assert!(r.mentions("flush_budget") && r.mentions("refill_budget"));
    }
}
