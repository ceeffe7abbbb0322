//! Minimal reservations.
//!
//! A client's reservation is the part of its fair share that cannot be
//! reclaimed within its delay bound at the worst-case refill rate, so it is
//! withheld from redistribution even while unused:
//!
//! ```text
//! rho = max(f - reclaimable(delta), 0)
//! ```
//!
//! The write buffer reclaims whole segments, so its reclaimable amount is
//! rounded down to a multiple of the segment size. The cache refills page by
//! page and stays byte-granular. Both divide the refill bandwidth by `k`, the
//! number of clients that may ramp up at the same time.

use serde::{Deserialize, Serialize};

use crate::config::{DeltaConfig, FairShareVector, RefillModel, ResourceSpec};
use crate::error::{Error, Result};
use crate::units::{Delay, NANOS_PER_SEC};

/// Bytes a rate can move within a delay. `None` means unlimited.
fn reclaimable(rate: u64, k: u32, delta: Delay) -> Option<u128> {
    let ns = delta.nanos()?;
    Some(rate as u128 * ns as u128 / (k.max(1) as u128 * NANOS_PER_SEC as u128))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenericReservation {
    pub rho: Vec<u64>,
    pub max_reclaimed: Vec<u64>,
}

/// Resource-agnostic form: `maxReclaimed = r_min * delta`, `rho = max(f - maxReclaimed, 0)`.
///
/// Ignores reclamation granularity; the buffer and cache forms below are the
/// ones the managers use.
pub fn compute_reservations_generic(
    shares: &[u64],
    r_min: u64,
    delta: Delay,
) -> GenericReservation {
    let mut rho = Vec::with_capacity(shares.len());
    let mut max_reclaimed = Vec::with_capacity(shares.len());
    for &f in shares {
        match reclaimable(r_min, 1, delta) {
            None => {
                rho.push(0);
                max_reclaimed.push(f);
            }
            Some(bytes) => {
                let bytes = bytes.min(u64::MAX as u128) as u64;
                rho.push(f.saturating_sub(bytes));
                max_reclaimed.push(bytes);
            }
        }
    }
    GenericReservation { rho, max_reclaimed }
}

/// Smallest buffer reservation whose residual `f - rho` can be flushed, in whole
/// segments of `segment`, at `flush_budget / k` within `delta`.
pub fn compute_buffer_reservation(
    f: u64,
    segment: u64,
    flush_budget: u64,
    k: u32,
    delta: Delay,
) -> Result<u64> {
    assert!(segment > 0, "segment size must be positive");
    assert!(k >= 1, "k must be at least 1");
    if delta.is_unbounded() || f == 0 {
        return Ok(0);
    }
    if flush_budget == 0 {
        return Err(Error::Unreclaimable);
    }
    let bytes = reclaimable(flush_budget, k, delta).unwrap_or(0);
    let segments = bytes / segment as u128;
    let freed = segments * segment as u128;
    if freed >= f as u128 {
        Ok(0)
    } else {
        Ok(f - freed as u64)
    }
}

/// Smallest cache threshold whose residual can be refilled at `refill_budget / k`
/// within `delta`. `refill_budget` already accounts for read amplification.
pub fn compute_cache_reservation(f: u64, refill_budget: u64, k: u32, delta: Delay) -> Result<u64> {
    assert!(k >= 1, "k must be at least 1");
    if delta.is_unbounded() || f == 0 {
        return Ok(0);
    }
    if refill_budget == 0 {
        return Err(Error::Unreclaimable);
    }
    let bytes = reclaimable(refill_budget, k, delta).unwrap_or(0);
    Ok((f as u128).saturating_sub(bytes) as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservationPlan {
    pub rho_buffer: Vec<u64>,
    pub rho_cache: Vec<u64>,
    pub max_reclaimable_buffer: Vec<u64>,
    pub max_reclaimable_cache: Vec<u64>,
    pub rho_buffer_total: u64,
    pub rho_cache_total: u64,
}

impl ReservationPlan {
    /// No reservations at all; plain fair sharing.
    pub fn empty(n: usize) -> Self {
        Self {
            rho_buffer: vec![0; n],
            rho_cache: vec![0; n],
            max_reclaimable_buffer: vec![0; n],
            max_reclaimable_cache: vec![0; n],
            rho_buffer_total: 0,
            rho_cache_total: 0,
        }
    }

    pub fn buffer_percent(&self, capacity: u64) -> f64 {
        100.0 * self.rho_buffer_total as f64 / capacity as f64
    }

    pub fn cache_percent(&self, capacity: u64) -> f64 {
        100.0 * self.rho_cache_total as f64 / capacity as f64
    }
}

/// Per-client reservations for both resources, honoring per-client delay overrides.
pub fn plan_reservations(
    spec: &ResourceSpec,
    shares: &FairShareVector,
    cfg: &DeltaConfig,
    refill: &RefillModel,
) -> Result<ReservationPlan> {
    let n = shares.len();
    let k = cfg.ramp_up_threshold_k;
    let mut plan = ReservationPlan::empty(n);
    for i in 0..n {
        let c = crate::config::ClientId(i as u32);
        let (fb, fc) = (shares.buffer[i], shares.cache[i]);
        let (db, dc) = (cfg.buffer_delay(c), cfg.cache_delay(c));
        let rb = compute_buffer_reservation(fb, spec.segment_size, refill.flush_budget, k, db)?;
        let rc = compute_cache_reservation(fc, refill.refill_budget, k, dc)?;
        plan.rho_buffer[i] = rb;
        plan.rho_cache[i] = rc;
        plan.max_reclaimable_buffer[i] = fb - rb;
        plan.max_reclaimable_cache[i] = fc - rc;
    }
    plan.rho_buffer_total = plan.rho_buffer.iter().sum();
    plan.rho_cache_total = plan.rho_cache.iter().sum();
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    Sequential,
    Parallel,
}

/// End-to-end delay bound for resources acquired one after another (sum) or
/// concurrently (max).
pub fn compose_delays(deltas: &[Delay], mode: Composition) -> Result<Delay> {
    if deltas.is_empty() {
        return Err(Error::EmptyDelays);
    }
    let mut bounded = Vec::with_capacity(deltas.len());
    for d in deltas {
        match d {
            Delay::Unbounded => return Ok(Delay::Unbounded),
            Delay::Bounded(ns) => bounded.push(*ns),
        }
    }
    let ns = match mode {
        Composition::Sequential => bounded.iter().sum(),
        Composition::Parallel => bounded.into_iter().max().unwrap_or(0),
    };
    Ok(Delay::Bounded(ns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{GIB, MIB};

    const MB: u64 = 1_000_000;

    #[test]
    fn generic_worked_example() {
        let r = compute_reservations_generic(&[100 * MB], 50 * MB, Delay::from_millis(200));
        assert_eq!(r.rho, vec![90 * MB]);
        assert_eq!(r.max_reclaimed, vec![10 * MB]);
    }

    #[test]
    fn generic_limits() {
        let inf = compute_reservations_generic(&[100 * MB], 50 * MB, Delay::Unbounded);
        assert_eq!(inf.rho, vec![0]);
        let zero = compute_reservations_generic(&[100 * MB], 50 * MB, Delay::ZERO);
        assert_eq!(zero.rho, vec![100 * MB]);
    }

    #[test]
    fn buffer_rounds_to_whole_segments() {
        let f = 128 * MIB;
        let b = 64 * MIB;
        let rho = compute_buffer_reservation(f, b, 380 * MIB, 2, Delay::from_millis(350)).unwrap();
        assert_eq!(rho, 64 * MIB);
        assert_eq!(2 * rho * 100 / (2 * GIB), 6); // 6.25%
        let rho0 = compute_buffer_reservation(f, b, 380 * MIB, 2, Delay::ZERO).unwrap();
        assert_eq!(rho0, 128 * MIB);
        let rho_inf = compute_buffer_reservation(f, b, 380 * MIB, 2, Delay::Unbounded).unwrap();
        assert_eq!(rho_inf, 0);
    }

    #[test]
    fn buffer_partial_segment_share() {
        let rho =
            compute_buffer_reservation(100 * MIB, 64 * MIB, 64 * MIB, 1, Delay::from_millis(1000))
                .unwrap();
        assert_eq!(rho, 36 * MIB);
    }

    #[test]
    fn zero_flush_budget_is_unreclaimable() {
        let err = compute_buffer_reservation(MIB, MIB, 0, 1, Delay::from_millis(5)).unwrap_err();
        assert!(matches!(err, Error::Unreclaimable));
        assert!(compute_cache_reservation(MIB, 0, 1, Delay::from_millis(5)).is_err());
        // nothing to reclaim when the delay is unbounded
        assert_eq!(
            compute_buffer_reservation(MIB, MIB, 0, 1, Delay::Unbounded).unwrap(),
            0
        );
    }

    #[test]
    fn cache_k_sweep_percentages() {
        let f = 320 * MB;
        let expected = [25.0, 62.5, 75.0, 81.25, 85.0, 87.5];
        for (k, want) in (1..=6).zip(expected) {
            let rho = compute_cache_reservation(f, 320 * MB, k, Delay::from_millis(750)).unwrap();
            assert_eq!(rho as f64 * 100.0 / f as f64, want, "k={k}");
        }
    }

    #[test]
    fn cache_delay_examples() {
        let f = 320 * MB;
        assert_eq!(
            compute_cache_reservation(f, 320 * MB, 1, Delay::from_millis(250)).unwrap(),
            240 * MB
        );
        assert_eq!(
            compute_cache_reservation(0, 320 * MB, 1, Delay::from_millis(250)).unwrap(),
            0
        );
    }

    #[test]
    fn composition() {
        let d = [Delay::from_millis(350), Delay::from_millis(250)];
        assert_eq!(
            compose_delays(&d, Composition::Sequential).unwrap(),
            Delay::from_millis(600)
        );
        assert_eq!(
            compose_delays(&d, Composition::Parallel).unwrap(),
            Delay::from_millis(350)
        );
        let one = [Delay::from_millis(7)];
        assert_eq!(
            compose_delays(&one, Composition::Sequential).unwrap(),
            one[0]
        );
        assert_eq!(compose_delays(&one, Composition::Parallel).unwrap(), one[0]);
        let with_inf = [Delay::from_millis(7), Delay::Unbounded];
        assert_eq!(
            compose_delays(&with_inf, Composition::Parallel).unwrap(),
            Delay::Unbounded
        );
        assert!(compose_delays(&[], Composition::Parallel).is_err());
    }
}
