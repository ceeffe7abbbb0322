//! Synthetic demand traces with a known maximum ramp overlap.
//!
//! Clients ramp in groups of `m`. Ramps inside a group start within a
//! quarter window of each other; groups are spaced far enough apart that
//! no window can touch two of them. The largest number of clients ramping
//! in any one window is therefore exactly `m`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Phase;
use crate::config::ClientId;
use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;
use crate::trace::DemandTrace;
use crate::units::NANOS_PER_SEC;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedRamp {
    pub client: ClientId,
    pub start: u64,
    pub stop: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RampPlan {
    pub n: usize,
    pub interval: u64,
    pub horizon: u64,
    pub ramps: Vec<PlannedRamp>,
}

/// Every client ramps once; at most `m` ramps fall within any `window`.
pub fn plan_overlapping_ramps(
    n: usize,
    m: usize,
    window: u64,
    interval: u64,
    seed: u64,
) -> Result<RampPlan> {
    if m == 0 || m > n {
        return Err(Error::Invalid(format!("overlap {m} must lie in 1..={n}")));
    }
    if interval == 0 || window < 8 * interval {
        return Err(Error::Invalid(
            "window must span at least 8 sampling intervals".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let len = window / 2;
    let spacing = 4 * window;
    let jitter = window / 4 / interval;
    let mut ramps = Vec::with_capacity(n);
    for (g, group) in order.chunks(m).enumerate() {
        // one interval of idle lead-in so every ramp rises from zero
        let base = interval + g as u64 * spacing;
        for &c in group {
            let start = base + rng.random_range(0..=jitter) * interval;
            ramps.push(PlannedRamp {
                client: ClientId(c as u32),
                start,
                stop: start + len,
            });
        }
    }
    let horizon = interval + n.div_ceil(m) as u64 * spacing;
    Ok(RampPlan {
        n,
        interval,
        horizon,
        ramps,
    })
}

impl RampPlan {
    /// Demand is `rate` while a ramp is active and zero otherwise.
    pub fn to_trace(&self, rate: u64) -> DemandTrace {
        let mut trace = DemandTrace::new(self.n, self.interval);
        for c in 0..self.n {
            let id = ClientId(c as u32);
            let mine: Vec<_> = self.ramps.iter().filter(|r| r.client == id).collect();
            let mut t = 0;
            while t < self.horizon {
                let on = mine.iter().any(|r| t >= r.start && t < r.stop);
                trace
                    .push(id, t, if on { rate } else { 0 })
                    .expect("timestamps increase");
                t += self.interval;
            }
        }
        trace
    }

    /// Per-client phases that make a simulated client active exactly during its ramps.
    pub fn phases(&self) -> Vec<Vec<Phase>> {
        let mut out = vec![Vec::new(); self.n];
        for r in &self.ramps {
            out[r.client.index()].push(Phase {
                start: r.start,
                stop: Some(r.stop),
                burst: None,
            });
        }
        out
    }
}

/// Observed per-window demand (bytes/s completed) of a simulation run.
pub fn trace_from_record(rec: &MetricsRecord, n: usize) -> Result<DemandTrace> {
    let first = rec
        .windows
        .first()
        .ok_or_else(|| Error::Trace("run has no windows".into()))?;
    let second = rec
        .windows
        .iter()
        .find(|w| w.window_start_ms > first.window_start_ms);
    let window_ns = second
        .map(|w| ((w.window_start_ms - first.window_start_ms) * 1e6).round() as u64)
        .ok_or_else(|| Error::Trace("run has a single window".into()))?;
    let mut trace = DemandTrace::new(n, window_ns);
    for w in &rec.windows {
        let t = (w.window_start_ms * 1e6).round() as u64;
        let bytes = w.read_bytes + w.write_bytes;
        let demand = (bytes as u128 * NANOS_PER_SEC as u128 / window_ns as u128) as u64;
        trace.push(w.client, t, demand)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{detect_ramp_events, estimate_k};

    #[test]
    fn planted_overlap_is_recovered() {
        let w = 10 * NANOS_PER_SEC;
        for m in [1, 2, 4, 6] {
            let plan = plan_overlapping_ramps(64, m, w, NANOS_PER_SEC, 7).unwrap();
            let trace = plan.to_trace(100);
            let ev = detect_ramp_events(&trace, &[100; 64], 0.1).unwrap();
            assert_eq!(ev.len(), 64);
            assert_eq!(estimate_k(&ev, w), m as u32);
        }
    }

    #[test]
    fn rejects_bad_overlap() {
        assert!(plan_overlapping_ramps(4, 5, 100, 1, 0).is_err());
        assert!(plan_overlapping_ramps(4, 0, 100, 1, 0).is_err());
    }
}
