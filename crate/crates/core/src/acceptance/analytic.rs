//! Closed-form reservation checks and the brute-force minimality oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bundled, Finding};
use crate::reservation::{
    compute_buffer_reservation, compute_cache_reservation, compute_reservations_generic,
    plan_reservations,
};
use crate::units::{Delay, MIB, NANOS_PER_SEC};
use crate::Result;

const MB: u64 = 1_000_000;

pub(crate) fn buffer_table() -> Result<Finding> {
    let sc = bundled("buffer_micro")?;
    let cap = sc.spec.buffer_capacity;
    let total = |ms: Option<u64>| -> Result<u64> {
        let mut cfg = sc.delta.clone();
        cfg.delta_buffer = ms.map_or(Delay::Unbounded, Delay::from_millis);
        Ok(plan_reservations(&sc.spec, &sc.shares, &cfg, &sc.refill)?.rho_buffer_total)
    };
    let mut parts = Vec::new();
    for (ms, want) in [(Some(0), cap / 8), (Some(350), cap / 16), (None, 0)] {
        let got = total(ms)?;
        let label = ms.map_or("inf".to_string(), |m| format!("{m} ms"));
        parts.push(Finding::new(
            got == want,
            format!(
                "{label}: {:.2}% (want {:.2}%)",
                pct(got, cap),
                pct(want, cap)
            ),
        ));
    }
    let row: Vec<u64> = [Some(0), Some(200), Some(350), Some(500), None]
        .into_iter()
        .map(total)
        .collect::<Result<_>>()?;
    let monotone = row.windows(2).all(|w| w[0] >= w[1]) && row[0] > row[4];
    parts.push(Finding::new(
        monotone,
        format!(
            "row 0/200/350/500/inf ms nonincreasing: {}",
            row.iter()
                .map(|&r| format!("{:.2}%", pct(r, cap)))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    ));
    Ok(Finding::all(parts))
}

pub(crate) fn cache_k_sweep() -> Result<Finding> {
    let f = 320 * MB;
    let want_bp = [2500u64, 6250, 7500, 8125, 8500, 8750];
    let mut got = Vec::new();
    let mut pass = true;
    for (k, &bp) in (1..=6).zip(&want_bp) {
        let rho = compute_cache_reservation(f, 320 * MB, k, Delay::from_millis(750))?;
        pass &= rho as u128 * 10_000 == bp as u128 * f as u128;
        got.push(format!("{}%", rho as f64 * 100.0 / f as f64));
    }
    Ok(Finding::new(pass, format!("k=1..6: {}", got.join(" "))))
}

pub(crate) fn worked_example() -> Result<Finding> {
    let plan = compute_reservations_generic(&[100 * MB], 50 * MB, Delay::from_millis(200));
    let rho = plan.rho[0];
    Ok(Finding::new(
        rho == 90 * MB,
        format!("rho = {} bytes (want 90 MB)", rho),
    ))
}

/// Whether keeping `rho` reserved leaves more than `delta` of flushing at
/// `flush_budget / k`, counting whole segments.
pub fn violates_bound(
    f: u64,
    segment: u64,
    flush_budget: u64,
    k: u32,
    delta: Delay,
    rho: u64,
) -> bool {
    let Some(ns) = delta.nanos() else {
        return false;
    };
    let segs = (f - rho).div_ceil(segment) as u128;
    segs * segment as u128 * k as u128 * NANOS_PER_SEC as u128 > flush_budget as u128 * ns as u128
}

/// Smallest reservation among `f - m*B` (and zero) that meets the bound, by linear scan.
pub fn brute_force_buffer_reservation(
    f: u64,
    segment: u64,
    flush_budget: u64,
    k: u32,
    delta: Delay,
) -> u64 {
    let mut best = f;
    let mut m = 0;
    while m * segment <= f {
        let rho = f - m * segment;
        if !violates_bound(f, segment, flush_budget, k, delta, rho) {
            best = best.min(rho);
        }
        m += 1;
    }
    if !violates_bound(f, segment, flush_budget, k, delta, 0) {
        best = 0;
    }
    best
}

pub(crate) fn minimality() -> Result<Finding> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cases = 10_000;
    for i in 0..cases {
        let segment = rng.random_range(1..=256) * MIB / rng.random_range(1..=8);
        let f = rng.random_range(1..=segment * 64);
        let budget = rng.random_range(1..=2048) * MIB;
        let k = rng.random_range(1..=64);
        let delta = if rng.random_bool(0.05) {
            Delay::Unbounded
        } else {
            Delay::from_millis(rng.random_range(0..=2000))
        };
        let rho = compute_buffer_reservation(f, segment, budget, k, delta)?;
        let oracle = brute_force_buffer_reservation(f, segment, budget, k, delta);
        let tuple = format!("f={f} B={segment} budget={budget} k={k} delta={delta}");
        if rho != oracle {
            return Ok(Finding::new(
                false,
                format!("case {i}: rho {rho} != oracle {oracle} for {tuple}"),
            ));
        }
        if rho > 0 {
            let smaller = rho.saturating_sub(if rho < segment { 1 } else { segment });
            if !violates_bound(f, segment, budget, k, delta, smaller) {
                return Ok(Finding::new(
                    false,
                    format!("case {i}: rho {rho} not minimal for {tuple}"),
                ));
            }
        }
    }
    Ok(Finding::new(
        true,
        format!("{cases} random tuples match the linear scan; rho - B always violates"),
    ))
}

fn pct(part: u64, whole: u64) -> f64 {
    100.0 * part as f64 / whole as f64
}
