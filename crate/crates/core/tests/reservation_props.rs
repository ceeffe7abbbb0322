use deltafair::reservation::{
    compose_delays, compute_buffer_reservation, compute_cache_reservation,
    compute_reservations_generic, Composition,
};
use deltafair::units::{Delay, MIB};
use proptest::prelude::*;

/// Time to flush `bytes` in whole segments at `budget / k`, compared in exact integers.
fn fits(bytes: u64, segment: u64, budget: u64, k: u32, delta_ms: u64) -> bool {
    let segs = bytes.div_ceil(segment) as u128;
    // segs * B / (budget / k) <= delta_ms / 1000
    segs * segment as u128 * k as u128 * 1000 <= budget as u128 * delta_ms as u128
}

/// Tries every reservation from zero upward in byte steps of the residual's segment grid.
fn oracle(f: u64, segment: u64, budget: u64, k: u32, delta_ms: u64) -> u64 {
    (0..=f.div_ceil(segment))
        .map(|m| f.saturating_sub(m * segment))
        .chain([0])
        .filter(|&rho| fits(f - rho, segment, budget, k, delta_ms))
        .min()
        .unwrap_or(f)
}

fn bounded() -> impl Strategy<Value = u64> {
    0u64..3000
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn buffer_matches_linear_scan(
        seg_mib in 1u64..128, f_segs in 0u64..40, extra in 0u64..MIB,
        budget_mib in 1u64..2048, k in 1u32..16, delta_ms in bounded(),
    ) {
        let segment = seg_mib * MIB;
        let f = f_segs * segment + extra;
        let budget = budget_mib * MIB;
        let rho = compute_buffer_reservation(f, segment, budget, k, Delay::from_millis(delta_ms)).unwrap();
        prop_assert_eq!(rho, oracle(f, segment, budget, k, delta_ms));
        prop_assert!(rho <= f);
        if rho > 0 {
            let step = if rho < segment { 1 } else { segment };
            prop_assert!(!fits(f - (rho - step), segment, budget, k, delta_ms));
        }
    }

    #[test]
    fn buffer_monotone(
        f in 1u64..(4096 * MIB), seg_mib in 1u64..128, budget_mib in 1u64..2048,
        k in 1u32..16, d1 in bounded(), d2 in bounded(),
    ) {
        let segment = seg_mib * MIB;
        let budget = budget_mib * MIB;
        let r = |f: u64, b: u64, k: u32, d: u64| compute_buffer_reservation(f, segment, b, k, Delay::from_millis(d)).unwrap();
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        prop_assert!(r(f, budget, k, lo) >= r(f, budget, k, hi));
        prop_assert!(r(f, budget, k, lo) >= r(f, budget * 2, k, lo));
        prop_assert!(r(f, budget, k, lo) <= r(f, budget, k + 1, lo));
        prop_assert!(r(f, budget, k, lo) <= r(f + segment, budget, k, lo));
    }

    #[test]
    fn cache_matches_fluid_formula(
        f in 0u64..(1 << 40), budget in 1u64..(1 << 32), k in 1u32..64, delta_ms in bounded(),
    ) {
        let rho = compute_cache_reservation(f, budget, k, Delay::from_millis(delta_ms)).unwrap();
        let reclaim = budget as u128 * delta_ms as u128 / (1000 * k as u128);
        prop_assert_eq!(rho as u128, (f as u128).saturating_sub(reclaim));
        let more = compute_cache_reservation(f, budget, k + 1, Delay::from_millis(delta_ms)).unwrap();
        prop_assert!(more >= rho);
    }

    #[test]
    fn boundary_identities(f in 0u64..(1 << 40), seg_mib in 1u64..128, budget in 1u64..(1 << 32), k in 1u32..64) {
        let segment = seg_mib * MIB;
        prop_assert_eq!(compute_buffer_reservation(f, segment, budget, k, Delay::from_millis(0)).unwrap(), f);
        prop_assert_eq!(compute_buffer_reservation(f, segment, budget, k, Delay::Unbounded).unwrap(), 0);
        prop_assert_eq!(compute_cache_reservation(f, budget, k, Delay::from_millis(0)).unwrap(), f);
        prop_assert_eq!(compute_cache_reservation(f, budget, k, Delay::Unbounded).unwrap(), 0);
        let g = compute_reservations_generic(&[f], budget, Delay::Unbounded);
        prop_assert_eq!(g.rho[0], 0);
    }

    #[test]
    fn weighted_scaling_within_one_segment(f in 1u64..(1024 * MIB), budget_mib in 1u64..1024, k in 1u32..8, d in bounded(), scale in 1u64..5) {
        let segment = 16 * MIB;
        let budget = budget_mib * MIB;
        let base = compute_buffer_reservation(f, segment, budget, k, Delay::from_millis(d)).unwrap();
        let scaled = compute_buffer_reservation(f * scale, segment * scale, budget * scale, k, Delay::from_millis(d)).unwrap();
        prop_assert!(scaled.abs_diff(base * scale) <= segment * scale);
    }

    #[test]
    fn composition_orders(mut ds in proptest::collection::vec(0u64..5000, 1..8), inf in any::<bool>()) {
        let mut delays: Vec<Delay> = ds.iter().map(|&d| Delay::from_millis(d)).collect();
        if inf {
            delays.push(Delay::Unbounded);
        }
        let seq = compose_delays(&delays, Composition::Sequential).unwrap();
        let par = compose_delays(&delays, Composition::Parallel).unwrap();
        if inf {
            prop_assert!(seq.is_unbounded() && par.is_unbounded());
        } else {
            prop_assert_eq!(seq, Delay::from_millis(ds.iter().sum()));
            prop_assert_eq!(par, Delay::from_millis(*ds.iter().max().unwrap()));
        }
        ds.reverse();
        let rev: Vec<Delay> = ds.iter().map(|&d| Delay::from_millis(d)).chain(inf.then_some(Delay::Unbounded)).collect();
        prop_assert_eq!(compose_delays(&rev, Composition::Sequential).unwrap(), seq);
        prop_assert_eq!(compose_delays(&rev, Composition::Parallel).unwrap(), par);
    }
}

#[test]
fn segment_example_from_residual_grid() {
    // 100 MiB share, 64 MiB segments, 64 MiB/s for one second: one segment reclaimable
    let rho =
        compute_buffer_reservation(100 * MIB, 64 * MIB, 64 * MIB, 1, Delay::from_millis(1000))
            .unwrap();
    assert_eq!(rho, 36 * MIB);
    assert_eq!(rho, oracle(100 * MIB, 64 * MIB, 64 * MIB, 1, 1000));
}

#[test]
fn empty_composition_is_an_error() {
    assert!(compose_delays(&[], Composition::Sequential).is_err());
}
