use deltafair::config::ClientId;
use deltafair::metrics::{order_statistic, LatencySummary};
use deltafair::trace::{estimate_k, RampEvent};
use proptest::prelude::*;

/// Nearest-rank percentile: the smallest sample with at least `p` percent of samples at or below it.
fn naive_percentile(xs: &[u64], p: u64) -> u64 {
    let mut s = xs.to_vec();
    s.sort_unstable();
    *s.iter()
        .find(|&&x| s.iter().filter(|&&y| y <= x).count() as u64 * 100 >= p * s.len() as u64)
        .unwrap()
}

fn events() -> impl Strategy<Value = Vec<RampEvent>> {
    proptest::collection::vec((0u32..12, 0u64..10_000, 0u64..500), 0..40).prop_map(|v| {
        v.into_iter()
            .map(|(c, start, len)| RampEvent {
                client: ClientId(c),
                start,
                end: start + len,
            })
            .collect()
    })
}

/// Distinct clients whose `[start, end]` meets `[s, s + w]`, maximized over
/// every window start where the answer can change.
fn naive_k(events: &[RampEvent], w: u64) -> u32 {
    let candidates = events
        .iter()
        .flat_map(|e| [e.start.saturating_sub(w), e.end]);
    let best = candidates
        .map(|s| {
            let mut cs: Vec<u32> = events
                .iter()
                .filter(|e| e.start <= s + w && e.end >= s)
                .map(|e| e.client.0)
                .collect();
            cs.sort_unstable();
            cs.dedup();
            cs.len() as u32
        })
        .max()
        .unwrap_or(0);
    best.max(1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn p99_matches_nearest_rank(xs in proptest::collection::vec(0u64..1_000_000, 1..300)) {
        let s = LatencySummary::from_samples(&xs);
        prop_assert_eq!(s.p99_ns, naive_percentile(&xs, 99));
        prop_assert_eq!(s.p50_ns, naive_percentile(&xs, 50));
        prop_assert_eq!(s.max_ns, *xs.iter().max().unwrap());
        prop_assert_eq!(s.count, xs.len() as u64);
        prop_assert!(s.p50_ns <= s.p99_ns && s.p99_ns <= s.max_ns);
    }

    #[test]
    fn order_statistic_ranks(mut xs in proptest::collection::vec(any::<u64>(), 1..100), num in 1u64..100) {
        xs.sort_unstable();
        let v = order_statistic(&xs, num, 100).unwrap();
        prop_assert_eq!(v, naive_percentile(&xs, num));
    }

    #[test]
    fn k_matches_window_scan(ev in events(), w in 1u64..2000) {
        prop_assert_eq!(estimate_k(&ev, w), naive_k(&ev, w));
    }

    #[test]
    fn k_bounded_and_monotone_in_window(ev in events(), w1 in 1u64..2000, w2 in 1u64..2000) {
        let clients = {
            let mut c: Vec<u32> = ev.iter().map(|e| e.client.0).collect();
            c.sort_unstable();
            c.dedup();
            c.len().max(1) as u32
        };
        let (lo, hi) = (w1.min(w2), w1.max(w2));
        let (klo, khi) = (estimate_k(&ev, lo), estimate_k(&ev, hi));
        prop_assert!(klo >= 1 && khi <= clients);
        prop_assert!(klo <= khi);
    }
}

#[test]
fn empty_summary_is_zero() {
    assert_eq!(LatencySummary::from_samples(&[]).count, 0);
    assert_eq!(order_statistic(&[], 99, 100), None);
}
