//! Randomized delta-fairness scenarios.
//!
//! Each scenario has steady clients, one or two high-demand clients that
//! overload the resource, and at most `k` ramp-up clients that ramp together.
//! Only the ramp-up clients hold a finite delta. The refill budget is set
//! below the worst-case headroom the steady clients leave, which is what the
//! reservation formulas assume.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Finding;
use crate::scenario::parse_scenario;
use crate::sim::run_scenario;
use crate::units::{ms, Delay};
use crate::Result;

const CASES: u64 = 100;

#[derive(Debug, Clone)]
pub struct FairnessCase {
    pub seed: u64,
    /// Scenario file text.
    pub text: String,
    pub delta: Delay,
    pub rampers: usize,
    pub k: u32,
}

struct Mix {
    n: usize,
    k: usize,
    rampers: usize,
    hogs: usize,
    steady: usize,
}

fn mix(rng: &mut ChaCha8Rng) -> Mix {
    let n = rng.random_range(4..=32);
    let k = rng.random_range(1..=3.min(n - 2));
    let rampers = rng.random_range(1..=k);
    let hogs = rng.random_range(1..=2.min(n - rampers - 1));
    Mix {
        n,
        k,
        rampers,
        hogs,
        steady: n - rampers - hogs,
    }
}

fn header(
    s: &mut String,
    seed: u64,
    resources: &str,
    refill: (u64, u64),
    delta: (&str, &str),
    k: usize,
    duration_ms: u64,
) {
    writeln!(
        s,
        "name = \"fair{seed}\"\n[resources]\n{resources}compaction_fraction = 0.3\n\
         [refill]\nflush_budget = \"{}MiB/s\"\nrefill_budget = \"{}MiB/s\"\n\
         [delta]\nbuffer = \"{}\"\ncache = \"{}\"\nk = {k}\n\
         [sim]\nduration = \"{duration_ms}ms\"\nwarmup = \"500ms\"\ncompaction_ratio = 0.0\nseed = {seed}",
        refill.0, refill.1, delta.0, delta.1
    )
    .unwrap();
}

fn buffer_case(seed: u64, rng: &mut ChaCha8Rng) -> FairnessCase {
    let m = mix(rng);
    let segment = 16;
    let f = segment * rng.random_range(2..=8);
    let write_bw: u64 = rng.random_range(600..=1600);
    let lane = write_bw * 7 / 10;
    let steady_rate = (lane * rng.random_range(20..=60) / 100 / m.steady as u64).max(1);
    let budget = (lane - steady_rate * m.steady as u64) * 9 / 10;
    let delta = Delay::from_millis(rng.random_range(100..=600));
    let ramp_at = 2000;
    let mut s = String::new();
    let resources = format!(
        "buffer_capacity = \"{}MiB\"\nsegment_size = \"{segment}MiB\"\ncache_capacity = \"1GiB\"\n\
         write_bw = \"{write_bw}MiB/s\"\nread_bw = \"1024MiB/s\"\n",
        f * m.n as u64
    );
    header(
        &mut s,
        seed,
        &resources,
        (budget, 256),
        (&delta.to_string(), "inf"),
        m.k,
        ramp_at + 3000,
    );
    writeln!(
        s,
        "[[clients]]\ncount = {}\nkind = \"steady\"\nrate = \"{steady_rate}MiB/s\"\nwrite = 1.0\n\
         record_size = \"256KiB\"\ndelta_buffer = \"inf\"",
        m.steady
    )
    .unwrap();
    writeln!(
        s,
        "[[clients]]\ncount = {}\nkind = \"high_demand_writer\"\nrate = \"{}MiB/s\"\nwrite = 1.0\n\
         record_size = \"1MiB\"\ndelta_buffer = \"inf\"\n[[clients.phases]]\nstart = \"0s\"\n\
         burst = {{ write = \"{}MiB\" }}",
        m.hogs,
        lane / m.hogs as u64,
        f * m.n as u64
    )
    .unwrap();
    writeln!(
        s,
        "[[clients]]\ncount = {}\nkind = \"ramp_up\"\nwrite = 1.0\nrecord_size = \"256KiB\"\n\
         [[clients.phases]]\nstart = \"{ramp_at}ms\"\nburst = {{ write = \"{f}MiB\", ramp = true }}",
        m.rampers
    )
    .unwrap();
    FairnessCase {
        seed,
        text: s,
        delta,
        rampers: m.rampers,
        k: m.k as u32,
    }
}

fn cache_case(seed: u64, rng: &mut ChaCha8Rng) -> FairnessCase {
    let m = mix(rng);
    let f: u64 = rng.random_range(4..=16);
    let cache = f * m.n as u64;
    let read_bw: u64 = rng.random_range(300..=800);
    let lane = read_bw * 7 / 10;
    let steady_rate = (lane * rng.random_range(10..=40) / 100 / m.steady as u64).max(1);
    let spare = lane - steady_rate * m.steady as u64;
    let budget = (spare * m.k as u64 * 85 / 100 / (m.hogs + m.k) as u64).max(1);
    let delta = Delay::from_millis(rng.random_range(100..=500));
    let active_until = 1000;
    let idle = (1000 + cache * 1000 / spare).min(4000);
    let ramp_at = active_until + idle;
    let mut s = String::new();
    let resources = format!(
        "buffer_capacity = \"1GiB\"\nsegment_size = \"64MiB\"\ncache_capacity = \"{cache}MiB\"\n\
         write_bw = \"1024MiB/s\"\nread_bw = \"{read_bw}MiB/s\"\n"
    );
    header(
        &mut s,
        seed,
        &resources,
        (256, budget),
        ("inf", &delta.to_string()),
        m.k,
        ramp_at + 2000,
    );
    let reader = |s: &mut String, count: usize, kind: &str, rate: u64, ws: u64, zipf: f64| {
        writeln!(
            s,
            "[[clients]]\ncount = {count}\nkind = \"{kind}\"\nrate = \"{rate}MiB/s\"\nread = 1.0\n\
             record_size = \"4KiB\"\nworking_set = \"{ws}MiB\"\nzipf = {zipf}\nprewarm = true"
        )
        .unwrap();
    };
    reader(&mut s, m.steady, "steady", steady_rate, f, 0.99);
    writeln!(s, "delta_cache = \"inf\"").unwrap();
    reader(&mut s, m.hogs, "high_demand_reader", lane, 8 * cache, 0.0);
    writeln!(s, "delta_cache = \"inf\"").unwrap();
    reader(&mut s, m.rampers, "ramp_up", steady_rate, f, 0.99);
    writeln!(
        s,
        "[[clients.phases]]\nstart = \"0s\"\nstop = \"{active_until}ms\"\n\
         [[clients.phases]]\nstart = \"{ramp_at}ms\"\nburst = {{ read = \"{f}MiB\", ramp = true }}"
    )
    .unwrap();
    FairnessCase {
        seed,
        text: s,
        delta,
        rampers: m.rampers,
        k: m.k as u32,
    }
}

/// Even seeds exercise the write buffer, odd seeds the read cache.
pub fn random_fairness_scenario(seed: u64) -> FairnessCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if seed % 2 == 0 {
        buffer_case(seed, &mut rng)
    } else {
        cache_case(seed, &mut rng)
    }
}

/// Worst ramp p99 minus the allowed `delta + tick`, in ns; positive means violated.
pub fn fairness_excess(case: &FairnessCase) -> Result<(i64, u64)> {
    let sc = parse_scenario(&case.text, "fairness")?;
    let rec = run_scenario(&sc)?;
    let bound = case.delta.nanos().expect("bounded delta") + sc.params.tick;
    let mut worst = i64::MIN;
    let mut p99 = 0;
    for c in rec.clients.iter().filter(|c| c.kind == "ramp_up") {
        // a ramp that never completed is an unbounded delay
        let v = if c.ramp.count == 0 {
            u64::MAX / 2
        } else {
            c.ramp.p99_ns
        };
        p99 = p99.max(v);
        worst = worst.max(v as i64 - bound as i64);
    }
    Ok((worst, p99))
}

pub(crate) fn suite() -> Result<Finding> {
    let mut violations = Vec::new();
    let mut closest = f64::MAX;
    for seed in 0..CASES {
        let case = random_fairness_scenario(seed);
        let (excess, p99) = fairness_excess(&case)?;
        if excess > 0 {
            violations.push(format!(
                "seed {seed}: p99 {:.1} ms > delta {}",
                ms(p99),
                case.delta
            ));
        }
        closest = closest.min(-(excess as f64) / 1e6);
    }
    let detail = if violations.is_empty() {
        format!(
            "{CASES} scenarios, no ramp p99 above delta + 1 tick (tightest margin {closest:.1} ms)"
        )
    } else {
        format!(
            "{} of {CASES} violate: {}",
            violations.len(),
            violations.join(", ")
        )
    };
    Ok(Finding::new(violations.is_empty(), detail))
}
