//! Planted ramp overlap -> simulated clients -> observed trace -> estimated k.

use std::fmt::Write;

use super::Finding;
use crate::scenario::parse_scenario;
use crate::sim::run_scenario;
use crate::sim::tracegen::{plan_overlapping_ramps, trace_from_record, RampPlan};
use crate::trace::{detect_ramp_events, estimate_k, DEFAULT_RAMP_FLOOR};
use crate::units::{MIB, NANOS_PER_MS, NANOS_PER_SEC};
use crate::Result;

const N: usize = 64;
const RATE_MIB: u64 = 32;

/// One writer per planned client, active only while its ramps run.
fn scenario_text(plan: &RampPlan) -> String {
    let mut s = String::new();
    let ms = |ns: u64| ns / NANOS_PER_MS;
    writeln!(
        s,
        "name = \"kloop\"\n\
         [resources]\nbuffer_capacity = \"{}MiB\"\nsegment_size = \"64MiB\"\ncache_capacity = \"1GiB\"\n\
         write_bw = \"4096MiB/s\"\nread_bw = \"1024MiB/s\"\n\
         [refill]\nflush_budget = \"1024MiB/s\"\nrefill_budget = \"256MiB/s\"\n\
         [delta]\nbuffer = \"inf\"\ncache = \"inf\"\nk = 1\n\
         [sim]\nduration = \"{}ms\"\ncompaction_ratio = 0.0",
        64 * N,
        ms(plan.horizon)
    )
    .unwrap();
    for phases in plan.phases() {
        writeln!(
            s,
            "[[clients]]\nkind = \"ramp_up\"\nrate = \"{RATE_MIB}MiB/s\"\nwrite = 1.0\nrecord_size = \"64KiB\""
        )
        .unwrap();
        for ph in phases {
            let stop = ph.stop.expect("planned ramps end");
            writeln!(
                s,
                "[[clients.phases]]\nstart = \"{}ms\"\nstop = \"{}ms\"",
                ms(ph.start),
                ms(stop)
            )
            .unwrap();
        }
    }
    s
}

pub(crate) fn closed_loop() -> Result<Finding> {
    let window = NANOS_PER_SEC;
    let interval = 100 * NANOS_PER_MS;
    let mut parts = Vec::new();
    for m in [1usize, 2, 4, 6] {
        let plan = plan_overlapping_ramps(N, m, window, interval, 10 + m as u64)?;
        let sc = parse_scenario(&scenario_text(&plan), "kloop")?;
        let rec = run_scenario(&sc)?;
        let trace = trace_from_record(&rec, N)?;
        // a ramp has arrived once a window carries half the offered rate
        let shares = vec![RATE_MIB * MIB / 2; N];
        let events = detect_ramp_events(&trace, &shares, DEFAULT_RAMP_FLOOR)?;
        let k = estimate_k(&events, window);
        let mut ok = k as usize == m && events.len() == N;
        let mut detail = format!("m={m}: k={k} from {} ramps", events.len());
        if m == 6 {
            let frac = 100.0 * m as f64 / N as f64;
            ok &= (8.0..=10.0).contains(&frac);
            write!(detail, " ({frac:.1}% of {N} clients ramping together)").unwrap();
        }
        parts.push(Finding::new(ok, detail));
    }
    Ok(Finding::all(parts))
}
