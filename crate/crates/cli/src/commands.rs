use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use deltafair::acceptance::{criterion_ids, run_criterion};
use deltafair::config::ClientId;
use deltafair::reservation::{plan_reservations, Composition};
use deltafair::scenario::{load_scenario, ScenarioOverrides};
use deltafair::sim::{
    apply_all, run_point, sweep_markdown, write_sweep_csv, Scenario, SweepParam, SweepRow,
};
use deltafair::trace::{
    detect_ramp_events, estimate_k as estimate, overlap_histogram, DemandTrace,
};
use deltafair::units::{format_bytes, format_duration, ms, MIB};

fn load(path: &Path, over: &ScenarioOverrides) -> Result<Scenario> {
    load_scenario(path, over).with_context(|| format!("scenario {}", path.display()))
}

/// Percentages without trailing zeros: 6.25%, 12.5%, 0%.
pub fn percent(p: f64) -> String {
    let s = format!("{p:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}%")
}

pub fn plan(path: &Path, over: &ScenarioOverrides) -> Result<ExitCode> {
    let sc = load(path, over)?;
    let plan = plan_reservations(&sc.spec, &sc.shares, &sc.delta, &sc.refill)?;
    println!("scenario {}  k={}", sc.name, sc.delta.ramp_up_threshold_k);
    println!(
        "{:<6} {:<20} {:>12} {:>12} {:>12} {:>12}",
        "client", "kind", "f_buffer", "rho_buffer", "f_cache", "rho_cache"
    );
    for i in 0..sc.n() {
        println!(
            "{:<6} {:<20} {:>12} {:>12} {:>12} {:>12}",
            ClientId(i as u32).to_string(),
            sc.clients[i].kind.to_string(),
            format_bytes(sc.shares.buffer[i]),
            format_bytes(plan.rho_buffer[i]),
            format_bytes(sc.shares.cache[i]),
            format_bytes(plan.rho_cache[i]),
        );
    }
    println!(
        "buffer reservation total {} = {} of {}",
        format_bytes(plan.rho_buffer_total),
        percent(plan.buffer_percent(sc.spec.buffer_capacity)),
        format_bytes(sc.spec.buffer_capacity)
    );
    println!(
        "cache reservation total {} = {} of {}",
        format_bytes(plan.rho_cache_total),
        percent(plan.cache_percent(sc.spec.cache_capacity)),
        format_bytes(sc.spec.cache_capacity)
    );
    Ok(ExitCode::SUCCESS)
}

fn stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn run(
    path: &Path,
    over: &ScenarioOverrides,
    mode: Option<Composition>,
    out: &Path,
) -> Result<ExitCode> {
    let sc = load(path, over)?;
    let rec = run_point(&sc, mode)?;
    let stem = stem(&sc.name);
    rec.write_files(out, &stem)?;
    rec.validate_files(out, &stem)
        .context("output files failed validation")?;
    println!(
        "scenario {}  measured {}",
        sc.name,
        format_duration(rec.measured_ns)
    );
    println!(
        "{:<20} {:>7} {:>12} {:>12} {:>12} {:>10}",
        "kind", "clients", "read_p99_ms", "write_p99_ms", "ramp_p99_ms", "MiB/s"
    );
    let mut by_kind: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for c in &rec.clients {
        by_kind.entry(c.kind.as_str()).or_default().push(c);
    }
    for (kind, cs) in by_kind {
        let worst = |f: &dyn Fn(&deltafair::metrics::ClientMetrics) -> u64| {
            cs.iter().map(|c| f(c)).max().unwrap_or(0)
        };
        let tput: f64 = cs.iter().map(|c| rec.client_tput_bps(c)).sum();
        let has_ramp = cs.iter().any(|c| c.ramp.count > 0);
        println!(
            "{:<20} {:>7} {:>12.1} {:>12.1} {:>12} {:>10.1}",
            kind,
            cs.len(),
            ms(worst(&|c| c.read.p99_ns)),
            ms(worst(&|c| c.write.p99_ns)),
            if has_ramp {
                format!("{:.1}", ms(worst(&|c| c.ramp.p99_ns)))
            } else {
                "-".into()
            },
            tput / MIB as f64
        );
    }
    println!(
        "ramp p99 {:.1} ms over {} samples; system {:.1} MiB/s",
        ms(rec.ramp.p99_ns),
        rec.ramp.count,
        rec.system.overall_bps / MIB as f64
    );
    println!(
        "wrote {}",
        out.join(format!("{stem}.{{json,csv}}")).display()
    );
    Ok(ExitCode::SUCCESS)
}

pub struct SweepArgs<'a> {
    pub scenario: &'a Path,
    pub over: &'a ScenarioOverrides,
    pub axes: Vec<(String, Vec<String>)>,
    pub mode: Option<Composition>,
    pub plan_only: bool,
    pub jobs: usize,
    pub out: &'a Path,
}

pub fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let base = load(a.scenario, a.over)?;
    let mut grid: Vec<Vec<_>> = vec![Vec::new()];
    for (name, values) in &a.axes {
        let param: SweepParam = name.parse()?;
        let points = values
            .iter()
            .map(|v| param.parse_point(v))
            .collect::<deltafair::Result<Vec<_>>>()?;
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                points.iter().map(move |&p| {
                    let mut row = prefix.clone();
                    row.push((param, p));
                    row
                })
            })
            .collect();
    }
    let scenarios: Vec<Scenario> = grid
        .iter()
        .map(|s| apply_all(&base, s))
        .collect::<deltafair::Result<_>>()?;
    for sc in &scenarios {
        sc.validate()?;
    }
    let label = |s: &[(SweepParam, deltafair::sim::SweepPoint)]| {
        s.iter()
            .map(|(_, p)| p.to_string())
            .collect::<Vec<_>>()
            .join("/")
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()?;
    let rows: Vec<SweepRow> = pool.install(|| {
        grid.par_iter()
            .zip(&scenarios)
            .map(|(s, sc)| {
                if a.plan_only {
                    SweepRow::from_plan(label(s), sc)
                } else {
                    SweepRow::from_record(label(s), sc, &run_point(sc, a.mode)?)
                }
            })
            .collect::<deltafair::Result<_>>()
    })?;
    let name = format!(
        "{}_sweep_{}",
        stem(&base.name),
        a.axes
            .iter()
            .map(|(p, _)| p.as_str())
            .collect::<Vec<_>>()
            .join("_")
    );
    std::fs::create_dir_all(a.out)?;
    write_sweep_csv(
        &rows,
        std::fs::File::create(a.out.join(format!("{name}.csv")))?,
    )?;
    let md = sweep_markdown(&rows);
    std::fs::write(a.out.join(format!("{name}.md")), &md)?;
    print!("{md}");
    println!(
        "wrote {}",
        a.out.join(format!("{name}.{{csv,md}}")).display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn estimate_k(path: &Path, window: u64, floor: f64, share: Option<u64>) -> Result<ExitCode> {
    let trace = DemandTrace::load(path)?;
    if window == 0 {
        bail!("window must be positive");
    }
    let shares: Vec<u64> = match share {
        Some(s) => vec![s; trace.n()],
        None => trace
            .series
            .iter()
            .map(|s| (s.iter().map(|&(_, d)| d).max().unwrap_or(0) / 2).max(1))
            .collect(),
    };
    let events = detect_ramp_events(&trace, &shares, floor)?;
    let k = estimate(&events, window);
    println!(
        "clients {}  ramp events {}  window {}",
        trace.n(),
        events.len(),
        format_duration(window)
    );
    println!(
        "k = {k} ({} of clients ramp within one window)",
        percent(100.0 * k as f64 / trace.n().max(1) as f64)
    );
    println!("{:>8} {:>8}", "overlap", "windows");
    for (overlap, count) in overlap_histogram(&events, window) {
        println!("{overlap:>8} {count:>8}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn self_test(only: &[u8]) -> Result<ExitCode> {
    let ids: Vec<u8> = if only.is_empty() {
        criterion_ids().collect()
    } else {
        only.to_vec()
    };
    let mut failed = 0;
    for id in ids {
        let Some(r) = run_criterion(id) else {
            bail!("no criterion {id}");
        };
        println!("{r}");
        failed += usize::from(!r.pass);
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
