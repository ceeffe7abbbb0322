//! Scenario files: TOML with unit-suffixed quantities.
//!
//! ```toml
//! name = "example"
//!
//! [resources]
//! buffer_capacity = "2GiB"
//! segment_size = "64MiB"
//! cache_capacity = "1GiB"
//! write_bw = "1400MiB/s"
//! read_bw = "1400MiB/s"
//! amp_factor = 1.0
//! compaction_fraction = 0.3
//!
//! [refill]
//! flush_budget = "380MiB/s"
//! refill_budget = "320MiB/s"
//!
//! [delta]
//! buffer = "350ms"
//! cache = "inf"
//! k = 2
//!
//! [sim]
//! duration = "10s"
//!
//! [[clients]]
//! count = 16
//! kind = "steady"
//! rate = "50MiB/s"
//! write = 1.0
//! record_size = "256KiB"
//! ```
//!
//! Unknown keys are rejected everywhere. Each `[[clients]]` entry describes
//! `count` identical clients; ids are assigned in file order. Fair shares
//! are an equal split unless `[shares]` or per-group `weight` says otherwise.

use std::path::Path;

use serde::Deserialize;

use crate::config::{
    ClientId, DelayOverride, DeltaConfig, FairShareVector, RefillModel, ResourceSpec,
};
use crate::error::{Error, Result};
use crate::reservation::Composition;
use crate::sim::{Burst, ClientKind, ClientProfile, Phase, Scenario, SimParams};
use crate::units::{parse_bytes, parse_duration, parse_rate, Delay};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    name: Option<String>,
    resources: Resources,
    refill: Refill,
    delta: DeltaSection,
    #[serde(default)]
    shares: Option<Shares>,
    #[serde(default)]
    sim: SimSection,
    clients: Vec<Group>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Resources {
    buffer_capacity: String,
    segment_size: String,
    cache_capacity: String,
    write_bw: String,
    read_bw: String,
    #[serde(default = "one")]
    amp_factor: f64,
    #[serde(default = "default_cf")]
    compaction_fraction: f64,
}

fn one() -> f64 {
    1.0
}

fn default_cf() -> f64 {
    0.3
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Refill {
    flush_budget: String,
    refill_budget: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeltaSection {
    buffer: Delay,
    cache: Delay,
    k: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Shares {
    buffer: String,
    cache: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    seed: Option<u64>,
    duration: Option<String>,
    warmup: Option<String>,
    tick: Option<String>,
    window: Option<String>,
    page_size: Option<String>,
    flush_trigger: Option<f64>,
    flush_chunk: Option<String>,
    compaction_ratio: Option<f64>,
    work_conserving: Option<bool>,
    cache_shards: Option<usize>,
    max_outstanding: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Group {
    #[serde(default = "one_count")]
    count: usize,
    kind: ClientKind,
    #[serde(default = "zero_rate")]
    rate: String,
    #[serde(default)]
    read: f64,
    #[serde(default)]
    write: f64,
    #[serde(default)]
    scan: f64,
    record_size: String,
    working_set: Option<String>,
    #[serde(default)]
    zipf: f64,
    #[serde(default = "one_scan")]
    scan_length: u32,
    #[serde(default)]
    prewarm: bool,
    weight: Option<f64>,
    delta_buffer: Option<Delay>,
    delta_cache: Option<Delay>,
    #[serde(default)]
    phases: Vec<PhaseSection>,
}

fn one_count() -> usize {
    1
}

fn one_scan() -> u32 {
    1
}

fn zero_rate() -> String {
    "0B/s".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseSection {
    start: String,
    stop: Option<String>,
    burst: Option<BurstSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BurstSection {
    read: Option<String>,
    write: Option<String>,
    #[serde(default)]
    ramp: bool,
    #[serde(default = "seq")]
    mode: Composition,
    every: Option<String>,
}

fn seq() -> Composition {
    Composition::Sequential
}

/// Command-line values that replace whatever the file says.
#[derive(Debug, Clone, Default)]
pub struct ScenarioOverrides {
    pub delta_buffer: Option<Delay>,
    pub delta_cache: Option<Delay>,
    pub k: Option<u32>,
    pub seed: Option<u64>,
    pub duration: Option<u64>,
}

impl ScenarioOverrides {
    pub fn apply(&self, sc: &mut Scenario) {
        if let Some(d) = self.delta_buffer {
            sc.delta.delta_buffer = d;
        }
        if let Some(d) = self.delta_cache {
            sc.delta.delta_cache = d;
        }
        if let Some(k) = self.k {
            sc.delta.ramp_up_threshold_k = k;
        }
        if let Some(s) = self.seed {
            sc.params.seed = s;
        }
        if let Some(d) = self.duration {
            sc.params.duration = d;
        }
    }
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Config(format!("{name}: {e}")))
}

fn bytes(name: &str, s: &str) -> Result<u64> {
    field(name, parse_bytes(s))
}

fn dur(name: &str, s: &str) -> Result<u64> {
    field(name, parse_duration(s))
}

fn rate(name: &str, s: &str) -> Result<u64> {
    field(name, parse_rate(s))
}

/// Parses scenario text; `default_name` is used when the file has no `name`.
pub fn parse_scenario(text: &str, default_name: &str) -> Result<Scenario> {
    let file: File = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let r = &file.resources;
    let spec = ResourceSpec {
        buffer_capacity: bytes("resources.buffer_capacity", &r.buffer_capacity)?,
        segment_size: bytes("resources.segment_size", &r.segment_size)?,
        cache_capacity: bytes("resources.cache_capacity", &r.cache_capacity)?,
        write_bw: rate("resources.write_bw", &r.write_bw)?,
        read_bw: rate("resources.read_bw", &r.read_bw)?,
        amp_factor: r.amp_factor,
        compaction_fraction: r.compaction_fraction,
    };
    let refill = RefillModel {
        flush_budget: rate("refill.flush_budget", &file.refill.flush_budget)?,
        refill_budget: rate("refill.refill_budget", &file.refill.refill_budget)?,
    };

    let mut params = SimParams::default();
    let s = &file.sim;
    macro_rules! set {
        ($f:ident, $conv:ident) => {
            if let Some(v) = &s.$f {
                params.$f = $conv(concat!("sim.", stringify!($f)), v)?;
            }
        };
        ($f:ident) => {
            if let Some(v) = s.$f {
                params.$f = v;
            }
        };
    }
    set!(seed);
    set!(duration, dur);
    set!(warmup, dur);
    set!(tick, dur);
    set!(window, dur);
    set!(page_size, bytes);
    set!(flush_trigger);
    set!(flush_chunk, bytes);
    set!(compaction_ratio);
    set!(work_conserving);
    set!(cache_shards);
    set!(max_outstanding, bytes);

    let mut clients = Vec::new();
    let mut weights = Vec::new();
    let mut overrides = std::collections::BTreeMap::new();
    for (gi, g) in file.clients.iter().enumerate() {
        if g.count == 0 {
            return Err(Error::Config(format!(
                "clients[{gi}].count must be positive"
            )));
        }
        let name = |f: &str| format!("clients[{gi}].{f}");
        let record_size = bytes(&name("record_size"), &g.record_size)?;
        let working_set = match &g.working_set {
            Some(w) => bytes(&name("working_set"), w)?,
            None => record_size,
        };
        let mut schedule = Vec::with_capacity(g.phases.len());
        for (pi, p) in g.phases.iter().enumerate() {
            let pn = |f: &str| format!("clients[{gi}].phases[{pi}].{f}");
            let burst = match &p.burst {
                None => None,
                Some(b) => Some(Burst {
                    read: b
                        .read
                        .as_deref()
                        .map(|v| bytes(&pn("burst.read"), v))
                        .transpose()?
                        .unwrap_or(0),
                    write: b
                        .write
                        .as_deref()
                        .map(|v| bytes(&pn("burst.write"), v))
                        .transpose()?
                        .unwrap_or(0),
                    ramp: b.ramp,
                    mode: b.mode,
                    every: b
                        .every
                        .as_deref()
                        .map(|v| dur(&pn("burst.every"), v))
                        .transpose()?,
                }),
            };
            schedule.push(Phase {
                start: dur(&pn("start"), &p.start)?,
                stop: p.stop.as_deref().map(|v| dur(&pn("stop"), v)).transpose()?,
                burst,
            });
        }
        if schedule.is_empty() {
            schedule.push(Phase::always());
        }
        let profile = ClientProfile {
            kind: g.kind,
            rate: rate(&name("rate"), &g.rate)?,
            read_fraction: g.read,
            write_fraction: g.write,
            scan_fraction: g.scan,
            record_size,
            working_set,
            zipf: g.zipf,
            scan_length: g.scan_length,
            schedule,
            prewarm: g.prewarm,
        };
        for _ in 0..g.count {
            if g.delta_buffer.is_some() || g.delta_cache.is_some() {
                overrides.insert(
                    ClientId(clients.len() as u32),
                    DelayOverride {
                        buffer: g.delta_buffer,
                        cache: g.delta_cache,
                    },
                );
            }
            weights.push(g.weight.unwrap_or(1.0));
            clients.push(profile.clone());
        }
    }
    let n = clients.len();
    let shares = match (
        &file.shares,
        file.clients.iter().any(|g| g.weight.is_some()),
    ) {
        (Some(_), true) => {
            return Err(Error::Config(
                "use either [shares] or per-group weight, not both".into(),
            ))
        }
        (Some(sh), false) => FairShareVector {
            buffer: vec![bytes("shares.buffer", &sh.buffer)?; n],
            cache: vec![bytes("shares.cache", &sh.cache)?; n],
            weights: None,
        },
        (None, true) => FairShareVector::weighted(&weights, &spec),
        (None, false) => FairShareVector::equal(n, &spec),
    };
    let mut delta = DeltaConfig::uniform(file.delta.buffer, file.delta.cache, file.delta.k);
    delta.per_client_overrides = overrides;
    Ok(Scenario {
        name: file.name.unwrap_or_else(|| default_name.to_string()),
        spec,
        shares,
        delta,
        refill,
        clients,
        params,
    })
}

/// Loads and validates a scenario file, applying command-line overrides first.
pub fn load_scenario(path: &Path, overrides: &ScenarioOverrides) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario");
    let mut sc = parse_scenario(&text, stem)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    overrides.apply(&mut sc);
    sc.validate()?;
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{MIB, NANOS_PER_MS};

    const BASE: &str = r#"
        [resources]
        buffer_capacity = "2GiB"
        segment_size = "64MiB"
        cache_capacity = "1GiB"
        write_bw = "1400MiB/s"
        read_bw = "1400MiB/s"

        [refill]
        flush_budget = "380MiB/s"
        refill_budget = "320MiB/s"

        [delta]
        buffer = "350ms"
        cache = "inf"
        k = 2

        [[clients]]
        count = 15
        kind = "steady"
        rate = "50MiB/s"
        write = 1.0
        record_size = "256KiB"

        [[clients]]
        kind = "ramp_up"
        write = 1.0
        record_size = "256KiB"
        delta_buffer = "0ms"
        [[clients.phases]]
        start = "1s"
        burst = { write = "128MiB", ramp = true }
    "#;

    #[test]
    fn parses_groups_and_overrides() {
        let sc = parse_scenario(BASE, "base").unwrap();
        sc.validate().unwrap();
        assert_eq!(sc.n(), 16);
        assert_eq!(sc.shares.buffer[0], 128 * MIB);
        assert_eq!(sc.delta.buffer_delay(ClientId(15)), Delay::ZERO);
        assert_eq!(sc.delta.buffer_delay(ClientId(0)), Delay::from_millis(350));
        let b = sc.clients[15].schedule[0].burst.unwrap();
        assert_eq!((b.write, b.ramp), (128 * MIB, true));
        assert_eq!(sc.clients[15].schedule[0].start, 1000 * NANOS_PER_MS);
    }

    #[test]
    fn rejects_unknown_keys_and_bare_numbers() {
        let bad = BASE.replace("k = 2", "k = 2\nextra = 1");
        assert!(parse_scenario(&bad, "x").is_err());
        let bare = BASE.replace("\"64MiB\"", "\"64\"");
        let e = parse_scenario(&bare, "x").unwrap_err().to_string();
        assert!(e.contains("resources.segment_size"), "{e}");
    }

    #[test]
    fn flags_override_file() {
        let mut sc = parse_scenario(BASE, "base").unwrap();
        ScenarioOverrides {
            delta_buffer: Some(Delay::Unbounded),
            k: Some(1),
            seed: Some(9),
            ..Default::default()
        }
        .apply(&mut sc);
        assert_eq!(sc.delta.delta_buffer, Delay::Unbounded);
        assert_eq!((sc.delta.ramp_up_threshold_k, sc.params.seed), (1, 9));
    }
}
