//! One-dimensional parameter sweeps over a base scenario.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use std::io::Write;

use super::{run_composition_scenario, run_scenario, Scenario};
use crate::config::ClientId;
use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;
use crate::reservation::{plan_reservations, Composition};
use crate::units::{ms, Delay, MIB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    DeltaBuffer,
    DeltaCache,
    K,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta_buffer" => Ok(SweepParam::DeltaBuffer),
            "delta_cache" => Ok(SweepParam::DeltaCache),
            "k" => Ok(SweepParam::K),
            _ => Err(Error::Invalid(format!(
                "unknown sweep parameter {s:?}; expected delta_buffer, delta_cache or k"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepPoint {
    Delay(Delay),
    K(u32),
}

impl fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepPoint::Delay(d) => d.fmt(f),
            SweepPoint::K(k) => k.fmt(f),
        }
    }
}

impl SweepParam {
    pub fn parse_point(self, s: &str) -> Result<SweepPoint> {
        match self {
            SweepParam::K => {
                let k: u32 = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad k value {s:?}")))?;
                if k == 0 {
                    return Err(Error::Invalid("k must be at least 1".into()));
                }
                Ok(SweepPoint::K(k))
            }
            _ => s.parse().map(SweepPoint::Delay),
        }
    }

    /// The base scenario with this parameter set to `point`. Per-client overrides are kept.
    pub fn apply(self, base: &Scenario, point: SweepPoint) -> Result<Scenario> {
        let mut sc = base.clone();
        match (self, point) {
            (SweepParam::DeltaBuffer, SweepPoint::Delay(d)) => sc.delta.delta_buffer = d,
            (SweepParam::DeltaCache, SweepPoint::Delay(d)) => sc.delta.delta_cache = d,
            (SweepParam::K, SweepPoint::K(k)) => sc.delta.ramp_up_threshold_k = k,
            _ => {
                return Err(Error::Invalid(format!(
                    "value {point} does not fit {self:?}"
                )))
            }
        }
        sc.name = format!("{}@{point}", base.name);
        Ok(sc)
    }
}

/// One sweep point: the scenario with every `(param, point)` applied in order.
pub fn apply_all(base: &Scenario, settings: &[(SweepParam, SweepPoint)]) -> Result<Scenario> {
    let mut sc = base.clone();
    for &(param, point) in settings {
        sc = param.apply(&sc, point)?;
    }
    sc.name = std::iter::once(base.name.clone())
        .chain(settings.iter().map(|(_, p)| p.to_string()))
        .collect::<Vec<_>>()
        .join("@");
    Ok(sc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    /// Total reservation as a percentage of capacity.
    pub buffer_reservation_pct: f64,
    pub cache_reservation_pct: f64,
    /// Reservation as a percentage of fair share, over clients whose delta is bounded.
    pub buffer_reserved_share_pct: f64,
    pub cache_reserved_share_pct: f64,
    /// Empty for plan-only sweeps.
    pub ramp_p99_ms: Option<f64>,
    pub ramp_max_ms: Option<f64>,
    pub read_mibps: Option<f64>,
    pub throughput_mibps: Option<f64>,
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "value",
    "buffer_reservation_pct",
    "cache_reservation_pct",
    "buffer_reserved_share_pct",
    "cache_reserved_share_pct",
    "ramp_p99_ms",
    "ramp_max_ms",
    "read_mibps",
    "throughput_mibps",
];

fn pct(part: u64, whole: u64) -> f64 {
    100.0 * part as f64 / whole.max(1) as f64
}

impl SweepRow {
    /// Reservation columns only.
    pub fn from_plan(value: String, sc: &Scenario) -> Result<Self> {
        let plan = plan_reservations(&sc.spec, &sc.shares, &sc.delta, &sc.refill)?;
        let share = |rho: &[u64], f: &[u64], bounded: &dyn Fn(ClientId) -> bool| {
            let (mut r, mut t) = (0, 0);
            for i in 0..f.len() {
                if bounded(ClientId(i as u32)) {
                    r += rho[i];
                    t += f[i];
                }
            }
            pct(r, t)
        };
        Ok(Self {
            value,
            buffer_reservation_pct: pct(plan.rho_buffer_total, sc.spec.buffer_capacity),
            cache_reservation_pct: pct(plan.rho_cache_total, sc.spec.cache_capacity),
            buffer_reserved_share_pct: share(&plan.rho_buffer, &sc.shares.buffer, &|c| {
                !sc.delta.buffer_delay(c).is_unbounded()
            }),
            cache_reserved_share_pct: share(&plan.rho_cache, &sc.shares.cache, &|c| {
                !sc.delta.cache_delay(c).is_unbounded()
            }),
            ramp_p99_ms: None,
            ramp_max_ms: None,
            read_mibps: None,
            throughput_mibps: None,
        })
    }

    pub fn from_record(value: String, sc: &Scenario, rec: &MetricsRecord) -> Result<Self> {
        let mut row = Self::from_plan(value, sc)?;
        row.ramp_p99_ms = Some(ms(rec.ramp.p99_ns));
        row.ramp_max_ms = Some(ms(rec.ramp.max_ns));
        row.read_mibps = Some(rec.system.read_bps / MIB as f64);
        row.throughput_mibps = Some(rec.system.overall_bps / MIB as f64);
        Ok(row)
    }

    fn cells(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.3}"));
        vec![
            self.value.clone(),
            format!("{:.3}", self.buffer_reservation_pct),
            format!("{:.3}", self.cache_reservation_pct),
            format!("{:.3}", self.buffer_reserved_share_pct),
            format!("{:.3}", self.cache_reserved_share_pct),
            opt(self.ramp_p99_ms),
            opt(self.ramp_max_ms),
            opt(self.read_mibps),
            opt(self.throughput_mibps),
        ]
    }
}

/// Runs one point. `mode` turns ramp bursts into sequential or parallel compound requests.
pub fn run_point(sc: &Scenario, mode: Option<Composition>) -> Result<MetricsRecord> {
    match mode {
        Some(m) => run_composition_scenario(sc, m),
        None => run_scenario(sc),
    }
}

/// Runs the base scenario once per point, in order.
pub fn sweep(base: &Scenario, param: SweepParam, points: &[SweepPoint]) -> Result<Vec<SweepRow>> {
    points
        .iter()
        .map(|&p| {
            let sc = param.apply(base, p)?;
            let rec = run_scenario(&sc)?;
            SweepRow::from_record(p.to_string(), &sc, &rec)
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.write_record(r.cells())?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_markdown(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "| {} |\n|{}\n",
        SWEEP_COLUMNS.join(" | "),
        "---|".repeat(SWEEP_COLUMNS.len())
    );
    for r in rows {
        s.push_str(&format!("| {} |\n", r.cells().join(" | ")));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_params_and_points() {
        let p: SweepParam = "delta_cache".parse().unwrap();
        assert_eq!(
            p.parse_point("250ms").unwrap(),
            SweepPoint::Delay(Delay::from_millis(250))
        );
        assert_eq!(
            p.parse_point("inf").unwrap(),
            SweepPoint::Delay(Delay::Unbounded)
        );
        assert!(p.parse_point("250").is_err());
        assert_eq!(SweepParam::K.parse_point("3").unwrap(), SweepPoint::K(3));
        assert!(SweepParam::K.parse_point("0").is_err());
        assert!("delta".parse::<SweepParam>().is_err());
    }

    #[test]
    fn plan_rows_report_share_of_bounded_clients() {
        let base = crate::acceptance::bundled("cache_micro").unwrap();
        let mut rows = Vec::new();
        for k in 1..=6 {
            let sc = apply_all(
                &base,
                &[
                    (
                        SweepParam::DeltaCache,
                        SweepPoint::Delay(Delay::from_millis(750)),
                    ),
                    (SweepParam::K, SweepPoint::K(k)),
                ],
            )
            .unwrap();
            rows.push(SweepRow::from_plan(k.to_string(), &sc).unwrap());
        }
        let got: Vec<f64> = rows.iter().map(|r| r.cache_reserved_share_pct).collect();
        assert_eq!(got, [25.0, 62.5, 75.0, 81.25, 85.0, 87.5]);
        let mut csv = Vec::new();
        write_sweep_csv(&rows, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("value,buffer_reservation_pct"));
        assert_eq!(text.lines().count(), 7);
        assert!(sweep_markdown(&rows).contains("| 6 |"));
    }
}
