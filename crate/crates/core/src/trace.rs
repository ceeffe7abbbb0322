//! Demand traces and estimation of the ramp-up threshold `k`.
//!
//! File format, one record per line, fields separated by commas:
//!
//! ```text
//! <n>, <interval>                      header: client count, sampling interval (e.g. 1s)
//! <timestamp_ns>, <client>, <demand>   demand in bytes/s, client in 0..n
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Timestamps must be
//! strictly increasing per client.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::config::ClientId;
use crate::error::{Error, Result};
use crate::units::{format_duration, parse_duration};

pub const DEFAULT_RAMP_FLOOR: f64 = 0.1;
pub const DEFAULT_WINDOW_NS: u64 = 600 * crate::units::NANOS_PER_SEC;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DemandTrace {
    pub interval_ns: u64,
    /// `series[client]` holds `(timestamp_ns, demand_bytes_per_s)`.
    pub series: Vec<Vec<(u64, u64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RampEvent {
    pub client: ClientId,
    /// Last sample below the floor.
    pub start: u64,
    /// First sample at or above the fair share.
    pub end: u64,
}

impl DemandTrace {
    pub fn new(n: usize, interval_ns: u64) -> Self {
        Self {
            interval_ns,
            series: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.series.len()
    }

    pub fn push(&mut self, client: ClientId, t: u64, demand: u64) -> Result<()> {
        let s = self
            .series
            .get_mut(client.index())
            .ok_or_else(|| Error::Trace(format!("client {client} out of range")))?;
        if s.last().is_some_and(|&(last, _)| last >= t) {
            return Err(Error::Trace(format!(
                "timestamps not increasing for {client} at {t}"
            )));
        }
        s.push((t, demand));
        Ok(())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            msg,
        };
        let mut trace: Option<DemandTrace> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match &mut trace {
                None => {
                    let [n, interval] = fields[..] else {
                        return Err(err(i + 1, "header must be `n, interval`".into()));
                    };
                    let n: usize = n
                        .parse()
                        .map_err(|_| err(i + 1, format!("bad client count {n:?}")))?;
                    let interval =
                        parse_duration(interval).map_err(|e| err(i + 1, e.to_string()))?;
                    trace = Some(DemandTrace::new(n, interval));
                }
                Some(t) => {
                    let [ts, c, d] = fields[..] else {
                        return Err(err(
                            i + 1,
                            "row must be `timestamp_ns, client, demand`".into(),
                        ));
                    };
                    let num = |s: &str, what: &str| {
                        s.parse::<u64>()
                            .map_err(|_| err(i + 1, format!("bad {what} {s:?}")))
                    };
                    let (ts, c, d) = (num(ts, "timestamp")?, num(c, "client")?, num(d, "demand")?);
                    t.push(ClientId(c as u32), ts, d)
                        .map_err(|e| err(i + 1, e.to_string()))?;
                }
            }
        }
        trace.ok_or_else(|| err(1, "missing header".into()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Rows are written in timestamp order, clients ascending within a timestamp.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(u64, usize, u64)> = self
            .series
            .iter()
            .enumerate()
            .flat_map(|(c, s)| s.iter().map(move |&(t, d)| (t, c, d)))
            .collect();
        rows.sort_unstable();
        let mut out = format!("{}, {}\n", self.n(), format_duration(self.interval_ns));
        for (t, c, d) in rows {
            let _ = writeln!(out, "{t}, {c}, {d}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// One event per client per rise from below `ramp_floor * f` to at least `f`.
pub fn detect_ramp_events(
    trace: &DemandTrace,
    shares: &[u64],
    ramp_floor: f64,
) -> Result<Vec<RampEvent>> {
    if !(ramp_floor > 0.0 && ramp_floor < 1.0) {
        return Err(Error::Trace(format!(
            "ramp floor {ramp_floor} outside (0, 1)"
        )));
    }
    if shares.len() != trace.n() {
        return Err(Error::Trace("one share per client required".into()));
    }
    let mut events = Vec::new();
    for (c, series) in trace.series.iter().enumerate() {
        if series.len() < 2 {
            return Err(Error::Trace(format!(
                "client c{c} has fewer than 2 samples"
            )));
        }
        let f = shares[c];
        let floor = ramp_floor * f as f64;
        let mut low_at: Option<u64> = None;
        for &(t, d) in series {
            if (d as f64) < floor {
                low_at = Some(t);
            } else if d >= f {
                if let Some(start) = low_at.take() {
                    events.push(RampEvent {
                        client: ClientId(c as u32),
                        start,
                        end: t,
                    });
                }
            }
        }
    }
    events.sort_by_key(|e| (e.start, e.client));
    Ok(events)
}

/// Per-client unions of `[start - window, end]`: a window starting at `s`
/// intersects an event exactly when `s` lies in its widened interval.
fn widened(events: &[RampEvent], window: u64) -> Vec<(u64, u64)> {
    let mut by_client: std::collections::BTreeMap<ClientId, Vec<(u64, u64)>> = Default::default();
    for e in events {
        by_client
            .entry(e.client)
            .or_default()
            .push((e.start.saturating_sub(window), e.end));
    }
    let mut out = Vec::new();
    for (_, mut iv) in by_client {
        iv.sort_unstable();
        let mut cur = iv[0];
        for &(a, b) in &iv[1..] {
            if a <= cur.1 {
                cur.1 = cur.1.max(b);
            } else {
                out.push(cur);
                cur = (a, b);
            }
        }
        out.push(cur);
    }
    out
}

/// Largest number of distinct clients whose ramp events intersect one window
/// of length `window`, over every window position. Always at least 1.
pub fn estimate_k(events: &[RampEvent], window: u64) -> u32 {
    assert!(window > 0, "window must be positive");
    if events.is_empty() {
        return 1;
    }
    let mut points: Vec<(u64, i32)> = widened(events, window)
        .into_iter()
        .flat_map(|(a, b)| [(a, 1), (b, -1)])
        .collect();
    // closed intervals: opens sort before closes at the same instant
    points.sort_unstable_by_key(|&(t, d)| (t, -d));
    let (mut cur, mut best) = (0i32, 0i32);
    for (_, d) in points {
        cur += d;
        best = best.max(cur);
    }
    best.max(1) as u32
}

/// `(overlap, windows)` pairs for windows stepped by `window / 10` over the trace span.
pub fn overlap_histogram(events: &[RampEvent], window: u64) -> Vec<(u32, u64)> {
    assert!(window > 0, "window must be positive");
    if events.is_empty() {
        return vec![(0, 1)];
    }
    let step = (window / 10).max(1);
    let lo = events.iter().map(|e| e.start).min().unwrap();
    let hi = events.iter().map(|e| e.end).max().unwrap();
    let mut counts = std::collections::BTreeMap::new();
    let mut s = lo.saturating_sub(window);
    while s <= hi {
        let mut clients: Vec<ClientId> = events
            .iter()
            .filter(|e| e.start <= s + window && e.end >= s)
            .map(|e| e.client)
            .collect();
        clients.sort_unstable();
        clients.dedup();
        *counts.entry(clients.len() as u32).or_insert(0u64) += 1;
        s += step;
    }
    counts.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_of(series: Vec<Vec<u64>>) -> DemandTrace {
        let mut t = DemandTrace::new(series.len(), 1);
        for (c, s) in series.iter().enumerate() {
            for (i, &d) in s.iter().enumerate() {
                t.push(ClientId(c as u32), i as u64 * 10, d).unwrap();
            }
        }
        t
    }

    #[test]
    fn steady_client_has_no_events() {
        let t = trace_of(vec![vec![100; 8]]);
        assert!(detect_ramp_events(&t, &[100], 0.1).unwrap().is_empty());
    }

    #[test]
    fn jump_from_zero_is_one_event() {
        let t = trace_of(vec![vec![0, 0, 100, 100, 100]]);
        let ev = detect_ramp_events(&t, &[100], 0.1).unwrap();
        assert_eq!(
            ev,
            vec![RampEvent {
                client: ClientId(0),
                start: 10,
                end: 20
            }]
        );
    }

    #[test]
    fn slow_rise_counts_once() {
        let t = trace_of(vec![vec![0, 30, 60, 100, 50, 100, 0, 100]]);
        let ev = detect_ramp_events(&t, &[100], 0.1).unwrap();
        assert_eq!(ev.len(), 2, "dip to 50 does not re-arm; dip to 0 does");
        assert_eq!((ev[0].start, ev[0].end), (0, 30));
    }

    #[test]
    fn short_trace_is_an_error() {
        let t = trace_of(vec![vec![0]]);
        assert!(detect_ramp_events(&t, &[100], 0.1).is_err());
    }

    #[test]
    fn empty_events_give_k_one() {
        assert_eq!(estimate_k(&[], 10), 1);
    }

    #[test]
    fn all_clients_at_once_gives_n() {
        let n = 8;
        let t = trace_of((0..n).map(|_| vec![0, 100, 100]).collect());
        let ev = detect_ramp_events(&t, &vec![100; n], 0.1).unwrap();
        assert_eq!(estimate_k(&ev, 1), n as u32);
    }

    #[test]
    fn round_trips_through_text() {
        let t = trace_of(vec![vec![0, 5], vec![7, 9]]);
        let text = t.to_text();
        assert!(text.starts_with("2, "));
        let mut back = DemandTrace::parse(&text, "mem").unwrap();
        back.interval_ns = t.interval_ns;
        assert_eq!(back, t);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = DemandTrace::parse("2, 1s\n0, 0, 5\n0, 1, x\n", "t.csv").unwrap_err();
        assert_eq!(e.to_string(), "t.csv:3: bad demand \"x\"");
        let e = DemandTrace::parse("# c\n2, 1s\n5, 0, 1\n5, 0, 1\n", "t.csv").unwrap_err();
        assert!(e.to_string().starts_with("t.csv:4:"));
    }

    #[test]
    fn histogram_covers_trace() {
        let t = trace_of(vec![vec![0, 100, 100, 100], vec![0, 0, 0, 100]]);
        let ev = detect_ramp_events(&t, &[100, 100], 0.1).unwrap();
        let h = overlap_histogram(&ev, 10);
        assert!(h.iter().any(|&(k, _)| k == 1));
        assert_eq!(
            h.iter().map(|&(k, _)| k).max(),
            Some(estimate_k(&ev, 10).min(2))
        );
    }
}
