//! Latency and throughput aggregation with exact quantiles.
//!
//! `p99` is the `ceil(0.99 * n)`-th smallest sample. Samples arriving before
//! the warm-up time are dropped.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::ClientId;
use crate::error::{Error, Result};
use crate::units::NANOS_PER_SEC;

/// Which latency series a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Stream {
    Read,
    Write,
    /// A ramp-up request: a batch write, a multi-get, or both together.
    Ramp,
}

/// The `ceil(num / den * n)`-th order statistic of sorted `xs`, 1-based.
pub fn order_statistic(sorted: &[u64], num: u64, den: u64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len() as u64;
    let rank = (num * n).div_ceil(den).clamp(1, n);
    Some(sorted[rank as usize - 1])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub count: u64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
    pub mean_ns: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_unstable();
        let sum: u128 = s.iter().map(|&x| x as u128).sum();
        Self {
            count: s.len() as u64,
            p50_ns: order_statistic(&s, 1, 2).unwrap(),
            p99_ns: order_statistic(&s, 99, 100).unwrap(),
            max_ns: *s.last().unwrap(),
            mean_ns: sum as f64 / s.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LatencyRecorder {
    warmup_ns: u64,
    /// `samples[client][stream]`, grown on demand.
    samples: Vec<[Vec<u64>; 3]>,
}

impl LatencyRecorder {
    pub fn new(warmup_ns: u64) -> Self {
        Self {
            warmup_ns,
            samples: Vec::new(),
        }
    }

    fn slot(&mut self, client: ClientId) -> &mut [Vec<u64>; 3] {
        if self.samples.len() <= client.index() {
            self.samples
                .resize_with(client.index() + 1, Default::default);
        }
        &mut self.samples[client.index()]
    }

    /// Stores a latency observed for a request that arrived at `arrival`.
    pub fn record(
        &mut self,
        client: ClientId,
        stream: Stream,
        arrival: u64,
        latency_ns: i64,
    ) -> Result<()> {
        if latency_ns < 0 {
            return Err(Error::NegativeLatency);
        }
        if arrival >= self.warmup_ns {
            self.slot(client)[stream as usize].push(latency_ns as u64);
        }
        Ok(())
    }

    pub fn samples(&self, client: ClientId, stream: Stream) -> &[u64] {
        self.samples
            .get(client.index())
            .map_or(&[], |s| s[stream as usize].as_slice())
    }

    /// All samples of one stream across clients, in client order.
    pub fn stream(&self, stream: Stream) -> Vec<u64> {
        self.samples
            .iter()
            .flat_map(|s| s[stream as usize].iter().copied())
            .collect()
    }

    pub fn summary(&self, client: ClientId, stream: Stream) -> LatencySummary {
        LatencySummary::from_samples(self.samples(client, stream))
    }

    pub fn merge(&mut self, other: &LatencyRecorder) {
        for (i, s) in other.samples.iter().enumerate() {
            let mine = self.slot(ClientId(i as u32));
            for k in 0..3 {
                mine[k].extend_from_slice(&s[k]);
            }
        }
    }
}

/// Bytes moved per client in fixed, non-overlapping windows.
#[derive(Debug, Clone)]
pub struct ThroughputTracker {
    window_ns: u64,
    start_ns: u64,
    n: usize,
    /// `windows[w][client] = (read, write)`.
    windows: Vec<Vec<(u64, u64)>>,
    usage: Vec<Vec<(u64, u64)>>,
}

impl ThroughputTracker {
    pub fn new(n: usize, start_ns: u64, window_ns: u64) -> Self {
        assert!(window_ns > 0);
        Self {
            window_ns,
            start_ns,
            n,
            windows: Vec::new(),
            usage: Vec::new(),
        }
    }

    fn slot(&mut self, t: u64) -> Option<usize> {
        if t < self.start_ns {
            return None;
        }
        let w = ((t - self.start_ns) / self.window_ns) as usize;
        while self.windows.len() <= w {
            self.windows.push(vec![(0, 0); self.n]);
            self.usage.push(vec![(0, 0); self.n]);
        }
        Some(w)
    }

    pub fn add_read(&mut self, client: ClientId, t: u64, bytes: u64) {
        if let Some(w) = self.slot(t) {
            self.windows[w][client.index()].0 += bytes;
        }
    }

    pub fn add_write(&mut self, client: ClientId, t: u64, bytes: u64) {
        if let Some(w) = self.slot(t) {
            self.windows[w][client.index()].1 += bytes;
        }
    }

    /// Records buffer and cache occupancy for the window containing `t`.
    pub fn sample_usage(&mut self, t: u64, buffer: &[u64], cache: &[u64]) {
        if let Some(w) = self.slot(t) {
            for i in 0..self.n {
                self.usage[w][i] = (buffer[i], cache[i]);
            }
        }
    }

    pub fn totals(&self, client: ClientId) -> (u64, u64) {
        self.windows.iter().fold((0, 0), |(r, w), win| {
            let (a, b) = win[client.index()];
            (r + a, w + b)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientMetrics {
    pub client: ClientId,
    pub kind: String,
    pub read: LatencySummary,
    pub write: LatencySummary,
    pub ramp: LatencySummary,
    pub read_bytes: u64,
    pub write_bytes: u64,
    pub reservation_buffer: u64,
    pub reservation_cache: u64,
}

impl ClientMetrics {
    /// The series reported in the flat CSV: ramp if present, else the busier of read and write.
    pub fn headline(&self) -> &LatencySummary {
        if self.ramp.count > 0 {
            &self.ramp
        } else if self.write.count > self.read.count {
            &self.write
        } else {
            &self.read
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRow {
    pub window_start_ms: f64,
    pub client: ClientId,
    pub read_bytes: u64,
    pub write_bytes: u64,
    pub buffer_usage: u64,
    pub cache_usage: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemTotals {
    pub read_bytes: u64,
    pub write_bytes: u64,
    pub read_bps: f64,
    pub write_bps: f64,
    pub overall_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub measured_ns: u64,
    pub clients: Vec<ClientMetrics>,
    pub windows: Vec<WindowRow>,
    pub system: SystemTotals,
    /// Every ramp sample across clients, in ns.
    pub ramp_samples: Vec<u64>,
    pub ramp: LatencySummary,
    pub rho_buffer_total: u64,
    pub rho_cache_total: u64,
}

/// Per-client inputs to [`summarize`] beyond what the recorders hold.
#[derive(Debug, Clone)]
pub struct ClientLabel {
    pub kind: String,
    pub reservation_buffer: u64,
    pub reservation_cache: u64,
}

pub fn summarize(
    scenario: &str,
    labels: &[ClientLabel],
    recorder: &LatencyRecorder,
    tput: &ThroughputTracker,
    measured_ns: u64,
) -> MetricsRecord {
    let mut clients = Vec::with_capacity(labels.len());
    let mut windows = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let c = ClientId(i as u32);
        let (read_bytes, write_bytes) = tput.totals(c);
        clients.push(ClientMetrics {
            client: c,
            kind: label.kind.clone(),
            read: recorder.summary(c, Stream::Read),
            write: recorder.summary(c, Stream::Write),
            ramp: recorder.summary(c, Stream::Ramp),
            read_bytes,
            write_bytes,
            reservation_buffer: label.reservation_buffer,
            reservation_cache: label.reservation_cache,
        });
    }
    for (w, win) in tput.windows.iter().enumerate() {
        for (i, &(r, wr)) in win.iter().enumerate() {
            let (b, ca) = tput.usage[w][i];
            windows.push(WindowRow {
                window_start_ms: (tput.start_ns + w as u64 * tput.window_ns) as f64 / 1e6,
                client: ClientId(i as u32),
                read_bytes: r,
                write_bytes: wr,
                buffer_usage: b,
                cache_usage: ca,
            });
        }
    }
    let read_bytes: u64 = clients.iter().map(|c| c.read_bytes).sum();
    let write_bytes: u64 = clients.iter().map(|c| c.write_bytes).sum();
    let secs = measured_ns.max(1) as f64 / NANOS_PER_SEC as f64;
    let ramp_samples = recorder.stream(Stream::Ramp);
    MetricsRecord {
        scenario: scenario.to_string(),
        measured_ns,
        ramp: LatencySummary::from_samples(&ramp_samples),
        ramp_samples,
        clients,
        windows,
        system: SystemTotals {
            read_bytes,
            write_bytes,
            read_bps: read_bytes as f64 / secs,
            write_bps: write_bytes as f64 / secs,
            overall_bps: (read_bytes + write_bytes) as f64 / secs,
        },
        rho_buffer_total: labels.iter().map(|l| l.reservation_buffer).sum(),
        rho_cache_total: labels.iter().map(|l| l.reservation_cache).sum(),
    }
}

fn ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

impl MetricsRecord {
    pub fn client_tput_bps(&self, c: &ClientMetrics) -> f64 {
        (c.read_bytes + c.write_bytes) as f64 * NANOS_PER_SEC as f64
            / self.measured_ns.max(1) as f64
    }

    /// One row per client: scenario, client, kind, p50_ms, p99_ms, max_ms, tput_MBps, reservation_bytes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CLIENT_COLUMNS)?;
        for c in &self.clients {
            let h = c.headline();
            w.write_record([
                self.scenario.clone(),
                c.client.to_string(),
                c.kind.clone(),
                format!("{:.3}", ms(h.p50_ns)),
                format!("{:.3}", ms(h.p99_ns)),
                format!("{:.3}", ms(h.max_ns)),
                format!("{:.3}", self.client_tput_bps(c) / 1e6),
                (c.reservation_buffer + c.reservation_cache).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per client per window.
    pub fn write_windows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(WINDOW_COLUMNS)?;
        for r in &self.windows {
            w.write_record([
                self.scenario.clone(),
                format!("{:.3}", r.window_start_ms),
                r.client.to_string(),
                r.read_bytes.to_string(),
                r.write_bytes.to_string(),
                r.buffer_usage.to_string(),
                r.cache_usage.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<stem>.json`, `<stem>.csv` and `<stem>_windows.csv` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        self.write_windows_csv(std::fs::File::create(
            dir.join(format!("{stem}_windows.csv")),
        )?)?;
        Ok(())
    }

    /// Re-reads the files from [`MetricsRecord::write_files`] and checks their
    /// headers and row counts against this record.
    pub fn validate_files(&self, dir: &Path, stem: &str) -> Result<()> {
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let clients = json["clients"].as_array().map_or(0, Vec::len);
        let check = |name: String, header: &[&str], rows: usize| -> Result<()> {
            let mut r = csv::Reader::from_path(dir.join(&name))?;
            if r.headers()?.iter().ne(header.iter().copied()) {
                return Err(Error::Invalid(format!("{name}: unexpected header")));
            }
            let mut count = 0;
            for rec in r.records() {
                if rec?.len() != header.len() {
                    return Err(Error::Invalid(format!("{name}: short row")));
                }
                count += 1;
            }
            if count != rows {
                return Err(Error::Invalid(format!(
                    "{name}: {count} rows, expected {rows}"
                )));
            }
            Ok(())
        };
        if clients != self.clients.len() {
            return Err(Error::Invalid(format!(
                "{stem}.json: {clients} clients, expected {}",
                self.clients.len()
            )));
        }
        check(format!("{stem}.csv"), &CLIENT_COLUMNS, self.clients.len())?;
        check(
            format!("{stem}_windows.csv"),
            &WINDOW_COLUMNS,
            self.windows.len(),
        )
    }
}

pub const CLIENT_COLUMNS: [&str; 8] = [
    "scenario",
    "client",
    "kind",
    "p50_ms",
    "p99_ms",
    "max_ms",
    "tput_MBps",
    "reservation_bytes",
];

pub const WINDOW_COLUMNS: [&str; 7] = [
    "scenario",
    "window_start_ms",
    "client",
    "read_bytes",
    "write_bytes",
    "buffer_usage",
    "cache_usage",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::NANOS_PER_MS;

    #[test]
    fn single_sample_p99() {
        let mut r = LatencyRecorder::new(0);
        r.record(ClientId(0), Stream::Read, 0, 5).unwrap();
        assert_eq!(r.summary(ClientId(0), Stream::Read).p99_ns, 5);
    }

    #[test]
    fn p99_of_one_to_hundred() {
        let mut r = LatencyRecorder::new(0);
        for i in 1..=100 {
            r.record(ClientId(0), Stream::Read, 0, (i * NANOS_PER_MS) as i64)
                .unwrap();
        }
        assert_eq!(
            r.summary(ClientId(0), Stream::Read).p99_ns,
            99 * NANOS_PER_MS
        );
        assert_eq!(
            r.summary(ClientId(0), Stream::Read).p50_ns,
            50 * NANOS_PER_MS
        );
    }

    #[test]
    fn clients_are_isolated() {
        let mut r = LatencyRecorder::new(0);
        r.record(ClientId(0), Stream::Read, 0, 1).unwrap();
        r.record(ClientId(1), Stream::Read, 0, 1000).unwrap();
        assert_eq!(r.summary(ClientId(0), Stream::Read).max_ns, 1);
    }

    #[test]
    fn negative_latency_rejected() {
        let mut r = LatencyRecorder::new(0);
        assert!(matches!(
            r.record(ClientId(0), Stream::Read, 0, -1),
            Err(Error::NegativeLatency)
        ));
    }

    #[test]
    fn warmup_samples_dropped() {
        let mut r = LatencyRecorder::new(100);
        r.record(ClientId(0), Stream::Write, 99, 7).unwrap();
        r.record(ClientId(0), Stream::Write, 100, 8).unwrap();
        assert_eq!(r.samples(ClientId(0), Stream::Write), &[8]);
    }

    fn labels(n: usize) -> Vec<ClientLabel> {
        (0..n)
            .map(|_| ClientLabel {
                kind: "steady".into(),
                reservation_buffer: 0,
                reservation_cache: 0,
            })
            .collect()
    }

    #[test]
    fn system_totals_sum_clients() {
        let mut t = ThroughputTracker::new(3, 0, NANOS_PER_SEC);
        t.add_read(ClientId(0), 10, 100);
        t.add_write(ClientId(1), 1_500_000_000, 50);
        let m = summarize(
            "s",
            &labels(3),
            &LatencyRecorder::new(0),
            &t,
            2 * NANOS_PER_SEC,
        );
        assert_eq!(
            m.clients[2].read_bytes + m.clients[2].write_bytes,
            0,
            "idle client"
        );
        assert_eq!(m.system.read_bytes + m.system.write_bytes, 150);
        assert_eq!(m.system.overall_bps, 75.0);
        assert_eq!(m.windows.len(), 6);
        let again = summarize(
            "s",
            &labels(3),
            &LatencyRecorder::new(0),
            &t,
            2 * NANOS_PER_SEC,
        );
        assert_eq!(m, again);
    }

    #[test]
    fn csv_has_documented_columns() {
        let t = ThroughputTracker::new(1, 0, NANOS_PER_SEC);
        let m = summarize("s", &labels(1), &LatencyRecorder::new(0), &t, NANOS_PER_SEC);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "scenario,client,kind,p50_ms,p99_ms,max_ms,tput_MBps,reservation_bytes\ns,c0,steady,"
        ));
    }
}
