//! Client workload profiles and key generation.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservation::Composition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Steady,
    HighDemandWriter,
    HighDemandReader,
    RampUp,
}

impl fmt::Display for ClientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClientKind::Steady => "steady",
            ClientKind::HighDemandWriter => "high_demand_writer",
            ClientKind::HighDemandReader => "high_demand_reader",
            ClientKind::RampUp => "ramp_up",
        })
    }
}

/// A one-shot request issued at the start of a phase.
///
/// Ramp bursts are tracked as one compound request: the write is a single
/// atomic buffer allocation and the read is a multi-get over the first
/// `read` bytes of the working set. Other bursts are split into
/// record-sized operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub read: u64,
    pub write: u64,
    pub ramp: bool,
    pub mode: Composition,
    /// Re-issue period within the phase.
    pub every: Option<u64>,
}

/// The client issues its steady open-loop traffic during `[start, stop)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub start: u64,
    pub stop: Option<u64>,
    pub burst: Option<Burst>,
}

impl Phase {
    pub fn always() -> Self {
        Self {
            start: 0,
            stop: None,
            burst: None,
        }
    }

    pub fn contains(&self, t: u64) -> bool {
        t >= self.start && self.stop.is_none_or(|s| t < s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub kind: ClientKind,
    /// Total bytes/s across all operation types while a phase is active.
    pub rate: u64,
    pub read_fraction: f64,
    pub write_fraction: f64,
    pub scan_fraction: f64,
    pub record_size: u64,
    pub working_set: u64,
    /// Zipf exponent over the working set; 0 means uniform.
    pub zipf: f64,
    pub scan_length: u32,
    pub schedule: Vec<Phase>,
    /// Fill the cache with the working set (up to the fair share) at time zero.
    pub prewarm: bool,
}

impl ClientProfile {
    pub fn validate(&self) -> Result<()> {
        let sum = self.read_fraction + self.write_fraction + self.scan_fraction;
        if (sum - 1.0).abs() > 1e-9 && self.rate > 0 {
            return Err(Error::Invalid(format!(
                "operation fractions sum to {sum}, not 1"
            )));
        }
        if [self.read_fraction, self.write_fraction, self.scan_fraction]
            .iter()
            .any(|f| !(0.0..=1.0).contains(f))
        {
            return Err(Error::Invalid(
                "operation fractions must lie in [0, 1]".into(),
            ));
        }
        if self.record_size == 0 {
            return Err(Error::Invalid("record_size must be positive".into()));
        }
        if self.working_set < self.record_size && (self.read_fraction + self.scan_fraction > 0.0) {
            return Err(Error::Invalid("working_set smaller than one record".into()));
        }
        if self.zipf < 0.0 {
            return Err(Error::Invalid("zipf exponent must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn records(&self) -> u64 {
        (self.working_set / self.record_size).max(1)
    }

    pub fn read_rate(&self) -> u64 {
        (self.rate as f64 * self.read_fraction) as u64
    }

    pub fn write_rate(&self) -> u64 {
        (self.rate as f64 * self.write_fraction) as u64
    }

    pub fn scan_rate(&self) -> u64 {
        (self.rate as f64 * self.scan_fraction) as u64
    }

    pub fn active_at(&self, t: u64) -> bool {
        self.schedule.iter().any(|p| p.contains(t))
    }
}

/// Draws record keys; key 0 is the most popular under skew.
#[derive(Debug, Clone)]
pub enum KeyGen {
    Uniform(u64),
    Zipf(Zipf<f64>),
}

impl KeyGen {
    pub fn new(records: u64, exponent: f64) -> Result<Self> {
        if exponent == 0.0 || records <= 1 {
            return Ok(KeyGen::Uniform(records.max(1)));
        }
        Zipf::new(records as f64, exponent)
            .map(KeyGen::Zipf)
            .map_err(|e| Error::Invalid(format!("zipf: {e}")))
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            KeyGen::Uniform(n) => rng.random_range(0..*n),
            KeyGen::Zipf(z) => z.sample(rng) as u64 - 1,
        }
    }
}
