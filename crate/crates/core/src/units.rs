//! Unit-suffixed quantities: byte sizes, durations and bandwidths.
//!
//! Every quantity carries an explicit suffix. Bare numbers are rejected so a
//! scenario cannot silently mix MB and MiB or seconds and milliseconds.
//! Decimal suffixes (`KB`, `MB`, `GB`) are powers of 1000, binary suffixes
//! (`KiB`, `MiB`, `GiB`) powers of 1024.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

pub const NANOS_PER_MS: u64 = 1_000_000;
pub const NANOS_PER_SEC: u64 = 1_000_000_000;

pub const KIB: u64 = 1 << 10;
pub const MIB: u64 = 1 << 20;
pub const GIB: u64 = 1 << 30;

/// A maximum delay: either a finite bound in nanoseconds or unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Delay {
    Bounded(u64),
    Unbounded,
}

impl Delay {
    pub const ZERO: Delay = Delay::Bounded(0);

    pub fn from_millis(ms: u64) -> Self {
        Delay::Bounded(ms * NANOS_PER_MS)
    }

    pub fn nanos(self) -> Option<u64> {
        match self {
            Delay::Bounded(ns) => Some(ns),
            Delay::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Delay::Unbounded)
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delay::Unbounded => f.write_str("inf"),
            Delay::Bounded(ns) => write!(f, "{}", format_duration(*ns)),
        }
    }
}

impl std::str::FromStr for Delay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") {
            Ok(Delay::Unbounded)
        } else {
            parse_duration(t).map(Delay::Bounded)
        }
    }
}

impl Serialize for Delay {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Delay {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn split_number(s: &str) -> Result<(f64, &str), Error> {
    let s = s.trim();
    let idx = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '_'))
        .unwrap_or(s.len());
    let (num, suffix) = s.split_at(idx);
    if num.is_empty() {
        return Err(Error::Unit(format!("missing number in {s:?}")));
    }
    let suffix = suffix.trim();
    if suffix.is_empty() {
        return Err(Error::Unit(format!("missing unit suffix in {s:?}")));
    }
    let value: f64 = num
        .replace('_', "")
        .parse()
        .map_err(|_| Error::Unit(format!("bad number in {s:?}")))?;
    Ok((value, suffix))
}

/// Parses `64MiB`, `2GiB`, `4KB`, `512B`.
pub fn parse_bytes(s: &str) -> Result<u64, Error> {
    let (value, suffix) = split_number(s)?;
    let scale = match suffix {
        "B" => 1,
        "KB" => 1_000,
        "MB" => 1_000_000,
        "GB" => 1_000_000_000,
        "KiB" => KIB,
        "MiB" => MIB,
        "GiB" => GIB,
        _ => {
            return Err(Error::Unit(format!(
                "unknown byte unit {suffix:?} in {s:?}"
            )))
        }
    };
    Ok((value * scale as f64).round() as u64)
}

/// Parses `350ms`, `1s`, `250us`, `10ns`.
pub fn parse_duration(s: &str) -> Result<u64, Error> {
    let (value, suffix) = split_number(s)?;
    let scale = match suffix {
        "ns" => 1,
        "us" => 1_000,
        "ms" => NANOS_PER_MS,
        "s" => NANOS_PER_SEC,
        "min" => 60 * NANOS_PER_SEC,
        _ => {
            return Err(Error::Unit(format!(
                "unknown time unit {suffix:?} in {s:?}"
            )))
        }
    };
    Ok((value * scale as f64).round() as u64)
}

/// Parses a bandwidth such as `380MiB/s` into bytes per second.
pub fn parse_rate(s: &str) -> Result<u64, Error> {
    let t = s.trim();
    let Some(bytes) = t.strip_suffix("/s") else {
        return Err(Error::Unit(format!("rate {s:?} must end in /s")));
    };
    parse_bytes(bytes)
}

pub fn format_duration(ns: u64) -> String {
    if ns % NANOS_PER_MS == 0 {
        format!("{}ms", ns / NANOS_PER_MS)
    } else {
        format!("{:.3}ms", ns as f64 / NANOS_PER_MS as f64)
    }
}

pub fn format_bytes(b: u64) -> String {
    if b >= GIB && b % GIB == 0 {
        format!("{}GiB", b / GIB)
    } else if b >= MIB && b % MIB == 0 {
        format!("{}MiB", b / MIB)
    } else if b >= KIB && b % KIB == 0 {
        format!("{}KiB", b / KIB)
    } else {
        format!("{b}B")
    }
}

pub fn ms(ns: u64) -> f64 {
    ns as f64 / NANOS_PER_MS as f64
}

/// Bytes transferable at `rate` bytes/s in `ns` nanoseconds, rounded down.
pub fn bytes_in(rate: u64, ns: u64) -> u64 {
    ((rate as u128 * ns as u128) / NANOS_PER_SEC as u128) as u64
}

/// Nanoseconds needed to move `bytes` at `rate` bytes/s, rounded up.
pub fn time_for(bytes: u64, rate: u64) -> u64 {
    let num = bytes as u128 * NANOS_PER_SEC as u128;
    num.div_ceil(rate as u128) as u64
}

macro_rules! serde_unit {
    ($name:ident, $parse:ident, $fmt:expr) => {
        /// Serde adapter for a unit-suffixed string field.
        pub mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&$fmt(*v))
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
                let s = String::deserialize(d)?;
                super::$parse(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_unit!(serde_bytes, parse_bytes, super::format_bytes);
serde_unit!(serde_duration, parse_duration, super::format_duration);
serde_unit!(serde_rate, parse_rate, |v: u64| format!(
    "{}/s",
    super::format_bytes(v)
));

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_suffixed_quantities() {
        assert_eq!(parse_bytes("64MiB").unwrap(), 64 * MIB);
        assert_eq!(parse_bytes("2GiB").unwrap(), 2 * GIB);
        assert_eq!(parse_bytes("4KB").unwrap(), 4000);
        assert_eq!(parse_duration("350ms").unwrap(), 350 * NANOS_PER_MS);
        assert_eq!(parse_duration("1.5s").unwrap(), 1_500 * NANOS_PER_MS);
        assert_eq!(parse_rate("380MiB/s").unwrap(), 380 * MIB);
        assert_eq!("inf".parse::<Delay>().unwrap(), Delay::Unbounded);
        assert_eq!("0ms".parse::<Delay>().unwrap(), Delay::ZERO);
    }

    #[test]
    fn rejects_bare_numbers() {
        assert!(parse_bytes("64").is_err());
        assert!(parse_duration("350").is_err());
        assert!(parse_rate("380MiB").is_err());
        assert!("12".parse::<Delay>().is_err());
        assert!(parse_bytes("3 parsecs").is_err());
    }

    #[test]
    fn time_and_bytes_are_inverse_within_rounding() {
        let rate = 380 * MIB;
        let t = time_for(256 * MIB, rate);
        assert!(bytes_in(rate, t) >= 256 * MIB);
        assert!(bytes_in(rate, t - 1) < 256 * MIB);
        // 256 MiB at 380 MiB/s
        assert_eq!(t / NANOS_PER_MS, 673);
    }
}
