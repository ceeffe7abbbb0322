//! Executable acceptance checks shared by the test suite and `deltafair self-test`.
//!
//! Each check returns a [`CriterionResult`] instead of panicking so a caller
//! can report every line before deciding pass or fail.

mod analytic;
mod fairness;
mod kest;
mod micro;
mod state;

use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;

pub use analytic::{brute_force_buffer_reservation, violates_bound};
pub use fairness::{fairness_excess, random_fairness_scenario, FairnessCase};

/// Scenario files bundled with the crate, by name.
pub const SCENARIOS: [(&str, &str); 3] = [
    (
        "buffer_micro",
        include_str!("../../../../scenarios/buffer_micro.cfg"),
    ),
    (
        "cache_micro",
        include_str!("../../../../scenarios/cache_micro.cfg"),
    ),
    (
        "composition",
        include_str!("../../../../scenarios/composition.cfg"),
    ),
];

pub fn bundled(name: &str) -> crate::Result<crate::sim::Scenario> {
    let text = SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| crate::Error::Invalid(format!("no bundled scenario {name:?}")))?;
    crate::scenario::parse_scenario(text, name)
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {}: {} ({:.1} s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// What a check found: pass flag plus a one-line explanation.
pub(crate) struct Finding {
    pass: bool,
    detail: String,
}

impl Finding {
    pub(crate) fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    /// Conjunction of several sub-checks, details joined.
    pub(crate) fn all(parts: Vec<Finding>) -> Self {
        let pass = parts.iter().all(|p| p.pass);
        let detail = parts
            .iter()
            .map(|p| {
                if p.pass {
                    p.detail.clone()
                } else {
                    format!("[FAIL] {}", p.detail)
                }
            })
            .collect::<Vec<_>>()
            .join("; ");
        Self { pass, detail }
    }
}

type Check = fn() -> crate::Result<Finding>;

const CHECKS: [(u8, &str, Check); 11] = [
    (1, "buffer reservations", analytic::buffer_table),
    (2, "cache k-sweep reservations", analytic::cache_k_sweep),
    (3, "generic worked example", analytic::worked_example),
    (4, "buffer microbenchmark", micro::buffer),
    (5, "cache microbenchmark", micro::cache),
    (6, "cache delta sweep", micro::cache_sweep),
    (7, "composition", micro::composition),
    (8, "minimality oracle", analytic::minimality),
    (9, "state-machine invariants", state::invariants),
    (10, "k estimation closed loop", kest::closed_loop),
    (11, "delta-fairness property suite", fairness::suite),
];

pub fn criterion_ids() -> impl Iterator<Item = u8> {
    CHECKS.iter().map(|c| c.0)
}

/// Runs one criterion. An error inside the check counts as a failure.
pub fn run_criterion(id: u8) -> Option<CriterionResult> {
    let &(id, name, check) = CHECKS.iter().find(|c| c.0 == id)?;
    let t = Instant::now();
    let finding = check().unwrap_or_else(|e| Finding::new(false, format!("error: {e}")));
    Some(CriterionResult {
        id,
        name,
        pass: finding.pass,
        detail: finding.detail,
        elapsed: t.elapsed(),
    })
}
