//! Delay-bounded fair sharing for write buffers and read caches.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod io_sched;
pub mod metrics;
pub mod read_cache;
pub mod reservation;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod units;
pub mod write_buffer;

pub use config::{ClientId, DeltaConfig, FairShareVector, RefillModel, ResourceSpec};
pub use error::{Error, Result};
pub use units::Delay;
