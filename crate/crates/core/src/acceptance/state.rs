//! Randomized operation sequences against the buffer and cache state machines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Finding;
use crate::config::ClientId;
use crate::read_cache::{AdmitOutcome, CachePage, CacheState};
use crate::write_buffer::{BufferState, FlushTask, WriteRequest};
use crate::Result;

const SEQUENCES: u64 = 100_000;
const STEPS: usize = 24;

pub(crate) fn invariants() -> Result<Finding> {
    for seed in 0..SEQUENCES {
        if let Err(e) = buffer_sequence(seed) {
            return Ok(Finding::new(false, format!("buffer sequence {seed}: {e}")));
        }
        if let Err(e) = cache_sequence(seed) {
            return Ok(Finding::new(false, format!("cache sequence {seed}: {e}")));
        }
    }
    Ok(Finding::new(
        true,
        format!("{SEQUENCES} buffer and {SEQUENCES} cache sequences of {STEPS} operations"),
    ))
}

fn below_share_waiting(s: &BufferState) -> bool {
    s.queued().any(|r| s.below_share(r.client))
}

/// After a drain, nothing left in the queue may be both ungated and admissible.
fn check_drained(s: &BufferState) -> std::result::Result<(), String> {
    let gate = below_share_waiting(s);
    for r in s.queued() {
        if gate && !s.below_share(r.client) {
            continue;
        }
        let room = if s.reserved_eligible(r.client) {
            s.reserved_free() + s.global_free()
        } else {
            s.global_free()
        };
        if r.size <= room {
            return Err(format!(
                "request {} of {} left queued with {room} bytes free",
                r.id, r.client
            ));
        }
    }
    Ok(())
}

/// Equal-sized requests of one client are granted in arrival order.
fn check_fifo(
    s: &BufferState,
    granted: &[(WriteRequest, crate::write_buffer::AllocationOutcome)],
) -> std::result::Result<(), String> {
    for (g, _) in granted {
        if s.queued()
            .any(|r| r.client == g.client && r.size == g.size && r.id < g.id)
        {
            return Err(format!(
                "request {} of {} overtook an earlier equal request",
                g.id, g.client
            ));
        }
    }
    Ok(())
}

fn buffer_sequence(seed: u64) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=6);
    let segment = 4;
    let f = segment * rng.random_range(1..=4);
    let rho: Vec<u64> = (0..n)
        .map(|_| segment * rng.random_range(0..=f / segment))
        .collect();
    let mut s = BufferState::new(f * n as u64, segment, vec![f; n], rho);
    let mut tasks: Vec<FlushTask> = Vec::new();
    let mut next_id = 0;
    for step in 0..STEPS {
        s.set_time(step as u64);
        match rng.random_range(0..4) {
            0 | 1 => {
                let client = ClientId(rng.random_range(0..n) as u32);
                let gated_before = below_share_waiting(&s);
                let over = !s.below_share(client);
                let req = WriteRequest {
                    id: next_id,
                    client,
                    size: rng.random_range(1..=f + segment),
                    enqueue_time: step as u64,
                };
                next_id += 1;
                let out = s.try_allocate(req).map_err(|e| e.to_string())?;
                if out.is_granted() && over && gated_before {
                    return Err(format!(
                        "over-share {client} granted ahead of a below-share waiter"
                    ));
                }
            }
            2 => {
                let thresholds: Vec<u64> = (0..n).map(|_| rng.random_range(1..=f)).collect();
                tasks.extend(s.schedule_flush(&thresholds));
            }
            _ => {
                if tasks.is_empty() {
                    continue;
                }
                let i = rng.random_range(0..tasks.len());
                let part = rng.random_range(1..=tasks[i].bytes);
                let client = tasks[i].client;
                tasks[i].bytes -= part;
                if tasks[i].bytes == 0 {
                    tasks.swap_remove(i);
                }
                let granted = s
                    .on_flush_complete(client, part)
                    .map_err(|e| e.to_string())?;
                check_drained(&s)?;
                check_fifo(&s, &granted)?;
            }
        }
        s.check_invariants()?;
    }
    Ok(())
}

fn cache_sequence(seed: u64) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = rng.random_range(2..=6);
    let page = 1;
    let f = rng.random_range(1..=6);
    let shards = rng.random_range(1..=3);
    let mut c = CacheState::new(f * n as u64, page, vec![f; n], shards);
    c.enable_log();
    let mut rho: Vec<u64> = (0..n).map(|_| rng.random_range(0..=f)).collect();
    c.set_thresholds(&rho);
    for step in 0..STEPS {
        c.set_time(step as u64);
        let p = CachePage {
            owner: ClientId(rng.random_range(0..n) as u32),
            key: rng.random_range(0..2 * f),
        };
        match rng.random_range(0..8) {
            0 => {
                rho = (0..n).map(|_| rng.random_range(0..=f)).collect();
                c.set_thresholds(&rho);
            }
            1 | 2 => {
                c.lookup(p);
            }
            _ => {
                let logged = c.log().len();
                let out = c.admit(p).map_err(|e| e.to_string())?;
                for ev in &c.log()[logged..] {
                    if ev.victim_usage_after < rho[ev.victim.owner.index()] {
                        return Err(format!("evicted {} below its threshold", ev.victim.owner));
                    }
                }
                if out == AdmitOutcome::AdmissionBypassed {
                    let evictable = (0..n).any(|o| c.usage(ClientId(o as u32)) >= rho[o] + page);
                    if evictable {
                        return Err("admission bypassed while a page was evictable".into());
                    }
                }
            }
        }
        c.check_invariants()?;
    }
    Ok(())
}
