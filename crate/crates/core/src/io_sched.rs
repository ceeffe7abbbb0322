//! Tick-based fair I/O scheduler.
//!
//! Each direction has a client lane with `rate * (1 - compaction_fraction)`
//! and a compaction lane with the rest. Within the client lane, every
//! backlogged client first spends tokens that refill at its base share
//! `lane / n`, then leftover budget is water-filled equally over clients
//! that still have demand. Budgets are whole bytes per tick with the
//! fractional remainder carried forward.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::ClientId;
use crate::error::{Error, Result};
use crate::units::NANOS_PER_SEC;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IoKind {
    /// Read served from disk on a cache miss.
    Fetch,
    /// Segment bytes written back from the write buffer.
    Flush,
    /// Background merge work, confined to the compaction lane.
    Compaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IoTask {
    pub id: u64,
    pub client: ClientId,
    pub kind: IoKind,
    pub direction: Direction,
    pub bytes: u64,
    pub submit_time: u64,
    /// Caller-defined correlation value.
    pub tag: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CompletedTask {
    pub task: IoTask,
    pub completion_time: u64,
}

impl CompletedTask {
    pub fn latency(&self) -> u64 {
        self.completion_time - self.task.submit_time
    }
}

#[derive(Debug, Clone)]
struct Pending {
    task: IoTask,
    remaining: u64,
}

#[derive(Debug, Clone)]
struct Lane {
    rate: u64,
    acc: u128,
    queues: Vec<VecDeque<Pending>>,
    demand: Vec<u64>,
    tokens: Vec<u64>,
    served_total: Vec<u64>,
    rotate: usize,
}

/// Bytes served to one queue during a tick, plus completion offsets.
#[derive(Default)]
struct TickService {
    served: u64,
    done: Vec<(IoTask, u64)>,
}

impl Lane {
    fn new(rate: u64, n: usize) -> Self {
        Self {
            rate,
            acc: 0,
            queues: vec![VecDeque::new(); n],
            demand: vec![0; n],
            tokens: vec![0; n],
            served_total: vec![0; n],
            rotate: 0,
        }
    }

    fn push(&mut self, slot: usize, task: IoTask) {
        self.demand[slot] += task.bytes;
        self.queues[slot].push_back(Pending {
            remaining: task.bytes,
            task,
        });
    }

    fn budget(&mut self, tick_ns: u64) -> u64 {
        self.acc += self.rate as u128 * tick_ns as u128;
        let b = self.acc / NANOS_PER_SEC as u128;
        self.acc %= NANOS_PER_SEC as u128;
        b as u64
    }

    fn serve(&mut self, slot: usize, mut amount: u64, svc: &mut TickService) {
        self.demand[slot] -= amount;
        self.served_total[slot] += amount;
        while amount > 0 {
            let head = self.queues[slot]
                .front_mut()
                .expect("demand implies a queued task");
            let take = head.remaining.min(amount);
            head.remaining -= take;
            amount -= take;
            svc.served += take;
            if head.remaining == 0 {
                let p = self.queues[slot].pop_front().unwrap();
                svc.done.push((p.task, svc.served));
            }
        }
    }

    /// Runs one tick with `budget` bytes and returns completions and unused budget.
    fn run(
        &mut self,
        start: u64,
        tick_ns: u64,
        budget: u64,
        base: u64,
    ) -> (Vec<CompletedTask>, u64) {
        let n = self.queues.len();
        for t in &mut self.tokens {
            *t = (*t + base).min(2 * base);
        }
        let active: Vec<usize> = (0..n)
            .map(|i| (i + self.rotate) % n)
            .filter(|&i| self.demand[i] > 0)
            .collect();
        self.rotate = (self.rotate + 1) % n.max(1);
        if active.is_empty() {
            return (Vec::new(), budget);
        }
        let mut left = budget;
        let mut svc: Vec<TickService> = (0..n).map(|_| TickService::default()).collect();
        for &i in &active {
            let s = self.demand[i].min(self.tokens[i]).min(left);
            if s > 0 {
                self.tokens[i] -= s;
                left -= s;
                self.serve(i, s, &mut svc[i]);
            }
        }
        // water-fill the leftover over clients that still want more
        let mut hungry: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| self.demand[i] > 0)
            .collect();
        while left > 0 && !hungry.is_empty() {
            let m = hungry.len() as u64;
            let each = left / m;
            let mut extra = left % m;
            let mut next = Vec::with_capacity(hungry.len());
            for &i in &hungry {
                let mut grant = each;
                if extra > 0 {
                    grant += 1;
                    extra -= 1;
                }
                let s = grant.min(self.demand[i]);
                if s > 0 {
                    left -= s;
                    self.serve(i, s, &mut svc[i]);
                }
                if self.demand[i] > 0 {
                    next.push(i);
                }
            }
            if next.len() == hungry.len() && each == 0 && extra == 0 {
                break;
            }
            hungry = next;
        }
        let fair = (budget / active.len() as u64).max(1);
        let mut out = Vec::new();
        for &i in &active {
            let s = &svc[i];
            let denom = if self.demand[i] > 0 {
                s.served
            } else {
                s.served.max(fair)
            };
            for &(task, off) in &s.done {
                let dt = (tick_ns as u128 * off as u128).div_ceil(denom.max(1) as u128) as u64;
                out.push(CompletedTask {
                    task,
                    completion_time: start + dt.min(tick_ns),
                });
            }
        }
        (out, left)
    }
}

#[derive(Debug, Clone)]
struct DirectionLanes {
    client: Lane,
    compaction: Lane,
    client_base: u64,
}

#[derive(Debug, Clone)]
pub struct IoScheduler {
    tick_ns: u64,
    now: u64,
    next_id: u64,
    work_conserving: bool,
    lanes: [DirectionLanes; 2],
}

fn dir_index(d: Direction) -> usize {
    match d {
        Direction::Read => 0,
        Direction::Write => 1,
    }
}

impl IoScheduler {
    pub const DEFAULT_TICK_NS: u64 = 1_000_000;

    pub fn new(
        read_bw: u64,
        write_bw: u64,
        compaction_fraction: f64,
        n_clients: usize,
        tick_ns: u64,
    ) -> Self {
        assert!(tick_ns > 0 && n_clients > 0);
        let make = |rate: u64| {
            let carve = (rate as f64 * compaction_fraction).round() as u64;
            let client_rate = rate - carve;
            let per_tick = (client_rate as u128 * tick_ns as u128 / NANOS_PER_SEC as u128) as u64;
            DirectionLanes {
                client: Lane::new(client_rate, n_clients),
                compaction: Lane::new(carve, 1),
                client_base: per_tick / n_clients as u64,
            }
        };
        Self {
            tick_ns,
            now: 0,
            next_id: 0,
            work_conserving: false,
            lanes: [make(read_bw), make(write_bw)],
        }
    }

    /// Lets either lane of a direction use budget the other leaves idle.
    pub fn set_work_conserving(&mut self, on: bool) {
        self.work_conserving = on;
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn tick_ns(&self) -> u64 {
        self.tick_ns
    }

    pub fn client_lane_rate(&self, d: Direction) -> u64 {
        self.lanes[dir_index(d)].client.rate
    }

    pub fn pending_bytes(&self, client: ClientId, d: Direction) -> u64 {
        self.lanes[dir_index(d)].client.demand[client.index()]
    }

    pub fn compaction_backlog(&self, d: Direction) -> u64 {
        self.lanes[dir_index(d)].compaction.demand[0]
    }

    pub fn served_bytes(&self, client: ClientId, d: Direction) -> u64 {
        self.lanes[dir_index(d)].client.served_total[client.index()]
    }

    pub fn is_idle(&self) -> bool {
        self.lanes
            .iter()
            .all(|l| l.client.demand.iter().all(|&d| d == 0) && l.compaction.demand[0] == 0)
    }

    /// Queues a task stamped with the current time and returns its id.
    pub fn submit(
        &mut self,
        client: ClientId,
        kind: IoKind,
        direction: Direction,
        bytes: u64,
        tag: u64,
    ) -> Result<u64> {
        if bytes == 0 {
            return Err(Error::ZeroByteTask);
        }
        let id = self.next_id;
        self.next_id += 1;
        let task = IoTask {
            id,
            client,
            kind,
            direction,
            bytes,
            submit_time: self.now,
            tag,
        };
        let lanes = &mut self.lanes[dir_index(direction)];
        match kind {
            IoKind::Compaction => lanes.compaction.push(0, task),
            _ => lanes.client.push(client.index(), task),
        }
        Ok(id)
    }

    /// Advances one tick and returns tasks finished within it, ordered by time.
    pub fn advance(&mut self) -> Vec<CompletedTask> {
        let (start, tick) = (self.now, self.tick_ns);
        let mut done = Vec::new();
        for lanes in &mut self.lanes {
            let cb = lanes.compaction.budget(tick);
            let kb = lanes.client.budget(tick);
            let (mut c_done, c_left) = lanes.compaction.run(start, tick, cb, cb);
            let extra = if self.work_conserving { c_left } else { 0 };
            let (k_done, k_left) = lanes.client.run(start, tick, kb + extra, lanes.client_base);
            if self.work_conserving && k_left > 0 && lanes.compaction.demand[0] > 0 {
                let (more, _) = lanes.compaction.run(start, tick, k_left, 0);
                c_done.extend(more);
            }
            done.extend(c_done);
            done.extend(k_done);
        }
        done.sort_by_key(|c| (c.completion_time, c.task.id));
        self.now += tick;
        done
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{MIB, NANOS_PER_MS};

    fn sched(n: usize) -> IoScheduler {
        IoScheduler::new(1400 * MIB, 980 * MIB, 0.3, n, NANOS_PER_MS)
    }

    #[test]
    fn zero_byte_task_rejected() {
        let mut s = sched(1);
        assert!(s
            .submit(ClientId(0), IoKind::Flush, Direction::Write, 0, 0)
            .is_err());
    }

    #[test]
    fn two_backlogged_clients_split_the_lane() {
        let mut s = sched(2);
        for c in 0..2 {
            s.submit(
                ClientId(c),
                IoKind::Flush,
                Direction::Write,
                10_000 * MIB,
                0,
            )
            .unwrap();
        }
        for _ in 0..1000 {
            s.advance();
        }
        for c in 0..2 {
            let got = s.served_bytes(ClientId(c), Direction::Write) as f64 / MIB as f64;
            assert!((got - 343.0).abs() < 0.5, "client {c} got {got} MiB/s");
        }
    }

    #[test]
    fn lone_client_gets_whole_lane() {
        let mut s = sched(4);
        s.submit(
            ClientId(2),
            IoKind::Flush,
            Direction::Write,
            10_000 * MIB,
            0,
        )
        .unwrap();
        for _ in 0..1000 {
            s.advance();
        }
        let got = s.served_bytes(ClientId(2), Direction::Write) as f64 / MIB as f64;
        assert!((got - 686.0).abs() < 0.5, "{got}");
    }

    #[test]
    fn completion_time_matches_rate() {
        let mut s = sched(1);
        s.submit(ClientId(0), IoKind::Fetch, Direction::Read, 98 * MIB, 7)
            .unwrap();
        let mut fin = None;
        while fin.is_none() {
            fin = s.advance().into_iter().next();
        }
        let fin = fin.unwrap();
        // 98 MiB at 980 MiB/s
        assert!((fin.latency() as i64 - 100 * NANOS_PER_MS as i64).abs() <= NANOS_PER_MS as i64);
        assert_eq!(fin.task.tag, 7);
    }

    #[test]
    fn compaction_lane_is_isolated_by_default() {
        let mut s = sched(1);
        s.submit(
            ClientId(0),
            IoKind::Compaction,
            Direction::Write,
            10_000 * MIB,
            0,
        )
        .unwrap();
        s.submit(
            ClientId(0),
            IoKind::Flush,
            Direction::Write,
            10_000 * MIB,
            0,
        )
        .unwrap();
        for _ in 0..1000 {
            s.advance();
        }
        let got = s.served_bytes(ClientId(0), Direction::Write) as f64 / MIB as f64;
        assert!((got - 686.0).abs() < 0.5);
        let carve_left = s.compaction_backlog(Direction::Write) as f64 / MIB as f64;
        assert!((10_000.0 - carve_left - 294.0).abs() < 0.5);
    }

    #[test]
    fn work_conserving_lends_idle_carve_out() {
        let mut s = sched(1);
        s.set_work_conserving(true);
        s.submit(
            ClientId(0),
            IoKind::Flush,
            Direction::Write,
            10_000 * MIB,
            0,
        )
        .unwrap();
        for _ in 0..1000 {
            s.advance();
        }
        let got = s.served_bytes(ClientId(0), Direction::Write) as f64 / MIB as f64;
        assert!((got - 980.0).abs() < 0.5, "{got}");
    }

    #[test]
    fn small_client_is_not_starved_by_hog() {
        let mut s = sched(2);
        s.submit(
            ClientId(0),
            IoKind::Flush,
            Direction::Write,
            10_000 * MIB,
            0,
        )
        .unwrap();
        for _ in 0..10 {
            s.advance();
        }
        s.submit(
            ClientId(1),
            IoKind::Flush,
            Direction::Write,
            343 * MIB / 10,
            0,
        )
        .unwrap();
        let mut t = 0;
        'outer: for _ in 0..1000 {
            for c in s.advance() {
                if c.task.client == ClientId(1) {
                    t = c.latency();
                    break 'outer;
                }
            }
        }
        assert!(
            (t as i64 - 100 * NANOS_PER_MS as i64).abs() <= 2 * NANOS_PER_MS as i64,
            "{t}"
        );
    }
}
