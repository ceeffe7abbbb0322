//! Event queue ordered by `(time, insertion sequence)`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

#[derive(Debug)]
struct Slot<E> {
    time: u64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Slot<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<E> Eq for Slot<E> {}

impl<E> PartialOrd for Slot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Slot<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

#[derive(Debug)]
pub struct SimClock<E> {
    now: u64,
    seq: u64,
    heap: BinaryHeap<Reverse<Slot<E>>>,
}

impl<E> Default for SimClock<E> {
    fn default() -> Self {
        Self {
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
        }
    }
}

impl<E> SimClock<E> {
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Events scheduled in the past fire at the current time.
    pub fn schedule(&mut self, at: u64, event: E) {
        let time = at.max(self.now);
        self.heap.push(Reverse(Slot {
            time,
            seq: self.seq,
            event,
        }));
        self.seq += 1;
    }

    /// Pops the next event strictly before `limit`, advancing the clock to it.
    pub fn pop_before(&mut self, limit: u64) -> Option<(u64, E)> {
        if self.heap.peek()?.0.time >= limit {
            return None;
        }
        let Reverse(slot) = self.heap.pop()?;
        debug_assert!(slot.time >= self.now);
        self.now = slot.time;
        Some((slot.time, slot.event))
    }

    /// Moves the clock forward without firing anything.
    pub fn advance_to(&mut self, t: u64) {
        self.now = self.now.max(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_time_events_fire_in_insertion_order() {
        let mut c = SimClock::default();
        c.schedule(5, 'b');
        c.schedule(5, 'c');
        c.schedule(1, 'a');
        let order: Vec<char> = std::iter::from_fn(|| c.pop_before(10).map(|(_, e)| e)).collect();
        assert_eq!(order, vec!['a', 'b', 'c']);
    }

    #[test]
    fn time_never_decreases() {
        let mut c = SimClock::default();
        c.schedule(7, ());
        c.pop_before(10);
        c.schedule(3, ());
        assert_eq!(c.pop_before(10).unwrap().0, 7);
    }

    #[test]
    fn limit_is_exclusive() {
        let mut c = SimClock::default();
        c.schedule(10, ());
        assert!(c.pop_before(10).is_none());
        assert!(c.pop_before(11).is_some());
    }
}
