//! Read cache with per-client protection thresholds.
//!
//! Pages are fixed-size and keyed per tenant, so clients never share entries.
//! Eviction is LRU within each shard, skipping any owner whose usage would
//! drop below its threshold `rho`. A threshold pins a client's hot set while
//! the client is idle, so that after a ramp-up it only needs to refill
//! `f - rho` bytes.

use rustc_hash::FxHashMap;

use serde::Serialize;

use crate::config::ClientId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CachePage {
    pub owner: ClientId,
    pub key: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum AdmitOutcome {
    Admitted {
        evicted: Option<CachePage>,
    },
    AlreadyPresent,
    /// Every resident page is protected; the page is served but not cached.
    AdmissionBypassed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvictionRecord {
    pub time: u64,
    pub victim: CachePage,
    pub for_client: ClientId,
    pub victim_usage_after: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheCounters {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub bypasses: u64,
}

const NIL: u32 = u32::MAX;

/// A resident page, linked into its `(shard, owner)` recency list.
#[derive(Debug, Clone, Copy)]
struct Node {
    page: CachePage,
    stamp: u64,
    list: u32,
    prev: u32,
    next: u32,
}

#[derive(Debug, Clone, Copy)]
struct List {
    head: u32,
    tail: u32,
}

#[derive(Debug, Clone)]
pub struct CacheState {
    capacity: u64,
    page_size: u64,
    fair_share: Vec<u64>,
    rho: Vec<u64>,
    usage: Vec<u64>,
    used: u64,
    entries: FxHashMap<CachePage, u32>,
    nodes: Vec<Node>,
    free: Vec<u32>,
    /// `lists[shard * n + owner]`, oldest at the head.
    lists: Vec<List>,
    shards: usize,
    stamp: u64,
    now: u64,
    counters: Vec<CacheCounters>,
    log: Option<Vec<EvictionRecord>>,
}

fn shard_of(page: CachePage, shards: usize) -> usize {
    // splitmix64 finalizer
    let mut z = page.key ^ ((page.owner.0 as u64) << 40) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ((z ^ (z >> 31)) % shards as u64) as usize
}

impl CacheState {
    pub const DEFAULT_SHARDS: usize = 16;

    pub fn new(capacity: u64, page_size: u64, fair_share: Vec<u64>, shards: usize) -> Self {
        assert!(page_size > 0 && shards > 0);
        let n = fair_share.len();
        Self {
            capacity: capacity / page_size * page_size,
            page_size,
            fair_share,
            rho: vec![0; n],
            usage: vec![0; n],
            used: 0,
            entries: FxHashMap::default(),
            nodes: Vec::new(),
            free: Vec::new(),
            lists: vec![
                List {
                    head: NIL,
                    tail: NIL
                };
                shards * n
            ],
            shards,
            stamp: 0,
            now: 0,
            counters: vec![CacheCounters::default(); n],
            log: None,
        }
    }

    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn log(&self) -> &[EvictionRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn set_time(&mut self, now: u64) {
        self.now = now;
    }

    /// Installs new protection thresholds. Takes effect at the next eviction.
    pub fn set_thresholds(&mut self, rho: &[u64]) {
        assert_eq!(rho.len(), self.rho.len(), "one threshold per client");
        self.rho.copy_from_slice(rho);
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn page_size(&self) -> u64 {
        self.page_size
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn usage(&self, c: ClientId) -> u64 {
        self.usage[c.index()]
    }

    pub fn usages(&self) -> &[u64] {
        &self.usage
    }

    pub fn threshold(&self, c: ClientId) -> u64 {
        self.rho[c.index()]
    }

    pub fn fair_share(&self, c: ClientId) -> u64 {
        self.fair_share[c.index()]
    }

    pub fn counters(&self, c: ClientId) -> CacheCounters {
        self.counters[c.index()]
    }

    pub fn contains(&self, page: CachePage) -> bool {
        self.entries.contains_key(&page)
    }

    fn unlink(&mut self, idx: u32) {
        let Node {
            list, prev, next, ..
        } = self.nodes[idx as usize];
        match prev {
            NIL => self.lists[list as usize].head = next,
            p => self.nodes[p as usize].next = next,
        }
        match next {
            NIL => self.lists[list as usize].tail = prev,
            nx => self.nodes[nx as usize].prev = prev,
        }
    }

    fn push_back(&mut self, idx: u32) {
        self.stamp += 1;
        let list = self.nodes[idx as usize].list;
        let tail = self.lists[list as usize].tail;
        let node = &mut self.nodes[idx as usize];
        node.stamp = self.stamp;
        node.prev = tail;
        node.next = NIL;
        match tail {
            NIL => self.lists[list as usize].head = idx,
            t => self.nodes[t as usize].next = idx,
        }
        self.lists[list as usize].tail = idx;
    }

    fn touch(&mut self, page: CachePage) {
        let idx = self.entries[&page];
        self.unlink(idx);
        self.push_back(idx);
    }

    /// Looks a page up and refreshes its recency on a hit.
    pub fn lookup(&mut self, page: CachePage) -> bool {
        let hit = self.entries.contains_key(&page);
        let ctr = &mut self.counters[page.owner.index()];
        if hit {
            ctr.hits += 1;
            self.touch(page);
        } else {
            ctr.misses += 1;
        }
        hit
    }

    fn evictable(&self, owner: usize) -> bool {
        self.usage[owner] >= self.rho[owner] + self.page_size
    }

    /// Oldest unprotected page, searching the home shard before the others.
    fn pick_victim(&self, home: usize) -> Option<u32> {
        let n = self.usage.len();
        for step in 0..self.shards {
            let base = (home + step) % self.shards * n;
            let best = (0..n)
                .filter(|&owner| self.evictable(owner))
                .filter_map(|owner| match self.lists[base + owner].head {
                    NIL => None,
                    h => Some((self.nodes[h as usize].stamp, h)),
                })
                .min();
            if let Some((_, idx)) = best {
                return Some(idx);
            }
        }
        None
    }

    fn remove(&mut self, idx: u32) -> CachePage {
        self.unlink(idx);
        let page = self.nodes[idx as usize].page;
        self.entries.remove(&page);
        self.free.push(idx);
        self.usage[page.owner.index()] -= self.page_size;
        self.used -= self.page_size;
        page
    }

    /// Inserts a fetched page, evicting at most one unprotected page.
    pub fn admit(&mut self, page: CachePage) -> Result<AdmitOutcome> {
        if self.page_size > self.capacity {
            return Err(Error::ExceedsCapacity {
                size: self.page_size,
                capacity: self.capacity,
            });
        }
        if self.entries.contains_key(&page) {
            self.touch(page);
            return Ok(AdmitOutcome::AlreadyPresent);
        }
        let home = shard_of(page, self.shards);
        let mut evicted = None;
        if self.used + self.page_size > self.capacity {
            let Some(victim) = self.pick_victim(home) else {
                self.counters[page.owner.index()].bypasses += 1;
                return Ok(AdmitOutcome::AdmissionBypassed);
            };
            let victim = self.remove(victim);
            self.counters[victim.owner.index()].evictions += 1;
            let (now, after) = (self.now, self.usage[victim.owner.index()]);
            if let Some(log) = self.log.as_mut() {
                log.push(EvictionRecord {
                    time: now,
                    victim,
                    for_client: page.owner,
                    victim_usage_after: after,
                });
            }
            evicted = Some(victim);
        }
        let node = Node {
            page,
            stamp: 0,
            list: (home * self.usage.len() + page.owner.index()) as u32,
            prev: NIL,
            next: NIL,
        };
        let idx = match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        };
        self.entries.insert(page, idx);
        self.push_back(idx);
        self.usage[page.owner.index()] += self.page_size;
        self.used += self.page_size;
        Ok(AdmitOutcome::Admitted { evicted })
    }

    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let sum: u64 = self.usage.iter().sum();
        if sum != self.used || self.used > self.capacity {
            return Err(format!(
                "usage sum {sum}, used {}, capacity {}",
                self.used, self.capacity
            ));
        }
        if self.entries.len() as u64 * self.page_size != self.used {
            return Err("entry count disagrees with usage".into());
        }
        let mut linked = 0;
        for (l, list) in self.lists.iter().enumerate() {
            let (mut at, mut prev) = (list.head, NIL);
            while at != NIL {
                let node = &self.nodes[at as usize];
                if node.list as usize != l || node.prev != prev {
                    return Err(format!("list {l} broken at node {at}"));
                }
                if l % self.usage.len() != node.page.owner.index() {
                    return Err(format!("page of {} linked into list {l}", node.page.owner));
                }
                (prev, at) = (at, node.next);
                linked += 1;
            }
            if list.tail != prev {
                return Err(format!("list {l} tail mismatch"));
            }
        }
        if linked != self.entries.len() {
            return Err(format!(
                "{linked} linked nodes for {} entries",
                self.entries.len()
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(owner: u32, key: u64) -> CachePage {
        CachePage {
            owner: ClientId(owner),
            key,
        }
    }

    #[test]
    fn miss_then_hit() {
        let mut c = CacheState::new(4, 1, vec![2, 2], 1);
        assert!(!c.lookup(page(0, 1)));
        c.admit(page(0, 1)).unwrap();
        assert!(c.lookup(page(0, 1)));
        assert!(!c.lookup(page(1, 1)), "keys are tenant-scoped");
        assert_eq!(c.counters(ClientId(0)).hits, 1);
    }

    #[test]
    fn lru_eviction_without_thresholds() {
        let mut c = CacheState::new(3, 1, vec![2, 2], 1);
        for k in 0..3 {
            c.admit(page(0, k)).unwrap();
        }
        c.lookup(page(0, 0));
        let out = c.admit(page(1, 9)).unwrap();
        assert_eq!(
            out,
            AdmitOutcome::Admitted {
                evicted: Some(page(0, 1))
            }
        );
        c.check_invariants().unwrap();
    }

    #[test]
    fn protected_owner_is_skipped() {
        // A holds 3 pages with rho 3, B holds 1 page
        let mut c = CacheState::new(4, 1, vec![2, 2], 1);
        c.set_thresholds(&[3, 0]);
        for k in 0..3 {
            c.admit(page(0, k)).unwrap();
        }
        c.admit(page(1, 0)).unwrap();
        let out = c.admit(page(1, 1)).unwrap();
        assert_eq!(
            out,
            AdmitOutcome::Admitted {
                evicted: Some(page(1, 0))
            }
        );
        assert_eq!(c.usage(ClientId(0)), 3);
    }

    #[test]
    fn eviction_stops_at_threshold() {
        let mut c = CacheState::new(4, 1, vec![2, 2], 1);
        c.set_thresholds(&[2, 0]);
        for k in 0..4 {
            c.admit(page(0, k)).unwrap();
        }
        for k in 0..4 {
            c.admit(page(1, k)).unwrap();
        }
        assert_eq!(c.usage(ClientId(0)), 2, "never below rho");
        assert_eq!(c.usage(ClientId(1)), 2);
    }

    #[test]
    fn fully_protected_cache_bypasses() {
        let mut c = CacheState::new(2, 1, vec![1, 1], 4);
        c.set_thresholds(&[1, 1]);
        c.admit(page(0, 0)).unwrap();
        c.admit(page(1, 0)).unwrap();
        assert_eq!(
            c.admit(page(1, 1)).unwrap(),
            AdmitOutcome::AdmissionBypassed
        );
        assert!(!c.contains(page(1, 1)));
        c.check_invariants().unwrap();
    }

    #[test]
    fn sharded_eviction_falls_back_across_shards() {
        let mut c = CacheState::new(8, 1, vec![4, 4], 16);
        c.set_thresholds(&[0, 8]);
        for k in 0..7 {
            c.admit(page(1, k)).unwrap();
        }
        c.admit(page(0, 0)).unwrap();
        // only client 0's single page is evictable, wherever it lives
        let out = c.admit(page(1, 100)).unwrap();
        assert_eq!(
            out,
            AdmitOutcome::Admitted {
                evicted: Some(page(0, 0))
            }
        );
    }

    #[test]
    fn eviction_log() {
        let mut c = CacheState::new(1, 1, vec![1, 1], 1);
        c.enable_log();
        c.set_time(42);
        c.admit(page(0, 0)).unwrap();
        c.admit(page(1, 0)).unwrap();
        let rec = &c.log()[0];
        assert_eq!(
            (rec.time, rec.victim, rec.for_client),
            (42, page(0, 0), ClientId(1))
        );
    }
}
