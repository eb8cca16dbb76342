//! Directed nearest-neighbor graph over the live RAG nodes.
//!
//! Every node with at least one non-blacklisted edge points at its
//! minimum-weight neighbor, so the out-degree is one and, under the
//! strict edge order (weight, smaller id, larger id), every cycle of the
//! pointer map is a mutual pair of length two. Those 2-cycles are the
//! merge candidates. After a merge only the second-order neighborhood of
//! the survivor is rescanned; after a blacklist only the two endpoints.
//!
//! The cycle set is kept ordered by (weight, pair), which makes the
//! minimum-cycle query logarithmic. Weights are non-negative, so their
//! IEEE bit patterns sort like the values themselves.

use crate::graph::Rag;
use std::collections::BTreeSet;

/// Work performed by a build or an incremental update.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    /// Nodes whose nearest neighbor was recomputed.
    pub rescanned: usize,
    /// RAG edges examined while recomputing them.
    pub edges_examined: u64,
}

#[derive(Debug, Clone)]
pub struct Nng {
    /// Per region id: (nearest neighbor, edge weight).
    nn: Vec<Option<(u32, f64)>>,
    /// Cycles keyed by (weight bits, a, b) with a < b.
    cycle_set: BTreeSet<(u64, u32, u32)>,
    /// Per region id: (partner, weight bits) of its registered cycle.
    in_cycle: Vec<Option<(u32, u64)>>,
}

fn ordered(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

impl Nng {
    /// Point every live node at its minimum-weight non-blacklisted
    /// neighbor and enumerate the mutual pairs.
    pub fn build(rag: &Rag) -> (Self, UpdateStats) {
        let n = rag.initial_regions() as usize;
        let mut nng = Self {
            nn: vec![None; n],
            cycle_set: BTreeSet::new(),
            in_cycle: vec![None; n],
        };
        let mut stats = UpdateStats::default();
        for v in rag.live_ids() {
            nng.nn[v as usize] = rag.min_neighbor(v);
            stats.rescanned += 1;
            stats.edges_examined += rag.degree(v) as u64;
        }
        for v in rag.live_ids() {
            if let Some((t, w)) = nng.nn[v as usize] {
                if v < t && nng.nn[t as usize].map(|(u, _)| u) == Some(v) {
                    nng.register_cycle(v, t, w);
                }
            }
        }
        (nng, stats)
    }

    pub fn nn(&self, v: u32) -> Option<(u32, f64)> {
        self.nn[v as usize]
    }

    pub fn num_cycles(&self) -> usize {
        self.cycle_set.len()
    }

    /// Current mutual pairs, ascending.
    pub fn cycle_pairs(&self) -> Vec<(u32, u32)> {
        self.cycle_set.iter().map(|&(_, a, b)| (a, b)).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Cycle whose connecting weight is minimal, ties broken by the
    /// lexicographically smallest pair. `None` when no cycle exists.
    pub fn min_cycle(&self) -> Option<((u32, u32), f64)> {
        self.cycle_set.first().map(|&(bits, a, b)| ((a, b), f64::from_bits(bits)))
    }

    fn register_cycle(&mut self, a: u32, b: u32, w: f64) {
        let bits = w.to_bits();
        debug_assert!(self.in_cycle[a as usize].is_none() && self.in_cycle[b as usize].is_none());
        self.cycle_set.insert((bits, a, b));
        self.in_cycle[a as usize] = Some((b, bits));
        self.in_cycle[b as usize] = Some((a, bits));
    }

    fn unregister_cycle(&mut self, a: u32, b: u32) {
        if let Some((p, bits)) = self.in_cycle[a as usize] {
            if p == b {
                let (x, y) = ordered(a, b);
                self.cycle_set.remove(&(bits, x, y));
                self.in_cycle[a as usize] = None;
                self.in_cycle[b as usize] = None;
            }
        }
    }

    /// Recompute `nn` for a set of nodes and repair cycle membership for
    /// every pair whose mutual status may have changed: a pair is
    /// affected only when some endpoint's pointer changed, so the old and
    /// new targets of the rescanned nodes cover all of them.
    fn rescan_and_repair(&mut self, rag: &Rag, rescan: &BTreeSet<u32>) -> UpdateStats {
        let mut stats = UpdateStats::default();
        let mut candidates: BTreeSet<(u32, u32)> = BTreeSet::new();
        for &v in rescan {
            if !rag.is_live(v) {
                continue;
            }
            let old = self.nn[v as usize];
            let new = rag.min_neighbor(v);
            stats.rescanned += 1;
            stats.edges_examined += rag.degree(v) as u64;
            self.nn[v as usize] = new;
            if let Some((t, _)) = old {
                candidates.insert(ordered(v, t));
            }
            if let Some((t, _)) = new {
                candidates.insert(ordered(v, t));
            }
        }
        for &(a, b) in &candidates {
            self.unregister_cycle(a, b);
        }
        for &(a, b) in &candidates {
            if !rag.is_live(a) || !rag.is_live(b) {
                continue;
            }
            if let (Some((ta, wa)), Some((tb, _))) = (self.nn[a as usize], self.nn[b as usize]) {
                if ta == b && tb == a && self.in_cycle[a as usize].is_none() {
                    self.register_cycle(a, b, wa);
                }
            }
        }
        stats
    }

    /// Repair the graph after `rag` merged `absorbed` into `survivor`.
    /// Rescans exactly the survivor, its neighbors, and its neighbors'
    /// neighbors; the result equals a full rebuild.
    pub fn update_after_merge(&mut self, rag: &Rag, survivor: u32, absorbed: u32) -> UpdateStats {
        let mut rescan = BTreeSet::new();
        rescan.insert(survivor);
        for &n in rag.neighbors(survivor).keys() {
            rescan.insert(n);
            for &m in rag.neighbors(n).keys() {
                rescan.insert(m);
            }
        }
        // retire the absorbed node and any cycle it participated in
        if let Some((t, _)) = self.nn[absorbed as usize] {
            self.unregister_cycle(absorbed, t);
        }
        if let Some((p, _)) = self.in_cycle[absorbed as usize] {
            self.unregister_cycle(absorbed, p);
        }
        self.nn[absorbed as usize] = None;
        self.rescan_and_repair(rag, &rescan)
    }

    /// Repair the graph after the pair (a, b) was blacklisted: only the
    /// two endpoints can change their pointer.
    pub fn update_after_blacklist(&mut self, rag: &Rag, a: u32, b: u32) -> UpdateStats {
        let rescan: BTreeSet<u32> = [a, b].into_iter().collect();
        self.rescan_and_repair(rag, &rescan)
    }

    /// Structural equality with another graph: same pointers, same
    /// weights, same cycles.
    pub fn same_as(&self, other: &Nng) -> bool {
        self.nn == other.nn && self.cycle_set == other.cycle_set
    }
}
