//! Region statistics and the region adjacency graph.
//!
//! One `Rag` is owned by one segmentation job and mutated on a single
//! thread; merges contract the graph in place. Edge weights are the
//! Euclidean distance between region mean colors and are recomputed from
//! the merged statistics whenever an incident region changes, so stored
//! weights always agree with the statistics they derive from.

use crate::pixel::{LabelMap, RgbImage};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("label map {lm_w}x{lm_h} does not match image {img_w}x{img_h}")]
    DimensionMismatch { img_w: u32, img_h: u32, lm_w: u32, lm_h: u32 },
    #[error("regions {a} and {b} are not adjacent")]
    NotAdjacent { a: u32, b: u32 },
    #[error("pair ({a}, {b}) carries boundary evidence and cannot merge")]
    Blacklisted { a: u32, b: u32 },
    #[error("region {id} is not live")]
    DeadRegion { id: u32 },
}

/// Per-region pixel count and per-channel color sums. Merging two
/// regions is componentwise addition, so it is O(1), commutative and
/// associative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub pixel_count: u64,
    pub sum: [f64; 3],
    pub sum_sq: [f64; 3],
}

impl RegionStats {
    pub fn zero() -> Self {
        Self { pixel_count: 0, sum: [0.0; 3], sum_sq: [0.0; 3] }
    }

    pub fn from_mean(mean: [f64; 3], pixel_count: u64) -> Self {
        let k = pixel_count as f64;
        Self {
            pixel_count,
            sum: [mean[0] * k, mean[1] * k, mean[2] * k],
            sum_sq: [mean[0] * mean[0] * k, mean[1] * mean[1] * k, mean[2] * mean[2] * k],
        }
    }

    pub fn add_pixel(&mut self, rgb: [u8; 3]) {
        self.pixel_count += 1;
        for (c, &raw) in rgb.iter().enumerate() {
            let v = raw as f64;
            self.sum[c] += v;
            self.sum_sq[c] += v * v;
        }
    }

    pub fn merged(&self, other: &Self) -> Self {
        Self {
            pixel_count: self.pixel_count + other.pixel_count,
            sum: [
                self.sum[0] + other.sum[0],
                self.sum[1] + other.sum[1],
                self.sum[2] + other.sum[2],
            ],
            sum_sq: [
                self.sum_sq[0] + other.sum_sq[0],
                self.sum_sq[1] + other.sum_sq[1],
                self.sum_sq[2] + other.sum_sq[2],
            ],
        }
    }

    pub fn mean(&self) -> [f64; 3] {
        let k = self.pixel_count as f64;
        [self.sum[0] / k, self.sum[1] / k, self.sum[2] / k]
    }
}

fn color_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    (d0 * d0 + d1 * d1 + d2 * d2).sqrt()
}

/// One line of the exportable merge log.
#[derive(Debug, Clone, Copy)]
pub struct MergeLogEntry {
    pub step: u64,
    pub survivor: u32,
    pub absorbed: u32,
    pub weight: f64,
}

/// Undirected weighted region adjacency graph with an in-place merge
/// operation and a boundary-evidence blacklist.
#[derive(Debug, Clone)]
pub struct Rag {
    width: u32,
    height: u32,
    stats: Vec<Option<RegionStats>>,
    adj: Vec<BTreeMap<u32, f64>>,
    bl_adj: Vec<BTreeSet<u32>>,
    pixels: Vec<Vec<u32>>,
    parent: Vec<u32>,
    num_live: u32,
    edge_count: usize,
    merge_log: Vec<MergeLogEntry>,
}

impl Rag {
    /// Build the graph of a labeled image: one node per region with exact
    /// color sums, one edge per 4-adjacent region pair, empty blacklist.
    pub fn build(img: &RgbImage, lm: &LabelMap) -> Result<Self, GraphError> {
        if img.width() != lm.width() || img.height() != lm.height() {
            return Err(GraphError::DimensionMismatch {
                img_w: img.width(),
                img_h: img.height(),
                lm_w: lm.width(),
                lm_h: lm.height(),
            });
        }
        let k = lm.num_regions() as usize;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut stats = vec![RegionStats::zero(); k];
        let mut pixels: Vec<Vec<u32>> = vec![Vec::new(); k];
        let mut adj: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); k];
        let mut edge_count = 0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let l = lm.labels()[i];
                stats[l as usize].add_pixel(img.rgb_at(i));
                pixels[l as usize].push(i as u32);
                for j in [if x + 1 < w { Some(i + 1) } else { None }, if y + 1 < h {
                    Some(i + w)
                } else {
                    None
                }]
                .into_iter()
                .flatten()
                {
                    let m = lm.labels()[j];
                    if m != l && adj[l as usize].insert(m, 0.0).is_none() {
                        adj[m as usize].insert(l, 0.0);
                        edge_count += 1;
                    }
                }
            }
        }
        let mut rag = Self {
            width: img.width(),
            height: img.height(),
            stats: stats.into_iter().map(Some).collect(),
            adj,
            bl_adj: vec![BTreeSet::new(); k],
            pixels,
            parent: (0..k as u32).collect(),
            num_live: k as u32,
            edge_count,
            merge_log: Vec::new(),
        };
        for a in 0..k as u32 {
            let mean_a = rag.mean(a);
            let nbrs: Vec<u32> = rag.adj[a as usize].keys().cloned().collect();
            for b in nbrs {
                if b > a {
                    let w = color_distance(mean_a, rag.mean(b));
                    rag.adj[a as usize].insert(b, w);
                    rag.adj[b as usize].insert(a, w);
                }
            }
        }
        Ok(rag)
    }

    /// Assemble a graph directly from synthesized statistics and an edge
    /// list; weights are derived from the means. Supports the random
    /// graph fixtures — such nodes own no pixels.
    pub fn from_parts(stats: Vec<RegionStats>, edges: &[(u32, u32)]) -> Self {
        let k = stats.len();
        let mut adj: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); k];
        let mut edge_count = 0;
        for &(a, b) in edges {
            assert!(a != b && (a as usize) < k && (b as usize) < k);
            let w = color_distance(stats[a as usize].mean(), stats[b as usize].mean());
            if adj[a as usize].insert(b, w).is_none() {
                adj[b as usize].insert(a, w);
                edge_count += 1;
            }
        }
        Self {
            width: 0,
            height: 0,
            stats: stats.into_iter().map(Some).collect(),
            adj,
            bl_adj: vec![BTreeSet::new(); k],
            pixels: vec![Vec::new(); k],
            parent: (0..k as u32).collect(),
            num_live: k as u32,
            edge_count,
            merge_log: Vec::new(),
        }
    }

    pub fn initial_regions(&self) -> u32 {
        self.parent.len() as u32
    }

    pub fn num_live(&self) -> u32 {
        self.num_live
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_live(&self, id: u32) -> bool {
        (id as usize) < self.stats.len() && self.stats[id as usize].is_some()
    }

    /// Live region ids in ascending order.
    pub fn live_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.stats
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|_| i as u32))
    }

    pub fn stats(&self, id: u32) -> &RegionStats {
        self.stats[id as usize].as_ref().expect("region is not live")
    }

    pub fn mean(&self, id: u32) -> [f64; 3] {
        self.stats(id).mean()
    }

    /// Row-major pixel indices owned by a live region.
    pub fn region_pixels(&self, id: u32) -> &[u32] {
        &self.pixels[id as usize]
    }

    /// Neighbor map of a region: id -> edge weight, ascending by id.
    pub fn neighbors(&self, id: u32) -> &BTreeMap<u32, f64> {
        &self.adj[id as usize]
    }

    pub fn degree(&self, id: u32) -> usize {
        self.adj[id as usize].len()
    }

    /// Dissimilarity between two adjacent live regions: the weight of the
    /// single region-level edge joining them.
    pub fn dissimilarity(&self, a: u32, b: u32) -> Result<f64, GraphError> {
        for id in [a, b] {
            if !self.is_live(id) {
                return Err(GraphError::DeadRegion { id });
            }
        }
        self.adj[a as usize]
            .get(&b)
            .copied()
            .ok_or(GraphError::NotAdjacent { a, b })
    }

    /// Minimum-weight non-blacklisted neighbor, ties broken by smallest
    /// neighbor id. `None` when every edge is blacklisted or the node is
    /// isolated.
    pub fn min_neighbor(&self, a: u32) -> Option<(u32, f64)> {
        debug_assert!(self.is_live(a));
        let mut best: Option<(u32, f64)> = None;
        for (&n, &w) in &self.adj[a as usize] {
            if self.bl_adj[a as usize].contains(&n) {
                continue;
            }
            // ascending id iteration: strict < keeps the smallest id on ties
            if best.is_none_or(|(_, bw)| w < bw) {
                best = Some((n, w));
            }
        }
        best
    }

    pub fn is_blacklisted(&self, a: u32, b: u32) -> bool {
        self.bl_adj[a as usize].contains(&b)
    }

    /// Record boundary evidence between two adjacent regions. The pair is
    /// excluded from candidate search and merging until either endpoint
    /// merges. Idempotent.
    pub fn mark_boundary(&mut self, a: u32, b: u32) -> Result<(), GraphError> {
        if !self.adj[a as usize].contains_key(&b) {
            return Err(GraphError::NotAdjacent { a, b });
        }
        self.bl_adj[a as usize].insert(b);
        self.bl_adj[b as usize].insert(a);
        Ok(())
    }

    /// Current blacklist as ordered pairs (a < b).
    pub fn blacklisted_pairs(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (a, set) in self.bl_adj.iter().enumerate() {
            for &b in set {
                if (a as u32) < b {
                    out.push((a as u32, b));
                }
            }
        }
        out
    }

    /// True while at least one live edge carries no boundary evidence.
    pub fn has_unblacklisted_edge(&self) -> bool {
        self.live_ids().any(|a| {
            self.adj[a as usize]
                .keys()
                .any(|&b| b > a && !self.bl_adj[a as usize].contains(&b))
        })
    }

    /// Merge two adjacent, non-blacklisted regions. The smaller id
    /// survives; statistics add, neighbor sets union, every weight on a
    /// surviving edge is recomputed from the merged means, and blacklist
    /// entries mentioning either endpoint are dropped (the merged region
    /// is a fresh hypothesis). Returns the survivor id.
    pub fn merge(&mut self, a: u32, b: u32) -> Result<u32, GraphError> {
        for id in [a, b] {
            if !self.is_live(id) {
                return Err(GraphError::DeadRegion { id });
            }
        }
        if a == b || !self.adj[a as usize].contains_key(&b) {
            return Err(GraphError::NotAdjacent { a, b });
        }
        if self.is_blacklisted(a, b) {
            return Err(GraphError::Blacklisted { a, b });
        }
        let survivor = a.min(b);
        let dead = a.max(b);
        let weight = self.adj[a as usize][&b];

        let dead_stats = self.stats[dead as usize].take().unwrap();
        let s = self.stats[survivor as usize].as_mut().unwrap();
        *s = s.merged(&dead_stats);

        // pixel lists: append the shorter list onto the longer one
        let mut dead_pixels = std::mem::take(&mut self.pixels[dead as usize]);
        if dead_pixels.len() > self.pixels[survivor as usize].len() {
            std::mem::swap(&mut dead_pixels, &mut self.pixels[survivor as usize]);
        }
        self.pixels[survivor as usize].append(&mut dead_pixels);

        // drop boundary evidence touching either endpoint
        for id in [survivor, dead] {
            let partners = std::mem::take(&mut self.bl_adj[id as usize]);
            for p in partners {
                self.bl_adj[p as usize].remove(&id);
            }
        }

        // contract the edge and union the neighbor sets
        let dead_adj = std::mem::take(&mut self.adj[dead as usize]);
        self.adj[survivor as usize].remove(&dead);
        self.edge_count -= 1;
        for (n, _) in dead_adj {
            if n == survivor {
                continue;
            }
            self.adj[n as usize].remove(&dead);
            if self.adj[survivor as usize].insert(n, 0.0).is_some() {
                // parallel edges collapse
                self.edge_count -= 1;
            } else {
                self.adj[n as usize].insert(survivor, 0.0);
            }
        }

        // refresh every weight incident to the survivor
        let mean_s = self.mean(survivor);
        let nbrs: Vec<u32> = self.adj[survivor as usize].keys().cloned().collect();
        for n in nbrs {
            let w = color_distance(mean_s, self.mean(n));
            self.adj[survivor as usize].insert(n, w);
            self.adj[n as usize].insert(survivor, w);
        }

        self.parent[dead as usize] = survivor;
        self.num_live -= 1;
        let step = self.merge_log.len() as u64;
        self.merge_log.push(MergeLogEntry { step, survivor, absorbed: dead, weight });
        Ok(survivor)
    }

    /// Live region currently containing an initial region.
    pub fn live_id(&self, initial: u32) -> u32 {
        let mut id = initial;
        while self.parent[id as usize] != id {
            id = self.parent[id as usize];
        }
        id
    }

    pub fn merge_log(&self) -> &[MergeLogEntry] {
        &self.merge_log
    }

    /// Line-oriented merge log: `step survivor absorbed weight`.
    pub fn export_merge_log(&self) -> String {
        let mut out = String::new();
        for e in &self.merge_log {
            out.push_str(&format!("{} {} {} {}\n", e.step, e.survivor, e.absorbed, e.weight));
        }
        out
    }

    /// Total pixel mass over live nodes; stays equal to width * height
    /// for image-built graphs.
    pub fn total_mass(&self) -> u64 {
        self.live_ids().map(|id| self.stats(id).pixel_count).sum()
    }

    /// Final label map: live region ids densified in ascending order.
    /// Only valid for image-built graphs.
    pub fn final_label_map(&self) -> LabelMap {
        assert!(self.width > 0 && self.height > 0, "graph was not built from an image");
        let mut dense = vec![u32::MAX; self.stats.len()];
        for (i, id) in self.live_ids().enumerate() {
            dense[id as usize] = i as u32;
        }
        let mut labels = vec![u32::MAX; self.width as usize * self.height as usize];
        for id in self.live_ids() {
            for &p in &self.pixels[id as usize] {
                labels[p as usize] = dense[id as usize];
            }
        }
        LabelMap::new(self.width, self.height, labels)
    }
}
