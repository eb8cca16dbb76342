//! Synthetic fixtures: quadrant images with known ground truth and
//! random connected graphs with distinct edge weights. Both are seeded
//! and fully reproducible.

use crate::graph::{Rag, RegionStats};
use crate::pixel::{LabelMap, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Four equal quadrants of the given colors plus i.i.d. per-channel
/// Gaussian noise, clamped to [0, 255]. Returns the image and the
/// 4-region ground-truth partition (quadrant order: TL, TR, BL, BR).
///
/// `size` must be even. Colors should be separated well beyond the noise
/// level if the fixture is meant to segment cleanly.
pub fn gen_quadrants(
    size: u32,
    colors: [[u8; 3]; 4],
    noise_sigma: f64,
    seed: u64,
) -> (RgbImage, LabelMap) {
    assert!(size >= 2 && size.is_multiple_of(2), "size must be even and >= 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).unwrap());
    let half = size / 2;
    let mut data = Vec::with_capacity((size * size * 3) as usize);
    let mut labels = Vec::with_capacity((size * size) as usize);
    for y in 0..size {
        for x in 0..size {
            let q = (y >= half) as u32 * 2 + (x >= half) as u32;
            labels.push(q);
            for &channel in &colors[q as usize] {
                let mut v = channel as f64;
                if let Some(n) = &noise {
                    v += n.sample(&mut rng);
                }
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    (RgbImage::new(size, size, data), LabelMap::new(size, size, labels))
}

/// Connected random graph with synthesized region statistics and
/// pairwise-distinct edge weights: a random spanning tree plus extra
/// random edges up to roughly the requested average degree. Weights
/// derive from the node means; means are re-rolled until no two edges
/// collide.
pub fn gen_random_rag(nodes: u32, degree: u32, seed: u64) -> Rag {
    assert!(nodes >= 2, "need at least two nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut present = std::collections::HashSet::new();
    for v in 1..nodes {
        let u = rng.random_range(0..v);
        edges.push((u, v));
        present.insert((u, v));
    }
    let target = (nodes as usize * degree as usize / 2).max(nodes as usize - 1);
    let mut attempts = 0;
    while edges.len() < target && attempts < target * 10 {
        attempts += 1;
        let a = rng.random_range(0..nodes);
        let b = rng.random_range(0..nodes);
        let key = (a.min(b), a.max(b));
        if a != b && !present.contains(&key) {
            present.insert(key);
            edges.push(key);
        }
    }

    loop {
        let stats: Vec<RegionStats> = (0..nodes)
            .map(|_| {
                let mean = [
                    rng.random_range(0.0..255.0),
                    rng.random_range(0.0..255.0),
                    rng.random_range(0.0..255.0),
                ];
                RegionStats::from_mean(mean, rng.random_range(1..=16))
            })
            .collect();
        let rag = Rag::from_parts(stats, &edges);
        let mut weights: Vec<u64> = edges
            .iter()
            .map(|&(a, b)| rag.dissimilarity(a, b).unwrap().to_bits())
            .collect();
        weights.sort_unstable();
        if weights.windows(2).all(|w| w[0] != w[1]) {
            return rag;
        }
        // collision: re-roll the means from the continuing stream
    }
}
