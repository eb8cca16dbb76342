//! Initial over-segmentation: immersion watershed on a quantized
//! gradient, a deterministic grid initializer for controlled tests, and
//! validation of externally supplied label maps.
//!
//! All three initializers emit label maps with dense ids and one
//! 4-connected component per label; the merge engine never needs to know
//! which one ran.

use crate::pixel::{luminance, median_filter, sobel_magnitude, GrayImage, LabelMap, RgbImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InitError {
    #[error("label map is empty")]
    EmptyMap,
    #[error("external mode requires a label map")]
    MissingExternalLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Watershed,
    Grid,
    External,
}

/// Configuration for the initial over-segmentation stage.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct InitSegConfig {
    pub mode: InitMode,
    /// Median prefilter radius applied to the gradient before immersion.
    pub median_radius: u32,
    /// Tile side for the grid initializer.
    pub grid_block: u32,
    /// Number of equal-width gradient bins used for immersion ordering.
    pub quant_levels: u32,
}

impl Default for InitSegConfig {
    fn default() -> Self {
        Self { mode: InitMode::Watershed, median_radius: 1, grid_block: 16, quant_levels: 256 }
    }
}

impl InitSegConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.grid_block < 1 {
            return Err("grid block must be >= 1".into());
        }
        if self.quant_levels < 2 {
            return Err("quantization levels must be >= 2".into());
        }
        Ok(())
    }
}

/// Run the configured initializer. `external` is consulted only in
/// external mode and is validated before use.
pub fn initialize(
    img: &RgbImage,
    cfg: &InitSegConfig,
    external: Option<&LabelMap>,
) -> Result<LabelMap, InitError> {
    match cfg.mode {
        InitMode::Watershed => {
            let grad = median_filter(&sobel_magnitude(&luminance(img)), cfg.median_radius);
            Ok(watershed(&grad, cfg.quant_levels))
        }
        InitMode::Grid => Ok(grid_init(img.width(), img.height(), cfg.grid_block)),
        InitMode::External => {
            let lm = external.ok_or(InitError::MissingExternalLabels)?;
            validate_external(lm)
        }
    }
}

fn neighbors4(idx: usize, w: usize, h: usize, out: &mut [usize; 4]) -> usize {
    let (x, y) = (idx % w, idx / w);
    let mut n = 0;
    if x > 0 {
        out[n] = idx - 1;
        n += 1;
    }
    if x + 1 < w {
        out[n] = idx + 1;
        n += 1;
    }
    if y > 0 {
        out[n] = idx - w;
        n += 1;
    }
    if y + 1 < h {
        out[n] = idx + w;
        n += 1;
    }
    n
}

/// Immersion watershed over the gradient quantized to `quant_levels`
/// equal-width bins, 4-connected.
///
/// Ridge pixels (where two basins meet) are absorbed into the adjacent
/// basin with the lowest current mean gradient, ties to the smallest
/// basin id, so the result partitions every pixel.
pub fn watershed(grad: &GrayImage, quant_levels: u32) -> LabelMap {
    assert!(quant_levels >= 2, "quantization levels must be >= 2");
    assert!(
        grad.data().iter().all(|v| v.is_finite() && *v >= 0.0),
        "gradient values must be finite and non-negative"
    );
    let (w, h) = (grad.width() as usize, grad.height() as usize);
    let n = w * h;

    let lo = grad.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grad.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let levels: Vec<u32> = if hi > lo {
        grad.data()
            .iter()
            .map(|&v| {
                let t = (v - lo) / (hi - lo) * quant_levels as f64;
                (t as u32).min(quant_levels - 1)
            })
            .collect()
    } else {
        vec![0; n]
    };

    // Vincent-Soille immersion. lab: INIT -> unprocessed, MASK -> current
    // level, WSHED -> ridge, >0 -> basin id.
    const INIT: i64 = -2;
    const MASK: i64 = -1;
    const WSHED: i64 = 0;
    let mut lab = vec![INIT; n];
    let mut dist = vec![0u32; n];
    let mut cur_label: i64 = 0;

    // Pixels grouped by level, raster order within each group.
    let mut by_level: Vec<Vec<u32>> = vec![Vec::new(); quant_levels as usize];
    for (i, &lv) in levels.iter().enumerate() {
        by_level[lv as usize].push(i as u32);
    }

    let mut fifo = std::collections::VecDeque::new();
    let mut nb = [0usize; 4];
    for pixels in by_level.iter().filter(|p| !p.is_empty()) {
        for &p in pixels {
            let p = p as usize;
            lab[p] = MASK;
            let cnt = neighbors4(p, w, h, &mut nb);
            if nb[..cnt].iter().any(|&q| lab[q] > 0 || lab[q] == WSHED) {
                dist[p] = 1;
                fifo.push_back(p);
            }
        }
        // Breadth-first flood from the existing basins into this level.
        let mut cur_dist = 1u32;
        fifo.push_back(usize::MAX); // level separator
        loop {
            let mut p = fifo.pop_front().unwrap();
            if p == usize::MAX {
                if fifo.is_empty() {
                    break;
                }
                fifo.push_back(usize::MAX);
                cur_dist += 1;
                p = fifo.pop_front().unwrap();
            }
            let cnt = neighbors4(p, w, h, &mut nb);
            for &q in &nb[..cnt] {
                if dist[q] < cur_dist && (lab[q] > 0 || lab[q] == WSHED) {
                    if lab[q] > 0 {
                        if lab[p] == MASK {
                            lab[p] = lab[q];
                        } else if lab[p] > 0 && lab[p] != lab[q] {
                            lab[p] = WSHED;
                        }
                    } else if lab[p] == MASK {
                        lab[p] = WSHED;
                    }
                } else if lab[q] == MASK && dist[q] == 0 {
                    dist[q] = cur_dist + 1;
                    fifo.push_back(q);
                }
            }
        }
        // Remaining MASK pixels are new minima at this level.
        for &p in pixels {
            let p = p as usize;
            dist[p] = 0;
            if lab[p] == MASK {
                cur_label += 1;
                lab[p] = cur_label;
                fifo.push_back(p);
                while let Some(q) = fifo.pop_front() {
                    let cnt = neighbors4(q, w, h, &mut nb);
                    for &r in &nb[..cnt] {
                        if lab[r] == MASK {
                            lab[r] = cur_label;
                            fifo.push_back(r);
                        }
                    }
                }
            }
        }
    }

    // Absorb ridge pixels: each joins the adjacent basin with the lowest
    // current mean gradient, ties to the smallest basin id. Repeated
    // raster passes handle thick ridges.
    let mut sum = vec![0.0f64; cur_label as usize + 1];
    let mut count = vec![0u64; cur_label as usize + 1];
    for (i, &l) in lab.iter().enumerate() {
        if l > 0 {
            sum[l as usize] += grad.data()[i];
            count[l as usize] += 1;
        }
    }
    loop {
        let mut assigned = false;
        for p in 0..n {
            if lab[p] != WSHED {
                continue;
            }
            let cnt = neighbors4(p, w, h, &mut nb);
            let mut best: Option<i64> = None;
            for &q in &nb[..cnt] {
                if lab[q] > 0 {
                    let better = match best {
                        None => true,
                        Some(b) => {
                            let (mq, mb) = (
                                sum[lab[q] as usize] / count[lab[q] as usize] as f64,
                                sum[b as usize] / count[b as usize] as f64,
                            );
                            mq < mb || (mq == mb && lab[q] < b)
                        }
                    };
                    if better {
                        best = Some(lab[q]);
                    }
                }
            }
            if let Some(b) = best {
                lab[p] = b;
                sum[b as usize] += grad.data()[p];
                count[b as usize] += 1;
                assigned = true;
            }
        }
        if !assigned {
            break;
        }
    }

    let labels = lab.iter().map(|&l| (l - 1) as u32).collect();
    LabelMap::new(grad.width(), grad.height(), labels)
}

/// Tile the image into `block x block` regions (clipped at borders),
/// labeled in row-major tile order.
pub fn grid_init(width: u32, height: u32, block: u32) -> LabelMap {
    assert!(block >= 1, "grid block must be >= 1");
    let tiles_x = width.div_ceil(block);
    let mut labels = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        for x in 0..width {
            labels.push((y / block) * tiles_x + x / block);
        }
    }
    LabelMap::new(width, height, labels)
}

/// Relabel an externally supplied map to a dense id space, splitting any
/// label whose pixels form more than one 4-connected component.
///
/// New ids are assigned in raster order of each component's first pixel,
/// so the output is deterministic and idempotent up to renumbering.
pub fn validate_external(lm: &LabelMap) -> Result<LabelMap, InitError> {
    let (w, h) = (lm.width() as usize, lm.height() as usize);
    let n = w * h;
    if n == 0 {
        return Err(InitError::EmptyMap);
    }
    let mut out = vec![u32::MAX; n];
    let mut next = 0u32;
    let mut fifo = std::collections::VecDeque::new();
    let mut nb = [0usize; 4];
    for start in 0..n {
        if out[start] != u32::MAX {
            continue;
        }
        let id = next;
        next += 1;
        out[start] = id;
        fifo.push_back(start);
        while let Some(p) = fifo.pop_front() {
            let cnt = neighbors4(p, w, h, &mut nb);
            for &q in &nb[..cnt] {
                if out[q] == u32::MAX && lm.labels()[q] == lm.labels()[p] {
                    out[q] = id;
                    fifo.push_back(q);
                }
            }
        }
    }
    Ok(LabelMap::new(lm.width(), lm.height(), out))
}

/// Number of 4-connected constant-level plateaus with no strictly lower
/// neighbor, on the same quantized grid the watershed floods. Test
/// support for the region-count lower bound.
pub fn count_minimum_plateaus(grad: &GrayImage, quant_levels: u32) -> usize {
    let (w, h) = (grad.width() as usize, grad.height() as usize);
    let n = w * h;
    let lo = grad.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grad.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let levels: Vec<u32> = if hi > lo {
        grad.data()
            .iter()
            .map(|&v| (((v - lo) / (hi - lo) * quant_levels as f64) as u32).min(quant_levels - 1))
            .collect()
    } else {
        vec![0; n]
    };
    let mut seen = vec![false; n];
    let mut fifo = std::collections::VecDeque::new();
    let mut nb = [0usize; 4];
    let mut minima = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        // flood the plateau containing `start`
        let lv = levels[start];
        let mut is_min = true;
        seen[start] = true;
        fifo.push_back(start);
        while let Some(p) = fifo.pop_front() {
            let cnt = neighbors4(p, w, h, &mut nb);
            for &q in &nb[..cnt] {
                if levels[q] == lv {
                    if !seen[q] {
                        seen[q] = true;
                        fifo.push_back(q);
                    }
                } else if levels[q] < lv {
                    is_min = false;
                }
            }
        }
        if is_min {
            minima += 1;
        }
    }
    minima
}
