//! Boundary extraction and tolerant precision/recall matching.
//!
//! A pixel is on the boundary when any 4-neighbor carries a different
//! label, so both sides of every region border are marked. Matching is
//! distance-transform based: a detected pixel is a true positive when it
//! lies within the tolerance of any ground-truth boundary pixel, and
//! recall is averaged over the individual ground-truth maps.

use crate::pixel::LabelMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("boundary maps disagree on dimensions: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("at least one ground-truth map is required")]
    NoTruth,
}

/// Set of boundary pixels of one segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMap {
    width: u32,
    height: u32,
    on: Vec<bool>,
}

impl BoundaryMap {
    pub fn from_mask(width: u32, height: u32, on: Vec<bool>) -> Self {
        assert_eq!(on.len(), width as usize * height as usize);
        Self { width, height, on }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_on(&self, x: u32, y: u32) -> bool {
        self.on[y as usize * self.width as usize + x as usize]
    }

    pub fn mask(&self) -> &[bool] {
        &self.on
    }

    pub fn count_on(&self) -> usize {
        self.on.iter().filter(|&&b| b).count()
    }
}

/// Boundary pixels of a label map: pixels with a 4-neighbor of a
/// different label, both sides included.
pub fn boundary_of(lm: &LabelMap) -> BoundaryMap {
    let (w, h) = (lm.width() as usize, lm.height() as usize);
    let labels = lm.labels();
    let mut on = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let l = labels[i];
            on[i] = (x + 1 < w && labels[i + 1] != l)
                || (x > 0 && labels[i - 1] != l)
                || (y + 1 < h && labels[i + w] != l)
                || (y > 0 && labels[i - w] != l);
        }
    }
    BoundaryMap { width: lm.width(), height: lm.height(), on }
}

/// Tolerant precision/recall and the weighted F-measure
/// `P*R / (alpha*R + (1-alpha)*P)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PrfResult {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub tolerance: f64,
    pub alpha_f: f64,
}

/// `P*R / (alpha*R + (1-alpha)*P)`, zero when both are zero. At
/// alpha = 0.5 this is the harmonic mean.
pub fn f_measure(precision: f64, recall: f64, alpha_f: f64) -> f64 {
    if precision + recall <= 0.0 {
        return 0.0;
    }
    precision * recall / (alpha_f * recall + (1.0 - alpha_f) * precision)
}

const INF: f64 = 1e20;

/// One-dimensional squared distance transform (lower envelope of
/// parabolas), after Felzenszwalb and Huttenlocher.
fn dt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = INF;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Exact squared Euclidean distance to the nearest on-pixel, per pixel.
fn squared_edt(on: &[bool], w: usize, h: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = on.iter().map(|&b| if b { 0.0 } else { INF }).collect();
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        dt_1d(&f[..h], &mut d[..h], &mut v[..h], &mut z[..h + 1]);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        dt_1d(&f[..w], &mut d[..w], &mut v[..w], &mut z[..w + 1]);
        grid[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
    grid
}

/// Match a detected boundary against one or more ground-truth maps.
///
/// Precision matches detections against the union of the truths; recall
/// is computed per truth map and averaged. An empty detection scores
/// precision 1 when every truth is empty and 0 otherwise; an empty truth
/// map contributes recall 1.
pub fn match_prf(
    detected: &BoundaryMap,
    truths: &[BoundaryMap],
    tolerance: f64,
    alpha_f: f64,
) -> Result<PrfResult, EvalError> {
    if truths.is_empty() {
        return Err(EvalError::NoTruth);
    }
    for t in truths {
        if t.width != detected.width || t.height != detected.height {
            return Err(EvalError::DimensionMismatch(
                detected.width,
                detected.height,
                t.width,
                t.height,
            ));
        }
    }
    let (w, h) = (detected.width as usize, detected.height as usize);
    let tol2 = tolerance * tolerance + 1e-9;

    let mut union = vec![false; w * h];
    for t in truths {
        for (u, &b) in union.iter_mut().zip(&t.on) {
            *u |= b;
        }
    }

    let detected_count = detected.count_on();
    let precision = if detected_count == 0 {
        if union.iter().any(|&b| b) {
            0.0
        } else {
            1.0
        }
    } else {
        let dt_truth = squared_edt(&union, w, h);
        let matched = detected
            .on
            .iter()
            .zip(&dt_truth)
            .filter(|(&d, &dist2)| d && dist2 <= tol2)
            .count();
        matched as f64 / detected_count as f64
    };

    let dt_detected = squared_edt(&detected.on, w, h);
    let mut recall_sum = 0.0;
    for t in truths {
        let total = t.count_on();
        if total == 0 {
            recall_sum += 1.0;
            continue;
        }
        let matched = t
            .on
            .iter()
            .zip(&dt_detected)
            .filter(|(&g, &dist2)| g && dist2 <= tol2)
            .count();
        recall_sum += matched as f64 / total as f64;
    }
    let recall = recall_sum / truths.len() as f64;

    Ok(PrfResult {
        precision,
        recall,
        f_measure: f_measure(precision, recall, alpha_f),
        tolerance,
        alpha_f,
    })
}
