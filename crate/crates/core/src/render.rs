//! Rendering of segmentation artifacts: the mean-color view and the
//! boundary overlay the CLI writes next to the label map.

use crate::eval::boundary_of;
use crate::graph::Rag;
use crate::pixel::{LabelMap, RgbImage};

/// Each pixel takes its region's mean color. `labels` must be the dense
/// relabeling of `rag`'s live regions (ascending id order).
pub fn mean_color_image(rag: &Rag, labels: &LabelMap) -> RgbImage {
    let means: Vec<[u8; 3]> = rag
        .live_ids()
        .map(|id| {
            let m = rag.mean(id);
            [0, 1, 2].map(|c| m[c].round().clamp(0.0, 255.0) as u8)
        })
        .collect();
    let data: Vec<u8> = labels.labels().iter().flat_map(|&l| means[l as usize]).collect();
    RgbImage::new(labels.width(), labels.height(), data)
}

/// Source image with the label map's boundary pixels drawn in pure red.
pub fn boundary_overlay(img: &RgbImage, labels: &LabelMap) -> RgbImage {
    let boundary = boundary_of(labels);
    let mut data = img.data().to_vec();
    for (i, &on) in boundary.mask().iter().enumerate() {
        if on {
            data[i * 3] = 255;
            data[i * 3 + 1] = 0;
            data[i * 3 + 2] = 0;
        }
    }
    RgbImage::new(img.width(), img.height(), data)
}
