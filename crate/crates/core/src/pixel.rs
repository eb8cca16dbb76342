//! Image and label-map value types plus the scalar preprocessing kernels.
//!
//! All types are plain owned buffers and all operations are pure
//! functions, so everything here is safe to share and call from any
//! number of threads.

/// 8-bit RGB image, row-major interleaved triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    /// `data` holds `width * height` RGB triples in row-major order.
    ///
    /// Panics when dimensions are zero or the buffer length does not
    /// match `width * height * 3`.
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(
            data.len(),
            width as usize * height as usize * 3,
            "pixel buffer length must be width * height * 3"
        );
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn num_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// RGB triple at row-major pixel index `idx`.
    pub fn rgb_at(&self, idx: usize) -> [u8; 3] {
        let o = idx * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        self.rgb_at(y as usize * self.width as usize + x as usize)
    }
}

/// Scalar image plane (luminance, gradient magnitude), row-major `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(
            data.len(),
            width as usize * height as usize,
            "scalar buffer length must be width * height"
        );
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Sample with edge replication: out-of-range coordinates clamp to
    /// the nearest valid pixel.
    fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let x = x.clamp(0, self.width as i64 - 1) as u32;
        let y = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(x, y)
    }
}

/// Per-pixel region labels from a dense id space `0..num_regions`.
///
/// Maps produced by the initializers in [`crate::initseg`] additionally
/// guarantee that every label occurs and that each region is one
/// 4-connected component; maps decoded from external files carry no such
/// guarantee until validated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    num_regions: u32,
}

impl LabelMap {
    /// `num_regions` is derived as `max(labels) + 1` (0 for an empty map).
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Self {
        assert_eq!(
            labels.len(),
            width as usize * height as usize,
            "label buffer length must be width * height"
        );
        let num_regions = labels.iter().max().map_or(0, |m| m + 1);
        Self { width, height, labels, num_regions }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_regions(&self) -> u32 {
        self.num_regions
    }

    pub fn num_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn label(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    /// True when both maps induce the same pixel partition, regardless of
    /// how the region ids are numbered.
    pub fn same_partition(&self, other: &LabelMap) -> bool {
        if self.width != other.width || self.height != other.height {
            return false;
        }
        let mut fwd = vec![u32::MAX; self.num_regions as usize];
        let mut bwd = vec![u32::MAX; other.num_regions as usize];
        for (&a, &b) in self.labels.iter().zip(other.labels.iter()) {
            if fwd[a as usize] == u32::MAX {
                fwd[a as usize] = b;
            } else if fwd[a as usize] != b {
                return false;
            }
            if bwd[b as usize] == u32::MAX {
                bwd[b as usize] = a;
            } else if bwd[b as usize] != a {
                return false;
            }
        }
        true
    }
}

/// Rec. 601 luma: `0.299 R + 0.587 G + 0.114 B` per pixel.
pub fn luminance(img: &RgbImage) -> GrayImage {
    let data = (0..img.num_pixels())
        .map(|i| {
            let [r, g, b] = img.rgb_at(i);
            0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
        })
        .collect();
    GrayImage::new(img.width(), img.height(), data)
}

/// Gradient magnitude `sqrt(Gx^2 + Gy^2)` from the standard 3x3 Sobel
/// kernels, with edge-replicated borders.
pub fn sobel_magnitude(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let p = |dx: i64, dy: i64| img.get_clamped(x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    GrayImage::new(w, h, out)
}

/// Median over the `(2r+1)^2` edge-replicated window; radius 0 is the
/// identity.
pub fn median_filter(img: &GrayImage, radius: u32) -> GrayImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let r = radius as i64;
    let mut window = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    let mut out = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            window.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    window.push(img.get_clamped(x + dx, y + dy));
                }
            }
            window.sort_by(f64::total_cmp);
            out.push(window[window.len() / 2]);
        }
    }
    GrayImage::new(w, h, out)
}
