//! Binary image grids: the representation shared by mask proposals, the
//! rasterizer's silhouettes and the evaluation metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("mask is empty")]
    EmptyMask,
    #[error("run-length data does not match size {width}x{height} (sum {sum})")]
    BadRunLength { width: u32, height: u32, sum: u64 },
}

/// Inclusive pixel-aligned bounding box in the pixel-center convention:
/// cell `(x, y)` spans `[x-0.5, x+0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

impl PixelBox {
    /// Box center in the pixel-center convention.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.xmin + self.xmax) as f64 / 2.0,
            (self.ymin + self.ymax) as f64 / 2.0,
        )
    }

    /// Continuous extent of the covered cells: `[xmin-0.5, xmax+0.5]`.
    pub fn to_continuous(&self) -> [f64; 4] {
        [
            self.xmin as f64 - 0.5,
            self.ymin as f64 - 0.5,
            self.xmax as f64 + 0.5,
            self.ymax as f64 + 0.5,
        ]
    }
}

/// A dense binary H x W grid stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width as usize) * (height as usize)],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut mask = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.set(x, y, true);
                }
            }
        }
        mask
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Out-of-bounds coordinates read as unset (the image border counts as
    /// empty space).
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.get(x as u32, y as u32)
        }
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    /// Number of set cells.
    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Set cells in raster-scan order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }

    /// Tight bounding box of the set cells; `None` if the mask is empty.
    pub fn bbox(&self) -> Option<PixelBox> {
        let mut bb: Option<PixelBox> = None;
        for (x, y) in self.iter_set() {
            bb = Some(match bb {
                None => PixelBox {
                    xmin: x,
                    ymin: y,
                    xmax: x,
                    ymax: y,
                },
                Some(b) => PixelBox {
                    xmin: b.xmin.min(x),
                    ymin: b.ymin.min(y),
                    xmax: b.xmax.max(x),
                    ymax: b.ymax.max(y),
                },
            });
        }
        bb
    }

    /// Centroid of the set cells (pixel-center convention).
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        for (x, y) in self.iter_set() {
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Intersection-over-union with another mask of the same dimensions.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64, MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        let mut inter = 0u64;
        let mut union = 0u64;
        for (a, b) in self.data.iter().zip(&other.data) {
            inter += (*a && *b) as u64;
            union += (*a || *b) as u64;
        }
        if union == 0 {
            Ok(0.0)
        } else {
            Ok(inter as f64 / union as f64)
        }
    }

    /// COCO-style run-length encoding: column-major scan, counts alternating
    /// runs of unset and set cells, starting with unset.
    pub fn to_rle(&self) -> RleMask {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..self.width {
            for y in 0..self.height {
                let v = self.get(x, y);
                if v == current {
                    run += 1;
                } else {
                    counts.push(run);
                    current = v;
                    run = 1;
                }
            }
        }
        counts.push(run);
        RleMask {
            size: [self.height, self.width],
            counts,
        }
    }
}

/// COCO-style RLE payload as it appears in masklet files: `size` is
/// `[height, width]` and `counts` scans column-major starting with a run of
/// unset cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn decode(&self) -> Result<BinaryMask, MaskError> {
        let [height, width] = self.size;
        let total = width as u64 * height as u64;
        let sum: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if sum != total {
            return Err(MaskError::BadRunLength { width, height, sum });
        }
        let mut mask = BinaryMask::new(width, height);
        let mut value = false;
        let mut idx = 0u64;
        for &count in &self.counts {
            for _ in 0..count {
                if value {
                    let x = (idx / height as u64) as u32;
                    let y = (idx % height as u64) as u32;
                    mask.set(x, y, true);
                }
                idx += 1;
            }
            value = !value;
        }
        Ok(mask)
    }
}

/// IoU of two axis-aligned boxes given as `[xmin, ymin, xmax, ymax]` in
/// continuous coordinates. An empty union yields 0.
pub fn bbox_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    let area_a = (a[2] - a[0]).max(0.0) * (a[3] - a[1]).max(0.0);
    let area_b = (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}
