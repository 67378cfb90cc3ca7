//! CPU rasterization of mesh silhouettes and depth, contour extraction,
//! normal estimation and the occlusion-aware contour filter.
//!
//! The rasterizer is deterministic: scanline traversal with the top-left
//! fill rule, one sample per pixel center and a 32-bit float z-buffer.

mod contour;
mod normals;
mod raster;

pub use contour::{
    extract_contour, model_contour_3d, outward_normal, ContourPoint2D, ModelContourPoint,
};
pub use normals::{occlusion_filter, surface_normal_from_depth, OcclusionConfig};
pub use raster::{rasterize, rasterize_scene, SceneRender};

use crate::ViewId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("mask is empty")]
    EmptyMask,
    #[error("pixel ({0}, {1}) is not a boundary cell")]
    NotBoundary(u32, u32),
    #[error("outward normal undefined at pixel ({0}, {1})")]
    UndefinedNormal(u32, u32),
}

/// Per-pixel depth in millimeters (camera frame); 0 marks empty/invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width as usize) * (height as usize)],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), (width as usize) * (height as usize));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, depth: f32) {
        self.data[y as usize * self.width as usize + x as usize] = depth;
    }

    /// Valid (positive) depth at in-bounds coordinates.
    #[inline]
    pub fn valid_at(&self, x: i64, y: i64) -> Option<f32> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        let d = self.get(x as u32, y as u32);
        (d > 0.0).then_some(d)
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }
}

/// The observed contour points of one view that survived the occlusion
/// filter; a subset of the unfiltered masklet contour.
#[derive(Debug, Clone)]
pub struct VisibleContourSet {
    pub view_id: ViewId,
    pub points: Vec<ContourPoint2D>,
}
