//! Evaluation metrics: ADD / ADD-S, symmetry-aware translation and rotation
//! errors, and mask/bbox average precision over IoU thresholds 0.5:0.05:0.95.

mod ap;
mod pose_error;

pub use ap::{average_precision, ApReport, DetectionRecord, GroundTruthRecord, IouKind};
pub use pose_error::{
    add_error, adds_error, farthest_point_subsample, pose_errors, PoseError,
};

pub use crate::mask::bbox_iou;

use crate::mask::{BinaryMask, MaskError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("model point set is empty")]
    EmptyPointSet,
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Intersection-over-union of two same-sized binary masks.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    Ok(a.iou(b)?)
}
