//! Multi-view, occlusion-aware contour registration: a robust-L1
//! Levenberg-Marquardt refinement on SE(3) that minimizes the reprojection
//! error between observed visible contour points and the nearest projected
//! model contour points, jointly over all views.

mod lm;

pub use lm::{lm_refine, lm_refine_fixed, RefineOutcome, TraceRow};

use crate::geom::{Camera, RigidTransform, Vec2, Vec3};
use crate::render::{ModelContourPoint, VisibleContourSet};
use crate::ViewId;
use nalgebra::{Matrix2x6, Matrix3x6};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("under-constrained: {scalars} scalar residuals for 6 degrees of freedom")]
    UnderConstrained { scalars: usize },
    #[error("no camera registered for view {0}")]
    UnknownView(ViewId),
    #[error("invalid refine config: {0}")]
    InvalidConfig(String),
}

/// Configuration of the contour refinement.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Total LM steps.
    pub total_iterations: usize,
    /// Model contours are re-rendered and re-matched every this many steps.
    pub rematch_period: usize,
    /// Charbonnier epsilon (px) smoothing the L1 kernel. One pixel: both
    /// contour sets are pixel-quantized, so residuals below that scale are
    /// noise and must not be treated as L1 outliers.
    pub robust_epsilon: f64,
    pub lm_lambda_init: f64,
    pub lm_lambda_factor: f64,
    /// Early termination threshold on the accepted step norm.
    pub step_tolerance: f64,
    /// Optional gate on match distance (px); matches farther away are
    /// dropped. Off by default: robustness is the kernel's job.
    pub max_match_distance: Option<f64>,
    /// Force unit weights (plain damped least squares) instead of the
    /// robust kernel.
    pub uniform_weights: bool,
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if self.total_iterations == 0 || self.rematch_period == 0 {
            return Err(RefineError::InvalidConfig(
                "iteration counts must be positive".into(),
            ));
        }
        if self.rematch_period > self.total_iterations {
            return Err(RefineError::InvalidConfig(format!(
                "rematch_period {} exceeds total_iterations {}",
                self.rematch_period, self.total_iterations
            )));
        }
        if self.robust_epsilon <= 0.0
            || self.lm_lambda_init <= 0.0
            || self.lm_lambda_factor <= 1.0
            || self.step_tolerance <= 0.0
        {
            return Err(RefineError::InvalidConfig(
                "kernel and damping parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            total_iterations: 200,
            rematch_period: 10,
            robust_epsilon: 1.0,
            lm_lambda_init: 1e-3,
            lm_lambda_factor: 10.0,
            step_tolerance: 1e-8,
            max_match_distance: None,
            uniform_weights: false,
        }
    }
}

/// One observed-to-model contour match in a view.
#[derive(Debug, Clone, Copy)]
pub struct Correspondence {
    pub view_id: ViewId,
    pub observed_pixel: Vec2,
    /// The matched model contour point, in object coordinates.
    pub model_point_object: Vec3,
}

/// Matches every observed contour point to the model contour point whose
/// current projection is nearest in pixel distance (ties resolve to the
/// lowest model index). Either set being empty yields no correspondences.
pub fn match_contours(
    observed: &VisibleContourSet,
    model: &[ModelContourPoint],
) -> Vec<Correspondence> {
    if model.is_empty() {
        return Vec::new();
    }
    observed
        .points
        .iter()
        .map(|op| {
            let mut best_index = 0usize;
            let mut best_dist = f64::INFINITY;
            for (index, mp) in model.iter().enumerate() {
                let d = (mp.pixel - op.pixel).norm_squared();
                if d < best_dist {
                    best_dist = d;
                    best_index = index;
                }
            }
            Correspondence {
                view_id: observed.view_id,
                observed_pixel: op.pixel,
                model_point_object: model[best_index].point_object,
            }
        })
        .collect()
}

/// Reprojection residuals `observed - project(pose * model_point)` per
/// correspondence. Model points that fall behind a camera are dropped from
/// the evaluation; the second return value counts them.
pub fn residuals(
    pose: &RigidTransform,
    correspondences: &[Correspondence],
    cameras: &BTreeMap<ViewId, &Camera>,
) -> (Vec<Vec2>, usize) {
    let mut out = Vec::with_capacity(correspondences.len());
    let mut dropped = 0usize;
    for c in correspondences {
        let Some(camera) = cameras.get(&c.view_id) else {
            dropped += 1;
            continue;
        };
        match camera.project(&pose.transform_point(&c.model_point_object)) {
            Ok(projected) => out.push(c.observed_pixel - projected),
            Err(_) => dropped += 1,
        }
    }
    (out, dropped)
}

/// Charbonnier IRLS weight for one scalar residual component:
/// `w = 1 / sqrt(r^2 + eps^2)`, so that `w * r^2` approximates `|r|`.
pub fn robust_weight(residual_component: f64, epsilon: f64) -> f64 {
    1.0 / (residual_component * residual_component + epsilon * epsilon).sqrt()
}

/// Projection of one object-frame point under `pose` into `camera`, plus
/// the analytic 2x6 Jacobian of the projection with respect to the local
/// pose parameters (axis-angle increment composed on the left of the
/// rotation, additive translation increment), evaluated at zero increment.
///
/// Returns `None` when the point projects behind the camera.
pub fn projection_jacobian(
    camera: &Camera,
    pose: &RigidTransform,
    point_object: &Vec3,
) -> Option<(Vec2, Matrix2x6<f64>)> {
    let rotated = pose.rotation * point_object;
    let p_world = rotated + pose.translation;
    let p_cam = camera.world_to_cam.transform_point(&p_world);
    if p_cam.z <= 1e-9 {
        return None;
    }
    let projected = camera.project_cam(&p_cam).ok()?;

    let k = &camera.intrinsics;
    let (fx, sk, fy) = (k[(0, 0)], k[(0, 1)], k[(1, 1)]);
    let inv_z = 1.0 / p_cam.z;
    let d_pi_d_pc = nalgebra::Matrix2x3::new(
        fx * inv_z,
        sk * inv_z,
        -(fx * p_cam.x + sk * p_cam.y) * inv_z * inv_z,
        0.0,
        fy * inv_z,
        -fy * p_cam.y * inv_z * inv_z,
    );

    // World-point sensitivity: rotation block -[R x]_x, translation block I.
    let neg_skew = -crate::geom::skew_of(&rotated);
    let mut d_pw = Matrix3x6::<f64>::zeros();
    d_pw.fixed_view_mut::<3, 3>(0, 0).copy_from(&neg_skew);
    d_pw.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&nalgebra::Matrix3::identity());

    let jac = d_pi_d_pc * camera.world_to_cam.rotation * d_pw;
    Some((projected, jac))
}

/// Applies a 6-vector increment: left-multiplied axis-angle on the rotation,
/// additive translation.
pub(crate) fn apply_increment(pose: &RigidTransform, delta: &nalgebra::Vector6<f64>) -> RigidTransform {
    let omega = Vec3::new(delta[0], delta[1], delta[2]);
    let rotation = RigidTransform::from_rotation_vector(omega).rotation * pose.rotation;
    let translation = pose.translation + Vec3::new(delta[3], delta[4], delta[5]);
    RigidTransform::new(rotation, translation)
}
