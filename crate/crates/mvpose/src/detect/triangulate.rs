use super::DetectError;
use crate::geom::{Ray, Vec3};
use crate::{ClassId, MaskletId, ViewId};
use std::collections::BTreeMap;

/// Default rejection threshold for near-parallel rays, in degrees.
pub const DEFAULT_MIN_RAY_ANGLE_DEG: f64 = 0.5;

/// A triangulated 3D point from one cross-view masklet pair, with the
/// pair-product class scores.
#[derive(Debug, Clone)]
pub struct CandidatePoint {
    /// Midpoint of the shortest segment between the two rays (world, mm).
    pub position: Vec3,
    /// The two source masklets, from distinct views, ordered ascending.
    pub source: [(ViewId, MaskletId); 2],
    /// Product of the two masklets' clamped class scores.
    pub class_scores: BTreeMap<ClassId, f64>,
    /// Argmax of `class_scores` (ties break to the lowest class id).
    pub assigned_class: ClassId,
    /// Length of the shortest connecting segment, mm.
    pub gap: f64,
}

impl CandidatePoint {
    /// The score this point is clustered by: its assigned-class score.
    pub fn score(&self) -> f64 {
        self.class_scores
            .get(&self.assigned_class)
            .copied()
            .unwrap_or(0.0)
    }
}

/// Midpoint and length of the shortest segment connecting two rays, with
/// closest-point parameters clamped to the forward half-lines.
///
/// Near-parallel ray pairs (line angle below 0.5 degrees) are rejected as
/// unstable; pairs whose unclamped closest points both lie behind the ray
/// origins are rejected as behind-camera.
pub fn triangulate_pair(ray_i: &Ray, ray_j: &Ray) -> Result<(Vec3, f64), DetectError> {
    triangulate_pair_with_min_angle(ray_i, ray_j, DEFAULT_MIN_RAY_ANGLE_DEG)
}

pub fn triangulate_pair_with_min_angle(
    ray_i: &Ray,
    ray_j: &Ray,
    min_angle_deg: f64,
) -> Result<(Vec3, f64), DetectError> {
    let d1 = ray_i.direction;
    let d2 = ray_j.direction;
    let b = d1.dot(&d2);
    // |b| = cos(line angle); near +-1 the normal equations degenerate.
    let angle_deg = b.abs().clamp(0.0, 1.0).acos().to_degrees();
    if angle_deg < min_angle_deg {
        return Err(DetectError::NearParallelRays { angle_deg });
    }

    let w = ray_i.origin - ray_j.origin;
    let d = d1.dot(&w);
    let e = d2.dot(&w);
    let denom = 1.0 - b * b;
    // Unclamped closest-point parameters on the two infinite lines.
    let mut s = (b * e - d) / denom;
    let mut t = (e - b * d) / denom;

    if s < 0.0 && t < 0.0 {
        return Err(DetectError::BehindCameras);
    }
    if s < 0.0 {
        // Clamp s to the origin; the optimal t for s = 0 is e.
        s = 0.0;
        t = e;
        if t < 0.0 {
            return Err(DetectError::BehindCameras);
        }
    } else if t < 0.0 {
        // Clamp t to the origin; the optimal s for t = 0 is -d.
        t = 0.0;
        s = -d;
        if s < 0.0 {
            return Err(DetectError::BehindCameras);
        }
    }

    let p1 = ray_i.point_at(s);
    let p2 = ray_j.point_at(t);
    Ok(((p1 + p2) / 2.0, (p1 - p2).norm()))
}

/// Element-wise product of two masklets' class scores, and the argmax class
/// (ties break to the lowest class id). Classes missing on either side
/// contribute a zero product.
pub fn pair_class_scores(
    scores_i: &BTreeMap<ClassId, f64>,
    scores_j: &BTreeMap<ClassId, f64>,
) -> (BTreeMap<ClassId, f64>, ClassId) {
    let mut product = BTreeMap::new();
    for (&class_id, &si) in scores_i {
        let sj = scores_j.get(&class_id).copied().unwrap_or(0.0);
        product.insert(class_id, si * sj);
    }
    for &class_id in scores_j.keys() {
        product.entry(class_id).or_insert(0.0);
    }
    // BTreeMap iterates in ascending class order; strict > keeps the lowest
    // id on ties.
    let mut best = ClassId(0);
    let mut best_score = f64::NEG_INFINITY;
    for (&class_id, &score) in &product {
        if score > best_score {
            best = class_id;
            best_score = score;
        }
    }
    (product, best)
}
