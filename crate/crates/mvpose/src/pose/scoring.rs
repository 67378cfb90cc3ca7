use super::{PoseHypothesis, SupportingView};
use crate::geom::TriMesh;
use crate::render::rasterize;
use crate::ViewId;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Scores each hypothesis per view as the IoU between its rendered
/// silhouette and the instance's masklet, and aggregates by the mean over
/// the supporting views. Empty renders score zero in that view.
pub fn score_hypotheses(
    hypotheses: Vec<PoseHypothesis>,
    views: &BTreeMap<ViewId, SupportingView>,
    mesh: &TriMesh,
) -> Vec<PoseHypothesis> {
    hypotheses
        .into_par_iter()
        .map(|mut hypothesis| {
            let mut per_view = BTreeMap::new();
            let mut sum = 0.0;
            for (&view_id, view) in views {
                let (rendered, _) = rasterize(mesh, view.camera, &hypothesis.pose_world);
                let score = if rendered.is_empty() {
                    0.0
                } else {
                    rendered.iou(view.mask).unwrap_or(0.0)
                };
                per_view.insert(view_id, score);
                sum += score;
            }
            hypothesis.aggregate_score = if per_view.is_empty() {
                0.0
            } else {
                sum / per_view.len() as f64
            };
            hypothesis.per_view_scores = per_view;
            hypothesis
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Camera, RigidTransform, Vec3};
    use crate::mask::BinaryMask;
    use crate::synth::{look_at, primitives};

    #[test]
    fn perfect_pose_scores_one_in_every_view() {
        let cameras: Vec<Camera> = (0..3)
            .map(|i| {
                let angle = i as f64 * 2.0;
                let eye = Vec3::new(500.0 * angle.cos(), 500.0 * angle.sin(), 300.0);
                Camera::simple(450.0, 320, 240, look_at(eye, Vec3::zeros()), ViewId(i)).unwrap()
            })
            .collect();
        let mesh = primitives::tool_mesh();
        let gt = RigidTransform::from_translation(Vec3::new(0.0, 5.0, -3.0));
        let masks: Vec<BinaryMask> = cameras
            .iter()
            .map(|c| rasterize(&mesh, c, &gt).0)
            .collect();
        let views: BTreeMap<ViewId, SupportingView> = cameras
            .iter()
            .zip(&masks)
            .map(|(camera, mask)| (camera.view_id, SupportingView { camera, mask }))
            .collect();
        let scored = score_hypotheses(vec![PoseHypothesis::unscored(gt)], &views, &mesh);
        assert_eq!(scored[0].per_view_scores.len(), 3);
        for (&v, &s) in &scored[0].per_view_scores {
            assert!((s - 1.0).abs() < 1e-12, "view {v} scored {s}");
        }
        assert!((scored[0].aggregate_score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_silhouettes_score_zero_and_repeat_runs_are_bit_identical() {
        let camera =
            Camera::simple(400.0, 200, 200, RigidTransform::identity(), ViewId(0)).unwrap();
        let mesh = primitives::sphere_mesh(20.0, 2);
        // Observed mask in the far corner; object near the center.
        let observed = BinaryMask::from_fn(200, 200, |x, y| x < 20 && y < 20);
        let views = BTreeMap::from([(
            ViewId(0),
            SupportingView {
                camera: &camera,
                mask: &observed,
            },
        )]);
        let pose = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 400.0));
        let a = score_hypotheses(vec![PoseHypothesis::unscored(pose)], &views, &mesh);
        let b = score_hypotheses(vec![PoseHypothesis::unscored(pose)], &views, &mesh);
        assert_eq!(a[0].aggregate_score, 0.0);
        assert_eq!(a[0].aggregate_score.to_bits(), b[0].aggregate_score.to_bits());
        assert_eq!(a[0].per_view_scores, b[0].per_view_scores);
    }

    #[test]
    fn half_overlapping_equal_squares_score_one_third() {
        // Built directly from masks: two equal-area squares overlapping half.
        let a = BinaryMask::from_fn(40, 40, |x, y| x < 20 && y < 20);
        let b = BinaryMask::from_fn(40, 40, |x, y| (10..30).contains(&x) && y < 20);
        assert!((a.iou(&b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }
}
