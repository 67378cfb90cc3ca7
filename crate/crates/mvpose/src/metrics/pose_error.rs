use super::MetricsError;
use crate::geom::{skew_of, RigidTransform, SymmetryAnnotation, TriMesh, Vec3};
use serde::Serialize;

/// Pose accuracy of one instance. `add` is the ADD(-S) error: plain ADD for
/// asymmetric objects, ADD-S as soon as any symmetry is declared.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PoseError {
    pub add: f64,
    pub translation_mm: f64,
    pub rotation_deg: f64,
}

/// Mean distance between corresponding model points under two poses.
pub fn add_error(
    pose_est: &RigidTransform,
    pose_gt: &RigidTransform,
    model_points: &[Vec3],
) -> Result<f64, MetricsError> {
    if model_points.is_empty() {
        return Err(MetricsError::EmptyPointSet);
    }
    let sum: f64 = model_points
        .iter()
        .map(|x| (pose_est.transform_point(x) - pose_gt.transform_point(x)).norm())
        .sum();
    Ok(sum / model_points.len() as f64)
}

/// Symmetric variant: mean over estimated points of the distance to the
/// nearest ground-truth point.
pub fn adds_error(
    pose_est: &RigidTransform,
    pose_gt: &RigidTransform,
    model_points: &[Vec3],
) -> Result<f64, MetricsError> {
    if model_points.is_empty() {
        return Err(MetricsError::EmptyPointSet);
    }
    let gt_points: Vec<Vec3> = model_points
        .iter()
        .map(|x| pose_gt.transform_point(x))
        .collect();
    let sum: f64 = model_points
        .iter()
        .map(|x| {
            let e = pose_est.transform_point(x);
            gt_points
                .iter()
                .map(|g| (e - g).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(sum / model_points.len() as f64)
}

/// Deterministic farthest-point subsampling, seeded at index 0. Used to cap
/// the model point count for the distance metrics.
pub fn farthest_point_subsample(points: &[Vec3], max_points: usize) -> Vec<Vec3> {
    if points.len() <= max_points || max_points == 0 {
        return points.to_vec();
    }
    let mut selected = Vec::with_capacity(max_points);
    let mut min_dist = vec![f64::INFINITY; points.len()];
    let mut current = 0usize;
    selected.push(points[0]);
    for _ in 1..max_points {
        let picked = points[current];
        let mut best = 0usize;
        let mut best_dist = -1.0;
        for (i, p) in points.iter().enumerate() {
            let d = (p - picked).norm_squared().min(min_dist[i]);
            min_dist[i] = d;
            if d > best_dist {
                best_dist = d;
                best = i;
            }
        }
        current = best;
        selected.push(points[best]);
    }
    selected
}

fn geodesic_deg(relative_trace: f64) -> f64 {
    ((relative_trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Translation and rotation error between two poses, each minimized over
/// the object's declared symmetry transforms (identity always included);
/// continuous-axis symmetries are minimized in closed form over the axis
/// angle. `add` carries ADD(-S) on the mesh vertices.
pub fn pose_errors(
    pose_est: &RigidTransform,
    pose_gt: &RigidTransform,
    mesh: &TriMesh,
) -> Result<PoseError, MetricsError> {
    let mut translation = (pose_est.translation - pose_gt.translation).norm();
    let relative = pose_est.rotation.transpose() * pose_gt.rotation;
    let mut rotation = geodesic_deg(relative.trace());

    for symmetry in mesh.symmetries() {
        match symmetry {
            SymmetryAnnotation::Discrete(transforms) => {
                for s in transforms {
                    let gt_s = pose_gt.compose(s);
                    translation =
                        translation.min((pose_est.translation - gt_s.translation).norm());
                    let m = pose_est.rotation.transpose() * gt_s.rotation;
                    rotation = rotation.min(geodesic_deg(m.trace()));
                }
            }
            SymmetryAnnotation::ContinuousAxis(axis) => {
                // maximize tr(A R_axis(theta)) = c cos + s sin + a'Aa.
                let a = relative;
                let aa = axis.dot(&(a * axis));
                let c = a.trace() - aa;
                let s = (a * skew_of(axis)).trace();
                let best_trace = aa + (c * c + s * s).sqrt();
                rotation = rotation.min(geodesic_deg(best_trace));
                // The axis passes through the object origin, so the
                // symmetry leaves the translation untouched.
            }
        }
    }

    let points = farthest_point_subsample(mesh.vertices(), 10_000);
    let add = if mesh.has_symmetries() {
        adds_error(pose_est, pose_gt, &points)?
    } else {
        add_error(pose_est, pose_gt, &points)?
    };

    Ok(PoseError {
        add,
        translation_mm: translation,
        rotation_deg: rotation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Mat3;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rz(deg: f64) -> RigidTransform {
        RigidTransform::from_axis_angle(Vec3::z(), deg.to_radians())
    }

    fn random_pose(rng: &mut impl Rng) -> RigidTransform {
        RigidTransform::new(
            RigidTransform::from_axis_angle(
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0f64).max(0.05),
                ),
                rng.random_range(-3.0..3.0),
            )
            .rotation,
            Vec3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            ),
        )
    }

    #[test]
    fn identical_poses_have_zero_add() {
        let pose = rz(30.0);
        let pts = [Vec3::x(), Vec3::y(), Vec3::new(1.0, 2.0, 3.0)];
        assert_eq!(add_error(&pose, &pose, &pts).unwrap(), 0.0);
        assert_eq!(adds_error(&pose, &pose, &pts).unwrap(), 0.0);
    }

    #[test]
    fn pure_translation_gives_its_norm_for_any_point_set() {
        let est = RigidTransform::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let gt = RigidTransform::identity();
        let pts = [Vec3::zeros(), Vec3::new(3.0, -2.0, 9.0), Vec3::y() * 7.0];
        assert!((add_error(&est, &gt, &pts).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_rotation_chords() {
        // Points (+-1, 0, 0) rotated 90 deg about z move by sqrt(2) each.
        let est = rz(90.0);
        let gt = RigidTransform::identity();
        let pts = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        assert!((add_error(&est, &gt, &pts).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_ring_has_zero_adds_under_half_turn() {
        let pts: Vec<Vec3> = (0..8)
            .map(|i| {
                let a = i as f64 / 8.0 * std::f64::consts::TAU;
                Vec3::new(a.cos(), a.sin(), 0.5)
            })
            .collect();
        let est = rz(180.0);
        let gt = RigidTransform::identity();
        assert!(adds_error(&est, &gt, &pts).unwrap() < 1e-12);
        assert!(add_error(&est, &gt, &pts).unwrap() > 1.0);
    }

    #[test]
    fn adds_never_exceeds_add() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..40)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                )
            })
            .collect();
        for _ in 0..200 {
            let est = random_pose(&mut rng);
            let gt = random_pose(&mut rng);
            let add = add_error(&est, &gt, &pts).unwrap();
            let adds = adds_error(&est, &gt, &pts).unwrap();
            assert!(adds <= add + 1e-12);
        }
    }

    #[test]
    fn add_invariant_under_common_left_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec3> = (0..20)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                )
            })
            .collect();
        for _ in 0..50 {
            let est = random_pose(&mut rng);
            let gt = random_pose(&mut rng);
            let g = random_pose(&mut rng);
            let base = add_error(&est, &gt, &pts).unwrap();
            let moved = add_error(&g.compose(&est), &g.compose(&gt), &pts).unwrap();
            assert!((base - moved).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_poses_have_zero_pose_errors() {
        let mesh = crate::synth::primitives::tool_mesh();
        let pose = random_pose(&mut ChaCha8Rng::seed_from_u64(1));
        let e = pose_errors(&pose, &pose, &mesh).unwrap();
        assert_eq!(e.translation_mm, 0.0);
        assert!(e.rotation_deg < 1e-6);
        assert!(e.add < 1e-12);
    }

    #[test]
    fn declared_discrete_symmetry_is_absorbed() {
        let mesh = crate::synth::primitives::box_mesh(Vec3::new(10.0, 10.0, 30.0))
            .with_symmetries(vec![SymmetryAnnotation::Discrete(vec![rz(180.0)])]);
        let gt = random_pose(&mut ChaCha8Rng::seed_from_u64(2));
        let est = gt.compose(&rz(180.0));
        let e = pose_errors(&est, &gt, &mesh).unwrap();
        assert!(e.translation_mm < 1e-9);
        assert!(e.rotation_deg < 1e-6, "rotation {}", e.rotation_deg);
        assert!(e.add < 1e-9);
    }

    #[test]
    fn continuous_axis_symmetry_absorbs_any_axis_rotation() {
        let mesh = crate::synth::primitives::box_mesh(Vec3::new(10.0, 10.0, 30.0))
            .with_symmetries(vec![SymmetryAnnotation::continuous_axis(Vec3::z()).unwrap()]);
        let gt = random_pose(&mut ChaCha8Rng::seed_from_u64(4));
        let est = gt.compose(&rz(30.0));
        let e = pose_errors(&est, &gt, &mesh).unwrap();
        assert!(e.rotation_deg < 1e-6, "rotation {}", e.rotation_deg);
        assert!(e.translation_mm < 1e-9);
    }

    #[test]
    fn no_symmetries_equals_plain_errors() {
        let mesh = crate::synth::primitives::tool_mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = random_pose(&mut rng);
        let est = random_pose(&mut rng);
        let e = pose_errors(&est, &gt, &mesh).unwrap();
        let expected_t = (est.translation - gt.translation).norm();
        let m: Mat3 = est.rotation.transpose() * gt.rotation;
        let expected_r = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees();
        assert!((e.translation_mm - expected_t).abs() < 1e-12);
        assert!((e.rotation_deg - expected_r).abs() < 1e-9);
    }

    #[test]
    fn farthest_point_subsample_is_deterministic_and_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let a = farthest_point_subsample(&pts, 50);
        let b = farthest_point_subsample(&pts, 50);
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
    }
}
