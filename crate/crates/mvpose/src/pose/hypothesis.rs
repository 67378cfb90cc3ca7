use super::{HypothesisConfig, PoseHypothesis};
use crate::geom::{Mat3, RigidTransform, Vec3};
use crate::synth::primitives::icosphere;

/// The first `n` unit directions of the smallest icosphere subdivision with
/// at least `n` vertices (12, 42, 162, 642, ... vertices per level).
fn viewpoint_directions(n: usize) -> Vec<Vec3> {
    let mut level = 0u32;
    loop {
        let count = 10 * 4usize.pow(level) + 2;
        if count >= n || level > 6 {
            let (vertices, _) = icosphere(level);
            return vertices.into_iter().take(n).collect();
        }
        level += 1;
    }
}

/// Rotation whose third column (object z) looks along `dir`.
fn look_along(dir: &Vec3) -> Mat3 {
    let z = dir.normalize();
    let reference = if z.z.abs() < 0.99 {
        Vec3::z()
    } else {
        Vec3::x()
    };
    let x = reference.cross(&z).normalize();
    let y = z.cross(&x);
    Mat3::from_columns(&[x, y, z])
}

/// Coarse pose hypotheses about an instance center: `n_viewpoints`
/// icosphere directions, each combined with `n_inplane` in-plane rotations
/// uniform in [0, 2pi). Every hypothesis translation equals `center`.
pub fn sample_hypotheses(center: Vec3, config: &HypothesisConfig) -> Vec<PoseHypothesis> {
    let mut hypotheses = Vec::with_capacity(config.n_viewpoints * config.n_inplane);
    for dir in viewpoint_directions(config.n_viewpoints) {
        let base = look_along(&dir);
        for k in 0..config.n_inplane {
            let angle = k as f64 / config.n_inplane as f64 * std::f64::consts::TAU;
            let inplane = RigidTransform::from_axis_angle(Vec3::z(), angle).rotation;
            hypotheses.push(PoseHypothesis::unscored(RigidTransform::new(
                base * inplane,
                center,
            )));
        }
    }
    hypotheses
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation_angle_deg;

    #[test]
    fn default_config_yields_504_hypotheses_at_center() {
        let config = HypothesisConfig::default();
        let center = Vec3::new(10.0, -20.0, 500.0);
        let hyps = sample_hypotheses(center, &config);
        assert_eq!(hyps.len(), 42 * 12);
        for h in &hyps {
            assert_eq!(h.pose_world.translation, center);
        }
    }

    #[test]
    fn all_rotations_are_orthonormal() {
        let hyps = sample_hypotheses(Vec3::zeros(), &HypothesisConfig::default());
        for h in &hyps {
            assert!(h.pose_world.rotation_deviation() < 1e-9);
        }
    }

    #[test]
    fn all_rotations_are_distinct() {
        let hyps = sample_hypotheses(Vec3::zeros(), &HypothesisConfig::default());
        let mut min_angle = f64::INFINITY;
        for i in 0..hyps.len() {
            for j in (i + 1)..hyps.len() {
                let angle = rotation_angle_deg(
                    &hyps[i].pose_world.rotation,
                    &hyps[j].pose_world.rotation,
                );
                min_angle = min_angle.min(angle);
            }
        }
        assert!(min_angle > 1e-6, "minimum pairwise angle {min_angle} deg");
    }

    #[test]
    fn non_default_counts_are_respected() {
        let config = HypothesisConfig {
            n_viewpoints: 162,
            n_inplane: 4,
            ..HypothesisConfig::default()
        };
        assert_eq!(sample_hypotheses(Vec3::zeros(), &config).len(), 162 * 4);
    }
}
