use super::CoarsePoseError;
use crate::geom::Mat3;
use nalgebra::Vector3;

/// Chordal L2 mean of rotations: the arithmetic matrix mean projected back
/// onto SO(3) by SVD with determinant sign correction.
///
/// The projection is unique iff `s2 + sign * s3 > 0` for the sorted singular
/// values of the mean (`sign = det(U) det(V)`); antipodal input sets violate
/// this and yield an ambiguous-mean error.
pub fn average_rotations(rotations: &[Mat3]) -> Result<Mat3, CoarsePoseError> {
    if rotations.is_empty() {
        return Err(CoarsePoseError::EmptyRotations);
    }
    let mean = rotations.iter().sum::<Mat3>() / rotations.len() as f64;
    let svd = mean.svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v_t requested");
    let sign = (u.determinant() * v_t.determinant()).signum();
    let s = &svd.singular_values; // sorted descending
    if s[1] + sign * s[2] <= 1e-9 {
        return Err(CoarsePoseError::AmbiguousMean);
    }
    Ok(u * Mat3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * v_t)
}
