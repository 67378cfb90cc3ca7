use super::{GeomError, Mat3, Real, Vec3};

/// A rigid transform in SE(3): `p' = R p + t`.
///
/// The rotation is stored as an explicit 3x3 matrix (unitless) and the
/// translation in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0),
        translation: Vec3::new(0.0, 0.0, 0.0),
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a transform after checking the rotation is orthonormal with
    /// determinant +1 within `tol`.
    pub fn checked(rotation: Mat3, translation: Vec3, tol: f64) -> Result<Self, GeomError> {
        let deviation = rotation_deviation(&rotation);
        if deviation > tol {
            return Err(GeomError::InvalidRotation { deviation });
        }
        Ok(Self::new(rotation, translation))
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Mat3::identity(), translation)
    }

    /// Rotation of `angle_rad` about the (not necessarily unit) `axis`,
    /// via the Rodrigues formula. A zero axis yields the identity.
    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Self {
        Self::new(rodrigues(axis, angle_rad), Vec3::zeros())
    }

    /// Exponential map of a rotation vector (axis scaled by angle in radians).
    pub fn from_rotation_vector(omega: Vec3) -> Self {
        Self::new(rodrigues(omega, omega.norm()), Vec3::zeros())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> RigidTransform {
        let rot_inv = self.rotation.transpose();
        RigidTransform {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Rotates a direction without translating it.
    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Max-norm deviation of `R^T R` from the identity plus the determinant
    /// deviation from +1; zero for an exact rotation.
    pub fn rotation_deviation(&self) -> f64 {
        rotation_deviation(&self.rotation)
    }

    pub fn is_valid_rotation(&self, tol: f64) -> bool {
        self.rotation_deviation() <= tol
    }

    /// Row-major 4x4 homogeneous matrix (last row 0,0,0,1).
    pub fn to_mat4_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
            0.0,
            0.0,
            0.0,
            1.0,
        ]
    }

    pub fn from_mat4_row_major(m: &[f64; 16]) -> Self {
        Self::new(
            Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]),
            Vec3::new(m[3], m[7], m[11]),
        )
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

fn rotation_deviation(rotation: &Mat3) -> f64 {
    let ortho = rotation.transpose() * rotation - Mat3::identity();
    let ortho_dev = ortho.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let det_dev = (rotation.determinant() - 1.0).abs();
    ortho_dev.max(det_dev)
}

fn rodrigues(axis: Vec3, angle_rad: f64) -> Mat3 {
    let norm = axis.norm();
    if norm == 0.0 || angle_rad == 0.0 {
        return Mat3::identity();
    }
    let a = axis / norm;
    let (s, c) = angle_rad.sin_cos();
    let k = skew(&a);
    Mat3::identity() + k * s + k * k * (1.0 - c)
}

/// Skew-symmetric matrix `[v]_x` with `[v]_x w = v × w`.
pub(crate) fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Geodesic angle between two rotations, in degrees.
pub fn rotation_angle_deg(a: &Mat3, b: &Mat3) -> Real {
    let m = a.transpose() * b;
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}
