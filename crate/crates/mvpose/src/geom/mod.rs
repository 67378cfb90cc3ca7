//! Geometric foundations: rigid transforms, pinhole cameras, triangle
//! meshes and rays.
//!
//! Conventions used throughout the crate:
//! - lengths are millimeters, angles are degrees at API boundaries
//!   (radians internally where noted);
//! - camera frames are right-handed with x right, y down, z forward;
//! - pixel `(u, v)` addresses the **center** of the image cell, so cell
//!   `(i, j)` spans `[i-0.5, i+0.5) x [j-0.5, j+0.5)`.
//!
//! All types here are immutable values and safe to share across workers.

mod camera;
mod mesh;
mod transform;

pub use camera::{Camera, Ray};
pub use mesh::{mesh_diameter, SymmetryAnnotation, TriMesh};
pub use transform::{rotation_angle_deg, RigidTransform};

pub(crate) use transform::skew as skew_of;

use thiserror::Error;

/// Scalar type used for all geometry.
pub type Real = f64;
/// 2D vector (pixels or millimeters depending on context).
pub type Vec2 = nalgebra::Vector2<Real>;
/// 3D vector (millimeters).
pub type Vec3 = nalgebra::Vector3<Real>;
/// 3x3 real matrix.
pub type Mat3 = nalgebra::Matrix3<Real>;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("point is behind the camera (depth {depth:.6} mm)")]
    BehindCamera { depth: f64 },
    #[error("rotation is not orthonormal with determinant +1 (deviation {deviation:.3e})")]
    InvalidRotation { deviation: f64 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("direction vector has zero norm")]
    ZeroDirection,
    #[error("mesh is degenerate: {0}")]
    DegenerateMesh(String),
    #[error("triangle references vertex {index} but mesh has {vertex_count} vertices")]
    TriangleIndexOutOfRange { index: u32, vertex_count: usize },
    #[error("symmetry axis must have unit norm (got {norm:.6})")]
    NonUnitAxis { norm: f64 },
}
