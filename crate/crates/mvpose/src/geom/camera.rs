use super::{GeomError, Mat3, Real, RigidTransform, Vec2, Vec3};
use crate::ViewId;

/// Minimum depth (mm) at which a point still counts as in front of the
/// camera; projections closer than this signal behind-camera.
pub(crate) const MIN_DEPTH_MM: f64 = 1e-9;

/// A calibrated pinhole view: intrinsics `K`, the world-to-camera rigid
/// transform, the image size in pixels and a scene-unique identifier.
///
/// No lens distortion is modeled.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: Mat3,
    pub world_to_cam: RigidTransform,
    pub width: u32,
    pub height: u32,
    pub view_id: ViewId,
}

impl Camera {
    /// Validates that `K` is upper triangular with positive focal lengths
    /// and `K[2,2] = 1`, and that the extrinsic rotation is valid.
    pub fn new(
        intrinsics: Mat3,
        world_to_cam: RigidTransform,
        width: u32,
        height: u32,
        view_id: ViewId,
    ) -> Result<Self, GeomError> {
        if width == 0 || height == 0 {
            return Err(GeomError::EmptyImage);
        }
        if (intrinsics[(2, 2)] - 1.0).abs() > 1e-12 {
            return Err(GeomError::InvalidIntrinsics("K[2,2] must be 1".into()));
        }
        if intrinsics[(0, 0)] <= 0.0 || intrinsics[(1, 1)] <= 0.0 {
            return Err(GeomError::InvalidIntrinsics(
                "focal lengths must be positive".into(),
            ));
        }
        for (r, c) in [(1, 0), (2, 0), (2, 1)] {
            if intrinsics[(r, c)].abs() > 1e-12 {
                return Err(GeomError::InvalidIntrinsics(
                    "K must be upper triangular".into(),
                ));
            }
        }
        if !world_to_cam.is_valid_rotation(1e-6) {
            return Err(GeomError::InvalidRotation {
                deviation: world_to_cam.rotation_deviation(),
            });
        }
        Ok(Self {
            intrinsics,
            world_to_cam,
            width,
            height,
            view_id,
        })
    }

    /// Builds a simple camera with focal length `f`, principal point at the
    /// image center and no skew.
    pub fn simple(
        f: f64,
        width: u32,
        height: u32,
        world_to_cam: RigidTransform,
        view_id: ViewId,
    ) -> Result<Self, GeomError> {
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        Self::new(
            Mat3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0),
            world_to_cam,
            width,
            height,
            view_id,
        )
    }

    /// Camera center expressed in the world frame.
    pub fn center_world(&self) -> Vec3 {
        self.world_to_cam.invert().translation
    }

    /// Perspective projection of a world point to pixel coordinates
    /// (pixel-center convention).
    pub fn project(&self, point_world: &Vec3) -> Result<Vec2, GeomError> {
        let p_cam = self.world_to_cam.transform_point(point_world);
        self.project_cam(&p_cam)
    }

    /// Projection of a point already expressed in the camera frame.
    pub fn project_cam(&self, p_cam: &Vec3) -> Result<Vec2, GeomError> {
        if p_cam.z < MIN_DEPTH_MM {
            return Err(GeomError::BehindCamera { depth: p_cam.z });
        }
        let k = &self.intrinsics;
        let inv_z = 1.0 / p_cam.z;
        Ok(Vec2::new(
            (k[(0, 0)] * p_cam.x + k[(0, 1)] * p_cam.y) * inv_z + k[(0, 2)],
            k[(1, 1)] * p_cam.y * inv_z + k[(1, 2)],
        ))
    }

    /// Back-projects a pixel to the world-frame ray through it. Pixels
    /// outside the image bounds are allowed.
    pub fn pixel_to_ray(&self, pixel: &Vec2) -> Ray {
        let dir_cam = self.backproject_dir(pixel);
        let cam_to_world = self.world_to_cam.invert();
        let dir_world = cam_to_world.transform_vector(&dir_cam);
        Ray {
            origin: cam_to_world.translation,
            direction: dir_world / dir_world.norm(),
        }
    }

    /// Camera-frame direction through a pixel at unit depth (not normalized).
    pub fn backproject_dir(&self, pixel: &Vec2) -> Vec3 {
        let k = &self.intrinsics;
        let y = (pixel.y - k[(1, 2)]) / k[(1, 1)];
        let x = (pixel.x - k[(0, 2)] - k[(0, 1)] * y) / k[(0, 0)];
        Vec3::new(x, y, 1.0)
    }

    /// Camera-frame 3D point for a pixel with known depth (mm).
    pub fn backproject_depth(&self, pixel: &Vec2, depth: f64) -> Vec3 {
        self.backproject_dir(pixel) * depth
    }

    pub fn contains_pixel(&self, pixel: &Vec2) -> bool {
        pixel.x >= -0.5
            && pixel.y >= -0.5
            && pixel.x < self.width as f64 - 0.5
            && pixel.y < self.height as f64 - 0.5
    }
}

/// A half-line in world coordinates with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self, GeomError> {
        let norm = direction.norm();
        if norm < 1e-12 {
            return Err(GeomError::ZeroDirection);
        }
        Ok(Self {
            origin,
            direction: direction / norm,
        })
    }

    pub fn point_at(&self, s: Real) -> Vec3 {
        self.origin + self.direction * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn test_camera() -> Camera {
        Camera::new(
            Mat3::new(100.0, 0.0, 50.0, 0.0, 100.0, 50.0, 0.0, 0.0, 1.0),
            RigidTransform::identity(),
            101,
            101,
            ViewId(0),
        )
        .unwrap()
    }

    #[test]
    fn principal_axis_point_projects_to_principal_point() {
        let cam = test_camera();
        let px = cam.project(&Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(px, Vec2::new(50.0, 50.0), epsilon = 1e-12);
    }

    #[test]
    fn off_axis_point_projects_closed_form() {
        let cam = test_camera();
        // 100 * (1/2) + 50 = 100
        let px = cam.project(&Vec3::new(1.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(px, Vec2::new(100.0, 50.0), epsilon = 1e-12);
    }

    #[test]
    fn negative_depth_is_behind_camera() {
        let cam = test_camera();
        assert!(matches!(
            cam.project(&Vec3::new(0.0, 0.0, -1.0)),
            Err(GeomError::BehindCamera { .. })
        ));
    }

    #[test]
    fn principal_pixel_gives_principal_ray() {
        let cam = test_camera();
        let ray = cam.pixel_to_ray(&Vec2::new(50.0, 50.0));
        assert_relative_eq!(ray.origin, Vec3::zeros(), epsilon = 1e-15);
        assert_relative_eq!(ray.direction, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn ray_direction_from_offset_pixel() {
        let cam = test_camera();
        let ray = cam.pixel_to_ray(&Vec2::new(100.0, 50.0));
        let expected = Vec3::new(0.5, 0.0, 1.0).normalize();
        assert_relative_eq!(ray.direction, expected, epsilon = 1e-12);
    }

    #[test]
    fn translated_camera_center_is_ray_origin() {
        let cam = Camera::new(
            test_camera().intrinsics,
            // world-to-cam translation +10 along z means the camera sits at
            // z = -10 in world coordinates.
            RigidTransform::from_translation(Vec3::new(0.0, 0.0, 10.0)),
            101,
            101,
            ViewId(1),
        )
        .unwrap();
        let ray = cam.pixel_to_ray(&Vec2::new(50.0, 50.0));
        assert_relative_eq!(ray.origin, Vec3::new(0.0, 0.0, -10.0), epsilon = 1e-12);
    }

    #[test]
    fn project_ray_round_trip_stays_within_1e6_px() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rot = RigidTransform::from_axis_angle(Vec3::new(0.3, -0.2, 0.9), 0.7);
        let cam = Camera::new(
            Mat3::new(320.0, 0.4, 300.0, 0.0, 321.5, 250.0, 0.0, 0.0, 1.0),
            RigidTransform::new(rot.rotation, Vec3::new(5.0, -3.0, 20.0)),
            600,
            500,
            ViewId(2),
        )
        .unwrap();
        for _ in 0..500 {
            let pixel = Vec2::new(
                rng.random_range(0.0..600.0),
                rng.random_range(0.0..500.0),
            );
            let ray = cam.pixel_to_ray(&pixel);
            let s = rng.random_range(0.1..100.0);
            let reproj = cam.project(&ray.point_at(s)).unwrap();
            assert!((reproj - pixel).norm() < 1e-6, "pixel {pixel:?} s {s}");
        }
    }

    #[test]
    fn intrinsics_validation() {
        let bad_k = Mat3::new(100.0, 0.0, 50.0, 0.0, 100.0, 50.0, 0.0, 0.0, 2.0);
        assert!(Camera::new(bad_k, RigidTransform::identity(), 10, 10, ViewId(0)).is_err());
        let lower = Mat3::new(100.0, 0.0, 50.0, 1.0, 100.0, 50.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(lower, RigidTransform::identity(), 10, 10, ViewId(0)).is_err());
    }
}
