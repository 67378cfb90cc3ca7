use super::raster::rasterize;
use super::RenderError;
use crate::geom::{Camera, RigidTransform, TriMesh, Vec2, Vec3};
use crate::mask::BinaryMask;

/// A boundary cell of a binary mask together with its 2D outward normal
/// (unit length, y grows downward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPoint2D {
    pub pixel: Vec2,
    pub outward_normal: Vec2,
}

/// A rendered-contour sample: the pixel it projected to at creation time and
/// the corresponding 3D point on the model surface, in object coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelContourPoint {
    pub pixel: Vec2,
    pub point_object: Vec3,
}

#[inline]
fn is_boundary(mask: &BinaryMask, x: u32, y: u32) -> bool {
    let (xi, yi) = (x as i64, y as i64);
    mask.get(x, y)
        && (!mask.get_clamped(xi - 1, yi)
            || !mask.get_clamped(xi + 1, yi)
            || !mask.get_clamped(xi, yi - 1)
            || !mask.get_clamped(xi, yi + 1))
}

/// All boundary cells of the mask (set cells with at least one unset
/// 4-neighbor; the image border counts as unset), in raster-scan order,
/// each with its outward normal.
pub fn extract_contour(mask: &BinaryMask) -> Result<Vec<ContourPoint2D>, RenderError> {
    if mask.is_empty() {
        return Err(RenderError::EmptyMask);
    }
    let mut points = Vec::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if is_boundary(mask, x, y) {
                // Boundary cells always admit a normal: the gradient fallback
                // chain ends at a direction toward an unset 4-neighbor.
                let normal = outward_normal(mask, x, y)?;
                points.push(ContourPoint2D {
                    pixel: Vec2::new(x as f64, y as f64),
                    outward_normal: normal,
                });
            }
        }
    }
    Ok(points)
}

/// 3x3 box-smoothed occupancy at a cell (out-of-bounds reads as unset).
fn smoothed(mask: &BinaryMask, x: i64, y: i64) -> f64 {
    let mut sum = 0.0;
    for dy in -1..=1 {
        for dx in -1..=1 {
            sum += mask.get_clamped(x + dx, y + dy) as u8 as f64;
        }
    }
    sum / 9.0
}

/// Outward unit normal of the mask boundary at a boundary cell: the negated,
/// normalized central-difference gradient of the box-smoothed occupancy.
///
/// Degenerate gradients (thin structures, isolated pixels) fall back to the
/// mean direction toward unset 8-neighbors, and if that cancels, to the
/// first unset 4-neighbor in left/up/right/down order.
pub fn outward_normal(mask: &BinaryMask, x: u32, y: u32) -> Result<Vec2, RenderError> {
    let (xi, yi) = (x as i64, y as i64);
    let gx = (smoothed(mask, xi + 1, yi) - smoothed(mask, xi - 1, yi)) / 2.0;
    let gy = (smoothed(mask, xi, yi + 1) - smoothed(mask, xi, yi - 1)) / 2.0;
    // The occupancy gradient points inward (toward set cells).
    let g = Vec2::new(-gx, -gy);
    let norm = g.norm();
    if norm > 1e-12 {
        return Ok(g / norm);
    }

    let mut sum = Vec2::zeros();
    let mut any = false;
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if (dx, dy) == (0, 0) {
                continue;
            }
            if !mask.get_clamped(xi + dx, yi + dy) {
                any = true;
                sum += Vec2::new(dx as f64, dy as f64).normalize();
            }
        }
    }
    if !any {
        return Err(RenderError::UndefinedNormal(x, y));
    }
    let norm = sum.norm();
    if norm > 1e-9 {
        return Ok(sum / norm);
    }
    // Fully symmetric surroundings (e.g. a 1-pixel mask or a one-cell-thin
    // strip): pick the first unset 4-neighbor deterministically.
    for (dx, dy) in [(-1i64, 0i64), (0, -1), (1, 0), (0, 1)] {
        if !mask.get_clamped(xi + dx, yi + dy) {
            return Ok(Vec2::new(dx as f64, dy as f64));
        }
    }
    Err(RenderError::UndefinedNormal(x, y))
}

/// Renders the mesh under `pose_world`, extracts the silhouette contour and
/// back-projects every contour pixel through the rendered depth into object
/// coordinates. An empty render yields an empty set.
pub fn model_contour_3d(
    mesh: &TriMesh,
    camera: &Camera,
    pose_world: &RigidTransform,
) -> Vec<ModelContourPoint> {
    let (mask, depth) = rasterize(mesh, camera, pose_world);
    if mask.is_empty() {
        return Vec::new();
    }
    let contour = match extract_contour(&mask) {
        Ok(c) => c,
        Err(_) => return Vec::new(),
    };
    let cam_to_world = camera.world_to_cam.invert();
    let world_to_object = pose_world.invert();
    contour
        .into_iter()
        .map(|cp| {
            let z = depth.get(cp.pixel.x as u32, cp.pixel.y as u32) as f64;
            let p_cam = camera.backproject_depth(&cp.pixel, z);
            let p_world = cam_to_world.transform_point(&p_cam);
            ModelContourPoint {
                pixel: cp.pixel,
                point_object: world_to_object.transform_point(&p_world),
            }
        })
        .collect()
}
