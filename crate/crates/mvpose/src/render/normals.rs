use super::contour::ContourPoint2D;
use super::{DepthMap, VisibleContourSet};
use crate::geom::{Camera, Vec2, Vec3};
use crate::ViewId;
use nalgebra::Matrix3;

/// Parameters of the depth-based occlusion test.
#[derive(Debug, Clone, Copy)]
pub struct OcclusionConfig {
    /// Neighborhood radius (px) used for surface-normal estimation.
    pub normal_radius: u32,
    /// How far (px) to search inward along the mask normal for a valid
    /// depth sample when the contour pixel itself has none.
    pub inward_search: u32,
    /// Below this xy-norm the projected normal counts as degenerate
    /// (fronto-parallel surface) and the point is kept.
    pub degenerate_eps: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            normal_radius: 3,
            inward_search: 3,
            degenerate_eps: 1e-6,
        }
    }
}

/// Estimates the camera-frame surface normal at a pixel from a depth map.
///
/// Valid-depth pixels within `radius` are back-projected to 3D; where the
/// full 4-neighborhood is valid the tangents come from central differences,
/// otherwise a least-squares plane is fit. The normal is oriented toward the
/// camera (non-positive z). Returns `None` when the neighborhood cannot
/// support a normal (fewer than three usable samples or a degenerate fit).
pub fn surface_normal_from_depth(
    depth: &DepthMap,
    camera: &Camera,
    pixel: (u32, u32),
    radius: u32,
) -> Option<Vec3> {
    let (x, y) = (pixel.0 as i64, pixel.1 as i64);
    let point_at = |xi: i64, yi: i64| -> Option<Vec3> {
        let d = depth.valid_at(xi, yi)?;
        Some(camera.backproject_depth(&Vec2::new(xi as f64, yi as f64), d as f64))
    };
    // Orientation is resolved against the viewing ray through the pixel; a
    // z-only test mis-signs steep pseudo-surfaces at depth discontinuities
    // away from the image center.
    let view_dir = camera.backproject_dir(&Vec2::new(pixel.0 as f64, pixel.1 as f64));

    // Fast path: full cross of direct neighbors.
    if let (Some(px1), Some(px0), Some(py1), Some(py0)) = (
        point_at(x + 1, y),
        point_at(x - 1, y),
        point_at(x, y + 1),
        point_at(x, y - 1),
    ) {
        let n = (px1 - px0).cross(&(py1 - py0));
        return orient(n, &view_dir);
    }

    let r = radius as i64;
    let mut points = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if let Some(p) = point_at(x + dx, y + dy) {
                points.push(p);
            }
        }
    }
    if points.len() < 3 {
        return None;
    }
    let centroid: Vec3 = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Matrix3::<f64>::zeros();
    for p in &points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // Collinear samples leave two vanishing eigenvalues; no plane is defined.
    if eig.eigenvalues[order[1]] < 1e-9 {
        return None;
    }
    let n = eig.eigenvectors.column(order[0]).into_owned();
    orient(n, &view_dir)
}

/// Normalizes and flips the normal so it faces the camera along the local
/// viewing ray (`n . view_dir <= 0`).
fn orient(n: Vec3, view_dir: &Vec3) -> Option<Vec3> {
    let norm = n.norm();
    if norm < 1e-12 {
        return None;
    }
    let n = n / norm;
    Some(if n.dot(view_dir) > 0.0 { -n } else { n })
}

/// Filters observed contour points through the occlusion test: the surface
/// normal is estimated from the depth map near the contour pixel, projected
/// onto the image plane, and the point is kept iff it agrees with the 2D
/// outward mask normal (`n_mask . n_proj > 0`).
///
/// Points whose normal cannot be estimated are discarded as unverifiable;
/// points with a degenerate projected normal (surface facing the camera
/// head-on) are kept.
pub fn occlusion_filter(
    view_id: ViewId,
    contour: &[ContourPoint2D],
    depth: &DepthMap,
    camera: &Camera,
    config: &OcclusionConfig,
) -> VisibleContourSet {
    let points = contour
        .iter()
        .filter(|cp| {
            let center = match sample_center(cp, depth, config) {
                Some(c) => c,
                None => return false,
            };
            let n_surf =
                match surface_normal_from_depth(depth, camera, center, config.normal_radius) {
                    Some(n) => n,
                    None => return false,
                };
            let n_proj = Vec2::new(n_surf.x, n_surf.y);
            let norm = n_proj.norm();
            if norm < config.degenerate_eps {
                return true;
            }
            cp.outward_normal.dot(&n_proj) / norm > 0.0
        })
        .copied()
        .collect();
    VisibleContourSet { view_id, points }
}

/// The contour pixel itself when it has valid depth, otherwise the nearest
/// valid-depth pixel stepping inward along the negated mask normal.
fn sample_center(
    cp: &ContourPoint2D,
    depth: &DepthMap,
    config: &OcclusionConfig,
) -> Option<(u32, u32)> {
    for step in 0..=config.inward_search {
        let p = cp.pixel - cp.outward_normal * step as f64;
        let (x, y) = (p.x.round() as i64, p.y.round() as i64);
        if depth.valid_at(x, y).is_some() {
            return Some((x as u32, y as u32));
        }
    }
    None
}
