use super::DepthMap;
use crate::geom::{Camera, RigidTransform, TriMesh, Vec3};
use crate::mask::BinaryMask;

/// Geometry closer than this to the camera plane is clipped (mm).
const Z_NEAR_MM: f64 = 0.1;

/// Z-buffered rasterization of `mesh` posed in the world frame, seen from
/// `camera`. The mask is set exactly where depth was written; an object
/// fully behind the camera or out of frame yields a valid empty render.
pub fn rasterize(
    mesh: &TriMesh,
    camera: &Camera,
    pose_world: &RigidTransform,
) -> (BinaryMask, DepthMap) {
    let mut depth = DepthMap::new(camera.width, camera.height);
    fill_mesh(mesh, camera, pose_world, 0, &mut depth, &mut [], false);
    let mask = BinaryMask::from_fn(camera.width, camera.height, |x, y| depth.get(x, y) > 0.0);
    (mask, depth)
}

/// A multi-object render: the combined z-buffer plus, per pixel, the index
/// of the nearest object (the winner of the depth test).
#[derive(Debug, Clone)]
pub struct SceneRender {
    pub depth: DepthMap,
    owner: Vec<i32>,
    width: u32,
}

impl SceneRender {
    /// Visible (modal) mask of the object at `index`.
    pub fn modal_mask(&self, index: usize) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.depth.height(), |x, y| {
            self.owner[y as usize * self.width as usize + x as usize] == index as i32
        })
    }
}

/// Rasterizes several posed meshes into one shared z-buffer, recording which
/// object owns each pixel.
pub fn rasterize_scene(items: &[(&TriMesh, RigidTransform)], camera: &Camera) -> SceneRender {
    let mut depth = DepthMap::new(camera.width, camera.height);
    let mut owner = vec![-1i32; (camera.width as usize) * (camera.height as usize)];
    for (index, (mesh, pose)) in items.iter().enumerate() {
        fill_mesh(mesh, camera, pose, index as i32, &mut depth, &mut owner, true);
    }
    SceneRender {
        depth,
        owner,
        width: camera.width,
    }
}

fn fill_mesh(
    mesh: &TriMesh,
    camera: &Camera,
    pose_world: &RigidTransform,
    index: i32,
    depth: &mut DepthMap,
    owner: &mut [i32],
    track_owner: bool,
) {
    let object_to_cam = camera.world_to_cam.compose(pose_world);
    let cam_verts: Vec<Vec3> = mesh
        .vertices()
        .iter()
        .map(|v| object_to_cam.transform_point(v))
        .collect();

    let mut clipped = Vec::with_capacity(4);
    for tri in mesh.triangles() {
        let verts = [
            cam_verts[tri[0] as usize],
            cam_verts[tri[1] as usize],
            cam_verts[tri[2] as usize],
        ];
        clip_near(&verts, &mut clipped);
        // A clipped polygon has 0, 3 or 4 vertices; fan-triangulate.
        for k in 1..clipped.len().saturating_sub(1) {
            fill_triangle(
                camera,
                &[clipped[0], clipped[k], clipped[k + 1]],
                index,
                depth,
                owner,
                track_owner,
            );
        }
    }
}

/// Sutherland-Hodgman clip of one triangle against the near plane z = Z_NEAR.
fn clip_near(tri: &[Vec3; 3], out: &mut Vec<Vec3>) {
    out.clear();
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= Z_NEAR_MM;
        let b_in = b.z >= Z_NEAR_MM;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (Z_NEAR_MM - a.z) / (b.z - a.z);
            out.push(a + (b - a) * t);
        }
    }
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Top-left rule for a positively wound edge (y grows downward): top edges
/// run in +x, left edges run upward.
#[inline]
fn is_top_left(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    (ay == by && bx > ax) || by < ay
}

fn fill_triangle(
    camera: &Camera,
    tri_cam: &[Vec3; 3],
    index: i32,
    depth: &mut DepthMap,
    owner: &mut [i32],
    track_owner: bool,
) {
    // Project to pixel coordinates; vertices are in front of the near plane.
    let mut pts = [[0.0f64; 2]; 3];
    let mut inv_z = [0.0f64; 3];
    for (i, v) in tri_cam.iter().enumerate() {
        let px = match camera.project_cam(v) {
            Ok(p) => p,
            Err(_) => return,
        };
        pts[i] = [px.x, px.y];
        inv_z[i] = 1.0 / v.z;
    }

    // Enforce positive winding in screen space.
    let mut order = [0usize, 1, 2];
    let area2 = edge(
        pts[0][0], pts[0][1], pts[1][0], pts[1][1], pts[2][0], pts[2][1],
    );
    if area2 == 0.0 {
        return;
    }
    if area2 < 0.0 {
        order = [0, 2, 1];
    }
    let (a, b, c) = (pts[order[0]], pts[order[1]], pts[order[2]]);
    let (iza, izb, izc) = (inv_z[order[0]], inv_z[order[1]], inv_z[order[2]]);
    let area2 = area2.abs();

    let min_x = a[0].min(b[0]).min(c[0]);
    let max_x = a[0].max(b[0]).max(c[0]);
    let min_y = a[1].min(b[1]).min(c[1]);
    let max_y = a[1].max(b[1]).max(c[1]);
    if max_x < -0.5 || max_y < -0.5 {
        return;
    }
    let x0 = min_x.ceil().max(0.0) as i64;
    let x1 = max_x.floor().min(camera.width as f64 - 1.0) as i64;
    let y0 = min_y.ceil().max(0.0) as i64;
    let y1 = max_y.floor().min(camera.height as f64 - 1.0) as i64;
    if x0 > x1 || y0 > y1 {
        return;
    }

    let tl0 = is_top_left(b[0], b[1], c[0], c[1]);
    let tl1 = is_top_left(c[0], c[1], a[0], a[1]);
    let tl2 = is_top_left(a[0], a[1], b[0], b[1]);

    for y in y0..=y1 {
        let py = y as f64;
        for x in x0..=x1 {
            let px = x as f64;
            // Barycentric weight of each vertex is the edge function of the
            // opposite edge.
            let w0 = edge(b[0], b[1], c[0], c[1], px, py);
            let w1 = edge(c[0], c[1], a[0], a[1], px, py);
            let w2 = edge(a[0], a[1], b[0], b[1], px, py);
            let covered = (w0 > 0.0 || (w0 == 0.0 && tl0))
                && (w1 > 0.0 || (w1 == 0.0 && tl1))
                && (w2 > 0.0 || (w2 == 0.0 && tl2));
            if !covered {
                continue;
            }
            // Perspective-correct depth: 1/z interpolates linearly in screen
            // space, exact for planar triangles.
            let iz = (w0 * iza + w1 * izb + w2 * izc) / area2;
            if iz <= 0.0 {
                continue;
            }
            let z = (1.0 / iz) as f32;
            let (xu, yu) = (x as u32, y as u32);
            let current = depth.get(xu, yu);
            if current == 0.0 || z < current {
                depth.set(xu, yu, z);
                if track_owner {
                    owner[y as usize * camera.width as usize + x as usize] = index;
                }
            }
        }
    }
}
