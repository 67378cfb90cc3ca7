//! Procedural meshes for the synthetic test harness.

use crate::geom::{TriMesh, Vec3};
use std::collections::BTreeMap;

/// Unit icosphere vertices and faces at the given subdivision level
/// (0 -> 12 vertices, 1 -> 42, 2 -> 162, 3 -> 642, ...). Deterministic
/// vertex order.
pub fn icosphere(subdivisions: u32) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();

    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = ((vertices[a as usize] + vertices[b as usize]) / 2.0).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    (vertices, faces)
}

/// Sphere of the given radius (mm) centered at the object origin.
pub fn sphere_mesh(radius: f64, subdivisions: u32) -> TriMesh {
    let (vertices, faces) = icosphere(subdivisions);
    TriMesh::new(vertices.into_iter().map(|v| v * radius).collect(), faces).unwrap()
}

/// Axis-aligned box with the given full extents (mm), centered at a point.
fn box_at(extents: Vec3, center: Vec3) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let h = extents / 2.0;
    let mut vertices = Vec::with_capacity(8);
    for z in [-h.z, h.z] {
        for y in [-h.y, h.y] {
            for x in [-h.x, h.x] {
                vertices.push(center + Vec3::new(x, y, z));
            }
        }
    }
    // 12 triangles, outward wound (the rasterizer does not cull).
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3], // z-
        [4, 5, 6],
        [5, 7, 6], // z+
        [0, 1, 4],
        [1, 5, 4], // y-
        [2, 6, 3],
        [3, 6, 7], // y+
        [0, 4, 2],
        [2, 4, 6], // x-
        [1, 3, 5],
        [3, 7, 5], // x+
    ];
    (vertices, faces)
}

/// Axis-aligned box with the given full extents (mm), centered at origin.
pub fn box_mesh(extents: Vec3) -> TriMesh {
    let (vertices, faces) = box_at(extents, Vec3::zeros());
    TriMesh::new(vertices, faces).unwrap()
}

/// An asymmetric instrument stand-in: an elongated shaft with an offset head
/// block. It has no rotational symmetry, so its silhouettes pin down the
/// full pose.
pub fn tool_mesh() -> TriMesh {
    let parts = [
        (Vec3::new(80.0, 18.0, 12.0), Vec3::zeros()),
        (Vec3::new(26.0, 30.0, 14.0), Vec3::new(32.0, 18.0, 0.0)),
        (Vec3::new(16.0, 12.0, 22.0), Vec3::new(-30.0, -4.0, 6.0)),
    ];
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (extents, center) in parts {
        let (v, f) = box_at(extents, center);
        let base = vertices.len() as u32;
        vertices.extend(v);
        faces.extend(f.into_iter().map(|[a, b, c]| [a + base, b + base, c + base]));
    }
    TriMesh::new(vertices, faces).unwrap()
}
