use super::{GeomError, RigidTransform, Vec3};

/// Symmetry of a CAD model, used by the pose-error metrics.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetryAnnotation {
    /// A finite set of object-frame transforms mapping the model onto itself.
    Discrete(Vec<RigidTransform>),
    /// Rotational symmetry about a unit axis through the object origin.
    ContinuousAxis(Vec3),
}

impl SymmetryAnnotation {
    pub fn continuous_axis(axis: Vec3) -> Result<Self, GeomError> {
        let norm = axis.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(GeomError::NonUnitAxis { norm });
        }
        Ok(Self::ContinuousAxis(axis))
    }
}

/// An indexed triangle mesh in object coordinates (millimeters), with its
/// precomputed diameter and optional symmetry annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    diameter: f64,
    symmetries: Vec<SymmetryAnnotation>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, GeomError> {
        if vertices.is_empty() {
            return Err(GeomError::DegenerateMesh("no vertices".into()));
        }
        for tri in &triangles {
            for &index in tri {
                if index as usize >= vertices.len() {
                    return Err(GeomError::TriangleIndexOutOfRange {
                        index,
                        vertex_count: vertices.len(),
                    });
                }
            }
        }
        let diameter = mesh_diameter(&vertices)?;
        Ok(Self {
            vertices,
            triangles,
            diameter,
            symmetries: Vec::new(),
        })
    }

    pub fn with_symmetries(mut self, symmetries: Vec<SymmetryAnnotation>) -> Self {
        self.symmetries = symmetries;
        self
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Maximum pairwise vertex distance, in millimeters.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn symmetries(&self) -> &[SymmetryAnnotation] {
        &self.symmetries
    }

    pub fn has_symmetries(&self) -> bool {
        !self.symmetries.is_empty()
    }

    /// Vertex centroid, in object coordinates.
    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// A copy with all vertices mapped through `t` (symmetries dropped,
    /// since they are frame-dependent).
    pub fn transformed(&self, t: &RigidTransform) -> TriMesh {
        let vertices = self.vertices.iter().map(|v| t.transform_point(v)).collect();
        TriMesh {
            vertices,
            triangles: self.triangles.clone(),
            diameter: self.diameter,
            symmetries: Vec::new(),
        }
    }
}

/// Maximum pairwise distance between vertices (the object diameter used by
/// the clustering stage). O(n^2); CAD models are expected to be decimated.
pub fn mesh_diameter(vertices: &[Vec3]) -> Result<f64, GeomError> {
    if vertices.len() < 2 {
        return Err(GeomError::DegenerateMesh(format!(
            "diameter needs at least 2 vertices, got {}",
            vertices.len()
        )));
    }
    let mut best = 0.0f64;
    for i in 0..vertices.len() {
        for j in (i + 1)..vertices.len() {
            let d = (vertices[i] - vertices[j]).norm_squared();
            if d > best {
                best = d;
            }
        }
    }
    Ok(best.sqrt())
}
