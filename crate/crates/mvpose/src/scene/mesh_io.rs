use super::SceneError;
use crate::geom::{RigidTransform, SymmetryAnnotation, TriMesh, Vec3};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Loads a triangle mesh from Wavefront OBJ or PLY (ascii or
/// binary_little_endian), vertex positions in millimeters. The format is
/// picked from the file extension.
pub fn load_mesh(path: &Path) -> Result<TriMesh, SceneError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "obj" => load_obj(path),
        "ply" => load_ply(path),
        other => Err(SceneError::parse(
            path,
            format!("unsupported mesh extension '{other}' (use .obj or .ply)"),
        )),
    }
}

fn load_obj(path: &Path) -> Result<TriMesh, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| SceneError::parse(path, format!("line {}: {e}", lineno + 1)))?;
                if coords.len() != 3 {
                    return Err(SceneError::parse(
                        path,
                        format!("line {}: vertex needs 3 coordinates", lineno + 1),
                    ));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                // Face entries may be v, v/vt, v//vn or v/vt/vn; indices are
                // 1-based (negative = relative to the end).
                let mut indices = Vec::new();
                for token in parts {
                    let first = token.split('/').next().unwrap_or("");
                    let raw: i64 = first.parse().map_err(|e| {
                        SceneError::parse(path, format!("line {}: {e}", lineno + 1))
                    })?;
                    let index = if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        raw - 1
                    };
                    if index < 0 {
                        return Err(SceneError::parse(
                            path,
                            format!("line {}: face index out of range", lineno + 1),
                        ));
                    }
                    indices.push(index as u32);
                }
                // Fan-triangulate polygons.
                for k in 1..indices.len().saturating_sub(1) {
                    triangles.push([indices[0], indices[k], indices[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles).map_err(|e| SceneError::Geom {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn save_obj(mesh: &TriMesh, path: &Path) -> Result<(), SceneError> {
    let mut out = Vec::new();
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).expect("write to vec");
    }
    for t in mesh.triangles() {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("write to vec");
    }
    std::fs::write(path, out).map_err(|e| SceneError::io(path, e))
}

struct PlyProperty {
    name: String,
    kind: String,
}

fn load_ply(path: &Path) -> Result<TriMesh, SceneError> {
    let data = std::fs::read(path).map_err(|e| SceneError::io(path, e))?;
    let header_end = find_header_end(&data)
        .ok_or_else(|| SceneError::parse(path, "missing end_header"))?;
    let header = std::str::from_utf8(&data[..header_end])
        .map_err(|_| SceneError::parse(path, "header is not utf-8"))?;

    let mut format = "";
    let mut vertex_count = 0usize;
    let mut face_count = 0usize;
    let mut vertex_props: Vec<PlyProperty> = Vec::new();
    let mut in_vertex = false;
    let mut in_face = false;
    let mut face_index_kind = String::new();
    for line in header.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", f, _] => format = if *f == "ascii" { "ascii" } else { *f },
            ["element", "vertex", n] => {
                in_vertex = true;
                in_face = false;
                vertex_count = n.parse().map_err(|e| SceneError::parse(path, e))?;
            }
            ["element", "face", n] => {
                in_face = true;
                in_vertex = false;
                face_count = n.parse().map_err(|e| SceneError::parse(path, e))?;
            }
            ["element", ..] => {
                in_vertex = false;
                in_face = false;
            }
            ["property", "list", _count_kind, index_kind, "vertex_indices" | "vertex_index"]
                if in_face =>
            {
                face_index_kind = index_kind.to_string();
            }
            ["property", kind, name] if in_vertex => vertex_props.push(PlyProperty {
                name: name.to_string(),
                kind: kind.to_string(),
            }),
            _ => {}
        }
    }
    if format != "ascii" && format != "binary_little_endian" {
        return Err(SceneError::parse(path, format!("unsupported PLY format {format}")));
    }

    let body = &data[header_end..];
    if format == "ascii" {
        parse_ply_ascii(path, body, vertex_count, face_count, &vertex_props)
    } else {
        parse_ply_binary(path, body, vertex_count, face_count, &vertex_props, &face_index_kind)
    }
}

fn find_header_end(data: &[u8]) -> Option<usize> {
    let needle = b"end_header";
    let pos = data.windows(needle.len()).position(|w| w == needle)?;
    let after = &data[pos..];
    let newline = after.iter().position(|&b| b == b'\n')?;
    Some(pos + newline + 1)
}

fn scalar_size(kind: &str) -> Result<usize, String> {
    Ok(match kind {
        "char" | "uchar" | "int8" | "uint8" => 1,
        "short" | "ushort" | "int16" | "uint16" => 2,
        "int" | "uint" | "int32" | "uint32" | "float" | "float32" => 4,
        "double" | "float64" => 8,
        other => return Err(format!("unsupported PLY scalar {other}")),
    })
}

fn parse_ply_ascii(
    path: &Path,
    body: &[u8],
    vertex_count: usize,
    face_count: usize,
    props: &[PlyProperty],
) -> Result<TriMesh, SceneError> {
    let text = std::str::from_utf8(body).map_err(|_| SceneError::parse(path, "non-utf8 body"))?;
    let mut lines = text.lines();
    let (xi, yi, zi) = xyz_indices(props).map_err(|m| SceneError::parse(path, m))?;
    let mut vertices = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let line = lines
            .next()
            .ok_or_else(|| SceneError::parse(path, "truncated vertex data"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| SceneError::parse(path, e))?;
        vertices.push(Vec3::new(vals[xi], vals[yi], vals[zi]));
    }
    let mut triangles = Vec::with_capacity(face_count);
    for _ in 0..face_count {
        let line = lines
            .next()
            .ok_or_else(|| SceneError::parse(path, "truncated face data"))?;
        let vals: Vec<u32> = line
            .split_whitespace()
            .skip(1)
            .map(|t| t.parse::<u32>())
            .collect::<Result<_, _>>()
            .map_err(|e| SceneError::parse(path, e))?;
        for k in 1..vals.len().saturating_sub(1) {
            triangles.push([vals[0], vals[k], vals[k + 1]]);
        }
    }
    TriMesh::new(vertices, triangles).map_err(|e| SceneError::Geom {
        path: path.display().to_string(),
        source: e,
    })
}

fn xyz_indices(props: &[PlyProperty]) -> Result<(usize, usize, usize), String> {
    let find = |n: &str| props.iter().position(|p| p.name == n);
    match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => Ok((x, y, z)),
        _ => Err("PLY vertex element lacks x/y/z properties".into()),
    }
}

fn parse_ply_binary(
    path: &Path,
    body: &[u8],
    vertex_count: usize,
    face_count: usize,
    props: &[PlyProperty],
    face_index_kind: &str,
) -> Result<TriMesh, SceneError> {
    let (xi, yi, zi) = xyz_indices(props).map_err(|m| SceneError::parse(path, m))?;
    let sizes: Vec<usize> = props
        .iter()
        .map(|p| scalar_size(&p.kind))
        .collect::<Result<_, _>>()
        .map_err(|m| SceneError::parse(path, m))?;
    let stride: usize = sizes.iter().sum();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0usize, |acc, s| {
            let here = *acc;
            *acc += s;
            Some(here)
        })
        .collect();

    let read_scalar = |bytes: &[u8], kind: &str| -> f64 {
        match kind {
            "float" | "float32" => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            "double" | "float64" => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
            "int" | "int32" => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            "uint" | "uint32" => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            "short" | "int16" => i16::from_le_bytes(bytes[..2].try_into().unwrap()) as f64,
            "ushort" | "uint16" => u16::from_le_bytes(bytes[..2].try_into().unwrap()) as f64,
            _ => bytes[0] as f64,
        }
    };

    let need = vertex_count * stride;
    if body.len() < need {
        return Err(SceneError::parse(path, "truncated binary vertex data"));
    }
    let mut vertices = Vec::with_capacity(vertex_count);
    for i in 0..vertex_count {
        let row = &body[i * stride..(i + 1) * stride];
        let get = |idx: usize| read_scalar(&row[offsets[idx]..], &props[idx].kind);
        vertices.push(Vec3::new(get(xi), get(yi), get(zi)));
    }

    let index_size = scalar_size(face_index_kind).map_err(|m| SceneError::parse(path, m))?;
    let mut cursor = need;
    let mut triangles = Vec::with_capacity(face_count);
    for _ in 0..face_count {
        if cursor >= body.len() {
            return Err(SceneError::parse(path, "truncated binary face data"));
        }
        let n = body[cursor] as usize;
        cursor += 1;
        let mut indices = Vec::with_capacity(n);
        for _ in 0..n {
            let bytes = &body[cursor..cursor + index_size];
            let v = match index_size {
                4 => u32::from_le_bytes(bytes.try_into().unwrap()),
                2 => u16::from_le_bytes(bytes.try_into().unwrap()) as u32,
                _ => bytes[0] as u32,
            };
            indices.push(v);
            cursor += index_size;
        }
        for k in 1..indices.len().saturating_sub(1) {
            triangles.push([indices[0], indices[k], indices[k + 1]]);
        }
    }
    TriMesh::new(vertices, triangles).map_err(|e| SceneError::Geom {
        path: path.display().to_string(),
        source: e,
    })
}

/// Sidecar symmetry annotations: a JSON list of
/// `{"kind": "discrete", "transforms": [[16 row-major], ...]}` and/or
/// `{"kind": "continuous-axis", "axis": [x, y, z]}` entries.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum SymmetryFile {
    Discrete { transforms: Vec<Vec<f64>> },
    ContinuousAxis { axis: [f64; 3] },
}

pub fn load_symmetries(path: &Path) -> Result<Vec<SymmetryAnnotation>, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
    let entries: Vec<SymmetryFile> =
        serde_json::from_str(&text).map_err(|e| SceneError::parse(path, e))?;
    entries
        .into_iter()
        .map(|entry| match entry {
            SymmetryFile::Discrete { transforms } => {
                let mut out = Vec::with_capacity(transforms.len());
                for t in transforms {
                    if t.len() != 16 {
                        return Err(SceneError::parse(path, "transform needs 16 values"));
                    }
                    let mut m = [0.0; 16];
                    m.copy_from_slice(&t);
                    let rt = RigidTransform::from_mat4_row_major(&m);
                    if !rt.is_valid_rotation(1e-6) {
                        return Err(SceneError::parse(path, "symmetry transform is not rigid"));
                    }
                    out.push(rt);
                }
                Ok(SymmetryAnnotation::Discrete(out))
            }
            SymmetryFile::ContinuousAxis { axis } => {
                SymmetryAnnotation::continuous_axis(Vec3::new(axis[0], axis[1], axis[2]))
                    .map_err(|e| SceneError::Geom {
                        path: path.display().to_string(),
                        source: e,
                    })
            }
        })
        .collect()
}

pub fn save_symmetries(symmetries: &[SymmetryAnnotation], path: &Path) -> Result<(), SceneError> {
    let entries: Vec<SymmetryFile> = symmetries
        .iter()
        .map(|s| match s {
            SymmetryAnnotation::Discrete(transforms) => SymmetryFile::Discrete {
                transforms: transforms
                    .iter()
                    .map(|t| t.to_mat4_row_major().to_vec())
                    .collect(),
            },
            SymmetryAnnotation::ContinuousAxis(axis) => SymmetryFile::ContinuousAxis {
                axis: [axis.x, axis.y, axis.z],
            },
        })
        .collect();
    let text = serde_json::to_string_pretty(&entries).expect("symmetries serialize");
    std::fs::write(path, text).map_err(|e| SceneError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::primitives;

    fn tmpdir(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("mvpose_meshio_{name}"));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn obj_round_trip() {
        let dir = tmpdir("obj");
        let path = dir.join("tool.obj");
        let mesh = primitives::tool_mesh();
        save_obj(&mesh, &path).unwrap();
        let loaded = load_mesh(&path).unwrap();
        assert_eq!(loaded.vertices().len(), mesh.vertices().len());
        assert_eq!(loaded.triangles().len(), mesh.triangles().len());
        assert!((loaded.diameter() - mesh.diameter()).abs() < 1e-9);
    }

    #[test]
    fn obj_with_slashes_and_quads() {
        let dir = tmpdir("objslash");
        let path = dir.join("quad.obj");
        std::fs::write(
            &path,
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n",
        )
        .unwrap();
        let mesh = load_mesh(&path).unwrap();
        assert_eq!(mesh.vertices().len(), 4);
        assert_eq!(mesh.triangles().len(), 2);
    }

    #[test]
    fn ascii_ply_loads() {
        let dir = tmpdir("ply");
        let path = dir.join("tri.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n10 0 0\n0 10 0\n3 0 1 2\n",
        )
        .unwrap();
        let mesh = load_mesh(&path).unwrap();
        assert_eq!(mesh.vertices().len(), 3);
        assert_eq!(mesh.triangles().len(), 1);
        assert!((mesh.diameter() - 10.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn binary_ply_loads() {
        let dir = tmpdir("plybin");
        let path = dir.join("tri.ply");
        let mut data = Vec::new();
        data.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n",
        );
        for v in [[0f32, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 5.0, 0.0]] {
            for c in v {
                data.extend_from_slice(&c.to_le_bytes());
            }
        }
        data.push(3u8);
        for idx in [0u32, 1, 2] {
            data.extend_from_slice(&idx.to_le_bytes());
        }
        std::fs::write(&path, data).unwrap();
        let mesh = load_mesh(&path).unwrap();
        assert_eq!(mesh.vertices().len(), 3);
        assert_eq!(mesh.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn symmetry_round_trip() {
        let dir = tmpdir("sym");
        let path = dir.join("sym.json");
        let syms = vec![
            SymmetryAnnotation::Discrete(vec![RigidTransform::from_axis_angle(
                Vec3::z(),
                std::f64::consts::PI,
            )]),
            SymmetryAnnotation::continuous_axis(Vec3::x()).unwrap(),
        ];
        save_symmetries(&syms, &path).unwrap();
        let loaded = load_symmetries(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        match (&loaded[0], &loaded[1]) {
            (SymmetryAnnotation::Discrete(t), SymmetryAnnotation::ContinuousAxis(a)) => {
                assert_eq!(t.len(), 1);
                assert!((a - Vec3::x()).norm() < 1e-12);
            }
            other => panic!("wrong shapes {other:?}"),
        }
    }
}
