//! Seeded synthetic-scene generation: ground-truthed multi-view scenes with
//! known poses, modal/amodal masks, scene depth and an optional occluder.

pub mod primitives;

use crate::geom::{Camera, Mat3, RigidTransform, TriMesh, Vec3};
use crate::mask::BinaryMask;
use crate::render::{rasterize, rasterize_scene};
use crate::scene::{
    save_camera, save_masklet_file, save_obj, DepthEntry, GroundTruthEntry, ObjectEntry,
    SceneError, SceneManifest, ScorerKind, SCHEMA_VERSION,
};
use crate::{ClassId, MaskletId, ViewId};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// World-to-camera transform for a camera at `eye` looking at `target`,
/// world +z as the up hint (y grows downward in the image).
pub fn look_at(eye: Vec3, target: Vec3) -> RigidTransform {
    let z = (target - eye).normalize();
    let up = if z.z.abs() > 0.999 { Vec3::y() } else { Vec3::z() };
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    let rotation = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    RigidTransform::new(rotation, -(rotation * eye))
}

/// Uniform random rotation (Shoemake's quaternion method).
pub fn uniform_rotation(rng: &mut impl Rng) -> Mat3 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (s2, c2) = (std::f64::consts::TAU * u2).sin_cos();
    let (s3, c3) = (std::f64::consts::TAU * u3).sin_cos();
    let q = nalgebra::Quaternion::new(b * c3, a * s2, a * c2, b * s3);
    nalgebra::UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner()
}

/// Built-in object shapes for generated scenes.
#[derive(Debug, Clone, Copy)]
pub enum SynthMesh {
    /// Asymmetric compound instrument stand-in.
    Tool,
    Sphere { radius_mm: f64 },
    Box { extents: [f64; 3] },
}

impl SynthMesh {
    pub fn build(&self) -> TriMesh {
        match self {
            SynthMesh::Tool => primitives::tool_mesh(),
            SynthMesh::Sphere { radius_mm } => primitives::sphere_mesh(*radius_mm, 3),
            SynthMesh::Box { extents } => {
                primitives::box_mesh(Vec3::new(extents[0], extents[1], extents[2]))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_views: usize,
    pub objects: Vec<(ClassId, SynthMesh)>,
    pub occluder: bool,
    pub image_width: u32,
    pub image_height: u32,
    pub focal_px: f64,
    pub camera_distance_mm: f64,
    /// Object centers are sampled uniformly in a cube of this half-extent.
    pub translation_jitter_mm: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_views: 5,
            objects: vec![(ClassId(1), SynthMesh::Tool)],
            occluder: false,
            image_width: 480,
            image_height: 360,
            focal_px: 600.0,
            camera_distance_mm: 700.0,
            translation_jitter_mm: 30.0,
        }
    }
}

/// A generated scene: the manifest (already written to disk) plus the
/// ground-truth poses for direct inspection.
pub struct GeneratedScene {
    pub manifest_path: PathBuf,
    pub manifest: SceneManifest,
    pub gt_poses: Vec<(ClassId, RigidTransform)>,
}

const DEPTH_SCALE: f64 = 0.1;
const MIN_VISIBLE_AREA: usize = 50;

/// Cameras on a viewing hemisphere around the origin (golden-angle azimuth,
/// increasing elevation).
pub fn hemisphere_cameras(spec: &SynthSpec) -> Vec<Camera> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..spec.n_views)
        .map(|i| {
            let frac = (i as f64 + 0.5) / spec.n_views as f64;
            let cos_polar = 0.30 + 0.55 * frac;
            let sin_polar = (1.0 - cos_polar * cos_polar).sqrt();
            let azimuth = i as f64 * golden;
            let eye = Vec3::new(
                sin_polar * azimuth.cos(),
                sin_polar * azimuth.sin(),
                cos_polar,
            ) * spec.camera_distance_mm;
            Camera::simple(
                spec.focal_px,
                spec.image_width,
                spec.image_height,
                look_at(eye, Vec3::zeros()),
                ViewId(i as u32),
            )
            .expect("hemisphere camera is valid")
        })
        .collect()
}

struct PlacedScene {
    poses: Vec<RigidTransform>,
    occluder: Option<(TriMesh, RigidTransform)>,
    renders: Vec<crate::render::SceneRender>,
}

fn try_place(
    spec: &SynthSpec,
    cameras: &[Camera],
    meshes: &[TriMesh],
    rng: &mut ChaCha8Rng,
) -> Option<PlacedScene> {
    let j = spec.translation_jitter_mm;
    let poses: Vec<RigidTransform> = meshes
        .iter()
        .map(|_| {
            RigidTransform::new(
                uniform_rotation(rng),
                Vec3::new(
                    rng.random_range(-j..j),
                    rng.random_range(-j..j),
                    rng.random_range(-j..j),
                ),
            )
        })
        .collect();

    // Keep multiple objects clearly separated.
    for i in 0..poses.len() {
        for k in (i + 1)..poses.len() {
            let min_dist = 0.55 * (meshes[i].diameter() + meshes[k].diameter());
            if (poses[i].translation - poses[k].translation).norm() < min_dist {
                return None;
            }
        }
    }

    let occluder = if spec.occluder {
        Some(place_occluder(cameras, &meshes[0], &poses[0])?)
    } else {
        None
    };

    let mut items: Vec<(&TriMesh, RigidTransform)> = meshes
        .iter()
        .zip(&poses)
        .map(|(m, p)| (m, *p))
        .collect();
    if let Some((mesh, pose)) = &occluder {
        items.push((mesh, *pose));
    }

    let mut renders = Vec::with_capacity(cameras.len());
    for camera in cameras {
        let render = rasterize_scene(&items, camera);
        for object_index in 0..meshes.len() {
            if render.modal_mask(object_index).area() < MIN_VISIBLE_AREA {
                return None;
            }
        }
        renders.push(render);
    }
    Some(PlacedScene {
        poses,
        occluder,
        renders,
    })
}

/// A thin slab between camera 0 and the first object, laterally offset so it
/// covers part (25-75%) of the object in that view.
fn place_occluder(
    cameras: &[Camera],
    mesh: &TriMesh,
    pose: &RigidTransform,
) -> Option<(TriMesh, RigidTransform)> {
    let camera = &cameras[0];
    let eye = camera.center_world();
    let center = pose.translation;
    let radius = mesh.diameter() / 2.0;
    let slab = primitives::box_mesh(Vec3::new(1.5 * radius, 3.0 * radius, 4.0));

    // Face the slab toward camera 0.
    let cam_to_world = camera.world_to_cam.invert();
    let slab_rotation = cam_to_world.rotation;
    let right = cam_to_world.transform_vector(&Vec3::x());
    let along = 0.55;
    let base = eye + (center - eye) * along;

    let (amodal, _) = rasterize(mesh, camera, pose);
    let amodal_area = amodal.area();
    if amodal_area == 0 {
        return None;
    }
    for k in 0..24 {
        let offset = right * (0.08 * k as f64 * radius * along);
        let slab_pose = RigidTransform::new(slab_rotation, base + offset);
        let scene = rasterize_scene(&[(mesh, *pose), (&slab, slab_pose)], camera);
        let ratio = scene.modal_mask(0).area() as f64 / amodal_area as f64;
        if (0.25..=0.75).contains(&ratio) {
            return Some((slab, slab_pose));
        }
    }
    None
}

/// Generates a complete ground-truthed scene under `out_dir` and writes its
/// manifest. Fixed seeds give bit-identical outputs.
pub fn generate_synthetic_scene(
    spec: &SynthSpec,
    out_dir: &Path,
) -> Result<GeneratedScene, SceneError> {
    if spec.n_views < 2 {
        return Err(SceneError::Invalid(format!(
            "synthetic scenes need at least 2 views, got {}",
            spec.n_views
        )));
    }
    if spec.objects.is_empty() {
        return Err(SceneError::Invalid("no objects requested".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cameras = hemisphere_cameras(spec);
    let meshes: Vec<TriMesh> = spec.objects.iter().map(|(_, kind)| kind.build()).collect();

    let placed = (0..100)
        .find_map(|_| try_place(spec, &cameras, &meshes, &mut rng))
        .ok_or_else(|| {
            SceneError::Invalid(
                "failed to place all objects inside every frustum after 100 attempts".into(),
            )
        })?;

    for sub in ["cameras", "meshes", "masklets", "depth", "gt"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| SceneError::io(&dir, e))?;
    }

    let mut camera_paths = Vec::new();
    for camera in &cameras {
        let rel = PathBuf::from(format!("cameras/cam_{}.json", camera.view_id.0));
        save_camera(camera, &out_dir.join(&rel))?;
        camera_paths.push(rel);
    }

    let mut objects = Vec::new();
    for ((class_id, _), mesh) in spec.objects.iter().zip(&meshes) {
        let rel = PathBuf::from(format!("meshes/class_{}.obj", class_id.0));
        save_obj(mesh, &out_dir.join(&rel))?;
        objects.push(ObjectEntry {
            class_id: *class_id,
            mesh: rel,
            symmetry: None,
        });
    }

    let mut masklet_paths = BTreeMap::new();
    let mut depth_entries = BTreeMap::new();
    let mut gt_mask_paths = BTreeMap::new();
    for (view_index, (camera, render)) in cameras.iter().zip(&placed.renders).enumerate() {
        let view_id = camera.view_id;

        // Masklets: the modal masks stand in for segmentation proposals.
        let modal_masks: Vec<BinaryMask> = (0..meshes.len())
            .map(|i| render.modal_mask(i))
            .collect();
        let entries: Vec<(MaskletId, &BinaryMask)> = modal_masks
            .iter()
            .enumerate()
            .map(|(i, m)| (MaskletId((view_index * 100 + i) as u32), m))
            .collect();
        let rel = PathBuf::from(format!("masklets/view_{}.json", view_id.0));
        save_masklet_file(view_id, &entries, &out_dir.join(&rel))?;
        masklet_paths.insert(view_id, rel);

        let rel = PathBuf::from(format!("depth/view_{}.png", view_id.0));
        super::scene::save_depth_png(&render.depth, DEPTH_SCALE, &out_dir.join(&rel))?;
        depth_entries.insert(
            view_id,
            DepthEntry {
                path: rel,
                scale: DEPTH_SCALE,
            },
        );

        // Ground-truth masks: modal + amodal per instance, occluder extra.
        let gt_file = crate::scene::gt_mask_file(
            view_id,
            spec.objects
                .iter()
                .zip(&modal_masks)
                .zip(meshes.iter().zip(&placed.poses))
                .map(|(((class_id, _), modal), (mesh, pose))| {
                    let (amodal, _) = rasterize(mesh, camera, pose);
                    (*class_id, modal.clone(), Some(amodal))
                })
                .collect(),
            placed
                .occluder
                .is_some()
                .then(|| render.modal_mask(meshes.len())),
        );
        let rel = PathBuf::from(format!("gt/masks_view_{}.json", view_id.0));
        let text = serde_json::to_string(&gt_file).expect("gt masks serialize");
        std::fs::write(out_dir.join(&rel), text)
            .map_err(|e| SceneError::io(&out_dir.join(&rel), e))?;
        gt_mask_paths.insert(view_id, rel);
    }

    let gt_poses: Vec<(ClassId, RigidTransform)> = spec
        .objects
        .iter()
        .map(|(c, _)| *c)
        .zip(placed.poses.iter().copied())
        .collect();
    let poses_rel = PathBuf::from("gt/poses.json");
    crate::scene::save_gt_poses(&gt_poses, &out_dir.join(&poses_rel))?;

    let manifest = SceneManifest {
        schema_version: SCHEMA_VERSION,
        cameras: camera_paths,
        objects,
        masklets: masklet_paths,
        depth: depth_entries,
        template_library: None,
        ground_truth: Some(GroundTruthEntry {
            poses: poses_rel,
            masks: gt_mask_paths,
        }),
        images: BTreeMap::new(),
        scorer: ScorerKind::Oracle,
        occlusion_source: Default::default(),
        detect: Default::default(),
        pose: Default::default(),
        refine: Default::default(),
        output_dir: Some(PathBuf::from("out")),
    };
    let manifest_path = out_dir.join("manifest.json");
    manifest.save(&manifest_path)?;

    Ok(GeneratedScene {
        manifest_path,
        manifest,
        gt_poses,
    })
}
