use super::{
    load_camera, load_depth_png, load_masklet_file, load_mesh, load_symmetries,
    load_template_library, SceneError,
};
use crate::detect::{DetectConfig, Masklet, TemplateLibrary};
use crate::geom::{Camera, RigidTransform, TriMesh};
use crate::mask::{BinaryMask, RleMask};
use crate::pose::HypothesisConfig;
use crate::refine::RefineConfig;
use crate::render::DepthMap;
use crate::{ClassId, ViewId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// How masklets are scored during detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    /// Cosine similarity of masklet descriptors against rendered templates.
    Features,
    /// IoU against ground-truth modal masks (upper-bound oracle).
    #[default]
    Oracle,
}

/// Which depth backs the occlusion test of the contour refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OcclusionSource {
    /// Observed per-view depth from the manifest; falls back to rendered
    /// depth where absent.
    #[default]
    Observed,
    /// Depth rendered from the instance's own coarse pose (validates
    /// self-occlusion only).
    Rendered,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub class_id: ClassId,
    pub mesh: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DepthEntry {
    pub path: PathBuf,
    #[serde(default = "default_depth_scale")]
    pub scale: f64,
}

fn default_depth_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub poses: PathBuf,
    pub masks: BTreeMap<ViewId, PathBuf>,
}

/// The on-disk description of one scene: inputs, per-stage configuration
/// and output location. All paths are resolved relative to the manifest's
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub schema_version: u32,
    pub cameras: Vec<PathBuf>,
    pub objects: Vec<ObjectEntry>,
    /// Per-view masklet file.
    pub masklets: BTreeMap<ViewId, PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub depth: BTreeMap<ViewId, DepthEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_library: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub images: BTreeMap<ViewId, PathBuf>,
    #[serde(default)]
    pub scorer: ScorerKind,
    #[serde(default)]
    pub occlusion_source: OcclusionSource,
    #[serde(default)]
    pub detect: DetectConfig,
    #[serde(default)]
    pub pose: HypothesisConfig,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl SceneManifest {
    pub fn load(path: &Path) -> Result<SceneManifest, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| SceneError::parse(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|e| SceneError::io(path, e))
    }
}

/// Ground truth for evaluation: world poses per instance and per-view
/// modal (visible) masks, plus amodal and occluder masks when recorded.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub poses: Vec<(ClassId, RigidTransform)>,
    pub modal_masks: BTreeMap<ViewId, Vec<(ClassId, BinaryMask)>>,
    pub amodal_masks: BTreeMap<ViewId, Vec<(ClassId, BinaryMask)>>,
    pub occluder_masks: BTreeMap<ViewId, BinaryMask>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct GtPoseFile {
    pub poses: Vec<GtPoseEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct GtPoseEntry {
    pub class_id: u32,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct GtMaskFile {
    pub view_id: u32,
    pub instances: Vec<GtMaskEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occluder: Option<RleMask>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct GtMaskEntry {
    pub class_id: u32,
    pub modal: RleMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amodal: Option<RleMask>,
}

/// Assembles one view's ground-truth mask file from decoded masks.
pub(crate) fn gt_mask_file(
    view_id: ViewId,
    instances: Vec<(ClassId, BinaryMask, Option<BinaryMask>)>,
    occluder: Option<BinaryMask>,
) -> GtMaskFile {
    GtMaskFile {
        view_id: view_id.0,
        instances: instances
            .into_iter()
            .map(|(class_id, modal, amodal)| GtMaskEntry {
                class_id: class_id.0,
                modal: modal.to_rle(),
                amodal: amodal.map(|m| m.to_rle()),
            })
            .collect(),
        occluder: occluder.map(|m| m.to_rle()),
    }
}

pub fn save_gt_poses(
    poses: &[(ClassId, RigidTransform)],
    path: &Path,
) -> Result<(), SceneError> {
    let file = GtPoseFile {
        poses: poses
            .iter()
            .map(|(class_id, pose)| GtPoseEntry {
                class_id: class_id.0,
                t: pose.to_mat4_row_major().to_vec(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("gt poses serialize");
    std::fs::write(path, text).map_err(|e| SceneError::io(path, e))
}

/// A manifest with every referenced file loaded and validated.
pub struct LoadedScene {
    pub manifest: SceneManifest,
    pub root: PathBuf,
    pub cameras: Vec<Camera>,
    pub meshes: BTreeMap<ClassId, TriMesh>,
    pub masklets: Vec<Masklet>,
    pub depth: BTreeMap<ViewId, DepthMap>,
    pub templates: Option<TemplateLibrary>,
    pub ground_truth: Option<GroundTruth>,
}

impl LoadedScene {
    /// Loads the manifest at `path` and everything it references.
    pub fn load(path: &Path) -> Result<LoadedScene, SceneError> {
        let manifest = SceneManifest::load(path)?;
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_manifest(manifest, root)
    }

    pub fn from_manifest(
        manifest: SceneManifest,
        root: PathBuf,
    ) -> Result<LoadedScene, SceneError> {
        let resolve = |p: &Path| -> PathBuf {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                root.join(p)
            }
        };

        let mut cameras = Vec::with_capacity(manifest.cameras.len());
        for rel in &manifest.cameras {
            cameras.push(load_camera(&resolve(rel))?);
        }
        let mut seen_views = std::collections::BTreeSet::new();
        for c in &cameras {
            if !seen_views.insert(c.view_id) {
                return Err(SceneError::Invalid(format!(
                    "duplicate view_id {} among cameras",
                    c.view_id
                )));
            }
        }

        let mut meshes = BTreeMap::new();
        for entry in &manifest.objects {
            let mut mesh = load_mesh(&resolve(&entry.mesh))?;
            if let Some(sym) = &entry.symmetry {
                mesh = mesh.with_symmetries(load_symmetries(&resolve(sym))?);
            }
            if meshes.insert(entry.class_id, mesh).is_some() {
                return Err(SceneError::Invalid(format!(
                    "duplicate class_id {} among objects",
                    entry.class_id
                )));
            }
        }

        let mut masklets = Vec::new();
        for (&view_id, rel) in &manifest.masklets {
            if !seen_views.contains(&view_id) {
                return Err(SceneError::Invalid(format!(
                    "masklets reference unknown view {view_id}"
                )));
            }
            let loaded = load_masklet_file(&resolve(rel))?;
            for m in &loaded {
                if m.view_id != view_id {
                    return Err(SceneError::Invalid(format!(
                        "masklet file {} declares view {} but is keyed as {view_id}",
                        rel.display(),
                        m.view_id
                    )));
                }
            }
            masklets.extend(loaded);
        }

        let mut depth = BTreeMap::new();
        for (&view_id, entry) in &manifest.depth {
            depth.insert(view_id, load_depth_png(&resolve(&entry.path), entry.scale)?);
        }

        let templates = match &manifest.template_library {
            Some(rel) => Some(load_template_library(&resolve(rel))?),
            None => None,
        };

        let ground_truth = match &manifest.ground_truth {
            Some(entry) => {
                let pose_path = resolve(&entry.poses);
                let text = std::fs::read_to_string(&pose_path)
                    .map_err(|e| SceneError::io(&pose_path, e))?;
                let file: GtPoseFile = serde_json::from_str(&text)
                    .map_err(|e| SceneError::parse(&pose_path, e))?;
                let mut poses = Vec::new();
                for p in file.poses {
                    if p.t.len() != 16 {
                        return Err(SceneError::parse(&pose_path, "pose needs 16 values"));
                    }
                    let mut m = [0.0; 16];
                    m.copy_from_slice(&p.t);
                    poses.push((ClassId(p.class_id), RigidTransform::from_mat4_row_major(&m)));
                }

                let mut gt = GroundTruth {
                    poses,
                    ..GroundTruth::default()
                };
                for (&view_id, rel) in &entry.masks {
                    let mask_path = resolve(rel);
                    let text = std::fs::read_to_string(&mask_path)
                        .map_err(|e| SceneError::io(&mask_path, e))?;
                    let file: GtMaskFile = serde_json::from_str(&text)
                        .map_err(|e| SceneError::parse(&mask_path, e))?;
                    let mut modal = Vec::new();
                    let mut amodal = Vec::new();
                    for inst in file.instances {
                        modal.push((ClassId(inst.class_id), inst.modal.decode()?));
                        if let Some(rle) = inst.amodal {
                            amodal.push((ClassId(inst.class_id), rle.decode()?));
                        }
                    }
                    gt.modal_masks.insert(view_id, modal);
                    if !amodal.is_empty() {
                        gt.amodal_masks.insert(view_id, amodal);
                    }
                    if let Some(rle) = file.occluder {
                        gt.occluder_masks.insert(view_id, rle.decode()?);
                    }
                }
                Some(gt)
            }
            None => None,
        };

        manifest
            .pose
            .validate()
            .map_err(|e| SceneError::Invalid(e.to_string()))?;
        manifest
            .refine
            .validate()
            .map_err(|e| SceneError::Invalid(e.to_string()))?;
        if manifest.scorer == ScorerKind::Features && templates.is_none() {
            return Err(SceneError::Invalid(
                "scorer is 'features' but no template_library is given".into(),
            ));
        }
        if manifest.scorer == ScorerKind::Oracle && ground_truth.is_none() {
            return Err(SceneError::Invalid(
                "scorer is 'oracle' but no ground_truth is given".into(),
            ));
        }

        Ok(LoadedScene {
            manifest,
            root,
            cameras,
            meshes,
            masklets,
            depth,
            templates,
            ground_truth,
        })
    }

    pub fn camera(&self, view_id: ViewId) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.view_id == view_id)
    }

    /// The resolved output directory (manifest-relative).
    pub fn output_dir(&self) -> PathBuf {
        match &self.manifest.output_dir {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => self.root.join(p),
            None => self.root.join("out"),
        }
    }
}
