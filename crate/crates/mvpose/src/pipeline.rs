//! End-to-end orchestration: detection, coarse pose, contour refinement,
//! metrics and overlay emission, driven by a loaded scene.

use crate::detect::{
    build_score_table, run_detection, DetectError, InstanceCandidate, Masklet, ScoringInputs,
};
use crate::geom::{Camera, RigidTransform, Vec3};
use crate::metrics::{
    add_error, adds_error, average_precision, farthest_point_subsample, pose_errors,
    DetectionRecord, GroundTruthRecord, IouKind,
};
use crate::pose::{estimate_coarse_pose_detailed, write_hypothesis_scores_csv, CoarsePoseError, SupportingView};
use crate::refine::{lm_refine, RefineError};
use crate::render::{extract_contour, occlusion_filter, rasterize, OcclusionConfig};
use crate::scene::{
    ClassAggregate, InstanceMetrics, InstanceResult, LoadedScene, MeanStd, MetricsReport,
    OcclusionSource, ResultBundle, SceneError, ScorerKind, StageTiming, SCHEMA_VERSION,
};
use crate::{ClassId, MaskletId, ViewId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("every instance failed its pose stages")]
    AllInstancesFailed,
}

/// Which score detection records carry into AP evaluation: the cluster-level
/// (re-scored) instance score, or each masklet's own class score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ApScoreMode {
    #[default]
    Cluster,
    Masklet,
}

/// Which ground-truth boxes bbox AP evaluates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GtBoxMode {
    /// Tight boxes of the visible (modal) masks.
    #[default]
    Modal,
    /// Boxes of the full (amodal) silhouettes, where recorded.
    Amodal,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    pub ap_score: ApScoreMode,
    pub gt_boxes: GtBoxMode,
    /// When set, per-instance debug artifacts are written here: coarse
    /// hypothesis score tables, refinement traces, and silhouette/depth
    /// renders under the final pose.
    pub debug_dir: Option<PathBuf>,
}

/// A detected instance as persisted by the `detect` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionFileEntry {
    pub center: [f64; 3],
    pub class_id: ClassId,
    pub masklets: BTreeMap<ViewId, MaskletId>,
    pub score: f64,
}

impl From<&InstanceCandidate> for DetectionFileEntry {
    fn from(inst: &InstanceCandidate) -> Self {
        Self {
            center: [inst.center.x, inst.center.y, inst.center.z],
            class_id: inst.class_id,
            masklets: inst.masklets.clone(),
            score: inst.score,
        }
    }
}

pub fn save_detections(entries: &[DetectionFileEntry], path: &Path) -> Result<(), SceneError> {
    let text = serde_json::to_string_pretty(entries).expect("detections serialize");
    std::fs::write(path, text).map_err(|e| SceneError::io(path, e))
}

pub fn load_detections(path: &Path) -> Result<Vec<DetectionFileEntry>, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SceneError::parse(path, e))
}

fn scoring_inputs(scene: &LoadedScene) -> ScoringInputs<'_> {
    match scene.manifest.scorer {
        ScorerKind::Features => ScoringInputs::Features(
            scene
                .templates
                .as_ref()
                .expect("validated at load: features scorer has templates"),
        ),
        ScorerKind::Oracle => ScoringInputs::Oracle(
            &scene
                .ground_truth
                .as_ref()
                .expect("validated at load: oracle scorer has ground truth")
                .modal_masks,
        ),
    }
}

/// Runs the detection stage on a loaded scene, returning instances sorted
/// by descending score (ties broken deterministically).
pub fn run_detect_stage(scene: &LoadedScene) -> Result<Vec<DetectionFileEntry>, PipelineError> {
    let instances = run_detection(
        &scene.cameras,
        &scene.masklets,
        &scoring_inputs(scene),
        &scene.meshes,
        &scene.manifest.detect,
    )?;
    let mut entries: Vec<DetectionFileEntry> =
        instances.iter().map(DetectionFileEntry::from).collect();
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.class_id.cmp(&b.class_id))
            .then_with(|| a.center.iter().partial_cmp(b.center.iter()).unwrap())
    });
    Ok(entries)
}

/// Runs coarse pose estimation and contour refinement for each detected
/// instance. Per-instance failures are recorded and skipped over.
pub fn estimate_poses(
    scene: &LoadedScene,
    detections: &[DetectionFileEntry],
) -> (Vec<InstanceResult>, f64, f64) {
    estimate_poses_with_options(scene, detections, &PipelineOptions::default())
}

pub fn estimate_poses_with_options(
    scene: &LoadedScene,
    detections: &[DetectionFileEntry],
    options: &PipelineOptions,
) -> (Vec<InstanceResult>, f64, f64) {
    let masklet_of: BTreeMap<(ViewId, MaskletId), &Masklet> =
        scene.masklets.iter().map(|m| (m.key(), m)).collect();
    let mut coarse_ms_total = 0.0;
    let mut refine_ms_total = 0.0;

    let results = detections
        .iter()
        .enumerate()
        .map(|(index, det)| {
            let mut result = InstanceResult {
                class_id: det.class_id,
                score: det.score,
                center: det.center,
                supporting_views: det.masklets.keys().copied().collect(),
                masklets: det.masklets.clone(),
                t_coarse: None,
                t_final: None,
                coarse_score: 0.0,
                refine_converged: false,
                refine_iterations: 0,
                timings_ms: BTreeMap::new(),
                error: None,
            };
            match estimate_instance_pose(scene, det, &masklet_of, &mut result, index, options) {
                Ok(()) => {}
                Err(message) => result.error = Some(message),
            }
            coarse_ms_total += result.timings_ms.get("coarse").copied().unwrap_or(0.0);
            refine_ms_total += result.timings_ms.get("refine").copied().unwrap_or(0.0);
            result
        })
        .collect();
    (results, coarse_ms_total, refine_ms_total)
}

fn estimate_instance_pose(
    scene: &LoadedScene,
    det: &DetectionFileEntry,
    masklet_of: &BTreeMap<(ViewId, MaskletId), &Masklet>,
    result: &mut InstanceResult,
    instance_index: usize,
    options: &PipelineOptions,
) -> Result<(), String> {
    let mesh = scene
        .meshes
        .get(&det.class_id)
        .ok_or_else(|| format!("no mesh for class {}", det.class_id))?;

    let mut views = BTreeMap::new();
    let mut cameras = Vec::new();
    for (&view_id, &masklet_id) in &det.masklets {
        let camera = scene
            .camera(view_id)
            .ok_or_else(|| format!("no camera for view {view_id}"))?;
        let masklet = masklet_of
            .get(&(view_id, masklet_id))
            .ok_or_else(|| format!("unknown masklet {masklet_id} in view {view_id}"))?;
        views.insert(
            view_id,
            SupportingView {
                camera,
                mask: &masklet.mask,
            },
        );
        cameras.push(camera.clone());
    }

    let center = Vec3::new(det.center[0], det.center[1], det.center[2]);
    let started = Instant::now();
    let estimate = estimate_coarse_pose_detailed(center, &views, mesh, &scene.manifest.pose)
        .map_err(|e: CoarsePoseError| format!("coarse stage: {e}"))?;
    let coarse = estimate.best;
    result
        .timings_ms
        .insert("coarse".into(), started.elapsed().as_secs_f64() * 1000.0);
    result.t_coarse = Some(coarse.pose_world.to_mat4_row_major().to_vec());
    result.coarse_score = coarse.aggregate_score;
    if let Some(dir) = &options.debug_dir {
        let path = dir.join(format!("coarse_scores_{instance_index}.csv"));
        if let Err(e) = write_hypothesis_scores_csv(&estimate.scored, &path) {
            eprintln!("warning: could not write {}: {e}", path.display());
        }
    }

    let started = Instant::now();
    let occlusion = OcclusionConfig::default();
    let mut observed_sets = Vec::new();
    for (&view_id, view) in &views {
        let contour = match extract_contour(view.mask) {
            Ok(c) => c,
            Err(e) => return Err(format!("contour extraction in view {view_id}: {e}")),
        };
        let rendered_depth;
        let depth = match scene.manifest.occlusion_source {
            OcclusionSource::Observed => match scene.depth.get(&view_id) {
                Some(d) => d,
                None => {
                    rendered_depth = rasterize(mesh, view.camera, &coarse.pose_world).1;
                    &rendered_depth
                }
            },
            OcclusionSource::Rendered => {
                rendered_depth = rasterize(mesh, view.camera, &coarse.pose_world).1;
                &rendered_depth
            }
        };
        observed_sets.push(occlusion_filter(
            view_id,
            &contour,
            depth,
            view.camera,
            &occlusion,
        ));
    }

    let outcome = lm_refine(
        &coarse.pose_world,
        &observed_sets,
        mesh,
        &cameras,
        &scene.manifest.refine,
    )
    .map_err(|e: RefineError| format!("refinement: {e}"))?;
    result
        .timings_ms
        .insert("refine".into(), started.elapsed().as_secs_f64() * 1000.0);
    result.t_final = Some(outcome.pose.to_mat4_row_major().to_vec());
    result.refine_converged = outcome.converged;
    result.refine_iterations = outcome.iterations;
    if let Some(dir) = &options.debug_dir {
        let path = dir.join(format!("refine_trace_{instance_index}.csv"));
        if let Err(e) = write_refine_trace(&outcome.trace, &path) {
            eprintln!("warning: could not write {}: {e}", path.display());
        }
        for (&view_id, view) in &views {
            let (mask, depth) = rasterize(mesh, view.camera, &outcome.pose);
            let mask_path =
                dir.join(format!("silhouette_{instance_index}_view_{}.png", view_id.0));
            let depth_path = dir.join(format!("depth_{instance_index}_view_{}.png", view_id.0));
            if let Err(e) = crate::scene::save_mask_png(&mask, &mask_path) {
                eprintln!("warning: could not write {}: {e}", mask_path.display());
            }
            if let Err(e) = crate::scene::save_depth_png(&depth, 0.1, &depth_path) {
                eprintln!("warning: could not write {}: {e}", depth_path.display());
            }
        }
    }
    Ok(())
}

/// Builds the detection records for AP evaluation: one record per
/// (instance, supporting view), carrying the masklet's mask and box.
pub fn detection_records(
    scene: &LoadedScene,
    detections: &[DetectionFileEntry],
    mode: ApScoreMode,
) -> Result<Vec<DetectionRecord>, PipelineError> {
    let masklet_of: BTreeMap<(ViewId, MaskletId), &Masklet> =
        scene.masklets.iter().map(|m| (m.key(), m)).collect();
    // Per-masklet scores are only needed in masklet mode.
    let table = match mode {
        ApScoreMode::Masklet => {
            let kept: Vec<&Masklet> = scene.masklets.iter().collect();
            Some(build_score_table(
                &kept,
                &scoring_inputs(scene),
                &scene.meshes,
            )?)
        }
        ApScoreMode::Cluster => None,
    };

    let mut records = Vec::new();
    for det in detections {
        for (&view_id, &masklet_id) in &det.masklets {
            let Some(masklet) = masklet_of.get(&(view_id, masklet_id)) else {
                continue;
            };
            let score = match (&table, mode) {
                (Some(table), ApScoreMode::Masklet) => table
                    .clamped_scores((view_id, masklet_id))
                    .get(&det.class_id)
                    .copied()
                    .unwrap_or(0.0),
                _ => det.score,
            };
            records.push(DetectionRecord {
                view_id,
                class_id: det.class_id,
                score,
                mask: Some(masklet.mask.clone()),
                bbox: Some(masklet.bbox.to_continuous()),
            });
        }
    }
    Ok(records)
}

fn ground_truth_records(scene: &LoadedScene, boxes: GtBoxMode) -> Vec<GroundTruthRecord> {
    let Some(gt) = &scene.ground_truth else {
        return Vec::new();
    };
    let mut records = Vec::new();
    for (&view_id, instances) in &gt.modal_masks {
        for (index, (class_id, mask)) in instances.iter().enumerate() {
            // Amodal boxes, when requested and recorded for this instance.
            let box_mask = match boxes {
                GtBoxMode::Amodal => gt
                    .amodal_masks
                    .get(&view_id)
                    .and_then(|list| list.get(index))
                    .filter(|(c, _)| c == class_id)
                    .map(|(_, m)| m)
                    .unwrap_or(mask),
                GtBoxMode::Modal => mask,
            };
            let bbox = box_mask.bbox().map(|b| b.to_continuous());
            records.push(GroundTruthRecord {
                view_id,
                class_id: *class_id,
                mask: Some(mask.clone()),
                bbox,
            });
        }
    }
    records
}

/// Computes the metrics report for finished instances against ground truth.
pub fn compute_metrics(
    scene: &LoadedScene,
    detections: &[DetectionFileEntry],
    results: &[InstanceResult],
    options: &PipelineOptions,
) -> Result<Option<MetricsReport>, PipelineError> {
    let Some(gt) = &scene.ground_truth else {
        return Ok(None);
    };

    let mut per_instance = Vec::new();
    for result in results {
        let Some(t_final) = &result.t_final else {
            continue;
        };
        let Some(mesh) = scene.meshes.get(&result.class_id) else {
            continue;
        };
        let mut m4 = [0.0; 16];
        m4.copy_from_slice(t_final);
        let pose_est = RigidTransform::from_mat4_row_major(&m4);
        // Match against the nearest ground-truth pose of the same class.
        let best_gt = gt
            .poses
            .iter()
            .filter(|(c, _)| *c == result.class_id)
            .min_by(|(_, a), (_, b)| {
                (pose_est.translation - a.translation)
                    .norm()
                    .total_cmp(&(pose_est.translation - b.translation).norm())
            });
        let Some((_, pose_gt)) = best_gt else {
            continue;
        };
        let points = farthest_point_subsample(mesh.vertices(), 10_000);
        let errors = pose_errors(&pose_est, pose_gt, mesh)?;
        per_instance.push(InstanceMetrics {
            class_id: result.class_id,
            add: add_error(&pose_est, pose_gt, &points)?,
            adds: adds_error(&pose_est, pose_gt, &points)?,
            translation_mm: errors.translation_mm,
            rotation_deg: errors.rotation_deg,
        });
    }

    let mut per_class: BTreeMap<ClassId, ClassAggregate> = BTreeMap::new();
    let classes: std::collections::BTreeSet<ClassId> =
        per_instance.iter().map(|m| m.class_id).collect();
    for class_id in classes {
        let rows: Vec<&InstanceMetrics> = per_instance
            .iter()
            .filter(|m| m.class_id == class_id)
            .collect();
        let collect = |f: fn(&InstanceMetrics) -> f64| -> Vec<f64> {
            rows.iter().map(|m| f(m)).collect()
        };
        per_class.insert(
            class_id,
            ClassAggregate {
                count: rows.len(),
                add: MeanStd::from_values(&collect(|m| m.add)),
                adds: MeanStd::from_values(&collect(|m| m.adds)),
                translation_mm: MeanStd::from_values(&collect(|m| m.translation_mm)),
                rotation_deg: MeanStd::from_values(&collect(|m| m.rotation_deg)),
            },
        );
    }

    let dets = detection_records(scene, detections, options.ap_score)?;
    let gts = ground_truth_records(scene, options.gt_boxes);
    let mask_ap = average_precision(&dets, &gts, IouKind::Mask);
    let bbox_ap = average_precision(&dets, &gts, IouKind::Bbox);

    Ok(Some(MetricsReport {
        per_instance,
        per_class,
        mask_ap: Some(mask_ap.into()),
        bbox_ap: Some(bbox_ap.into()),
    }))
}

/// Runs the full pipeline: detect, coarse pose, contour refinement and
/// metrics (when ground truth is present). Deterministic for a fixed scene.
pub fn run_pipeline(
    scene: &LoadedScene,
    options: &PipelineOptions,
) -> Result<ResultBundle, PipelineError> {
    let total_start = Instant::now();
    let detect_start = Instant::now();
    let detections = run_detect_stage(scene)?;
    let detect_ms = detect_start.elapsed().as_secs_f64() * 1000.0;

    let (instances, coarse_ms, refine_ms) = estimate_poses_with_options(scene, &detections, options);
    if !instances.is_empty() && instances.iter().all(|i| i.error.is_some()) {
        return Err(PipelineError::AllInstancesFailed);
    }

    let metrics_start = Instant::now();
    let metrics = compute_metrics(scene, &detections, &instances, options)?;
    let metrics_ms = metrics_start.elapsed().as_secs_f64() * 1000.0;

    let timings = vec![
        StageTiming {
            stage: "detect".into(),
            ms: detect_ms,
        },
        StageTiming {
            stage: "coarse".into(),
            ms: coarse_ms,
        },
        StageTiming {
            stage: "refine".into(),
            ms: refine_ms,
        },
        StageTiming {
            stage: "metrics".into(),
            ms: metrics_ms,
        },
    ];
    Ok(ResultBundle {
        schema_version: SCHEMA_VERSION,
        instances,
        timings,
        total_ms: total_start.elapsed().as_secs_f64() * 1000.0,
        metrics,
    })
}

/// Renders one overlay PNG per view: the refined poses' silhouette outlines
/// in orange over the input image (or a flat background), with the visible
/// (occlusion-filtered) contour points in blue.
pub fn emit_overlays(
    scene: &LoadedScene,
    bundle: &ResultBundle,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|e| SceneError::io(out_dir, e))?;
    let masklet_of: BTreeMap<(ViewId, MaskletId), &Masklet> =
        scene.masklets.iter().map(|m| (m.key(), m)).collect();
    let mut written = Vec::new();
    for camera in &scene.cameras {
        let mut canvas = background_image(scene, camera);
        for instance in &bundle.instances {
            let Some(t_final) = &instance.t_final else {
                continue;
            };
            if !instance.masklets.contains_key(&camera.view_id) {
                continue;
            }
            let Some(mesh) = scene.meshes.get(&instance.class_id) else {
                continue;
            };
            let mut m4 = [0.0; 16];
            m4.copy_from_slice(t_final);
            let pose = RigidTransform::from_mat4_row_major(&m4);

            // Orange outline of the pose's silhouette.
            let (mask, _) = rasterize(mesh, camera, &pose);
            if let Ok(contour) = extract_contour(&mask) {
                for p in contour {
                    put_pixel(&mut canvas, p.pixel.x, p.pixel.y, [255, 140, 0]);
                }
            }

            // Blue visible contour points, recomputed as during refinement.
            if let Some(masklet) = masklet_of.get(&(camera.view_id, instance.masklets[&camera.view_id])) {
                if let Ok(contour) = extract_contour(&masklet.mask) {
                    let rendered_depth;
                    let depth = match scene.manifest.occlusion_source {
                        OcclusionSource::Observed => match scene.depth.get(&camera.view_id) {
                            Some(d) => d,
                            None => {
                                rendered_depth = rasterize(mesh, camera, &pose).1;
                                &rendered_depth
                            }
                        },
                        OcclusionSource::Rendered => {
                            rendered_depth = rasterize(mesh, camera, &pose).1;
                            &rendered_depth
                        }
                    };
                    let visible = occlusion_filter(
                        camera.view_id,
                        &contour,
                        depth,
                        camera,
                        &OcclusionConfig::default(),
                    );
                    for p in visible.points {
                        put_pixel(&mut canvas, p.pixel.x, p.pixel.y, [40, 90, 255]);
                    }
                }
            }
        }
        let path = out_dir.join(format!("overlay_view_{}.png", camera.view_id.0));
        canvas
            .save(&path)
            .map_err(|e| SceneError::parse(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn background_image(scene: &LoadedScene, camera: &Camera) -> image::RgbImage {
    if let Some(rel) = scene.manifest.images.get(&camera.view_id) {
        let path = if rel.is_absolute() {
            rel.clone()
        } else {
            scene.root.join(rel)
        };
        match image::open(&path) {
            Ok(img) => {
                let rgb = img.into_rgb8();
                if rgb.dimensions() == (camera.width, camera.height) {
                    return rgb;
                }
                eprintln!(
                    "warning: image {} has wrong dimensions; using blank canvas",
                    path.display()
                );
            }
            Err(e) => {
                eprintln!(
                    "warning: cannot read image {} ({e}); using blank canvas",
                    path.display()
                );
            }
        }
    }
    image::RgbImage::from_pixel(camera.width, camera.height, image::Rgb([56, 56, 56]))
}

fn put_pixel(canvas: &mut image::RgbImage, x: f64, y: f64, color: [u8; 3]) {
    let (xi, yi) = (x.round() as i64, y.round() as i64);
    if xi >= 0 && yi >= 0 && (xi as u32) < canvas.width() && (yi as u32) < canvas.height() {
        canvas.put_pixel(xi as u32, yi as u32, image::Rgb(color));
    }
}

/// Writes the refinement's per-iteration debug CSV.
pub fn write_refine_trace(
    trace: &[crate::refine::TraceRow],
    path: &Path,
) -> Result<(), SceneError> {
    use std::fmt::Write as _;
    let mut out = String::from("iteration,window,cost,lambda,step_norm,active_correspondences\n");
    for row in trace {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.iteration, row.window, row.cost, row.lambda, row.step_norm,
            row.active_correspondences
        )
        .expect("write to string");
    }
    std::fs::write(path, out).map_err(|e| SceneError::io(path, e))
}
