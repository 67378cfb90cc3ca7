//! Command-line driver: scene generation, detection, pose estimation,
//! evaluation and overlay rendering.
//!
//! Exit codes: 0 on success, 2 for an invalid manifest or unreadable
//! inputs, 3 when every detected instance failed its pose stages.

use clap::{Parser, Subcommand, ValueEnum};
use mvpose::pipeline::{
    self, ApScoreMode, DetectionFileEntry, GtBoxMode, PipelineError, PipelineOptions,
};
use mvpose::scene::{LoadedScene, ResultBundle, SceneError, ScorerKind};
use mvpose::synth::{generate_synthetic_scene, SynthMesh, SynthSpec};
use mvpose::ClassId;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mvpose", version, about = "Training-free multi-view 6D pose estimation")]
struct Cli {
    /// Size of the rayon worker pool (default: one thread per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerArg {
    Features,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefinerArg {
    Identity,
    Centroid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApScoreArg {
    Cluster,
    Masklet,
}

impl From<ApScoreArg> for ApScoreMode {
    fn from(a: ApScoreArg) -> Self {
        match a {
            ApScoreArg::Cluster => ApScoreMode::Cluster,
            ApScoreArg::Masklet => ApScoreMode::Masklet,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded, ground-truthed synthetic scene.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        views: usize,
        /// Insert a slab partially occluding the object in view 0.
        #[arg(long)]
        occluder: bool,
        /// Number of object classes (1 = tool, 2 = tool + sphere).
        #[arg(long, default_value_t = 1)]
        classes: usize,
    },
    /// Run the detection stage and write detections.json.
    Detect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scorer: Option<ScorerArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run pose estimation on saved detections and write results.json.
    Pose {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        refiner: Option<RefinerArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline: detect, coarse pose, refine, metrics.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        scorer: Option<ScorerArg>,
        #[arg(long)]
        refiner: Option<RefinerArg>,
        #[arg(long, value_enum, default_value_t = ApScoreArg::Cluster)]
        ap_score: ApScoreArg,
        /// Evaluate bbox AP against amodal ground-truth boxes.
        #[arg(long)]
        amodal_gt_boxes: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-instance debug artifacts (score tables, refinement
        /// traces, silhouette/depth renders) into this directory.
        #[arg(long)]
        debug_dir: Option<PathBuf>,
    },
    /// Recompute metrics for saved results against manifest ground truth.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = ApScoreArg::Cluster)]
        ap_score: ApScoreArg,
        /// Evaluate bbox AP against amodal ground-truth boxes.
        #[arg(long)]
        amodal_gt_boxes: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render per-view overlays of refined poses and visible contours.
    Overlay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not configure {threads} threads: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PipelineError::Scene(_) | PipelineError::Detect(_) => ExitCode::from(2),
                PipelineError::AllInstancesFailed => ExitCode::from(3),
                PipelineError::Metrics(_) => ExitCode::from(3),
            }
        }
    }
}

fn load_scene(
    manifest: &std::path::Path,
    scorer: Option<ScorerArg>,
    refiner: Option<RefinerArg>,
) -> Result<LoadedScene, PipelineError> {
    let mut m = mvpose::scene::SceneManifest::load(manifest)?;
    if let Some(s) = scorer {
        m.scorer = match s {
            ScorerArg::Features => ScorerKind::Features,
            ScorerArg::Oracle => ScorerKind::Oracle,
        };
    }
    if let Some(r) = refiner {
        m.pose.refiner = match r {
            RefinerArg::Identity => mvpose::pose::RefinerKind::Identity,
            RefinerArg::Centroid => mvpose::pose::RefinerKind::Centroid,
        };
    }
    let root = manifest
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(LoadedScene::from_manifest(m, root)?)
}

fn ensure_out(
    scene: &LoadedScene,
    out: Option<PathBuf>,
) -> Result<PathBuf, PipelineError> {
    let dir = out.unwrap_or_else(|| scene.output_dir());
    std::fs::create_dir_all(&dir).map_err(|e| SceneError::io(&dir, e))?;
    Ok(dir)
}

fn dispatch(command: Command) -> Result<ExitCode, PipelineError> {
    match command {
        Command::Synth {
            out,
            seed,
            views,
            occluder,
            classes,
        } => {
            let mut objects = vec![(ClassId(1), SynthMesh::Tool)];
            if classes >= 2 {
                objects.push((ClassId(2), SynthMesh::Sphere { radius_mm: 28.0 }));
            }
            let spec = SynthSpec {
                seed,
                n_views: views,
                objects,
                occluder,
                ..SynthSpec::default()
            };
            let generated = generate_synthetic_scene(&spec, &out)?;
            println!("wrote {}", generated.manifest_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Detect {
            manifest,
            scorer,
            out,
        } => {
            let scene = load_scene(&manifest, scorer, None)?;
            let detections = pipeline::run_detect_stage(&scene)?;
            let dir = ensure_out(&scene, out)?;
            let path = dir.join("detections.json");
            pipeline::save_detections(&detections, &path)?;
            println!("{} instances -> {}", detections.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Pose {
            manifest,
            detections,
            refiner,
            out,
        } => {
            let scene = load_scene(&manifest, None, refiner)?;
            let detections: Vec<DetectionFileEntry> =
                pipeline::load_detections(&detections)?;
            let (instances, coarse_ms, refine_ms) =
                pipeline::estimate_poses(&scene, &detections);
            if !instances.is_empty() && instances.iter().all(|i| i.error.is_some()) {
                return Err(PipelineError::AllInstancesFailed);
            }
            let bundle = ResultBundle {
                schema_version: mvpose::scene::SCHEMA_VERSION,
                instances,
                timings: vec![
                    mvpose::scene::StageTiming {
                        stage: "coarse".into(),
                        ms: coarse_ms,
                    },
                    mvpose::scene::StageTiming {
                        stage: "refine".into(),
                        ms: refine_ms,
                    },
                ],
                total_ms: coarse_ms + refine_ms,
                metrics: None,
            };
            let dir = ensure_out(&scene, out)?;
            let path = dir.join("results.json");
            bundle.save(&path)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            manifest,
            seed: _seed,
            scorer,
            refiner,
            ap_score,
            amodal_gt_boxes,
            out,
            debug_dir,
        } => {
            let scene = load_scene(&manifest, scorer, refiner)?;
            if let Some(dir) = &debug_dir {
                std::fs::create_dir_all(dir).map_err(|e| SceneError::io(dir, e))?;
            }
            let options = PipelineOptions {
                ap_score: ap_score.into(),
                gt_boxes: if amodal_gt_boxes {
                    GtBoxMode::Amodal
                } else {
                    GtBoxMode::Modal
                },
                debug_dir,
            };
            let bundle = pipeline::run_pipeline(&scene, &options)?;
            let dir = ensure_out(&scene, out)?;
            let path = dir.join("results.json");
            bundle.save(&path)?;
            println!(
                "{} instances in {:.1} ms -> {}",
                bundle.instances.len(),
                bundle.total_ms,
                path.display()
            );
            if let Some(metrics) = &bundle.metrics {
                if let Some(ap) = &metrics.mask_ap {
                    println!("mask AP (0.50:0.95) = {:.4}", ap.mean_ap);
                }
                for row in &metrics.per_instance {
                    println!(
                        "class {}: ADD {:.3} mm, ADD-S {:.3} mm, dt {:.3} mm, dR {:.3} deg",
                        row.class_id, row.add, row.adds, row.translation_mm, row.rotation_deg
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            manifest,
            results,
            ap_score,
            amodal_gt_boxes,
            out,
        } => {
            let scene = load_scene(&manifest, None, None)?;
            let bundle = ResultBundle::load(&results)?;
            let detections: Vec<DetectionFileEntry> = bundle
                .instances
                .iter()
                .map(|i| DetectionFileEntry {
                    center: i.center,
                    class_id: i.class_id,
                    masklets: i.masklets.clone(),
                    score: i.score,
                })
                .collect();
            let options = PipelineOptions {
                ap_score: ap_score.into(),
                gt_boxes: if amodal_gt_boxes {
                    GtBoxMode::Amodal
                } else {
                    GtBoxMode::Modal
                },
                debug_dir: None,
            };
            let metrics =
                pipeline::compute_metrics(&scene, &detections, &bundle.instances, &options)?;
            let dir = ensure_out(&scene, out)?;
            let path = dir.join("metrics.json");
            let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
            std::fs::write(&path, text).map_err(|e| SceneError::io(&path, e))?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Overlay {
            manifest,
            results,
            out,
        } => {
            let scene = load_scene(&manifest, None, None)?;
            let bundle = ResultBundle::load(&results)?;
            let dir = ensure_out(&scene, out)?;
            let files = pipeline::emit_overlays(&scene, &bundle, &dir)?;
            println!("wrote {} overlays to {}", files.len(), dir.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
