//! Scene ingestion and persistence: manifests, camera files, meshes with
//! symmetry sidecars, masklet and feature files, depth maps and result
//! bundles.

mod camera_io;
mod depth_io;
mod manifest;
mod masklet_io;
mod mesh_io;
mod result;

pub use camera_io::{load_camera, save_camera};
pub use depth_io::{load_depth_png, save_depth_png};
pub use manifest::{
    save_gt_poses, DepthEntry, GroundTruth, GroundTruthEntry, LoadedScene, ObjectEntry,
    OcclusionSource, SceneManifest, ScorerKind,
};
pub(crate) use manifest::gt_mask_file;
pub use masklet_io::{
    load_feature_file, load_masklet_file, load_template_library, save_feature_file,
    save_masklet_file, save_mask_png, MaskletEntry, MaskletFile,
};
pub use mesh_io::{load_mesh, load_symmetries, save_obj, save_symmetries};
pub use result::{
    ApSummary, ClassAggregate, InstanceMetrics, InstanceResult, MeanStd, MetricsReport,
    ResultBundle, StageTiming, SCHEMA_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("invalid geometry in {path}: {source}")]
    Geom {
        path: String,
        source: crate::geom::GeomError,
    },
    #[error(transparent)]
    Mask(#[from] crate::mask::MaskError),
    #[error("masklet error: {0}")]
    Masklet(String),
}

impl SceneError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, message: impl ToString) -> Self {
        Self::Parse {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }
}
