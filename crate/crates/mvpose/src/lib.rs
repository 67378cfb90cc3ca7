//! Training-free detection and 6D pose estimation of rigid instruments from
//! calibrated multi-view imagery, given one CAD model per instrument class.
//!
//! The pipeline has two stages:
//!
//! 1. **Detection** ([`detect`]): class-agnostic mask proposals per view are
//!    scored against rendered templates (or a ground-truth IoU oracle),
//!    matched across views by triangulating bounding-box-center rays, and
//!    greedily clustered into 3D instance candidates.
//! 2. **Pose estimation** ([`pose`], [`refine`]): pose hypotheses sampled on
//!    an icosphere around the instance center are refined per view and
//!    aggregated across views (SVD rotation averaging); the best-scoring
//!    hypothesis is polished by an occlusion-aware multi-view contour
//!    registration solved with Levenberg-Marquardt on SE(3).
//!
//! [`render`] provides the CPU silhouette/depth rasterizer and contour
//! machinery both stages rely on, [`metrics`] the ADD(-S)/AP evaluation,
//! [`synth`] a seeded ground-truthed scene generator, and [`pipeline`] the
//! end-to-end orchestration driven by a [`scene::SceneManifest`].

pub mod detect;
pub mod geom;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod pose;
pub mod refine;
pub mod render;
pub mod scene;
pub mod synth;

mod ids;

pub use ids::{ClassId, MaskletId, ViewId};
