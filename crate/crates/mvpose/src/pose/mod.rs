//! The coarse pose stage: icosphere hypothesis sampling around the
//! triangulated instance center, per-view refinement with cross-view
//! aggregation, silhouette scoring and best-hypothesis selection.

mod average;
mod hypothesis;
mod refiner;
mod scoring;

pub use average::average_rotations;
pub use hypothesis::sample_hypotheses;
pub use refiner::{refine_hypotheses, CentroidAlignRefiner, IdentityRefiner, ViewRefiner};
pub use scoring::score_hypotheses;

use crate::geom::{Camera, RigidTransform, TriMesh};
use crate::mask::BinaryMask;
use crate::ViewId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoarsePoseError {
    #[error("cannot average an empty rotation list")]
    EmptyRotations,
    #[error("rotation mean is ambiguous (antipodal or degenerate inputs)")]
    AmbiguousMean,
    #[error("no hypotheses to select from")]
    EmptyHypotheses,
    #[error("instance has no supporting views")]
    NoSupportingViews,
    #[error("invalid hypothesis config: {0}")]
    InvalidConfig(String),
}

/// An object pose hypothesis in the world frame with its per-view and
/// aggregate silhouette scores.
#[derive(Debug, Clone)]
pub struct PoseHypothesis {
    pub pose_world: RigidTransform,
    pub per_view_scores: BTreeMap<ViewId, f64>,
    /// Mean of the per-view scores over the supporting views.
    pub aggregate_score: f64,
}

impl PoseHypothesis {
    pub fn unscored(pose_world: RigidTransform) -> Self {
        Self {
            pose_world,
            per_view_scores: BTreeMap::new(),
            aggregate_score: 0.0,
        }
    }
}

/// Which per-view refiner the coarse stage plugs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RefinerKind {
    /// No-op refiner; hypotheses pass through unchanged.
    Identity,
    /// Translation-only alignment of rendered and observed silhouette
    /// centroids, with depth adjusted from the area ratio.
    #[default]
    Centroid,
}

impl RefinerKind {
    pub fn build(&self) -> Box<dyn ViewRefiner> {
        match self {
            RefinerKind::Identity => Box::new(IdentityRefiner),
            RefinerKind::Centroid => Box::new(CentroidAlignRefiner),
        }
    }
}

/// Configuration of the coarse stage.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct HypothesisConfig {
    /// Viewpoint directions sampled from a subdivided icosahedron.
    pub n_viewpoints: usize,
    /// In-plane rotations per viewpoint, uniform in [0, 2pi).
    pub n_inplane: usize,
    /// Rounds of per-view refinement + cross-view aggregation.
    pub refine_iterations: usize,
    pub refiner: RefinerKind,
    /// Fraction of hypotheses kept after the first scoring pass.
    pub prune_fraction: f64,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self {
            n_viewpoints: 42,
            n_inplane: 12,
            refine_iterations: 5,
            refiner: RefinerKind::default(),
            prune_fraction: 0.25,
        }
    }
}

impl HypothesisConfig {
    pub fn validate(&self) -> Result<(), CoarsePoseError> {
        if self.n_viewpoints < 4 {
            return Err(CoarsePoseError::InvalidConfig(format!(
                "n_viewpoints must be >= 4, got {}",
                self.n_viewpoints
            )));
        }
        if self.n_inplane < 1 {
            return Err(CoarsePoseError::InvalidConfig(
                "n_inplane must be >= 1".into(),
            ));
        }
        if !(self.prune_fraction > 0.0 && self.prune_fraction <= 1.0) {
            return Err(CoarsePoseError::InvalidConfig(
                "prune_fraction must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One supporting view of an instance: its camera and the instance's
/// masklet mask in that view.
pub struct SupportingView<'a> {
    pub camera: &'a Camera,
    pub mask: &'a BinaryMask,
}

/// Transforms a world-frame object pose into the view (camera) frame.
pub fn to_view_frame(pose_world: &RigidTransform, camera: &Camera) -> RigidTransform {
    camera.world_to_cam.compose(pose_world)
}

/// Transforms a view-frame object pose back into the world frame.
pub fn to_world_frame(pose_cam: &RigidTransform, camera: &Camera) -> RigidTransform {
    camera.world_to_cam.invert().compose(pose_cam)
}

/// The hypothesis with the highest aggregate score; ties break to the
/// lowest index.
pub fn select_best(hypotheses: &[PoseHypothesis]) -> Result<&PoseHypothesis, CoarsePoseError> {
    let mut best: Option<&PoseHypothesis> = None;
    for h in hypotheses {
        if best.is_none_or(|b| h.aggregate_score > b.aggregate_score) {
            best = Some(h);
        }
    }
    best.ok_or(CoarsePoseError::EmptyHypotheses)
}

/// The coarse stage's result: the selected hypothesis plus the final scored
/// hypothesis set (for the debug score table).
pub struct CoarseEstimate {
    pub best: PoseHypothesis,
    /// The surviving hypotheses after refinement, rescored.
    pub scored: Vec<PoseHypothesis>,
}

/// Runs the full coarse stage for one instance: sample hypotheses about the
/// center, score them, prune to the best fraction, run the per-view
/// refine/aggregate rounds and return the best-scoring hypothesis.
pub fn estimate_coarse_pose(
    center: crate::geom::Vec3,
    views: &BTreeMap<ViewId, SupportingView>,
    mesh: &TriMesh,
    config: &HypothesisConfig,
) -> Result<PoseHypothesis, CoarsePoseError> {
    estimate_coarse_pose_detailed(center, views, mesh, config).map(|e| e.best)
}

pub fn estimate_coarse_pose_detailed(
    center: crate::geom::Vec3,
    views: &BTreeMap<ViewId, SupportingView>,
    mesh: &TriMesh,
    config: &HypothesisConfig,
) -> Result<CoarseEstimate, CoarsePoseError> {
    config.validate()?;
    if views.is_empty() {
        return Err(CoarsePoseError::NoSupportingViews);
    }
    let hypotheses = sample_hypotheses(center, config);
    let scored = score_hypotheses(hypotheses, views, mesh);

    // Keep the top fraction by aggregate score (stable under ties).
    let keep = ((scored.len() as f64 * config.prune_fraction).ceil() as usize)
        .clamp(1, scored.len());
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .aggregate_score
            .total_cmp(&scored[a].aggregate_score)
            .then(a.cmp(&b))
    });
    order.truncate(keep);
    order.sort_unstable();
    let pruned: Vec<PoseHypothesis> = order.into_iter().map(|i| scored[i].clone()).collect();
    drop(scored);

    let refiner = config.refiner.build();
    let refined = refine_hypotheses(pruned, views, mesh, refiner.as_ref(), config.refine_iterations);
    let rescored = score_hypotheses(refined, views, mesh);
    let best = select_best(&rescored)?.clone();
    Ok(CoarseEstimate {
        best,
        scored: rescored,
    })
}

/// Writes the per-hypothesis score table as CSV:
/// `hypothesis_index,view_id,score`.
pub fn write_hypothesis_scores_csv(
    hypotheses: &[PoseHypothesis],
    path: &std::path::Path,
) -> std::io::Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from("hypothesis,view_id,score\n");
    for (index, h) in hypotheses.iter().enumerate() {
        for (view_id, score) in &h.per_view_scores {
            writeln!(out, "{index},{view_id},{score}").expect("write to string");
        }
    }
    std::fs::write(path, out)
}
