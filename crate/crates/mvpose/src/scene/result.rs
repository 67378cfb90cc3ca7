use crate::metrics::ApReport;
use crate::{ClassId, MaskletId, ViewId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SCHEMA_VERSION: u32 = 1;

/// Final per-instance result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceResult {
    pub class_id: ClassId,
    /// Detection-stage score of the instance (mean of member pair scores).
    pub score: f64,
    /// Triangulated 3D center, world frame (mm).
    pub center: [f64; 3],
    pub supporting_views: Vec<ViewId>,
    pub masklets: BTreeMap<ViewId, MaskletId>,
    /// Coarse pose, row-major 4x4; absent when the stage failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_coarse: Option<Vec<f64>>,
    /// Final refined pose, row-major 4x4; absent when refinement failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<Vec<f64>>,
    pub coarse_score: f64,
    pub refine_converged: bool,
    pub refine_iterations: usize,
    /// Per-stage wall time for this instance.
    pub timings_ms: BTreeMap<String, f64>,
    /// Stage failure, when one occurred; the pipeline keeps going.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

/// Pose accuracy of one instance against its matched ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub class_id: ClassId,
    pub add: f64,
    pub adds: f64,
    pub translation_mm: f64,
    pub rotation_deg: f64,
}

/// Mean and standard deviation of one metric over a class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassAggregate {
    pub count: usize,
    pub add: MeanStd,
    pub adds: MeanStd,
    pub translation_mm: MeanStd,
    pub rotation_deg: MeanStd,
}

/// AP numbers in a serialization-friendly shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApSummary {
    pub mean_ap: f64,
    pub per_class: BTreeMap<ClassId, f64>,
    pub per_threshold: Vec<(f64, f64)>,
}

impl From<ApReport> for ApSummary {
    fn from(r: ApReport) -> Self {
        Self {
            mean_ap: r.mean_ap,
            per_class: r.per_class,
            per_threshold: r.per_threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_instance: Vec<InstanceMetrics>,
    pub per_class: BTreeMap<ClassId, ClassAggregate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_ap: Option<ApSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bbox_ap: Option<ApSummary>,
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultBundle {
    pub schema_version: u32,
    pub instances: Vec<InstanceResult>,
    pub timings: Vec<StageTiming>,
    pub total_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
}

impl ResultBundle {
    pub fn load(path: &std::path::Path) -> Result<Self, super::SceneError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| super::SceneError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| super::SceneError::parse(path, e))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), super::SceneError> {
        let text = serde_json::to_string_pretty(self).expect("bundle serializes");
        std::fs::write(path, text).map_err(|e| super::SceneError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_of_constant_list() {
        let m = MeanStd::from_values(&[2.0, 2.0, 2.0]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std, 0.0);
    }

    #[test]
    fn bundle_round_trips_through_json() {
        let bundle = ResultBundle {
            schema_version: SCHEMA_VERSION,
            instances: vec![InstanceResult {
                class_id: ClassId(1),
                score: 0.9,
                center: [1.0, 2.0, 3.0],
                supporting_views: vec![ViewId(0), ViewId(1)],
                masklets: BTreeMap::from([(ViewId(0), MaskletId(4))]),
                t_coarse: Some(vec![0.0; 16]),
                t_final: None,
                coarse_score: 0.8,
                refine_converged: true,
                refine_iterations: 200,
                timings_ms: BTreeMap::from([("coarse".to_string(), 12.5)]),
                error: None,
            }],
            timings: vec![StageTiming {
                stage: "detect".into(),
                ms: 3.0,
            }],
            total_ms: 20.0,
            metrics: None,
        };
        let text = serde_json::to_string(&bundle).unwrap();
        let back: ResultBundle = serde_json::from_str(&text).unwrap();
        assert_eq!(back.instances.len(), 1);
        assert_eq!(back.instances[0].masklets[&ViewId(0)], MaskletId(4));
    }
}
