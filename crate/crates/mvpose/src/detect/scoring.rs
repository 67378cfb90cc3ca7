use super::{DetectError, Masklet};
use crate::geom::{RigidTransform, TriMesh};
use crate::mask::BinaryMask;
use crate::{ClassId, MaskletId, ViewId};
use std::collections::BTreeMap;

/// One pre-rendered template view of an object: its descriptor and the pose
/// it was rendered under.
#[derive(Debug, Clone)]
pub struct TemplateEntry {
    pub feature: Vec<f32>,
    pub template_pose: RigidTransform,
}

/// The per-object template sets used by feature scoring.
#[derive(Debug, Clone, Default)]
pub struct TemplateLibrary {
    templates: BTreeMap<ClassId, Vec<TemplateEntry>>,
}

impl TemplateLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, class_id: ClassId, entries: Vec<TemplateEntry>) {
        self.templates.insert(class_id, entries);
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.templates.keys().copied()
    }

    pub fn entries(&self, class_id: ClassId) -> Option<&[TemplateEntry]> {
        self.templates.get(&class_id).map(|v| v.as_slice())
    }
}

/// What drives masklet scoring: descriptor similarity against a template
/// library, or the ground-truth IoU oracle (per view, the modal masks of
/// each class instance).
pub enum ScoringInputs<'a> {
    Features(&'a TemplateLibrary),
    Oracle(&'a BTreeMap<ViewId, Vec<(ClassId, BinaryMask)>>),
}

/// Cosine similarity between two descriptors, in [-1, 1].
pub fn template_similarity(
    masklet_feature: &[f32],
    template_feature: &[f32],
) -> Result<f64, DetectError> {
    if masklet_feature.len() != template_feature.len() {
        return Err(DetectError::FeatureDimensionMismatch(
            masklet_feature.len(),
            template_feature.len(),
        ));
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&a, &b) in masklet_feature.iter().zip(template_feature) {
        dot += a as f64 * b as f64;
        na += a as f64 * a as f64;
        nb += b as f64 * b as f64;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(DetectError::DegenerateFeature);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean of the five largest template scores; with fewer than five scores,
/// the mean of all of them.
pub fn aggregate_class_score(template_scores: &[f64]) -> Result<f64, DetectError> {
    if template_scores.is_empty() {
        return Err(DetectError::EmptyScores);
    }
    let mut sorted = template_scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = sorted.len().min(5);
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// The scoring-oracle score: IoU of the masklet against a ground-truth
/// modal mask.
pub fn oracle_score(masklet: &Masklet, gt_mask: &BinaryMask) -> Result<f64, DetectError> {
    Ok(masklet.mask.iou(gt_mask)?)
}

/// Per (masklet, class) scores. Feature scores live in [-1, 1]; a clamped
/// [0, 1] view is used when forming pair products so that two negative
/// similarities cannot multiply into a confident class.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    scores: BTreeMap<(ViewId, MaskletId), BTreeMap<ClassId, f64>>,
}

impl ScoreTable {
    pub fn insert(&mut self, key: (ViewId, MaskletId), class_scores: BTreeMap<ClassId, f64>) {
        self.scores.insert(key, class_scores);
    }

    pub fn raw_scores(&self, key: (ViewId, MaskletId)) -> Option<&BTreeMap<ClassId, f64>> {
        self.scores.get(&key)
    }

    pub fn clamped_scores(&self, key: (ViewId, MaskletId)) -> BTreeMap<ClassId, f64> {
        self.scores
            .get(&key)
            .map(|m| m.iter().map(|(k, v)| (*k, v.clamp(0.0, 1.0))).collect())
            .unwrap_or_default()
    }
}

/// Scores every masklet for every class. Every class known to `meshes` gets
/// an entry; classes absent from the scoring inputs score zero.
pub fn build_score_table(
    masklets: &[&Masklet],
    scoring: &ScoringInputs,
    meshes: &BTreeMap<ClassId, TriMesh>,
) -> Result<ScoreTable, DetectError> {
    let mut table = ScoreTable::default();
    for masklet in masklets {
        let mut class_scores = BTreeMap::new();
        for &class_id in meshes.keys() {
            let score = match scoring {
                ScoringInputs::Features(library) => {
                    let Some(entries) = library.entries(class_id) else {
                        class_scores.insert(class_id, 0.0);
                        continue;
                    };
                    let Some(descriptors) = masklet.features.as_ref() else {
                        class_scores.insert(class_id, 0.0);
                        continue;
                    };
                    let mut template_scores = Vec::with_capacity(entries.len());
                    for entry in entries {
                        // A masklet may carry several descriptors; use their
                        // mean similarity to the template.
                        let mut sum = 0.0;
                        for d in descriptors {
                            sum += template_similarity(d, &entry.feature)?;
                        }
                        template_scores.push(sum / descriptors.len() as f64);
                    }
                    aggregate_class_score(&template_scores)?
                }
                ScoringInputs::Oracle(gt) => {
                    let mut best = 0.0f64;
                    if let Some(instances) = gt.get(&masklet.view_id) {
                        for (gt_class, gt_mask) in instances {
                            if *gt_class == class_id {
                                best = best.max(oracle_score(masklet, gt_mask)?);
                            }
                        }
                    }
                    best
                }
            };
            class_scores.insert(class_id, score);
        }
        table.insert(masklet.key(), class_scores);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_have_unit_similarity() {
        let v = vec![0.3f32, -1.2, 0.7];
        assert!((template_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_have_zero_similarity() {
        assert_eq!(
            template_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn cosine_closed_form() {
        // (1,2,2)·(2,1,2) / (3*3) = 8/9
        let s = template_similarity(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert!((s - 8.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(
            template_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(DetectError::DegenerateFeature)
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(template_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn top5_aggregation() {
        let s = aggregate_class_score(&[1.0, 0.9, 0.8, 0.7, 0.6, 0.1]).unwrap();
        assert!((s - 0.8).abs() < 1e-12);
    }

    #[test]
    fn fewer_than_five_uses_all() {
        let s = aggregate_class_score(&[0.4, 0.2]).unwrap();
        assert!((s - 0.3).abs() < 1e-12);
    }

    #[test]
    fn constant_scores_aggregate_to_constant() {
        let s = aggregate_class_score(&[0.5; 10]).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_scores_error() {
        assert!(matches!(
            aggregate_class_score(&[]),
            Err(DetectError::EmptyScores)
        ));
    }

    #[test]
    fn aggregation_is_monotone() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let mut scores: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let base = aggregate_class_score(&scores).unwrap();
            let idx = rng.random_range(0..n);
            scores[idx] = (scores[idx] + rng.random_range(0.0..0.5)).min(1.0);
            let raised = aggregate_class_score(&scores).unwrap();
            assert!(raised >= base - 1e-12, "raising a score lowered the aggregate");
        }
    }

    #[test]
    fn oracle_score_matches_iou() {
        let make = |x0: u32| {
            BinaryMask::from_fn(8, 8, |x, y| x >= x0 && x < x0 + 2 && y < 2)
        };
        let m = Masklet::from_mask(ViewId(0), MaskletId(0), make(0), None).unwrap();
        assert_eq!(oracle_score(&m, &make(0)).unwrap(), 1.0);
        assert_eq!(oracle_score(&m, &make(4)).unwrap(), 0.0);
        assert!((oracle_score(&m, &make(1)).unwrap() - 2.0 / 6.0).abs() < 1e-12);
    }
}
