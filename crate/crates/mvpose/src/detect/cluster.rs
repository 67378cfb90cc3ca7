use super::triangulate::CandidatePoint;
use crate::geom::Vec3;
use crate::{ClassId, MaskletId, ViewId};
use std::collections::BTreeMap;

/// A clustered 3D instance: its center, class, the single supporting
/// masklet per view and the candidate points that formed it.
#[derive(Debug, Clone)]
pub struct InstanceCandidate {
    /// Mean of the member point positions (world, mm).
    pub center: Vec3,
    pub class_id: ClassId,
    /// At most one masklet per view.
    pub masklets: BTreeMap<ViewId, MaskletId>,
    pub member_points: Vec<CandidatePoint>,
    /// Mean of the member points' assigned-class scores.
    pub score: f64,
}

struct Cluster {
    class_id: ClassId,
    positions: Vec<Vec3>,
    sum: Vec3,
    masklets: BTreeMap<ViewId, MaskletId>,
    members: Vec<CandidatePoint>,
}

impl Cluster {
    fn center(&self) -> Vec3 {
        self.sum / self.positions.len() as f64
    }

    /// Criterion 3: after adding, still at most one masklet per view.
    fn masklets_compatible(&self, point: &CandidatePoint) -> bool {
        point.source.iter().all(|(view, masklet)| {
            self.masklets
                .get(view)
                .is_none_or(|existing| existing == masklet)
        })
    }

    /// The running mean moves when a point joins; re-check that every
    /// member (including the newcomer) stays within the class diameter of
    /// the updated center, so criterion 2 holds on the final output.
    fn mean_stays_within(&self, point: &CandidatePoint, diameter: f64) -> bool {
        let n = (self.positions.len() + 1) as f64;
        let new_center = (self.sum + point.position) / n;
        if (point.position - new_center).norm() > diameter {
            return false;
        }
        self.positions
            .iter()
            .all(|p| (p - new_center).norm() <= diameter)
    }

    fn push(&mut self, point: CandidatePoint) {
        self.sum += point.position;
        self.positions.push(point.position);
        for (view, masklet) in point.source {
            self.masklets.insert(view, masklet);
        }
        self.members.push(point);
    }
}

/// Greedy clustering of candidate points into instances.
///
/// Points are processed in descending assigned-class score (ties break on
/// ascending source masklet keys, making the result independent of input
/// order). Each point joins the spatially closest existing cluster that
/// (1) carries the same class, (2) keeps every member within the class
/// diameter of the running-mean center, and (3) stays supported by at most
/// one masklet per view; otherwise it seeds a new cluster. Equally distant
/// admissible clusters resolve to the earliest-created one.
pub fn greedy_cluster(
    mut points: Vec<CandidatePoint>,
    diameters: &BTreeMap<ClassId, f64>,
) -> Vec<InstanceCandidate> {
    points.sort_by(|a, b| {
        b.score()
            .total_cmp(&a.score())
            .then_with(|| a.source.cmp(&b.source))
    });

    let mut clusters: Vec<Cluster> = Vec::new();
    for point in points {
        let diameter = diameters
            .get(&point.assigned_class)
            .copied()
            .unwrap_or(f64::INFINITY);
        let mut best: Option<(usize, f64)> = None;
        for (index, cluster) in clusters.iter().enumerate() {
            if cluster.class_id != point.assigned_class {
                continue;
            }
            let dist = (point.position - cluster.center()).norm();
            if dist > diameter {
                continue;
            }
            if !cluster.masklets_compatible(&point) {
                continue;
            }
            if !cluster.mean_stays_within(&point, diameter) {
                continue;
            }
            // Strict < keeps the lowest cluster index on exact ties.
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((index, dist));
            }
        }
        match best {
            Some((index, _)) => clusters[index].push(point),
            None => clusters.push(Cluster {
                class_id: point.assigned_class,
                positions: vec![point.position],
                sum: point.position,
                masklets: point.source.iter().copied().collect(),
                members: vec![point],
            }),
        }
    }

    clusters
        .into_iter()
        .map(|c| {
            let score =
                c.members.iter().map(|p| p.score()).sum::<f64>() / c.members.len() as f64;
            InstanceCandidate {
                center: c.center(),
                class_id: c.class_id,
                masklets: c.masklets,
                member_points: c.members,
                score,
            }
        })
        .collect()
}
