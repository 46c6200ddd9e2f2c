//! RANSAC-style scene explanation: every ordered pair of scene points is
//! tried as the image of a template's two-part basis, the implied pose is
//! solved exactly from the 4×4 stacked system, and the predicted remaining
//! parts are verified against the scene within a tolerance. Accepted
//! hypotheses are assembled greedily by ascending score into an explanation
//! that claims each point at most once.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Vector2, Vector4};

use crate::geometry::{GeometryError, Pose, Template, TemplateLibrary};
use crate::metrics::Prediction;

/// Default verification tolerance on the distance between a predicted part
/// and its matched scene point.
pub const DEFAULT_TOL: f64 = 0.1;

/// Which part pairs serve as the pose basis during enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisPolicy {
    /// The first two parts of each template (one basis per template).
    FirstPair,
    /// Every ordered pair of distinct parts; slower, more robust at high
    /// noise.
    AllPairs,
}

#[derive(Clone, Debug)]
pub struct RansacConfig {
    pub tol: f64,
    pub basis_policy: BasisPolicy,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            basis_policy: BasisPolicy::FirstPair,
        }
    }
}

/// A verified template instantiation: template, solved pose, the scene
/// point matched to each part, and the residual score.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub template: usize,
    pub pose: Pose,
    /// Matched scene-point index per part (full-object matching).
    pub matches: Vec<usize>,
    /// Σ_n ‖x̂_n - x_match(n)‖².
    pub score: f64,
}

impl Hypothesis {
    fn point_set(&self) -> Vec<usize> {
        let mut set = self.matches.clone();
        set.sort_unstable();
        set
    }
}

/// The assembled scene explanation.
#[derive(Clone, Debug)]
pub struct Explanation {
    /// Accepted hypotheses, ascending by score, already packed onto
    /// distinct template slots (identical templates in score order).
    pub accepted: Vec<Hypothesis>,
    /// Per scene point: the accepted hypothesis' template, or `None`.
    pub point_assignment: Vec<Option<usize>>,
    /// Templates with no accepted hypothesis.
    pub missing_templates: Vec<usize>,
}

impl Explanation {
    /// Bridge to the metric layer's slot-level prediction.
    pub fn to_prediction(&self, library: &TemplateLibrary) -> Prediction {
        let points = self.point_assignment.len();
        let mut pred = Prediction::unexplained(points, library.total_parts());
        for hyp in &self.accepted {
            for (n, &point) in hyp.matches.iter().enumerate() {
                pred.point_object[point] = Some(hyp.template);
                pred.point_slot[point] = Some((hyp.template, n));
                pred.missing_slots[library.slot(hyp.template, n)] = false;
            }
        }
        pred
    }
}

/// Solve the pose mapping parts `n1, n2` of `template` onto scene points
/// `xi, xj` by inverting the stacked 4×4 basis system.
pub fn solve_pose_from_pair(
    template: &Template,
    n1: usize,
    n2: usize,
    xi: Vector2<f64>,
    xj: Vector2<f64>,
) -> Result<Pose, GeometryError> {
    let basis = template.basis_matrix(n1, n2)?;
    let stacked = Vector4::new(xi.x, xi.y, xj.x, xj.y);
    let solved = basis
        .lu()
        .solve(&stacked)
        .ok_or(GeometryError::SingularBasis {
            condition: f64::INFINITY,
        })?;
    Ok(Pose::from_vector(solved))
}

/// Greedily match each predicted part to the nearest still-unclaimed scene
/// point within `tol`. Returns the matched point per part and the squared
/// residual score, or `None` if any part stays unmatched (only fully
/// present objects are accepted).
pub fn subset_match(
    predicted: &[Vector2<f64>],
    points: &[Vector2<f64>],
    tol: f64,
) -> Option<(Vec<usize>, f64)> {
    let mut claimed = vec![false; points.len()];
    let mut matches = Vec::with_capacity(predicted.len());
    let mut score = 0.0;
    for target in predicted {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if claimed[i] {
                continue;
            }
            let d2 = (p - target).norm_squared();
            if d2 <= tol * tol && best.map_or(true, |(_, b)| d2 < b) {
                best = Some((i, d2));
            }
        }
        let (index, d2) = best?;
        claimed[index] = true;
        matches.push(index);
        score += d2;
    }
    Some((matches, score))
}

fn basis_pairs(template: &Template, policy: BasisPolicy) -> Vec<(usize, usize)> {
    match policy {
        BasisPolicy::FirstPair => vec![(0, 1)],
        BasisPolicy::AllPairs => {
            let len = template.len();
            let mut pairs = Vec::with_capacity(len * (len - 1));
            for a in 0..len {
                for b in 0..len {
                    if a != b {
                        pairs.push((a, b));
                    }
                }
            }
            pairs
        }
    }
}

/// Deterministic ordering: score, then template, then matched points.
fn hypothesis_order(a: &Hypothesis, b: &Hypothesis) -> core::cmp::Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.template.cmp(&b.template))
        .then(a.matches.cmp(&b.matches))
}

/// Enumerate the `M(M-1)` ordered point pairs against each template basis,
/// verify each solved pose, and assemble an explanation.
///
/// Duplicate hypotheses over the same point set keep only the lowest score.
/// Acceptance is greedy in ascending score, skipping hypotheses that reuse
/// a claimed point; accepted hypotheses on identical templates are packed
/// onto the earliest free template slot of that shape, so the remaining
/// templates are reported missing.
pub fn run_ransac(
    points: &[Vector2<f64>],
    library: &TemplateLibrary,
    cfg: &RansacConfig,
) -> Explanation {
    let mut by_point_set: BTreeMap<Vec<usize>, Hypothesis> = BTreeMap::new();
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            for (k, template) in library.templates().iter().enumerate() {
                for (n1, n2) in basis_pairs(template, cfg.basis_policy) {
                    let Ok(pose) = solve_pose_from_pair(template, n1, n2, points[i], points[j])
                    else {
                        continue;
                    };
                    let predicted = template.apply(&pose);
                    let Some((matches, score)) = subset_match(&predicted, points, cfg.tol) else {
                        continue;
                    };
                    let hyp = Hypothesis {
                        template: k,
                        pose,
                        matches,
                        score,
                    };
                    let key = hyp.point_set();
                    match by_point_set.get(&key) {
                        Some(existing)
                            if hypothesis_order(existing, &hyp) != core::cmp::Ordering::Greater => {
                        }
                        _ => {
                            by_point_set.insert(key, hyp);
                        }
                    }
                }
            }
        }
    }

    let mut hypotheses: Vec<Hypothesis> = by_point_set.into_values().collect();
    hypotheses.sort_by(hypothesis_order);

    let shape_groups = library.shape_groups();
    let group_of: Vec<usize> = {
        let mut map = vec![0; library.len()];
        for (g, group) in shape_groups.iter().enumerate() {
            for &k in group {
                map[k] = g;
            }
        }
        map
    };
    let mut slot_used = vec![false; library.len()];
    let mut point_claimed = vec![false; points.len()];
    let mut accepted = Vec::new();
    for hyp in hypotheses {
        if hyp.matches.iter().any(|&p| point_claimed[p]) {
            continue;
        }
        let Some(&slot) = shape_groups[group_of[hyp.template]]
            .iter()
            .find(|&&k| !slot_used[k])
        else {
            continue;
        };
        slot_used[slot] = true;
        for &p in &hyp.matches {
            point_claimed[p] = true;
        }
        accepted.push(Hypothesis {
            template: slot,
            ..hyp
        });
    }

    let mut point_assignment = vec![None; points.len()];
    for hyp in &accepted {
        for &p in &hyp.matches {
            point_assignment[p] = Some(hyp.template);
        }
    }
    let missing_templates = (0..library.len()).filter(|&k| !slot_used[k]).collect();
    Explanation {
        accepted,
        point_assignment,
        missing_templates,
    }
}
