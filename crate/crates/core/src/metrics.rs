//! Partition-comparison metrics with missing-point handling: variation of
//! information, adjusted Rand index, segmentation accuracy under two
//! universe conventions, and exact per-scene accuracy.
//!
//! Partitions live over the N canonical part slots of the template library.
//! A ground-truth-filled slot stands for the observed point generated
//! there; a ground-truth-missing slot is a "unit" standing for a point that
//! never appeared. Predictions label point elements with the claimed
//! template and label a unit non-zero exactly when they claim that slot is
//! filled, so both hallucinated objects and missed objects cost accuracy,
//! while relabelings among identical templates are gauge freedom.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::geometry::TemplateLibrary;
use crate::scene::Scene;

#[derive(Clone, Debug, PartialEq)]
pub enum MetricsError {
    MismatchedUniverse { left: usize, right: usize },
    EmptyDataset,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::MismatchedUniverse { left, right } => {
                write!(f, "partitions cover {left} vs {right} elements")
            }
            MetricsError::EmptyDataset => write!(f, "no scenes to summarize"),
        }
    }
}

/// A partition of `len()` elements into blocks `V_0..V_K`, stored as a
/// per-element block label. Label 0 is the missing/unexplained block.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPartition {
    labels: Vec<usize>,
    max_label: usize,
}

impl LabeledPartition {
    pub fn new(labels: Vec<usize>) -> Self {
        let max_label = labels.iter().copied().max().unwrap_or(0);
        Self { labels, max_label }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn max_label(&self) -> usize {
        self.max_label
    }

    /// Sizes of blocks 0..=max_label.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.max_label + 1];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

fn check_universe(v: &LabeledPartition, vhat: &LabeledPartition) -> Result<(), MetricsError> {
    if v.len() != vhat.len() {
        return Err(MetricsError::MismatchedUniverse {
            left: v.len(),
            right: vhat.len(),
        });
    }
    Ok(())
}

/// Joint block-overlap counts, sized (max_v+1) × (max_vhat+1).
fn contingency(v: &LabeledPartition, vhat: &LabeledPartition) -> DMatrix<f64> {
    let mut table = DMatrix::zeros(v.max_label + 1, vhat.max_label + 1);
    for (&a, &b) in v.labels.iter().zip(vhat.labels.iter()) {
        table[(a, b)] += 1.0;
    }
    table
}

/// Variation of information between two partitions (natural log).
pub fn variation_of_information(
    v: &LabeledPartition,
    vhat: &LabeledPartition,
) -> Result<f64, MetricsError> {
    check_universe(v, vhat)?;
    let n = v.len() as f64;
    let table = contingency(v, vhat);
    let rows: Vec<f64> = (0..table.nrows()).map(|i| table.row(i).sum() / n).collect();
    let cols: Vec<f64> = (0..table.ncols())
        .map(|j| table.column(j).sum() / n)
        .collect();
    let mut vi = 0.0;
    for i in 0..table.nrows() {
        for j in 0..table.ncols() {
            let r = table[(i, j)] / n;
            if r > 0.0 {
                vi -= r * (libm::log(r / rows[i]) + libm::log(r / cols[j]));
            }
        }
    }
    // Clamp the -0.0 that identical partitions produce.
    Ok(if vi <= 0.0 { 0.0 } else { vi })
}

/// Adjusted Rand index: pair-counting agreement corrected for chance.
pub fn adjusted_rand_index(
    v: &LabeledPartition,
    vhat: &LabeledPartition,
) -> Result<f64, MetricsError> {
    check_universe(v, vhat)?;
    let comb2 = |x: f64| x * (x - 1.0) / 2.0;
    let table = contingency(v, vhat);
    let sum_cells: f64 = table.iter().map(|&x| comb2(x)).sum();
    let sum_rows: f64 = (0..table.nrows()).map(|i| comb2(table.row(i).sum())).sum();
    let sum_cols: f64 = (0..table.ncols())
        .map(|j| comb2(table.column(j).sum()))
        .sum();
    let total = comb2(v.len() as f64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        // Both partitions are trivial (e.g. a single block each).
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

/// Result of a maximum-weight bipartite matching.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    /// Column matched to each row (rows of the weight matrix).
    pub row_to_col: Vec<Option<usize>>,
    pub total: f64,
}

/// Maximum-weight bipartite matching via the Hungarian method on the
/// zero-padded square matrix. Weights must be finite.
pub fn max_weight_matching(weights: &DMatrix<f64>) -> Matching {
    let rows = weights.nrows();
    let cols = weights.ncols();
    let n = rows.max(cols);
    if n == 0 {
        return Matching {
            row_to_col: Vec::new(),
            total: 0.0,
        };
    }
    // Minimize negated weights on the padded square matrix.
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -weights[(i, j)]
        } else {
            0.0
        }
    };

    // Shortest-augmenting-path assignment with row/column potentials.
    const FREE: usize = usize::MAX;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_row = vec![FREE; n + 1];
    for row in 0..n {
        col_row[n] = row;
        let mut j0 = n;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut prev = vec![n; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = n;
            for j in 0..n {
                if !used[j] {
                    let reduced = cost(i0, j) - u[i0] - v[j];
                    if reduced < min_to[j] {
                        min_to[j] = reduced;
                        prev[j] = j0;
                    }
                    if min_to[j] < delta {
                        delta = min_to[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == FREE {
                break;
            }
        }
        while j0 != n {
            let j1 = prev[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
        }
    }

    let mut row_to_col = vec![None; rows];
    let mut total = 0.0;
    for j in 0..n {
        let i = col_row[j];
        if i < rows && j < cols {
            row_to_col[i] = Some(j);
            total += weights[(i, j)];
        }
    }
    Matching { row_to_col, total }
}

/// Universe convention for segmentation accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SaConvention {
    /// All N elements, missing block included; divide by N.
    FullUniverse,
    /// Restrict to elements observed in the ground truth; divide by M.
    GtMask,
}

/// Segmentation accuracy: normalized weight of the maximum bipartite
/// matching between the blocks of `v` and `vhat` (including the missing
/// blocks). Under [`SaConvention::GtMask`] the universe is first restricted
/// to ground-truth observed elements.
pub fn segmentation_accuracy(
    v: &LabeledPartition,
    vhat: &LabeledPartition,
    convention: SaConvention,
) -> Result<f64, MetricsError> {
    check_universe(v, vhat)?;
    match convention {
        SaConvention::FullUniverse => {
            let table = contingency(v, vhat);
            Ok(max_weight_matching(&table).total / v.len() as f64)
        }
        SaConvention::GtMask => {
            let (mv, mvhat) = restrict_to_observed(v, vhat)?;
            if mv.is_empty() {
                return Ok(1.0);
            }
            let table = contingency(&mv, &mvhat);
            Ok(max_weight_matching(&table).total / mv.len() as f64)
        }
    }
}

/// Drop every element the ground truth marks missing (label 0 in `v`).
pub fn restrict_to_observed(
    v: &LabeledPartition,
    vhat: &LabeledPartition,
) -> Result<(LabeledPartition, LabeledPartition), MetricsError> {
    check_universe(v, vhat)?;
    let mut lv = Vec::new();
    let mut lvhat = Vec::new();
    for (&a, &b) in v.labels.iter().zip(vhat.labels.iter()) {
        if a != 0 {
            lv.push(a);
            lvhat.push(b);
        }
    }
    Ok((LabeledPartition::new(lv), LabeledPartition::new(lvhat)))
}

/// All label maps that permute block labels within the given
/// interchangeable groups and fix everything else (identity included).
fn gauge_maps(groups: &[Vec<usize>], max_label: usize) -> Vec<Vec<usize>> {
    let identity: Vec<usize> = (0..=max_label).collect();
    let mut maps = vec![identity];
    for group in groups {
        let group: Vec<usize> = group.iter().copied().filter(|&l| l <= max_label).collect();
        if group.len() < 2 {
            continue;
        }
        let perms = permutations(&group);
        let mut next = Vec::with_capacity(maps.len() * perms.len());
        for map in &maps {
            for perm in &perms {
                let mut m = map.clone();
                for (src, dst) in group.iter().zip(perm.iter()) {
                    m[*src] = map[*dst];
                }
                next.push(m);
            }
        }
        maps = next;
    }
    maps
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &head) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Exact scene accuracy: 1 iff `vhat` equals `v` block-for-block, allowing
/// label permutations within each interchangeable group (identical
/// templates such as the two squares).
pub fn scene_accuracy(
    v: &LabeledPartition,
    vhat: &LabeledPartition,
    interchangeable: &[Vec<usize>],
) -> Result<bool, MetricsError> {
    check_universe(v, vhat)?;
    let max_label = v.max_label.max(vhat.max_label);
    for map in gauge_maps(interchangeable, max_label) {
        if v.labels
            .iter()
            .zip(vhat.labels.iter())
            .all(|(&a, &b)| a == map[b])
        {
            return Ok(true);
        }
    }
    Ok(false)
}

/// A method's answer for one scene, in scene-point and slot terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Claimed template per scene point; `None` = unexplained.
    pub point_object: Vec<Option<usize>>,
    /// Claimed (template, part) per scene point when explained.
    pub point_slot: Vec<Option<(usize, usize)>>,
    /// Per flattened slot: true when the method marks it unfilled.
    pub missing_slots: Vec<bool>,
}

impl Prediction {
    /// The all-unexplained prediction over `points` scene points.
    pub fn unexplained(points: usize, total_slots: usize) -> Self {
        Self {
            point_object: vec![None; points],
            point_slot: vec![None; points],
            missing_slots: vec![true; total_slots],
        }
    }

    /// Template indices that claim at least one point, ascending.
    pub fn claimed_templates(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self.point_object.iter().flatten().copied().collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}

/// Pack claimed objects onto the earliest identical templates.
///
/// A claim on "square 2" while "square 1" is unclaimed is relabeled to
/// square 1; the shapes are indistinguishable, so this is a gauge choice
/// that makes predictions comparable with canonically packed scenes.
pub fn canonicalize_prediction(pred: &Prediction, library: &TemplateLibrary) -> Prediction {
    let claimed = pred.claimed_templates();
    let mut perm: Vec<usize> = (0..library.len()).collect();
    for group in library.shape_groups() {
        let claimed_in: Vec<usize> = group
            .iter()
            .copied()
            .filter(|k| claimed.contains(k))
            .collect();
        let unclaimed_in: Vec<usize> = group
            .iter()
            .copied()
            .filter(|k| !claimed.contains(k))
            .collect();
        for (src, dst) in claimed_in
            .iter()
            .chain(unclaimed_in.iter())
            .zip(group.iter())
        {
            perm[*src] = *dst;
        }
    }
    let point_object: Vec<Option<usize>> =
        pred.point_object.iter().map(|o| o.map(|k| perm[k])).collect();
    let point_slot: Vec<Option<(usize, usize)>> = pred
        .point_slot
        .iter()
        .map(|s| s.map(|(k, n)| (perm[k], n)))
        .collect();
    let mut missing_slots = vec![true; library.total_parts()];
    for k in 0..library.len() {
        for n in 0..library.template(k).len() {
            missing_slots[library.slot(perm[k], n)] = pred.missing_slots[library.slot(k, n)];
        }
    }
    Prediction {
        point_object,
        point_slot,
        missing_slots,
    }
}

/// Ground-truth partition of the N slot elements.
pub fn ground_truth_partition(scene: &Scene, library: &TemplateLibrary) -> LabeledPartition {
    let mut labels = vec![0usize; library.total_parts()];
    for s in 0..library.total_parts() {
        if !scene.missing_mask()[s] {
            let (k, _) = library.slot_to_part(s);
            labels[s] = k + 1;
        }
    }
    LabeledPartition::new(labels)
}

/// Predicted partition over the same elements: observed points carry the
/// claimed template of the (canonicalized) prediction; ground-truth-missing
/// units are non-zero exactly when the prediction claims their slot filled.
pub fn predicted_partition(
    scene: &Scene,
    canonical: &Prediction,
    library: &TemplateLibrary,
) -> LabeledPartition {
    let n = library.total_parts();
    let mut labels = vec![0usize; n];
    for s in 0..n {
        if scene.missing_mask()[s] && !canonical.missing_slots[s] {
            let (k, _) = library.slot_to_part(s);
            labels[s] = k + 1;
        }
    }
    for (i, obj) in canonical.point_object.iter().enumerate() {
        labels[scene.gt_slot(i)] = obj.map_or(0, |k| k + 1);
    }
    LabeledPartition::new(labels)
}

/// Both partitions for a scene, with the prediction canonicalized.
pub fn scene_partitions(
    scene: &Scene,
    pred: &Prediction,
    library: &TemplateLibrary,
) -> (LabeledPartition, LabeledPartition) {
    let canonical = canonicalize_prediction(pred, library);
    (
        ground_truth_partition(scene, library),
        predicted_partition(scene, &canonical, library),
    )
}

/// Interchangeable block-label groups (template shape groups shifted to
/// 1-based block labels).
pub fn interchangeable_blocks(library: &TemplateLibrary) -> Vec<Vec<usize>> {
    library
        .shape_groups()
        .into_iter()
        .map(|g| g.into_iter().map(|k| k + 1).collect())
        .collect()
}

/// All per-scene metric values, under both universe conventions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneMetrics {
    /// Observed point count M.
    pub observed: usize,
    /// Universe size N.
    pub universe: usize,
    pub vi: f64,
    pub ari: f64,
    pub sa: f64,
    pub scene_acc: f64,
    /// Matching weight over the ground-truth-observed universe.
    pub mask_weight: f64,
    pub vi_mask: f64,
    pub ari_mask: f64,
    pub sa_mask: f64,
    pub scene_acc_mask: f64,
}

/// Evaluate a prediction against a scene's ground truth.
pub fn evaluate_scene(
    scene: &Scene,
    pred: &Prediction,
    library: &TemplateLibrary,
) -> Result<SceneMetrics, MetricsError> {
    let (v, vhat) = scene_partitions(scene, pred, library);
    let groups = interchangeable_blocks(library);
    let vi = variation_of_information(&v, &vhat)?;
    let ari = adjusted_rand_index(&v, &vhat)?;
    let sa = segmentation_accuracy(&v, &vhat, SaConvention::FullUniverse)?;
    let scene_acc = scene_accuracy(&v, &vhat, &groups)?;

    let (mv, mvhat) = restrict_to_observed(&v, &vhat)?;
    let mask_weight = max_weight_matching(&contingency(&mv, &mvhat)).total;
    let m = mv.len().max(1) as f64;
    Ok(SceneMetrics {
        observed: scene.observed(),
        universe: library.total_parts(),
        vi,
        ari,
        sa,
        scene_acc: if scene_acc { 1.0 } else { 0.0 },
        mask_weight,
        vi_mask: variation_of_information(&mv, &mvhat)?,
        ari_mask: adjusted_rand_index(&mv, &mvhat)?,
        sa_mask: mask_weight / m,
        scene_acc_mask: if scene_accuracy(&mv, &mvhat, &groups)? {
            1.0
        } else {
            0.0
        },
    })
}

/// Dataset-level averages. Masked segmentation accuracy follows the
/// ratio-of-sums convention `Σ W_i / Σ M_i`; everything else is the
/// arithmetic mean across scenes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetSummary {
    pub scenes: usize,
    pub vi: f64,
    pub ari: f64,
    pub sa: f64,
    pub scene_acc: f64,
    pub vi_mask: f64,
    pub ari_mask: f64,
    /// Ratio of sums (the masked-convention average).
    pub sa_mask: f64,
    /// Mean of per-scene ratios, for comparison.
    pub sa_mask_mean: f64,
    pub scene_acc_mask: f64,
}

pub fn dataset_summary(rows: &[SceneMetrics]) -> Result<DatasetSummary, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&SceneMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let weight_sum: f64 = rows.iter().map(|r| r.mask_weight).sum();
    let observed_sum: f64 = rows.iter().map(|r| r.observed as f64).sum();
    Ok(DatasetSummary {
        scenes: rows.len(),
        vi: mean(|r| r.vi),
        ari: mean(|r| r.ari),
        sa: mean(|r| r.sa),
        scene_acc: mean(|r| r.scene_acc),
        vi_mask: mean(|r| r.vi_mask),
        ari_mask: mean(|r| r.ari_mask),
        sa_mask: weight_sum / observed_sum,
        sa_mask_mean: mean(|r| r.sa_mask),
        scene_acc_mask: mean(|r| r.scene_acc_mask),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn part(labels: &[usize]) -> LabeledPartition {
        LabeledPartition::new(labels.to_vec())
    }

    #[test]
    fn vi_identical_is_zero() {
        let v = part(&[1, 1, 2, 2, 0]);
        assert_eq!(variation_of_information(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn vi_one_block_vs_singletons_is_ln3() {
        let v = part(&[1, 1, 1]);
        let vhat = part(&[1, 2, 3]);
        let vi = variation_of_information(&v, &vhat).unwrap();
        assert_relative_eq!(vi, 3.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn vi_is_symmetric() {
        let v = part(&[1, 1, 2, 0, 2, 3]);
        let vhat = part(&[2, 1, 1, 0, 3, 3]);
        assert_relative_eq!(
            variation_of_information(&v, &vhat).unwrap(),
            variation_of_information(&vhat, &v).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn vi_rejects_mismatched_universes() {
        let v = part(&[1, 1]);
        let vhat = part(&[1, 1, 1]);
        assert!(matches!(
            variation_of_information(&v, &vhat),
            Err(MetricsError::MismatchedUniverse { left: 2, right: 3 })
        ));
    }

    #[test]
    fn ari_identical_is_one() {
        let v = part(&[1, 1, 2, 2, 0, 3]);
        assert_relative_eq!(adjusted_rand_index(&v, &v).unwrap(), 1.0);
    }

    #[test]
    fn ari_crossed_pairs_example() {
        // {ab}{cd} vs {ac}{bd}: all six pairs disagree beyond chance.
        let v = part(&[1, 1, 2, 2]);
        let vhat = part(&[1, 2, 1, 2]);
        assert_relative_eq!(adjusted_rand_index(&v, &vhat).unwrap(), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn ari_single_blocks_degenerate_case() {
        let v = part(&[1, 1, 1]);
        let vhat = part(&[2, 2, 2]);
        assert_relative_eq!(adjusted_rand_index(&v, &vhat).unwrap(), 1.0);
    }

    #[test]
    fn ari_is_relabel_invariant() {
        let v = part(&[1, 1, 2, 2, 3]);
        let vhat = part(&[3, 3, 1, 1, 2]);
        assert_relative_eq!(adjusted_rand_index(&v, &vhat).unwrap(), 1.0);
    }

    fn exhaustive_matching(weights: &DMatrix<f64>) -> f64 {
        // Try every injective row→column map (square-padded by recursion).
        fn rec(weights: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == weights.nrows() {
                return 0.0;
            }
            let mut best = rec(weights, row + 1, used); // row unmatched
            for j in 0..weights.ncols() {
                if !used[j] {
                    used[j] = true;
                    let w = weights[(row, j)] + rec(weights, row + 1, used);
                    used[j] = false;
                    best = best.max(w);
                }
            }
            best
        }
        let mut used = vec![false; weights.ncols()];
        rec(weights, 0, &mut used)
    }

    #[test]
    fn hungarian_matches_exhaustive_fixed_cases() {
        let cases = [
            DMatrix::from_row_slice(3, 3, &[8.0, 5.0, 9.0, 4.0, 2.0, 4.0, 7.0, 3.0, 8.0]),
            DMatrix::from_row_slice(2, 4, &[1.0, 9.0, 2.0, 3.0, 9.0, 1.0, 2.0, 3.0]),
            DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 1.0, 0.0, 5.0, 5.0, 2.0, 7.0]),
            DMatrix::from_row_slice(1, 1, &[3.5]),
        ];
        for w in &cases {
            let m = max_weight_matching(w);
            assert_relative_eq!(m.total, exhaustive_matching(w), epsilon = 1e-9);
        }
    }

    #[test]
    fn sa_identical_is_one_under_both_conventions() {
        let v = part(&[1, 1, 2, 0, 0]);
        assert_relative_eq!(
            segmentation_accuracy(&v, &v, SaConvention::FullUniverse).unwrap(),
            1.0
        );
        assert_relative_eq!(
            segmentation_accuracy(&v, &v, SaConvention::GtMask).unwrap(),
            1.0
        );
    }

    #[test]
    fn sa_absorbs_block_relabeling() {
        let v = part(&[1, 1, 2, 2, 0]);
        let vhat = part(&[2, 2, 1, 1, 0]);
        assert_relative_eq!(
            segmentation_accuracy(&v, &vhat, SaConvention::FullUniverse).unwrap(),
            1.0
        );
    }

    #[test]
    fn sa_five_slot_toy_matches_exhaustive() {
        // One misassigned element out of five.
        let v = part(&[1, 1, 1, 2, 2]);
        let vhat = part(&[1, 1, 2, 2, 2]);
        let table = contingency(&v, &vhat);
        let expected = exhaustive_matching(&table) / 5.0;
        assert_relative_eq!(
            segmentation_accuracy(&v, &vhat, SaConvention::FullUniverse).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_relative_eq!(expected, 4.0 / 5.0);
    }

    #[test]
    fn scene_accuracy_examples() {
        let groups = vec![vec![1, 2]];
        let v = part(&[1, 1, 2, 2, 0, 0, 3]);
        assert!(scene_accuracy(&v, &v, &groups).unwrap());
        // Swapping the two square blocks is allowed...
        let swapped = part(&[2, 2, 1, 1, 0, 0, 3]);
        assert!(scene_accuracy(&v, &swapped, &groups).unwrap());
        // ...but swapping with the triangle block is not.
        let wrong = part(&[3, 3, 2, 2, 0, 0, 1]);
        assert!(!scene_accuracy(&v, &wrong, &groups).unwrap());
        // Moving a single element breaks exactness.
        let moved = part(&[1, 1, 2, 2, 0, 1, 3]);
        assert!(!scene_accuracy(&v, &moved, &groups).unwrap());
    }

    #[test]
    fn summary_single_scene_is_identity() {
        let row = SceneMetrics {
            observed: 7,
            universe: 11,
            vi: 0.25,
            ari: 0.5,
            sa: 0.75,
            scene_acc: 1.0,
            mask_weight: 6.0,
            vi_mask: 0.1,
            ari_mask: 0.6,
            sa_mask: 6.0 / 7.0,
            scene_acc_mask: 1.0,
        };
        let s = dataset_summary(&[row]).unwrap();
        assert_relative_eq!(s.vi, 0.25);
        assert_relative_eq!(s.sa, 0.75);
        assert_relative_eq!(s.sa_mask, 6.0 / 7.0);
        assert_relative_eq!(s.sa_mask_mean, 6.0 / 7.0);
    }

    #[test]
    fn summary_equal_m_scenes_average_the_same_way() {
        let mk = |sa: f64, w: f64, m: usize| SceneMetrics {
            observed: m,
            universe: 11,
            vi: 0.0,
            ari: 0.0,
            sa,
            scene_acc: sa,
            mask_weight: w,
            vi_mask: 0.0,
            ari_mask: 0.0,
            sa_mask: w / m as f64,
            scene_acc_mask: 0.0,
        };
        let s = dataset_summary(&[mk(1.0, 4.0, 4), mk(0.0, 0.0, 4)]).unwrap();
        assert_relative_eq!(s.sa, 0.5);
        assert_relative_eq!(s.sa_mask, 0.5);
        assert_relative_eq!(s.sa_mask_mean, 0.5);
    }

    #[test]
    fn summary_unequal_m_ratio_of_sums_differs_from_mean_of_ratios() {
        let mk = |w: f64, m: usize| SceneMetrics {
            observed: m,
            universe: 11,
            vi: 0.0,
            ari: 0.0,
            sa: 0.0,
            scene_acc: 0.0,
            mask_weight: w,
            vi_mask: 0.0,
            ari_mask: 0.0,
            sa_mask: w / m as f64,
            scene_acc_mask: 0.0,
        };
        // Scene A gets 2 of 4 right, scene B 8 of 8.
        let s = dataset_summary(&[mk(2.0, 4), mk(8.0, 8)]).unwrap();
        assert_relative_eq!(s.sa_mask, 10.0 / 12.0);
        assert_relative_eq!(s.sa_mask_mean, (0.5 + 1.0) / 2.0);
        assert!((s.sa_mask - s.sa_mask_mean).abs() > 1e-9);
    }

    #[test]
    fn summary_rejects_empty() {
        assert!(matches!(dataset_summary(&[]), Err(MetricsError::EmptyDataset)));
    }
}
