//! Random constellation scenes: presence sampling, template-noise
//! corruption, similarity posing and isotropic normalization into [-1,1]².
//!
//! Generation is reproducible: every scene derives three independent
//! ChaCha streams (presence, template noise, poses) from its own seed, so
//! changing σ alters coordinates but never the presence pattern or the
//! sampled poses, and datasets may be generated in parallel per scene.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::Vector2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Part, Pose, TemplateLibrary};

/// Configuration for the scene generator.
///
/// The defaults reproduce the benchmark protocol: each template present
/// independently with probability 0.5, poses drawn uniformly (translation
/// in [-3,3]², rotation in [-π,π], scale in [0.5,1.5]) and 512 draws per
/// dataset. Pose ranges are largely immaterial after normalization.
#[derive(Clone, Debug)]
pub struct GenConfig {
    pub library: TemplateLibrary,
    pub presence_prob: f64,
    /// Standard deviation of the Gaussian corruption applied to template
    /// parts in the reference frame, before posing.
    pub sigma: f64,
    pub translation_range: (f64, f64),
    pub rotation_range: (f64, f64),
    pub scale_range: (f64, f64),
    /// Number of draws per dataset; empty scenes are dropped afterwards.
    pub draws: usize,
}

impl GenConfig {
    pub fn new(library: TemplateLibrary) -> Self {
        Self {
            library,
            presence_prob: 0.5,
            sigma: 0.0,
            translation_range: (-3.0, 3.0),
            rotation_range: (-core::f64::consts::PI, core::f64::consts::PI),
            scale_range: (0.5, 1.5),
            draws: 512,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    fn validate(&self) {
        assert!(
            (0.0..=1.0).contains(&self.presence_prob),
            "presence probability must lie in [0,1]"
        );
        assert!(self.sigma >= 0.0, "noise sigma must be nonnegative");
    }
}

impl Default for GenConfig {
    fn default() -> Self {
        Self::new(TemplateLibrary::constellation())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SceneError {
    LabelOutOfRange { point: usize, label: usize },
    MaskLength { expected: usize, found: usize },
    PointCount { expected: usize, found: usize },
    PoseCount { expected: usize, found: usize },
    PointOutOfRange { point: usize },
    UnsortedLabels { point: usize },
    PresentObjectMasked { template: usize },
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneError::LabelOutOfRange { point, label } => {
                write!(f, "point {point} has out-of-range label {label}")
            }
            SceneError::MaskLength { expected, found } => {
                write!(f, "missing mask has {found} entries, expected {expected}")
            }
            SceneError::PointCount { expected, found } => {
                write!(f, "scene has {found} points, mask implies {expected}")
            }
            SceneError::PoseCount { expected, found } => {
                write!(f, "scene has {found} poses, mask implies {expected}")
            }
            SceneError::PointOutOfRange { point } => {
                write!(f, "point {point} lies outside [-1,1]^2")
            }
            SceneError::UnsortedLabels { point } => {
                write!(f, "labels not in canonical object-major order at point {point}")
            }
            SceneError::PresentObjectMasked { template } => {
                write!(f, "template {template} has points but is masked missing")
            }
        }
    }
}

/// A generated scene: observed points with ground-truth bookkeeping.
///
/// Points are stored object-major (present templates ascending, parts in
/// template order), so point `i` of label `k` occupies the canonical slot
/// `offset(k) + (i - first point of k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    seed: u64,
    sigma: f64,
    points: Vec<Vector2<f64>>,
    labels: Vec<usize>,
    missing_mask: Vec<bool>,
    poses: Vec<Pose>,
    slots: Vec<usize>,
}

impl Scene {
    /// Rebuild a scene from its serialized fields, re-checking invariants.
    pub fn from_fields(
        library: &TemplateLibrary,
        seed: u64,
        sigma: f64,
        points: Vec<Vector2<f64>>,
        labels: Vec<usize>,
        missing_mask: Vec<bool>,
        poses: Vec<Pose>,
    ) -> Result<Self, SceneError> {
        let n = library.total_parts();
        if missing_mask.len() != n {
            return Err(SceneError::MaskLength {
                expected: n,
                found: missing_mask.len(),
            });
        }
        let observed = missing_mask.iter().filter(|m| !**m).count();
        if points.len() != observed || labels.len() != points.len() {
            return Err(SceneError::PointCount {
                expected: observed,
                found: points.len(),
            });
        }
        let present: Vec<usize> = (0..library.len())
            .filter(|&k| (0..library.template(k).len()).any(|nn| !missing_mask[library.slot(k, nn)]))
            .collect();
        if poses.len() != present.len() {
            return Err(SceneError::PoseCount {
                expected: present.len(),
                found: poses.len(),
            });
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.abs() <= 1.0 && p.y.abs() <= 1.0) {
                return Err(SceneError::PointOutOfRange { point: i });
            }
        }
        for (i, &l) in labels.iter().enumerate() {
            if l >= library.len() {
                return Err(SceneError::LabelOutOfRange { point: i, label: l });
            }
            if i > 0 && labels[i - 1] > l {
                return Err(SceneError::UnsortedLabels { point: i });
            }
        }
        for &l in &labels {
            if !present.contains(&l) {
                return Err(SceneError::PresentObjectMasked { template: l });
            }
        }
        let slots = canonical_slots(library, &labels);
        Ok(Self {
            seed,
            sigma,
            points,
            labels,
            missing_mask,
            poses,
            slots,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    /// Number of observed points `M`.
    pub fn observed(&self) -> usize {
        self.points.len()
    }

    /// Ground-truth template index per point.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Per flattened slot: true when the owning object is absent.
    pub fn missing_mask(&self) -> &[bool] {
        &self.missing_mask
    }

    /// Normalized generating pose per present template, ascending by
    /// template index.
    pub fn generating_poses(&self) -> &[Pose] {
        &self.poses
    }

    /// Present template indices, ascending.
    pub fn present_templates(&self, library: &TemplateLibrary) -> Vec<usize> {
        (0..library.len())
            .filter(|&k| {
                (0..library.template(k).len()).any(|n| !self.missing_mask[library.slot(k, n)])
            })
            .collect()
    }

    /// Canonical slot generated by point `i`.
    pub fn gt_slot(&self, i: usize) -> usize {
        self.slots[i]
    }

    pub fn gt_slots(&self) -> &[usize] {
        &self.slots
    }
}

fn canonical_slots(library: &TemplateLibrary, labels: &[usize]) -> Vec<usize> {
    let mut slots = Vec::with_capacity(labels.len());
    let mut run_start = 0;
    for (i, &k) in labels.iter().enumerate() {
        if i > 0 && labels[i - 1] != k {
            run_start = i;
        }
        slots.push(library.offset(k) + (i - run_start));
    }
    slots
}

/// Derive the seed for scene `index` of a dataset (counter splitting).
pub fn scene_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generate one scene, or `None` when no template is present.
///
/// Presence is sampled per template; present objects are then packed onto
/// the earliest identical templates (the two squares are interchangeable,
/// so scene labels are canonical). With σ > 0 the reference-frame parts are
/// corrupted first, then the sampled pose is applied, then the whole point
/// set is normalized.
pub fn generate_scene(cfg: &GenConfig, seed: u64) -> Option<Scene> {
    cfg.validate();
    let library = &cfg.library;
    let mut presence_rng = stream_rng(seed, 0);
    let mut noise_rng = stream_rng(seed, 1);
    let mut pose_rng = stream_rng(seed, 2);

    let raw_flags: Vec<bool> = (0..library.len())
        .map(|_| presence_rng.random_bool(cfg.presence_prob))
        .collect();
    let mut flags = alloc::vec![false; library.len()];
    for group in library.shape_groups() {
        let count = group.iter().filter(|&&k| raw_flags[k]).count();
        for &k in group.iter().take(count) {
            flags[k] = true;
        }
    }
    if !flags.iter().any(|&f| f) {
        return None;
    }

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut poses = Vec::new();
    for (k, template) in library.templates().iter().enumerate() {
        if !flags[k] {
            continue;
        }
        let tx = pose_rng.random_range(cfg.translation_range.0..=cfg.translation_range.1);
        let ty = pose_rng.random_range(cfg.translation_range.0..=cfg.translation_range.1);
        let angle = pose_rng.random_range(cfg.rotation_range.0..=cfg.rotation_range.1);
        let scale = pose_rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
        let pose = Pose::from_params(Vector2::new(tx, ty), scale, angle);
        for part in template.parts() {
            let reference = if cfg.sigma > 0.0 {
                let normal = Normal::new(0.0, cfg.sigma).expect("sigma validated");
                let p = part.position();
                Part::new(
                    p.x + normal.sample(&mut noise_rng),
                    p.y + normal.sample(&mut noise_rng),
                )
                .expect("corrupted part is finite")
            } else {
                *part
            };
            points.push(reference.predictor().apply(&pose));
            labels.push(k);
        }
        poses.push(pose);
    }

    let map = normalize_points(&mut points);
    for pose in &mut poses {
        *pose = map.apply_to_pose(pose);
    }

    let mut missing_mask = alloc::vec![true; library.total_parts()];
    for (k, template) in library.templates().iter().enumerate() {
        if flags[k] {
            for n in 0..template.len() {
                missing_mask[library.slot(k, n)] = false;
            }
        }
    }
    let slots = canonical_slots(library, &labels);
    Some(Scene {
        seed,
        sigma: cfg.sigma,
        points,
        labels,
        missing_mask,
        poses,
        slots,
    })
}

/// Generate `cfg.draws` scenes from a master seed, dropping empty draws.
pub fn generate_dataset(cfg: &GenConfig, master_seed: u64) -> Vec<Scene> {
    (0..cfg.draws as u64)
        .filter_map(|i| generate_scene(cfg, scene_seed(master_seed, i)))
        .collect()
}

/// The isotropic map `x ↦ α·x + b` applied by scene normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationMap {
    pub scale: f64,
    pub offset: Vector2<f64>,
}

impl NormalizationMap {
    /// Compose the map with a pose: poses transform as
    /// `(t, v) ↦ (α·t + b, α·v)` since the map is translation + isotropic
    /// scale.
    pub fn apply_to_pose(&self, pose: &Pose) -> Pose {
        let y = pose.vector();
        Pose::new(
            self.scale * y.x + self.offset.x,
            self.scale * y.y + self.offset.y,
            self.scale * y.z,
            self.scale * y.w,
        )
    }
}

/// Normalize points into [-1,1]² with a single isotropic scale and
/// translation: the bounding-box centre moves to the origin and the larger
/// side is divided by its half-extent, so similarity classes are preserved.
///
/// The per-coordinate form `(2(x - min) - extent) / d` keeps the extreme
/// coordinates at exactly ±1 in floating point.
pub fn normalize_points(points: &mut [Vector2<f64>]) -> NormalizationMap {
    if points.is_empty() {
        return NormalizationMap {
            scale: 1.0,
            offset: Vector2::zeros(),
        };
    }
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points.iter() {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let ex = max_x - min_x;
    let ey = max_y - min_y;
    let d = if ex.max(ey) > 0.0 { ex.max(ey) } else { 1.0 };
    for p in points.iter_mut() {
        p.x = (2.0 * (p.x - min_x) - ex) / d;
        p.y = (2.0 * (p.y - min_y) - ey) / d;
    }
    NormalizationMap {
        scale: 2.0 / d,
        offset: Vector2::new(-(2.0 * min_x + ex) / d, -(2.0 * min_y + ey) / d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::apply_pose;
    use approx::assert_relative_eq;
    use nalgebra::Vector4;

    fn forced_cfg() -> GenConfig {
        // Presence 1, identity poses: the scene is the normalized union of
        // all template corners.
        let mut cfg = GenConfig::default();
        cfg.presence_prob = 1.0;
        cfg.translation_range = (0.0, 0.0);
        cfg.rotation_range = (0.0, 0.0);
        cfg.scale_range = (1.0, 1.0);
        cfg
    }

    #[test]
    fn forced_full_scene_has_all_parts() {
        let cfg = forced_cfg();
        let scene = generate_scene(&cfg, 1).unwrap();
        assert_eq!(scene.observed(), 11);
        assert_eq!(scene.missing_mask().iter().filter(|m| **m).count(), 0);
        assert_eq!(scene.generating_poses().len(), 3);
        // Identity poses up to the shared normalization map.
        let lib = &cfg.library;
        for (pose, k) in scene.generating_poses().iter().zip(0..lib.len()) {
            let imgs: Vec<_> = lib
                .template(k)
                .parts()
                .iter()
                .map(|p| apply_pose(p, pose))
                .collect();
            let offset = lib.offset(k);
            for (n, img) in imgs.iter().enumerate() {
                let observed = scene.points()[offset + n];
                assert_relative_eq!((img - observed).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_presence_is_empty_marker() {
        let mut cfg = GenConfig::default();
        cfg.presence_prob = 0.0;
        assert!(generate_scene(&cfg, 42).is_none());
    }

    #[test]
    fn points_lie_inside_unit_box_exactly() {
        let cfg = GenConfig::default().with_sigma(0.25);
        for i in 0..64 {
            if let Some(scene) = generate_scene(&cfg, scene_seed(9, i)) {
                for p in scene.points() {
                    assert!(p.x.abs() <= 1.0 && p.y.abs() <= 1.0, "point {p} escapes");
                }
            }
        }
    }

    #[test]
    fn dataset_is_deterministic() {
        let cfg = GenConfig::default().with_sigma(0.1);
        let a = generate_dataset(&cfg, 7);
        let b = generate_dataset(&cfg, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn sigma_changes_coordinates_not_structure() {
        let clean = GenConfig::default();
        let noisy = GenConfig::default().with_sigma(0.25);
        let mut checked = 0;
        for i in 0..16 {
            let seed = scene_seed(3, i);
            let (a, b) = match (generate_scene(&clean, seed), generate_scene(&noisy, seed)) {
                (Some(a), Some(b)) => (a, b),
                (None, None) => continue,
                _ => panic!("presence pattern must not depend on sigma"),
            };
            assert_eq!(a.labels(), b.labels());
            assert_eq!(a.missing_mask(), b.missing_mask());
            assert_ne!(a.points(), b.points());
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn dataset_size_matches_binomial_oracle() {
        // P(empty draw) = (1/2)^3, so 512 draws keep 448 scenes on average;
        // [440, 470] is a ±3σ band around that.
        let cfg = GenConfig::default();
        let data = generate_dataset(&cfg, 7);
        assert!(
            (440..=470).contains(&data.len()),
            "got {} non-empty scenes",
            data.len()
        );
    }

    #[test]
    fn noise_free_objects_are_exact_template_images() {
        // Solve the pose from the first two points of each object and check
        // the remaining parts; the stored pose must agree with the solve.
        let cfg = GenConfig::default();
        let lib = cfg.library.clone();
        for i in 0..32 {
            let Some(scene) = generate_scene(&cfg, scene_seed(11, i)) else {
                continue;
            };
            for (pi, &k) in scene.present_templates(&lib).iter().enumerate() {
                let template = lib.template(k);
                let offset = lib.offset(k);
                let basis = template.basis_matrix(0, 1).unwrap();
                let first = (0..scene.observed())
                    .find(|&m| scene.gt_slot(m) == offset)
                    .unwrap();
                let x0 = scene.points()[first];
                let x1 = scene.points()[first + 1];
                let stacked = Vector4::new(x0.x, x0.y, x1.x, x1.y);
                let solved = basis.lu().solve(&stacked).unwrap();
                for n in 0..template.len() {
                    let predicted = apply_pose(template.part(n), &Pose::from_vector(solved));
                    let observed = scene.points()[first + n];
                    assert_relative_eq!((predicted - observed).norm(), 0.0, epsilon = 1e-9);
                }
                let stored = scene.generating_poses()[pi];
                assert_relative_eq!((solved - stored.vector()).norm(), 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn normalization_is_isotropic() {
        // A square of points stays square after normalization.
        let mut pts = alloc::vec![
            Vector2::new(2.0, 3.0),
            Vector2::new(4.0, 3.0),
            Vector2::new(4.0, 5.0),
            Vector2::new(2.0, 5.0),
            Vector2::new(10.0, 6.0),
        ];
        normalize_points(&mut pts);
        let side_a = (pts[1] - pts[0]).norm();
        let side_b = (pts[2] - pts[1]).norm();
        assert_relative_eq!(side_a, side_b, epsilon = 1e-12);
        assert_relative_eq!((pts[1] - pts[0]).dot(&(pts[2] - pts[1])), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_through_fields() {
        let cfg = GenConfig::default().with_sigma(0.1);
        let scene = generate_scene(&cfg, scene_seed(1, 0)).unwrap();
        let rebuilt = Scene::from_fields(
            &cfg.library,
            scene.seed(),
            scene.sigma(),
            scene.points().to_vec(),
            scene.labels().to_vec(),
            scene.missing_mask().to_vec(),
            scene.generating_poses().to_vec(),
        )
        .unwrap();
        assert_eq!(scene, rebuilt);
    }
}
