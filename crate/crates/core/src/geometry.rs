//! Templates, part predictors and similarity-pose algebra.
//!
//! A template is an ordered set of 2D reference-frame parts. A pose
//! `y = (t_x, t_y, s·cosθ, s·sinθ)` encodes a similarity transform
//! (translation, isotropic scale, clockwise rotation). Each part owns a
//! fixed 2×4 predictor matrix `F` such that `F·y` is the part's image in
//! scene coordinates, which makes the transform linear in the pose and a
//! two-part basis sufficient to solve for it exactly.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Matrix2x4, Matrix4, Vector2, Vector4};

/// Dimension of the pose vector for 2D similarity transforms.
pub const POSE_DIM: usize = 4;

/// Scale magnitudes below this are treated as degenerate (angle undefined).
pub const DEGENERATE_SCALE: f64 = 1e-12;

/// Condition numbers above this reject a basis matrix as singular.
pub const MAX_BASIS_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub enum GeometryError {
    /// A coordinate was NaN or infinite.
    NonFinite,
    /// Templates need at least two parts to determine a similarity pose.
    TooFewParts { found: usize },
    /// Two parts of a template coincide.
    CoincidentParts { first: usize, second: usize },
    /// Part index out of range for the template.
    PartIndex { index: usize, len: usize },
    /// Basis parts must be distinct indices.
    IdenticalBasisParts { index: usize },
    /// The stacked basis matrix is numerically singular.
    SingularBasis { condition: f64 },
    /// Pose has (numerically) zero scale; the rotation angle is undefined.
    DegenerateScale { scale: f64 },
    /// A template library must contain at least one template.
    EmptyLibrary,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::NonFinite => write!(f, "coordinate is not finite"),
            GeometryError::TooFewParts { found } => {
                write!(f, "template needs at least 2 parts, found {found}")
            }
            GeometryError::CoincidentParts { first, second } => {
                write!(f, "parts {first} and {second} coincide")
            }
            GeometryError::PartIndex { index, len } => {
                write!(f, "part index {index} out of range for {len} parts")
            }
            GeometryError::IdenticalBasisParts { index } => {
                write!(f, "basis part indices are both {index}")
            }
            GeometryError::SingularBasis { condition } => {
                write!(f, "basis matrix is singular (condition {condition:.3e})")
            }
            GeometryError::DegenerateScale { scale } => {
                write!(f, "pose scale {scale:.3e} too small to recover an angle")
            }
            GeometryError::EmptyLibrary => write!(f, "template library is empty"),
        }
    }
}

/// A template part: a point in the dimensionless reference frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Part {
    position: Vector2<f64>,
}

impl Part {
    pub fn new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self {
            position: Vector2::new(x, y),
        })
    }

    pub fn position(&self) -> Vector2<f64> {
        self.position
    }

    /// The 2×4 predictor matrix mapping poses to this part's image.
    pub fn predictor(&self) -> PartPredictor {
        PartPredictor::for_part(self)
    }
}

/// The fixed 2×4 matrix `F` with rows `[1,0,p_x,p_y]` and `[0,1,p_y,-p_x]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartPredictor {
    matrix: Matrix2x4<f64>,
}

impl PartPredictor {
    pub fn for_part(part: &Part) -> Self {
        let p = part.position;
        Self {
            matrix: Matrix2x4::new(1.0, 0.0, p.x, p.y, 0.0, 1.0, p.y, -p.x),
        }
    }

    pub fn matrix(&self) -> &Matrix2x4<f64> {
        &self.matrix
    }

    /// Image of the owning part under `pose`, i.e. `F·y`.
    pub fn apply(&self, pose: &Pose) -> Vector2<f64> {
        self.matrix * pose.vector()
    }

    /// `Fᵀ F`, the 4×4 Gram matrix used by the posterior updates.
    pub fn gram(&self) -> Matrix4<f64> {
        self.matrix.transpose() * self.matrix
    }
}

/// Construct the predictor matrix for a part.
pub fn part_predictor(part: &Part) -> PartPredictor {
    part.predictor()
}

/// Image of `part` under `pose` (translation + scaled clockwise rotation).
pub fn apply_pose(part: &Part, pose: &Pose) -> Vector2<f64> {
    part.predictor().apply(pose)
}

/// A 2D similarity transform as the 4-vector `(t_x, t_y, s·cosθ, s·sinθ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    y: Vector4<f64>,
}

/// Decomposed pose: translation, scale and clockwise rotation angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseParams {
    pub translation: Vector2<f64>,
    pub scale: f64,
    /// Clockwise rotation angle in (-π, π].
    pub angle: f64,
}

impl Pose {
    pub fn new(tx: f64, ty: f64, scos: f64, ssin: f64) -> Self {
        Self {
            y: Vector4::new(tx, ty, scos, ssin),
        }
    }

    pub fn from_vector(y: Vector4<f64>) -> Self {
        Self { y }
    }

    /// Assemble a pose from translation, scale and clockwise angle.
    pub fn from_params(translation: Vector2<f64>, scale: f64, angle: f64) -> Self {
        Self {
            y: Vector4::new(
                translation.x,
                translation.y,
                scale * libm::cos(angle),
                scale * libm::sin(angle),
            ),
        }
    }

    pub fn vector(&self) -> Vector4<f64> {
        self.y
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.y.x, self.y.y)
    }

    /// Implied scale `s = √(y₃² + y₄²)`.
    pub fn scale(&self) -> f64 {
        libm::hypot(self.y.z, self.y.w)
    }

    /// Recover `(t, s, θ)`. The angle uses the quadrant-aware two-argument
    /// arctangent so the full (-π, π] range survives the round trip.
    pub fn params(&self) -> Result<PoseParams, GeometryError> {
        let scale = self.scale();
        if scale < DEGENERATE_SCALE {
            return Err(GeometryError::DegenerateScale { scale });
        }
        Ok(PoseParams {
            translation: self.translation(),
            scale,
            angle: libm::atan2(self.y.w, self.y.z),
        })
    }
}

/// Recover translation, scale and angle from a pose vector.
pub fn pose_params(pose: &Pose) -> Result<PoseParams, GeometryError> {
    pose.params()
}

/// An ordered set of named parts with cached predictor matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    name: String,
    parts: Vec<Part>,
    predictors: Vec<PartPredictor>,
}

impl Template {
    pub fn new(name: impl Into<String>, parts: Vec<Part>) -> Result<Self, GeometryError> {
        if parts.len() < 2 {
            return Err(GeometryError::TooFewParts { found: parts.len() });
        }
        for i in 0..parts.len() {
            for j in (i + 1)..parts.len() {
                if parts[i].position == parts[j].position {
                    return Err(GeometryError::CoincidentParts { first: i, second: j });
                }
            }
        }
        let predictors = parts.iter().map(Part::predictor).collect();
        Ok(Self {
            name: name.into(),
            parts,
            predictors,
        })
    }

    /// Square of side 2 centred at the origin; the first two parts
    /// `(1,1), (1,-1)` double as the default pose basis.
    pub fn unit_square(name: impl Into<String>) -> Self {
        let corners = [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)];
        let parts = corners
            .iter()
            .map(|&(x, y)| Part::new(x, y).expect("square corners are finite"))
            .collect();
        Self::new(name, parts).expect("square template is valid")
    }

    /// Isosceles triangle with base 2 and height 2, shifted so its centroid
    /// sits at the origin. (The centre of a triangle is taken to be the
    /// centroid; the bounding-box centre would sit lower.)
    pub fn isosceles_triangle(name: impl Into<String>) -> Self {
        let cy = 2.0 / 3.0;
        let vertices = [(-1.0, -cy), (1.0, -cy), (0.0, 2.0 - cy)];
        let parts = vertices
            .iter()
            .map(|&(x, y)| Part::new(x, y).expect("triangle vertices are finite"))
            .collect();
        Self::new(name, parts).expect("triangle template is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of parts `N_k`.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn part(&self, n: usize) -> &Part {
        &self.parts[n]
    }

    pub fn predictors(&self) -> &[PartPredictor] {
        &self.predictors
    }

    pub fn predictor(&self, n: usize) -> &PartPredictor {
        &self.predictors[n]
    }

    /// Images of all parts under `pose`, in part order.
    pub fn apply(&self, pose: &Pose) -> Vec<Vector2<f64>> {
        self.predictors.iter().map(|f| f.apply(pose)).collect()
    }

    /// Whether two templates have identical part lists (interchangeable
    /// shapes; names are ignored).
    pub fn same_shape(&self, other: &Template) -> bool {
        self.parts == other.parts
    }

    /// The 4×4 basis matrix stacking the predictors of parts `n1` and `n2`.
    pub fn basis_matrix(&self, n1: usize, n2: usize) -> Result<Matrix4<f64>, GeometryError> {
        if n1 == n2 {
            return Err(GeometryError::IdenticalBasisParts { index: n1 });
        }
        for &n in &[n1, n2] {
            if n >= self.parts.len() {
                return Err(GeometryError::PartIndex {
                    index: n,
                    len: self.parts.len(),
                });
            }
        }
        let a = self.predictors[n1].matrix();
        let b = self.predictors[n2].matrix();
        #[rustfmt::skip]
        let basis = Matrix4::new(
            a[(0, 0)], a[(0, 1)], a[(0, 2)], a[(0, 3)],
            a[(1, 0)], a[(1, 1)], a[(1, 2)], a[(1, 3)],
            b[(0, 0)], b[(0, 1)], b[(0, 2)], b[(0, 3)],
            b[(1, 0)], b[(1, 1)], b[(1, 2)], b[(1, 3)],
        );
        let svd = basis.svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !condition.is_finite() || condition > MAX_BASIS_CONDITION {
            return Err(GeometryError::SingularBasis { condition });
        }
        Ok(basis)
    }
}

/// Construct the stacked basis matrix for two parts of a template.
pub fn basis_matrix(
    template: &Template,
    n1: usize,
    n2: usize,
) -> Result<Matrix4<f64>, GeometryError> {
    template.basis_matrix(n1, n2)
}

/// An ordered collection of templates with flattened part-slot indexing.
///
/// Slot `offset(k) + n` addresses part `n` of template `k`; the total slot
/// count is `N = Σ N_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateLibrary {
    templates: Vec<Template>,
    offsets: Vec<usize>,
    total_parts: usize,
}

impl TemplateLibrary {
    pub fn new(templates: Vec<Template>) -> Result<Self, GeometryError> {
        if templates.is_empty() {
            return Err(GeometryError::EmptyLibrary);
        }
        let mut offsets = Vec::with_capacity(templates.len());
        let mut total = 0;
        for t in &templates {
            offsets.push(total);
            total += t.len();
        }
        Ok(Self {
            templates,
            offsets,
            total_parts: total,
        })
    }

    /// The benchmark library: two squares and one triangle (N = 11).
    pub fn constellation() -> Self {
        Self::new(alloc::vec![
            Template::unit_square("square1"),
            Template::unit_square("square2"),
            Template::isosceles_triangle("triangle"),
        ])
        .expect("constellation library is valid")
    }

    /// Number of templates `K`.
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn template(&self, k: usize) -> &Template {
        &self.templates[k]
    }

    /// Total part count `N`.
    pub fn total_parts(&self) -> usize {
        self.total_parts
    }

    /// First flattened slot of template `k`.
    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// Flattened slot index of part `n` of template `k`.
    pub fn slot(&self, k: usize, n: usize) -> usize {
        debug_assert!(n < self.templates[k].len());
        self.offsets[k] + n
    }

    /// Inverse of [`TemplateLibrary::slot`].
    pub fn slot_to_part(&self, slot: usize) -> (usize, usize) {
        debug_assert!(slot < self.total_parts);
        let k = match self.offsets.binary_search(&slot) {
            Ok(k) => k,
            Err(next) => next - 1,
        };
        (k, slot - self.offsets[k])
    }

    /// Groups of template indices with identical part lists, in first-seen
    /// order. Templates in one group are physically indistinguishable.
    pub fn shape_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (k, t) in self.templates.iter().enumerate() {
            match groups
                .iter_mut()
                .find(|g| self.templates[g[0]].same_shape(t))
            {
                Some(g) => g.push(k),
                None => groups.push(alloc::vec![k]),
            }
        }
        groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn part(x: f64, y: f64) -> Part {
        Part::new(x, y).unwrap()
    }

    #[test]
    fn predictor_matrix_rows() {
        let f = part(0.0, 0.0).predictor();
        assert_eq!(
            *f.matrix(),
            Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
        );
        let f = part(1.0, 1.0).predictor();
        assert_eq!(
            *f.matrix(),
            Matrix2x4::new(1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, -1.0)
        );
        let f = part(2.0, -3.0).predictor();
        assert_eq!(
            *f.matrix(),
            Matrix2x4::new(1.0, 0.0, 2.0, -3.0, 0.0, 1.0, -3.0, -2.0)
        );
    }

    #[test]
    fn apply_pose_examples() {
        let y = Pose::new(2.0, 3.0, 1.0, 0.0);
        assert_eq!(apply_pose(&part(1.0, 1.0), &y), Vector2::new(3.0, 4.0));
        // A quarter turn must be clockwise: (1,0) lands on (0,-1).
        let y = Pose::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(apply_pose(&part(1.0, 0.0), &y), Vector2::new(0.0, -1.0));
        let y = Pose::new(0.0, 0.0, 2.0, 0.0);
        assert_eq!(apply_pose(&part(1.0, 1.0), &y), Vector2::new(2.0, 2.0));
    }

    #[test]
    fn pose_params_examples() {
        let p = Pose::new(0.0, 0.0, 2.0, 0.0).params().unwrap();
        assert_eq!(p.translation, Vector2::new(0.0, 0.0));
        assert_relative_eq!(p.scale, 2.0);
        assert_relative_eq!(p.angle, 0.0);

        let p = Pose::new(1.0, 2.0, 0.0, 1.0).params().unwrap();
        assert_eq!(p.translation, Vector2::new(1.0, 2.0));
        assert_relative_eq!(p.scale, 1.0, max_relative = 1e-15);
        assert_relative_eq!(p.angle, core::f64::consts::FRAC_PI_2);

        let p = Pose::new(0.0, 0.0, 1.0, 1.0).params().unwrap();
        assert_relative_eq!(p.scale, core::f64::consts::SQRT_2, max_relative = 1e-15);
        assert_relative_eq!(p.angle, core::f64::consts::FRAC_PI_4);
    }

    #[test]
    fn pose_params_rejects_zero_scale() {
        let err = Pose::new(1.0, 2.0, 0.0, 0.0).params().unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateScale { .. }));
    }

    #[test]
    fn pose_round_trip_reassembles() {
        // Recovered (t, s, θ) rebuilt through from_params must reproduce the
        // same images as the original pose.
        let poses = [
            Pose::new(0.5, -1.0, 0.3, 0.7),
            Pose::new(-2.0, 4.0, -1.2, 0.4),
            Pose::new(0.0, 0.0, -0.8, -0.9),
        ];
        let parts = [part(1.0, 1.0), part(-0.3, 2.0), part(0.0, -1.5)];
        for y in &poses {
            let p = y.params().unwrap();
            let rebuilt = Pose::from_params(p.translation, p.scale, p.angle);
            for q in &parts {
                let a = apply_pose(q, y);
                let b = apply_pose(q, &rebuilt);
                assert_relative_eq!(a.x, b.x, epsilon = 1e-10);
                assert_relative_eq!(a.y, b.y, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn apply_pose_is_linear_in_the_pose() {
        let p = part(0.7, -1.3);
        let y1 = Pose::new(1.0, -2.0, 0.5, 0.25);
        let y2 = Pose::new(-0.5, 0.75, -1.0, 2.0);
        let (a, b) = (1.7, -0.6);
        let combined = Pose::from_vector(a * y1.vector() + b * y2.vector());
        let lhs = apply_pose(&p, &combined);
        let rhs = a * apply_pose(&p, &y1) + b * apply_pose(&p, &y2);
        assert_relative_eq!(lhs.x, rhs.x, epsilon = 1e-12);
        assert_relative_eq!(lhs.y, rhs.y, epsilon = 1e-12);
    }

    #[test]
    fn basis_matrix_square_example() {
        let square = Template::unit_square("square");
        let b = square.basis_matrix(0, 1).unwrap();
        #[rustfmt::skip]
        let expected = Matrix4::new(
            1.0, 0.0, 1.0, 1.0,
            0.0, 1.0, 1.0, -1.0,
            1.0, 0.0, 1.0, -1.0,
            0.0, 1.0, -1.0, -1.0,
        );
        assert_eq!(b, expected);
    }

    #[test]
    fn basis_matrix_rejects_identical_parts() {
        let square = Template::unit_square("square");
        assert!(matches!(
            square.basis_matrix(2, 2),
            Err(GeometryError::IdenticalBasisParts { index: 2 })
        ));
        assert!(matches!(
            square.basis_matrix(0, 7),
            Err(GeometryError::PartIndex { .. })
        ));
    }

    #[test]
    fn basis_solve_recovers_pose() {
        let square = Template::unit_square("square");
        let b = square.basis_matrix(0, 1).unwrap();
        let y = Pose::new(0.3, -1.1, 0.9, -0.4);
        let p0 = apply_pose(square.part(0), &y);
        let p1 = apply_pose(square.part(1), &y);
        let stacked = Vector4::new(p0.x, p0.y, p1.x, p1.y);
        // B·y must reproduce the stacked images...
        let image = b * y.vector();
        assert_relative_eq!((image - stacked).norm(), 0.0, epsilon = 1e-12);
        // ...and solving the system must recover the pose.
        let recovered = b.lu().solve(&stacked).unwrap();
        assert_relative_eq!((recovered - y.vector()).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn template_validation() {
        assert!(matches!(
            Template::new("one", alloc::vec![part(0.0, 0.0)]),
            Err(GeometryError::TooFewParts { found: 1 })
        ));
        assert!(matches!(
            Template::new(
                "dup",
                alloc::vec![part(0.0, 0.0), part(1.0, 1.0), part(0.0, 0.0)]
            ),
            Err(GeometryError::CoincidentParts { first: 0, second: 2 })
        ));
        assert!(Part::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn triangle_is_centroid_centred() {
        let t = Template::isosceles_triangle("triangle");
        let sum: Vector2<f64> = t.parts().iter().map(|p| p.position()).sum();
        assert_relative_eq!(sum.norm(), 0.0, epsilon = 1e-15);
        // Base 2, height 2.
        let ps = t.parts();
        assert_relative_eq!((ps[0].position() - ps[1].position()).norm(), 2.0);
        let base_y = ps[0].position().y;
        assert_relative_eq!(ps[2].position().y - base_y, 2.0);
    }

    #[test]
    fn library_slots_and_groups() {
        let lib = TemplateLibrary::constellation();
        assert_eq!(lib.len(), 3);
        assert_eq!(lib.total_parts(), 11);
        assert_eq!(lib.slot(0, 0), 0);
        assert_eq!(lib.slot(1, 0), 4);
        assert_eq!(lib.slot(2, 2), 10);
        for s in 0..lib.total_parts() {
            let (k, n) = lib.slot_to_part(s);
            assert_eq!(lib.slot(k, n), s);
        }
        assert_eq!(
            lib.shape_groups(),
            alloc::vec![alloc::vec![0, 1], alloc::vec![2]]
        );
    }
}
