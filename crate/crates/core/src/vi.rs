//! Mean-field variational inference for the generative constellation model.
//!
//! The model: each template `k` carries a Gaussian pose prior
//! `y_k ~ N(μ₀, Λ₀⁻¹)`; an assignment matrix Z matches observed points to
//! (template, part) slots; an observed point assigned to slot `(k,n)` is
//! `N(F_kn·y_k, λ⁻¹ I₂)`. Two assignment priors are supported: a per-point
//! categorical (mixture) and a doubly-stochastic relaxation of the
//! permutation prior, which pads the responsibility matrix with dummy rows
//! for unobserved points and renormalizes with Sinkhorn-Knopp.
//!
//! Inference alternates closed-form Gaussian pose updates with assignment
//! updates, annealing the observation precision λ whenever the ELBO
//! converges, and keeps the best of several random restarts.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::TemplateLibrary;
use crate::metrics::Prediction;
use crate::sinkhorn::{sinkhorn_project, SinkhornError};

/// Smallest matrix entry fed to the Sinkhorn projection; exponentiated
/// log-responsibilities are floored here to avoid zero lines from underflow.
const ENTRY_FLOOR: f64 = 1e-300;

/// Assignment-prior structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    /// Doubly-stochastic relaxation of the permutation prior (GCM-DS).
    DoublyStochastic,
    /// Independent categorical assignment per observed point (GCM-GMM).
    Mixture,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViError {
    EmptyScene,
    Sinkhorn(SinkhornError),
}

impl fmt::Display for ViError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViError::EmptyScene => write!(f, "inference needs a non-empty scene"),
            ViError::Sinkhorn(e) => write!(f, "responsibility projection failed: {e}"),
        }
    }
}

impl From<SinkhornError> for ViError {
    fn from(e: SinkhornError) -> Self {
        ViError::Sinkhorn(e)
    }
}

/// Model hyperparameters: pose prior, assignment prior and observation
/// precision (the latter is annealed by [`run_vi`]).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPrior {
    pub mu0: Vector4<f64>,
    pub lambda0: Matrix4<f64>,
    /// Assignment prior entries `a_mnk`, rows = points plus dummies,
    /// columns = flattened slots.
    pub assignment: DMatrix<f64>,
    /// Observation precision λ.
    pub lambda: f64,
    pub lambda_max: f64,
}

impl ModelPrior {
    /// The standard prior: μ₀ = 0, Λ₀ = I, uniform assignment 1/N.
    pub fn uniform(library: &TemplateLibrary, lambda: f64) -> Self {
        let n = library.total_parts();
        Self {
            mu0: Vector4::zeros(),
            lambda0: Matrix4::identity(),
            assignment: DMatrix::from_element(n, n, 1.0 / n as f64),
            lambda,
            lambda_max: 1e4,
        }
    }
}

/// Expected assignments `r_mnk`. Rows cover the observed points, plus one
/// dummy row per unobserved slot under the doubly-stochastic prior.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    matrix: DMatrix<f64>,
    observed: usize,
    kind: PriorKind,
}

impl Responsibilities {
    pub fn new(matrix: DMatrix<f64>, observed: usize, kind: PriorKind) -> Self {
        Self {
            matrix,
            observed,
            kind,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn observed(&self) -> usize {
        self.observed
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    /// Total responsibility of point `m` for template `k`.
    pub fn object_mass(&self, library: &TemplateLibrary, m: usize, k: usize) -> f64 {
        let offset = library.offset(k);
        (0..library.template(k).len())
            .map(|n| self.matrix[(m, offset + n)])
            .sum()
    }

    /// Column mass of a slot restricted to observed rows.
    pub fn observed_column_mass(&self, slot: usize) -> f64 {
        (0..self.observed).map(|m| self.matrix[(m, slot)]).sum()
    }
}

/// Gaussian pose posterior `q(y_k) = N(μ_k, Λ_k⁻¹)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosePosterior {
    pub mu: Vector4<f64>,
    pub precision: Matrix4<f64>,
}

impl PosePosterior {
    pub fn covariance(&self) -> Matrix4<f64> {
        self.precision
            .cholesky()
            .expect("posterior precision is positive definite")
            .inverse()
    }
}

/// Update every pose posterior given responsibilities:
/// `Λ_k = Λ₀ + λ Σ_{m≤M,n} r_mnk F_knᵀF_kn` and
/// `μ_k = Λ_k⁻¹ (Λ₀μ₀ + λ Σ_{m≤M,n} r_mnk F_knᵀ x_m)`.
pub fn update_pose_posterior(
    points: &[Vector2<f64>],
    library: &TemplateLibrary,
    r: &Responsibilities,
    prior: &ModelPrior,
) -> Vec<PosePosterior> {
    let m_count = points.len().min(r.observed);
    let mut out = Vec::with_capacity(library.len());
    for (k, template) in library.templates().iter().enumerate() {
        let offset = library.offset(k);
        let mut precision = prior.lambda0;
        let mut rhs = prior.lambda0 * prior.mu0;
        for (n, predictor) in template.predictors().iter().enumerate() {
            let slot = offset + n;
            let mut mass = 0.0;
            let mut weighted_point = Vector2::zeros();
            for (m, x) in points.iter().enumerate().take(m_count) {
                let w = r.matrix[(m, slot)];
                mass += w;
                weighted_point += w * x;
            }
            precision += prior.lambda * mass * predictor.gram();
            rhs += prior.lambda * (predictor.matrix().transpose() * weighted_point);
        }
        let mu = precision
            .cholesky()
            .expect("Λ₀ positive definite keeps Λ_k positive definite")
            .solve(&rhs);
        out.push(PosePosterior { mu, precision });
    }
    out
}

/// Per-template quantities shared by the log-responsibility and ELBO
/// computations: predicted part images `F_kn μ_k` and the trace terms
/// `trace(F_knᵀF_kn Λ_k⁻¹)`, evaluated through the Cholesky factor of Λ_k.
struct Expectations {
    predicted: Vec<Vector2<f64>>,
    trace: Vec<f64>,
}

impl Expectations {
    fn compute(library: &TemplateLibrary, posteriors: &[PosePosterior]) -> Self {
        let n = library.total_parts();
        let mut predicted = Vec::with_capacity(n);
        let mut trace = Vec::with_capacity(n);
        for (k, template) in library.templates().iter().enumerate() {
            let chol = posteriors[k]
                .precision
                .cholesky()
                .expect("posterior precision is positive definite");
            let l = chol.l();
            for predictor in template.predictors() {
                predicted.push(predictor.apply_mu(&posteriors[k].mu));
                // trace(FᵀF Λ⁻¹) = ‖L⁻¹Fᵀ‖²_F with Λ = LLᵀ.
                let ft: Matrix4x2 = predictor.matrix().transpose();
                let solved = l
                    .solve_lower_triangular(&ft)
                    .expect("Cholesky factor is non-singular");
                trace.push(solved.norm_squared());
            }
        }
        Self { predicted, trace }
    }
}

type Matrix4x2 = nalgebra::Matrix4x2<f64>;

trait PredictorExt {
    fn apply_mu(&self, mu: &Vector4<f64>) -> Vector2<f64>;
}

impl PredictorExt for crate::geometry::PartPredictor {
    fn apply_mu(&self, mu: &Vector4<f64>) -> Vector2<f64> {
        self.matrix() * mu
    }
}

/// Log of the unnormalized assignment weights ρ.
///
/// Observed rows get `log a - log 2π + log λ - (λ/2)·E‖x - F y‖²` with the
/// expectation expanded as quadratic-plus-trace; dummy rows (only under the
/// doubly-stochastic prior) carry the prior `log a` unchanged.
pub fn update_log_rho(
    points: &[Vector2<f64>],
    library: &TemplateLibrary,
    posteriors: &[PosePosterior],
    prior: &ModelPrior,
    kind: PriorKind,
) -> DMatrix<f64> {
    let n = library.total_parts();
    let m_count = points.len();
    let rows = match kind {
        PriorKind::DoublyStochastic => n,
        PriorKind::Mixture => m_count,
    };
    let exp = Expectations::compute(library, posteriors);
    let ln_2pi = libm::log(2.0 * core::f64::consts::PI);
    let ln_lambda = libm::log(prior.lambda);
    let mut out = DMatrix::zeros(rows, n);
    for row in 0..rows {
        for slot in 0..n {
            let ln_a = libm::log(prior.assignment[(row, slot)]);
            out[(row, slot)] = if row < m_count {
                let diff = points[row] - exp.predicted[slot];
                ln_a - ln_2pi + ln_lambda
                    - 0.5 * prior.lambda * (diff.norm_squared() + exp.trace[slot])
            } else {
                ln_a
            };
        }
    }
    out
}

/// Normalize log-weights into responsibilities: per-row softmax under the
/// mixture prior, row-shifted exponentiation followed by Sinkhorn-Knopp
/// under the doubly-stochastic prior.
///
/// The projection runs on a best-effort budget: matrices whose assignment
/// weights force mass through near-zero entries converge only like
/// O(1/iterations), so the iterate at the cap is accepted rather than
/// aborting the inference (annealing resolves such contested states).
pub fn update_q_z(
    log_rho: &DMatrix<f64>,
    observed: usize,
    kind: PriorKind,
    sinkhorn_tol: f64,
    sinkhorn_max_iters: usize,
) -> Result<Responsibilities, ViError> {
    let (rows, cols) = log_rho.shape();
    let mut shifted = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let row_max = log_rho.row(i).max();
        for j in 0..cols {
            shifted[(i, j)] = libm::exp(log_rho[(i, j)] - row_max).max(ENTRY_FLOOR);
        }
    }
    let matrix = match kind {
        PriorKind::Mixture => {
            for i in 0..rows {
                let sum: f64 = shifted.row(i).iter().sum();
                for j in 0..cols {
                    shifted[(i, j)] /= sum;
                }
            }
            shifted
        }
        PriorKind::DoublyStochastic => {
            sinkhorn_project(&shifted, sinkhorn_tol, sinkhorn_max_iters)?.0
        }
    };
    Ok(Responsibilities::new(matrix, observed, kind))
}

/// Expected complete-data log likelihood `E_q[log p(X|Y,Z)]`.
pub fn expected_log_likelihood(
    points: &[Vector2<f64>],
    library: &TemplateLibrary,
    r: &Responsibilities,
    posteriors: &[PosePosterior],
    prior: &ModelPrior,
) -> f64 {
    let exp = Expectations::compute(library, posteriors);
    let ln_2pi = libm::log(2.0 * core::f64::consts::PI);
    let m_count = points.len().min(r.observed);
    let mut total = m_count as f64 * (libm::log(prior.lambda) - ln_2pi);
    for (m, x) in points.iter().enumerate().take(m_count) {
        for slot in 0..library.total_parts() {
            let w = r.matrix()[(m, slot)];
            if w > 0.0 {
                let diff = x - exp.predicted[slot];
                total -= 0.5 * prior.lambda * w * (diff.norm_squared() + exp.trace[slot]);
            }
        }
    }
    total
}

/// `Σ_k KL(q(y_k) ‖ p(y_k))` between Gaussian posteriors and the prior.
pub fn kl_poses(posteriors: &[PosePosterior], prior: &ModelPrior) -> f64 {
    let d = 4.0;
    let chol0 = prior
        .lambda0
        .cholesky()
        .expect("prior precision is positive definite");
    let ln_det0 = 2.0 * chol0.l().diagonal().map(libm::log).sum();
    let mut total = 0.0;
    for post in posteriors {
        let chol = post
            .precision
            .cholesky()
            .expect("posterior precision is positive definite");
        let ln_det = 2.0 * chol.l().diagonal().map(libm::log).sum();
        let diff = post.mu - prior.mu0;
        let quad = (prior.lambda0 * diff).dot(&diff);
        let trace = chol.solve(&prior.lambda0).trace();
        total += 0.5 * (ln_det - ln_det0 + quad + trace - d);
    }
    total
}

/// `KL(q(Z) ‖ p(Z)) = Σ r log(r/a)` with `0·log 0 = 0`, summed over all
/// rows of the responsibility matrix.
pub fn kl_assignments(r: &Responsibilities, prior: &ModelPrior) -> f64 {
    let mut total = 0.0;
    for i in 0..r.matrix().nrows() {
        for j in 0..r.matrix().ncols() {
            let v = r.matrix()[(i, j)];
            if v > 0.0 {
                total += v * libm::log(v / prior.assignment[(i, j)]);
            }
        }
    }
    total
}

/// Evidence lower bound: expected log likelihood minus both KL terms.
pub fn elbo(
    points: &[Vector2<f64>],
    library: &TemplateLibrary,
    r: &Responsibilities,
    posteriors: &[PosePosterior],
    prior: &ModelPrior,
) -> f64 {
    expected_log_likelihood(points, library, r, posteriors, prior)
        - kl_poses(posteriors, prior)
        - kl_assignments(r, prior)
}

/// Configuration for [`run_vi`].
#[derive(Clone, Debug, PartialEq)]
pub struct ViConfig {
    pub prior_kind: PriorKind,
    pub lambda_init: f64,
    pub lambda_max: f64,
    pub anneal_factor: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Iteration cap per annealing stage.
    pub max_cycles_per_stage: usize,
    /// Relative ELBO change that counts as converged.
    pub elbo_rel_tol: f64,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iters: usize,
    /// Extra initializations allowed by the sparsity re-run rule.
    pub sparsity_retries: usize,
}

impl ViConfig {
    pub fn new(prior_kind: PriorKind, seed: u64) -> Self {
        Self {
            prior_kind,
            lambda_init: 500.0,
            lambda_max: 1e4,
            anneal_factor: 10.0,
            restarts: 5,
            seed,
            max_cycles_per_stage: 200,
            elbo_rel_tol: 1e-6,
            sinkhorn_tol: 1e-8,
            sinkhorn_max_iters: 2000,
            sparsity_retries: 5,
        }
    }

    pub fn with_lambda_init(mut self, lambda_init: f64) -> Self {
        self.lambda_init = lambda_init;
        self
    }
}

/// Outcome of [`run_vi`]: the selected restart's responsibilities, pose
/// posteriors and ELBO trace.
#[derive(Clone, Debug)]
pub struct ViResult {
    pub responsibilities: Responsibilities,
    pub posteriors: Vec<PosePosterior>,
    pub elbo_trace: Vec<f64>,
    /// Indices into `elbo_trace` where λ was annealed.
    pub anneal_cycles: Vec<usize>,
    pub final_elbo: f64,
    pub restarts_used: usize,
    pub converged: bool,
    /// True when every allowed initialization violated the sparsity rule.
    pub degenerate: bool,
}

struct SingleRun {
    responsibilities: Responsibilities,
    posteriors: Vec<PosePosterior>,
    elbo_trace: Vec<f64>,
    anneal_cycles: Vec<usize>,
    final_elbo: f64,
    converged: bool,
    degenerate: bool,
}

fn init_responsibilities(
    rng: &mut ChaCha8Rng,
    n: usize,
    observed: usize,
    kind: PriorKind,
    cfg: &ViConfig,
) -> Result<Responsibilities, ViError> {
    let rows = match kind {
        PriorKind::DoublyStochastic => n,
        PriorKind::Mixture => observed,
    };
    let mut matrix = DMatrix::zeros(rows, n);
    for i in 0..rows {
        for j in 0..n {
            matrix[(i, j)] = rng.random::<f64>().max(ENTRY_FLOOR);
        }
    }
    match kind {
        PriorKind::DoublyStochastic => Ok(Responsibilities::new(
            sinkhorn_project(&matrix, cfg.sinkhorn_tol, cfg.sinkhorn_max_iters)?.0,
            observed,
            kind,
        )),
        PriorKind::Mixture => {
            for i in 0..rows {
                let sum: f64 = matrix.row(i).iter().sum();
                for j in 0..n {
                    matrix[(i, j)] /= sum;
                }
            }
            Ok(Responsibilities::new(matrix, observed, kind))
        }
    }
}

/// The §-style sparsity violation: some template strongly claims a point
/// (r > 0.9 on an observed row) yet explains less than two points' worth of
/// observed mass.
pub fn violates_sparsity(r: &Responsibilities, library: &TemplateLibrary) -> bool {
    for k in 0..library.len() {
        let offset = library.offset(k);
        let len = library.template(k).len();
        let mut peak = 0.0f64;
        let mut mass = 0.0;
        for m in 0..r.observed() {
            for n in 0..len {
                let v = r.matrix()[(m, offset + n)];
                peak = peak.max(v);
                mass += v;
            }
        }
        if peak > 0.9 && mass < 2.0 {
            return true;
        }
    }
    false
}

fn run_single(
    points: &[Vector2<f64>],
    library: &TemplateLibrary,
    cfg: &ViConfig,
    stream: u64,
) -> Result<SingleRun, ViError> {
    let n = library.total_parts();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut r = init_responsibilities(&mut rng, n, points.len(), cfg.prior_kind, cfg)?;
    let mut prior = ModelPrior::uniform(library, cfg.lambda_init);
    prior.lambda_max = cfg.lambda_max;

    let mut elbo_trace = Vec::new();
    let mut anneal_cycles = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    let mut stage_cycles = 0;
    let posteriors;
    let converged;
    loop {
        let current = update_pose_posterior(points, library, &r, &prior);
        let log_rho = update_log_rho(points, library, &current, &prior, cfg.prior_kind);
        r = update_q_z(
            &log_rho,
            points.len(),
            cfg.prior_kind,
            cfg.sinkhorn_tol,
            cfg.sinkhorn_max_iters,
        )?;
        let value = elbo(points, library, &r, &current, &prior);
        elbo_trace.push(value);
        stage_cycles += 1;

        let stage_converged = (value - previous).abs() <= cfg.elbo_rel_tol * previous.abs().max(1.0);
        previous = value;
        if stage_converged || stage_cycles >= cfg.max_cycles_per_stage {
            if prior.lambda < cfg.lambda_max {
                prior.lambda = (prior.lambda * cfg.anneal_factor).min(cfg.lambda_max);
                anneal_cycles.push(elbo_trace.len());
                previous = f64::NEG_INFINITY;
                stage_cycles = 0;
            } else {
                converged = stage_converged;
                posteriors = current;
                break;
            }
        }
    }
    let final_elbo = *elbo_trace.last().expect("at least one cycle ran");
    let degenerate = violates_sparsity(&r, library);
    Ok(SingleRun {
        responsibilities: r,
        posteriors,
        elbo_trace,
        anneal_cycles,
        final_elbo,
        converged,
        degenerate,
    })
}

/// Run annealed variational inference with restarts.
///
/// The best restart by final ELBO wins. If it violates the sparsity rule,
/// up to `sparsity_retries` fresh initializations are run and the best
/// non-degenerate result is returned; failing that, the best overall is
/// returned flagged degenerate.
pub fn run_vi(
    points: &[Vector2<f64>],
    library: &TemplateLibrary,
    cfg: &ViConfig,
) -> Result<ViResult, ViError> {
    if points.is_empty() {
        return Err(ViError::EmptyScene);
    }
    let mut runs: Vec<SingleRun> = Vec::new();
    for restart in 0..cfg.restarts.max(1) {
        runs.push(run_single(points, library, cfg, restart as u64)?);
    }
    let best_index = |runs: &[SingleRun], degenerate_ok: bool| -> Option<usize> {
        runs.iter()
            .enumerate()
            .filter(|(_, r)| degenerate_ok || !r.degenerate)
            .max_by(|(_, a), (_, b)| a.final_elbo.total_cmp(&b.final_elbo))
            .map(|(i, _)| i)
    };
    let mut extra = 0;
    while best_index(&runs, false).is_none() && extra < cfg.sparsity_retries {
        let stream = (cfg.restarts.max(1) + extra) as u64;
        runs.push(run_single(points, library, cfg, stream)?);
        extra += 1;
    }
    let restarts_used = runs.len();
    let (index, degenerate) = match best_index(&runs, false) {
        Some(i) => (i, false),
        None => (
            best_index(&runs, true).expect("at least one run exists"),
            true,
        ),
    };
    let chosen = runs.swap_remove(index);
    Ok(ViResult {
        responsibilities: chosen.responsibilities,
        posteriors: chosen.posteriors,
        elbo_trace: chosen.elbo_trace,
        anneal_cycles: chosen.anneal_cycles,
        final_elbo: chosen.final_elbo,
        restarts_used,
        converged: chosen.converged,
        degenerate,
    })
}

/// Turn responsibilities into a scene explanation.
///
/// Every observed point goes to the template with the largest total
/// responsibility (ties to the lowest index); templates keeping fewer than
/// two points are dissolved into the missing set; a slot counts as filled
/// when its observed-row column mass reaches 0.5 and its owner survived.
/// The second return value flags exact argmax ties.
pub fn extract_partition(
    r: &Responsibilities,
    library: &TemplateLibrary,
) -> (Prediction, bool) {
    let m_count = r.observed();
    let n = library.total_parts();
    let mut tie_broken = false;
    let mut point_object: Vec<Option<usize>> = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let mut best_k = 0;
        let mut best_mass = f64::NEG_INFINITY;
        for k in 0..library.len() {
            let mass = r.object_mass(library, m, k);
            if mass > best_mass {
                best_mass = mass;
                best_k = k;
            } else if mass == best_mass {
                tie_broken = true;
            }
        }
        point_object.push(Some(best_k));
    }

    let mut counts = vec![0usize; library.len()];
    for obj in point_object.iter().flatten() {
        counts[*obj] += 1;
    }
    let dissolved: Vec<bool> = counts.iter().map(|&c| c < 2).collect();
    for obj in point_object.iter_mut() {
        if let Some(k) = obj {
            if dissolved[*k] {
                *obj = None;
            }
        }
    }

    let mut point_slot: Vec<Option<(usize, usize)>> = Vec::with_capacity(m_count);
    for (m, obj) in point_object.iter().enumerate() {
        point_slot.push(obj.map(|k| {
            let offset = library.offset(k);
            let mut best_n = 0;
            let mut best = f64::NEG_INFINITY;
            for nn in 0..library.template(k).len() {
                let v = r.matrix()[(m, offset + nn)];
                if v > best {
                    best = v;
                    best_n = nn;
                }
            }
            (k, best_n)
        }));
    }

    let mut missing_slots = vec![true; n];
    for slot in 0..n {
        let (k, _) = library.slot_to_part(slot);
        if !dissolved[k] && r.observed_column_mass(slot) >= 0.5 {
            missing_slots[slot] = false;
        }
    }
    (
        Prediction {
            point_object,
            point_slot,
            missing_slots,
        },
        tie_broken,
    )
}
