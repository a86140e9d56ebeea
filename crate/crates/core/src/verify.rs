//! Sampled numerical certificates for the structure of the augmented
//! Lagrangian dual.
//!
//! Each check evaluates the dual through the inner solver, compares against a
//! known bound or an independent oracle, and reports the worst violation next
//! to an explicit threshold. Thresholds add an allowance for inner-solve
//! inexactness; those allowances are engineering estimates and every
//! certificate names the rule it used in `threshold_rule`.
//!
//! The grid oracles ([`brute_min`] and the Moreau and conjugate checks) are
//! exhaustive searches and only run in dimension four or less.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Cholesky, DVector, Dyn};
use serde::Serialize;

use crate::atoms::AtomKind;
use crate::error::{check_dim, Error, Result};
use crate::ext_real::ExtReal;
use crate::inner::{InnerSettings, InnerSolution, SubproblemSolver};
use crate::problem::{operator_norm_sq, ProblemInstance};
use crate::rng::SplitMix64;

/// Largest number of points a grid may have.
pub const GRID_LIMIT: u128 = 10_000_000;
/// Largest dimension [`brute_min`] accepts.
pub const MAX_BRUTE_DIM: usize = 4;
/// Rounds of spacing-halving refinement after the exhaustive pass.
pub const REFINE_ROUNDS: u32 = 3;
/// Constant in the finite-difference threshold `C (h^2 + tol/h)`.
pub const FD_CONSTANT: f64 = 10.0;
/// Pairs closer than this fraction of the sampling radius are discarded.
pub const MIN_PAIR_FRACTION: f64 = 1e-3;
/// Random inner starts are drawn within this distance (per coordinate) of the
/// witness, or of the origin when there is none.
pub const START_SPREAD: f64 = 3.0;

const MAX_WITNESSES: usize = 5;

/// The outcome of one check on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub check_name: String,
    pub instance_name: String,
    pub num_samples: usize,
    pub worst_violation: f64,
    pub threshold: f64,
    pub threshold_rule: String,
    pub pass: bool,
    /// Up to five of the worst samples.
    pub witnesses: Vec<String>,
    pub rng_seed: Option<u64>,
    /// Check-specific measurements, such as the largest observed Lipschitz
    /// ratio or the number of skipped grid points.
    pub details: BTreeMap<String, f64>,
}

/// Collects per-sample violations and keeps the worst few.
struct Tally {
    worst: f64,
    samples: usize,
    top: Vec<(f64, String)>,
}

impl Tally {
    fn new() -> Self {
        Self {
            worst: f64::NEG_INFINITY,
            samples: 0,
            top: Vec::new(),
        }
    }

    fn add(&mut self, violation: f64, describe: impl FnOnce() -> String) {
        self.samples += 1;
        // NaN poisons the certificate.
        if violation.is_nan() || violation > self.worst {
            self.worst = if violation.is_nan() { f64::INFINITY } else { violation };
        }
        let key = if violation.is_nan() { f64::INFINITY } else { violation };
        if self.top.len() < MAX_WITNESSES || key > self.top.last().map_or(f64::NEG_INFINITY, |t| t.0) {
            self.top.push((key, describe()));
            self.top.sort_by(|a, b| b.0.total_cmp(&a.0));
            self.top.truncate(MAX_WITNESSES);
        }
    }

    fn finish(
        self,
        check: &str,
        pb: &ProblemInstance,
        threshold: f64,
        rule: &str,
        seed: Option<u64>,
        details: BTreeMap<String, f64>,
    ) -> Certificate {
        let worst = if self.samples == 0 { 0.0 } else { self.worst };
        Certificate {
            check_name: check.to_string(),
            instance_name: pb.name.clone(),
            num_samples: self.samples,
            worst_violation: worst,
            threshold,
            threshold_rule: rule.to_string(),
            pass: worst <= threshold,
            witnesses: self.top.into_iter().map(|t| t.1).collect(),
            rng_seed: seed,
            details,
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Inner solves for one instance, sharing the step size and split.
struct DualOracle<'a> {
    solver: SubproblemSolver<'a>,
    max_iter: usize,
}

impl<'a> DualOracle<'a> {
    fn new(pb: &'a ProblemInstance) -> Result<Self> {
        let defaults = InnerSettings::default();
        Ok(Self {
            solver: SubproblemSolver::new(pb, defaults.step_safety)?,
            max_iter: defaults.max_iter,
        })
    }

    fn solve(&self, lam: &DVector<f64>, tol: f64, x0: Option<&DVector<f64>>) -> Result<InnerSolution> {
        self.solver.solve(lam, tol, self.max_iter, x0)
    }

    fn value(&self, lam: &DVector<f64>, tol: f64) -> Result<f64> {
        self.solve(lam, tol, None)?
            .obj_value
            .finite()
            .ok_or_else(|| Error::InvalidProblem("inner solution left dom f".into()))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "inner tolerance must be positive, got {tol}"
        )))
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_finite() && radius > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "sampling radius must be positive, got {radius}"
        )))
    }
}

/// Estimated bound on `|A x+ - b|` error caused by an inner residual of
/// `tol`: the residual lives in the primal gradient space and maps back to
/// the constraint residual through `A` and the curvature `rho`.
pub fn gradient_error_budget(pb: &ProblemInstance, tol: f64) -> f64 {
    tol * (1.0 + operator_norm_sq(pb.a()).sqrt()) / pb.rho()
}

// ---------------------------------------------------------------------------
// Smoothness, gradient formula, concavity, invariance, domain

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessSettings {
    pub radius: f64,
    pub n_pairs: usize,
    pub tol_inner: f64,
    pub seed: u64,
    /// Pairs tested in addition to the random ones, for example pairs
    /// straddling a point where the inner active set changes.
    pub extra_pairs: Vec<(DVector<f64>, DVector<f64>)>,
}

impl SmoothnessSettings {
    pub fn new(radius: f64, n_pairs: usize, tol_inner: f64, seed: u64) -> Self {
        Self {
            radius,
            n_pairs,
            tol_inner,
            seed,
            extra_pairs: Vec::new(),
        }
    }

    /// Adds, for each anchor, a pair `anchor -/+ delta u` along a random unit
    /// direction `u`, with `delta` equal to the minimum pair distance.
    pub fn with_anchors(mut self, anchors: &[DVector<f64>]) -> Self {
        let mut rng = SplitMix64::new(self.seed ^ 0xA11C_0125);
        let delta = MIN_PAIR_FRACTION * self.radius;
        for a in anchors {
            let u = rng.ball_point(a.len(), 1.0);
            let u = if u.norm() > 0.0 {
                u.normalize()
            } else {
                DVector::from_element(a.len(), 1.0).normalize()
            };
            self.extra_pairs.push((a - &u * delta, a + &u * delta));
        }
        self
    }
}

/// Lipschitz constant of the dual gradient. Samples pairs from the ball of
/// the given radius and reports `max |g1 - g2| / |l1 - l2| - 1/rho`.
pub fn check_smoothness(pb: &ProblemInstance, settings: &SmoothnessSettings) -> Result<Certificate> {
    check_radius(settings.radius)?;
    check_tol(settings.tol_inner)?;
    if settings.n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be at least 1".into()));
    }
    let p = pb.num_constraints();
    for (a, b) in &settings.extra_pairs {
        check_dim("smoothness pair", p, a.len())?;
        check_dim("smoothness pair", p, b.len())?;
    }
    let oracle = DualOracle::new(pb)?;
    let min_dist = MIN_PAIR_FRACTION * settings.radius;
    let mut rng = SplitMix64::new(settings.seed);

    let mut pairs = Vec::with_capacity(settings.n_pairs + settings.extra_pairs.len());
    let mut rejected = 0usize;
    let mut attempts = 0usize;
    while pairs.len() < settings.n_pairs {
        attempts += 1;
        if attempts > 100 * settings.n_pairs + 100 {
            return Err(Error::Precondition("could not sample well-separated pairs".into()));
        }
        let l1 = rng.ball_point(p, settings.radius);
        let l2 = rng.ball_point(p, settings.radius);
        if (&l1 - &l2).norm() < min_dist {
            rejected += 1;
        } else {
            pairs.push((l1, l2));
        }
    }
    for (a, b) in &settings.extra_pairs {
        if (a - b).norm() < min_dist * (1.0 - 1e-12) {
            rejected += 1;
        } else {
            pairs.push((a.clone(), b.clone()));
        }
    }

    let inv_rho = 1.0 / pb.rho();
    let mut tally = Tally::new();
    let mut max_ratio = 0.0f64;
    let mut closest = f64::INFINITY;
    for (l1, l2) in &pairs {
        let g1 = oracle.solve(l1, settings.tol_inner, None)?.constraint_map;
        let g2 = oracle.solve(l2, settings.tol_inner, None)?.constraint_map;
        let dist = (l1 - l2).norm();
        closest = closest.min(dist);
        let ratio = (&g1 - &g2).norm() / dist;
        max_ratio = max_ratio.max(ratio);
        tally.add(ratio - inv_rho, || {
            format!(
                "lambda1={} lambda2={} ratio={ratio:.9e} bound={inv_rho:.9e}",
                fmt_vec(l1.as_slice()),
                fmt_vec(l2.as_slice())
            )
        });
    }

    let budget = gradient_error_budget(pb, settings.tol_inner);
    let threshold = 4.0 * budget / closest.max(min_dist) + 1e-9;
    let mut details = BTreeMap::new();
    details.insert("max_ratio".into(), max_ratio);
    details.insert("inverse_rho".into(), inv_rho);
    details.insert("rejected_pairs".into(), rejected as f64);
    details.insert("gradient_error_budget".into(), budget);
    details.insert("min_pair_distance".into(), closest);
    Ok(tally.finish(
        "smoothness",
        pb,
        threshold,
        "4 * tol * (1 + |A|) / rho / min_pair_distance + 1e-9",
        Some(settings.seed),
        details,
    ))
}

/// Central differences of the dual value against `A x+ - b`, coordinate by
/// coordinate, at each given multiplier.
pub fn check_gradient_fd(
    pb: &ProblemInstance,
    lam_samples: &[DVector<f64>],
    h: f64,
    tol_inner: f64,
) -> Result<Certificate> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "difference step must be positive, got {h}"
        )));
    }
    check_tol(tol_inner)?;
    let p = pb.num_constraints();
    let oracle = DualOracle::new(pb)?;
    let mut tally = Tally::new();
    for lam in lam_samples {
        check_dim("dual point", p, lam.len())?;
        let grad = oracle.solve(lam, tol_inner, None)?.constraint_map;
        let mut worst = 0.0f64;
        let mut worst_i = 0;
        let mut fd = DVector::zeros(p);
        for i in 0..p {
            let mut up = lam.clone();
            up[i] += h;
            let mut down = lam.clone();
            down[i] -= h;
            fd[i] = (oracle.value(&up, tol_inner)? - oracle.value(&down, tol_inner)?) / (2.0 * h);
            let err = (fd[i] - grad[i]).abs();
            if err > worst || err.is_nan() {
                worst = err;
                worst_i = i;
            }
        }
        tally.add(worst, || {
            format!(
                "lambda={} coord={worst_i} fd={:.9e} gradient={:.9e}",
                fmt_vec(lam.as_slice()),
                fd[worst_i],
                grad[worst_i]
            )
        });
    }
    let threshold = FD_CONSTANT * (h * h + tol_inner / h);
    let mut details = BTreeMap::new();
    details.insert("h".into(), h);
    Ok(tally.finish("gradient_fd", pb, threshold, "10 * (h^2 + tol / h)", None, details))
}

/// Midpoint concavity of the dual estimate over random pairs.
pub fn check_concavity(
    pb: &ProblemInstance,
    radius: f64,
    n_pairs: usize,
    tol_inner: f64,
    seed: u64,
) -> Result<Certificate> {
    check_radius(radius)?;
    check_tol(tol_inner)?;
    let p = pb.num_constraints();
    let oracle = DualOracle::new(pb)?;
    let mut rng = SplitMix64::new(seed);
    let mut tally = Tally::new();
    for _ in 0..n_pairs {
        let l1 = rng.ball_point(p, radius);
        let l2 = rng.ball_point(p, radius);
        let mid = (&l1 + &l2) * 0.5;
        let (v1, v2, vm) = (
            oracle.value(&l1, tol_inner)?,
            oracle.value(&l2, tol_inner)?,
            oracle.value(&mid, tol_inner)?,
        );
        let gap = 0.5 * (v1 + v2) - vm;
        tally.add(gap, || {
            format!(
                "lambda1={} lambda2={} midpoint_excess={gap:.9e}",
                fmt_vec(l1.as_slice()),
                fmt_vec(l2.as_slice())
            )
        });
    }
    Ok(tally.finish(
        "concavity",
        pb,
        3.0 * tol_inner + 1e-9,
        "3 * tol + 1e-9",
        Some(seed),
        BTreeMap::new(),
    ))
}

/// Runs the inner solver from several random starts at one multiplier and
/// compares the resulting `A x+ - b`. The spread of the `x+` themselves is
/// reported as `x_spread` to show whether the minimizer was genuinely
/// non-unique.
pub fn check_gradient_invariance(
    pb: &ProblemInstance,
    lam: &DVector<f64>,
    n_inits: usize,
    tol_inner: f64,
    seed: u64,
) -> Result<Certificate> {
    check_tol(tol_inner)?;
    check_dim("dual point", pb.num_constraints(), lam.len())?;
    if n_inits < 2 {
        return Err(Error::InvalidParameter("at least two starts are needed".into()));
    }
    let oracle = DualOracle::new(pb)?;
    let mut rng = SplitMix64::new(seed);
    let center = pb.witness().cloned().unwrap_or_else(|| DVector::zeros(pb.dim()));
    let mut sols = Vec::with_capacity(n_inits);
    for _ in 0..n_inits {
        let x0 = &center + rng.symmetric_vector(pb.dim()) * START_SPREAD;
        sols.push(oracle.solve(lam, tol_inner, Some(&x0))?);
    }
    let mut tally = Tally::new();
    let mut x_spread = 0.0f64;
    for i in 0..sols.len() {
        for j in (i + 1)..sols.len() {
            let gap = (&sols[i].constraint_map - &sols[j].constraint_map).norm();
            x_spread = x_spread.max((&sols[i].x_plus - &sols[j].x_plus).norm());
            tally.add(gap, || {
                format!(
                    "starts {i},{j}: x_i={} x_j={} constraint_map_gap={gap:.9e}",
                    fmt_vec(sols[i].x_plus.as_slice()),
                    fmt_vec(sols[j].x_plus.as_slice())
                )
            });
        }
    }
    let mut details = BTreeMap::new();
    details.insert("x_spread".into(), x_spread);
    details.insert("starts".into(), n_inits as f64);
    Ok(tally.finish("invariance", pb, 10.0 * tol_inner, "10 * tol", Some(seed), details))
}

/// Solves the inner problem at random multipliers of norm up to `radius` and
/// counts failures (divergence, iteration cap, non-finite value). Any failure
/// fails the certificate.
pub fn check_domain(
    pb: &ProblemInstance,
    radius: f64,
    n_samples: usize,
    tol_inner: f64,
    seed: u64,
) -> Result<Certificate> {
    check_radius(radius)?;
    check_tol(tol_inner)?;
    let oracle = DualOracle::new(pb)?;
    let mut rng = SplitMix64::new(seed);
    let mut tally = Tally::new();
    let mut max_iters = 0usize;
    let mut failures = 0usize;
    for _ in 0..n_samples {
        let lam = rng.ball_point(pb.num_constraints(), radius);
        let outcome = oracle.solve(&lam, tol_inner, None);
        let (failed, note) = match &outcome {
            Ok(sol) => {
                max_iters = max_iters.max(sol.iterations);
                (!sol.obj_value.is_finite(), format!("value={}", sol.obj_value))
            }
            Err(e) => (true, e.to_string()),
        };
        if matches!(outcome, Err(ref e) if !matches!(e, Error::MaxIterExceeded(_) | Error::DivergenceDetected { .. })) {
            return Err(outcome.unwrap_err());
        }
        failures += failed as usize;
        tally.add(failed as u8 as f64, || {
            format!("lambda={} {note}", fmt_vec(lam.as_slice()))
        });
    }
    let mut details = BTreeMap::new();
    details.insert("failures".into(), failures as f64);
    details.insert("max_inner_iterations".into(), max_iters as f64);
    details.insert("radius".into(), radius);
    Ok(tally.finish("domain", pb, 0.0, "no failed inner solves", Some(seed), details))
}

// ---------------------------------------------------------------------------
// Grid oracles

/// A rectangular grid with `points_per_axis` points from `lo` to `hi` on each
/// axis, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    points_per_axis: usize,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points_per_axis: usize) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidParameter(
                "grid bounds must have equal, positive length".into(),
            ));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
        {
            return Err(Error::InvalidParameter(
                "grid requires finite lo < hi on every axis".into(),
            ));
        }
        if points_per_axis < 3 {
            return Err(Error::InvalidParameter("grid needs at least 3 points per axis".into()));
        }
        let grid = Self {
            lo,
            hi,
            points_per_axis,
        };
        if grid.size() > GRID_LIMIT {
            return Err(Error::GridTooLarge {
                size: grid.size(),
                limit: GRID_LIMIT,
            });
        }
        Ok(grid)
    }

    /// The same interval on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, points_per_axis: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], points_per_axis)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn size(&self) -> u128 {
        (self.points_per_axis as u128).saturating_pow(self.dim() as u32)
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.points_per_axis - 1) as f64
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        let n = (self.points_per_axis - 1) as f64;
        self.lo[axis] + (self.hi[axis] - self.lo[axis]) * i as f64 / n
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, v)| self.lo[i] <= *v && *v <= self.hi[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteMinResult {
    pub point: Vec<f64>,
    pub value: ExtReal,
    /// Largest increase from the minimizer to a finite axis neighbour at the
    /// final refinement spacing; an estimate of the grid error.
    pub resolution: f64,
    /// Index of the best point of the exhaustive pass.
    pub coarse_index: Vec<usize>,
}

/// Exhaustive grid minimization followed by three rounds of local
/// refinement, each halving the spacing and searching the 5-point stencil per
/// axis around the incumbent. Ties keep the first point in scan order (first
/// axis fastest).
pub fn brute_min(mut objective: impl FnMut(&[f64]) -> ExtReal, grid: &GridSpec) -> Result<BruteMinResult> {
    let n = grid.dim();
    if n > MAX_BRUTE_DIM {
        return Err(Error::Precondition(format!(
            "brute-force search is limited to dimension {MAX_BRUTE_DIM}, got {n}"
        )));
    }
    if grid.size() > GRID_LIMIT {
        return Err(Error::GridTooLarge {
            size: grid.size(),
            limit: GRID_LIMIT,
        });
    }
    let m = grid.points_per_axis;
    let mut idx = vec![0usize; n];
    let mut x: Vec<f64> = (0..n).map(|a| grid.coord(a, 0)).collect();
    let mut best_val = ExtReal::PosInf;
    let mut best_idx = idx.clone();
    let mut best_x = x.clone();
    'scan: loop {
        let v = objective(&x);
        if v < best_val {
            best_val = v;
            best_idx.copy_from_slice(&idx);
            best_x.copy_from_slice(&x);
        }
        for a in 0..n {
            idx[a] += 1;
            if idx[a] < m {
                x[a] = grid.coord(a, idx[a]);
                continue 'scan;
            }
            idx[a] = 0;
            x[a] = grid.coord(a, 0);
        }
        break;
    }

    let stencil = 5usize.pow(n as u32);
    let mut spacing: Vec<f64> = (0..n).map(|a| grid.spacing(a)).collect();
    let mut trial = vec![0.0; n];
    for _ in 0..REFINE_ROUNDS {
        if !best_val.is_finite() {
            break;
        }
        spacing.iter_mut().for_each(|h| *h *= 0.5);
        let center = best_x.clone();
        for code in 0..stencil {
            let mut c = code;
            for a in 0..n {
                let offset = (c % 5) as f64 - 2.0;
                c /= 5;
                trial[a] = center[a] + offset * spacing[a];
            }
            if !grid.contains(&trial) {
                continue;
            }
            let v = objective(&trial);
            if v < best_val {
                best_val = v;
                best_x.copy_from_slice(&trial);
            }
        }
    }

    let mut resolution = if best_val.is_finite() { 0.0f64 } else { f64::INFINITY };
    if let ExtReal::Finite(best) = best_val {
        for a in 0..n {
            for sign in [-1.0, 1.0] {
                trial.copy_from_slice(&best_x);
                trial[a] += sign * spacing[a];
                if let ExtReal::Finite(v) = objective(&trial) {
                    resolution = resolution.max(v - best);
                }
            }
        }
    }

    Ok(BruteMinResult {
        point: best_x,
        value: best_val,
        resolution,
        coarse_index: best_idx,
    })
}

/// Value of the ordinary Lagrangian dual `phi(w) = inf_x f(x) + <w, Ax - b>`.
enum StandardDual<'a> {
    /// All of `f` is a quadratic with positive definite Hessian `H`:
    /// `phi(w) = c - 0.5 (g + A'w)' H^{-1} (g + A'w) - w'b`.
    Quadratic {
        pb: &'a ProblemInstance,
        factor: Cholesky<f64, Dyn>,
        linear: DVector<f64>,
        constant: f64,
    },
    /// Grid search over `x`.
    Grid { pb: &'a ProblemInstance, x_grid: GridSpec },
}

impl<'a> StandardDual<'a> {
    fn new(pb: &'a ProblemInstance, x_grid: Option<&GridSpec>) -> Result<Self> {
        let (prox_part, smooth) = pb.f().split_smooth();
        let all_smooth = prox_part.blocks().iter().all(|b| *b.atom.kind() == AtomKind::Zero);
        if all_smooth {
            if let Some(factor) = smooth.hessian().and_then(|h| Cholesky::new(h.clone())) {
                return Ok(StandardDual::Quadratic {
                    pb,
                    factor,
                    linear: smooth.linear().clone(),
                    constant: smooth.constant(),
                });
            }
        }
        match x_grid {
            Some(g) => {
                check_dim("x grid", pb.dim(), g.dim())?;
                Ok(StandardDual::Grid { pb, x_grid: g.clone() })
            }
            None => Err(Error::Precondition(
                "the ordinary dual has no closed form for this f; an x grid is required".into(),
            )),
        }
    }

    fn is_closed_form(&self) -> bool {
        matches!(self, StandardDual::Quadratic { .. })
    }

    /// `Some((phi(w), grid_resolution))`, or `None` when `phi(w) = -inf`.
    fn value(&self, w: &[f64]) -> Result<Option<(f64, f64)>> {
        match self {
            StandardDual::Quadratic {
                pb,
                factor,
                linear,
                constant,
            } => {
                let w = DVector::from_column_slice(w);
                let s = linear + pb.a().tr_mul(&w);
                let hinv_s = factor.solve(&s);
                Ok(Some((constant - 0.5 * s.dot(&hinv_s) - w.dot(pb.b()), 0.0)))
            }
            StandardDual::Grid { pb, x_grid } => {
                let wv = DVector::from_column_slice(w);
                let c = pb.a().tr_mul(&wv);
                let shift = -wv.dot(pb.b());
                let f = pb.f();
                let obj = |x: &[f64]| {
                    f.value_slice(x)
                        .add_f64(c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + shift)
                };
                let res = brute_min(obj, x_grid)?;
                let ExtReal::Finite(best) = res.value else {
                    return Err(Error::Precondition("x grid misses dom f entirely".into()));
                };
                // Minimizer pinned to the grid boundary with the objective still
                // decreasing outward inside dom f: treat as unbounded below.
                let m = x_grid.points_per_axis;
                let edge: Vec<f64> = (0..x_grid.dim())
                    .map(|a| x_grid.coord(a, res.coarse_index[a]))
                    .collect();
                let edge_val = obj(&edge);
                for a in 0..x_grid.dim() {
                    let step = match res.coarse_index[a] {
                        0 => -x_grid.spacing(a),
                        i if i == m - 1 => x_grid.spacing(a),
                        _ => continue,
                    };
                    let mut beyond = edge.clone();
                    beyond[a] += step;
                    if obj(&beyond) < edge_val {
                        return Ok(None);
                    }
                }
                Ok(Some((best, res.resolution)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoreauSettings {
    /// Grid over the envelope variable `w`, of dimension `p`.
    pub w_grid: GridSpec,
    /// Grid over `x` for the ordinary dual, unless it has a closed form.
    pub x_grid: Option<GridSpec>,
    pub tol_inner: f64,
}

/// Compares the Moreau envelope of the negated ordinary dual,
/// `M(lambda) = min_w -phi(w) + |w - lambda|^2 / (2 rho)`, found by grid
/// search, with the augmented dual estimate at the same `lambda`; the two
/// should sum to zero.
///
/// Grid points where `phi(w) = -inf` contribute `+inf` to the envelope
/// objective and are counted in `details.skipped_points`.
pub fn check_moreau_identity(
    pb: &ProblemInstance,
    lam_samples: &[DVector<f64>],
    settings: &MoreauSettings,
) -> Result<Certificate> {
    let p = pb.num_constraints();
    if p > 3 {
        return Err(Error::Precondition(format!(
            "Moreau identity check needs p <= 3 for the brute-force envelope, got p = {p}"
        )));
    }
    check_dim("w grid", p, settings.w_grid.dim())?;
    check_tol(settings.tol_inner)?;
    let phi = StandardDual::new(pb, settings.x_grid.as_ref())?;
    let oracle = DualOracle::new(pb)?;
    let rho = pb.rho();

    // -phi(w) and its grid error, memoized across samples; coarse w points are
    // shared by every lambda.
    let mut memo: HashMap<Vec<u64>, Option<(f64, f64)>> = HashMap::new();
    let mut skipped = 0usize;
    let mut failure: Option<Error> = None;
    let mut grid_bound = 0.0f64;
    let mut tally = Tally::new();

    for lam in lam_samples {
        check_dim("dual point", p, lam.len())?;
        let res = brute_min(
            |w| {
                if failure.is_some() {
                    return ExtReal::PosInf;
                }
                let key: Vec<u64> = w.iter().map(|v| v.to_bits()).collect();
                let entry = match memo.get(&key) {
                    Some(e) => *e,
                    None => match phi.value(w) {
                        Ok(e) => {
                            if e.is_none() {
                                skipped += 1;
                            }
                            memo.insert(key, e);
                            e
                        }
                        Err(err) => {
                            failure = Some(err);
                            None
                        }
                    },
                };
                match entry {
                    Some((phi_w, _)) => {
                        let dist2: f64 = w.iter().zip(lam.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                        ExtReal::Finite(-phi_w + dist2 / (2.0 * rho))
                    }
                    None => ExtReal::PosInf,
                }
            },
            &settings.w_grid,
        )?;
        if let Some(err) = failure.take() {
            return Err(err);
        }
        let ExtReal::Finite(envelope) = res.value else {
            return Err(Error::Precondition("ordinary dual is -inf on the whole w grid".into()));
        };
        let key: Vec<u64> = res.point.iter().map(|v| v.to_bits()).collect();
        let inner_res = memo.get(&key).copied().flatten().map_or(0.0, |e| e.1);
        grid_bound = grid_bound.max(res.resolution + inner_res);

        let phi_rho = oracle.value(lam, settings.tol_inner)?;
        let gap = (envelope + phi_rho).abs();
        tally.add(gap, || {
            format!(
                "lambda={} envelope={envelope:.9e} phi_rho={phi_rho:.9e} argmin_w={}",
                fmt_vec(lam.as_slice()),
                fmt_vec(&res.point)
            )
        });
    }

    let mut details = BTreeMap::new();
    details.insert("grid_bound".into(), grid_bound);
    details.insert("skipped_points".into(), skipped as f64);
    details.insert("closed_form_dual".into(), phi.is_closed_form() as u8 as f64);
    Ok(tally.finish(
        "moreau",
        pb,
        grid_bound + 3.0 * settings.tol_inner + 1e-9,
        "grid_bound + 3 * tol + 1e-9",
        None,
        details,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateSettings {
    pub x_grid: GridSpec,
    pub tol_inner: f64,
}

/// Checks `phi_rho(lambda) = -f_rho*(-A'lambda) - lambda'b` with
/// `f_rho = f + (rho/2)|A . - b|^2` and the conjugate computed as a grid
/// supremum over `x`.
pub fn check_conjugate_identity(
    pb: &ProblemInstance,
    lam_samples: &[DVector<f64>],
    settings: &ConjugateSettings,
) -> Result<Certificate> {
    let d = pb.dim();
    if d > 3 {
        return Err(Error::Precondition(format!(
            "conjugate identity check needs d <= 3 for the brute-force conjugate, got d = {d}"
        )));
    }
    check_dim("x grid", d, settings.x_grid.dim())?;
    check_tol(settings.tol_inner)?;
    let oracle = DualOracle::new(pb)?;
    let (a, b, rho, f) = (pb.a(), pb.b(), pb.rho(), pb.f());
    let p = pb.num_constraints();

    let mut grid_bound = 0.0f64;
    let mut tally = Tally::new();
    for lam in lam_samples {
        check_dim("dual point", p, lam.len())?;
        let y = -(a.tr_mul(lam));
        // f_rho*(y) = -min_x [f_rho(x) - y'x]
        let res = brute_min(
            |x| {
                let mut pen = 0.0;
                for i in 0..p {
                    let mut r = -b[i];
                    for (j, xj) in x.iter().enumerate() {
                        r += a[(i, j)] * xj;
                    }
                    pen += r * r;
                }
                let lin: f64 = y.iter().zip(x).map(|(u, v)| u * v).sum();
                f.value_slice(x).add_f64(0.5 * rho * pen - lin)
            },
            &settings.x_grid,
        )?;
        let ExtReal::Finite(min) = res.value else {
            return Err(Error::Precondition("x grid misses dom f entirely".into()));
        };
        grid_bound = grid_bound.max(res.resolution);
        let conj = -min;
        let phi_rho = oracle.value(lam, settings.tol_inner)?;
        let gap = (phi_rho + conj + lam.dot(b)).abs();
        tally.add(gap, || {
            format!(
                "lambda={} phi_rho={phi_rho:.9e} conjugate={conj:.9e} argmax_x={}",
                fmt_vec(lam.as_slice()),
                fmt_vec(&res.point)
            )
        });
    }
    let mut details = BTreeMap::new();
    details.insert("grid_bound".into(), grid_bound);
    Ok(tally.finish(
        "conjugate",
        pb,
        grid_bound + 3.0 * settings.tol_inner + 1e-9,
        "grid_bound + 3 * tol + 1e-9",
        None,
        details,
    ))
}

/// All points of `{lo, lo+1, ..., hi}^p`, first coordinate fastest.
pub fn integer_lattice(p: usize, lo: i32, hi: i32) -> Vec<DVector<f64>> {
    let mut out = vec![DVector::zeros(p)];
    for axis in 0..p {
        let mut next = Vec::with_capacity(out.len() * (hi - lo + 1) as usize);
        for v in lo..=hi {
            for base in &out {
                let mut pnt = base.clone();
                pnt[axis] = v as f64;
                next.push(pnt);
            }
        }
        out = next;
    }
    out
}
