//! The ALM subproblem `min_x L_rho(x, lambda)` by accelerated proximal
//! gradient.
//!
//! The objective is split as `g(x) + h(x)` where `g` collects the prox-friendly
//! blocks of `f` and
//!
//! ```text
//! h(x) = <lambda, Ax - b> + (rho/2)|Ax - b|^2 + (quadratic and linear parts of f)
//! ```
//!
//! is smooth with Lipschitz gradient `L = rho |A|^2 + curvature`. Iterations
//! use the fixed step `t = step_safety / L` with momentum and a function-value
//! restart: a step that would raise the objective is discarded and momentum is
//! reset, so accepted objective values never increase.
//!
//! Termination uses the prox-gradient residual at the accepted iterate,
//! `(1/t)|x - prox_{t g}(x - t grad h(x))|`. Because it is measured at the
//! actual step `t`, the same tolerance is stricter for problems with larger
//! `L`.
//!
//! When every block of `g` is polyhedral (zero, l1, box, nonneg) the solver
//! periodically guesses the active set from the iterate, solves the reduced
//! quadratic on the free coordinates with a minimum-norm Newton step, and
//! keeps the result if it lowers the objective. This only accelerates the
//! tail of ill-conditioned solves; a polished point is returned only when it
//! passes the same residual test.

use nalgebra::{DMatrix, DVector};

use crate::atoms::{AtomKind, CompositeFunction, SmoothQuadratic};
use crate::error::{check_dim, Error, Result};
use crate::ext_real::ExtReal;
use crate::problem::{operator_norm_sq, ProblemInstance};

/// Iterates whose norm exceeds `DIVERGENCE_FACTOR * (1 + |x0|)` abort the solve.
pub const DIVERGENCE_FACTOR: f64 = 1e12;
/// Iterations between active-set polish attempts.
pub const POLISH_EVERY: usize = 50;
/// Above this dimension the dense reduced Hessian is not formed.
const POLISH_MAX_DIM: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub x0: Option<DVector<f64>>,
    /// Fraction of `1/L` used as the step.
    pub step_safety: f64,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200_000,
            x0: None,
            step_safety: 0.99,
        }
    }
}

impl InnerSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inner tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("inner max_iter must be at least 1".into()));
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step_safety must lie in (0, 1], got {}",
                self.step_safety
            )));
        }
        Ok(())
    }
}

/// An approximate minimizer of `L_rho(., lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub x_plus: DVector<f64>,
    /// Prox-gradient residual at the solver's step.
    pub residual: f64,
    pub iterations: usize,
    /// `L_rho(x_plus, lambda)`.
    pub obj_value: ExtReal,
    /// `A x_plus - b`.
    pub constraint_map: DVector<f64>,
}

/// Reusable solver for the subproblems of one instance. Construction runs the
/// power iteration and splits `f`; each [`SubproblemSolver::solve`] is
/// independent.
#[derive(Debug, Clone)]
pub struct SubproblemSolver<'a> {
    pb: &'a ProblemInstance,
    prox_part: CompositeFunction,
    smooth: SmoothQuadratic,
    lipschitz: f64,
    step: f64,
    polisher: Option<Polisher>,
}

/// How one coordinate of the prox part behaves near a point.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    Free,
    L1(f64),
    Bounds(f64, f64),
}

/// Data for the active-set polish: per-coordinate structure and the Hessian
/// `H + rho A'A` of the smooth part.
#[derive(Debug, Clone)]
struct Polisher {
    coords: Vec<Coord>,
    hessian: DMatrix<f64>,
}

impl Polisher {
    fn new(pb: &ProblemInstance, prox_part: &CompositeFunction, smooth: &SmoothQuadratic) -> Option<Self> {
        if pb.dim() > POLISH_MAX_DIM {
            return None;
        }
        let mut coords = Vec::with_capacity(pb.dim());
        for block in prox_part.blocks() {
            let n = block.end - block.start;
            match block.atom.kind() {
                AtomKind::Zero => coords.extend(std::iter::repeat_n(Coord::Free, n)),
                AtomKind::L1 { weight } => coords.extend(std::iter::repeat_n(Coord::L1(*weight), n)),
                AtomKind::IndicatorNonneg => coords.extend(std::iter::repeat_n(Coord::Bounds(0.0, f64::INFINITY), n)),
                AtomKind::IndicatorBox { lo, hi } => {
                    coords.extend(lo.iter().zip(hi.iter()).map(|(l, h)| Coord::Bounds(*l, *h)))
                }
                _ => return None,
            }
        }
        let mut hessian = pb.a().tr_mul(pb.a()) * pb.rho();
        if let Some(h) = smooth.hessian() {
            hessian += h;
        }
        Some(Self { coords, hessian })
    }

    /// Active-set signature of `x`: 0 fixed at a kink, 1 free, 2 and 3 free
    /// with positive and negative l1 slope.
    fn pattern(&self, x: &DVector<f64>) -> Vec<u8> {
        self.coords
            .iter()
            .zip(x.iter())
            .map(|(c, &v)| match *c {
                Coord::Free => 1,
                Coord::L1(_) if v == 0.0 => 0,
                Coord::L1(_) if v > 0.0 => 2,
                Coord::L1(_) => 3,
                Coord::Bounds(lo, hi) if v == lo || v == hi => 0,
                Coord::Bounds(..) => 1,
            })
            .collect()
    }

    /// Minimum-norm Newton step on the free coordinates of `pattern`.
    fn polish(&self, x: &DVector<f64>, grad: &DVector<f64>, pattern: &[u8]) -> Option<DVector<f64>> {
        let free: Vec<usize> = (0..pattern.len()).filter(|&i| pattern[i] != 0).collect();
        if free.is_empty() {
            return None;
        }
        let rhs = DVector::from_iterator(
            free.len(),
            free.iter().map(|&i| {
                let slope = match (self.coords[i], pattern[i]) {
                    (Coord::L1(w), 2) => w,
                    (Coord::L1(w), 3) => -w,
                    _ => 0.0,
                };
                -(grad[i] + slope)
            }),
        );
        let reduced = self.hessian.select_rows(&free).select_columns(&free);
        let svd = reduced.svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max();
        let step = svd.solve(&rhs, cutoff).ok()?;
        let mut out = x.clone();
        for (k, &i) in free.iter().enumerate() {
            out[i] += step[k];
        }
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

impl<'a> SubproblemSolver<'a> {
    pub fn new(pb: &'a ProblemInstance, step_safety: f64) -> Result<Self> {
        if !(step_safety > 0.0 && step_safety <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step_safety must lie in (0, 1], got {step_safety}"
            )));
        }
        let (prox_part, smooth) = pb.f().split_smooth();
        let mut lipschitz = pb.rho() * operator_norm_sq(pb.a()) + smooth.curvature();
        if lipschitz <= 0.0 {
            // Purely linear smooth part; any step is stable.
            lipschitz = 1.0;
        }
        let polisher = Polisher::new(pb, &prox_part, &smooth);
        Ok(Self {
            pb,
            prox_part,
            smooth,
            lipschitz,
            step: step_safety / lipschitz,
            polisher,
        })
    }

    pub fn problem(&self) -> &ProblemInstance {
        self.pb
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Gradient of the smooth part given the constraint residual `r = Ax - b`.
    fn gradient_with_residual(&self, lam: &DVector<f64>, x: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
        let weighted = lam + r * self.pb.rho();
        let mut g = self.pb.a().tr_mul(&weighted);
        if !self.smooth.is_zero() {
            g += self.smooth.gradient(x);
        }
        g
    }

    pub fn smooth_gradient(&self, lam: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("dual point", self.pb.num_constraints(), lam.len())?;
        let r = self.pb.constraint_map(x)?;
        Ok(self.gradient_with_residual(lam, x, &r))
    }

    /// Prox-gradient residual of `x` at this solver's step.
    pub fn residual(&self, lam: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        let g = self.smooth_gradient(lam, x)?;
        self.prox_part.prox_residual(x, &g, self.step)
    }

    pub fn solve(
        &self,
        lam: &DVector<f64>,
        tol: f64,
        max_iter: usize,
        x0: Option<&DVector<f64>>,
    ) -> Result<InnerSolution> {
        let pb = self.pb;
        let d = pb.dim();
        check_dim("dual point", pb.num_constraints(), lam.len())?;
        if let Some(x0) = x0 {
            check_dim("inner start point", d, x0.len())?;
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inner tolerance must be positive, got {tol}"
            )));
        }
        let prox = self.prox_part.prox_operator(self.step)?;
        let t = self.step;

        let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(d));
        let limit = DIVERGENCE_FACTOR * (1.0 + x.norm());
        let mut r_x = pb.a() * &x - pb.b();
        let mut obj_x = pb.aug_lagrangian_with_residual(&x, lam, &r_x);

        // A start point inside dom f that is already stationary needs no work.
        if obj_x.is_finite() {
            let g = self.gradient_with_residual(lam, &x, &r_x);
            let residual = prox.residual(&x, &g);
            if residual <= tol {
                return Ok(InnerSolution {
                    x_plus: x,
                    residual,
                    iterations: 0,
                    obj_value: obj_x,
                    constraint_map: r_x,
                });
            }
        }

        let mut y = x.clone();
        let mut r_y = r_x.clone();
        let mut theta = 1.0f64;
        let mut momentum = false;
        let mut residual = f64::INFINITY;
        let mut last_pattern: Option<Vec<u8>> = None;

        for iter in 1..=max_iter {
            let g_y = self.gradient_with_residual(lam, &y, &r_y);
            let x_new = prox.apply(&(&y - g_y * t));
            let r_new = pb.a() * &x_new - pb.b();
            let obj_new = pb.aug_lagrangian_with_residual(&x_new, lam, &r_new);

            if momentum && obj_new > obj_x {
                // Restart from the last accepted point without momentum.
                y.copy_from(&x);
                r_y.copy_from(&r_x);
                theta = 1.0;
                momentum = false;
                continue;
            }

            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            y = &x_new + (&x_new - &x) * beta;
            r_y = &r_new + (&r_new - &r_x) * beta;
            momentum = beta != 0.0;
            theta = theta_next;
            x = x_new;
            r_x = r_new;
            obj_x = obj_new;

            let norm = x.norm();
            if !norm.is_finite() || norm > limit {
                return Err(Error::DivergenceDetected {
                    iteration: iter,
                    norm,
                    limit,
                });
            }

            let g_x = self.gradient_with_residual(lam, &x, &r_x);
            residual = prox.residual(&x, &g_x);
            if residual <= tol && obj_x.is_finite() {
                return Ok(InnerSolution {
                    x_plus: x,
                    residual,
                    iterations: iter,
                    obj_value: obj_x,
                    constraint_map: r_x,
                });
            }

            if iter % POLISH_EVERY != 0 || !obj_x.is_finite() {
                continue;
            }
            let Some(polisher) = &self.polisher else { continue };
            let pattern = polisher.pattern(&x);
            if last_pattern.as_ref() == Some(&pattern) {
                continue;
            }
            let candidate = polisher.polish(&x, &g_x, &pattern);
            last_pattern = Some(pattern);
            let Some(x_hat) = candidate else { continue };
            let r_hat = pb.a() * &x_hat - pb.b();
            let obj_hat = pb.aug_lagrangian_with_residual(&x_hat, lam, &r_hat);
            if !(obj_hat.is_finite() && obj_hat <= obj_x) {
                continue;
            }
            let res_hat = prox.residual(&x_hat, &self.gradient_with_residual(lam, &x_hat, &r_hat));
            if res_hat <= tol {
                return Ok(InnerSolution {
                    x_plus: x_hat,
                    residual: res_hat,
                    iterations: iter,
                    obj_value: obj_hat,
                    constraint_map: r_hat,
                });
            }
            // Keep the better point and restart momentum from it.
            y.copy_from(&x_hat);
            r_y.copy_from(&r_hat);
            x = x_hat;
            r_x = r_hat;
            obj_x = obj_hat;
            residual = res_hat;
            theta = 1.0;
            momentum = false;
        }

        Err(Error::MaxIterExceeded(Box::new(InnerSolution {
            x_plus: x,
            residual,
            iterations: max_iter,
            obj_value: obj_x,
            constraint_map: r_x,
        })))
    }
}

/// Gradient of the smooth part of `L_rho(., lambda)` at `x`:
/// `A'lambda + rho A'(Ax - b)` plus the gradient of any quadratic or linear
/// parts of `f`.
pub fn smooth_part_gradient(pb: &ProblemInstance, lam: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    SubproblemSolver::new(pb, 1.0)?.smooth_gradient(lam, x)
}

/// Solves `min_x L_rho(x, lambda)` to the requested prox-gradient residual.
pub fn solve_subproblem(pb: &ProblemInstance, lam: &DVector<f64>, settings: &InnerSettings) -> Result<InnerSolution> {
    settings.validate()?;
    SubproblemSolver::new(pb, settings.step_safety)?.solve(lam, settings.tol, settings.max_iter, settings.x0.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::AtomKind;
    use crate::rng::SplitMix64;
    use nalgebra::DMatrix;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn scalar(kind: AtomKind, b: f64, rho: f64) -> ProblemInstance {
        let f = CompositeFunction::from_kind(kind, 1).unwrap();
        ProblemInstance::new("s", f, DMatrix::identity(1, 1), dv(&[b]), rho).unwrap()
    }

    fn half_square() -> AtomKind {
        AtomKind::Quadratic {
            q_mat: DMatrix::identity(1, 1),
            q: DVector::zeros(1),
            c: 0.0,
        }
    }

    #[test]
    fn gradient_scalar_example() {
        let pb = scalar(AtomKind::Zero, 0.0, 1.0);
        assert_eq!(smooth_part_gradient(&pb, &dv(&[2.0]), &dv(&[3.0])).unwrap(), dv(&[5.0]));
    }

    #[test]
    fn gradient_vanishes_at_feasible_points_with_zero_multiplier() {
        let mut rng = SplitMix64::new(1);
        let a = rng.symmetric_matrix(2, 4);
        let x = rng.symmetric_vector(4);
        let b = &a * &x;
        let f = CompositeFunction::from_kind(AtomKind::L1 { weight: 1.0 }, 4).unwrap();
        let pb = ProblemInstance::new("f", f, a, b, 3.0).unwrap();
        let g = smooth_part_gradient(&pb, &DVector::zeros(2), &x).unwrap();
        assert!(g.amax() < 1e-14);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = SplitMix64::new(2);
        let (p, d) = (3, 5);
        let a = rng.symmetric_matrix(p, d);
        let b = rng.symmetric_vector(p);
        let m = rng.symmetric_matrix(d, d);
        let q_mat = m.transpose() * &m;
        let f = CompositeFunction::from_kind(
            AtomKind::Quadratic {
                q_mat: q_mat.clone(),
                q: rng.symmetric_vector(d),
                c: 0.3,
            },
            d,
        )
        .unwrap();
        let pb = ProblemInstance::new("fd", f, a, b, 1.3).unwrap();
        let lam = rng.symmetric_vector(p);
        let x = rng.symmetric_vector(d);
        // The whole of f is smooth here, so the smooth part is L_rho itself.
        let smooth = |x: &DVector<f64>| pb.aug_lagrangian(x, &lam).unwrap().to_f64();
        let g = smooth_part_gradient(&pb, &lam, &x).unwrap();
        let h = 1e-5;
        for i in 0..d {
            let mut e = DVector::zeros(d);
            e[i] = h;
            let fd = (smooth(&(&x + &e)) - smooth(&(&x - &e))) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn quadratic_subproblem_closed_form() {
        // Stationarity (1 + rho) x + lambda = 0.
        let pb = scalar(half_square(), 0.0, 1.0);
        let sol = solve_subproblem(&pb, &dv(&[2.0]), &InnerSettings::with_tol(1e-12)).unwrap();
        assert!((sol.x_plus[0] + 1.0).abs() < 1e-11);
        assert!(sol.residual <= 1e-12);
        assert_eq!(sol.obj_value, pb.aug_lagrangian(&sol.x_plus, &dv(&[2.0])).unwrap());
    }

    #[test]
    fn nonneg_subproblem_interior_and_clamped() {
        let f = CompositeFunction::from_kind(AtomKind::IndicatorNonneg, 1).unwrap();
        let pb = ProblemInstance::new("box", f, DMatrix::identity(1, 1), dv(&[1.0]), 1.0).unwrap();
        let settings = InnerSettings::with_tol(1e-12);

        // Unconstrained minimizer 1 - lambda/rho = 4 is feasible.
        let sol = solve_subproblem(&pb, &dv(&[-3.0]), &settings).unwrap();
        assert!((sol.x_plus[0] - 4.0).abs() < 1e-11);

        // 1 - lambda = -2 clamps to 0; KKT: gradient lambda + (x - 1) = 2 >= 0.
        let sol = solve_subproblem(&pb, &dv(&[3.0]), &settings).unwrap();
        assert_eq!(sol.x_plus[0], 0.0);
        let g = smooth_part_gradient(&pb, &dv(&[3.0]), &sol.x_plus).unwrap();
        assert!(g[0] >= 0.0);
        assert_eq!(sol.constraint_map, dv(&[-1.0]));
    }

    #[test]
    fn warm_start_at_solution_takes_no_iterations() {
        let pb = scalar(half_square(), 0.0, 1.0);
        let settings = InnerSettings {
            x0: Some(dv(&[-1.0])),
            ..InnerSettings::with_tol(1e-12)
        };
        let sol = solve_subproblem(&pb, &dv(&[2.0]), &settings).unwrap();
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn objective_never_exceeds_start_value() {
        let mut rng = SplitMix64::new(9);
        let a = rng.symmetric_matrix(3, 6);
        let b = rng.symmetric_vector(3);
        let f = CompositeFunction::from_kind(AtomKind::L1 { weight: 0.4 }, 6).unwrap();
        let pb = ProblemInstance::new("l1", f, a, b, 2.0).unwrap();
        for _ in 0..20 {
            let lam = rng.symmetric_vector(3) * 5.0;
            let x0 = rng.symmetric_vector(6) * 3.0;
            let start = pb.aug_lagrangian(&x0, &lam).unwrap().to_f64();
            let settings = InnerSettings {
                x0: Some(x0),
                ..InnerSettings::with_tol(1e-10)
            };
            let sol = solve_subproblem(&pb, &lam, &settings).unwrap();
            assert!(sol.obj_value.to_f64() <= start + 1e-12);
            assert!(sol.residual <= 1e-10);
        }
    }

    #[test]
    fn unbounded_subproblem_reports_divergence() {
        // min_x x with A = 0 has no minimizer; this is outside the closed proper
        // convex setting only because A'lambda cannot pin x down.
        let f = CompositeFunction::from_kind(AtomKind::Linear { c: dv(&[1.0]) }, 1).unwrap();
        let pb = ProblemInstance::new("unbounded", f, DMatrix::zeros(1, 1), dv(&[0.0]), 1.0).unwrap();
        let err = solve_subproblem(&pb, &dv(&[0.0]), &InnerSettings::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::DivergenceDetected { .. } | Error::MaxIterExceeded(_)
        ));
    }

    #[test]
    fn iteration_cap_returns_best_iterate() {
        let f = CompositeFunction::from_kind(AtomKind::L1 { weight: 1.0 }, 4).unwrap();
        let a = SplitMix64::new(4).symmetric_matrix(2, 4);
        let pb = ProblemInstance::new("cap", f, a, dv(&[1.0, -1.0]), 1.0).unwrap();
        let settings = InnerSettings {
            max_iter: 2,
            ..InnerSettings::with_tol(1e-14)
        };
        match solve_subproblem(&pb, &dv(&[3.0, -3.0]), &settings) {
            Err(Error::MaxIterExceeded(best)) => {
                assert_eq!(best.iterations, 2);
                assert!(best.obj_value.is_finite());
            }
            other => panic!("expected MaxIterExceeded, got {other:?}"),
        }
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let pb = scalar(AtomKind::Zero, 0.0, 1.0);
        let lam = dv(&[0.0]);
        for s in [
            InnerSettings {
                tol: 0.0,
                ..Default::default()
            },
            InnerSettings {
                max_iter: 0,
                ..Default::default()
            },
            InnerSettings {
                step_safety: 1.5,
                ..Default::default()
            },
            InnerSettings {
                x0: Some(dv(&[1.0, 2.0])),
                ..Default::default()
            },
        ] {
            assert!(solve_subproblem(&pb, &lam, &s).is_err());
        }
    }

    #[test]
    fn ill_conditioned_l1_subproblem_reaches_tight_tolerance() {
        let pb = crate::generate::generate(&crate::generate::BenchmarkSpec::new(
            crate::generate::Family::BasisPursuit,
            50,
            20,
            1.0,
            20_241,
        ))
        .unwrap();
        let mut rng = SplitMix64::new(7);
        let solver = SubproblemSolver::new(&pb, 0.99).unwrap();
        for _ in 0..20 {
            let lam = rng.ball_point(20, 10.0);
            let sol = solver.solve(&lam, 1e-10, 200_000, None).unwrap();
            assert!(sol.residual <= 1e-10);
            assert!(solver.residual(&lam, &sol.x_plus).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn polish_applies_only_to_polyhedral_parts() {
        let rng_a = SplitMix64::new(8).symmetric_matrix(2, 3);
        let ball = CompositeFunction::from_kind(
            AtomKind::IndicatorL2Ball {
                radius: 1.0,
                center: DVector::zeros(3),
            },
            3,
        )
        .unwrap();
        let pb = ProblemInstance::new("ball", ball, rng_a.clone(), dv(&[0.1, 0.2]), 1.0).unwrap();
        assert!(SubproblemSolver::new(&pb, 0.99).unwrap().polisher.is_none());

        let l1 = CompositeFunction::from_kind(AtomKind::L1 { weight: 1.0 }, 3).unwrap();
        let pb = ProblemInstance::new("l1", l1, rng_a, dv(&[0.1, 0.2]), 1.0).unwrap();
        let polisher = SubproblemSolver::new(&pb, 0.99).unwrap().polisher.unwrap();
        assert_eq!(polisher.pattern(&dv(&[0.0, 2.0, -1.0])), vec![0, 2, 3]);
    }

    #[test]
    fn polish_step_solves_the_reduced_quadratic() {
        // f = 0 and A = I: the free coordinates jump straight to b - lambda/rho.
        let f = CompositeFunction::from_kind(AtomKind::IndicatorNonneg, 2).unwrap();
        let pb = ProblemInstance::new("nn", f, DMatrix::identity(2, 2), dv(&[1.0, 2.0]), 2.0).unwrap();
        let solver = SubproblemSolver::new(&pb, 0.99).unwrap();
        let polisher = solver.polisher.as_ref().unwrap();
        let lam = dv(&[1.0, -1.0]);
        let x = dv(&[0.3, 0.7]);
        let g = solver.smooth_gradient(&lam, &x).unwrap();
        let x_hat = polisher.polish(&x, &g, &polisher.pattern(&x)).unwrap();
        assert!((x_hat - dv(&[0.5, 2.5])).amax() < 1e-12);
    }
}
