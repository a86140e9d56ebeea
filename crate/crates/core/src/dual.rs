//! Dual oracles and the outer loops.
//!
//! The augmented Lagrangian dual `phi_rho` is concave and `1/rho`-smooth with
//! gradient `A x+ - b`, so the multiplier update `lambda + rho (A x+ - b)` is
//! exactly a gradient-ascent step of length `rho = 1/L`. [`alm`] runs that
//! iteration; [`accelerated_alm`] adds Nesterov momentum with restarts.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::ext_real::ExtReal;
use crate::inner::{InnerSettings, InnerSolution, SubproblemSolver};
use crate::problem::{DualPoint, ProblemInstance};

/// Multipliers with norm above this are reported as a diverging dual.
pub const DUAL_DIVERGENCE_LIMIT: f64 = 1e12;

/// Inner tolerance as a function of the outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TolSchedule {
    Constant(f64),
    /// `max(tol0 * factor^k, floor)`.
    Geometric {
        tol0: f64,
        factor: f64,
        floor: f64,
    },
}

impl TolSchedule {
    pub fn tol(&self, k: usize) -> f64 {
        match *self {
            TolSchedule::Constant(t) => t,
            TolSchedule::Geometric { tol0, factor, floor } => {
                let exp = i32::try_from(k).unwrap_or(i32::MAX);
                (tol0 * factor.powi(exp)).max(floor)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TolSchedule::Constant(t) => t > 0.0 && t.is_finite(),
            TolSchedule::Geometric { tol0, factor, floor } => {
                tol0 > 0.0 && tol0.is_finite() && factor > 0.0 && factor <= 1.0 && floor > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid tolerance schedule {self:?}")))
        }
    }
}

impl Default for TolSchedule {
    fn default() -> Self {
        TolSchedule::Geometric {
            tol0: 1e-4,
            factor: 0.5,
            floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterSettings {
    pub max_outer: usize,
    pub schedule: TolSchedule,
    pub grad_stop: f64,
    pub momentum: bool,
    pub inner_max_iter: usize,
    pub step_safety: f64,
    /// Start each subproblem from the previous `x+`.
    pub warm_start: bool,
}

impl Default for OuterSettings {
    fn default() -> Self {
        Self {
            max_outer: 500,
            schedule: TolSchedule::default(),
            grad_stop: 1e-6,
            momentum: false,
            inner_max_iter: InnerSettings::default().max_iter,
            step_safety: InnerSettings::default().step_safety,
            warm_start: true,
        }
    }
}

impl OuterSettings {
    fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.grad_stop.is_nan() || self.grad_stop <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "grad_stop must be positive, got {}",
                self.grad_stop
            )));
        }
        if self.max_outer == 0 || self.inner_max_iter == 0 {
            return Err(Error::InvalidParameter("iteration limits must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// The iterate `lambda_k`.
    pub lambda: DVector<f64>,
    /// Where the dual gradient was evaluated: `lambda_k` for plain ALM, the
    /// extrapolated point for the accelerated method.
    pub query: DVector<f64>,
    /// `L_rho(x+, query)`, an upper estimate of `phi_rho(query)`.
    pub phi_est: f64,
    /// `|A x+ - b|`.
    pub grad_norm: f64,
    pub constraint_map: DVector<f64>,
    /// `f(x+)`.
    pub primal_obj: ExtReal,
    pub inner_iters: usize,
    pub inner_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    GradStop,
    MaxOuter,
    /// An inner solve exceeded its iteration budget.
    InnerStalled,
    /// The inner iterates or the multipliers blew up, which points to an
    /// infeasible or misspecified instance.
    Divergence,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::GradStop => "grad_stop",
            TerminationReason::MaxOuter => "max_outer",
            TerminationReason::InnerStalled => "inner_stalled",
            TerminationReason::Divergence => "divergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub settings: OuterSettings,
    pub terminated: TerminationReason,
    /// The multiplier returned to the caller: the point whose gradient met
    /// `grad_stop`, or the next iterate otherwise.
    pub final_lambda: DVector<f64>,
    /// The last inner solution, if any subproblem was solved.
    pub final_x: Option<DVector<f64>>,
}

impl SolveTrace {
    /// Largest `|lambda_{k+1} - (query_k + rho (A x+_k - b))|` over the trace,
    /// recomputed with the same arithmetic as the solver. Zero for any trace
    /// produced by [`alm`] or [`accelerated_alm`].
    pub fn replay_defect(&self, rho: f64) -> f64 {
        self.records
            .windows(2)
            .map(|w| {
                let expected = multiplier_step(&w[0].query, rho, &w[0].constraint_map);
                (&w[1].lambda - expected).amax()
            })
            .fold(0.0, f64::max)
    }
}

/// `lambda + rho * r`, elementwise.
fn multiplier_step(lam: &DVector<f64>, rho: f64, r: &DVector<f64>) -> DVector<f64> {
    lam.zip_map(r, |l, ri| l + rho * ri)
}

fn cold_solve(pb: &ProblemInstance, lam: &DVector<f64>, tol: f64) -> Result<InnerSolution> {
    let defaults = InnerSettings::default();
    SubproblemSolver::new(pb, defaults.step_safety)?.solve(lam, tol, defaults.max_iter, None)
}

/// Estimate of `phi_rho(lambda)`: the subproblem objective at an inner
/// solution of residual at most `tol`. It bounds the true value from above.
pub fn dual_value(pb: &ProblemInstance, lam: &DVector<f64>, tol: f64) -> Result<f64> {
    let sol = cold_solve(pb, lam, tol)?;
    sol.obj_value
        .finite()
        .ok_or_else(|| Error::InvalidProblem("inner solution left dom f".into()))
}

/// `A x+ - b` at an inner solution, the gradient of `phi_rho` at `lambda`.
pub fn dual_gradient(pb: &ProblemInstance, lam: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    Ok(cold_solve(pb, lam, tol)?.constraint_map)
}

/// The method of multipliers: `x+ = argmin L_rho(., lambda_k)`,
/// `lambda_{k+1} = lambda_k + rho (A x+ - b)`.
pub fn alm(pb: &ProblemInstance, lam0: &DualPoint, settings: &OuterSettings) -> Result<SolveTrace> {
    run(pb, lam0, settings, false)
}

/// Nesterov-accelerated gradient ascent on `phi_rho` with step `rho`.
///
/// With `theta_0 = 1` and `theta_{k+1} = (1 + sqrt(1 + 4 theta_k^2)) / 2`, each
/// step evaluates the gradient at the extrapolated point
/// `y_k = lambda_k + ((theta_{k-1} - 1)/theta_k)(lambda_k - lambda_{k-1})` and
/// sets `lambda_{k+1} = y_k + rho (A x+(y_k) - b)`. Momentum is reset whenever
/// the dual estimate at the query point decreases.
pub fn accelerated_alm(pb: &ProblemInstance, lam0: &DualPoint, settings: &OuterSettings) -> Result<SolveTrace> {
    run(pb, lam0, settings, true)
}

fn run(pb: &ProblemInstance, lam0: &DualPoint, settings: &OuterSettings, momentum: bool) -> Result<SolveTrace> {
    settings.validate()?;
    check_dim("initial multiplier", pb.num_constraints(), lam0.len())?;
    let solver = SubproblemSolver::new(pb, settings.step_safety)?;
    let rho = pb.rho();
    let mut settings = settings.clone();
    settings.momentum = momentum;

    let mut records: Vec<TraceRecord> = Vec::new();
    let mut lam: DVector<f64> = (**lam0).clone();
    let mut query = lam.clone();
    let mut theta = 1.0f64;
    let mut x_warm: Option<DVector<f64>> = None;
    let mut prev_phi = f64::NEG_INFINITY;

    let mut terminated = TerminationReason::MaxOuter;
    let mut final_lambda = None;

    for k in 0..settings.max_outer {
        let tol = settings.schedule.tol(k);
        let start = if settings.warm_start { x_warm.as_ref() } else { None };
        let sol = match solver.solve(&query, tol, settings.inner_max_iter, start) {
            Ok(sol) => sol,
            Err(Error::MaxIterExceeded(_)) => {
                terminated = TerminationReason::InnerStalled;
                final_lambda = Some(query.clone());
                break;
            }
            Err(Error::DivergenceDetected { .. }) => {
                terminated = TerminationReason::Divergence;
                final_lambda = Some(query.clone());
                break;
            }
            Err(e) => return Err(e),
        };
        let phi_est = sol
            .obj_value
            .finite()
            .ok_or_else(|| Error::InvalidProblem("inner solution left dom f".into()))?;
        let grad_norm = sol.constraint_map.norm();
        records.push(TraceRecord {
            k,
            lambda: lam.clone(),
            query: query.clone(),
            phi_est,
            grad_norm,
            constraint_map: sol.constraint_map.clone(),
            primal_obj: pb.f().value_unchecked(&sol.x_plus),
            inner_iters: sol.iterations,
            inner_tol: tol,
        });
        x_warm = Some(sol.x_plus);

        if grad_norm <= settings.grad_stop {
            terminated = TerminationReason::GradStop;
            final_lambda = Some(query.clone());
            break;
        }

        let next = multiplier_step(&query, rho, &sol.constraint_map);
        if next.norm() > DUAL_DIVERGENCE_LIMIT || next.iter().any(|v| !v.is_finite()) {
            terminated = TerminationReason::Divergence;
            final_lambda = Some(next);
            break;
        }

        if momentum {
            let restart = phi_est < prev_phi;
            prev_phi = phi_est;
            if restart {
                theta = 1.0;
            }
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = if restart { 0.0 } else { (theta - 1.0) / theta_next };
            query = &next + (&next - &lam) * beta;
            theta = theta_next;
        } else {
            query = next.clone();
        }
        lam = next;
    }

    Ok(SolveTrace {
        records,
        settings,
        terminated,
        final_lambda: final_lambda.unwrap_or(lam),
        final_x: x_warm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{AtomKind, CompositeFunction};
    use nalgebra::DMatrix;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn scalar_qp(rho: f64) -> ProblemInstance {
        let f = CompositeFunction::from_kind(
            AtomKind::Quadratic {
                q_mat: DMatrix::identity(1, 1),
                q: DVector::zeros(1),
                c: 0.0,
            },
            1,
        )
        .unwrap();
        ProblemInstance::new("qp", f, DMatrix::identity(1, 1), dv(&[0.0]), rho).unwrap()
    }

    fn p_box() -> ProblemInstance {
        let f = CompositeFunction::from_kind(AtomKind::IndicatorNonneg, 1).unwrap();
        ProblemInstance::new("box", f, DMatrix::identity(1, 1), dv(&[1.0]), 1.0).unwrap()
    }

    #[test]
    fn schedule_values() {
        let s = TolSchedule::default();
        assert_eq!(s.tol(0), 1e-4);
        assert_eq!(s.tol(3), 1e-4 * 0.125);
        assert_eq!(s.tol(100), 1e-12);
        assert_eq!(TolSchedule::Constant(3e-9).tol(17), 3e-9);
    }

    #[test]
    fn dual_oracles_on_scalar_qp() {
        // phi(lambda) = -lambda^2 / (2 (1 + rho)), gradient -lambda / (1 + rho).
        let pb = scalar_qp(1.0);
        let lam = dv(&[2.0]);
        assert!((dual_value(&pb, &lam, 1e-12).unwrap() + 1.0).abs() < 1e-12);
        assert!((dual_gradient(&pb, &lam, 1e-12).unwrap()[0] + 1.0).abs() < 1e-11);
    }

    #[test]
    fn dual_oracles_on_box() {
        let pb = p_box();
        assert!(dual_value(&pb, &dv(&[0.0]), 1e-12).unwrap().abs() < 1e-20);
        assert_eq!(dual_gradient(&pb, &dv(&[3.0]), 1e-12).unwrap(), dv(&[-1.0]));
    }

    #[test]
    fn alm_on_scalar_qp_halves_the_multiplier() {
        let pb = scalar_qp(1.0);
        let settings = OuterSettings {
            max_outer: 30,
            schedule: TolSchedule::Constant(1e-14),
            grad_stop: 1e-300,
            ..Default::default()
        };
        let trace = alm(&pb, &DualPoint::new(dv(&[1.0])).unwrap(), &settings).unwrap();
        assert_eq!(trace.records.len(), 30);
        for r in &trace.records {
            let expected = 0.5f64.powi(r.k as i32);
            assert!((r.lambda[0] - expected).abs() <= 1e-12, "k={}", r.k);
        }
        assert_eq!(trace.terminated, TerminationReason::MaxOuter);
        assert_eq!(trace.replay_defect(pb.rho()), 0.0);
    }

    #[test]
    fn starting_at_the_optimum_stops_immediately() {
        let pb = scalar_qp(1.0);
        for accel in [false, true] {
            let lam0 = DualPoint::zeros(1);
            let trace = run(&pb, &lam0, &OuterSettings::default(), accel).unwrap();
            assert_eq!(trace.records.len(), 1);
            assert_eq!(trace.terminated, TerminationReason::GradStop);
            assert_eq!(trace.final_lambda, dv(&[0.0]));
        }
    }

    #[test]
    fn traces_replay_exactly() {
        let f = CompositeFunction::from_kind(AtomKind::L1 { weight: 1.0 }, 4).unwrap();
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, -0.3, 0.2, 0.0, 1.0, 0.7, -1.0]);
        let x0 = dv(&[1.0, 0.0, 0.0, -0.5]);
        let b = &a * &x0;
        let pb = ProblemInstance::new("bp", f, a, b, 1.0).unwrap();
        for accel in [false, true] {
            let trace = run(&pb, &DualPoint::zeros(2), &OuterSettings::default(), accel).unwrap();
            assert!(trace.records.len() > 2);
            assert_eq!(trace.replay_defect(pb.rho()), 0.0);
            for (i, r) in trace.records.iter().enumerate() {
                assert_eq!(r.k, i);
                assert_eq!(r.grad_norm, r.constraint_map.norm());
            }
        }
    }

    #[test]
    fn infeasible_problem_diverges() {
        // x >= 0 and x = -1 cannot both hold.
        let f = CompositeFunction::from_kind(AtomKind::IndicatorNonneg, 1).unwrap();
        let pb = ProblemInstance::new("infeasible", f, DMatrix::identity(1, 1), dv(&[-1.0]), 1e9).unwrap();
        let settings = OuterSettings {
            max_outer: 10_000,
            ..Default::default()
        };
        let trace = alm(&pb, &DualPoint::zeros(1), &settings).unwrap();
        assert_eq!(trace.terminated, TerminationReason::Divergence);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let pb = scalar_qp(1.0);
        let lam0 = DualPoint::zeros(1);
        let bad = [
            OuterSettings {
                grad_stop: 0.0,
                ..Default::default()
            },
            OuterSettings {
                max_outer: 0,
                ..Default::default()
            },
            OuterSettings {
                schedule: TolSchedule::Geometric {
                    tol0: 1e-4,
                    factor: 1.5,
                    floor: 1e-12,
                },
                ..Default::default()
            },
        ];
        for s in bad {
            assert!(alm(&pb, &lam0, &s).is_err());
        }
        assert!(alm(&pb, &DualPoint::zeros(2), &OuterSettings::default()).is_err());
    }
}
