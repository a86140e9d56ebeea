//! The problem container `(f, A, b, rho)` and Lagrangian evaluation.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::atoms::CompositeFunction;
use crate::error::{check_dim, Error, Result};
use crate::ext_real::ExtReal;
use crate::rng::SplitMix64;

pub const POWER_ITER_MAX: usize = 1000;
pub const POWER_ITER_TOL: f64 = 1e-10;
pub const POWER_ITER_SEED: u64 = 0x5EED;

/// A dual variable with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint(DVector<f64>);

impl DualPoint {
    pub fn new(lambda: DVector<f64>) -> Result<Self> {
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("dual point must have finite entries".into()));
        }
        Ok(Self(lambda))
    }

    pub fn zeros(p: usize) -> Self {
        Self(DVector::zeros(p))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for DualPoint {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// A known dual optimum and optimal value, attached by generators whose
/// families admit a closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct DualReference {
    pub lambda_star: DVector<f64>,
    pub phi_star: f64,
}

/// `minimize f(x) subject to A x = b`, with augmentation parameter `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub name: String,
    f: CompositeFunction,
    a: DMatrix<f64>,
    b: DVector<f64>,
    rho: f64,
    witness: Option<DVector<f64>>,
    reference: Option<DualReference>,
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        f: CompositeFunction,
        a: DMatrix<f64>,
        b: DVector<f64>,
        rho: f64,
    ) -> Result<Self> {
        if a.ncols() != f.dim() {
            return Err(Error::InvalidProblem(format!(
                "A has {} columns but f has dimension {}",
                a.ncols(),
                f.dim()
            )));
        }
        if b.len() != a.nrows() {
            return Err(Error::InvalidProblem(format!(
                "b has length {} but A has {} rows",
                b.len(),
                a.nrows()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::InvalidProblem("at least one constraint is required".into()));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidProblem(format!("rho must be positive, got {rho}")));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("A and b must be finite".into()));
        }
        Ok(Self {
            name: name.into(),
            f,
            a,
            b,
            rho,
            witness: None,
            reference: None,
        })
    }

    /// Attaches a point with finite `f`. Its feasibility residual is not
    /// required to vanish; generators produce exact witnesses.
    pub fn with_witness(mut self, x0: DVector<f64>) -> Result<Self> {
        check_dim("witness", self.dim(), x0.len())?;
        if !self.f.value_unchecked(&x0).is_finite() {
            return Err(Error::InvalidProblem("witness lies outside dom f".into()));
        }
        self.witness = Some(x0);
        Ok(self)
    }

    pub fn with_reference(mut self, reference: DualReference) -> Result<Self> {
        check_dim("lambda_star", self.num_constraints(), reference.lambda_star.len())?;
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn f(&self) -> &CompositeFunction {
        &self.f
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn witness(&self) -> Option<&DVector<f64>> {
        self.witness.as_ref()
    }

    pub fn reference(&self) -> Option<&DualReference> {
        self.reference.as_ref()
    }

    /// Number of primal variables `d`.
    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// Number of equality constraints `p`.
    pub fn num_constraints(&self) -> usize {
        self.a.nrows()
    }

    /// `A x - b`.
    pub fn constraint_map(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("point", self.dim(), x.len())?;
        Ok(&self.a * x - &self.b)
    }

    /// `f(x) + <lambda, Ax - b>`.
    pub fn lagrangian(&self, x: &DVector<f64>, lam: &DVector<f64>) -> Result<ExtReal> {
        check_dim("dual point", self.num_constraints(), lam.len())?;
        let r = self.constraint_map(x)?;
        Ok(self.lagrangian_with_residual(x, lam, &r))
    }

    /// `f(x) + <lambda, Ax - b> + (rho/2)|Ax - b|^2`.
    pub fn aug_lagrangian(&self, x: &DVector<f64>, lam: &DVector<f64>) -> Result<ExtReal> {
        check_dim("dual point", self.num_constraints(), lam.len())?;
        let r = self.constraint_map(x)?;
        Ok(self.aug_lagrangian_with_residual(x, lam, &r))
    }

    pub(crate) fn lagrangian_with_residual(&self, x: &DVector<f64>, lam: &DVector<f64>, r: &DVector<f64>) -> ExtReal {
        self.f.value_unchecked(x).add_f64(lam.dot(r))
    }

    /// Evaluated as the Lagrangian plus the penalty, in that order, so the two
    /// differ by exactly the penalty term.
    pub(crate) fn aug_lagrangian_with_residual(
        &self,
        x: &DVector<f64>,
        lam: &DVector<f64>,
        r: &DVector<f64>,
    ) -> ExtReal {
        self.lagrangian_with_residual(x, lam, r).add_f64(self.penalty(r))
    }

    /// `(rho/2)|r|^2`.
    pub fn penalty(&self, r: &DVector<f64>) -> f64 {
        0.5 * self.rho * r.norm_squared()
    }
}

/// Squared spectral norm of `A` by power iteration on `A'A`.
///
/// The start vector comes from a fixed seed and the loop stops once the
/// Rayleigh quotient changes by at most `1e-10` relative, or after 1000
/// iterations. Returns 0 for the zero matrix.
pub fn operator_norm_sq(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 || a.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let mut rng = SplitMix64::new(POWER_ITER_SEED);
    let mut v = rng.symmetric_vector(n);
    let mut norm = v.norm();
    if norm == 0.0 {
        v = DVector::from_element(n, 1.0);
        norm = v.norm();
    }
    v /= norm;

    let mut quotient = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let av = a * &v;
        let w = a.tr_mul(&av);
        let next = av.norm_squared();
        let wn = w.norm();
        if wn == 0.0 {
            // v is in the null space; restart along a column direction.
            v = a.row(0).transpose().normalize();
            continue;
        }
        v = w / wn;
        let converged = (next - quotient).abs() <= POWER_ITER_TOL * next;
        quotient = next;
        if converged {
            break;
        }
    }
    // Final Rayleigh quotient at the normalized iterate.
    (a * &v).norm_squared().max(quotient)
}
