//! Deterministic generators for feasible benchmark instances.
//!
//! Every random draw comes from [`SplitMix64`] seeded with the spec's seed and
//! mapped to `uniform(-1, 1)` (or `uniform(0, 1)` where signs must be fixed).
//! Matrices are filled row-major. Right-hand sides are computed as `b = A x0`
//! from a generated witness `x0` in `dom f`, so every instance is feasible.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::atoms::{AtomKind, Block, CompositeFunction, ConvexAtom, SmoothQuadratic};
use crate::error::{Error, Result};
use crate::problem::{DualReference, ProblemInstance};
use crate::rng::SplitMix64;

/// Ridge added to the random Gram matrix of the `qp` family.
const QP_RIDGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Strongly convex quadratic objective with a closed-form dual optimum.
    Qp,
    /// `min |x|_1 s.t. Ax = b` with a sparse witness.
    BasisPursuit,
    /// `min c'x s.t. Ax = b, x >= 0` with `c >= 0`.
    NonnegLp,
    /// Nonnegativity with duplicated constraint rows; inner minimizers are
    /// not unique and `f` is not coercive.
    RankDeficientBox,
    /// Nonnegativity with `A = I`, `b = 1`, where the smoothness constant of
    /// the dual is attained.
    TightBound,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Qp,
        Family::BasisPursuit,
        Family::NonnegLp,
        Family::RankDeficientBox,
        Family::TightBound,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Qp => "qp",
            Family::BasisPursuit => "basis_pursuit",
            Family::NonnegLp => "nonneg_lp",
            Family::RankDeficientBox => "rank_deficient_box",
            Family::TightBound => "tight_bound_family",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown benchmark family `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub family: Family,
    pub d: usize,
    pub p: usize,
    pub rho: f64,
    pub seed: u64,
}

impl BenchmarkSpec {
    pub fn new(family: Family, d: usize, p: usize, rho: f64, seed: u64) -> Self {
        Self {
            family,
            d,
            p,
            rho,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if self.p == 0 {
            return Err(Error::InvalidParameter("p must be at least 1".into()));
        }
        match self.family {
            Family::TightBound if self.d != self.p => Err(Error::InvalidParameter(format!(
                "{} requires d = p, got d = {}, p = {}",
                self.family, self.d, self.p
            ))),
            _ if self.d < self.p => Err(Error::InvalidParameter(format!(
                "{} requires d >= p, got d = {}, p = {}",
                self.family, self.d, self.p
            ))),
            _ => Ok(()),
        }
    }

    fn name(&self) -> String {
        format!(
            "{}-d{}-p{}-rho{}-seed{}",
            self.family, self.d, self.p, self.rho, self.seed
        )
    }
}

/// Builds the instance described by `spec`, with its feasible witness and,
/// for `qp` and `tight_bound_family`, the dual optimum.
pub fn generate(spec: &BenchmarkSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let (d, p) = (spec.d, spec.p);
    let name = spec.name();
    match spec.family {
        Family::Qp => {
            let a = rng.symmetric_matrix(p, d);
            let x0 = rng.symmetric_vector(d);
            let m = rng.symmetric_matrix(d, d);
            let q = rng.symmetric_vector(d);
            let mut q_mat = m.tr_mul(&m) / d as f64;
            for i in 0..d {
                q_mat[(i, i)] += QP_RIDGE;
            }
            // Exact symmetry for validation and for the KKT solve.
            let q_mat = (&q_mat + q_mat.transpose()) * 0.5;
            let b = &a * &x0;
            let reference = qp_kkt(&q_mat, &q, &a, &b)?;
            let f = CompositeFunction::from_kind(AtomKind::Quadratic { q_mat, q, c: 0.0 }, d)?;
            ProblemInstance::new(name, f, a, b, spec.rho)?
                .with_witness(x0)?
                .with_reference(reference)
        }
        Family::BasisPursuit => {
            let a = rng.symmetric_matrix(p, d);
            let k = (p / 4).max(1);
            let mut x0 = DVector::zeros(d);
            // Partial Fisher-Yates for the support.
            let mut idx: Vec<usize> = (0..d).collect();
            for i in 0..k {
                let j = i + (rng.next_u64() % (d - i) as u64) as usize;
                idx.swap(i, j);
                x0[idx[i]] = rng.symmetric();
            }
            let b = &a * &x0;
            let f = CompositeFunction::from_kind(AtomKind::L1 { weight: 1.0 }, d)?;
            ProblemInstance::new(name, f, a, b, spec.rho)?.with_witness(x0)
        }
        Family::NonnegLp => {
            let a = rng.symmetric_matrix(p, d);
            let x0 = DVector::from_fn(d, |_, _| rng.next_f64());
            let c = DVector::from_fn(d, |_, _| rng.next_f64());
            let b = &a * &x0;
            let f = CompositeFunction::new(
                d,
                vec![Block::new(ConvexAtom::new(AtomKind::IndicatorNonneg, d)?, 0)],
                Some(SmoothQuadratic::new(None, c, 0.0)?),
            )?;
            ProblemInstance::new(name, f, a, b, spec.rho)?.with_witness(x0)
        }
        Family::RankDeficientBox => {
            // ceil(p/2) distinct rows, the first all ones, repeated cyclically.
            let distinct = p.div_ceil(2);
            let mut base = DMatrix::from_element(distinct, d, 1.0);
            for i in 1..distinct {
                for j in 0..d {
                    base[(i, j)] = rng.symmetric();
                }
            }
            let a = DMatrix::from_fn(p, d, |i, j| base[(i % distinct, j)]);
            let x0 = DVector::from_element(d, 1.0);
            let b = &a * &x0;
            let f = CompositeFunction::from_kind(
                AtomKind::IndicatorBox {
                    lo: DVector::zeros(d),
                    hi: DVector::from_element(d, f64::INFINITY),
                },
                d,
            )?;
            ProblemInstance::new(name, f, a, b, spec.rho)?.with_witness(x0)
        }
        Family::TightBound => {
            let a = DMatrix::identity(p, d);
            let x0 = DVector::from_element(d, 1.0);
            let b = &a * &x0;
            let f = CompositeFunction::from_kind(AtomKind::IndicatorNonneg, d)?;
            // x0 = 1 is optimal with multiplier 0 and value 0.
            ProblemInstance::new(name, f, a, b, spec.rho)?
                .with_witness(x0)?
                .with_reference(DualReference {
                    lambda_star: DVector::zeros(p),
                    phi_star: 0.0,
                })
        }
    }
}

/// Dual points where an inner active set changes, for families where these
/// are known in closed form.
pub fn kink_anchors(spec: &BenchmarkSpec) -> Vec<DVector<f64>> {
    match spec.family {
        // x+ = max(1 - lambda/rho, 0) switches at lambda = rho.
        Family::TightBound => vec![DVector::from_element(spec.p, spec.rho)],
        // With all rows equal to ones, s+ = max(d - sum(lambda)/(p rho), 0)
        // hits zero on the hyperplane sum(lambda) = d p rho.
        Family::RankDeficientBox if spec.p <= 2 => {
            vec![DVector::from_element(spec.p, spec.d as f64 * spec.rho)]
        }
        _ => Vec::new(),
    }
}

/// Solves `[Q A'; A 0] [x; lambda] = [-q; b]`, giving the optimum of
/// `0.5 x'Qx + q'x s.t. Ax = b` and its multiplier.
fn qp_kkt(q_mat: &DMatrix<f64>, q: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DualReference> {
    let (p, d) = a.shape();
    let mut kkt = DMatrix::zeros(d + p, d + p);
    kkt.view_mut((0, 0), (d, d)).copy_from(q_mat);
    kkt.view_mut((0, d), (d, p)).copy_from(&a.transpose());
    kkt.view_mut((d, 0), (p, d)).copy_from(a);
    let mut rhs = DVector::zeros(d + p);
    rhs.rows_mut(0, d).copy_from(&(-q));
    rhs.rows_mut(d, p).copy_from(b);
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidProblem("singular KKT system".into()))?;
    let x = sol.rows(0, d).into_owned();
    let lambda_star = sol.rows(d, p).into_owned();
    let phi_star = 0.5 * x.dot(&(q_mat * &x)) + q.dot(&x);
    Ok(DualReference { lambda_star, phi_star })
}
