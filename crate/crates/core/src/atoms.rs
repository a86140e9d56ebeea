//! Closed proper convex functions with exact value and proximal oracles.
//!
//! A [`CompositeFunction`] is a separable sum of [`ConvexAtom`]s over a
//! partition of the coordinates, plus an optional [`SmoothQuadratic`] that
//! acts on the whole vector.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::ext_real::ExtReal;

/// Relative slack for L2-ball membership; projections land on the sphere only
/// up to rounding.
const BALL_MEMBERSHIP_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum AtomKind {
    Zero,
    /// `0.5 x'Qx + q'x + c` with `Q` symmetric positive semidefinite.
    Quadratic {
        q_mat: DMatrix<f64>,
        q: DVector<f64>,
        c: f64,
    },
    /// `weight * |x|_1`.
    L1 {
        weight: f64,
    },
    /// Indicator of `lo <= x <= hi`; bounds may be infinite.
    IndicatorBox {
        lo: DVector<f64>,
        hi: DVector<f64>,
    },
    IndicatorNonneg,
    IndicatorL2Ball {
        radius: f64,
        center: DVector<f64>,
    },
    /// `c'x`.
    Linear {
        c: DVector<f64>,
    },
}

impl AtomKind {
    pub fn name(&self) -> &'static str {
        match self {
            AtomKind::Zero => "zero",
            AtomKind::Quadratic { .. } => "quadratic",
            AtomKind::L1 { .. } => "l1",
            AtomKind::IndicatorBox { .. } => "box",
            AtomKind::IndicatorNonneg => "nonneg",
            AtomKind::IndicatorL2Ball { .. } => "l2_ball",
            AtomKind::Linear { .. } => "linear",
        }
    }
}

/// A validated atom of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexAtom {
    kind: AtomKind,
    dim: usize,
    /// Largest eigenvalue of `Q` for quadratic atoms, zero otherwise.
    curvature: f64,
}

impl ConvexAtom {
    pub fn new(kind: AtomKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidAtom("dimension must be positive".into()));
        }
        let mut curvature = 0.0;
        match &kind {
            AtomKind::Zero | AtomKind::IndicatorNonneg => {}
            AtomKind::Quadratic { q_mat, q, c } => {
                check_dim("quadratic Q rows", dim, q_mat.nrows())?;
                check_dim("quadratic Q columns", dim, q_mat.ncols())?;
                check_dim("quadratic q", dim, q.len())?;
                if !c.is_finite() {
                    return Err(Error::InvalidAtom("quadratic constant must be finite".into()));
                }
                curvature = validate_psd(q_mat)?;
            }
            AtomKind::L1 { weight } => {
                if !(weight.is_finite() && *weight >= 0.0) {
                    return Err(Error::InvalidAtom(format!(
                        "l1 weight must be finite and nonnegative, got {weight}"
                    )));
                }
            }
            AtomKind::IndicatorBox { lo, hi } => {
                check_dim("box lower bound", dim, lo.len())?;
                check_dim("box upper bound", dim, hi.len())?;
                for (i, (l, h)) in lo.iter().zip(hi.iter()).enumerate() {
                    if l.is_nan() || h.is_nan() || *l == f64::INFINITY || *h == f64::NEG_INFINITY {
                        return Err(Error::InvalidAtom(format!("box bound {i} is not usable")));
                    }
                    if l > h {
                        return Err(Error::InvalidAtom(format!(
                            "box requires lo <= hi, but lo[{i}] = {l} > hi[{i}] = {h}"
                        )));
                    }
                }
            }
            AtomKind::IndicatorL2Ball { radius, center } => {
                check_dim("ball center", dim, center.len())?;
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidAtom(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
                if center.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidAtom("ball center must be finite".into()));
                }
            }
            AtomKind::Linear { c } => {
                check_dim("linear coefficient", dim, c.len())?;
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidAtom("linear coefficient must be finite".into()));
                }
            }
        }
        Ok(Self { kind, dim, curvature })
    }

    pub fn kind(&self) -> &AtomKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value at `x`; `x` must have length `dim`.
    pub fn value(&self, x: &[f64]) -> ExtReal {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            AtomKind::Zero => ExtReal::ZERO,
            AtomKind::Quadratic { q_mat, q, c } => ExtReal::Finite(quadratic_form(q_mat, q, *c, x)),
            AtomKind::L1 { weight } => ExtReal::Finite(weight * x.iter().map(|v| v.abs()).sum::<f64>()),
            AtomKind::IndicatorBox { lo, hi } => {
                let inside = x
                    .iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .all(|(v, (l, h))| *l <= *v && *v <= *h);
                indicator(inside)
            }
            AtomKind::IndicatorNonneg => indicator(x.iter().all(|v| *v >= 0.0)),
            AtomKind::IndicatorL2Ball { radius, center } => {
                let dist = x
                    .iter()
                    .zip(center.iter())
                    .map(|(v, c)| (v - c) * (v - c))
                    .sum::<f64>()
                    .sqrt();
                indicator(dist <= radius * (1.0 + BALL_MEMBERSHIP_TOL))
            }
            AtomKind::Linear { c } => ExtReal::Finite(c.iter().zip(x).map(|(a, b)| a * b).sum()),
        }
    }

    /// Writes `prox_{alpha f}(v)` into `out`. Quadratic atoms need the
    /// factorization of `I + alpha Q`, supplied by [`ProxOperator`].
    fn prox_into(&self, alpha: f64, v: &[f64], out: &mut [f64], factor: Option<&Cholesky<f64, Dyn>>) {
        match &self.kind {
            AtomKind::Zero => out.copy_from_slice(v),
            AtomKind::Quadratic { q, .. } => {
                let factor = factor.expect("quadratic atom prox requires a factorization");
                let rhs = DVector::from_column_slice(v) - q * alpha;
                out.copy_from_slice(factor.solve(&rhs).as_slice());
            }
            AtomKind::L1 { weight } => {
                let thresh = alpha * weight;
                for (o, x) in out.iter_mut().zip(v) {
                    *o = soft_threshold(*x, thresh);
                }
            }
            AtomKind::IndicatorBox { lo, hi } => {
                for (i, (o, x)) in out.iter_mut().zip(v).enumerate() {
                    *o = x.max(lo[i]).min(hi[i]);
                }
            }
            AtomKind::IndicatorNonneg => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o = x.max(0.0);
                }
            }
            AtomKind::IndicatorL2Ball { radius, center } => {
                let dist = v
                    .iter()
                    .zip(center.iter())
                    .map(|(x, c)| (x - c) * (x - c))
                    .sum::<f64>()
                    .sqrt();
                let scale = if dist <= *radius { 1.0 } else { radius / dist };
                for (i, (o, x)) in out.iter_mut().zip(v).enumerate() {
                    *o = center[i] + (x - center[i]) * scale;
                }
            }
            AtomKind::Linear { c } => {
                for (i, (o, x)) in out.iter_mut().zip(v).enumerate() {
                    *o = x - alpha * c[i];
                }
            }
        }
    }
}

/// `0.5 x'Qx + q'x + c` without allocating.
fn quadratic_form(q_mat: &DMatrix<f64>, q: &DVector<f64>, c: f64, x: &[f64]) -> f64 {
    let n = x.len();
    let mut quad = 0.0;
    for j in 0..n {
        let col = q_mat.column(j);
        let mut acc = 0.0;
        for i in 0..n {
            acc += col[i] * x[i];
        }
        quad += acc * x[j];
    }
    0.5 * quad + q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c
}

fn indicator(inside: bool) -> ExtReal {
    if inside {
        ExtReal::ZERO
    } else {
        ExtReal::PosInf
    }
}

pub fn soft_threshold(x: f64, thresh: f64) -> f64 {
    if x > thresh {
        x - thresh
    } else if x < -thresh {
        x + thresh
    } else {
        0.0
    }
}

/// Checks symmetry and positive semidefiniteness, returning the largest
/// eigenvalue.
fn validate_psd(q_mat: &DMatrix<f64>) -> Result<f64> {
    let n = q_mat.nrows();
    let scale = q_mat.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (q_mat[(i, j)] - q_mat[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidAtom(format!(
                    "quadratic Q is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if q_mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidAtom("quadratic Q must be finite".into()));
    }
    let eig = SymmetricEigen::new(q_mat.clone()).eigenvalues;
    let min = eig.min();
    let max = eig.max();
    let norm = eig.amax();
    if min < -PSD_TOL * norm {
        return Err(Error::InvalidAtom(format!(
            "quadratic Q is not positive semidefinite (smallest eigenvalue {min:.3e})"
        )));
    }
    Ok(max.max(0.0))
}

/// An atom applied to the coordinates `start..end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub atom: ConvexAtom,
    pub start: usize,
    pub end: usize,
}

impl Block {
    pub fn new(atom: ConvexAtom, start: usize) -> Self {
        let end = start + atom.dim();
        Self { atom, start, end }
    }
}

/// `0.5 x'Hx + g'x + c` over the full vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothQuadratic {
    hessian: Option<DMatrix<f64>>,
    linear: DVector<f64>,
    constant: f64,
    curvature: f64,
}

impl SmoothQuadratic {
    pub fn new(hessian: Option<DMatrix<f64>>, linear: DVector<f64>, constant: f64) -> Result<Self> {
        let d = linear.len();
        let curvature = match &hessian {
            Some(h) => {
                check_dim("smooth hessian rows", d, h.nrows())?;
                check_dim("smooth hessian columns", d, h.ncols())?;
                validate_psd(h)?
            }
            None => 0.0,
        };
        if linear.iter().any(|v| !v.is_finite()) || !constant.is_finite() {
            return Err(Error::InvalidAtom("smooth part must be finite".into()));
        }
        Ok(Self {
            hessian,
            linear,
            constant,
            curvature,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            hessian: None,
            linear: DVector::zeros(dim),
            constant: 0.0,
            curvature: 0.0,
        }
    }

    pub fn hessian(&self) -> Option<&DMatrix<f64>> {
        self.hessian.as_ref()
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Largest eigenvalue of the Hessian.
    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn is_zero(&self) -> bool {
        self.hessian.is_none() && self.constant == 0.0 && self.linear.iter().all(|v| *v == 0.0)
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.value_slice(x.as_slice())
    }

    fn value_slice(&self, x: &[f64]) -> f64 {
        match &self.hessian {
            Some(h) => quadratic_form(h, &self.linear, self.constant, x),
            None => self.linear.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.constant,
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.hessian {
            Some(h) => h * x + &self.linear,
            None => self.linear.clone(),
        }
    }
}

/// A separable sum of atoms over a partition of `0..dim` plus an optional
/// smooth quadratic term.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeFunction {
    dim: usize,
    blocks: Vec<Block>,
    smooth: Option<SmoothQuadratic>,
}

impl CompositeFunction {
    /// Blocks may arrive in any order; their ranges must partition `0..dim`.
    pub fn new(dim: usize, mut blocks: Vec<Block>, smooth: Option<SmoothQuadratic>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidAtom("function dimension must be positive".into()));
        }
        blocks.sort_by_key(|b| b.start);
        let mut next = 0;
        for b in &blocks {
            if b.end != b.start + b.atom.dim() {
                return Err(Error::InvalidAtom(format!(
                    "block [{}, {}) does not match its atom dimension {}",
                    b.start,
                    b.end,
                    b.atom.dim()
                )));
            }
            if b.start != next {
                return Err(Error::InvalidAtom(format!(
                    "block ranges must partition 0..{dim}: expected a block starting at {next}, found [{}, {})",
                    b.start, b.end
                )));
            }
            next = b.end;
        }
        if next != dim {
            return Err(Error::InvalidAtom(format!(
                "block ranges must partition 0..{dim}: coverage stops at {next}"
            )));
        }
        if let Some(s) = &smooth {
            check_dim("smooth part", dim, s.linear.len())?;
        }
        Ok(Self { dim, blocks, smooth })
    }

    /// A single atom over all coordinates.
    pub fn single(atom: ConvexAtom) -> Self {
        let dim = atom.dim();
        Self {
            dim,
            blocks: vec![Block::new(atom, 0)],
            smooth: None,
        }
    }

    /// Shorthand for `CompositeFunction::single(ConvexAtom::new(kind, dim)?)`.
    pub fn from_kind(kind: AtomKind, dim: usize) -> Result<Self> {
        Ok(Self::single(ConvexAtom::new(kind, dim)?))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn smooth(&self) -> Option<&SmoothQuadratic> {
        self.smooth.as_ref()
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<ExtReal> {
        check_dim("point", self.dim, x.len())?;
        Ok(self.value_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: &DVector<f64>) -> ExtReal {
        self.value_slice(x.as_slice())
    }

    /// Value at a slice of length `dim`, without allocating.
    pub fn value_slice(&self, xs: &[f64]) -> ExtReal {
        debug_assert_eq!(xs.len(), self.dim);
        let mut total = ExtReal::ZERO;
        for b in &self.blocks {
            total = total + b.atom.value(&xs[b.start..b.end]);
            if !total.is_finite() {
                return ExtReal::PosInf;
            }
        }
        match &self.smooth {
            Some(s) => total.add_f64(s.value_slice(xs)),
            None => total,
        }
    }

    /// Builds the proximal map for step `alpha`, factoring quadratic blocks
    /// once.
    pub fn prox_operator(&self, alpha: f64) -> Result<ProxOperator<'_>> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prox step must be positive, got {alpha}"
            )));
        }
        let factor_for = |q_mat: &DMatrix<f64>| {
            let n = q_mat.nrows();
            let m = DMatrix::identity(n, n) + q_mat * alpha;
            Cholesky::new(m).ok_or_else(|| Error::ProxUnavailable("I + alpha Q is not positive definite".into()))
        };

        let mut mode = ProxMode::Separable { shift: None };
        if let Some(s) = &self.smooth {
            match &s.hessian {
                None => {
                    mode = ProxMode::Separable {
                        shift: Some(&s.linear * alpha),
                    }
                }
                Some(h) => {
                    if self.blocks.iter().any(|b| b.atom.kind != AtomKind::Zero) {
                        return Err(Error::ProxUnavailable(
                            "a smooth quadratic with nonzero Hessian combined with nonsmooth blocks".into(),
                        ));
                    }
                    mode = ProxMode::Quadratic {
                        factor: factor_for(h)?,
                        shift: &s.linear * alpha,
                    };
                }
            }
        }

        let mut factors = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            factors.push(match &b.atom.kind {
                AtomKind::Quadratic { q_mat, .. } => Some(factor_for(q_mat)?),
                _ => None,
            });
        }
        Ok(ProxOperator {
            f: self,
            alpha,
            factors,
            mode,
        })
    }

    /// `prox_{alpha f}(v)`.
    pub fn prox(&self, alpha: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("prox input", self.dim, v.len())?;
        Ok(self.prox_operator(alpha)?.apply(v))
    }

    /// Prox-gradient fixed-point residual `(1/t)|x - prox_{t f}(x - t g)|`,
    /// which vanishes exactly when `x` minimizes `f` plus a smooth term whose
    /// gradient at `x` is `g`.
    pub fn prox_residual(&self, x: &DVector<f64>, grad_smooth: &DVector<f64>, t: f64) -> Result<f64> {
        check_dim("point", self.dim, x.len())?;
        check_dim("smooth gradient", self.dim, grad_smooth.len())?;
        let op = self.prox_operator(t)?;
        Ok(op.residual(x, grad_smooth))
    }

    /// Moreau envelope `M_{gamma f}(x)` and its gradient `(x - prox)/gamma`.
    pub fn moreau_envelope(&self, gamma: f64, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let p = self.prox(gamma, x)?;
        let diff = x - &p;
        let fp = self
            .value_unchecked(&p)
            .finite()
            .ok_or_else(|| Error::InvalidProblem("prox landed outside the domain".into()))?;
        Ok((fp + diff.norm_squared() / (2.0 * gamma), diff / gamma))
    }

    /// Separates the function into a prox-friendly part and a smooth
    /// quadratic. Quadratic and linear blocks move into the smooth part and
    /// are replaced by zero atoms.
    pub fn split_smooth(&self) -> (CompositeFunction, SmoothQuadratic) {
        let d = self.dim;
        let mut hessian: Option<DMatrix<f64>> = self.smooth.as_ref().and_then(|s| s.hessian.clone());
        let mut linear = self
            .smooth
            .as_ref()
            .map(|s| s.linear.clone())
            .unwrap_or_else(|| DVector::zeros(d));
        let mut constant = self.smooth.as_ref().map_or(0.0, |s| s.constant);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            match &b.atom.kind {
                AtomKind::Quadratic { q_mat, q, c } => {
                    let h = hessian.get_or_insert_with(|| DMatrix::zeros(d, d));
                    let n = b.end - b.start;
                    let mut view = h.view_mut((b.start, b.start), (n, n));
                    view += q_mat;
                    let mut rows = linear.rows_mut(b.start, n);
                    rows += q;
                    constant += c;
                    blocks.push(zero_block(b));
                }
                AtomKind::Linear { c } => {
                    let n = b.end - b.start;
                    let mut rows = linear.rows_mut(b.start, n);
                    rows += c;
                    blocks.push(zero_block(b));
                }
                _ => blocks.push(b.clone()),
            }
        }
        let curvature = hessian
            .as_ref()
            .map(|h| SymmetricEigen::new(h.clone()).eigenvalues.max().max(0.0))
            .unwrap_or(0.0);
        let smooth = SmoothQuadratic {
            hessian,
            linear,
            constant,
            curvature,
        };
        let nonsmooth = CompositeFunction {
            dim: d,
            blocks,
            smooth: None,
        };
        (nonsmooth, smooth)
    }

    /// Largest curvature among quadratic blocks and the smooth part.
    pub fn curvature(&self) -> f64 {
        let blocks = self.blocks.iter().map(|b| b.atom.curvature).fold(0.0, f64::max);
        blocks + self.smooth.as_ref().map_or(0.0, |s| s.curvature)
    }
}

fn zero_block(b: &Block) -> Block {
    Block {
        atom: ConvexAtom {
            kind: AtomKind::Zero,
            dim: b.atom.dim,
            curvature: 0.0,
        },
        start: b.start,
        end: b.end,
    }
}

#[derive(Debug)]
enum ProxMode {
    /// Blockwise prox, optionally after subtracting `alpha * g` for a linear
    /// smooth part.
    Separable { shift: Option<DVector<f64>> },
    /// All blocks are zero; solve `(I + alpha H) y = v - alpha g`.
    Quadratic {
        factor: Cholesky<f64, Dyn>,
        shift: DVector<f64>,
    },
}

/// The proximal map of a [`CompositeFunction`] for one fixed step, with any
/// needed factorizations precomputed.
#[derive(Debug)]
pub struct ProxOperator<'a> {
    f: &'a CompositeFunction,
    alpha: f64,
    factors: Vec<Option<Cholesky<f64, Dyn>>>,
    mode: ProxMode,
}

impl ProxOperator<'_> {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(v.len(), self.f.dim);
        match &self.mode {
            ProxMode::Quadratic { factor, shift } => factor.solve(&(v - shift)),
            ProxMode::Separable { shift } => {
                let shifted;
                let input = match shift {
                    Some(s) => {
                        shifted = v - s;
                        &shifted
                    }
                    None => v,
                };
                let mut out = DVector::zeros(v.len());
                let src = input.as_slice();
                let dst = out.as_mut_slice();
                for (b, factor) in self.f.blocks.iter().zip(&self.factors) {
                    b.atom.prox_into(
                        self.alpha,
                        &src[b.start..b.end],
                        &mut dst[b.start..b.end],
                        factor.as_ref(),
                    );
                }
                out
            }
        }
    }

    /// `(1/alpha)|x - prox(x - alpha g)|`.
    pub fn residual(&self, x: &DVector<f64>, grad_smooth: &DVector<f64>) -> f64 {
        let p = self.apply(&(x - grad_smooth * self.alpha));
        (x - p).norm() / self.alpha
    }
}
