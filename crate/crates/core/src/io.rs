//! Problem files (JSON), trace files (CSV) and certificate reports (JSON).
//!
//! A problem file looks like
//!
//! ```json
//! {
//!   "name": "example",
//!   "d": 2,
//!   "p": 1,
//!   "rho": 1.0,
//!   "atoms": [{ "kind": "l1", "params": { "weight": 1.0 }, "range": [0, 2] }],
//!   "A": [[1.0, 1.0]],
//!   "b": [1.0]
//! }
//! ```
//!
//! with optional `smooth` (`{"hessian": [[..]] | null, "linear": [..],
//! "constant": c}`), `witness_x0`, `lambda_star` and `phi_star` fields.
//! Infinite box bounds are written as `null`. Atom kinds and their params:
//!
//! | kind        | params                                   |
//! |-------------|------------------------------------------|
//! | `zero`      | none                                     |
//! | `quadratic` | `Q` (rows), `q`, `c`                     |
//! | `l1`        | `weight`                                 |
//! | `box`       | `lo`, `hi` (entries may be `null`)       |
//! | `nonneg`    | none                                     |
//! | `l2_ball`   | `radius`, `center`                       |
//! | `linear`    | `c`                                      |

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::atoms::{AtomKind, Block, CompositeFunction, ConvexAtom, SmoothQuadratic};
use crate::dual::SolveTrace;
use crate::error::{Error, Result};
use crate::problem::{DualReference, ProblemInstance};
use crate::verify::Certificate;

pub const TRACE_HEADER: &str = "k,phi_est,grad_norm,primal_obj,inner_iters";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    pub d: usize,
    pub p: usize,
    pub rho: f64,
    pub atoms: Vec<AtomEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth: Option<SmoothEntry>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomEntry {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
    pub range: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothEntry {
    #[serde(default)]
    pub hessian: Option<Vec<Vec<f64>>>,
    pub linear: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticParams {
    #[serde(rename = "Q")]
    q_mat: Vec<Vec<f64>>,
    q: Vec<f64>,
    #[serde(default)]
    c: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct L1Params {
    weight: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxParams {
    lo: Vec<Option<f64>>,
    hi: Vec<Option<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BallParams {
    radius: f64,
    center: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    c: Vec<f64>,
}

fn params<T: serde::de::DeserializeOwned>(kind: &str, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("params of `{kind}` atom: {e}")))
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Parse(format!(
            "{what}: row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn bound(v: Option<f64>, inf: f64) -> f64 {
    v.unwrap_or(inf)
}

fn atom_from_entry(entry: &AtomEntry) -> Result<Block> {
    let [lo, hi] = entry.range;
    if hi <= lo {
        return Err(Error::Parse(format!("atom range [{lo}, {hi}) is empty")));
    }
    let dim = hi - lo;
    let p = &entry.params;
    let kind = match entry.kind.as_str() {
        "zero" => AtomKind::Zero,
        "nonneg" => AtomKind::IndicatorNonneg,
        "quadratic" => {
            let qp: QuadraticParams = params("quadratic", p)?;
            AtomKind::Quadratic {
                q_mat: matrix_from_rows(&qp.q_mat, "quadratic Q")?,
                q: DVector::from_vec(qp.q),
                c: qp.c,
            }
        }
        "l1" => AtomKind::L1 {
            weight: params::<L1Params>("l1", p)?.weight,
        },
        "box" => {
            let bp: BoxParams = params("box", p)?;
            AtomKind::IndicatorBox {
                lo: DVector::from_iterator(bp.lo.len(), bp.lo.iter().map(|v| bound(*v, f64::NEG_INFINITY))),
                hi: DVector::from_iterator(bp.hi.len(), bp.hi.iter().map(|v| bound(*v, f64::INFINITY))),
            }
        }
        "l2_ball" => {
            let bp: BallParams = params("l2_ball", p)?;
            AtomKind::IndicatorL2Ball {
                radius: bp.radius,
                center: DVector::from_vec(bp.center),
            }
        }
        "linear" => AtomKind::Linear {
            c: DVector::from_vec(params::<LinearParams>("linear", p)?.c),
        },
        other => return Err(Error::Parse(format!("unknown atom kind `{other}`"))),
    };
    Ok(Block::new(ConvexAtom::new(kind, dim)?, lo))
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn entry_from_block(b: &Block) -> AtomEntry {
    let vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<f64>>();
    let params = match b.atom.kind() {
        AtomKind::Zero | AtomKind::IndicatorNonneg => Value::Null,
        AtomKind::Quadratic { q_mat, q, c } => json!({ "Q": matrix_to_rows(q_mat), "q": vec(q), "c": c }),
        AtomKind::L1 { weight } => json!({ "weight": weight }),
        AtomKind::IndicatorBox { lo, hi } => json!({
            "lo": lo.iter().map(|v| finite_or_null(*v)).collect::<Vec<_>>(),
            "hi": hi.iter().map(|v| finite_or_null(*v)).collect::<Vec<_>>(),
        }),
        AtomKind::IndicatorL2Ball { radius, center } => json!({ "radius": radius, "center": vec(center) }),
        AtomKind::Linear { c } => json!({ "c": vec(c) }),
    };
    AtomEntry {
        kind: b.atom.kind().name().to_string(),
        params,
        range: [b.start, b.end],
    }
}

impl ProblemFile {
    pub fn from_instance(pb: &ProblemInstance) -> Self {
        let vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<f64>>();
        Self {
            name: pb.name.clone(),
            d: pb.dim(),
            p: pb.num_constraints(),
            rho: pb.rho(),
            atoms: pb.f().blocks().iter().map(entry_from_block).collect(),
            smooth: pb.f().smooth().map(|s| SmoothEntry {
                hessian: s.hessian().map(matrix_to_rows),
                linear: vec(s.linear()),
                constant: s.constant(),
            }),
            a: matrix_to_rows(pb.a()),
            b: vec(pb.b()),
            witness_x0: pb.witness().map(vec),
            lambda_star: pb.reference().map(|r| vec(&r.lambda_star)),
            phi_star: pb.reference().map(|r| r.phi_star),
        }
    }

    pub fn into_instance(self) -> Result<ProblemInstance> {
        if self.a.len() != self.p {
            return Err(Error::Parse(format!("A has {} rows but p = {}", self.a.len(), self.p)));
        }
        let a = matrix_from_rows(&self.a, "A")?;
        if a.ncols() != self.d {
            return Err(Error::Parse(format!("A has {} columns but d = {}", a.ncols(), self.d)));
        }
        let blocks = self.atoms.iter().map(atom_from_entry).collect::<Result<Vec<_>>>()?;
        let smooth = match self.smooth {
            Some(s) => {
                let hessian = s
                    .hessian
                    .as_deref()
                    .map(|h| matrix_from_rows(h, "smooth hessian"))
                    .transpose()?;
                Some(SmoothQuadratic::new(hessian, DVector::from_vec(s.linear), s.constant)?)
            }
            None => None,
        };
        let f = CompositeFunction::new(self.d, blocks, smooth)?;
        let mut pb = ProblemInstance::new(self.name, f, a, DVector::from_vec(self.b), self.rho)?;
        if let Some(x0) = self.witness_x0 {
            pb = pb.with_witness(DVector::from_vec(x0))?;
        }
        match (self.lambda_star, self.phi_star) {
            (Some(l), Some(phi_star)) => {
                pb = pb.with_reference(DualReference {
                    lambda_star: DVector::from_vec(l),
                    phi_star,
                })?;
            }
            (None, None) => {}
            _ => return Err(Error::Parse("lambda_star and phi_star must appear together".into())),
        }
        Ok(pb)
    }
}

pub fn problem_to_json(pb: &ProblemInstance) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&ProblemFile::from_instance(pb))?;
    s.push('\n');
    Ok(s)
}

pub fn problem_from_json(text: &str) -> Result<ProblemInstance> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_instance()
}

pub fn read_problem(path: &Path) -> Result<ProblemInstance> {
    problem_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_problem(path: &Path, pb: &ProblemInstance) -> Result<()> {
    Ok(std::fs::write(path, problem_to_json(pb)?)?)
}

/// Formats with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn trace_to_csv(trace: &SolveTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.k,
            fmt_f64(r.phi_est),
            fmt_f64(r.grad_norm),
            fmt_f64(r.primal_obj.to_f64()),
            r.inner_iters
        );
    }
    out
}

pub fn certificates_to_json(certs: &[Certificate]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(certs)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{alm, OuterSettings};
    use crate::generate::{generate, BenchmarkSpec, Family};
    use crate::problem::DualPoint;
    use proptest::prelude::*;

    #[test]
    fn parses_a_handwritten_file() {
        let text = r#"{
            "name": "mixed", "d": 4, "p": 1, "rho": 2.0,
            "atoms": [
                {"kind": "box", "params": {"lo": [0.0, null], "hi": [1.0, 3.0]}, "range": [0, 2]},
                {"kind": "l2_ball", "params": {"radius": 1.0, "center": [0.0]}, "range": [2, 3]},
                {"kind": "zero", "range": [3, 4]}
            ],
            "smooth": {"hessian": null, "linear": [1, 0, 0, 0]},
            "A": [[1, 1, 1, 1]], "b": [1.5]
        }"#;
        let pb = problem_from_json(text).unwrap();
        assert_eq!(pb.dim(), 4);
        assert_eq!(pb.rho(), 2.0);
        match pb.f().blocks()[0].atom.kind() {
            AtomKind::IndicatorBox { lo, .. } => assert_eq!(lo[1], f64::NEG_INFINITY),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_files() {
        let bad = [
            "{",
            r#"{"name":"x","d":2,"p":1,"rho":1,"atoms":[{"kind":"zero","range":[0,2]}],"A":[[1,2,3]],"b":[0]}"#,
            r#"{"name":"x","d":2,"p":2,"rho":1,"atoms":[{"kind":"zero","range":[0,2]}],"A":[[1,2],[1]],"b":[0,0]}"#,
            r#"{"name":"x","d":2,"p":1,"rho":1,"atoms":[{"kind":"zero","range":[0,1]}],"A":[[1,2]],"b":[0]}"#,
            r#"{"name":"x","d":1,"p":1,"rho":1,"atoms":[{"kind":"cube","range":[0,1]}],"A":[[1]],"b":[0]}"#,
            r#"{"name":"x","d":1,"p":1,"rho":-1,"atoms":[{"kind":"zero","range":[0,1]}],"A":[[1]],"b":[0]}"#,
            r#"{"name":"x","d":1,"p":1,"rho":1,"atoms":[{"kind":"l1","params":{"weight":-1},"range":[0,1]}],"A":[[1]],"b":[0]}"#,
            r#"{"name":"x","d":1,"p":1,"rho":1,"atoms":[{"kind":"zero","range":[0,1]}],"A":[[1]],"b":[0],"extra":1}"#,
        ];
        for text in bad {
            assert!(problem_from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn trace_csv_layout() {
        let pb = generate(&BenchmarkSpec::new(Family::Qp, 2, 1, 1.0, 7)).unwrap();
        let trace = alm(&pb, &DualPoint::zeros(1), &OuterSettings::default()).unwrap();
        let csv = trace_to_csv(&trace);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), trace.records.len() + 1);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 5);
        let phi: f64 = fields[1].parse().unwrap();
        assert_eq!(phi.to_bits(), trace.records[0].phi_est.to_bits());
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    proptest! {
        #[test]
        fn generated_instances_round_trip(family_idx in 0usize..5, seed in 0u64..500, rho in 0.1f64..10.0) {
            let family = Family::ALL[family_idx];
            let (d, p) = if family == Family::TightBound { (3, 3) } else { (5, 3) };
            let pb = generate(&BenchmarkSpec::new(family, d, p, rho, seed)).unwrap();
            let text = problem_to_json(&pb).unwrap();
            let back = problem_from_json(&text).unwrap();
            prop_assert_eq!(&back, &pb);
            prop_assert_eq!(problem_to_json(&back).unwrap(), text);
        }
    }
}
