//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p almlab-core --test acceptance`.

use std::time::{Duration, Instant};

use almlab_core::atoms::AtomKind;
use almlab_core::generate::kink_anchors;
use almlab_core::io::{certificates_to_json, problem_to_json, trace_to_csv};
use almlab_core::verify::{
    check_concavity, check_conjugate_identity, check_domain, check_gradient_fd, check_gradient_invariance,
    check_moreau_identity, check_smoothness, integer_lattice, ConjugateSettings, MoreauSettings, SmoothnessSettings,
};
use almlab_core::{
    accelerated_alm, alm, generate, BenchmarkSpec, CompositeFunction, DualPoint, Family, GridSpec, OuterSettings,
    ProblemInstance, SplitMix64, TolSchedule,
};
use nalgebra::{DMatrix, DVector};

const SEED: u64 = 20_241;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: String) -> Outcome {
    Outcome { pass, summary }
}

fn spec(family: Family, d: usize, p: usize, rho: f64) -> BenchmarkSpec {
    BenchmarkSpec::new(family, d, p, rho, SEED)
}

/// Benchmark dimensions: d = 50, p = 20, except `tight_bound` which needs d = p.
fn desk_spec(family: Family) -> BenchmarkSpec {
    match family {
        Family::TightBound => spec(family, 20, 20, 1.0),
        _ => spec(family, 50, 20, 1.0),
    }
}

fn scalar_qp() -> ProblemInstance {
    let f = CompositeFunction::from_kind(
        AtomKind::Quadratic {
            q_mat: DMatrix::identity(1, 1),
            q: DVector::zeros(1),
            c: 0.0,
        },
        1,
    )
    .unwrap();
    ProblemInstance::new("scalar_qp", f, DMatrix::identity(1, 1), DVector::zeros(1), 1.0).unwrap()
}

fn smoothness() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for family in Family::ALL {
        let s = desk_spec(family);
        let pb = generate(&s).unwrap();
        let start = Instant::now();
        let settings = SmoothnessSettings::new(10.0, 200, 1e-10, SEED).with_anchors(&kink_anchors(&s));
        let cert = check_smoothness(&pb, &settings).unwrap();
        let elapsed = start.elapsed();
        let ratio = cert.details["max_ratio"];
        let ok = ratio <= 1.0 / pb.rho() + 1e-6 && elapsed < Duration::from_secs(60);
        pass &= ok;
        notes.push(format!("{family}: ratio {ratio:.9} in {:.1}s", elapsed.as_secs_f64()));
    }
    outcome(pass, format!("max ratio <= 1/rho + 1e-6 [{}]", notes.join("; ")))
}

fn tightness() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for rho in [0.5, 1.0, 2.0] {
        for d in [1, 2] {
            let s = spec(Family::TightBound, d, d, rho);
            let pb = generate(&s).unwrap();
            let settings = SmoothnessSettings::new(10.0, 200, 1e-10, SEED).with_anchors(&kink_anchors(&s));
            let ratio = check_smoothness(&pb, &settings).unwrap().details["max_ratio"];
            let gap = (ratio - 1.0 / rho).abs();
            pass &= gap <= 1e-3 && ratio <= 1.0 / rho + 1e-6;
            notes.push(format!("rho={rho} d={d}: |ratio - 1/rho| = {gap:.2e}"));
        }
    }
    outcome(pass, format!("sup ratio within 1e-3 of 1/rho [{}]", notes.join("; ")))
}

fn gradient_formula() -> Outcome {
    let h = 1e-4;
    let tol = 1e-10;
    let mut notes = Vec::new();
    let mut pass = true;
    for family in Family::ALL {
        let (d, p) = if family == Family::TightBound { (8, 8) } else { (20, 8) };
        let pb = generate(&spec(family, d, p, 1.0)).unwrap();
        let mut rng = SplitMix64::new(SEED ^ 3);
        let lams: Vec<_> = (0..50).map(|_| rng.ball_point(p, 10.0)).collect();
        let cert = check_gradient_fd(&pb, &lams, h, tol).unwrap();
        let closed_form = matches!(family, Family::Qp | Family::TightBound | Family::RankDeficientBox);
        let bound = if closed_form { 1e-5 } else { cert.threshold };
        pass &= cert.worst_violation <= bound;
        notes.push(format!("{family}: {:.2e} <= {bound:.2e}", cert.worst_violation));
    }
    outcome(pass, format!("central differences vs A x+ - b [{}]", notes.join("; ")))
}

fn moreau_and_conjugate() -> Outcome {
    let tol = 1e-10;
    // (instance, w grid, x grid for the ordinary dual, x grid for the conjugate)
    let cases: Vec<(ProblemInstance, GridSpec, Option<GridSpec>, GridSpec)> = vec![
        (
            scalar_qp(),
            GridSpec::cube(1, -10.0, 10.0, 2001).unwrap(),
            None,
            GridSpec::cube(1, -10.0, 10.0, 2001).unwrap(),
        ),
        (
            generate(&spec(Family::TightBound, 1, 1, 1.0)).unwrap(),
            GridSpec::cube(1, -10.0, 10.0, 2001).unwrap(),
            Some(GridSpec::cube(1, -8.0, 8.0, 1601).unwrap()),
            GridSpec::cube(1, -8.0, 8.0, 1601).unwrap(),
        ),
        (
            generate(&spec(Family::TightBound, 1, 1, 2.0)).unwrap(),
            GridSpec::cube(1, -10.0, 10.0, 2001).unwrap(),
            Some(GridSpec::cube(1, -8.0, 8.0, 1601).unwrap()),
            GridSpec::cube(1, -8.0, 8.0, 1601).unwrap(),
        ),
        (
            generate(&BenchmarkSpec::new(Family::RankDeficientBox, 2, 2, 1.0, 0)).unwrap(),
            GridSpec::cube(2, -10.0, 10.0, 81).unwrap(),
            Some(GridSpec::cube(2, -8.0, 8.0, 65).unwrap()),
            GridSpec::cube(2, -8.0, 8.0, 65).unwrap(),
        ),
        (
            generate(&spec(Family::Qp, 2, 1, 1.0)).unwrap(),
            GridSpec::cube(1, -20.0, 20.0, 4001).unwrap(),
            None,
            GridSpec::cube(2, -50.0, 50.0, 3001).unwrap(),
        ),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (pb, w_grid, x_grid, conj_grid) in cases {
        let lams = integer_lattice(pb.num_constraints(), -3, 3);
        let m = check_moreau_identity(
            &pb,
            &lams,
            &MoreauSettings {
                w_grid,
                x_grid,
                tol_inner: tol,
            },
        )
        .unwrap();
        let c = check_conjugate_identity(
            &pb,
            &lams,
            &ConjugateSettings {
                x_grid: conj_grid,
                tol_inner: tol,
            },
        )
        .unwrap();
        pass &= m.worst_violation <= 1e-3 && c.worst_violation <= 1e-3;
        notes.push(format!(
            "{}: moreau {:.2e}, conjugate {:.2e}",
            pb.name, m.worst_violation, c.worst_violation
        ));
    }
    outcome(
        pass,
        format!("both gaps <= 1e-3 on lambda in {{-3..3}}^p [{}]", notes.join("; ")),
    )
}

fn domain() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (d, p) in [(2, 2), (20, 10), (50, 20)] {
        let pb = generate(&spec(Family::RankDeficientBox, d, p, 1.0)).unwrap();
        let cert = check_domain(&pb, 1e3, 100, 1e-8, SEED).unwrap();
        pass &= cert.pass && cert.num_samples == 100;
        notes.push(format!("d={d} p={p}: {} failures", cert.details["failures"]));
    }
    outcome(
        pass,
        format!(
            "100 multipliers with |lambda| <= 1e3, zero failures [{}]",
            notes.join("; ")
        ),
    )
}

fn invariance() -> Outcome {
    let tol = 1e-10;
    let mut notes = Vec::new();
    let mut pass = true;
    for (d, p) in [(2, 2), (20, 10)] {
        let pb = generate(&spec(Family::RankDeficientBox, d, p, 1.0)).unwrap();
        let lams = [DVector::zeros(p), SplitMix64::new(SEED).ball_point(p, 1.0)];
        for lam in &lams {
            let cert = check_gradient_invariance(&pb, lam, 10, tol, SEED).unwrap();
            let spread = cert.details["x_spread"];
            pass &= cert.worst_violation <= 10.0 * tol && spread >= 0.1;
            notes.push(format!(
                "d={d}: spread {:.1e}, x-spread {spread:.2}",
                cert.worst_violation
            ));
        }
    }
    outcome(
        pass,
        format!(
            "constraint map spread <= 10 tol with x-spread >= 0.1 [{}]",
            notes.join("; ")
        ),
    )
}

fn replay() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for family in Family::ALL {
        let (d, p) = if family == Family::TightBound { (8, 8) } else { (20, 8) };
        let pb = generate(&spec(family, d, p, 1.0)).unwrap();
        let settings = OuterSettings {
            max_outer: 60,
            ..Default::default()
        };
        for accelerated in [false, true] {
            let lam0 = DualPoint::zeros(p);
            let trace = if accelerated {
                accelerated_alm(&pb, &lam0, &settings).unwrap()
            } else {
                alm(&pb, &lam0, &settings).unwrap()
            };
            let mismatches = trace
                .records
                .windows(2)
                .filter(|w| {
                    let base = if accelerated { &w[0].query } else { &w[0].lambda };
                    (0..p).any(|i| w[1].lambda[i] != base[i] + pb.rho() * w[0].constraint_map[i])
                })
                .count();
            pass &= mismatches == 0 && trace.records.len() > 1;
            if !accelerated {
                notes.push(format!("{family}: {} steps", trace.records.len() - 1));
            }
        }
    }
    outcome(
        pass,
        format!("every multiplier step is bit-exact [{}]", notes.join("; ")),
    )
}

/// `phi_rho(lambda)` for `f = 0.5 x'Qx + q'x` from the normal equations
/// `(Q + rho A'A) x = -q - A'lambda + rho A'b`.
fn qp_dual(pb: &ProblemInstance, lam: &DVector<f64>) -> f64 {
    let AtomKind::Quadratic { q_mat, q, c } = pb.f().blocks()[0].atom.kind() else {
        panic!("qp family has a single quadratic block");
    };
    let (a, b, rho) = (pb.a(), pb.b(), pb.rho());
    let lhs = q_mat + a.tr_mul(a) * rho;
    let rhs = -q - a.tr_mul(lam) + a.tr_mul(b) * rho;
    let x = lhs.cholesky().unwrap().solve(&rhs);
    let r = a * &x - b;
    0.5 * x.dot(&(q_mat * &x)) + q.dot(&x) + c + lam.dot(&r) + 0.5 * rho * r.norm_squared()
}

fn rates() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut notes = Vec::new();
    for (d, p, rho) in [(20, 8, 1.0), (30, 12, 0.5), (10, 5, 2.0)] {
        let pb = generate(&spec(Family::Qp, d, p, rho)).unwrap();
        let reference = pb.reference().unwrap();
        let phi_star = qp_dual(&pb, &reference.lambda_star);
        pass &= (phi_star - reference.phi_star).abs() <= 1e-9 * (1.0 + phi_star.abs());
        let lam0 = DualPoint::zeros(p);
        let r0 = (&*lam0 - &reference.lambda_star).norm_squared();
        let settings = OuterSettings {
            max_outer: 201,
            schedule: TolSchedule::Constant(1e-12),
            grad_stop: 1e-11,
            ..Default::default()
        };
        let plain = alm(&pb, &lam0, &settings).unwrap();
        let fast = accelerated_alm(&pb, &lam0, &settings).unwrap();
        let mut worst_plain = f64::NEG_INFINITY;
        let mut worst_fast = f64::NEG_INFINITY;
        for rec in plain.records.iter().filter(|r| (1..=200).contains(&r.k)) {
            let k = rec.k as f64;
            let gap = phi_star - qp_dual(&pb, &rec.lambda);
            worst_plain = worst_plain.max(gap / (r0 / (2.0 * rho * k) * 1.01));
        }
        for rec in fast.records.iter().filter(|r| (1..=200).contains(&r.k)) {
            let k = rec.k as f64;
            let gap = phi_star - qp_dual(&pb, &rec.lambda);
            worst_fast = worst_fast.max(gap / (2.0 * r0 / (rho * (k + 1.0) * (k + 1.0)) * 1.01));
        }
        pass &= worst_plain <= 1.0 && worst_fast <= 1.0;
        notes.push(format!(
            "d={d} p={p} rho={rho}: worst gap/bound plain {worst_plain:.3}, accelerated {worst_fast:.3}"
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    outcome(pass, format!("{} in {:.1}s", notes.join("; "), elapsed.as_secs_f64()))
}

fn atom_kinds(rng: &mut SplitMix64, n: usize) -> Vec<AtomKind> {
    let m = rng.symmetric_matrix(n, n);
    let lo = rng.symmetric_vector(n) - DVector::from_element(n, 1.0);
    vec![
        AtomKind::Zero,
        AtomKind::Quadratic {
            q_mat: m.tr_mul(&m),
            q: rng.symmetric_vector(n),
            c: 0.5,
        },
        AtomKind::L1 { weight: 0.7 },
        AtomKind::IndicatorBox {
            hi: &lo + DVector::from_element(n, 1.5),
            lo,
        },
        AtomKind::IndicatorNonneg,
        AtomKind::IndicatorL2Ball {
            radius: 1.3,
            center: rng.symmetric_vector(n),
        },
        AtomKind::Linear {
            c: rng.symmetric_vector(n),
        },
    ]
}

fn atom_suite() -> Outcome {
    let n = 3;
    let samples = 1000;
    let mut rng = SplitMix64::new(SEED);
    let mut notes = Vec::new();
    let mut pass = true;
    for kind in atom_kinds(&mut rng, n) {
        let name = kind.name();
        let f = CompositeFunction::from_kind(kind, n).unwrap();
        let mut expansive = 0;
        let mut suboptimal = 0;
        let mut worst_fd = 0.0f64;
        for _ in 0..samples {
            let alpha = rng.uniform(0.1, 2.0);
            let u = rng.symmetric_vector(n) * 4.0;
            let v = rng.symmetric_vector(n) * 4.0;
            let (pu, pv) = (f.prox(alpha, &u).unwrap(), f.prox(alpha, &v).unwrap());
            if (&pu - &pv).norm() > (&u - &v).norm() * (1.0 + 1e-12) + 1e-14 {
                expansive += 1;
            }

            let obj = |y: &DVector<f64>| f.value(y).unwrap().add_f64((y - &u).norm_squared() / (2.0 * alpha));
            let best = obj(&pu).to_f64();
            for scale in [1e-3, 1e-1, 1.0] {
                let y = &pu + rng.symmetric_vector(n) * scale;
                let val = obj(&y);
                if val.is_finite() && val.to_f64() < best - 1e-12 * (1.0 + best.abs()) {
                    suboptimal += 1;
                }
            }

            let gamma = alpha;
            let (_, grad) = f.moreau_envelope(gamma, &u).unwrap();
            let h = 1e-6;
            let mut fd = DVector::zeros(n);
            for i in 0..n {
                let mut up = u.clone();
                up[i] += h;
                let mut down = u.clone();
                down[i] -= h;
                fd[i] =
                    (f.moreau_envelope(gamma, &up).unwrap().0 - f.moreau_envelope(gamma, &down).unwrap().0) / (2.0 * h);
            }
            worst_fd = worst_fd.max((&fd - &grad).amax() / grad.amax().max(1.0));
        }
        pass &= expansive == 0 && suboptimal == 0 && worst_fd <= 1e-5;
        notes.push(format!(
            "{name}: {expansive}/{suboptimal} violations, fd {worst_fd:.1e}"
        ));
    }
    outcome(
        pass,
        format!(
            "nonexpansive, optimal, envelope gradient within 1e-5 relative [{}]",
            notes.join("; ")
        ),
    )
}

fn determinism() -> Outcome {
    let run = || {
        let mut bytes = Vec::new();
        for family in Family::ALL {
            let (d, p) = if family == Family::TightBound { (4, 4) } else { (6, 3) };
            let s = BenchmarkSpec::new(family, d, p, 1.0, 7);
            let pb = generate(&s).unwrap();
            bytes.extend(problem_to_json(&pb).unwrap().into_bytes());
            let settings = OuterSettings {
                max_outer: 40,
                ..Default::default()
            };
            let lam0 = DualPoint::zeros(p);
            bytes.extend(trace_to_csv(&alm(&pb, &lam0, &settings).unwrap()).into_bytes());
            bytes.extend(trace_to_csv(&accelerated_alm(&pb, &lam0, &settings).unwrap()).into_bytes());
            let certs = vec![
                check_smoothness(&pb, &SmoothnessSettings::new(10.0, 20, 1e-10, 11)).unwrap(),
                check_concavity(&pb, 10.0, 20, 1e-10, 11).unwrap(),
                check_domain(&pb, 1e3, 10, 1e-8, 11).unwrap(),
            ];
            bytes.extend(certificates_to_json(&certs).unwrap().into_bytes());
        }
        bytes
    };
    let (a, b) = (run(), run());
    outcome(
        a == b,
        format!("two runs produced {} and {} identical bytes", a.len(), b.len()),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("smoothness", smoothness),
        ("tightness", tightness),
        ("gradient formula", gradient_formula),
        ("Moreau and conjugate identities", moreau_and_conjugate),
        ("domain", domain),
        ("gradient invariance", invariance),
        ("ALM is dual gradient ascent", replay),
        ("rates on qp", rates),
        ("atom suite", atom_suite),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        failed += !result.pass as usize;
        println!(
            "{} criterion {:>2} {name} ({:.1}s): {}",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64(),
            result.summary
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
