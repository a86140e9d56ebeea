//! Fixed benchmark instances shared by the criterion benches.

use almlab_core::{generate, BenchmarkSpec, Family, ProblemInstance};

/// Seed used for every fixture so timings compare like with like.
pub const FIXTURE_SEED: u64 = 2024;

/// A generated instance of the given family; `tight_bound` ignores `p` and
/// uses `p = d`.
pub fn fixture(family: Family, d: usize, p: usize) -> ProblemInstance {
    let p = if family == Family::TightBound { d } else { p };
    generate(&BenchmarkSpec::new(family, d, p, 1.0, FIXTURE_SEED)).expect("fixture dimensions are valid")
}

/// The families at a common desk-scale size.
pub fn desk_suite() -> Vec<ProblemInstance> {
    Family::ALL.iter().map(|&f| fixture(f, 40, 16)).collect()
}
