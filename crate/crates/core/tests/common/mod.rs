//! Shared helpers for integration tests: fixtures, random problems and a brute-force
//! finite-difference gradient that only uses `integrate` and `cost`.
#![allow(dead_code)]

use std::path::PathBuf;

use qspline::cli::load_problem;
use qspline::forward::{cost, integrate, InitialHamiltonian, ProblemSpec};
use qspline::lie::{su_basis, AlgebraElement, CVector, C64};
use qspline::state::PureState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load(name: &str) -> ProblemSpec {
    load_problem(&fixture(name)).expect("fixture loads").spec
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_state(rng: &mut ChaCha8Rng, d: usize) -> PureState {
    let v = CVector::from_iterator(
        d,
        (0..d).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
    );
    PureState::new(v).unwrap()
}

pub fn random_element(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> AlgebraElement {
    let basis = su_basis(n);
    let c: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-scale..scale)).collect();
    AlgebraElement::combine(&basis, &c)
}

/// `m` targets at distinct random grid nodes (the last one at `N`), over `[0, 1]`.
pub struct RandomProblem {
    pub spec: ProblemSpec,
    pub m0: AlgebraElement,
    pub l0: AlgebraElement,
}

pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize, steps: usize) -> RandomProblem {
    loop {
        let mut nodes = vec![steps];
        while nodes.len() < m {
            let k = rng.gen_range(1..steps);
            if !nodes.contains(&k) {
                nodes.push(k);
            }
        }
        nodes.sort_unstable();
        let targets = nodes
            .iter()
            .map(|&k| (k as f64 / steps as f64, random_state(rng, n + 1)))
            .collect();
        let sigma = rng.gen_range(0.1..0.5);
        let spec = match ProblemSpec::new(
            random_state(rng, n + 1),
            targets,
            sigma,
            0.0,
            steps,
            InitialHamiltonian::Geodesic,
        ) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let m0 = random_element(rng, n, 0.5);
        let l0 = random_element(rng, n, 0.5);
        // Resample anything that lands on a cut locus.
        if integrate(&spec, &m0, &l0).is_ok() {
            return RandomProblem { spec, m0, l0 };
        }
    }
}

/// Central differences of `cost(integrate(..))` along every su(n+1) direction of `M_0`,
/// then of `L_0`.
pub fn fd_gradient_oracle(spec: &ProblemSpec, m0: &AlgebraElement, l0: &AlgebraElement, step: f64) -> Vec<f64> {
    let basis = su_basis(spec.n());
    let f = |m: &AlgebraElement, l: &AlgebraElement| cost(&integrate(spec, m, l).expect("probe integrates"));
    let mut out = Vec::with_capacity(2 * basis.len());
    for e in &basis {
        out.push((f(&(m0 + &(e * step)), l0) - f(&(m0 - &(e * step)), l0)) / (2.0 * step));
    }
    for e in &basis {
        out.push((f(m0, &(l0 + &(e * step))) - f(m0, &(l0 - &(e * step)))) / (2.0 * step));
    }
    out
}

/// `max |a - b| / max |b|`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    diff / scale
}
