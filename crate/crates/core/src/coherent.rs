//! Coherent-state splines: the Veronese embedding of single-particle states into the
//! symmetric k-particle space and the one-body lift of the Hamiltonian path.
//!
//! The symmetric basis is indexed by occupation vectors `(k_0, …, k_n)` with `Σ k_i = k`,
//! in lexicographically decreasing order: `(k,0,…)` first, `(0,…,k)` last.

use std::collections::HashMap;

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{DiscretePath, ProblemSpec};
use crate::lie::{CMatrix, CVector, HermitianOperator, C64};
use crate::optimizer::{solve, DescentOptions, Solution};
use crate::state::{distance, PureState};

/// Occupation-number basis of the symmetric k-particle space over `modes` levels.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricBasis {
    modes: usize,
    k: usize,
    occupations: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

impl SymmetricBasis {
    pub fn new(modes: usize, k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidProblem("coherent order k must be at least 1".into()));
        }
        if modes < 2 {
            return Err(Error::InvalidProblem(format!("need at least 2 levels, got {modes}")));
        }
        let mut occupations = Vec::new();
        let mut current = vec![0; modes];
        fill(&mut occupations, &mut current, 0, k);
        let index = occupations.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect();
        Ok(Self {
            modes,
            k,
            occupations,
            index,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `C(n + k, k)` with `n + 1 = modes`.
    pub fn len(&self) -> usize {
        self.occupations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn occupations(&self) -> &[Vec<usize>] {
        &self.occupations
    }

    pub fn position(&self, occupation: &[usize]) -> Option<usize> {
        self.index.get(occupation).copied()
    }
}

fn fill(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, slot: usize, remaining: usize) {
    if slot + 1 == current.len() {
        current[slot] = remaining;
        out.push(current.clone());
        return;
    }
    for n in (0..=remaining).rev() {
        current[slot] = n;
        fill(out, current, slot + 1, remaining - n);
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|j| (j as f64).ln()).sum()
}

/// Normalized state on the symmetric subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricState {
    amplitudes: CVector,
}

impl SymmetricState {
    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn overlap(&self, other: &SymmetricState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// Fubini–Study distance `2 arccos |⟨·|·⟩|`, as for single-particle states.
    pub fn distance(&self, other: &SymmetricState) -> f64 {
        2.0 * self.overlap(other).norm().min(1.0).acos()
    }
}

/// `ψ ↦ ψ^{⊗k}` in the occupation basis.
pub fn veronese(psi: &PureState, basis: &SymmetricBasis) -> Result<SymmetricState> {
    if psi.dim() != basis.modes() {
        return Err(Error::DimensionMismatch {
            expected: basis.modes(),
            found: psi.dim(),
        });
    }
    let a = psi.amplitudes();
    let lnk = ln_factorial(basis.k());
    let amplitudes = CVector::from_iterator(
        basis.len(),
        basis.occupations().iter().map(|occ| {
            let ln_multinomial = lnk - occ.iter().map(|&n| ln_factorial(n)).sum::<f64>();
            occ.iter()
                .zip(a.iter())
                .fold(C64::new((0.5 * ln_multinomial).exp(), 0.0), |acc, (&n, z)| {
                    acc * z.powu(n as u32)
                })
        }),
    );
    Ok(SymmetricState { amplitudes })
}

/// `Σ_a 1⊗…⊗H⊗…⊗1` restricted to the symmetric subspace, i.e. `Σ_ij H_ij a_i† a_j`.
pub fn lift_hamiltonian(h: &CMatrix, basis: &SymmetricBasis) -> Result<CMatrix> {
    let d = basis.modes();
    if h.nrows() != d || h.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: h.nrows(),
        });
    }
    let mut out = CMatrix::zeros(basis.len(), basis.len());
    for (col, occ) in basis.occupations().iter().enumerate() {
        for j in 0..d {
            if occ[j] == 0 {
                continue;
            }
            let mut moved = occ.clone();
            moved[j] -= 1;
            for i in 0..d {
                let factor = ((occ[j] * (moved[i] + 1)) as f64).sqrt();
                moved[i] += 1;
                let row = basis.position(&moved).expect("occupation stays in the basis");
                out[(row, col)] += h[(i, j)] * factor;
                moved[i] -= 1;
            }
        }
    }
    Ok(out)
}

/// `exp(−i t A)` for Hermitian `A`, via its eigendecomposition.
fn hermitian_propagator(a: &CMatrix, t: f64) -> CMatrix {
    let eig = SymmetricEigen::new(a.clone());
    let phases = CVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, -l * t)),
    );
    &eig.eigenvectors * CMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint()
}

/// Hermitian `G` with `exp(−i h G)` equal to the Cayley step `τ(−i h H)`, including the
/// unit-determinant phase: `G = (2/h)·arctan(hH/2) − (arg c / h)·1`.
pub fn effective_generator(h_op: &HermitianOperator, step: &CMatrix, h: f64) -> CMatrix {
    let eig = SymmetricEigen::new(h_op.matrix().clone());
    let theta: Vec<f64> = eig.eigenvalues.iter().map(|&l| 2.0 * (0.5 * h * l).atan()).collect();
    let v0 = eig.eigenvectors.column(0);
    let c = v0.dotc(&(step * v0)) * C64::from_polar(1.0, theta[0]);
    let shift = c.arg();
    let diag = CVector::from_iterator(theta.len(), theta.iter().map(|t| C64::new((t - shift) / h, 0.0)));
    &eig.eigenvectors * CMatrix::from_diagonal(&diag) * eig.eigenvectors.adjoint()
}

/// Embedded trajectory together with the independently propagated lifted flow.
#[derive(Clone, Debug)]
pub struct CoherentSpline {
    pub basis: SymmetricBasis,
    /// `veronese(ψ_μ)` for `μ = 0..=N`.
    pub embedded: Vec<SymmetricState>,
    /// `veronese(ψ_0)` pushed by `exp(−ih·lift(G_μ))` step by step.
    pub lifted: Vec<SymmetricState>,
    /// `lift(H_μ)` for `μ = 0..=N`.
    pub hamiltonians: Vec<CMatrix>,
    pub report: CoherentReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoherentReport {
    pub k: usize,
    pub dim: usize,
    /// Max over the grid of `‖lifted − embedded‖` (vector norm, phases included).
    pub max_deviation: f64,
    /// Max Fubini–Study gap between the embedding and a plain Cayley flow of the lifted
    /// Hamiltonian; a discretization effect of order `h²`.
    pub cayley_gap: f64,
    /// Max over target pairs of `| |⟨V(φ_a)|V(φ_b)⟩| − |⟨φ_a|φ_b⟩|^k |`.
    pub overlap_law_residual: f64,
    /// Informational: the embedding scales the Fubini–Study metric by `k`.
    pub metric_scale: f64,
}

/// Embeds a solved single-particle path.
pub fn embed_path(path: &DiscretePath, k: usize) -> Result<CoherentSpline> {
    let spec = path.spec();
    let basis = SymmetricBasis::new(spec.dim(), k)?;
    let h = spec.h();
    let embedded = path
        .psi
        .iter()
        .map(|p| veronese(p, &basis))
        .collect::<Result<Vec<_>>>()?;
    let hamiltonians = path
        .ham
        .iter()
        .map(|hm| lift_hamiltonian(hm.matrix(), &basis))
        .collect::<Result<Vec<_>>>()?;

    let mut lifted = vec![embedded[0].clone()];
    let mut cayley = embedded[0].amplitudes.clone();
    let mut max_deviation = 0.0f64;
    let mut cayley_gap = 0.0f64;
    let identity = CMatrix::identity(basis.len(), basis.len());
    for mu in 0..spec.steps() {
        let step = path.frame(mu + 1).cayley_neg();
        let g = effective_generator(&path.ham[mu + 1], step.matrix(), h);
        let next = hermitian_propagator(&lift_hamiltonian(&g, &basis)?, h) * &lifted[mu].amplitudes;
        max_deviation = max_deviation.max((&next - &embedded[mu + 1].amplitudes).norm());
        lifted.push(SymmetricState { amplitudes: next });

        let half = &hamiltonians[mu + 1] * C64::new(0.0, 0.5 * h);
        let rhs = (&identity - &half) * &cayley;
        cayley = (&identity + &half).lu().solve(&rhs).ok_or(Error::CayleyChartBoundary)?;
        let cayley_state = SymmetricState {
            amplitudes: cayley.clone(),
        };
        cayley_gap = cayley_gap.max(cayley_state.distance(&embedded[mu + 1]));
    }

    let targets: Vec<&PureState> = spec.targets().iter().map(|t| &t.state).collect();
    let mut overlap_law_residual = 0.0f64;
    for a in &targets {
        for b in &targets {
            let lhs = veronese(a, &basis)?.overlap(&veronese(b, &basis)?).norm();
            overlap_law_residual = overlap_law_residual.max((lhs - a.overlap(b).norm().powi(k as i32)).abs());
        }
    }

    let report = CoherentReport {
        k,
        dim: basis.len(),
        max_deviation,
        cayley_gap,
        overlap_law_residual,
        metric_scale: k as f64,
    };
    Ok(CoherentSpline {
        basis,
        embedded,
        lifted,
        hamiltonians,
        report,
    })
}

/// Solves the single-particle problem and maps the result into the k-particle space.
pub fn coherent_spline(spec: &ProblemSpec, opts: &DescentOptions, k: usize) -> Result<(Solution, CoherentSpline)> {
    SymmetricBasis::new(spec.dim(), k)?;
    let sol = solve(spec, opts)?;
    let spline = embed_path(&sol.path, k)?;
    Ok((sol, spline))
}

/// Distance between embedded states from the base distance: `D_k = 2 arccos(cos^k(D/2))`.
pub fn embedded_distance(psi: &PureState, phi: &PureState, k: usize) -> f64 {
    2.0 * (0.5 * distance(psi, phi)).cos().powi(k as i32).clamp(-1.0, 1.0).acos()
}
