//! Pure-state geometry on complex projective space.
//!
//! States are normalized on construction, so the Fubini-Study formulas below
//! drop their norm denominators.

use std::f64::consts::PI;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::lie::{project_raw, su_basis, AlgebraElement, CMatrix, CVector, HermitianOperator, UnitaryOperator, C64};

/// Below this distance the mismatch force is returned as exactly zero.
pub const EPS_NEAR: f64 = 1e-9;
/// Distances within this margin of `pi` are rejected as cut-locus points.
pub const EPS_CUT: f64 = 1e-6;

/// Normalized complex state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    v: CVector,
}

impl PureState {
    /// Normalizes `v`; fails on the zero vector.
    pub fn new(v: CVector) -> Result<Self> {
        Self::normalized(v).map(|(s, _)| s)
    }

    /// Like [`PureState::new`] and also reports whether the input was off-normalized by more than 1e-12.
    pub fn normalized(v: CVector) -> Result<(Self, bool)> {
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroState);
        }
        let flagged = (norm - 1.0).abs() > 1e-12;
        Ok((
            Self {
                v: v / C64::new(norm, 0.0),
            },
            flagged,
        ))
    }

    /// Standard basis vector `|k>` in dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[k] = C64::new(1.0, 0.0);
        Self { v }
    }

    pub fn from_slice(amps: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amps))
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.v
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &PureState) -> C64 {
        self.v.dotc(&other.v)
    }

    /// `U|self>`, renormalized against roundoff.
    pub fn evolved(&self, u: &UnitaryOperator) -> PureState {
        let w = u.apply(&self.v);
        let norm = w.norm();
        Self {
            v: w / C64::new(norm, 0.0),
        }
    }

    pub fn with_phase(&self, alpha: f64) -> PureState {
        Self {
            v: &self.v * C64::from_polar(1.0, alpha),
        }
    }
}

fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

/// Overlap, distance and `sin D` for an ordered pair of normalized states.
struct PairGeometry {
    overlap: C64,
    distance: f64,
    sin_distance: f64,
}

impl PairGeometry {
    fn new(psi: &PureState, phi: &PureState) -> Self {
        let overlap = psi.overlap(phi);
        let cos_half = overlap.norm();
        // sin(D/2) from the component of phi orthogonal to psi; stable near D = 0.
        let sin_half = (&phi.v - &psi.v * overlap).norm();
        let distance = 2.0 * sin_half.atan2(cos_half);
        Self {
            overlap,
            distance,
            sin_distance: 2.0 * sin_half * cos_half,
        }
    }

    /// `<psi|phi> |psi><phi| - <phi|psi> |phi><psi|`.
    fn numerator(&self, psi: &PureState, phi: &PureState) -> CMatrix {
        let a = self.overlap;
        outer(&psi.v, &phi.v) * a - outer(&phi.v, &psi.v) * a.conj()
    }
}

/// Fubini-Study distance `2 arccos |<psi|phi>|`, in `[0, pi]`.
pub fn distance(psi: &PureState, phi: &PureState) -> f64 {
    PairGeometry::new(psi, phi).distance
}

/// `D F`: the su(n+1) gradient of `D^2 / 2` under right-trivialized variations of `psi`.
///
/// Exactly zero when `D < EPS_NEAR`; an error at the cut locus `D >= pi - EPS_CUT`.
pub fn mismatch_force(psi: &PureState, phi: &PureState) -> Result<AlgebraElement> {
    let geo = PairGeometry::new(psi, phi);
    if geo.distance < EPS_NEAR {
        return Ok(AlgebraElement::zeros(psi.dim()));
    }
    if geo.distance >= PI - EPS_CUT {
        return Err(Error::CutLocus {
            distance: geo.distance,
            node: None,
        });
    }
    let scale = geo.distance / geo.sin_distance;
    Ok(project_raw(&(geo.numerator(psi, phi) * C64::new(scale, 0.0))))
}

/// A target state pinned to a grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub state: PureState,
    pub time: f64,
    pub node: usize,
}

/// Ordered targets with the mismatch tolerance `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetList {
    targets: Vec<Target>,
    sigma: f64,
}

impl TargetList {
    pub fn new(targets: Vec<Target>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidProblem(format!("sigma must be positive, got {sigma}")));
        }
        if targets.is_empty() {
            return Err(Error::InvalidProblem("at least one target is required".into()));
        }
        for w in targets.windows(2) {
            if !(w[1].time > w[0].time) || w[1].node <= w[0].node {
                return Err(Error::InvalidProblem(
                    "target times and nodes must be strictly increasing".into(),
                ));
            }
        }
        if targets.iter().any(|t| t.time < 0.0 || t.node == 0) {
            return Err(Error::InvalidProblem(
                "targets must lie strictly after the initial grid point".into(),
            ));
        }
        let dim = targets[0].state.dim();
        if let Some(t) = targets.iter().find(|t| t.state.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: t.state.dim(),
            });
        }
        Ok(Self { targets, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Target> {
        self.targets.iter()
    }

    pub fn as_slice(&self) -> &[Target] {
        &self.targets
    }

    pub fn last(&self) -> &Target {
        self.targets.last().expect("non-empty")
    }

    /// The target sitting at grid node `mu`, if any.
    pub fn at_node(&self, mu: usize) -> Option<&Target> {
        self.targets
            .binary_search_by_key(&mu, |t| t.node)
            .ok()
            .map(|j| &self.targets[j])
    }

    pub(crate) fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.targets.clone(), sigma)
    }
}

fn tag_node(err: Error, mu: usize) -> Error {
    match err {
        Error::CutLocus { distance, .. } => Error::CutLocus {
            distance,
            node: Some(mu),
        },
        other => other,
    }
}

/// `Delta_mu = D_j F_j / sigma^2` when `mu` is the node of target `j`, else zero.
pub fn delta_mu(mu: usize, psi: &PureState, targets: &TargetList) -> Result<AlgebraElement> {
    match targets.at_node(mu) {
        None => Ok(AlgebraElement::zeros(psi.dim())),
        Some(t) => {
            let force = mismatch_force(psi, &t.state).map_err(|e| tag_node(e, mu))?;
            Ok(force * (1.0 / (targets.sigma * targets.sigma)))
        }
    }
}

/// `(d/dD)(D / sin D) / sin D`, with its series near zero.
fn prefactor_slope(distance: f64) -> f64 {
    if distance < 1e-3 {
        1.0 / 3.0 + 2.0 * distance * distance / 15.0
    } else {
        let s = distance.sin();
        (s - distance * distance.cos()) / (s * s * s)
    }
}

/// The su(n+1) element `A_mu(psi, V)` with
/// `<A_mu(psi, V), A> = (d/de) <Delta_mu(e^{eA} psi), V>` at `e = 0` for all `A`.
pub fn mismatch_adjoint(
    mu: usize,
    psi: &PureState,
    v: &AlgebraElement,
    targets: &TargetList,
) -> Result<AlgebraElement> {
    let Some(target) = targets.at_node(mu) else {
        return Ok(AlgebraElement::zeros(psi.dim()));
    };
    let phi = &target.state;
    let geo = PairGeometry::new(psi, phi);
    if geo.distance >= PI - EPS_CUT {
        return Err(Error::CutLocus {
            distance: geo.distance,
            node: Some(mu),
        });
    }
    let d = geo.distance;
    let ratio = if d < 1e-8 { 1.0 } else { d / geo.sin_distance };
    let g = project_raw(&geo.numerator(psi, phi));

    // Variation of the pairing <G, V> at fixed prefactor.
    let v_psi = v.matrix() * &psi.v;
    let phi_v_psi = phi.v.dotc(&v_psi);
    let term_phi = outer(&phi.v, &psi.v) * (phi_v_psi * C64::new(-2.0, 0.0));
    let term_psi = outer(&psi.v, &phi.v) * v.matrix() * (geo.overlap * C64::new(2.0, 0.0));
    let transport = project_raw(&(term_phi + term_psi));

    // Variation of the prefactor D / sin D through dD = <G, A> / sin D.
    let slope = prefactor_slope(d) * g.inner(v);
    let sigma2 = targets.sigma * targets.sigma;
    Ok((&g * slope + &transport * ratio) * (1.0 / sigma2))
}

/// Orthonormal completion `{chi_1, .., chi_n}` of `psi`, by Gram-Schmidt on the standard basis.
pub(crate) fn orthonormal_completion(psi: &PureState) -> Vec<CVector> {
    let d = psi.dim();
    let mut order: Vec<usize> = (0..d).collect();
    // Least aligned with psi first; stable sort keeps index order on ties.
    order.sort_by(|&i, &j| psi.v[i].norm().partial_cmp(&psi.v[j].norm()).unwrap());
    let mut frame: Vec<CVector> = vec![psi.v.clone()];
    for &i in &order {
        if frame.len() == d {
            break;
        }
        let mut e = CVector::zeros(d);
        e[i] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for f in &frame {
                let c = f.dotc(&e);
                e -= f * c;
            }
        }
        let norm = e.norm();
        if norm > 1e-6 {
            frame.push(e / C64::new(norm, 0.0));
        }
    }
    frame.remove(0);
    frame
}

/// Orthonormal basis of the 2n-dimensional complement of the generators fixing the ray of `psi`:
/// normalized `{|chi_k><psi| - |psi><chi_k|, i(|chi_k><psi| + |psi><chi_k|)}`.
pub fn stabilizer_perp_basis(psi: &PureState) -> Vec<AlgebraElement> {
    let half = C64::new(0.5, 0.0);
    let ihalf = C64::new(0.0, 0.5);
    let mut basis = Vec::with_capacity(2 * (psi.dim() - 1));
    for chi in orthonormal_completion(psi) {
        let cp = outer(&chi, &psi.v);
        let pc = outer(&psi.v, &chi);
        basis.push(AlgebraElement::from_raw((&cp - &pc) * half));
        basis.push(AlgebraElement::from_raw((cp + pc) * ihalf));
    }
    basis
}

/// Orthonormal basis of the n^2-dimensional algebra of generators `A` with `A|psi> = i lambda |psi>`.
pub fn stabilizer_basis(psi: &PureState) -> Vec<AlgebraElement> {
    let d = psi.dim();
    let n = d - 1;
    let mut w = CMatrix::zeros(d, d);
    w.set_column(0, &psi.v);
    for (k, chi) in orthonormal_completion(psi).iter().enumerate() {
        w.set_column(k + 1, chi);
    }
    // Gell-Mann elements not coupling index 0 to the rest, rotated into the (psi, chi) frame.
    su_basis(n)
        .into_iter()
        .skip(2 * n)
        .map(|e| project_raw(&(&w * e.matrix() * w.adjoint())))
        .collect()
}

/// Hamiltonian whose constant flow `exp(-i H t1)` carries `psi0` along the
/// Fubini-Study geodesic onto the ray of `phi1` at time `t1`.
pub fn geodesic_hamiltonian(psi0: &PureState, phi1: &PureState, t1: f64) -> Result<HermitianOperator> {
    if !(t1 > 0.0) || !t1.is_finite() {
        return Err(Error::InvalidProblem(format!(
            "geodesic time must be positive, got {t1}"
        )));
    }
    if psi0.dim() != phi1.dim() {
        return Err(Error::DimensionMismatch {
            expected: psi0.dim(),
            found: phi1.dim(),
        });
    }
    let d = psi0.dim();
    let a = psi0.overlap(phi1);
    // Rephase phi1 so that <psi0|phi1> is real and non-negative.
    let aligned = if a.norm() > 0.0 {
        &phi1.v * (a.conj() / a.norm())
    } else {
        phi1.v.clone()
    };
    let perp = &aligned - &psi0.v * C64::new(a.norm(), 0.0);
    let s = perp.norm();
    if s < 1e-15 {
        return Ok(HermitianOperator::zeros(d));
    }
    let chi = perp / C64::new(s, 0.0);
    let theta = s.atan2(a.norm());
    let k = (outer(&chi, &psi0.v) - outer(&psi0.v, &chi)) * Complex::new(0.0, theta / t1);
    HermitianOperator::new(k)
}

/// Bloch vector `(<sx>, <sy>, <sz>)` of a two-level state.
pub fn bloch_coords(psi: &PureState) -> Result<[f64; 3]> {
    if psi.dim() != 2 {
        return Err(Error::NotTwoLevel { dim: psi.dim() });
    }
    let (a, b) = (psi.v[0], psi.v[1]);
    let cross = a.conj() * b;
    Ok([2.0 * cross.re, 2.0 * cross.im, a.norm_sqr() - b.norm_sqr()])
}

/// `H = omega sigma . axis` for a two-level Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldDecomposition {
    pub omega: f64,
    pub axis: [f64; 3],
    /// Set when `omega` is numerically zero and `axis` is the default `(0, 0, 1)`.
    pub degenerate: bool,
}

pub fn field_decomposition(h: &HermitianOperator) -> Result<FieldDecomposition> {
    if h.dim() != 2 {
        return Err(Error::NotTwoLevel { dim: h.dim() });
    }
    let m = h.matrix();
    let field = [m[(0, 1)].re, -m[(0, 1)].im, 0.5 * (m[(0, 0)].re - m[(1, 1)].re)];
    let omega = field.iter().map(|x| x * x).sum::<f64>().sqrt();
    if omega < 1e-14 {
        return Ok(FieldDecomposition {
            omega,
            axis: [0.0, 0.0, 1.0],
            degenerate: true,
        });
    }
    Ok(FieldDecomposition {
        omega,
        axis: field.map(|x| x / omega),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::cayley;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> PureState {
        PureState::new(CVector::from_fn(dim, |_, _| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }))
        .unwrap()
    }

    fn plus() -> PureState {
        PureState::from_slice(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    fn targets_at(nodes: &[(usize, PureState)], sigma: f64) -> TargetList {
        let list = nodes
            .iter()
            .map(|(n, s)| Target {
                state: s.clone(),
                time: *n as f64,
                node: *n,
            })
            .collect();
        TargetList::new(list, sigma).unwrap()
    }

    /// Rotates `psi` by `exp(eps A)` using a scaled-and-squared Cayley product.
    fn rotate(psi: &PureState, a: &AlgebraElement, eps: f64) -> PureState {
        let m = (a.matrix() * c(eps, 0.0)).exp();
        PureState::new(m * psi.amplitudes()).unwrap()
    }

    #[test]
    fn zero_state_rejected_and_flagged_normalization() {
        assert!(matches!(PureState::new(CVector::zeros(2)), Err(Error::ZeroState)));
        let (s, flagged) = PureState::normalized(CVector::from_column_slice(&[c(3.0, 0.0), c(0.0, 4.0)])).unwrap();
        assert!(flagged);
        assert!((s.amplitudes().norm() - 1.0).abs() < 1e-15);
        let (_, flagged) = PureState::normalized(PureState::basis(2, 0).amplitudes().clone()).unwrap();
        assert!(!flagged);
    }

    #[test]
    fn distance_examples() {
        let zero = PureState::basis(2, 0);
        let one = PureState::basis(2, 1);
        assert_eq!(distance(&zero, &zero), 0.0);
        assert!((distance(&zero, &one) - PI).abs() < 1e-15);
        assert!((distance(&plus(), &zero) - 2.0 * (0.5f64.sqrt()).acos()).abs() < 1e-15);
        assert!((distance(&plus(), &zero) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn distance_is_a_metric_on_rays() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (p, q, r) = (
                random_state(&mut rng, 3),
                random_state(&mut rng, 3),
                random_state(&mut rng, 3),
            );
            let pq = distance(&p, &q);
            assert!((pq - distance(&q, &p)).abs() < 1e-14);
            assert!((pq - distance(&p.with_phase(1.3), &q.with_phase(-0.4))).abs() < 1e-14);
            assert!(pq <= distance(&p, &r) + distance(&r, &q) + 1e-12);
            assert!(distance(&p, &p.with_phase(2.0)) < 1e-14);
            // Agrees with the arccos form away from the endpoints.
            let direct = 2.0 * p.overlap(&q).norm().min(1.0).acos();
            assert!((pq - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatch_force_vanishes_on_coincidence() {
        let psi = plus();
        let f = mismatch_force(&psi, &psi.with_phase(0.7)).unwrap();
        assert_eq!(f.norm(), 0.0);
    }

    #[test]
    fn mismatch_force_cut_locus_is_an_error() {
        let err = mismatch_force(&PureState::basis(2, 0), &PureState::basis(2, 1)).unwrap_err();
        assert!(matches!(err, Error::CutLocus { node: None, .. }));
    }

    #[test]
    fn mismatch_force_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eps = 1e-5;
        let mut cases = vec![(PureState::basis(2, 0), plus())];
        for dim in [2, 3, 4] {
            cases.push((random_state(&mut rng, dim), random_state(&mut rng, dim)));
        }
        for (psi, phi) in cases {
            let force = mismatch_force(&psi, &phi).unwrap();
            assert!(AlgebraElement::new(force.matrix().clone()).is_ok());
            for e in su_basis(psi.dim() - 1) {
                let half_sq = |s: f64| 0.5 * distance(&rotate(&psi, &e, s), &phi).powi(2);
                let fd = (half_sq(eps) - half_sq(-eps)) / (2.0 * eps);
                let analytic = force.inner(&e);
                let scale = force.norm().max(1e-12);
                assert!((fd - analytic).abs() / scale < 1e-6, "fd {fd} vs {analytic}");
            }
        }
    }

    #[test]
    fn mismatch_force_is_phase_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (psi, phi) = (random_state(&mut rng, 3), random_state(&mut rng, 3));
        let a = mismatch_force(&psi, &phi).unwrap();
        let b = mismatch_force(&psi.with_phase(0.3), &phi.with_phase(-2.1)).unwrap();
        assert!((a.matrix() - b.matrix()).norm() < 1e-12);
    }

    #[test]
    fn delta_mu_cases() {
        let psi = PureState::basis(2, 0);
        let targets = targets_at(&[(3, plus()), (5, psi.clone())], 0.5);
        assert_eq!(delta_mu(2, &psi, &targets).unwrap().norm(), 0.0);
        assert_eq!(delta_mu(5, &psi, &targets).unwrap().norm(), 0.0);
        let d = delta_mu(3, &psi, &targets).unwrap();
        let direct = mismatch_force(&psi, &plus()).unwrap() * 4.0;
        assert!((d.matrix() - direct.matrix()).norm() < 1e-15);

        let cut = targets_at(&[(4, PureState::basis(2, 1))], 1.0);
        let err = delta_mu(4, &psi, &cut).unwrap_err();
        assert!(matches!(err, Error::CutLocus { node: Some(4), .. }));
    }

    /// Richardson-extrapolated central difference.
    fn richardson<F: Fn(f64) -> f64>(f: F, eps: f64) -> f64 {
        let d1 = (f(eps) - f(-eps)) / (2.0 * eps);
        let d2 = (f(eps / 2.0) - f(-eps / 2.0)) / eps;
        (4.0 * d2 - d1) / 3.0
    }

    #[test]
    fn mismatch_adjoint_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for dim in [2, 2, 3, 3] {
            let n = dim - 1;
            let psi = random_state(&mut rng, dim);
            let phi = random_state(&mut rng, dim);
            let targets = targets_at(&[(2, phi)], 0.7);
            let basis = su_basis(n);
            let coeffs: Vec<f64> = basis.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v = AlgebraElement::combine(&basis, &coeffs);
            let adj = mismatch_adjoint(2, &psi, &v, &targets).unwrap();
            let scale = adj.norm();
            for e in &basis {
                let pairing = |s: f64| delta_mu(2, &rotate(&psi, e, s), &targets).unwrap().inner(&v);
                let fd = richardson(pairing, 1e-5);
                let rel = (fd - adj.inner(e)).abs() / scale;
                assert!(rel < 1e-6, "dim {dim}: rel err {rel}");
            }
        }
    }

    #[test]
    fn mismatch_adjoint_near_coincidence() {
        // Close (but not coincident) target exercises the series branch of the prefactor.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = random_state(&mut rng, 2);
        let small = AlgebraElement::combine(&su_basis(1), &[3e-4, -2e-4, 1e-4]);
        let phi = rotate(&psi, &small, 1.0);
        let targets = targets_at(&[(1, phi)], 1.0);
        let v = AlgebraElement::combine(&su_basis(1), &[0.4, 0.9, -0.3]);
        let adj = mismatch_adjoint(1, &psi, &v, &targets).unwrap();
        for e in su_basis(1) {
            let pairing = |s: f64| delta_mu(1, &rotate(&psi, &e, s), &targets).unwrap().inner(&v);
            let fd = richardson(pairing, 1e-6);
            assert!((fd - adj.inner(&e)).abs() < 1e-6 * adj.norm());
        }
    }

    #[test]
    fn mismatch_adjoint_trivial_cases_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let psi = random_state(&mut rng, 3);
        let targets = targets_at(&[(2, random_state(&mut rng, 3))], 0.3);
        let basis = su_basis(2);
        let rand_v = |rng: &mut ChaCha8Rng| {
            let c: Vec<f64> = basis.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            AlgebraElement::combine(&basis, &c)
        };
        assert_eq!(
            mismatch_adjoint(2, &psi, &AlgebraElement::zeros(3), &targets)
                .unwrap()
                .norm(),
            0.0
        );
        let v1 = rand_v(&mut rng);
        let v2 = rand_v(&mut rng);
        assert_eq!(mismatch_adjoint(1, &psi, &v1, &targets).unwrap().norm(), 0.0);
        let (a, b) = (0.7, -1.9);
        let lhs = mismatch_adjoint(2, &psi, &(&(&v1 * a) + &(&v2 * b)), &targets).unwrap();
        let rhs = &(&mismatch_adjoint(2, &psi, &v1, &targets).unwrap() * a)
            + &(&mismatch_adjoint(2, &psi, &v2, &targets).unwrap() * b);
        assert!((lhs.matrix() - rhs.matrix()).norm() < 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn stabilizer_perp_basis_two_level_ground_state() {
        let basis = stabilizer_perp_basis(&PureState::basis(2, 0));
        assert_eq!(basis.len(), 2);
        let su = su_basis(1);
        for e in &basis {
            // Lies in span{i sx/2, i sy/2}.
            assert!(e.inner(&su[2]).abs() < 1e-15);
            assert!((e.inner(&su[0]).powi(2) + e.inner(&su[1]).powi(2) - 1.0).abs() < 1e-15);
        }
        assert!(basis[0].inner(&basis[1]).abs() < 1e-15);
    }

    /// Independent stabilizer construction: the null space of `A -> (1 - |psi><psi|) A |psi>`
    /// together with the trace-free constraint, found from the su basis by linear algebra.
    fn stabilizer_by_null_space(psi: &PureState) -> Vec<AlgebraElement> {
        let n = psi.dim() - 1;
        let basis = su_basis(n);
        let proj = CMatrix::identity(n + 1, n + 1) - outer(&psi.v, &psi.v);
        // Zero-padded to square so the thin SVD exposes the full right null space.
        let rows = (2 * (n + 1)).max(basis.len());
        let mut map = nalgebra::DMatrix::<f64>::zeros(rows, basis.len());
        for (k, e) in basis.iter().enumerate() {
            let w = &proj * e.matrix() * &psi.v;
            for i in 0..=n {
                map[(2 * i, k)] = w[i].re;
                map[(2 * i + 1, k)] = w[i].im;
            }
        }
        let svd = map.svd(false, true);
        let vt = svd.v_t.unwrap();
        let sv = svd.singular_values;
        (0..basis.len())
            .filter(|&k| sv[k] < 1e-10)
            .map(|k| AlgebraElement::combine(&basis, vt.row(k).transpose().as_slice()))
            .collect()
    }

    #[test]
    fn stabilizer_perp_basis_is_orthogonal_to_stabilizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=3 {
            let psi = random_state(&mut rng, n + 1);
            let perp = stabilizer_perp_basis(&psi);
            assert_eq!(perp.len(), 2 * n);
            for (a, ea) in perp.iter().enumerate() {
                for (b, eb) in perp.iter().enumerate() {
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert!((ea.inner(eb) - expected).abs() < 1e-12);
                }
            }
            let stab = stabilizer_by_null_space(&psi);
            assert_eq!(stab.len(), n * n);
            for a in &stab {
                // Ray invariance: A psi = i lambda psi.
                let apsi = a.matrix() * &psi.v;
                let lambda = psi.v.dotc(&apsi);
                assert!(lambda.re.abs() < 1e-12);
                assert!((apsi - &psi.v * lambda).norm() < 1e-10);
                for e in &perp {
                    assert!(e.inner(a).abs() < 1e-12);
                }
            }
            let ours = stabilizer_basis(&psi);
            assert_eq!(ours.len(), n * n);
            for a in &ours {
                let apsi = a.matrix() * &psi.v;
                let lambda = psi.v.dotc(&apsi);
                assert!((apsi - &psi.v * lambda).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn stabilizer_perp_span_is_phase_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let psi = random_state(&mut rng, 3);
        let projector = |basis: Vec<AlgebraElement>| {
            let su = su_basis(2);
            let mut p = nalgebra::DMatrix::<f64>::zeros(su.len(), su.len());
            for e in &basis {
                let c = nalgebra::DVector::from_vec(e.coordinates(&su));
                p += &c * c.transpose();
            }
            p
        };
        let diff = projector(stabilizer_perp_basis(&psi)) - projector(stabilizer_perp_basis(&psi.with_phase(1.1)));
        assert!(diff.norm() < 1e-10);
    }

    #[test]
    fn geodesic_hamiltonian_examples() {
        let h = geodesic_hamiltonian(&PureState::basis(2, 0), &PureState::basis(2, 1), 1.0).unwrap();
        let sy = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]);
        assert!((h.matrix() - sy * c(PI / 2.0, 0.0)).norm() < 1e-15);

        let psi = plus();
        let h = geodesic_hamiltonian(&psi, &psi.with_phase(0.4), 2.0).unwrap();
        assert!(h.frobenius_norm() < 1e-15);

        assert!(geodesic_hamiltonian(&psi, &psi, 0.0).is_err());
    }

    #[test]
    fn geodesic_hamiltonian_reaches_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for dim in [2, 3, 3, 4] {
            let psi = random_state(&mut rng, dim);
            let phi = random_state(&mut rng, dim);
            let t1 = rng.gen_range(0.5..3.0);
            let h = geodesic_hamiltonian(&psi, &phi, t1).unwrap();
            let u = (h.matrix() * c(0.0, -t1)).exp();
            let end = PureState::new(u * psi.amplitudes()).unwrap();
            assert!(distance(&end, &phi) < 1e-10);
            // Geodesic: distance grows linearly along the way.
            let u_half = (h.matrix() * c(0.0, -t1 / 2.0)).exp();
            let mid = PureState::new(u_half * psi.amplitudes()).unwrap();
            assert!((distance(&psi, &mid) - distance(&psi, &phi) / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn bloch_coordinates() {
        assert_eq!(bloch_coords(&PureState::basis(2, 0)).unwrap(), [0.0, 0.0, 1.0]);
        assert_eq!(bloch_coords(&PureState::basis(2, 1)).unwrap(), [0.0, 0.0, -1.0]);
        let p = bloch_coords(&plus()).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15 && p[2].abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let r = bloch_coords(&random_state(&mut rng, 2)).unwrap();
        assert!((r.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(
            bloch_coords(&PureState::basis(3, 0)),
            Err(Error::NotTwoLevel { dim: 3 })
        ));
    }

    #[test]
    fn field_decomposition_cases() {
        let sy = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]);
        let f = field_decomposition(&HermitianOperator::new(sy * c(PI / 2.0, 0.0)).unwrap()).unwrap();
        assert!((f.omega - PI / 2.0).abs() < 1e-15);
        assert!((f.axis[1] - 1.0).abs() < 1e-15 && !f.degenerate);

        let zero = field_decomposition(&HermitianOperator::zeros(2)).unwrap();
        assert_eq!(zero.omega, 0.0);
        assert_eq!(zero.axis, [0.0, 0.0, 1.0]);
        assert!(zero.degenerate);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = AlgebraElement::combine(&su_basis(1), &[rng.gen(), rng.gen(), rng.gen()]);
        let h = x.to_hermitian();
        let f = field_decomposition(&h).unwrap();
        let paulis = [
            CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
            CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
            CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
        ];
        let mut rebuilt = CMatrix::zeros(2, 2);
        for (p, a) in paulis.iter().zip(f.axis) {
            rebuilt += p * c(f.omega * a, 0.0);
        }
        assert!((rebuilt - h.matrix()).norm() < 1e-12);
        let _ = cayley(&x);
    }
}
