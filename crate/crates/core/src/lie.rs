//! Dense complex matrix arithmetic on su(n+1) and SU(n+1).
//!
//! Elements of the Lie algebra are trace-free skew-Hermitian matrices paired by
//! `<A, B> = -2 Re tr(AB)`. Group elements are produced by the Cayley map
//! `X -> (1 - X/2)^{-1} (1 + X/2)`, rescaled by a global phase so that the
//! determinant is exactly one. For two-level systems the phase is already one;
//! for larger systems the raw Cayley image only lies in U(n+1). With the phase
//! removed, the left- and right-trivialized differentials of the map are the
//! textbook expressions followed by the orthogonal projection onto su(n+1),
//! which is what [`CayleyFrame::dl`] and [`CayleyFrame::dr`] compute.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Defects below this are accepted verbatim at construction.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Defects between [`CONSTRUCTION_TOL`] and this are projected away; larger ones are errors.
pub const RESYMMETRIZE_LIMIT: f64 = 1e-8;
/// Unitarity and determinant tolerance for [`UnitaryOperator`].
pub const UNITARY_TOL: f64 = 1e-10;

const I: C64 = Complex { re: 0.0, im: 1.0 };

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn trace(m: &CMatrix) -> C64 {
    m.diagonal().sum()
}

/// `tr(AB)` without forming the product.
fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Orthogonal projection onto su(d): anti-Hermitian part with the trace removed.
pub(crate) fn project_raw(a: &CMatrix) -> AlgebraElement {
    let d = a.nrows();
    let mut m = (a - a.adjoint()) * C64::new(0.5, 0.0);
    let shift = trace(&m) / d as f64;
    for i in 0..d {
        m[(i, i)] -= shift;
    }
    AlgebraElement { m }
}

/// Projects an arbitrary square complex matrix onto su(n+1).
///
/// For every `Y` in su(n+1), `inner(project_su(A), Y) = -2 Re tr(A Y)`.
pub fn project_su(a: &CMatrix) -> Result<AlgebraElement> {
    check_square(a)?;
    Ok(project_raw(a))
}

/// Trace-free skew-Hermitian matrix: an element of su(n+1).
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    m: CMatrix,
}

impl AlgebraElement {
    /// Validates `m`. Small drift (up to [`RESYMMETRIZE_LIMIT`]) is projected away.
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        let skew = (&m + m.adjoint()).norm();
        let defect = skew.max(trace(&m).norm());
        if defect <= CONSTRUCTION_TOL {
            Ok(Self { m })
        } else if defect <= RESYMMETRIZE_LIMIT {
            Ok(project_raw(&m))
        } else {
            Err(Error::NotInAlgebra { defect })
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: CMatrix::zeros(dim, dim),
        }
    }

    pub(crate) fn from_raw(m: CMatrix) -> Self {
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    /// `-2 Re tr(self * other)`. Panics if dimensions differ; see [`inner`] for the checked form.
    pub fn inner(&self, other: &AlgebraElement) -> f64 {
        assert_eq!(self.dim(), other.dim(), "algebra dimension mismatch");
        -2.0 * trace_of_product(&self.m, &other.m).re
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    /// The Hermitian operator `H` with `self = iH`.
    pub fn to_hermitian(&self) -> HermitianOperator {
        HermitianOperator { m: &self.m * (-I) }
    }

    /// Coordinates against an orthonormal basis.
    pub fn coordinates(&self, basis: &[AlgebraElement]) -> Vec<f64> {
        basis.iter().map(|e| self.inner(e)).collect()
    }

    /// Linear combination `sum_k c_k e_k`.
    pub fn combine(basis: &[AlgebraElement], coeffs: &[f64]) -> Self {
        assert_eq!(basis.len(), coeffs.len());
        assert!(!basis.is_empty());
        let mut acc = CMatrix::zeros(basis[0].dim(), basis[0].dim());
        for (e, &c) in basis.iter().zip(coeffs) {
            acc += &e.m * C64::new(c, 0.0);
        }
        Self { m: acc }
    }

    /// Re-projects onto su(n+1), removing accumulated roundoff.
    pub fn cleaned(&self) -> Self {
        project_raw(&self.m)
    }
}

impl Add for &AlgebraElement {
    type Output = AlgebraElement;
    fn add(self, rhs: &AlgebraElement) -> AlgebraElement {
        AlgebraElement { m: &self.m + &rhs.m }
    }
}

impl Add for AlgebraElement {
    type Output = AlgebraElement;
    fn add(self, rhs: AlgebraElement) -> AlgebraElement {
        AlgebraElement { m: self.m + rhs.m }
    }
}

impl Sub for &AlgebraElement {
    type Output = AlgebraElement;
    fn sub(self, rhs: &AlgebraElement) -> AlgebraElement {
        AlgebraElement { m: &self.m - &rhs.m }
    }
}

impl Sub for AlgebraElement {
    type Output = AlgebraElement;
    fn sub(self, rhs: AlgebraElement) -> AlgebraElement {
        AlgebraElement { m: self.m - rhs.m }
    }
}

impl Neg for AlgebraElement {
    type Output = AlgebraElement;
    fn neg(self) -> AlgebraElement {
        AlgebraElement { m: -self.m }
    }
}

impl Neg for &AlgebraElement {
    type Output = AlgebraElement;
    fn neg(self) -> AlgebraElement {
        AlgebraElement { m: -&self.m }
    }
}

impl Mul<f64> for &AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, s: f64) -> AlgebraElement {
        AlgebraElement {
            m: &self.m * C64::new(s, 0.0),
        }
    }
}

impl Mul<f64> for AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, s: f64) -> AlgebraElement {
        AlgebraElement {
            m: self.m * C64::new(s, 0.0),
        }
    }
}

impl AddAssign<&AlgebraElement> for AlgebraElement {
    fn add_assign(&mut self, rhs: &AlgebraElement) {
        self.m += &rhs.m;
    }
}

impl SubAssign<&AlgebraElement> for AlgebraElement {
    fn sub_assign(&mut self, rhs: &AlgebraElement) {
        self.m -= &rhs.m;
    }
}

/// Checked inner product `<A, B> = -2 Re tr(AB)`.
pub fn inner(a: &AlgebraElement, b: &AlgebraElement) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(a.inner(b))
}

/// Trace-free Hermitian matrix, e.g. a Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    m: CMatrix,
}

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        let herm = (&m - m.adjoint()).norm();
        let defect = herm.max(trace(&m).norm());
        if defect <= CONSTRUCTION_TOL {
            Ok(Self { m })
        } else if defect <= RESYMMETRIZE_LIMIT {
            Ok(project_raw(&(&m * I)).to_hermitian())
        } else {
            Err(Error::NotHermitian { defect })
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: CMatrix::zeros(dim, dim),
        }
    }

    pub(crate) fn from_raw(m: CMatrix) -> Self {
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    /// The algebra element `iH`.
    pub fn times_i(&self) -> AlgebraElement {
        AlgebraElement { m: &self.m * I }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }
}

/// Special unitary matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryOperator {
    m: CMatrix,
}

impl UnitaryOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        let (unitarity, determinant) = unitary_defects(&m);
        if unitarity > UNITARY_TOL || determinant > UNITARY_TOL {
            return Err(Error::NotSpecialUnitary { unitarity, determinant });
        }
        Ok(Self { m })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: CMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    /// `self * other`.
    pub fn compose(&self, other: &UnitaryOperator) -> UnitaryOperator {
        UnitaryOperator { m: &self.m * &other.m }
    }

    pub fn inverse(&self) -> UnitaryOperator {
        UnitaryOperator { m: self.m.adjoint() }
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.m * v
    }

    /// `(||U^dag U - 1||_F, |det U - 1|)`.
    pub fn defects(&self) -> (f64, f64) {
        unitary_defects(&self.m)
    }
}

fn unitary_defects(m: &CMatrix) -> (f64, f64) {
    let d = m.nrows();
    let unitarity = (m.adjoint() * m - CMatrix::identity(d, d)).norm();
    let determinant = (m.determinant() - C64::new(1.0, 0.0)).norm();
    (unitarity, determinant)
}

/// Cached factors `1 -/+ X/2` and their inverses for one generator `X`.
///
/// Both factors are normal with singular values at least one, so the inverses
/// are perfectly conditioned; they are computed once by LU and reused by every
/// differential evaluated at `X`.
#[derive(Clone, Debug)]
pub struct CayleyFrame {
    x: AlgebraElement,
    a: CMatrix,
    b: CMatrix,
    a_inv: CMatrix,
    b_inv: CMatrix,
    ab: CMatrix,
    ab_trace: f64,
}

impl CayleyFrame {
    pub fn new(x: &AlgebraElement) -> Self {
        let d = x.dim();
        let id = CMatrix::identity(d, d);
        let half = x.matrix() * C64::new(0.5, 0.0);
        let a = &id - &half;
        let b = &id + &half;
        let a_inv = a
            .clone()
            .lu()
            .try_inverse()
            .expect("1 - X/2 is invertible for skew-Hermitian X");
        let b_inv = b
            .clone()
            .lu()
            .try_inverse()
            .expect("1 + X/2 is invertible for skew-Hermitian X");
        let ab = &a * &b;
        let ab_trace = trace(&ab).re;
        Self {
            x: x.clone(),
            a,
            b,
            a_inv,
            b_inv,
            ab,
            ab_trace,
        }
    }

    pub fn generator(&self) -> &AlgebraElement {
        &self.x
    }

    /// Cayley image of the generator, normalized to unit determinant.
    pub fn cayley(&self) -> UnitaryOperator {
        let mut m = &self.a_inv * &self.b;
        let d = m.nrows();
        if d > 2 {
            let det = m.determinant();
            let phase = C64::from_polar(1.0, -det.arg() / d as f64);
            m *= phase;
        }
        UnitaryOperator { m }
    }

    /// Inverse of the Cayley image, `(1 + X/2)^{-1}(1 - X/2)`, i.e. the image of `-X`.
    pub fn cayley_neg(&self) -> UnitaryOperator {
        self.cayley().inverse()
    }

    /// Left-trivialized differential `P[(1 - X/2)^{-1} Y (1 + X/2)^{-1}]`.
    pub fn dl(&self, y: &AlgebraElement) -> AlgebraElement {
        project_raw(&(&self.a_inv * y.matrix() * &self.b_inv))
    }

    /// Right-trivialized differential `P[(1 + X/2)^{-1} Y (1 - X/2)^{-1}]`.
    ///
    /// Also equals the left-trivialized differential at `-X`.
    pub fn dr(&self, y: &AlgebraElement) -> AlgebraElement {
        project_raw(&(&self.b_inv * y.matrix() * &self.a_inv))
    }

    /// Exact inverse of [`Self::dl`] on su(n+1).
    pub fn dl_inverse(&self, w: &AlgebraElement) -> AlgebraElement {
        self.trace_corrected(&self.a * w.matrix() * &self.b, w)
    }

    /// Exact inverse of [`Self::dr`] on su(n+1); equals `dl_inverse` at `-X`.
    pub fn dr_inverse(&self, w: &AlgebraElement) -> AlgebraElement {
        self.trace_corrected(&self.b * w.matrix() * &self.a, w)
    }

    // Y = F W G + c (1 - X^2/4) with c chosen so that tr Y = 0. When F W G
    // comes from inverting the projected differential this is the unique
    // trace-free preimage.
    fn trace_corrected(&self, fwg: CMatrix, w: &AlgebraElement) -> AlgebraElement {
        let c = trace_of_product(w.matrix(), &self.ab) / self.ab_trace;
        let y = fwg - &self.ab * c;
        project_raw(&y)
    }

    /// `P(R)` where `R = 1/2 [A^{-1} M B^{-1} V A^{-1} - B^{-1} V A^{-1} M B^{-1}]`,
    /// with `A = 1 - Z/2`, `B = 1 + Z/2` and `Z = X` (or `Z = -X` when `negate`).
    ///
    /// This is the Riesz representative of `Y -> (d/de) <dl_{Z + eY} M, V>` at e = 0.
    pub(crate) fn dl_sensitivity(&self, m: &AlgebraElement, v: &AlgebraElement, negate: bool) -> AlgebraElement {
        let (ai, bi) = if negate {
            (&self.b_inv, &self.a_inv)
        } else {
            (&self.a_inv, &self.b_inv)
        };
        let amb = ai * m.matrix() * bi;
        let bva = bi * v.matrix() * ai;
        let r = (amb * v.matrix() * ai - bva * m.matrix() * bi) * C64::new(0.5, 0.0);
        project_raw(&r)
    }
}

/// Determinant-normalized Cayley map su(n+1) -> SU(n+1).
pub fn cayley(x: &AlgebraElement) -> UnitaryOperator {
    CayleyFrame::new(x).cayley()
}

/// Inverse of [`cayley`]: the trace-free `X` with `cayley(X) = V`.
///
/// For two-level systems this is `2 (V - 1)(V + 1)^{-1}`. For larger systems a
/// global phase `e^{ia}` is first found so that `2 (e^{ia}V - 1)(e^{ia}V + 1)^{-1}`
/// is trace-free.
pub fn cayley_inverse(v: &UnitaryOperator) -> Result<AlgebraElement> {
    let d = v.dim();
    let id = CMatrix::identity(d, d);
    let raw = |alpha: f64| -> Result<(CMatrix, CMatrix)> {
        let w = v.matrix() * C64::from_polar(1.0, alpha);
        let plus_inv = (&w + &id).lu().try_inverse().ok_or(Error::CayleyChartBoundary)?;
        if plus_inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) || plus_inv.norm() > 1e12 {
            return Err(Error::CayleyChartBoundary);
        }
        let x = (&w - &id) * &plus_inv * C64::new(2.0, 0.0);
        Ok((x, w))
    };

    let (mut x, _) = raw(0.0)?;
    if d > 2 {
        let mut alpha = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let (xa, w) = raw(alpha)?;
            let f = trace(&xa).im;
            x = xa;
            if f.abs() <= 1e-14 * (1.0 + x.norm()) {
                converged = true;
                break;
            }
            let plus_inv = (&w + &id).lu().try_inverse().ok_or(Error::CayleyChartBoundary)?;
            let dx = &plus_inv * (&w * I) * &plus_inv * C64::new(4.0, 0.0);
            let df = trace(&dx).im;
            if df <= 0.0 || !df.is_finite() {
                return Err(Error::CayleyChartBoundary);
            }
            alpha -= f / df;
        }
        if !converged || (alpha * d as f64).abs() >= std::f64::consts::PI {
            return Err(Error::CayleyChartBoundary);
        }
    }
    Ok(project_raw(&x))
}

/// `(1 - X/2)^{-1} Y (1 + X/2)^{-1}`, projected onto su(n+1).
pub fn dl_tau(x: &AlgebraElement, y: &AlgebraElement) -> AlgebraElement {
    CayleyFrame::new(x).dl(y)
}

/// Inverse of [`dl_tau`] in its second argument.
pub fn dl_tau_inverse(x: &AlgebraElement, w: &AlgebraElement) -> AlgebraElement {
    CayleyFrame::new(x).dl_inverse(w)
}

/// `(1 + X/2)^{-1} Y (1 - X/2)^{-1}`, projected onto su(n+1).
pub fn dr_tau(x: &AlgebraElement, y: &AlgebraElement) -> AlgebraElement {
    CayleyFrame::new(x).dr(y)
}

/// Inverse of [`dr_tau`] in its second argument.
pub fn dr_tau_inverse(x: &AlgebraElement, w: &AlgebraElement) -> AlgebraElement {
    CayleyFrame::new(x).dr_inverse(w)
}

/// `U X U^{-1}`.
pub fn adjoint_action(u: &UnitaryOperator, x: &AlgebraElement) -> AlgebraElement {
    project_raw(&(u.matrix() * x.matrix() * u.matrix().adjoint()))
}

/// Orthonormal basis of su(n+1): generalized Gell-Mann matrices times `i/2`.
///
/// Ordering: for each index pair `j < k` the symmetric then the antisymmetric
/// element, followed by the `n` diagonal elements. For `n = 1` this is
/// `{i sx/2, i sy/2, i sz/2}`.
pub fn su_basis(n: usize) -> Vec<AlgebraElement> {
    assert!(n >= 1, "su(n+1) needs n >= 1");
    let d = n + 1;
    let mut basis = Vec::with_capacity(n * (n + 2));
    let half = C64::new(0.5, 0.0);
    let ihalf = C64::new(0.0, 0.5);
    for j in 0..d {
        for k in (j + 1)..d {
            let mut sym = CMatrix::zeros(d, d);
            sym[(j, k)] = ihalf;
            sym[(k, j)] = ihalf;
            basis.push(AlgebraElement::from_raw(sym));
            let mut anti = CMatrix::zeros(d, d);
            anti[(j, k)] = half;
            anti[(k, j)] = -half;
            basis.push(AlgebraElement::from_raw(anti));
        }
    }
    for l in 1..=n {
        let scale = (2.0 / (l * (l + 1)) as f64).sqrt() * 0.5;
        let mut diag = CMatrix::zeros(d, d);
        for i in 0..l {
            diag[(i, i)] = C64::new(0.0, scale);
        }
        diag[(l, l)] = C64::new(0.0, -(l as f64) * scale);
        basis.push(AlgebraElement::from_raw(diag));
    }
    basis
}
