//! Backward (adjoint) sweep and exact gradient of the discrete cost.

use crate::error::{Error, Result};
use crate::forward::{integrate, DiscretePath, ProblemSpec};
use crate::lie::{AlgebraElement, CayleyFrame};
use crate::state::mismatch_adjoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// `K^±_{(X, M)} V`: the element with
/// `<K V, Y> = (d/de) <dl_{±h(X + eY)} M, V>` at `e = 0`.
pub fn k_map(sign: Sign, x: &AlgebraElement, m: &AlgebraElement, v: &AlgebraElement, h: f64) -> AlgebraElement {
    let frame = CayleyFrame::new(&(x * h));
    match sign {
        Sign::Plus => frame.dl_sensitivity(m, v, false) * h,
        Sign::Minus => frame.dl_sensitivity(m, v, true) * -h,
    }
}

/// Adjoint variables, indexed `1..=N` (slot 0 is unused and zero).
#[derive(Clone, Debug)]
pub struct AdjointPath {
    pub p0: Vec<AlgebraElement>,
    pub p1: Vec<AlgebraElement>,
    pub v0: Vec<AlgebraElement>,
    pub v1: Vec<AlgebraElement>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub wrt_m0: AlgebraElement,
    pub wrt_l0: AlgebraElement,
}

impl Gradient {
    /// Norm of the pair under the product inner product.
    pub fn norm(&self) -> f64 {
        (self.wrt_m0.inner(&self.wrt_m0) + self.wrt_l0.inner(&self.wrt_l0)).sqrt()
    }
}

/// Runs the adjoint recursion backward from `mu = N` to `mu = 1`.
pub fn backward(path: &DiscretePath) -> Result<AdjointPath> {
    sweep(path, &path.delta, &path.l)
}

// The recursion is linear in the sources `delta` and `l`; the trajectory
// (frames, states, M and the jumps M + Delta) only enters the coefficients.
fn sweep(path: &DiscretePath, delta: &[AlgebraElement], l: &[AlgebraElement]) -> Result<AdjointPath> {
    let spec = path.spec();
    let n = spec.steps();
    let h = spec.h();
    let d = spec.dim();
    let zero = AlgebraElement::zeros(d);
    let mut adj = AdjointPath {
        p0: vec![zero.clone(); n + 1],
        p1: vec![zero.clone(); n + 1],
        v0: vec![zero.clone(); n + 1],
        v1: vec![zero; n + 1],
    };

    // Frames at X_mu = i h H_mu; dl/dr at -X_mu are the dr/dl of the same frame.
    let last = path.frame(n);
    adj.p0[n] = last.dl(&delta[n]) * (-1.0 / h);
    adj.p1[n] = &adj.p0[n] * h;

    for mu in (1..n).rev() {
        let here = path.frame(mu);
        let next = path.frame(mu + 1);

        let v0 = &(&adj.v0[mu + 1] + &(&adj.p1[mu + 1] * h)) - &l[mu];
        let v1_transported = next.dl(&adj.v1[mu + 1]);
        let v1 = here.dr_inverse(&(&v1_transported - &(here.dr(&v0) * h)));

        let mut inner_p0 = &next.dr_inverse(&adj.p0[mu + 1]) - &(&delta[mu] * (1.0 / h));
        if spec.targets().at_node(mu).is_some() {
            let a = mismatch_adjoint(mu, &path.psi[mu], &v1_transported, spec.targets()).map_err(|e| tag(e, mu))?;
            inner_p0 += &a;
        }
        let p0 = here.dl(&inner_p0);

        // K^- at (-iH_mu, M_mu) evaluates dl at i h H_mu; K^+ at (-iH_mu, .) evaluates it at -i h H_mu.
        let k_minus = here.dl_sensitivity(&path.m[mu], &(&(&v0 * h) + &v1), false) * -h;
        let jump_before = &path.m[mu - 1] + &path.delta[mu - 1];
        let k_plus = here.dl_sensitivity(&jump_before, &v1, true) * h;
        let p1 = &(&(&adj.p1[mu + 1] + &(&p0 * h)) - &k_minus) + &k_plus;

        adj.v0[mu] = v0;
        adj.v1[mu] = v1;
        adj.p0[mu] = p0;
        adj.p1[mu] = p1;
    }
    Ok(adj)
}

fn tag(err: Error, mu: usize) -> Error {
    match err {
        Error::CutLocus { distance, .. } => Error::CutLocus {
            distance,
            node: Some(mu),
        },
        other => other,
    }
}

/// Assembles the gradient with respect to `(M_0, L_0)` from the adjoint sweep.
pub fn gradient(path: &DiscretePath, adj: &AdjointPath) -> Gradient {
    let h = path.spec().h();
    let first = path.frame(1);
    Gradient {
        wrt_m0: first.dl(&adj.v1[1]) * -h,
        wrt_l0: (&(&path.l[0] - &(&adj.p1[1] * h)) - &adj.v0[1]) * h,
    }
}

/// Cost and adjoint gradient at `(M_0, L_0)`: one forward and one backward sweep.
pub fn cost_and_gradient(
    spec: &ProblemSpec,
    m0: &AlgebraElement,
    l0: &AlgebraElement,
) -> Result<(f64, Gradient, DiscretePath)> {
    let path = integrate(spec, m0, l0)?;
    let adj = backward(&path)?;
    let grad = gradient(&path, &adj);
    Ok((crate::forward::cost(&path), grad, path))
}
