//! Discrete equations of motion and the discrete cost.

use crate::error::{Error, Result};
use crate::lie::{AlgebraElement, CayleyFrame, HermitianOperator, UnitaryOperator};
use crate::state::{delta_mu, distance, geodesic_hamiltonian, PureState, Target, TargetList};

/// Tolerance for target times to sit on the uniform grid.
pub const GRID_ALIGNMENT_TOL: f64 = 1e-9;

/// How the initial Hamiltonian `H_0` is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialHamiltonian {
    /// Constant-flow geodesic from `psi0` to the first target.
    Geodesic,
    Prescribed(HermitianOperator),
}

/// Problem data on a uniform grid `t_0 + mu h`, `mu = 0..N`, whose last node is the last target.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    psi0: PureState,
    targets: TargetList,
    t0: f64,
    steps: usize,
    h: f64,
    h0_policy: InitialHamiltonian,
    h0: HermitianOperator,
}

impl ProblemSpec {
    /// `targets` are `(time, state)` pairs in increasing time order.
    pub fn new(
        psi0: PureState,
        targets: Vec<(f64, PureState)>,
        sigma: f64,
        t0: f64,
        steps: usize,
        h0_policy: InitialHamiltonian,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidProblem("at least one target is required".into()));
        }
        if steps < targets.len() {
            return Err(Error::InvalidProblem(format!(
                "step count {steps} is smaller than the number of targets {}",
                targets.len()
            )));
        }
        let dim = psi0.dim();
        if dim < 2 {
            return Err(Error::InvalidProblem("state dimension must be at least 2".into()));
        }
        let t_final = targets.last().expect("non-empty").0;
        if !t0.is_finite() || !(t_final > t0) {
            return Err(Error::InvalidProblem(format!(
                "final target time {t_final} must exceed the initial time {t0}"
            )));
        }
        let h = (t_final - t0) / steps as f64;
        let mut pinned = Vec::with_capacity(targets.len());
        for (index, (time, state)) in targets.into_iter().enumerate() {
            if state.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: state.dim(),
                });
            }
            let node = ((time - t0) / h).round();
            let nearest = t0 + node * h;
            if !((nearest - time).abs() <= GRID_ALIGNMENT_TOL) || node < 1.0 {
                return Err(Error::MisalignedTarget {
                    index: index + 1,
                    time,
                    nearest,
                    step: h,
                });
            }
            pinned.push(Target {
                state,
                time,
                node: node as usize,
            });
        }
        let targets = TargetList::new(pinned, sigma)?;
        let h0 = match &h0_policy {
            InitialHamiltonian::Geodesic => {
                let first = &targets.as_slice()[0];
                geodesic_hamiltonian(&psi0, &first.state, first.time - t0)?
            }
            InitialHamiltonian::Prescribed(h0) => {
                if h0.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: h0.dim(),
                    });
                }
                h0.clone()
            }
        };
        Ok(Self {
            psi0,
            targets,
            t0,
            steps,
            h,
            h0_policy,
            h0,
        })
    }

    /// Same problem on a grid with `steps` intervals.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(
            self.psi0.clone(),
            self.target_pairs(),
            self.sigma(),
            self.t0,
            steps,
            self.h0_policy.clone(),
        )
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Ok(Self {
            targets: self.targets.with_sigma(sigma)?,
            ..self.clone()
        })
    }

    fn target_pairs(&self) -> Vec<(f64, PureState)> {
        self.targets.iter().map(|t| (t.time, t.state.clone())).collect()
    }

    /// The dimension parameter `n` of SU(n+1).
    pub fn n(&self) -> usize {
        self.psi0.dim() - 1
    }

    pub fn dim(&self) -> usize {
        self.psi0.dim()
    }

    pub fn psi0(&self) -> &PureState {
        &self.psi0
    }

    pub fn targets(&self) -> &TargetList {
        &self.targets
    }

    pub fn sigma(&self) -> f64 {
        self.targets.sigma()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_final(&self) -> f64 {
        self.targets.last().time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn h0(&self) -> &HermitianOperator {
        &self.h0
    }

    pub fn h0_policy(&self) -> &InitialHamiltonian {
        &self.h0_policy
    }

    pub fn time(&self, mu: usize) -> f64 {
        self.t0 + mu as f64 * self.h
    }
}

/// The four discrete variables at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct StepState {
    pub u: UnitaryOperator,
    pub ham: HermitianOperator,
    pub m: AlgebraElement,
    pub l: AlgebraElement,
}

struct Advanced {
    next: StepState,
    /// Cayley frame at `i h H_{mu+1}`.
    frame: CayleyFrame,
    delta: AlgebraElement,
}

fn advance(mu: usize, s: &StepState, psi: &PureState, spec: &ProblemSpec) -> Result<Advanced> {
    let h = spec.h;
    let ham = HermitianOperator::from_raw(s.ham.matrix() + s.l.to_hermitian().matrix() * crate::lie::C64::new(-h, 0.0));
    let delta = if mu == 0 {
        AlgebraElement::zeros(spec.dim())
    } else {
        delta_mu(mu, psi, &spec.targets)?
    };
    let frame = CayleyFrame::new(&(ham.times_i() * h));
    // dl at -X coincides with dr at X.
    let m = frame.dl_inverse(&frame.dr(&(&s.m + &delta)));
    let l = &s.l - &(frame.dl(&m) * h);
    let u = frame.cayley_neg().compose(&s.u);
    Ok(Advanced {
        next: StepState { u, ham, m, l },
        frame,
        delta,
    })
}

/// One step of the discrete equations of motion from grid point `mu`.
pub fn step(mu: usize, state: &StepState, spec: &ProblemSpec) -> Result<StepState> {
    if mu >= spec.steps {
        return Err(Error::InvalidProblem(format!(
            "step index {mu} outside 0..{}",
            spec.steps
        )));
    }
    let psi = spec.psi0.evolved(&state.u);
    advance(mu, state, &psi, spec).map(|a| a.next)
}

/// Forward solution: all discrete variables for `mu = 0..=N`, with per-step caches.
#[derive(Clone, Debug)]
pub struct DiscretePath {
    spec: ProblemSpec,
    pub u: Vec<UnitaryOperator>,
    pub ham: Vec<HermitianOperator>,
    pub m: Vec<AlgebraElement>,
    pub l: Vec<AlgebraElement>,
    /// `psi_mu = U_mu psi0`.
    pub psi: Vec<PureState>,
    /// Mismatch forces `Delta_mu`, including the terminal `Delta_N`.
    pub delta: Vec<AlgebraElement>,
    frames: Vec<CayleyFrame>,
}

impl DiscretePath {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Cayley frame at `X_mu = i h H_mu`.
    pub(crate) fn frame(&self, mu: usize) -> &CayleyFrame {
        &self.frames[mu]
    }

    pub fn state(&self, mu: usize) -> StepState {
        StepState {
            u: self.u[mu].clone(),
            ham: self.ham[mu].clone(),
            m: self.m[mu].clone(),
            l: self.l[mu].clone(),
        }
    }
}

/// Integrates the discrete equations of motion from `(M_0, L_0)`.
pub fn integrate(spec: &ProblemSpec, m0: &AlgebraElement, l0: &AlgebraElement) -> Result<DiscretePath> {
    let d = spec.dim();
    for x in [m0, l0] {
        if x.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.dim(),
            });
        }
    }
    let n = spec.steps;
    let mut path = DiscretePath {
        spec: spec.clone(),
        u: Vec::with_capacity(n + 1),
        ham: Vec::with_capacity(n + 1),
        m: Vec::with_capacity(n + 1),
        l: Vec::with_capacity(n + 1),
        psi: Vec::with_capacity(n + 1),
        delta: Vec::with_capacity(n + 1),
        frames: Vec::with_capacity(n + 1),
    };
    let mut current = StepState {
        u: UnitaryOperator::identity(d),
        ham: spec.h0.clone(),
        m: m0.clone(),
        l: l0.clone(),
    };
    path.frames.push(CayleyFrame::new(&(spec.h0.times_i() * spec.h)));
    for mu in 0..n {
        let psi = spec.psi0.evolved(&current.u);
        let adv = advance(mu, &current, &psi, spec)?;
        path.psi.push(psi);
        path.delta.push(adv.delta);
        path.frames.push(adv.frame);
        let StepState { u, ham, m, l } = std::mem::replace(&mut current, adv.next);
        path.u.push(u);
        path.ham.push(ham);
        path.m.push(m);
        path.l.push(l);
    }
    let psi_n = spec.psi0.evolved(&current.u);
    path.delta.push(delta_mu(n, &psi_n, &spec.targets)?);
    path.psi.push(psi_n);
    path.u.push(current.u);
    path.ham.push(current.ham);
    path.m.push(current.m);
    path.l.push(current.l);
    Ok(path)
}

/// The two parts of the discrete cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostBreakdown {
    /// `sum_{mu < N} (h/2) <L_mu, L_mu>`.
    pub control: f64,
    /// `sum_j D_j^2` over the targets.
    pub sum_sq_distance: f64,
    /// `sum_j D_j^2 / (2 sigma^2)`.
    pub mismatch: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.control + self.mismatch
    }
}

pub fn cost_breakdown(path: &DiscretePath) -> CostBreakdown {
    let spec = &path.spec;
    let n = spec.steps;
    let control = path.l[..n].iter().map(|l| 0.5 * spec.h * l.inner(l)).sum();
    let sum_sq_distance: f64 = spec
        .targets
        .iter()
        .map(|t| distance(&path.psi[t.node], &t.state).powi(2))
        .sum();
    let sigma = spec.sigma();
    CostBreakdown {
        control,
        sum_sq_distance,
        mismatch: sum_sq_distance / (2.0 * sigma * sigma),
    }
}

/// Discrete cost of a path.
pub fn cost(path: &DiscretePath) -> f64 {
    cost_breakdown(path).total()
}

/// `(||L_N||, ||M_N + Delta_N||)`.
pub fn terminal_residual(path: &DiscretePath) -> (f64, f64) {
    let n = path.spec.steps;
    (path.l[n].norm(), (&path.m[n] + &path.delta[n]).norm())
}
