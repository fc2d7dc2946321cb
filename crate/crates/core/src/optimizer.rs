//! Descent over the initial multipliers `(M_0, L_0)` and solution diagnostics.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::{cost_and_gradient, Gradient};
use crate::error::{Error, Result};
use crate::forward::{cost, cost_breakdown, integrate, terminal_residual, DiscretePath, ProblemSpec};
use crate::lie::{adjoint_action, su_basis, AlgebraElement};
use crate::state::{delta_mu, stabilizer_basis, stabilizer_perp_basis};

/// Search direction used by the line search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DescentDirection {
    /// Negative gradient.
    Steepest,
    /// Limited-memory BFGS two-loop recursion over the last `memory` pairs.
    Lbfgs { memory: usize },
}

/// Random restarts around the zero initialization; the best local minimum is kept.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Multistart {
    pub seed: u64,
    pub starts: usize,
    /// Half-width of the uniform distribution for each coordinate.
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub initial_step: f64,
    /// Backtracking factor.
    pub beta: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Cap on the coordinate displacement `||step * d||` of any trial point.
    pub max_displacement: f64,
    /// Stop once neither the cost nor the best gradient norm has improved for this many
    /// iterations (0 disables).
    pub stall_window: usize,
    /// Restrict `M_0` to the 2n-dimensional complement of the stabilizer of `psi0`.
    pub restrict_m0: bool,
    pub direction: DescentDirection,
    pub multistart: Option<Multistart>,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-9,
            initial_step: 1.0,
            beta: 0.5,
            armijo: 1e-4,
            max_backtracks: 60,
            max_displacement: 1.0,
            stall_window: 100,
            restrict_m0: true,
            direction: DescentDirection::Lbfgs { memory: 10 },
            multistart: None,
        }
    }
}

impl DescentOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidProblem(format!("descent options: {what}")));
        if self.max_iters == 0 || self.max_backtracks == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.grad_tol > 0.0) || !(self.initial_step > 0.0) || !(self.max_displacement > 0.0) {
            return bad("tolerance, initial step and displacement cap must be positive");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) || !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("beta and the Armijo constant must lie in (0, 1)");
        }
        if let DescentDirection::Lbfgs { memory: 0 } = self.direction {
            return bad("L-BFGS memory must be positive");
        }
        if let Some(ms) = &self.multistart {
            if !(ms.scale > 0.0) {
                return bad("multistart scale must be positive");
            }
        }
        Ok(())
    }
}

/// Coordinates of `(M_0, L_0)` against orthonormal bases.
#[derive(Clone, Debug)]
pub struct Parametrization {
    pub m_basis: Vec<AlgebraElement>,
    pub l_basis: Vec<AlgebraElement>,
}

impl Parametrization {
    pub fn new(spec: &ProblemSpec, restrict_m0: bool) -> Self {
        let m_basis = if restrict_m0 {
            stabilizer_perp_basis(spec.psi0())
        } else {
            su_basis(spec.n())
        };
        Self {
            m_basis,
            l_basis: su_basis(spec.n()),
        }
    }

    pub fn len(&self) -> usize {
        self.m_basis.len() + self.l_basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn split(&self, x: &[f64]) -> (AlgebraElement, AlgebraElement) {
        let k = self.m_basis.len();
        (
            AlgebraElement::combine(&self.m_basis, &x[..k]),
            AlgebraElement::combine(&self.l_basis, &x[k..]),
        )
    }

    /// Coordinates of a gradient; for a restricted `M_0` this is its projection.
    pub fn coordinates(&self, g: &Gradient) -> Vec<f64> {
        let mut c = g.wrt_m0.coordinates(&self.m_basis);
        c.extend(g.wrt_l0.coordinates(&self.l_basis));
        c
    }

    pub fn gradient_from(&self, c: &[f64]) -> Gradient {
        let (wrt_m0, wrt_l0) = self.split(c);
        Gradient { wrt_m0, wrt_l0 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

struct Point {
    x: Vec<f64>,
    cost: f64,
    grad: Vec<f64>,
    path: DiscretePath,
}

fn evaluate(spec: &ProblemSpec, param: &Parametrization, x: Vec<f64>) -> Result<Point> {
    let (m0, l0) = param.split(&x);
    let (cost, g, path) = cost_and_gradient(spec, &m0, &l0)?;
    Ok(Point {
        grad: param.coordinates(&g),
        x,
        cost,
        path,
    })
}

struct Lbfgs {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q = axpy(&q, -a, y);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q = axpy(&q, a - b, s);
        }
        q.iter().map(|v| -v).collect()
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        // Skip pairs that would break positive definiteness.
        if sy <= 1e-12 * norm(&s) * norm(&y) {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Gradient norm below tolerance.
    Converged,
    MaxIterations,
    /// No progress within the stall window: the gradient is at its floating-point floor.
    Stagnated,
}

/// Converged (or best-effort) solution with its iteration history.
#[derive(Clone, Debug)]
pub struct Solution {
    pub m0: AlgebraElement,
    pub l0: AlgebraElement,
    pub path: DiscretePath,
    pub gradient: Gradient,
    pub cost_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    /// Accepted step length per iteration (0 for the initial point).
    pub step_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub options: DescentOptions,
    /// Report without the grid-refinement study; see [`validate`] for the full one.
    pub validation: ValidationReport,
}

impl Solution {
    pub fn cost(&self) -> f64 {
        *self.cost_history.last().expect("non-empty history")
    }

    pub fn grad_norm(&self) -> f64 {
        *self.grad_norm_history.last().expect("non-empty history")
    }
}

struct Descent {
    last: Point,
    cost_history: Vec<f64>,
    grad_norm_history: Vec<f64>,
    step_history: Vec<f64>,
    iterations: usize,
    termination: Termination,
}

/// Relative cost increase tolerated by the approximate Wolfe acceptance test.
pub const ROUNDOFF_COST: f64 = 1e-12;

/// Backtracking along `d`; `None` when no acceptable step is found.
fn line_search(
    spec: &ProblemSpec,
    param: &Parametrization,
    opts: &DescentOptions,
    current: &Point,
    d: &[f64],
) -> Result<Option<(Point, f64)>> {
    let slope = dot(&current.grad, d);
    let mut step = opts.initial_step.min(opts.max_displacement / norm(d));
    for _ in 0..opts.max_backtracks {
        let x = axpy(&current.x, step, d);
        if x == current.x {
            // The direction no longer resolves in floating point.
            return Ok(None);
        }
        match evaluate(spec, param, x) {
            Ok(trial) => {
                if trial.cost <= current.cost + opts.armijo * step * slope {
                    return Ok(Some((trial, step)));
                }
                // Near a minimum, cost differences drown in roundoff. Fall back on the
                // approximate Wolfe test: the cost may rise by roundoff only, and the
                // directional derivative must have shrunk.
                let trial_slope = dot(&trial.grad, d);
                let flat = trial.cost <= current.cost + ROUNDOFF_COST * current.cost.abs();
                if flat && trial_slope >= 0.9 * slope && trial_slope <= -0.8 * slope {
                    return Ok(Some((trial, step)));
                }
            }
            // Trial points on a cut locus are rejected like any other failed trial.
            Err(Error::CutLocus { .. }) => {}
            Err(e) => return Err(e),
        }
        step *= opts.beta;
    }
    Ok(None)
}

fn descend(spec: &ProblemSpec, param: &Parametrization, opts: &DescentOptions, x0: Vec<f64>) -> Result<Descent> {
    let mut current = evaluate(spec, param, x0)?;
    let mut cost_history = vec![current.cost];
    let mut grad_norm_history = vec![norm(&current.grad)];
    let mut step_history = vec![0.0];
    let mut lbfgs = match opts.direction {
        DescentDirection::Lbfgs { memory } => Some(Lbfgs {
            memory,
            pairs: VecDeque::new(),
        }),
        DescentDirection::Steepest => None,
    };
    let mut iterations = 0;
    let mut best = (current.cost, norm(&current.grad), 0usize);
    let termination = loop {
        let g_norm = norm(&current.grad);
        if g_norm < opts.grad_tol {
            break Termination::Converged;
        }
        if iterations >= opts.max_iters {
            break Termination::MaxIterations;
        }
        if opts.stall_window > 0 && iterations - best.2 >= opts.stall_window {
            break Termination::Stagnated;
        }
        let steepest: Vec<f64> = current.grad.iter().map(|v| -v).collect();
        let mut accepted = None;
        if let Some(q) = lbfgs.as_mut().filter(|q| !q.pairs.is_empty()) {
            let d = q.direction(&current.grad);
            if dot(&d, &current.grad) < 0.0 {
                accepted = line_search(spec, param, opts, &current, &d)?;
            }
            if accepted.is_none() {
                // Fall back to the negative gradient with a fresh memory.
                q.pairs.clear();
            }
        }
        if accepted.is_none() {
            accepted = line_search(spec, param, opts, &current, &steepest)?;
        }
        let Some((trial, step)) = accepted else {
            return Err(Error::LineSearchStalled {
                iteration: iterations,
                cost: current.cost,
                grad_norm: g_norm,
                step: opts.initial_step * opts.beta.powi(opts.max_backtracks as i32 - 1),
            });
        };
        if let Some(q) = lbfgs.as_mut() {
            let s = trial.x.iter().zip(&current.x).map(|(a, b)| a - b).collect();
            let y = trial.grad.iter().zip(&current.grad).map(|(a, b)| a - b).collect();
            q.push(s, y);
        }
        current = trial;
        iterations += 1;
        cost_history.push(current.cost);
        grad_norm_history.push(norm(&current.grad));
        step_history.push(step);
        let g = norm(&current.grad);
        if current.cost < best.0 || g < 0.5 * best.1 {
            best = (current.cost.min(best.0), g.min(best.1), iterations);
        }
    };
    Ok(Descent {
        last: current,
        cost_history,
        grad_norm_history,
        step_history,
        iterations,
        termination,
    })
}

/// Minimizes the discrete cost over `(M_0, L_0)`, starting from zero.
pub fn solve(spec: &ProblemSpec, opts: &DescentOptions) -> Result<Solution> {
    solve_from(spec, opts, None)
}

/// Like [`solve`], starting from `(M_0, L_0)`; a restricted `M_0` is first projected.
pub fn solve_from(
    spec: &ProblemSpec,
    opts: &DescentOptions,
    start: Option<(&AlgebraElement, &AlgebraElement)>,
) -> Result<Solution> {
    opts.validate()?;
    let param = Parametrization::new(spec, opts.restrict_m0);
    let x0 = match start {
        Some((m0, l0)) => param.coordinates(&Gradient {
            wrt_m0: m0.clone(),
            wrt_l0: l0.clone(),
        }),
        None => vec![0.0; param.len()],
    };
    let mut run = descend(spec, &param, opts, x0)?;
    if let Some(ms) = &opts.multistart {
        let mut rng = ChaCha8Rng::seed_from_u64(ms.seed);
        for _ in 0..ms.starts {
            let x0: Vec<f64> = (0..param.len()).map(|_| rng.gen_range(-ms.scale..ms.scale)).collect();
            // Starts that fail (e.g. stall at a cut locus) are skipped.
            if let Ok(other) = descend(spec, &param, opts, x0) {
                if other.last.cost < run.last.cost {
                    run = other;
                }
            }
        }
    }
    let (m0, l0) = param.split(&run.last.x);
    let gradient = param.gradient_from(&run.last.grad);
    let validation = report(&run.last.path, norm(&run.last.grad), opts.grad_tol);
    Ok(Solution {
        m0,
        l0,
        path: run.last.path,
        gradient,
        cost_history: run.cost_history,
        grad_norm_history: run.grad_norm_history,
        step_history: run.step_history,
        iterations: run.iterations,
        converged: run.termination == Termination::Converged,
        termination: run.termination,
        options: opts.clone(),
        validation,
    })
}

/// Bisections allowed between two consecutive tolerances of a continuation schedule.
pub const MAX_CONTINUATION_BISECTIONS: usize = 8;

/// Result of [`solve_with_continuation`].
#[derive(Clone, Debug)]
pub struct Continuation {
    pub solution: Solution,
    /// Tolerances actually solved, including inserted ones; the last is `spec.sigma()`.
    pub sigmas: Vec<f64>,
}

/// Solves at each tolerance of `schedule` in turn (typically decreasing toward the
/// problem's own sigma), warm-starting each stage from the previous optimum, and
/// finishes at `spec.sigma()`.
///
/// Single shooting is stiff in `1/sigma^2`: the same `(M_0, L_0)` gives a very different
/// path at a new tolerance, and descent from it can end at a spurious critical point. A
/// stage is therefore accepted only if its terminal residuals converged and its cost does
/// not exceed that of the previous optimal path re-weighted to the new tolerance (an upper
/// bound on the new optimum). Otherwise the step is bisected in `1/sigma^2`.
pub fn solve_with_continuation(spec: &ProblemSpec, opts: &DescentOptions, schedule: &[f64]) -> Result<Continuation> {
    let mut targets: Vec<f64> = schedule.to_vec();
    targets.push(spec.sigma());
    let mut current = solve(&spec.with_sigma(targets[0])?, opts)?;
    let mut sigmas = vec![targets[0]];
    for &goal in &targets[1..] {
        let mut pending = vec![goal];
        let mut bisections = 0;
        while let Some(&sigma) = pending.last() {
            let attempt = solve_from(&spec.with_sigma(sigma)?, opts, Some((&current.m0, &current.l0)));
            match attempt {
                Ok(next) if stage_accepted(&current, &next, sigma) => {
                    current = next;
                    sigmas.push(sigma);
                    pending.pop();
                }
                other if bisections == MAX_CONTINUATION_BISECTIONS => {
                    // Best effort: hand back the final attempt with its diagnostics.
                    current = other?;
                    sigmas.push(sigma);
                    pending.pop();
                }
                _ => {
                    let from = current.path.spec().sigma();
                    let mid = (0.5 * (from.powi(-2) + sigma.powi(-2))).powf(-0.5);
                    pending.push(mid);
                    bisections += 1;
                }
            }
        }
    }
    Ok(Continuation {
        solution: current,
        sigmas,
    })
}

fn stage_accepted(prev: &Solution, next: &Solution, sigma: f64) -> bool {
    let c = cost_breakdown(&prev.path);
    let bound = c.control + c.sum_sq_distance / (2.0 * sigma * sigma);
    next.validation.residuals_converged && next.cost() <= bound * (1.0 + 1e-9)
}

/// Central-difference gradient of `cost(integrate(...))` along every basis direction:
/// `2 (dim M-basis + dim su(n+1))` forward integrations.
pub fn fd_gradient(
    spec: &ProblemSpec,
    m0: &AlgebraElement,
    l0: &AlgebraElement,
    step: f64,
    restrict_m0: bool,
) -> Result<Gradient> {
    let param = Parametrization::new(spec, restrict_m0);
    let f = |m: &AlgebraElement, l: &AlgebraElement| integrate(spec, m, l).map(|p| cost(&p));
    let mut coeffs = Vec::with_capacity(param.len());
    for e in &param.m_basis {
        let plus = f(&(m0 + &(e * step)), l0)?;
        let minus = f(&(m0 - &(e * step)), l0)?;
        coeffs.push((plus - minus) / (2.0 * step));
    }
    for e in &param.l_basis {
        let plus = f(m0, &(l0 + &(e * step)))?;
        let minus = f(m0, &(l0 - &(e * step)))?;
        coeffs.push((plus - minus) / (2.0 * step));
    }
    Ok(param.gradient_from(&coeffs))
}

/// Grid-refinement study: the problem re-solved at `N`, `2N`, `4N`, each warm-started
/// from the coarser optimum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Refinement {
    pub steps: Vec<usize>,
    pub cost: Vec<f64>,
    pub cubic_residual: Vec<f64>,
    /// `log2` of the ratio of successive cost differences.
    pub cost_order: f64,
    /// `log2` of successive cubic-residual ratios.
    pub cubic_order: Vec<f64>,
    pub converged: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `||L_N||`.
    pub terminal_l: f64,
    /// `||M_N + Delta_N||`.
    pub terminal_m: f64,
    /// `max_mu max_A |<M_mu, A>| / max(1, ||M_mu||)` over stabilizer generators `A` of `psi_mu`.
    pub lemma_residual: f64,
    /// Largest mismatch between the re-derived `M` jump and `Delta_mu` at a node.
    pub node_jump_residual: f64,
    /// Largest re-derived `M` jump away from nodes.
    pub off_node_jump: f64,
    /// Largest residual of the `L` update, i.e. continuity of `L` in the scheme.
    pub l_scheme_residual: f64,
    /// `max ||d^3 H/h^3 + i[H, d^2 H/h^2]||` over forward stencils inside open intervals.
    pub cubic_residual: f64,
    pub refinement: Option<Refinement>,
    pub grad_norm: f64,
    pub gradient_converged: bool,
    pub residuals_converged: bool,
    /// Gradient and terminal-residual convergence disagree.
    pub disagreement: bool,
}

/// Threshold on the terminal residuals used to certify convergence.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Full diagnostics of a solution, including the grid-refinement study.
pub fn validate(sol: &Solution) -> ValidationReport {
    let mut r = report(&sol.path, sol.grad_norm(), sol.options.grad_tol);
    r.refinement = refine(sol).ok();
    r
}

fn report(path: &DiscretePath, grad_norm: f64, grad_tol: f64) -> ValidationReport {
    let (terminal_l, terminal_m) = terminal_residual(path);
    let (node_jump_residual, off_node_jump, l_scheme_residual) = scheme_residuals(path);
    let gradient_converged = grad_norm < grad_tol;
    let residuals_converged = terminal_l < RESIDUAL_TOL && terminal_m < RESIDUAL_TOL;
    ValidationReport {
        terminal_l,
        terminal_m,
        lemma_residual: lemma_residual(path),
        node_jump_residual,
        off_node_jump,
        l_scheme_residual,
        cubic_residual: cubic_residual(path),
        refinement: None,
        grad_norm,
        gradient_converged,
        residuals_converged,
        disagreement: gradient_converged != residuals_converged,
    }
}

pub fn lemma_residual(path: &DiscretePath) -> f64 {
    let mut worst = 0.0f64;
    for (m, psi) in path.m.iter().zip(&path.psi) {
        let scale = m.norm().max(1.0);
        for a in stabilizer_basis(psi) {
            worst = worst.max(m.inner(&a).abs() / scale);
        }
    }
    worst
}

fn scheme_residuals(path: &DiscretePath) -> (f64, f64, f64) {
    let spec = path.spec();
    let h = spec.h();
    let (mut node, mut off, mut l_res) = (0.0f64, 0.0f64, 0.0f64);
    for mu in 0..spec.steps() {
        let frame = path.frame(mu + 1);
        // M_{mu+1} = Ad_{tau(-X)}(M_mu + Delta_mu), so the jump is Ad_{tau(X)} M_{mu+1} - M_mu.
        let jump = &adjoint_action(&frame.cayley(), &path.m[mu + 1]) - &path.m[mu];
        if mu > 0 && spec.targets().at_node(mu).is_some() {
            match delta_mu(mu, &path.psi[mu], spec.targets()) {
                Ok(delta) => node = node.max((&jump - &delta).norm()),
                Err(_) => node = f64::INFINITY,
            }
        } else {
            off = off.max(jump.norm());
        }
        let l_step = &(&path.l[mu + 1] - &path.l[mu]) + &(frame.dl(&path.m[mu + 1]) * h);
        l_res = l_res.max(l_step.norm());
    }
    (node, off, l_res)
}

/// Largest cubic-equation residual over forward stencils `H_mu..H_{mu+3}` that avoid node jumps.
pub fn cubic_residual(path: &DiscretePath) -> f64 {
    let spec = path.spec();
    let h = spec.h();
    let mut bounds = vec![0usize];
    bounds.extend(spec.targets().iter().map(|t| t.node));
    let mut worst = 0.0f64;
    for w in bounds.windows(2) {
        let start = if w[0] == 0 { 0 } else { w[0] + 1 };
        for mu in start..w[1].saturating_sub(2) {
            let hm = |k: usize| path.ham[mu + k].matrix();
            let d2 = (hm(2) - hm(1) * crate::lie::C64::new(2.0, 0.0) + hm(0)) / crate::lie::C64::new(h * h, 0.0);
            let d3 = (hm(3) - hm(2) * crate::lie::C64::new(3.0, 0.0) + hm(1) * crate::lie::C64::new(3.0, 0.0) - hm(0))
                / crate::lie::C64::new(h * h * h, 0.0);
            let comm = hm(0) * &d2 - &d2 * hm(0);
            let r = d3 + comm * crate::lie::C64::new(0.0, 1.0);
            worst = worst.max(r.norm());
        }
    }
    worst
}

/// Re-solves on grids refined by 2 and 4.
pub fn refine(sol: &Solution) -> Result<Refinement> {
    let spec = sol.path.spec();
    let mut steps = vec![spec.steps()];
    let mut costs = vec![sol.cost()];
    let mut cubic = vec![cubic_residual(&sol.path)];
    let mut converged = vec![sol.converged];
    let mut warm = (sol.m0.clone(), sol.l0.clone());
    for factor in [2, 4] {
        let finer = spec.with_steps(spec.steps() * factor)?;
        let s = solve_from(&finer, &sol.options, Some((&warm.0, &warm.1)))?;
        steps.push(finer.steps());
        costs.push(s.cost());
        cubic.push(cubic_residual(&s.path));
        converged.push(s.converged);
        warm = (s.m0, s.l0);
    }
    Ok(Refinement {
        steps,
        cost_order: ((costs[0] - costs[1]) / (costs[1] - costs[2])).log2(),
        cost: costs,
        cubic_order: cubic.windows(2).map(|w| (w[0] / w[1]).log2()).collect(),
        cubic_residual: cubic,
        converged,
    })
}
