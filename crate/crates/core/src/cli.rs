//! Problem files, run orchestration and artifact output for the `qspline` binary.
//!
//! Problem files are JSON; complex numbers are `[re, im]` pairs:
//!
//! ```json
//! {
//!   "label": "three targets",
//!   "initial_state": [[1, 0], [0, 0]],
//!   "targets": [{ "time": 0.3, "state": [[0.87, 0], [0.49, 0.1]] }],
//!   "sigma": 0.04,
//!   "t0": 0.0,
//!   "steps": 300,
//!   "initial_hamiltonian": "auto",
//!   "continuation": [0.08],
//!   "descent": { "max_iters": 5000, "grad_tol": 1e-9, "direction": "lbfgs" },
//!   "coherent_k": 2
//! }
//! ```
//!
//! `initial_hamiltonian` is `"auto"` (geodesic to the first target) or a Hermitian matrix
//! given as rows of `[re, im]` pairs. `continuation` lists tolerances solved first, each
//! warm-starting the next, before the final solve at `sigma`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::coherent::{embed_path, CoherentReport, CoherentSpline};
use crate::error::{Error, Result};
use crate::forward::{cost_breakdown, CostBreakdown, InitialHamiltonian, ProblemSpec};
use crate::lie::{CMatrix, CVector, HermitianOperator, C64};
use crate::optimizer::{
    solve, solve_with_continuation, validate, DescentDirection, DescentOptions, Multistart, Solution, Termination,
    ValidationReport,
};
use crate::state::{bloch_coords, field_decomposition, PureState};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Minimum Hamiltonian-change unitary evolutions through prescribed pure states.
#[derive(Clone, Debug, Parser)]
#[command(name = "qspline", version)]
pub struct RunConfig {
    /// Problem file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for the output files; created if missing.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Override the mismatch tolerance sigma.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Override the number of grid steps N.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Override the gradient-norm tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Also emit the coherent-state trajectory of this order.
    #[arg(long)]
    pub coherent_k: Option<usize>,
    /// Run the grid-refinement study (re-solves at 2N and 4N).
    #[arg(long)]
    pub validate: bool,
    /// Run label recorded in summary.json.
    #[arg(long)]
    pub label: Option<String>,
}

type Complex = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub time: f64,
    pub state: Vec<Complex>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HamiltonianEntry {
    Keyword(String),
    Matrix(Vec<Vec<Complex>>),
}

impl Default for HamiltonianEntry {
    fn default() -> Self {
        Self::Keyword("auto".into())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultistartEntry {
    pub seed: u64,
    pub starts: usize,
    pub scale: f64,
}

/// Descent options; omitted fields keep their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    /// `"lbfgs"` or `"steepest"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restrict_m0: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_displacement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multistart: Option<MultistartEntry>,
}

impl DescentEntry {
    pub fn options(&self) -> Result<DescentOptions> {
        let mut o = DescentOptions::default();
        if let Some(v) = self.max_iters {
            o.max_iters = v;
        }
        if let Some(v) = self.grad_tol {
            o.grad_tol = v;
        }
        let memory = self.memory.unwrap_or(10);
        o.direction = match self.direction.as_deref() {
            None | Some("lbfgs") => DescentDirection::Lbfgs { memory },
            Some("steepest") => DescentDirection::Steepest,
            Some(other) => {
                return Err(Error::InvalidProblem(format!(
                    "unknown descent direction {other:?} (expected \"lbfgs\" or \"steepest\")"
                )))
            }
        };
        if let Some(v) = self.restrict_m0 {
            o.restrict_m0 = v;
        }
        if let Some(v) = self.stall_window {
            o.stall_window = v;
        }
        if let Some(v) = self.max_displacement {
            o.max_displacement = v;
        }
        o.multistart = self.multistart.as_ref().map(|m| Multistart {
            seed: m.seed,
            starts: m.starts,
            scale: m.scale,
        });
        o.validate()?;
        Ok(o)
    }
}

/// On-disk problem description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub initial_state: Vec<Complex>,
    pub targets: Vec<TargetEntry>,
    pub sigma: f64,
    #[serde(default)]
    pub t0: f64,
    pub steps: usize,
    #[serde(default)]
    pub initial_hamiltonian: HamiltonianEntry,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub continuation: Vec<f64>,
    #[serde(default)]
    pub descent: DescentEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent_k: Option<usize>,
}

/// A validated problem with the notes raised while loading it.
#[derive(Clone, Debug)]
pub struct LoadedProblem {
    pub file: ProblemFile,
    pub spec: ProblemSpec,
    pub options: DescentOptions,
    /// States that were not unit-normalized on input (normalized on ingestion).
    pub normalized_inputs: Vec<String>,
}

fn vector(entries: &[Complex]) -> CVector {
    CVector::from_iterator(entries.len(), entries.iter().map(|&[re, im]| C64::new(re, im)))
}

fn state(entries: &[Complex], what: String, flagged: &mut Vec<String>) -> Result<PureState> {
    let (s, off) = PureState::normalized(vector(entries))?;
    if off {
        flagged.push(what);
    }
    Ok(s)
}

impl ProblemFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Builds the problem; `H_0 = "auto"` resolves to the geodesic Hamiltonian.
    pub fn resolve(&self) -> Result<LoadedProblem> {
        let mut flagged = Vec::new();
        let psi0 = state(&self.initial_state, "initial_state".into(), &mut flagged)?;
        let targets = self
            .targets
            .iter()
            .enumerate()
            .map(|(j, t)| Ok((t.time, state(&t.state, format!("targets[{j}]"), &mut flagged)?)))
            .collect::<Result<Vec<_>>>()?;
        let policy = match &self.initial_hamiltonian {
            HamiltonianEntry::Keyword(k) if k == "auto" => InitialHamiltonian::Geodesic,
            HamiltonianEntry::Keyword(k) => {
                return Err(Error::InvalidProblem(format!(
                    "initial_hamiltonian must be \"auto\" or a matrix, got {k:?}"
                )))
            }
            HamiltonianEntry::Matrix(rows) => {
                let d = rows.len();
                if rows.iter().any(|r| r.len() != d) {
                    return Err(Error::NotSquare {
                        rows: d,
                        cols: rows.first().map_or(0, Vec::len),
                    });
                }
                let m = CMatrix::from_fn(d, d, |i, j| C64::new(rows[i][j][0], rows[i][j][1]));
                InitialHamiltonian::Prescribed(HermitianOperator::new(m)?)
            }
        };
        if self.continuation.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidProblem("continuation tolerances must be positive".into()));
        }
        let spec = ProblemSpec::new(psi0, targets, self.sigma, self.t0, self.steps, policy)?;
        Ok(LoadedProblem {
            file: self.clone(),
            spec,
            options: self.descent.options()?,
            normalized_inputs: flagged,
        })
    }
}

/// Reads, parses and validates a problem file.
pub fn load_problem(path: &Path) -> Result<LoadedProblem> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ProblemFile::parse(&text, path)?.resolve()
}

/// Loads the problem and applies command-line overrides.
pub fn resolve_config(config: &RunConfig) -> Result<LoadedProblem> {
    let text = fs::read_to_string(&config.config).map_err(|source| Error::Io {
        path: config.config.clone(),
        source,
    })?;
    let mut file = ProblemFile::parse(&text, &config.config)?;
    if let Some(s) = config.sigma {
        file.sigma = s;
    }
    if let Some(n) = config.steps {
        file.steps = n;
    }
    if let Some(t) = config.tol {
        file.descent.grad_tol = Some(t);
    }
    if let Some(m) = config.max_iters {
        file.descent.max_iters = Some(m);
    }
    if let Some(k) = config.coherent_k {
        file.coherent_k = Some(k);
    }
    if let Some(l) = &config.label {
        file.label = Some(l.clone());
    }
    file.resolve()
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    label: Option<&'a str>,
    termination: Termination,
    converged: bool,
    iterations: usize,
    cost: f64,
    cost_breakdown: CostSummary,
    grad_norm: f64,
    terminal_l: f64,
    terminal_m: f64,
    normalized_inputs: &'a [String],
    /// Tolerances solved in order; more than one when continuation was used.
    sigma_schedule: Vec<f64>,
    /// The fully resolved problem (overrides applied); re-runnable as a problem file.
    problem: &'a ProblemFile,
    resolved_initial_hamiltonian: Vec<Vec<Complex>>,
    initial_m: Vec<Vec<Complex>>,
    initial_l: Vec<Vec<Complex>>,
}

#[derive(Debug, Serialize)]
struct CostSummary {
    control: f64,
    sum_sq_distance: f64,
    mismatch: f64,
}

impl From<CostBreakdown> for CostSummary {
    fn from(c: CostBreakdown) -> Self {
        Self {
            control: c.control,
            sum_sq_distance: c.sum_sq_distance,
            mismatch: c.mismatch,
        }
    }
}

#[derive(Debug, Serialize)]
struct ValidationFile<'a> {
    #[serde(flatten)]
    report: &'a ValidationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    coherent: Option<&'a CoherentReport>,
}

/// What a run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub solution: Solution,
    pub validation: ValidationReport,
    pub coherent: Option<CoherentSpline>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.solution.converged {
            EXIT_CONVERGED
        } else {
            EXIT_NOT_CONVERGED
        }
    }

    pub fn summary_line(&self) -> String {
        let s = &self.solution;
        format!(
            "{:?}: cost {:.10e}, grad norm {:.3e}, terminal |L| {:.3e}, |M+Delta| {:.3e}, iterations {}",
            s.termination,
            s.cost(),
            s.grad_norm(),
            self.validation.terminal_l,
            self.validation.terminal_m,
            s.iterations
        )
    }
}

fn matrix_entries(m: &CMatrix) -> Vec<Vec<Complex>> {
    m.row_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect()
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(dir: &Path, name: &str, body: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    let mut out = fs::File::create(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    out.write_all(body).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    files.push(path);
    Ok(())
}

fn complex_header(prefix: &str, count: usize) -> Vec<String> {
    (0..count)
        .flat_map(|i| [format!("{prefix}{i}_re"), format!("{prefix}{i}_im")])
        .collect()
}

fn trajectory_csv(sol: &Solution) -> Result<String> {
    let spec = sol.path.spec();
    let two_level = spec.dim() == 2;
    let mut header = vec!["mu".to_string(), "t".into()];
    header.extend(complex_header("psi", spec.dim()));
    if two_level {
        header.extend(["bloch_x", "bloch_y", "bloch_z"].map(String::from));
    }
    let mut out = header.join(",") + "\n";
    for (mu, psi) in sol.path.psi.iter().enumerate() {
        let mut row = vec![mu.to_string(), f(spec.time(mu))];
        row.extend(psi.amplitudes().iter().flat_map(|z| [f(z.re), f(z.im)]));
        if two_level {
            row.extend(bloch_coords(psi)?.map(f));
        }
        out += &(row.join(",") + "\n");
    }
    Ok(out)
}

fn hamiltonian_csv(sol: &Solution) -> Result<String> {
    let spec = sol.path.spec();
    let d = spec.dim();
    let mut header = vec!["mu".to_string(), "t".into()];
    for i in 0..d {
        for j in 0..d {
            header.push(format!("h{i}{j}_re"));
            header.push(format!("h{i}{j}_im"));
        }
    }
    if d == 2 {
        header.extend(["omega", "n_x", "n_y", "n_z", "degenerate"].map(String::from));
    }
    let mut out = header.join(",") + "\n";
    for (mu, h) in sol.path.ham.iter().enumerate() {
        let mut row = vec![mu.to_string(), f(spec.time(mu))];
        row.extend(
            h.matrix()
                .row_iter()
                .flat_map(|r| r.iter().flat_map(|z| [f(z.re), f(z.im)]).collect::<Vec<_>>()),
        );
        if d == 2 {
            let fd = field_decomposition(h)?;
            row.push(f(fd.omega));
            row.extend(fd.axis.map(f));
            row.push(u8::from(fd.degenerate).to_string());
        }
        out += &(row.join(",") + "\n");
    }
    Ok(out)
}

fn cost_history_csv(sol: &Solution) -> String {
    let mut out = String::from("iter,cost,grad_norm,step\n");
    for (i, ((c, g), s)) in sol
        .cost_history
        .iter()
        .zip(&sol.grad_norm_history)
        .zip(&sol.step_history)
        .enumerate()
    {
        out += &format!("{i},{},{},{}\n", f(*c), f(*g), f(*s));
    }
    out
}

fn coherent_csv(sol: &Solution, spline: &CoherentSpline) -> String {
    let spec = sol.path.spec();
    let mut header = vec!["mu".to_string(), "t".into()];
    header.extend(spline.basis.occupations().iter().flat_map(|occ| {
        let tag = occ.iter().map(usize::to_string).collect::<Vec<_>>().join("_");
        [format!("c{tag}_re"), format!("c{tag}_im")]
    }));
    let mut out = header.join(",") + "\n";
    for (mu, s) in spline.embedded.iter().enumerate() {
        let mut row = vec![mu.to_string(), f(spec.time(mu))];
        row.extend(s.amplitudes().iter().flat_map(|z| [f(z.re), f(z.im)]));
        out += &(row.join(",") + "\n");
    }
    out
}

/// Solves, validates and writes all artifacts into `config.out_dir`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let loaded = resolve_config(config)?;
    let (solution, sigmas) = if loaded.file.continuation.is_empty() {
        (solve(&loaded.spec, &loaded.options)?, vec![loaded.spec.sigma()])
    } else {
        let c = solve_with_continuation(&loaded.spec, &loaded.options, &loaded.file.continuation)?;
        (c.solution, c.sigmas)
    };
    let validation = if config.validate {
        validate(&solution)
    } else {
        solution.validation.clone()
    };
    let coherent = loaded
        .file
        .coherent_k
        .map(|k| embed_path(&solution.path, k))
        .transpose()?;

    fs::create_dir_all(&config.out_dir).map_err(|source| Error::Io {
        path: config.out_dir.clone(),
        source,
    })?;
    let dir = config.out_dir.as_path();
    let mut files = Vec::new();
    write_file(dir, "trajectory.csv", trajectory_csv(&solution)?.as_bytes(), &mut files)?;
    write_file(
        dir,
        "hamiltonian.csv",
        hamiltonian_csv(&solution)?.as_bytes(),
        &mut files,
    )?;
    write_file(
        dir,
        "cost_history.csv",
        cost_history_csv(&solution).as_bytes(),
        &mut files,
    )?;
    let validation_file = ValidationFile {
        report: &validation,
        coherent: coherent.as_ref().map(|c| &c.report),
    };
    write_file(dir, "validation.json", &to_json(&validation_file), &mut files)?;
    let summary = Summary {
        label: loaded.file.label.as_deref(),
        termination: solution.termination,
        converged: solution.converged,
        iterations: solution.iterations,
        cost: solution.cost(),
        cost_breakdown: cost_breakdown(&solution.path).into(),
        grad_norm: solution.grad_norm(),
        terminal_l: validation.terminal_l,
        terminal_m: validation.terminal_m,
        normalized_inputs: &loaded.normalized_inputs,
        sigma_schedule: sigmas,
        problem: &loaded.file,
        resolved_initial_hamiltonian: matrix_entries(loaded.spec.h0().matrix()),
        initial_m: matrix_entries(solution.m0.matrix()),
        initial_l: matrix_entries(solution.l0.matrix()),
    };
    write_file(dir, "summary.json", &to_json(&summary), &mut files)?;
    if let Some(spline) = &coherent {
        write_file(
            dir,
            "coherent_trajectory.csv",
            coherent_csv(&solution, spline).as_bytes(),
            &mut files,
        )?;
    }
    Ok(RunOutcome {
        solution,
        validation,
        coherent,
        files,
    })
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("plain data serializes");
    out.push(b'\n');
    out
}

/// Entry point for the binary: runs and maps the outcome to an exit code.
pub fn main_with(config: RunConfig) -> i32 {
    match run(&config) {
        Ok(outcome) => {
            println!("{}", outcome.summary_line());
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
