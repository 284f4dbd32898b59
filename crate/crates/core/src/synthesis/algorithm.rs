//! Iterative convex overbounding loop.

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::conic::Cone;
use crate::error::{Error, Result};
use crate::linalg::{max_abs, max_sym_eig, min_sym_eig, Mat};
use crate::lti::Plant;
use crate::sdp::{solve, SdpStatus, SolveOptions};

use super::subproblem::{build_subproblem, Anchor, Step, SubproblemGoal, MAX_Q_COND};
use super::transform::{
    build_transform, conic_lmi_matrix, lyapunov_lmi_matrix, overbound_cost, true_cost, KMatrix,
    TransformData,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Stop once `|J′(k+1) − J′(k)| ≤ epsilon`.
    pub epsilon: f64,
    pub gamma_reg: f64,
    pub max_iters: usize,
    /// `None` means identity.
    pub w1: Option<Mat>,
    pub w2: Option<Mat>,
    pub feas_tol: f64,
    pub solver: SolveOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            epsilon: 5e-3,
            gamma_reg: 0.1,
            max_iters: 200,
            w1: None,
            w2: None,
            feas_tol: 1e-7,
            solver: SolveOptions::default(),
        }
    }
}

impl SynthesisOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidOption(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.gamma_reg >= 0.0 && self.gamma_reg.is_finite()) {
            return Err(Error::InvalidOption(format!(
                "gamma_reg must be >= 0, got {}",
                self.gamma_reg
            )));
        }
        if !(self.feas_tol > 0.0) {
            return Err(Error::InvalidOption("feas_tol must be > 0".into()));
        }
        for w in [&self.w1, &self.w2].into_iter().flatten() {
            if w.nrows() != w.ncols() || min_sym_eig(w) <= 0.0 || max_abs(&(w - w.transpose())) > 1e-12 {
                return Err(Error::InvalidOption("W1 and W2 must be symmetric positive definite".into()));
            }
        }
        Ok(())
    }

    pub fn weights(&self, size: usize) -> (Mat, Mat) {
        let eye = Mat::identity(size, size);
        (
            self.w1.clone().unwrap_or_else(|| eye.clone()),
            self.w2.clone().unwrap_or(eye),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub k: KMatrix,
    pub q: Mat,
    pub p: Mat,
    pub jprime: f64,
    pub jtrue: f64,
}

impl IterateState {
    /// Anchor a state at `(K, Q, P)` with `J′ = J(K, Q)`.
    pub fn new(t: &TransformData, k: KMatrix, q: Mat, p: Mat) -> Result<Self> {
        let jprime = overbound_cost(t, &k, &q)?;
        let jtrue = true_cost(t, &k)?;
        Ok(IterateState { k, q, p, jprime, jtrue })
    }

    pub fn anchor(&self) -> Anchor {
        Anchor {
            k: self.k.clone(),
            q: self.q.clone(),
            p: self.p.clone(),
        }
    }
}

/// Residuals of the three feasibility conditions at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `λmax(He[Q·Acl] + CclᵀCcl)` over the size of its terms.
    pub lyapunov: f64,
    /// `λmax(He[P̃KX] + Γ)` over the size of its terms.
    pub conic: f64,
    pub q_min_eig: f64,
    pub p_min_eig: f64,
}

impl Residuals {
    pub fn feasible(&self, tol: f64) -> bool {
        self.lyapunov <= tol && self.conic <= tol && self.q_min_eig > 0.0 && self.p_min_eig > 0.0
    }
}

pub fn residuals(t: &TransformData, k: &KMatrix, q: &Mat, p: &Mat) -> Result<Residuals> {
    let lyap = lyapunov_lmi_matrix(t, k, q)?;
    let conic = conic_lmi_matrix(t, k, p)?;
    let pkx = crate::linalg::he(&(super::transform::p_tilde(&t.dims, p) * &k.k * &t.x));
    Ok(Residuals {
        lyapunov: max_sym_eig(&lyap) / (1.0 + max_abs(&lyap).max(max_abs(&(q * &t.a_t)))),
        conic: max_sym_eig(&conic) / (1.0 + max_abs(&pkx).max(max_abs(&t.gamma))),
        q_min_eig: min_sym_eig(q),
        p_min_eig: min_sym_eig(p),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "Jprime")]
    pub jprime: f64,
    #[serde(rename = "Jtrue")]
    pub jtrue: f64,
    pub lyap_residual: f64,
    pub conic_residual: f64,
    /// Step accepted from a solver run that did not report optimality.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisStatus {
    Converged,
    MaxIterations,
    /// A step would have raised `J′`; it was rejected.
    Stalled,
    SolverFailure,
    IllConditioned,
}

impl SynthesisStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, SynthesisStatus::Converged | SynthesisStatus::Stalled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub status: SynthesisStatus,
    pub state: IterateState,
    pub history: Vec<IterationRecord>,
    pub message: String,
}

impl SynthesisResult {
    /// Number of subproblems accepted.
    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

/// `⌈(J0′ − J_h2)/ε⌉`, the most iterations a run can take before the
/// stopping test fires.
pub fn iteration_bound(j0_prime: f64, j_h2: f64, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0) || !j0_prime.is_finite() || !j_h2.is_finite() {
        return Err(Error::InvalidOption("iteration bound needs finite costs and epsilon > 0".into()));
    }
    if j0_prime < j_h2 {
        return Err(Error::InvalidOption(format!(
            "initial cost {j0_prime} is below the optimal cost {j_h2}"
        )));
    }
    let ratio = (j0_prime - j_h2) / epsilon;
    Ok((ratio * (1.0 - 1e-12)).ceil() as u64)
}

fn record(t: &TransformData, iter: usize, s: &IterateState, flagged: bool) -> Result<IterationRecord> {
    let r = residuals(t, &s.k, &s.q, &s.p)?;
    Ok(IterationRecord {
        iter,
        jprime: s.jprime,
        jtrue: s.jtrue,
        lyap_residual: r.lyapunov,
        conic_residual: r.conic,
        flagged,
    })
}

fn condition(q: &Mat) -> f64 {
    let lo = min_sym_eig(q);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        max_sym_eig(q) / lo
    }
}

pub fn run_algorithm1(
    plant: &Plant,
    nc: usize,
    cone: &Cone,
    init: &IterateState,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    let t = build_transform(plant, nc, cone)?;
    run_algorithm1_on(&t, init, opts)
}

/// One verified descent subproblem. The inner `Err` is a reason to retry.
fn descent_step(
    t: &TransformData,
    state: &IterateState,
    w1: &Mat,
    w2: &Mat,
    gamma: f64,
    opts: &SynthesisOptions,
) -> Result<std::result::Result<(Step, bool), String>> {
    let sub = build_subproblem(t, &state.anchor(), w1, w2, SubproblemGoal::Descent { gamma })?;
    let sol = solve(&sub.program, &opts.solver);
    let flagged = match sol.status {
        SdpStatus::Optimal => false,
        SdpStatus::NumericalFailure if sol.x.iter().all(|v| v.is_finite()) => true,
        other => return Ok(Err(format!("solver returned {other:?} ({})", sol.diagnostics))),
    };
    let step: Step = sub.decode(&sol.x)?;
    let res = residuals(t, &step.k, &step.q, &step.p)?;
    if !res.feasible(10.0 * opts.feas_tol) {
        return Ok(Err(format!(
            "step failed verification (lyapunov {:.3e}, conic {:.3e}, solver {})",
            res.lyapunov, res.conic, sol.diagnostics
        )));
    }
    Ok(Ok((step, flagged)))
}

/// Algorithm 1 on a prepared transform.
pub fn run_algorithm1_on(
    t: &TransformData,
    init: &IterateState,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    opts.validate()?;
    let (w1, w2) = opts.weights(t.dims.big_m());
    if w1.nrows() != t.dims.big_m() || w2.nrows() != t.dims.big_m() {
        return Err(Error::Dimension("W1/W2 must be (m+nc)x(m+nc)".into()));
    }
    let r0 = residuals(t, &init.k, &init.q, &init.p)?;
    if !r0.feasible(10.0 * opts.feas_tol) {
        return Err(Error::InfeasibleInit(format!(
            "lyapunov residual {:.3e}, conic residual {:.3e}, min eig Q {:.3e}, min eig P {:.3e}",
            r0.lyapunov, r0.conic, r0.q_min_eig, r0.p_min_eig
        )));
    }
    if init.k.top_left_magnitude() != 0.0 {
        return Err(Error::InfeasibleInit("K0 has a nonzero top-left block".into()));
    }

    let mut state = init.clone();
    let mut history = vec![record(t, 0, &state, false)?];
    let mut status = SynthesisStatus::MaxIterations;
    let mut message = String::new();

    for iter in 1..=opts.max_iters {
        let cond = condition(&state.q);
        if cond > MAX_Q_COND {
            status = SynthesisStatus::IllConditioned;
            message = format!("Q condition number {cond:.3e} exceeds {MAX_Q_COND:.0e}");
            break;
        }
        // a failed solve is retried with a heavier regularizer (shorter step)
        let tol = 10.0 * opts.feas_tol;
        let mut attempt = Err(String::new());
        for scale in [1.0, 10.0, 100.0] {
            attempt = descent_step(t, &state, &w1, &w2, opts.gamma_reg * scale, opts)?;
            match &attempt {
                Err(msg) if opts.gamma_reg > 0.0 => {
                    warn!("iteration {iter}: {msg}; retrying with a heavier regularizer")
                }
                _ => break,
            }
        }
        let (step, flagged) = match attempt {
            Ok(v) => v,
            Err(msg) => {
                status = SynthesisStatus::SolverFailure;
                message = format!("iteration {iter}: {msg}");
                break;
            }
        };
        if step.jprime > state.jprime + tol * (1.0 + state.jprime.abs()) {
            status = if flagged {
                SynthesisStatus::SolverFailure
            } else {
                SynthesisStatus::Stalled
            };
            message = format!(
                "iteration {iter}: J′ would rise from {} to {}; step rejected",
                state.jprime, step.jprime
            );
            break;
        }
        if flagged {
            warn!("iteration {iter}: accepting a verified step the solver did not report optimal");
        }
        let jtrue = true_cost(t, &step.k)?;
        let delta = (state.jprime - step.jprime).abs();
        state = IterateState {
            k: step.k,
            q: step.q,
            p: step.p,
            jprime: step.jprime,
            jtrue,
        };
        history.push(record(t, iter, &state, flagged)?);
        debug!("iteration {iter}: J′ = {:.6}, J = {:.6}", state.jprime, state.jtrue);
        if delta <= opts.epsilon {
            status = SynthesisStatus::Converged;
            break;
        }
    }
    if message.is_empty() {
        message = match status {
            SynthesisStatus::Converged => format!("converged after {} iterations", history.len() - 1),
            _ => format!("stopped after {} iterations", opts.max_iters),
        };
    }
    info!("algorithm 1: {message}");
    Ok(SynthesisResult {
        status,
        state,
        history,
        message,
    })
}
