//! Starting points for the synthesis loop: weights `W1, W2` and a feasible
//! `(K0, Q0, P0)`.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::conic::{csl_report, CslForm};
use crate::error::{Error, Result};
use crate::linalg::{
    blkdiag, max_abs, max_sym_eig, min_sym_eig, psd_sqrt, spd_inverse, spectral_abscissa, sym, Mat,
};
use crate::lti::{is_hurwitz, lyapunov, row_major, Controller, Plant};
use crate::sdp::{solve, AffExpr, SdpProgram, SdpStatus, Sense, SolveOptions};
use crate::synthesis::{
    assemble_closed_loop, build_subproblem, conic_lmi_matrix, design_h2_luenberger,
    overbound_cost, residuals, true_cost, Anchor, IterateState, KMatrix, Residuals,
    Step, SubproblemGoal, TransformData,
};

/// `‖K‖_F` below this is reported as a near-zero start.
const SMALL_K: f64 = 1e-6;
/// Margin used for strict matrix inequalities in the initialization programs.
const STRICT: f64 = 1e-9;
/// Interior margin for the final projection of a relaxed controller; close to
/// the boundary the certificate is too ill-conditioned to verify otherwise.
const PROJECTION_MARGIN: f64 = 1e-5;

pub fn w_identity(t: &TransformData) -> (Mat, Mat) {
    let m = t.dims.big_m();
    (Mat::identity(m, m), Mat::identity(m, m))
}

/// `min tr(OWOᵀ) + tr(V)  s.t. [[W, G], [Gᵀ, V]] ⪰ 0`, with `O = I` when absent.
fn weight_program(g: &Mat, outer: Option<&Mat>) -> Option<Mat> {
    let (r, c) = g.shape();
    let mut prog = SdpProgram::new();
    let w = prog.symmetric("W", r);
    let v = prog.symmetric("V", c);
    let schur = AffExpr::blocks(&[
        &[&w.expr(), &AffExpr::constant(g.clone())],
        &[&AffExpr::constant(g.transpose()), &v.expr()],
    ]);
    prog.psd("schur", schur).ok()?;
    let first = match outer {
        Some(e) => w.expr().lmul(e).rmul(&e.transpose()),
        None => w.expr(),
    };
    prog.minimize_trace(&first).ok()?;
    prog.minimize_trace(&v.expr()).ok()?;
    let sol = solve(&prog, &SolveOptions::default());
    if sol.status != SdpStatus::Optimal {
        warn!("weight program returned {:?}: {}", sol.status, sol.diagnostics);
        return None;
    }
    let mut val = sym(&sol.value(&w));
    let hi = max_sym_eig(&val).max(1.0);
    let lo = min_sym_eig(&val);
    if lo < 1e-8 * hi {
        val += Mat::identity(r, r) * (1e-8 * hi - lo);
    }
    Some(val)
}

/// Weights from `min tr(EW1Eᵀ) + tr(V1)` with `[[W1, R], [Rᵀ, V1]] ⪰ 0` and
/// `min tr(W2) + tr(V2)` with `[[W2, X], [Xᵀ, V2]] ⪰ 0`.
pub fn w_optimize(t: &TransformData) -> (Mat, Mat) {
    let (i1, i2) = w_identity(t);
    let w1 = weight_program(&t.r, Some(&t.e)).unwrap_or_else(|| {
        warn!("W1 optimization failed; using identity");
        i1
    });
    let w2 = weight_program(&t.x, None).unwrap_or_else(|| {
        warn!("W2 optimization failed; using identity");
        i2
    });
    (w1, w2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    Arbitrary,
    Conicc,
    Ico,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitResult {
    pub method: InitMethod,
    pub controller: Controller,
    #[serde(rename = "Q0", with = "row_major")]
    pub q0: Mat,
    #[serde(rename = "P0", with = "row_major")]
    pub p0: Mat,
    #[serde(rename = "Jtrue")]
    pub jtrue: f64,
    #[serde(rename = "Jprime")]
    pub jprime: f64,
    pub residuals: Residuals,
    /// Relaxation iterations (ICO only).
    pub iterations: usize,
    /// `ε` after each relaxation step (ICO only).
    pub eps_trace: Vec<f64>,
    /// Costs and `ε` per relaxation step, starting at the target (ICO only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<IcoStep>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcoStep {
    pub iter: usize,
    #[serde(rename = "Jprime")]
    pub jprime: f64,
    #[serde(rename = "Jtrue")]
    pub jtrue: f64,
    pub eps: f64,
}

impl InitResult {
    pub fn state(&self) -> IterateState {
        IterateState {
            k: KMatrix::from_controller(&self.controller),
            q: self.q0.clone(),
            p: self.p0.clone(),
            jprime: self.jprime,
            jtrue: self.jtrue,
        }
    }
}

fn finish(
    t: &TransformData,
    method: InitMethod,
    k: KMatrix,
    q0: Mat,
    p0: Mat,
    tol: f64,
    warnings: Vec<String>,
) -> Result<InitResult> {
    let res = residuals(t, &k, &q0, &p0)?;
    if !res.feasible(tol) {
        return Err(Error::InfeasibleInit(format!(
            "{method:?} point fails verification: lyapunov {:.3e}, conic {:.3e}, min eig Q {:.3e}, min eig P {:.3e}",
            res.lyapunov, res.conic, res.q_min_eig, res.p_min_eig
        )));
    }
    Ok(InitResult {
        method,
        jprime: overbound_cost(t, &k, &q0)?,
        jtrue: true_cost(t, &k)?,
        controller: k.to_controller(),
        q0,
        p0,
        residuals: res,
        iterations: 0,
        eps_trace: Vec::new(),
        trace: Vec::new(),
        warnings,
    })
}

/// Closed-loop Gramian; a ridge on `CclᵀCcl` keeps it invertible when some
/// closed-loop mode is unobservable.
fn gramian(t: &TransformData, k: &KMatrix, warnings: &mut Vec<String>) -> Result<Mat> {
    let cl = assemble_closed_loop(t, k)?;
    let ctc = cl.c.transpose() * &cl.c;
    let sol = lyapunov(&cl.a, &ctc)?;
    let q = sym(&sol.x);
    let lo = min_sym_eig(&q);
    if lo > 1e-10 * max_sym_eig(&q).max(1e-300) {
        return Ok(q);
    }
    let ridge = 1e-8 * (1.0 + max_abs(&ctc));
    warnings.push(format!(
        "closed-loop Gramian is singular (min eig {lo:.3e}); using ridge {ridge:.1e}"
    ));
    let n = q.nrows();
    Ok(sym(&lyapunov(&cl.a, &(ctc + Mat::identity(n, n) * ridge))?.x))
}

/// Start from a given stabilizing controller that already lies in the cone.
///
/// The zero controller is accepted when the plant is stable: its modes are
/// decoupled, `Q0` pairs the plant Gramian with an identity block and `P0 = I`.
pub fn init_arbitrary(t: &TransformData, ctrl: &Controller, feas_tol: f64) -> Result<InitResult> {
    let k = KMatrix::from_controller(ctrl);
    let mut warnings = Vec::new();
    let norm = k.k.norm();
    if norm < SMALL_K {
        warnings.push(format!(
            "K0 is nearly zero (‖K0‖ = {norm:.1e}); steps from here are tiny"
        ));
    }
    if norm == 0.0 {
        let n = t.dims.n;
        let a = t.a_t.view((0, 0), (n, n)).into_owned();
        if !is_hurwitz(&a)? {
            return Err(Error::NotHurwitz {
                max_real: spectral_abscissa(&a)?,
            });
        }
        let c1 = t.c_t.columns(0, n).into_owned();
        let mut x = sym(&lyapunov(&a, &(c1.transpose() * &c1))?.x);
        if min_sym_eig(&x) <= 1e-10 * max_sym_eig(&x).max(1e-300) {
            let ridge = 1e-8 * (1.0 + max_abs(&(c1.transpose() * &c1)));
            x = sym(&lyapunov(&a, &(c1.transpose() * &c1 + Mat::identity(n, n) * ridge))?.x);
        }
        let q0 = blkdiag(&[&x, &Mat::identity(t.dims.nc, t.dims.nc)]);
        let p0 = Mat::identity(t.dims.nc, t.dims.nc);
        warn!("{}", warnings[0]);
        return finish(t, InitMethod::Arbitrary, k, q0, p0, 10.0 * feas_tol, warnings);
    }
    let cl = assemble_closed_loop(t, &k)?;
    if !is_hurwitz(&cl.a)? {
        return Err(Error::NotHurwitz {
            max_real: spectral_abscissa(&cl.a)?,
        });
    }
    let report = csl_report(&ctrl.as_state_space(), &t.cone, CslForm::Two)?;
    let cert = report.certificate.ok_or(Error::NotInCone { residual: report.t })?;
    let q0 = gramian(t, &k, &mut warnings)?;
    for w in &warnings {
        warn!("{w}");
    }
    finish(t, InitMethod::Arbitrary, k, q0, cert.p, 10.0 * feas_tol, warnings)
}

/// `min ‖Ĉ − target‖²_F` over `(Ĉ, P)` subject to the controller cone LMI with
/// `Â`, `B̂` fixed. Returns `Ĉ` and `P`.
/// Ĉ closest to `target` such that the sector LMI holds with `⪯ −margin·I`
/// and `P ⪰ margin·I`.
fn closest_output_gain(
    t: &TransformData,
    ahat: &Mat,
    bhat: &Mat,
    target: &Mat,
    margin: f64,
) -> Result<(Mat, Mat)> {
    let (m, nc) = (t.dims.m, t.dims.nc);
    let (a, b) = t.cone.effective();
    let mut prog = SdpProgram::new();
    let c = prog.full("Chat", m, nc);
    let p = prog.symmetric("P", nc);
    let pe = p.expr();
    let g22 = AffExpr::constant(Mat::identity(m, m) * (-(a - b).powi(2) / (4.0 * b)));
    let g23 = AffExpr::constant(Mat::identity(m, m) * (-(a + b) / 2.0));
    let g33 = AffExpr::constant(Mat::identity(m, m) * -b);
    let pb = pe.rmul(bhat);
    let ct = c.expr().transpose();
    let lmi = AffExpr::blocks(&[
        &[&pe.rmul(ahat).he(), &pb, &ct],
        &[&pb.transpose(), &g22, &g23],
        &[&ct.transpose(), &g23, &g33],
    ]);
    prog.constrain("cone", lmi, Sense::Nsd, margin)?;
    prog.constrain("P>0", pe, Sense::Psd, margin)?;
    prog.add_frobenius_sq(&c, 1.0);
    let lin = c
        .expr()
        .lmul(&target.transpose())
        .trace()
        .scale(-2.0)
        .add_constant(&Mat::from_element(1, 1, target.norm_squared()));
    prog.minimize(&lin)?;
    let sol = solve(&prog, &SolveOptions::default());
    if !sol.x.iter().all(|v| v.is_finite())
        || !matches!(sol.status, SdpStatus::Optimal | SdpStatus::NumericalFailure)
    {
        return Err(Error::InfeasibleInit(format!(
            "output-gain projection failed: {:?} ({})",
            sol.status, sol.diagnostics
        )));
    }
    Ok((sol.value(&c), sym(&sol.value(&p))))
}

/// Luenberger controller with `Ĉ` moved the least amount (Frobenius norm) that
/// puts it inside the controller cone.
pub fn init_conicc(plant: &Plant, t: &TransformData, feas_tol: f64) -> Result<InitResult> {
    if t.dims.nc != t.dims.n {
        return Err(Error::InvalidOption(format!(
            "the ConicC start is full order: nc must equal n = {}",
            t.dims.n
        )));
    }
    let target = design_h2_luenberger(plant)?;
    let mut warnings = Vec::new();
    let mut ahat = target.ahat.clone();
    let abscissa = spectral_abscissa(&ahat)?;
    if abscissa >= -crate::lti::HURWITZ_TOL {
        let shift = abscissa + 1.0;
        warnings.push(format!(
            "Luenberger Â is not Hurwitz (abscissa {abscissa:.3e}); shifted by −{shift:.3e}·I"
        ));
        ahat -= Mat::identity(t.dims.nc, t.dims.nc) * shift;
    }
    let candidate = Controller::new(ahat.clone(), target.bhat.clone(), target.chat.clone())?;
    let report = csl_report(&candidate.as_state_space(), &t.cone, CslForm::Two)?;
    let (ctrl, p0) = match report.certificate {
        Some(cert) => (candidate, cert.p),
        None => {
            let (chat, p) = closest_output_gain(t, &ahat, &target.bhat, &target.chat, STRICT)?;
            info!(
                "ConicC moved Ĉ by {:.4e} (relative {:.3e})",
                (&chat - &target.chat).norm(),
                (&chat - &target.chat).norm() / target.chat.norm().max(1e-300)
            );
            (Controller::new(ahat, target.bhat.clone(), chat)?, p)
        }
    };
    let k = KMatrix::from_controller(&ctrl);
    let cl = assemble_closed_loop(t, &k)?;
    if !is_hurwitz(&cl.a)? {
        return Err(Error::InfeasibleInit(
            "ConicC controller does not stabilize the design plant".into(),
        ));
    }
    let q0 = gramian(t, &k, &mut warnings)?;
    for w in &warnings {
        warn!("{w}");
    }
    finish(t, InitMethod::Conicc, k, q0, p0, 10.0 * feas_tol, warnings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcoOptions {
    /// Cost cap growth per step, `(1 + delta)·J_L`.
    pub delta: f64,
    pub gamma_reg: f64,
    pub max_iters: usize,
    /// Stop when `ε` has not dropped by `stall_tol` over this many steps.
    pub stall_window: usize,
    pub stall_tol: f64,
    /// Stop once `ε < −eps_margin`.
    pub eps_margin: f64,
    /// Once `ε` is below this, try moving `Ĉ` onto the cone directly.
    pub project_below: f64,
    pub feas_tol: f64,
    pub solver: SolveOptions,
    pub w1: Option<Mat>,
    pub w2: Option<Mat>,
}

impl Default for IcoOptions {
    fn default() -> Self {
        IcoOptions {
            delta: 0.1,
            gamma_reg: 1e-5,
            max_iters: 200,
            stall_window: 10,
            stall_tol: 1e-9,
            eps_margin: 1e-8,
            project_below: 1e-6,
            feas_tol: 1e-7,
            solver: SolveOptions::default(),
            w1: None,
            w2: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcoStop {
    IterationLimit,
    Stalled,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IcoOutcome {
    Converged(InitResult),
    NotConverged {
        reason: IcoStop,
        iterations: usize,
        eps_trace: Vec<f64>,
        trace: Vec<IcoStep>,
        message: String,
    },
}

/// `min ε  s.t.  He[P̃(P)KX] + Γ ⪯ εI,  P ≻ 0`.
fn stage_one(t: &TransformData, k: &KMatrix) -> Result<(f64, Mat)> {
    let nc = t.dims.nc;
    let l = t.dims.big_l();
    let mut prog = SdpProgram::new();
    let p = prog.symmetric("P", nc);
    let e = prog.scalar("eps");
    let p_fixed = crate::synthesis::p_tilde(&t.dims, &Mat::zeros(nc, nc));
    let m = t.dims.m;
    let p_var = AffExpr::blocks(&[
        &[&AffExpr::zeros(nc, m), &p.expr()],
        &[&AffExpr::zeros(2 * m, m), &AffExpr::zeros(2 * m, nc)],
    ]);
    let lmi = p_var
        .rmul(&(&k.k * &t.x))
        .add_constant(&(p_fixed * &k.k * &t.x))
        .he()
        .add_constant(&t.gamma)
        - e.expr().times_matrix(&Mat::identity(l, l));
    prog.nsd("relaxed_cone", lmi)?;
    prog.constrain("P>0", p.expr(), Sense::Psd, STRICT)?;
    prog.minimize(&e.expr())?;
    let sol = solve(&prog, &SolveOptions::default());
    if !sol.x.iter().all(|v| v.is_finite())
        || !matches!(sol.status, SdpStatus::Optimal | SdpStatus::NumericalFailure)
    {
        return Err(Error::Solver(format!(
            "relaxation start failed: {:?} ({})",
            sol.status, sol.diagnostics
        )));
    }
    let pv = sym(&sol.value(&p));
    let actual = max_sym_eig(&conic_lmi_matrix(t, k, &pv)?);
    Ok((actual, pv))
}

/// Closest output gain with an interior sector certificate, kept only when
/// the loop stays stable and the certificate has `ε < −margin`. Near the
/// boundary the certificate is badly conditioned, so the controller is first
/// put in coordinates balanced by the current `p`. The returned realization
/// stays in those coordinates; the transfer function is unchanged.
fn project_onto_cone(t: &TransformData, k: &KMatrix, p: &Mat, margin: f64) -> Result<Option<(KMatrix, Mat, f64)>> {
    let s = psd_sqrt(p);
    let Ok(s_inv) = spd_inverse(&s, 1e12, "certificate square root") else {
        return Ok(None);
    };
    let ahat = &s * k.ahat() * &s_inv;
    let bhat = &s * k.bhat();
    let Ok((chat, pp)) = closest_output_gain(t, &ahat, &bhat, &(k.chat() * &s_inv), PROJECTION_MARGIN) else {
        return Ok(None);
    };
    let kp = KMatrix::from_blocks(&chat, &bhat, &ahat)?;
    if !is_hurwitz(&assemble_closed_loop(t, &kp)?.a)? || min_sym_eig(&pp) <= 0.0 {
        return Ok(None);
    }
    let eps = max_sym_eig(&conic_lmi_matrix(t, &kp, &pp)?);
    Ok((eps < -margin).then_some((kp, pp, eps)))
}

/// One relaxation subproblem, verified. The inner `Err` is a reason to
/// retry with a shorter step.
fn relax_step(
    t: &TransformData,
    anchor: &Anchor,
    w1: &Mat,
    w2: &Mat,
    goal: SubproblemGoal,
    eps: f64,
    opts: &IcoOptions,
) -> Result<std::result::Result<(Step, f64), String>> {
    let sub = build_subproblem(t, anchor, w1, w2, goal)?;
    let sol = solve(&sub.program, &opts.solver);
    let usable = match sol.status {
        SdpStatus::Optimal => true,
        SdpStatus::NumericalFailure => sol.x.iter().all(|v| v.is_finite()),
        _ => false,
    };
    if !usable {
        return Ok(Err(format!("solver returned {:?} ({})", sol.status, sol.diagnostics)));
    }
    let step = sub.decode(&sol.x)?;
    let res = residuals(t, &step.k, &step.q, &step.p)?;
    let actual = max_sym_eig(&conic_lmi_matrix(t, &step.k, &step.p)?);
    if res.lyapunov > 10.0 * opts.feas_tol || res.q_min_eig <= 0.0 || res.p_min_eig <= 0.0 {
        return Ok(Err(format!(
            "point failed verification (lyapunov {:.3e}, min eig Q {:.3e}, min eig P {:.3e}, {})",
            res.lyapunov, res.q_min_eig, res.p_min_eig, sol.diagnostics
        )));
    }
    if sol.status != SdpStatus::Optimal {
        if actual > eps + opts.stall_tol.max(1e-9 * eps.abs()) {
            return Ok(Err(format!("unverified step would raise ε ({})", sol.diagnostics)));
        }
        warn!("relaxation: accepting verified point after {}", sol.diagnostics);
    }
    Ok(Ok((step, actual)))
}

/// Relax the Luenberger controller (or `target`) towards the cone: each step
/// minimizes the conic violation `ε` while the overbound cost may grow by at
/// most a factor `1 + delta`.
pub fn init_ico(
    plant: &Plant,
    t: &TransformData,
    target: Option<&Controller>,
    opts: &IcoOptions,
) -> Result<IcoOutcome> {
    if !(opts.delta >= 0.0 && opts.delta.is_finite()) {
        return Err(Error::InvalidOption(format!("delta must be >= 0, got {}", opts.delta)));
    }
    let target = match target {
        Some(c) => c.clone(),
        None => design_h2_luenberger(plant)?,
    };
    if target.order() != t.dims.nc {
        return Err(Error::Dimension(format!(
            "target controller has order {}, expected {}",
            target.order(),
            t.dims.nc
        )));
    }
    let mut warnings = Vec::new();
    let mut k = KMatrix::from_controller(&target);
    let cl = assemble_closed_loop(t, &k)?;
    if !is_hurwitz(&cl.a)? {
        return Err(Error::InfeasibleInit("relaxation target does not stabilize the plant".into()));
    }
    let mut q = gramian(t, &k, &mut warnings)?;
    let (eps0, mut p) = stage_one(t, &k)?;
    let mut eps_trace = vec![eps0];
    let mut trace = vec![IcoStep {
        iter: 0,
        jprime: overbound_cost(t, &k, &q)?,
        jtrue: true_cost(t, &k)?,
        eps: eps0,
    }];
    info!("relaxation start: ε = {eps0:.4e}");
    let (w1, w2) = {
        let eye = Mat::identity(t.dims.big_m(), t.dims.big_m());
        (
            opts.w1.clone().unwrap_or_else(|| eye.clone()),
            opts.w2.clone().unwrap_or(eye),
        )
    };
    let mut iterations = 0;
    let mut eps = eps0;
    let mut window_start = 0;
    while eps >= -opts.eps_margin {
        if iterations >= opts.max_iters {
            return Ok(IcoOutcome::NotConverged {
                reason: IcoStop::IterationLimit,
                iterations,
                eps_trace,
                trace,
                message: format!("ε = {eps:.3e} after {iterations} relaxation steps"),
            });
        }
        iterations += 1;
        let jl = overbound_cost(t, &k, &q)?;
        let anchor = Anchor {
            k: k.clone(),
            q: q.clone(),
            p: p.clone(),
        };
        // a heavier regularizer shortens the step when the solver struggles
        let mut attempt = Err(String::new());
        for scale in [1.0, 10.0, 100.0] {
            let goal = SubproblemGoal::Relax {
                gamma: opts.gamma_reg * scale,
                cost_cap: (1.0 + opts.delta) * jl,
            };
            attempt = relax_step(t, &anchor, &w1, &w2, goal, eps, opts)?;
            match &attempt {
                Err(msg) if opts.gamma_reg > 0.0 => {
                    warn!("relaxation step {iterations}: {msg}; retrying with a heavier regularizer")
                }
                _ => break,
            }
        }
        let (step, actual) = match attempt {
            Ok(v) => v,
            Err(msg) => {
                // a fresh P gives the solver a different anchor to work from
                if let Ok((fresh, pv)) = stage_one(t, &k) {
                    if fresh < eps {
                        warn!("relaxation step {iterations}: {msg}; recentred P, ε {eps:.4e} -> {fresh:.4e}");
                        p = pv;
                        eps = fresh;
                        eps_trace.push(eps);
                        trace.push(IcoStep {
                            iter: iterations,
                            jprime: jl,
                            jtrue: true_cost(t, &k)?,
                            eps,
                        });
                        window_start = eps_trace.len() - 1;
                        continue;
                    }
                }
                return Ok(IcoOutcome::NotConverged {
                    reason: IcoStop::SolverFailure,
                    iterations,
                    eps_trace,
                    trace,
                    message: format!("step {iterations}: {msg}"),
                });
            }
        };
        k = step.k;
        q = step.q;
        p = step.p;
        eps = step.eps.unwrap_or(actual).max(actual);
        eps_trace.push(eps);
        trace.push(IcoStep {
            iter: iterations,
            jprime: step.jprime,
            jtrue: true_cost(t, &k)?,
            eps,
        });
        log::debug!("relaxation step {iterations}: ε = {eps:.4e}, J_L = {jl:.4}");
        if eps >= -opts.eps_margin && eps < opts.project_below {
            if let Some((kp, pp, ep)) = project_onto_cone(t, &k, &p, opts.eps_margin)? {
                info!("relaxation step {iterations}: projected Ĉ onto the cone, ε {eps:.4e} -> {ep:.4e}");
                k = kp;
                p = pp;
                eps = ep;
                *eps_trace.last_mut().expect("trace is never empty") = eps;
                let last = trace.last_mut().expect("trace is never empty");
                last.eps = eps;
                last.jtrue = true_cost(t, &k)?;
                break;
            }
        }
        let w = opts.stall_window;
        if w > 0 && eps_trace.len() > window_start + w {
            let before = eps_trace[eps_trace.len() - 1 - w];
            if before - eps < opts.stall_tol.max(1e-9 * before.abs()) {
                // the tracked P lags behind K; re-solve for the best P at this K
                if let Ok((fresh, pv)) = stage_one(t, &k) {
                    if fresh < eps - opts.stall_tol.max(1e-6 * eps.abs()) {
                        info!("relaxation step {iterations}: recentred P, ε {eps:.4e} -> {fresh:.4e}");
                        p = pv;
                        eps = fresh;
                        *eps_trace.last_mut().expect("trace is never empty") = eps;
                        trace.last_mut().expect("trace is never empty").eps = eps;
                        window_start = eps_trace.len() - 1;
                        continue;
                    }
                }
                return Ok(IcoOutcome::NotConverged {
                    reason: IcoStop::Stalled,
                    iterations,
                    eps_trace,
                    trace,
                    message: format!("ε stuck near {eps:.3e} for {w} steps"),
                });
            }
        }
    }

    // Q back to the exact Gramian of the relaxed controller
    let q_relaxed = q;
    let q0 = match gramian(t, &k, &mut warnings) {
        Ok(g) => g,
        Err(e) => {
            warnings.push(format!("Gramian reset failed ({e}); keeping the relaxed Q"));
            q_relaxed
        }
    };
    for w in &warnings {
        warn!("{w}");
    }
    let mut out = finish(t, InitMethod::Ico, k, q0, p, 10.0 * opts.feas_tol, warnings)?;
    out.iterations = iterations;
    out.eps_trace = eps_trace;
    out.trace = trace;
    Ok(IcoOutcome::Converged(out))
}
