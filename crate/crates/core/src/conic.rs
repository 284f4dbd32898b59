//! Conic sector analysis for strictly proper LTI systems.
//!
//! A square system `G = (A, B, C, 0)` lies in `cone[a, b]` (`a < 0 < b`) when
//! one of the three equivalent matrix inequalities below admits `P ≻ 0`:
//!
//! ```text
//! form 1: [PA + AᵀP + CᵀC   PB − ½(a+b)Cᵀ]
//!         [      *                abI     ]  ⪯ 0
//!
//! form 2: [PA + AᵀP   PB                 Cᵀ      ]
//!         [   *      −(a−b)²/(4b)I   −½(a+b)I    ]  ⪯ 0
//!         [   *          *              −bI      ]
//!
//! form 3: P(A + (a+b)/(2ab)·BC) + (·)ᵀ + (1 − (a+b)²/(4ab))CᵀC − (1/ab)PBBᵀP ⪯ 0
//! ```
//!
//! Dividing form 1 by `b` and letting `b → ∞` recovers the positive-real
//! (passivity) inequality shifted by `a`; that limit is not exposed here.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{blocks, he, max_abs, max_sym_eig, min_sym_eig, sym, Mat};
use crate::lti::{is_hurwitz, solve_lyapunov, StateSpace};
use crate::sdp::{self, AffExpr, SdpProgram, SdpStatus, Sense, SolveOptions};

/// Relative shrink applied to a strict cone: `(a, b)` is checked as
/// `[a + δ, b − δ]` with `δ = STRICT_MARGIN·min(|a|, b)`.
pub const STRICT_MARGIN: f64 = 1e-6;
/// Feasibility threshold on `min t` relative to the constant data.
pub const CSL_TOL: f64 = 1e-7;
/// Lower bound on the certificate, `P ⪰ P_FLOOR·I`.
const P_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub strict: bool,
}

impl Cone {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Self::with_strictness(a, b, false)
    }

    pub fn strict(a: f64, b: f64) -> Result<Self> {
        Self::with_strictness(a, b, true)
    }

    fn with_strictness(a: f64, b: f64, strict: bool) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < 0.0 && b > 0.0) {
            return Err(Error::InvalidCone { a, b });
        }
        Ok(Cone { a, b, strict })
    }

    pub fn validate(&self) -> Result<()> {
        Self::with_strictness(self.a, self.b, self.strict).map(|_| ())
    }

    /// Bounds actually checked: shrunk by `δ` for strict cones.
    pub fn effective(&self) -> (f64, f64) {
        if self.strict {
            let d = STRICT_MARGIN * self.a.abs().min(self.b);
            (self.a + d, self.b - d)
        } else {
            (self.a, self.b)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum CslForm {
    One,
    Two,
    Three,
}

impl TryFrom<u8> for CslForm {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(CslForm::One),
            2 => Ok(CslForm::Two),
            3 => Ok(CslForm::Three),
            other => Err(format!("CSL form must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<CslForm> for u8 {
    fn from(f: CslForm) -> u8 {
        match f {
            CslForm::One => 1,
            CslForm::Two => 2,
            CslForm::Three => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCertificate {
    #[serde(rename = "P", with = "crate::lti::row_major")]
    pub p: Mat,
    pub form: CslForm,
    /// Largest eigenvalue of the form's matrix at `P`.
    pub residual: f64,
}

/// Result of the `min t` feasibility program behind [`csl_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct CslReport {
    /// Optimal `t` in `M(P) ⪯ tI`.
    pub t: f64,
    pub tolerance: f64,
    pub certificate: Option<ConeCertificate>,
}

fn check_square_strictly_proper(sys: &StateSpace) -> Result<()> {
    sys.validate()?;
    if sys.has_feedthrough() {
        return Err(Error::Feedthrough);
    }
    if sys.inputs() != sys.outputs() {
        return Err(Error::Dimension(format!(
            "conic analysis needs a square system, got {} inputs and {} outputs",
            sys.inputs(),
            sys.outputs()
        )));
    }
    Ok(())
}

/// The form's matrix as an affine expression in `P` (form 3 in its Schur
/// complement shape `[[R(P), PB], [BᵀP, abI]]`).
fn csl_expr(sys: &StateSpace, a: f64, b: f64, form: CslForm, p: &AffExpr) -> AffExpr {
    let (aa, bb, cc) = (&sys.a, &sys.b, &sys.c);
    let m = sys.inputs();
    let k = 0.5 * (a + b);
    let im = Mat::identity(m, m);
    let ctc = cc.transpose() * cc;
    let pb = p.rmul(bb);
    match form {
        CslForm::One => {
            let top = p.rmul(aa).he() + &ctc;
            let off = pb + &(cc.transpose() * -k);
            AffExpr::blocks(&[
                &[&top, &off],
                &[&off.transpose(), &AffExpr::constant(&im * (a * b))],
            ])
        }
        CslForm::Two => {
            let ct = AffExpr::constant(cc.transpose());
            let g22 = AffExpr::constant(&im * (-(a - b).powi(2) / (4.0 * b)));
            let g23 = AffExpr::constant(&im * -k);
            let g33 = AffExpr::constant(&im * -b);
            AffExpr::blocks(&[
                &[&p.rmul(aa).he(), &pb, &ct],
                &[&pb.transpose(), &g22, &g23],
                &[&ct.transpose(), &g23, &g33],
            ])
        }
        CslForm::Three => {
            let shifted = aa + bb * cc * ((a + b) / (2.0 * a * b));
            let top = p.rmul(&shifted).he() + &(&ctc * (1.0 - (a + b).powi(2) / (4.0 * a * b)));
            AffExpr::blocks(&[
                &[&top, &pb],
                &[&pb.transpose(), &AffExpr::constant(&im * (a * b))],
            ])
        }
    }
}

/// The form's native matrix at a given `P` (for form 3 the `n×n` Riccati
/// expression).
pub fn csl_matrix(sys: &StateSpace, cone: &Cone, form: CslForm, p: &Mat) -> Result<Mat> {
    check_square_strictly_proper(sys)?;
    cone.validate()?;
    let (a, b) = cone.effective();
    let (aa, bb, cc) = (&sys.a, &sys.b, &sys.c);
    let m = sys.inputs();
    let im = Mat::identity(m, m);
    let k = 0.5 * (a + b);
    let ctc = cc.transpose() * cc;
    Ok(match form {
        CslForm::One => {
            let off = p * bb - cc.transpose() * k;
            blocks(&[
                &[&(he(&(p * aa)) + ctc), &off],
                &[&off.transpose(), &(&im * (a * b))],
            ])
        }
        CslForm::Two => {
            let pb = p * bb;
            blocks(&[
                &[&he(&(p * aa)), &pb, &cc.transpose()],
                &[&pb.transpose(), &(&im * (-(a - b).powi(2) / (4.0 * b))), &(&im * -k)],
                &[cc, &(&im * -k), &(&im * -b)],
            ])
        }
        CslForm::Three => {
            let shifted = aa + bb * cc * ((a + b) / (2.0 * a * b));
            let pb = p * bb;
            sym(&(he(&(p * shifted)) + ctc * (1.0 - (a + b).powi(2) / (4.0 * a * b))
                - &pb * pb.transpose() / (a * b)))
        }
    })
}

/// Solve `min t  s.t.  M(P) ⪯ tI,  P ⪰ εI` and report the certificate when
/// `t` is within tolerance of zero.
const P_BOUND: f64 = 1e6;

pub fn csl_report(sys: &StateSpace, cone: &Cone, form: CslForm) -> Result<CslReport> {
    check_square_strictly_proper(sys)?;
    cone.validate()?;
    let (a, b) = cone.effective();
    let n = sys.states();
    let constant = csl_expr(sys, a, b, form, &AffExpr::constant(Mat::zeros(n, n)));
    let tolerance = CSL_TOL * (1.0 + max_abs(constant.constant_part()));
    // diagonal congruence evening out the constant blocks; it keeps the sign
    let d = Mat::from_diagonal(&constant.constant_part().diagonal().map(|c| 1.0 / c.abs().max(1.0).sqrt()));
    // a spurious infeasibility report goes away once P is boxed in
    let attempt = |bound: Option<f64>| {
        let mut prog = SdpProgram::new();
        let p = prog.symmetric("P", n);
        let t = prog.scalar("t");
        let m_expr = csl_expr(sys, a, b, form, &p.expr()).lmul(&d).rmul(&d);
        let dim = m_expr.shape().0;
        let shifted = &m_expr - &t.expr().times_matrix(&Mat::identity(dim, dim));
        prog.constrain("csl", shifted, Sense::Nsd, 0.0)?;
        // only the sign of t matters; a floor keeps the program bounded
        let floor = 1.0 + max_abs(m_expr.constant_part());
        prog.constrain("t_floor", t.expr().add_constant(&Mat::from_element(1, 1, floor)), Sense::Psd, 0.0)?;
        if n > 0 {
            prog.constrain("P>0", p.expr(), Sense::Psd, P_FLOOR)?;
            if let Some(r) = bound {
                let cap = p.expr().scale(-1.0).add_constant(&(Mat::identity(n, n) * r));
                prog.constrain("P bound", cap, Sense::Psd, 0.0)?;
            }
        }
        prog.minimize(&t.expr())?;
        Ok::<_, Error>((sdp::solve(&prog, &SolveOptions::default()), p, t))
    };
    let (mut sol, mut p, mut t) = attempt(None)?;
    if matches!(sol.status, SdpStatus::Infeasible | SdpStatus::Unbounded) && n > 0 {
        (sol, p, t) = attempt(Some(P_BOUND))?;
    }
    match sol.status {
        SdpStatus::Optimal | SdpStatus::NumericalFailure => {}
        SdpStatus::Infeasible | SdpStatus::Unbounded => {
            return Err(Error::Solver(format!(
                "CSL program reported {:?}",
                sol.status
            )))
        }
    }
    if !sol.x.iter().all(|v| v.is_finite()) {
        return Err(Error::Solver(format!("CSL program failed: {}", sol.diagnostics)));
    }
    let p_val = sym(&sol.value(&p));
    let native = csl_matrix(sys, cone, form, &p_val)?;
    let residual = if native.is_empty() { f64::NEG_INFINITY } else { max_sym_eig(&native) };
    // the solver's t can be loose; the eigenvalue at the returned P decides
    let t_val = sol.scalar(&t).max(max_sym_eig(csl_expr(sys, a, b, form, &AffExpr::constant(p_val.clone())).constant_part()));
    let p_ok = n == 0 || min_sym_eig(&p_val) > 0.0;
    let certificate = (t_val <= tolerance && p_ok).then(|| ConeCertificate {
        p: p_val,
        form,
        residual,
    });
    Ok(CslReport {
        t: t_val,
        tolerance,
        certificate,
    })
}

/// Certificate that `sys ∈ cone` via the chosen CSL form, or `None` when the
/// inequality is infeasible.
pub fn csl_check(sys: &StateSpace, cone: &Cone, form: CslForm) -> Result<Option<ConeCertificate>> {
    Ok(csl_report(sys, cone, form)?.certificate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid {
            lo: 1e-3,
            hi: 1e4,
            points: 400,
        }
    }
}

impl FrequencyGrid {
    /// Log-spaced grid plus `ω = 0` and `ω = ∞`.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let (l0, l1) = (self.lo.log10(), self.hi.log10());
        let k = self.points.max(2);
        out.extend((0..k).map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (k - 1) as f64)));
        out.push(f64::INFINITY);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub passes: bool,
    /// Frequency with the smallest eigenvalue of the sector expression.
    pub worst_omega: f64,
    pub worst_eigenvalue: f64,
}

fn real_embedding(h: &DMatrix<Complex<f64>>) -> Mat {
    let m = h.nrows();
    let mut r = Mat::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let z = h[(i, j)];
            r[(i, j)] = z.re;
            r[(i + m, j + m)] = z.re;
            r[(i, j + m)] = -z.im;
            r[(i + m, j)] = z.im;
        }
    }
    r
}

/// Smallest eigenvalue of a Hermitian matrix through its real embedding.
fn hermitian_min_eig(h: &DMatrix<Complex<f64>>) -> f64 {
    min_sym_eig(&real_embedding(h))
}

/// Largest `a` with `sys` passing the frequency sector test for `[a, b]` at
/// every grid frequency, i.e. the tightest lower sector bound for this `b`.
/// `−∞` when some frequency has `He(G)/2 ⪰ bI` in some direction.
pub fn sector_lower_bound(sys: &StateSpace, b: f64, grid: &FrequencyGrid) -> Result<f64> {
    check_square_strictly_proper(sys)?;
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidCone { a: -1.0, b });
    }
    if !is_hurwitz(&sys.a)? {
        return Err(Error::NotHurwitz {
            max_real: crate::linalg::spectral_abscissa(&sys.a)?,
        });
    }
    let m = sys.inputs();
    let mut lowest = f64::INFINITY;
    for w in grid.frequencies() {
        if w.is_infinite() {
            // G(i∞) = 0 only requires a ≤ 0
            lowest = lowest.min(0.0);
            continue;
        }
        let g = sys.transfer_at(Complex::new(0.0, w))?;
        let gh = g.adjoint();
        let herm = (&g + &gh) * Complex::new(0.5, 0.0);
        let mut n = &herm * Complex::new(-1.0 / b, 0.0);
        for i in 0..m {
            n[(i, i)] += Complex::new(1.0, 0.0);
        }
        let rhs = herm - (&gh * &g) * Complex::new(1.0 / b, 0.0);
        let Some(chol) = nalgebra::Cholesky::new(sym(&real_embedding(&n))) else {
            return Ok(f64::NEG_INFINITY);
        };
        let l_inv = chol
            .l()
            .try_inverse()
            .ok_or(Error::IllConditioned { what: "sector scaling", cond: f64::INFINITY })?;
        let scaled = &l_inv * real_embedding(&rhs) * l_inv.transpose();
        lowest = lowest.min(min_sym_eig(&scaled));
    }
    Ok(lowest)
}

/// Sampled frequency-domain sector test
/// `−(1/b)GᴴG + (1 + a/b)·He(G)/2 − aI ⪰ 0` over the grid.
pub fn frequency_cone_oracle(sys: &StateSpace, cone: &Cone, grid: &FrequencyGrid) -> Result<FrequencyReport> {
    check_square_strictly_proper(sys)?;
    cone.validate()?;
    if !is_hurwitz(&sys.a)? {
        return Err(Error::NotHurwitz {
            max_real: crate::linalg::spectral_abscissa(&sys.a)?,
        });
    }
    let (a, b) = cone.effective();
    let m = sys.inputs();
    let mut worst = (f64::NAN, f64::INFINITY);
    let mut worst_tol = 0.0;
    for w in grid.frequencies() {
        let g = if w.is_infinite() {
            DMatrix::<Complex<f64>>::zeros(m, m)
        } else {
            sys.transfer_at(Complex::new(0.0, w))?
        };
        let gh = g.adjoint();
        let mut h = (&gh * &g) * Complex::new(-1.0 / b, 0.0)
            + (&g + &gh) * Complex::new(0.5 * (1.0 + a / b), 0.0);
        for i in 0..m {
            h[(i, i)] -= Complex::new(a, 0.0);
        }
        let gnorm = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = 1e-8 * (a.abs() + gnorm * gnorm / b + (1.0 + a / b).abs() * gnorm) + 1e-14;
        let e = hermitian_min_eig(&h);
        if e - (-tol) < worst.1 - (-worst_tol) || worst.0.is_nan() {
            worst = (w, e);
            worst_tol = tol;
        }
    }
    Ok(FrequencyReport {
        passes: worst.1 >= -worst_tol,
        worst_omega: worst.0,
        worst_eigenvalue: worst.1,
    })
}

/// Symmetric cone `(−γ, γ)` from a Lyapunov certificate of a stable system.
pub fn estimate_symmetric_cone(sys: &StateSpace) -> Result<Cone> {
    estimate_symmetric_cone_with_margin(sys, 1e-6)
}

pub fn estimate_symmetric_cone_with_margin(sys: &StateSpace, margin: f64) -> Result<Cone> {
    check_square_strictly_proper(sys)?;
    let n = sys.states();
    let bbt = &sys.b * sys.b.transpose();
    let base = sys.c.transpose() * &sys.c + &bbt;
    let eps = 1e-8 * (1.0 + max_abs(&base));
    let p = solve_lyapunov(&sys.a, &(base + Mat::identity(n, n) * eps))?;
    let lam = crate::linalg::sym_eigenvalues(&p)
        .into_iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    // γ must also give (1/γ²)PBBᵀP ⪯ BBᵀ + εI
    let weight = bbt + Mat::identity(n, n) * eps;
    let exact = match weight.cholesky() {
        Some(l) => {
            let pb = &p * &sys.b;
            let y = l.l().solve_lower_triangular(&pb).unwrap_or_else(|| pb.clone());
            max_sym_eig(&(&y * y.transpose())).max(0.0).sqrt()
        }
        None => lam,
    };
    let gamma = ((1.0 + margin) * lam.max(exact)).max(f64::MIN_POSITIVE.sqrt());
    Cone::new(-gamma, gamma)
}

/// Output scaling `min(a/a₀, b/b₀)` moving `cone(a₀, b₀)` inside `cone(a, b)`.
pub fn scale_factor(current: &Cone, target: &Cone) -> Result<f64> {
    current.validate()?;
    target.validate()?;
    Ok((target.a / current.a).min(target.b / current.b))
}

/// Scale `C` so a system certified in `current` lands in `target`.
pub fn scale_into_cone(sys: &StateSpace, current: &Cone, target: &Cone) -> Result<StateSpace> {
    let factor = scale_factor(current, target)?;
    let report = csl_report(sys, current, CslForm::Two)?;
    if report.certificate.is_none() {
        return Err(Error::NotInCone { residual: report.t });
    }
    let mut out = sys.clone();
    out.c *= factor;
    Ok(out)
}

/// Cone a feedback partner must occupy (strictly) for closed-loop stability
/// with a system in `cone[a, b]`: `(−1/b, −1/a)`.
pub fn cst_complement(cone: &Cone) -> Result<Cone> {
    cone.validate()?;
    Cone::strict(-1.0 / cone.b, -1.0 / cone.a)
}
