//! Convex overbounding subproblem around a feasible point `(K0, Q0, P0)`.
//!
//! Unknowns are the steps `δĈ, δB̂, δÂ` (assembled into `δK` with a
//! structurally zero top-left block), `δQ`, `δP` and the slack `Z`. The
//! bilinear terms `QEK` and `P̃K` are overbounded by Schur blocks weighted by
//! `W1`, `W2`, so every feasible step keeps the true constraints satisfied.

use crate::error::{Error, Result};
use crate::linalg::{blocks, max_sym_eig, psd_sqrt, spd_inverse, sym, Mat};
use crate::sdp::{AffExpr, SdpProgram, Sense, Var};

use super::transform::{KMatrix, TransformData};

/// Above this condition number `Q0⁻¹` is not formed.
pub const MAX_Q_COND: f64 = 1e12;

/// What the subproblem minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubproblemGoal {
    /// Overbound cost plus `gamma·‖δ‖²`.
    Descent { gamma: f64 },
    /// Conic-block relaxation `ε` plus `gamma·‖δ‖²`, with the overbound cost
    /// capped at `cost_cap`.
    Relax { gamma: f64, cost_cap: f64 },
}

/// Anchor point of one subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub k: KMatrix,
    pub q: Mat,
    pub p: Mat,
}

pub struct Subproblem {
    pub program: SdpProgram,
    pub d_chat: Var,
    pub d_bhat: Var,
    pub d_ahat: Var,
    pub d_q: Var,
    pub d_p: Var,
    pub z: Var,
    pub eps: Option<Var>,
    /// `tr(B̃ᵀ(Q0+δQ)B̃) + tr(Z)`
    pub jprime: AffExpr,
    anchor: Anchor,
}

/// Candidate point decoded from a solution vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub k: KMatrix,
    pub q: Mat,
    pub p: Mat,
    pub jprime: f64,
    pub eps: Option<f64>,
}

/// Lower eigenvalue bound for `Q0 + δQ` and `P0 + δP`, well above solver slack.
pub const PD_MARGIN: f64 = 1e-7;

fn pd_margin(m: &Mat) -> f64 {
    PD_MARGIN * max_sym_eig(m).abs().max(1e-12)
}

fn zeros(r: usize, c: usize) -> AffExpr {
    AffExpr::zeros(r, c)
}

fn cst(m: Mat) -> AffExpr {
    AffExpr::constant(m)
}

pub fn build_subproblem(
    t: &TransformData,
    anchor: &Anchor,
    w1: &Mat,
    w2: &Mat,
    goal: SubproblemGoal,
) -> Result<Subproblem> {
    let d = t.dims;
    let (n_big, m_big, l_big) = (d.big_n(), d.big_m(), d.big_l());
    let (m, nc, p) = (d.m, d.nc, d.p);
    for (mat, rows, what) in [
        (&anchor.q, n_big, "Q0"),
        (&anchor.p, nc, "P0"),
        (w1, m_big, "W1"),
        (w2, m_big, "W2"),
    ] {
        if mat.nrows() != rows || mat.ncols() != rows {
            return Err(Error::Dimension(format!(
                "{what} is {}x{}, expected {rows}x{rows}",
                mat.nrows(),
                mat.ncols()
            )));
        }
    }
    if anchor.k.k.nrows() != m_big {
        return Err(Error::Dimension("K0 does not match the transform".into()));
    }
    let q_inv = spd_inverse(&anchor.q, MAX_Q_COND, "Q0")?;
    let w1_inv = spd_inverse(w1, MAX_Q_COND, "W1")?;
    let w2_inv = spd_inverse(w2, MAX_Q_COND, "W2")?;
    let ftf = t.f.transpose() * &t.f;
    let w1_f = spd_inverse(&(&w1_inv + &ftf), MAX_Q_COND, "W1⁻¹ + FᵀF")?;

    let mut prog = SdpProgram::new();
    let d_chat = prog.full("dChat", m, nc);
    let d_bhat = prog.full("dBhat", nc, m);
    let d_ahat = prog.full("dAhat", nc, nc);
    let d_q = prog.symmetric("dQ", n_big);
    let d_p = prog.symmetric("dP", nc);
    let z = prog.symmetric("Z", p);
    let eps = match goal {
        SubproblemGoal::Relax { .. } => Some(prog.scalar("eps")),
        SubproblemGoal::Descent { .. } => None,
    };

    let dk = AffExpr::blocks(&[
        &[&zeros(m, m), &d_chat.expr()],
        &[&d_bhat.expr(), &d_ahat.expr()],
    ]);
    let dq = d_q.expr();
    let k0 = &anchor.k.k;
    let q0 = &anchor.q;
    let p0 = &anchor.p;

    // [[Q0⁻¹ − Q0⁻¹δQQ0⁻¹, EKS], [*, Z]] ⪰ 0, after congruence with
    // diag(Q0^½, I) so an ill-conditioned Q0 does not blow up the entries
    let q_half = psd_sqrt(q0);
    let q_ihalf = psd_sqrt(&q_inv);
    let eks = dk
        .lmul(&(&q_half * &t.e))
        .rmul(&t.s)
        .add_constant(&(&q_half * &t.e * k0 * &t.s));
    let top = (dq.lmul(&q_ihalf).rmul(&q_ihalf))
        .scale(-1.0)
        .add_constant(&Mat::identity(n_big, n_big));
    let c11 = AffExpr::blocks(&[&[&top, &eks], &[&eks.transpose(), &z.expr()]]);
    prog.psd("cost_overbound", c11)?;

    // Lyapunov overbound
    let ek0r = &t.e * k0 * &t.r;
    let fk0r = &t.f * k0 * &t.r;
    let lin = dq.lmul(&t.a_t.transpose())
        + dq.rmul(&ek0r)
        + dk.lmul(&(q0 * &t.e)).rmul(&t.r)
        + dk.lmul(&(t.c_t.transpose() * &t.f)).rmul(&t.r)
        + dk.lmul(&(fk0r.transpose() * &t.f)).rmul(&t.r);
    let konst = t.a_t.transpose() * q0 + q0 * &ek0r + t.c_t.transpose() * &fk0r;
    let pi1 = lin
        .add_constant(&konst)
        .he()
        .add_constant(&(t.c_t.transpose() * &t.c_t + fk0r.transpose() * &fk0r));
    let dqe = dq.rmul(&t.e);
    let dkr = dk.rmul(&t.r);
    let c12 = AffExpr::blocks(&[
        &[&pi1, &dqe, &dkr.transpose()],
        &[&dqe.transpose(), &cst(-&w1_inv), &zeros(m_big, m_big)],
        &[&dkr, &zeros(m_big, m_big), &cst(-&w1_f)],
    ]);
    prog.nsd("lyapunov_overbound", c12)?;

    // conic overbound
    let pt0 = super::transform::p_tilde(&d, p0);
    let dpt = AffExpr::blocks(&[
        &[&zeros(nc, m), &d_p.expr()],
        &[&zeros(m, m), &zeros(m, nc)],
        &[&zeros(m, m), &zeros(m, nc)],
    ]);
    let mut pi2 = (dk.lmul(&pt0).rmul(&t.x) + dpt.rmul(&(k0 * &t.x)))
        .add_constant(&(&pt0 * k0 * &t.x))
        .he()
        .add_constant(&t.gamma);
    if let Some(e) = &eps {
        pi2 = pi2 - e.expr().times_matrix(&Mat::identity(l_big, l_big));
    }
    let dkx = dk.rmul(&t.x);
    let c13 = AffExpr::blocks(&[
        &[&pi2, &dpt, &dkx.transpose()],
        &[&dpt.transpose(), &cst(-&w2_inv), &zeros(m_big, m_big)],
        &[&dkx, &zeros(m_big, m_big), &cst(-w2)],
    ]);
    prog.nsd("conic_overbound", c13)?;

    prog.constrain(
        "q_positive",
        dq.add_constant(q0),
        Sense::Psd,
        pd_margin(q0),
    )?;
    prog.constrain(
        "p_positive",
        d_p.expr().add_constant(p0),
        Sense::Psd,
        pd_margin(p0),
    )?;

    let jprime = dq
        .lmul(&t.b_t.transpose())
        .rmul(&t.b_t)
        .trace()
        .add_constant(&Mat::from_element(1, 1, (t.b_t.transpose() * q0 * &t.b_t).trace()))
        + z.expr().trace();

    let gamma = match goal {
        SubproblemGoal::Descent { gamma } => {
            prog.minimize(&jprime)?;
            gamma
        }
        SubproblemGoal::Relax { gamma, cost_cap } => {
            let cap = (-&jprime).add_constant(&Mat::from_element(1, 1, cost_cap));
            prog.psd("cost_cap", cap)?;
            prog.minimize(&eps.expect("relaxation variable").expr())?;
            gamma
        }
    };
    if gamma < 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidOption(format!("regularization weight {gamma} must be >= 0")));
    }
    if gamma > 0.0 {
        for v in [&d_chat, &d_bhat, &d_ahat, &d_q, &d_p] {
            prog.add_frobenius_sq(v, gamma);
        }
    }

    Ok(Subproblem {
        program: prog,
        d_chat,
        d_bhat,
        d_ahat,
        d_q,
        d_p,
        z,
        eps,
        jprime,
        anchor: anchor.clone(),
    })
}

impl Subproblem {
    /// Zero step with the tightest slack `Z = (EK0S)ᵀQ0(EK0S)`.
    pub fn anchor_point(&self, t: &TransformData) -> Vec<f64> {
        let mut x = vec![0.0; self.program.num_scalars()];
        let eks = &t.e * &self.anchor.k.k * &t.s;
        let z0 = sym(&(eks.transpose() * &self.anchor.q * &eks));
        self.z.write_value(&z0, &mut x);
        if let Some(e) = &self.eps {
            let pi2 = super::transform::conic_lmi_matrix(t, &self.anchor.k, &self.anchor.p)
                .map(|m| max_sym_eig(&m))
                .unwrap_or(0.0);
            x[e.offset()] = pi2.max(0.0);
        }
        x
    }

    pub fn decode(&self, x: &[f64]) -> Result<Step> {
        if x.len() != self.program.num_scalars() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("subproblem solution"));
        }
        let m = self.anchor.k.m;
        let nc = self.anchor.k.nc;
        let dk = blocks(&[
            &[&Mat::zeros(m, m), &self.d_chat.value_from(x)],
            &[&self.d_bhat.value_from(x), &self.d_ahat.value_from(x)],
        ]);
        Ok(Step {
            k: KMatrix {
                k: &self.anchor.k.k + dk,
                m,
                nc,
            },
            q: sym(&(&self.anchor.q + self.d_q.value_from(x))),
            p: sym(&(&self.anchor.p + self.d_p.value_from(x))),
            jprime: self.jprime.eval(x)[(0, 0)],
            eps: self.eps.map(|e| x[e.offset()]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::Cone;
    use crate::lti::{solve_lyapunov, Controller, Plant};
    use crate::sdp::{solve, SdpStatus, SolveOptions};
    use crate::synthesis::transform::{
        assemble_closed_loop, build_transform, lyapunov_lmi_matrix, overbound_cost,
    };

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn setup() -> (TransformData, Anchor) {
        let plant = Plant::new(
            s(-1.0),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            s(1.0),
            Mat::from_row_slice(2, 1, &[1.0, 0.0]),
            s(1.0),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        let t = build_transform(&plant, 1, &Cone::new(-1.0, 1.0).unwrap()).unwrap();
        let ctrl = Controller::new(s(-2.0), s(0.5), s(0.5)).unwrap();
        let k = KMatrix::from_controller(&ctrl);
        let cl = assemble_closed_loop(&t, &k).unwrap();
        let q = solve_lyapunov(&cl.a, &(cl.c.transpose() * &cl.c)).unwrap();
        let p = crate::conic::csl_check(&ctrl.as_state_space(), &t.cone, crate::conic::CslForm::Two)
            .unwrap()
            .expect("controller inside cone")
            .p;
        (t, Anchor { k, q, p })
    }

    #[test]
    fn anchor_reproduces_lyapunov_and_cost() {
        let (t, a) = setup();
        let eye = Mat::identity(2, 2);
        let sub = build_subproblem(&t, &a, &eye, &eye, SubproblemGoal::Descent { gamma: 0.1 }).unwrap();
        let x0 = sub.anchor_point(&t);
        let c12 = &sub.program.constraints()[1];
        let top = c12.expr.eval(&x0).view((0, 0), (2, 2)).into_owned();
        let lyap = lyapunov_lmi_matrix(&t, &a.k, &a.q).unwrap();
        assert!((top - lyap).norm() < 1e-12);
        let j = overbound_cost(&t, &a.k, &a.q).unwrap();
        assert!((sub.jprime.eval(&x0)[(0, 0)] - j).abs() < 1e-12 * (1.0 + j));
        assert!(sub.program.max_violation(&x0) < 1e-9);
    }

    #[test]
    fn smoke_solve_descends() {
        let (t, a) = setup();
        let eye = Mat::identity(2, 2);
        let sub = build_subproblem(&t, &a, &eye, &eye, SubproblemGoal::Descent { gamma: 0.1 }).unwrap();
        let sol = solve(&sub.program, &SolveOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal, "{}", sol.diagnostics);
        let step = sub.decode(&sol.x).unwrap();
        let j0 = overbound_cost(&t, &a.k, &a.q).unwrap();
        assert!(step.jprime <= j0 + 1e-6);
        assert_eq!(step.k.top_left_magnitude(), 0.0);
    }
}
