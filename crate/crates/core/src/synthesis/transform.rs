//! Lifted closed-loop notation.
//!
//! With `K = [[0, Ĉ], [B̂, Â]]` the closed loop of plant and controller is
//! affine in `K`: `Acl = Ã + EKR`, `Bcl = B̃ + EKS`, `Ccl = C̃ + FKR`, and the
//! controller's conic inequality reads `He[P̃KX] + Γ ⪯ 0`.

use serde::{Deserialize, Serialize};

use crate::conic::Cone;
use crate::error::{Error, Result};
use crate::linalg::{blkdiag, blocks, he, max_sym_eig, Mat};
use crate::lti::{is_hurwitz, solve_lyapunov, Controller, Plant, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub nc: usize,
}

impl Dims {
    /// `n + n_c`
    pub fn big_n(&self) -> usize {
        self.n + self.nc
    }
    /// `m + n_c`
    pub fn big_m(&self) -> usize {
        self.m + self.nc
    }
    /// `n_c + 2m`
    pub fn big_l(&self) -> usize {
        self.nc + 2 * self.m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformData {
    pub a_t: Mat,
    pub b_t: Mat,
    pub c_t: Mat,
    pub e: Mat,
    pub r: Mat,
    pub s: Mat,
    pub f: Mat,
    pub x: Mat,
    pub gamma: Mat,
    pub cone: Cone,
    pub dims: Dims,
}

fn z(r: usize, c: usize) -> Mat {
    Mat::zeros(r, c)
}

fn eye(n: usize) -> Mat {
    Mat::identity(n, n)
}

/// `Γ` for a controller cone, using the (possibly strict-shrunk) bounds.
pub fn gamma_matrix(cone: &Cone, nc: usize, m: usize) -> Mat {
    let (a, b) = cone.effective();
    let im = eye(m);
    let g22 = &im * (-(a - b).powi(2) / (4.0 * b));
    let g23 = &im * (-(a + b) / 2.0);
    let g33 = &im * -b;
    blocks(&[
        &[&z(nc, nc), &z(nc, m), &z(nc, m)],
        &[&z(m, nc), &g22, &g23],
        &[&z(m, nc), &g23, &g33],
    ])
}

pub fn build_transform(plant: &Plant, nc: usize, cone: &Cone) -> Result<TransformData> {
    if nc < 1 {
        return Err(Error::InvalidOption("controller order must be at least 1".into()));
    }
    cone.validate()?;
    let dims = Dims {
        n: plant.states(),
        m: plant.controls(),
        p: plant.disturbances(),
        q: plant.performance_outputs(),
        nc,
    };
    let Dims { n, m, p, q, .. } = dims;
    let a_t = blkdiag(&[&plant.a, &z(nc, nc)]);
    let b_t = blocks(&[&[&plant.b1], &[&z(nc, p)]]);
    let c_t = blocks(&[&[&plant.c1, &z(q, nc)]]);
    let e = blocks(&[&[&(-&plant.b2), &z(n, nc)], &[&z(nc, m), &eye(nc)]]);
    let r = blocks(&[&[&plant.c2, &z(m, nc)], &[&z(nc, n), &eye(nc)]]);
    let s = blocks(&[&[&plant.d21], &[&z(nc, p)]]);
    let f = blocks(&[&[&(-&plant.d12), &z(q, nc)]]);
    let x = blocks(&[
        &[&z(m, nc), &eye(m), &z(m, m)],
        &[&eye(nc), &z(nc, m), &z(nc, m)],
    ]);
    let gamma = gamma_matrix(cone, nc, m);
    Ok(TransformData {
        a_t,
        b_t,
        c_t,
        e,
        r,
        s,
        f,
        x,
        gamma,
        cone: *cone,
        dims,
    })
}

/// `K = [[0, Ĉ], [B̂, Â]]`, square of size `m + n_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct KMatrix {
    pub k: Mat,
    pub m: usize,
    pub nc: usize,
}

impl KMatrix {
    pub fn from_controller(ctrl: &Controller) -> Self {
        let (m, nc) = (ctrl.channels(), ctrl.order());
        let k = blocks(&[&[&z(m, m), &ctrl.chat], &[&ctrl.bhat, &ctrl.ahat]]);
        KMatrix { k, m, nc }
    }

    pub fn zero(m: usize, nc: usize) -> Self {
        KMatrix {
            k: z(m + nc, m + nc),
            m,
            nc,
        }
    }

    pub fn from_blocks(chat: &Mat, bhat: &Mat, ahat: &Mat) -> Result<Self> {
        Ok(Self::from_controller(&Controller::new(
            ahat.clone(),
            bhat.clone(),
            chat.clone(),
        )?))
    }

    pub fn chat(&self) -> Mat {
        self.k.view((0, self.m), (self.m, self.nc)).into_owned()
    }

    pub fn bhat(&self) -> Mat {
        self.k.view((self.m, 0), (self.nc, self.m)).into_owned()
    }

    pub fn ahat(&self) -> Mat {
        self.k.view((self.m, self.m), (self.nc, self.nc)).into_owned()
    }

    pub fn to_controller(&self) -> Controller {
        Controller {
            ahat: self.ahat(),
            bhat: self.bhat(),
            chat: self.chat(),
        }
    }

    /// Largest magnitude in the structurally zero top-left block.
    pub fn top_left_magnitude(&self) -> f64 {
        crate::linalg::max_abs(&self.k.view((0, 0), (self.m, self.m)).into_owned())
    }
}

/// `P̃(P) = [[0, P], [0, 0], [I, 0]]`, of size `(n_c + 2m) × (m + n_c)`.
pub fn p_tilde(dims: &Dims, p: &Mat) -> Mat {
    let (m, nc) = (dims.m, dims.nc);
    blocks(&[
        &[&z(nc, m), p],
        &[&z(m, m), &z(m, nc)],
        &[&eye(m), &z(m, nc)],
    ])
}

fn check_k(t: &TransformData, k: &KMatrix) -> Result<()> {
    let mm = t.dims.big_m();
    if k.k.nrows() != mm || k.k.ncols() != mm || k.m != t.dims.m || k.nc != t.dims.nc {
        return Err(Error::Dimension(format!(
            "K is {}x{}, expected {mm}x{mm}",
            k.k.nrows(),
            k.k.ncols()
        )));
    }
    Ok(())
}

/// `(Ã + EKR, B̃ + EKS, C̃ + FKR, 0)`.
pub fn assemble_closed_loop(t: &TransformData, k: &KMatrix) -> Result<StateSpace> {
    check_k(t, k)?;
    let ek = &t.e * &k.k;
    Ok(StateSpace {
        a: &t.a_t + &ek * &t.r,
        b: &t.b_t + &ek * &t.s,
        c: &t.c_t + &t.f * &k.k * &t.r,
        d: z(t.dims.q, t.dims.p),
    })
}

/// `He[P̃KX] + Γ`.
pub fn conic_lmi_matrix(t: &TransformData, k: &KMatrix, p: &Mat) -> Result<Mat> {
    check_k(t, k)?;
    if p.nrows() != t.dims.nc || p.ncols() != t.dims.nc {
        return Err(Error::Dimension(format!(
            "P is {}x{}, expected {n}x{n}",
            p.nrows(),
            p.ncols(),
            n = t.dims.nc
        )));
    }
    Ok(he(&(p_tilde(&t.dims, p) * &k.k * &t.x)) + &t.gamma)
}

/// `He[Q·Acl] + CclᵀCcl`, the Lyapunov inequality matrix.
pub fn lyapunov_lmi_matrix(t: &TransformData, k: &KMatrix, q: &Mat) -> Result<Mat> {
    let cl = assemble_closed_loop(t, k)?;
    Ok(he(&(q * &cl.a)) + cl.c.transpose() * &cl.c)
}

/// `J(K, Q) = tr((B̃ + EKS)ᵀ Q (B̃ + EKS))`.
pub fn overbound_cost(t: &TransformData, k: &KMatrix, q: &Mat) -> Result<f64> {
    check_k(t, k)?;
    let bcl = &t.b_t + &t.e * &k.k * &t.s;
    Ok((bcl.transpose() * q * &bcl).trace())
}

/// Closed-loop observability Gramian, or `None` when `Acl` is not Hurwitz.
pub fn closed_loop_gramian(t: &TransformData, k: &KMatrix) -> Result<Option<Mat>> {
    let cl = assemble_closed_loop(t, k)?;
    if !is_hurwitz(&cl.a)? {
        return Ok(None);
    }
    Ok(Some(solve_lyapunov(&cl.a, &(cl.c.transpose() * &cl.c))?))
}

/// Exact closed-loop H2² cost; `f64::INFINITY` flags an unstable loop.
///
/// With `B̂ = 0` and `Ĉ = 0` the controller states are neither driven nor
/// seen, so the cost is that of the plant block alone whatever `Â` is.
pub fn true_cost(t: &TransformData, k: &KMatrix) -> Result<f64> {
    check_k(t, k)?;
    if k.chat().iter().all(|v| *v == 0.0) && k.bhat().iter().all(|v| *v == 0.0) {
        let n = t.dims.n;
        let a = t.a_t.view((0, 0), (n, n)).into_owned();
        if !is_hurwitz(&a)? {
            return Ok(f64::INFINITY);
        }
        let c = t.c_t.columns(0, n).into_owned();
        let b = t.b_t.rows(0, n).into_owned();
        let x = solve_lyapunov(&a, &(c.transpose() * &c))?;
        return Ok((b.transpose() * x * b).trace().max(0.0));
    }
    match closed_loop_gramian(t, k)? {
        Some(q) => Ok(overbound_cost(t, k, &q)?.max(0.0)),
        None => Ok(f64::INFINITY),
    }
}

/// Largest eigenvalue of the Lyapunov inequality, scaled by the size of its terms.
pub fn lyapunov_residual(t: &TransformData, k: &KMatrix, q: &Mat) -> Result<f64> {
    let mat = lyapunov_lmi_matrix(t, k, q)?;
    let cl = assemble_closed_loop(t, k)?;
    let scale = 1.0 + 2.0 * (q * &cl.a).norm() + (cl.c.transpose() * &cl.c).norm();
    Ok(max_sym_eig(&mat) / scale)
}

/// Largest eigenvalue of `He[P̃KX] + Γ`.
pub fn conic_residual(t: &TransformData, k: &KMatrix, p: &Mat) -> Result<f64> {
    Ok(max_sym_eig(&conic_lmi_matrix(t, k, p)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{csl_matrix, CslForm};
    use crate::lti::close_loop;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn scalar_plant(b2: f64) -> Plant {
        Plant::new_unchecked(s(-1.0), s(1.0), s(b2), s(1.0), s(1.0), s(0.0), s(0.0)).unwrap()
    }

    #[test]
    fn e_block_from_b2() {
        let t = build_transform(&scalar_plant(2.0), 1, &Cone::new(-1.0, 1.0).unwrap()).unwrap();
        assert_eq!(t.e, Mat::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0]));
        assert_eq!(t.a_t[(1, 1)], 0.0);
    }

    #[test]
    fn gamma_blocks_for_cone() {
        let t = build_transform(&scalar_plant(1.0), 1, &Cone::new(-1.0, 4.0).unwrap()).unwrap();
        assert_eq!(t.gamma[(1, 1)], -25.0 / 16.0);
        assert_eq!(t.gamma[(2, 2)], -4.0);
        assert_eq!(t.gamma[(2, 1)], -1.5);
        assert_eq!(t.gamma[(1, 2)], -1.5);
        assert!(t.gamma.row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn conic_lmi_hand_example() {
        let t = build_transform(&scalar_plant(1.0), 1, &Cone::new(-1.0, 1.0).unwrap()).unwrap();
        let k = KMatrix::from_blocks(&s(1.0), &s(1.0), &s(-1.0)).unwrap();
        let m = conic_lmi_matrix(&t, &k, &s(1.0)).unwrap();
        let expected = Mat::from_row_slice(3, 3, &[-2.0, 1.0, 1.0, 1.0, -1.0, 0.0, 1.0, 0.0, -1.0]);
        assert_eq!(m, expected);
        let ctrl = k.to_controller().as_state_space();
        let direct = csl_matrix(&ctrl, &Cone::new(-1.0, 1.0).unwrap(), CslForm::Two, &s(1.0)).unwrap();
        assert_eq!(m, direct);
    }

    #[test]
    fn zero_controller_gives_gamma_and_open_loop() {
        let t = build_transform(&scalar_plant(1.0), 2, &Cone::new(-0.5, 2.0).unwrap()).unwrap();
        let k = KMatrix::zero(1, 2);
        assert_eq!(conic_lmi_matrix(&t, &k, &Mat::identity(2, 2)).unwrap(), t.gamma);
        let cl = assemble_closed_loop(&t, &k).unwrap();
        assert_eq!((cl.a, cl.b, cl.c), (t.a_t.clone(), t.b_t.clone(), t.c_t.clone()));
    }

    #[test]
    fn closed_loop_matches_block_formula() {
        let plant = Plant::new_unchecked(
            s(-0.4),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            s(1.5),
            Mat::from_row_slice(2, 1, &[1.0, 0.0]),
            s(0.8),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        let ctrl = Controller::new(s(-2.0), s(0.7), s(0.3)).unwrap();
        let t = build_transform(&plant, 1, &Cone::new(-1.0, 1.0).unwrap()).unwrap();
        let a = assemble_closed_loop(&t, &KMatrix::from_controller(&ctrl)).unwrap();
        let b = close_loop(&plant, &ctrl).unwrap();
        assert_eq!(a, b);
        let cost = true_cost(&t, &KMatrix::from_controller(&ctrl)).unwrap();
        assert!((cost - crate::lti::h2_norm_sq(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn destabilizing_controller_has_infinite_cost() {
        let t = build_transform(&scalar_plant(1.0), 1, &Cone::new(-1.0, 1.0).unwrap()).unwrap();
        let k = KMatrix::from_blocks(&s(-5.0), &s(1.0), &s(-1.0)).unwrap();
        assert_eq!(true_cost(&t, &k).unwrap(), f64::INFINITY);
        // idle controller with an unstable Â is invisible to the cost
        let idle = KMatrix::from_blocks(&s(0.0), &s(0.0), &s(3.0)).unwrap();
        assert!((true_cost(&t, &idle).unwrap() - 0.5).abs() < 1e-12);
    }
}
