//! Continuous algebraic Riccati equation `AᵀX + XA − XBR⁻¹BᵀX + Q = 0`.
//!
//! The stabilizing solution is read off the stable invariant subspace of the
//! Hamiltonian, computed with the scaled matrix-sign iteration, and then
//! polished with one Newton (Kleinman) step.

use crate::error::{Error, Result};
use crate::linalg::{blocks, complex_eigenvalues, ensure_finite, ensure_square, spectral_abscissa, sym, Mat};

use super::lyapunov::solve_lyapunov;
use super::HURWITZ_TOL;

pub const RESIDUAL_TOL: f64 = 1e-7;
const SIGN_MAX_ITERS: usize = 100;
const SIGN_TOL: f64 = 1e-13;

pub fn solve_riccati(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let n = ensure_square(a)?;
    let m = ensure_square(r)?;
    if b.nrows() != n || b.ncols() != m || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension(format!(
            "Riccati data: A {n}x{n}, B {}x{}, Q {}x{}, R {m}x{m}",
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    for (mat, what) in [(a, "A"), (b, "B"), (q, "Q"), (r, "R")] {
        ensure_finite(mat, what)?;
    }
    let r_chol = sym(r)
        .cholesky()
        .ok_or_else(|| Error::NoStabilizingSolution("R is not positive definite".into()))?;
    let g = sym(&(b * r_chol.solve(&b.transpose())));
    let q = sym(q);

    let h = blocks(&[&[a, &(-&g)], &[&(-&q), &(-a.transpose())]]);
    let h_scale = 1.0 + h.norm();
    let closest = complex_eigenvalues(&h)?
        .iter()
        .map(|z| z.re.abs())
        .fold(f64::INFINITY, f64::min);
    if closest <= 1e-10 * h_scale {
        return Err(Error::NoStabilizingSolution(format!(
            "Hamiltonian has eigenvalues on the imaginary axis (|Re| = {closest:.3e})"
        )));
    }

    let w = matrix_sign(&h)?;
    let eye = Mat::identity(n, n);
    let w11 = w.view((0, 0), (n, n)).into_owned();
    let w12 = w.view((0, n), (n, n)).into_owned();
    let w21 = w.view((n, 0), (n, n)).into_owned();
    let w22 = w.view((n, n), (n, n)).into_owned();
    // (W + I) [I; X] = 0  =>  [W12; W22 + I] X = -[W11 + I; W21]
    let lhs = blocks(&[&[&w12], &[&(w22 + &eye)]]);
    let rhs = -blocks(&[&[&(w11 + &eye)], &[&w21]]);
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::NoStabilizingSolution(e.to_string()))?;
    let mut x = sym(&x);

    let closed = a - &g * &x;
    if spectral_abscissa(&closed)? >= -HURWITZ_TOL {
        return Err(Error::NoStabilizingSolution(
            "invariant-subspace solution is not stabilizing".into(),
        ));
    }
    // Newton refinement, kept only if it lowers the residual.
    let w_newton = &q + &x * &g * &x;
    if let Ok(refined) = solve_lyapunov(&closed, &w_newton) {
        let refined = sym(&refined);
        if residual(a, &g, &q, &refined) <= residual(a, &g, &q, &x)
            && spectral_abscissa(&(a - &g * &refined))? < -HURWITZ_TOL
        {
            x = refined;
        }
    }

    let rel = relative_residual(a, &g, &q, &x);
    if rel > RESIDUAL_TOL {
        return Err(Error::NoStabilizingSolution(format!(
            "relative residual {rel:.3e} above {RESIDUAL_TOL:.0e}"
        )));
    }
    Ok(x)
}

fn residual(a: &Mat, g: &Mat, q: &Mat, x: &Mat) -> f64 {
    (a.transpose() * x + x * a - x * g * x + q).norm()
}

fn relative_residual(a: &Mat, g: &Mat, q: &Mat, x: &Mat) -> f64 {
    let scale = q.norm() + 2.0 * a.norm() * x.norm() + x.norm().powi(2) * g.norm();
    let r = residual(a, g, q, x);
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

/// Newton iteration for `sign(H)` with determinant scaling.
fn matrix_sign(h: &Mat) -> Result<Mat> {
    let dim = h.nrows();
    let mut z = h.clone();
    let mut scaling = true;
    for _ in 0..SIGN_MAX_ITERS {
        let lu = z.clone().lu();
        let c = if scaling {
            let log_det: f64 = lu.u().diagonal().iter().map(|d| d.abs().ln()).sum();
            (-log_det / dim as f64).exp()
        } else {
            1.0
        };
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::NoStabilizingSolution("singular iterate in sign iteration".into()))?;
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if change <= 1e-2 * size {
            scaling = false;
        }
        if change <= SIGN_TOL * size {
            return Ok(z);
        }
    }
    Err(Error::NoStabilizingSolution(
        "matrix sign iteration did not converge".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn scalar_examples() {
        let x = solve_riccati(&s(0.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-12);
        let x = solve_riccati(&s(-1.0), &s(1.0), &s(0.0), &s(1.0)).unwrap();
        assert!(x[(0, 0)].abs() < 1e-12);
        let x = solve_riccati(&s(1.0), &s(1.0), &s(0.0), &s(1.0)).unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn double_integrator_lqr() {
        // known solution for A = [[0,1],[0,0]], B = [0;1], Q = I, R = 1
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let x = solve_riccati(&a, &b, &Mat::identity(2, 2), &s(1.0)).unwrap();
        let r3 = 3f64.sqrt();
        let expected = Mat::from_row_slice(2, 2, &[r3, 1.0, 1.0, r3]);
        assert!((x - expected).norm() < 1e-10);
    }

    #[test]
    fn imaginary_axis_hamiltonian_fails() {
        // A = 0, B = 0: the Hamiltonian is zero
        assert!(solve_riccati(&s(0.0), &s(0.0), &s(1.0), &s(1.0)).is_err());
    }

    #[test]
    fn indefinite_r_fails() {
        assert!(solve_riccati(&s(0.0), &s(1.0), &s(1.0), &s(-1.0)).is_err());
    }
}
