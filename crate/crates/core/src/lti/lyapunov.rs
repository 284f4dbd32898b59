//! Continuous Lyapunov equation `AᵀX + XA + W = 0` by real-Schur
//! back-substitution.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_square, real_schur, spectral_abscissa, sym, Mat};

use super::HURWITZ_TOL;

/// Residual bound factor: `‖AᵀX + XA + W‖_F ≤ RESIDUAL_FACTOR (‖A‖_F‖X‖_F + ‖W‖_F)`.
pub const RESIDUAL_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub x: Mat,
    /// `‖AᵀX + XA + W‖_F / (‖A‖_F‖X‖_F + ‖W‖_F)`.
    pub relative_residual: f64,
    /// `min |λi + λj|` over the spectrum of `A`; small values mean a
    /// nearly singular Sylvester operator.
    pub separation: f64,
    pub warning: Option<String>,
}

impl LyapunovSolution {
    pub fn is_ill_conditioned(&self) -> bool {
        self.warning.is_some()
    }
}

/// Solve `AᵀX + XA + W = 0` for Hurwitz `A`.
pub fn solve_lyapunov(a: &Mat, w: &Mat) -> Result<Mat> {
    Ok(lyapunov(a, w)?.x)
}

/// Same as [`solve_lyapunov`] but also reports residual and conditioning.
pub fn lyapunov(a: &Mat, w: &Mat) -> Result<LyapunovSolution> {
    let n = ensure_square(a)?;
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::Dimension(format!(
            "W is {}x{}, expected {n}x{n}",
            w.nrows(),
            w.ncols()
        )));
    }
    ensure_finite(a, "A")?;
    ensure_finite(w, "W")?;
    if n == 0 {
        return Ok(LyapunovSolution {
            x: Mat::zeros(0, 0),
            relative_residual: 0.0,
            separation: f64::INFINITY,
            warning: None,
        });
    }
    let abscissa = spectral_abscissa(a)?;
    if abscissa >= -HURWITZ_TOL {
        return Err(Error::NotHurwitz { max_real: abscissa });
    }

    let schur = real_schur(a)?;
    let separation = {
        let eig: Vec<_> = schur.complex_eigenvalues().iter().copied().collect();
        let mut sep = f64::INFINITY;
        for li in &eig {
            for lj in &eig {
                sep = sep.min((li + lj).norm());
            }
        }
        sep
    };
    let (u, t) = schur.unpack();
    let c = u.transpose() * w * &u;
    let y = solve_quasi_triangular(&t, &(-c))?;
    let x = sym(&(&u * y * u.transpose()));

    let residual = (a.transpose() * &x + &x * a + w).norm();
    let denom = a.norm() * x.norm() + w.norm();
    let relative_residual = if denom > 0.0 { residual / denom } else { residual };
    let warning = if relative_residual > RESIDUAL_FACTOR {
        Some(format!(
            "Lyapunov residual {relative_residual:.3e} exceeds {RESIDUAL_FACTOR:.0e}"
        ))
    } else if separation < 1e-10 * (1.0 + a.norm()) {
        Some(format!("eigenvalue separation {separation:.3e} is tiny"))
    } else {
        None
    };
    Ok(LyapunovSolution {
        x,
        relative_residual,
        separation,
        warning,
    })
}

/// Diagonal block partition of a quasi-upper-triangular matrix: (start, size).
fn diagonal_blocks(t: &Mat) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

/// Solves `TᵀY + YT = C` for quasi-upper-triangular `T`, block by block.
fn solve_quasi_triangular(t: &Mat, c: &Mat) -> Result<Mat> {
    let n = t.nrows();
    let parts = diagonal_blocks(t);
    let mut y = Mat::zeros(n, n);
    for &(rk, sk) in &parts {
        for &(cl, sl) in &parts {
            let mut rhs: Mat = c.view((rk, cl), (sk, sl)).into_owned();
            if rk > 0 {
                rhs -= t.view((0, rk), (rk, sk)).transpose() * y.view((0, cl), (rk, sl));
            }
            if cl > 0 {
                rhs -= y.view((rk, 0), (sk, cl)) * t.view((0, cl), (cl, sl));
            }
            let tkk = t.view((rk, rk), (sk, sk)).into_owned();
            let tll = t.view((cl, cl), (sl, sl)).into_owned();
            let block = small_sylvester(&tkk, &tll, &rhs)?;
            y.view_mut((rk, cl), (sk, sl)).copy_from(&block);
        }
    }
    Ok(y)
}

/// `TkkᵀY + Y Tll = R` for blocks of size at most 2, via the Kronecker form.
fn small_sylvester(tkk: &Mat, tll: &Mat, r: &Mat) -> Result<Mat> {
    let (sk, sl) = (tkk.nrows(), tll.nrows());
    let dim = sk * sl;
    let mut op = DMatrix::<f64>::zeros(dim, dim);
    // vec is column-major: index(i, j) = i + j*sk
    for j in 0..sl {
        for i in 0..sk {
            let row = i + j * sk;
            for p in 0..sk {
                op[(row, p + j * sk)] += tkk[(p, i)];
            }
            for q in 0..sl {
                op[(row, i + q * sk)] += tll[(q, j)];
            }
        }
    }
    let rhs = DMatrix::from_column_slice(dim, 1, r.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("singular Sylvester block (λi + λj = 0)".into()))?;
    Ok(DMatrix::from_column_slice(sk, sl, sol.as_slice()))
}
