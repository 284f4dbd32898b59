//! Small dense helpers shared by the solvers.

use nalgebra::{Complex, DMatrix, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

pub(crate) const SCHUR_EPS: f64 = 1e-15;
pub(crate) const SCHUR_MAX_ITERS: usize = 10_000;

/// `M + Mᵀ`.
pub fn he(m: &Mat) -> Mat {
    m + m.transpose()
}

/// `(M + Mᵀ)/2`.
pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn ensure_square(m: &Mat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn ensure_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn hstack(parts: &[&Mat]) -> Mat {
    let rows = parts.first().map_or(0, |m| m.nrows());
    let cols = parts.iter().map(|m| m.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), (rows, p.ncols())).copy_from(*p);
        c += p.ncols();
    }
    out
}

pub fn vstack(parts: &[&Mat]) -> Mat {
    let cols = parts.first().map_or(0, |m| m.ncols());
    let rows = parts.iter().map(|m| m.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (p.nrows(), cols)).copy_from(*p);
        r += p.nrows();
    }
    out
}

/// Assemble a block matrix from a grid of blocks; every row of the grid must
/// have the same number of blocks with consistent sizes.
pub fn blocks(grid: &[&[&Mat]]) -> Mat {
    let rows: Vec<Mat> = grid.iter().map(|row| hstack(row)).collect();
    let refs: Vec<&Mat> = rows.iter().collect();
    vstack(&refs)
}

pub fn blkdiag(parts: &[&Mat]) -> Mat {
    let rows = parts.iter().map(|m| m.nrows()).sum();
    let cols = parts.iter().map(|m| m.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for p in parts {
        out.view_mut((r, c), (p.nrows(), p.ncols())).copy_from(*p);
        r += p.nrows();
        c += p.ncols();
    }
    out
}

/// Real Schur form. Matrices with exactly repeated zero blocks can stall the
/// QR sweep at the tight threshold, so a looser one is tried before failing.
pub fn real_schur(a: &Mat) -> Result<Schur<f64, nalgebra::Dyn>> {
    Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITERS)
        .or_else(|| Schur::try_new(a.clone(), 1e3 * f64::EPSILON, 10 * SCHUR_MAX_ITERS))
        .ok_or_else(|| Error::Solver("real Schur decomposition did not converge".into()))
}

pub fn complex_eigenvalues(a: &Mat) -> Result<Vec<Complex<f64>>> {
    ensure_square(a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    ensure_finite(a, "eigenvalue input")?;
    let schur = real_schur(a)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part of the spectrum (`-inf` for an empty matrix).
pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    Ok(complex_eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    SymmetricEigen::new(sym(m)).eigenvalues.iter().copied().collect()
}

pub fn max_sym_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_sym_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m).into_iter().fold(f64::INFINITY, f64::min)
}

/// Inverse of a symmetric positive definite matrix via its eigendecomposition.
/// Fails when the matrix is not PD or its condition number exceeds `max_cond`.
pub fn spd_inverse(m: &Mat, max_cond: f64, what: &'static str) -> Result<Mat> {
    let eig = SymmetricEigen::new(sym(m));
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 {
        return Err(Error::IllConditioned {
            what,
            cond: f64::INFINITY,
        });
    }
    let cond = hi / lo;
    if cond > max_cond {
        return Err(Error::IllConditioned { what, cond });
    }
    let inv_diag = Mat::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let v = &eig.eigenvectors;
    Ok(sym(&(v * inv_diag * v.transpose())))
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped).
pub fn psd_sqrt(m: &Mat) -> Mat {
    let eig = SymmetricEigen::new(sym(m));
    let d = Mat::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let v = &eig.eigenvectors;
    sym(&(v * d * v.transpose()))
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
