//! Affine matrix expressions `C0 + Σ x_k C_k` over the scalar decision
//! variables of a program.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use crate::linalg::Mat;

/// Shape of a declared decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    Scalar,
    Full { rows: usize, cols: usize },
    /// Stored as its upper triangle, column by column.
    Symmetric { n: usize },
}

impl VarShape {
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            VarShape::Scalar => (1, 1),
            VarShape::Full { rows, cols } => (rows, cols),
            VarShape::Symmetric { n } => (n, n),
        }
    }

    /// Number of scalar unknowns.
    pub fn len(&self) -> usize {
        match *self {
            VarShape::Scalar => 1,
            VarShape::Full { rows, cols } => rows * cols,
            VarShape::Symmetric { n } => n * (n + 1) / 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Matrix positions (and their multiplicity in a Frobenius norm) of each
    /// scalar, in storage order.
    pub(crate) fn entries(&self) -> Vec<(usize, usize)> {
        match *self {
            VarShape::Scalar => vec![(0, 0)],
            VarShape::Full { rows, cols } => {
                let mut out = Vec::with_capacity(rows * cols);
                for j in 0..cols {
                    for i in 0..rows {
                        out.push((i, j));
                    }
                }
                out
            }
            VarShape::Symmetric { n } => {
                let mut out = Vec::with_capacity(n * (n + 1) / 2);
                for j in 0..n {
                    for i in 0..=j {
                        out.push((i, j));
                    }
                }
                out
            }
        }
    }
}

/// Handle to a variable declared in an [`SdpProgram`](super::SdpProgram).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    pub(crate) id: usize,
    pub(crate) offset: usize,
    pub(crate) shape: VarShape,
}

impl Var {
    pub fn shape(&self) -> VarShape {
        self.shape
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// The variable as a matrix expression.
    pub fn expr(&self) -> AffExpr {
        let (rows, cols) = self.shape.dims();
        let mut e = AffExpr::zeros(rows, cols);
        let symmetric = matches!(self.shape, VarShape::Symmetric { .. });
        for (k, (i, j)) in self.shape.entries().into_iter().enumerate() {
            let mut c = Mat::zeros(rows, cols);
            c[(i, j)] = 1.0;
            if symmetric {
                c[(j, i)] = 1.0;
            }
            e.terms.insert(self.offset + k, c);
        }
        e
    }

    /// Store a matrix value into a flat vector; inverse of [`Var::value_from`].
    pub fn write_value(&self, m: &Mat, x: &mut [f64]) {
        for (k, (i, j)) in self.shape.entries().into_iter().enumerate() {
            x[self.offset + k] = m[(i, j)];
        }
    }

    /// Rebuild the matrix value of this variable from a flat solution vector.
    pub fn value_from(&self, x: &[f64]) -> Mat {
        let (rows, cols) = self.shape.dims();
        let mut m = Mat::zeros(rows, cols);
        let symmetric = matches!(self.shape, VarShape::Symmetric { .. });
        for (k, (i, j)) in self.shape.entries().into_iter().enumerate() {
            let v = x[self.offset + k];
            m[(i, j)] = v;
            if symmetric {
                m[(j, i)] = v;
            }
        }
        m
    }
}

/// `constant + Σ_k x_k · terms[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffExpr {
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) constant: Mat,
    pub(crate) terms: BTreeMap<usize, Mat>,
}

impl AffExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        AffExpr {
            rows,
            cols,
            constant: Mat::zeros(rows, cols),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(m: Mat) -> Self {
        AffExpr {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Mat::identity(n, n))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn constant_part(&self) -> &Mat {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &Mat)> {
        self.terms.iter().map(|(k, m)| (*k, m))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    fn map(&self, rows: usize, cols: usize, f: impl Fn(&Mat) -> Mat) -> Self {
        AffExpr {
            rows,
            cols,
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(k, m)| (*k, f(m))).collect(),
        }
    }

    /// `M · self`.
    pub fn lmul(&self, m: &Mat) -> Self {
        assert_eq!(m.ncols(), self.rows, "lmul dimension mismatch");
        self.map(m.nrows(), self.cols, |c| m * c)
    }

    /// `self · M`.
    pub fn rmul(&self, m: &Mat) -> Self {
        assert_eq!(self.cols, m.nrows(), "rmul dimension mismatch");
        self.map(self.rows, m.ncols(), |c| c * m)
    }

    pub fn transpose(&self) -> Self {
        self.map(self.cols, self.rows, |c| c.transpose())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(self.rows, self.cols, |c| c * s)
    }

    /// `self + selfᵀ`.
    pub fn he(&self) -> Self {
        assert_eq!(self.rows, self.cols, "he of a non-square expression");
        self.map(self.rows, self.cols, |c| c + c.transpose())
    }

    /// `self · M` for a 1×1 expression, i.e. a scalar times a matrix.
    pub fn times_matrix(&self, m: &Mat) -> Self {
        assert_eq!(self.shape(), (1, 1), "times_matrix needs a 1x1 expression");
        self.map(m.nrows(), m.ncols(), |c| m * c[(0, 0)])
    }

    pub fn trace(&self) -> AffExpr {
        assert_eq!(self.rows, self.cols, "trace of a non-square expression");
        self.map(1, 1, |c| Mat::from_element(1, 1, c.trace()))
    }

    pub fn add_constant(&self, m: &Mat) -> Self {
        let mut out = self.clone();
        out.constant += m;
        out
    }

    /// Drop terms whose coefficients are exactly zero.
    pub fn compress(mut self) -> Self {
        self.terms.retain(|_, c| c.iter().any(|v| *v != 0.0));
        self
    }

    /// Value at the flat variable vector `x`.
    pub fn eval(&self, x: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (k, c) in &self.terms {
            let v = x[*k];
            if v != 0.0 {
                out += c * v;
            }
        }
        out
    }

    /// Largest absolute deviation from symmetry over the constant and all terms.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let dev = |m: &Mat| crate::linalg::max_abs(&(m - m.transpose()));
        self.terms
            .values()
            .map(dev)
            .fold(dev(&self.constant), f64::max)
    }

    pub(crate) fn symmetrize(&self) -> Self {
        self.map(self.rows, self.cols, crate::linalg::sym)
    }

    /// Assemble a block expression. Every grid row must contain the same
    /// number of blocks with matching heights, every grid column matching widths.
    pub fn blocks(grid: &[&[&AffExpr]]) -> Self {
        let heights: Vec<usize> = grid.iter().map(|row| row[0].rows).collect();
        let widths: Vec<usize> = grid[0].iter().map(|b| b.cols).collect();
        let rows: usize = heights.iter().sum();
        let cols: usize = widths.iter().sum();
        let mut out = AffExpr::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), widths.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, block) in row.iter().enumerate() {
                assert_eq!(
                    (block.rows, block.cols),
                    (heights[bi], widths[bj]),
                    "block ({bi},{bj}) has inconsistent size"
                );
                out.constant
                    .view_mut((r0, c0), (block.rows, block.cols))
                    .copy_from(&block.constant);
                for (k, c) in &block.terms {
                    let slot = out
                        .terms
                        .entry(*k)
                        .or_insert_with(|| Mat::zeros(rows, cols));
                    slot.view_mut((r0, c0), (block.rows, block.cols)).copy_from(c);
                }
                c0 += block.cols;
            }
            r0 += heights[bi];
        }
        out
    }
}

impl From<Mat> for AffExpr {
    fn from(m: Mat) -> Self {
        AffExpr::constant(m)
    }
}

impl From<&Mat> for AffExpr {
    fn from(m: &Mat) -> Self {
        AffExpr::constant(m.clone())
    }
}

impl Add<&AffExpr> for &AffExpr {
    type Output = AffExpr;
    fn add(self, rhs: &AffExpr) -> AffExpr {
        assert_eq!(self.shape(), rhs.shape(), "add dimension mismatch");
        let mut out = self.clone();
        out.constant += &rhs.constant;
        for (k, c) in &rhs.terms {
            out.terms
                .entry(*k)
                .and_modify(|m| *m += c)
                .or_insert_with(|| c.clone());
        }
        out
    }
}

impl Add<AffExpr> for AffExpr {
    type Output = AffExpr;
    fn add(self, rhs: AffExpr) -> AffExpr {
        &self + &rhs
    }
}

impl Add<&Mat> for AffExpr {
    type Output = AffExpr;
    fn add(self, rhs: &Mat) -> AffExpr {
        self.add_constant(rhs)
    }
}

impl Neg for &AffExpr {
    type Output = AffExpr;
    fn neg(self) -> AffExpr {
        self.scale(-1.0)
    }
}

impl Neg for AffExpr {
    type Output = AffExpr;
    fn neg(self) -> AffExpr {
        self.scale(-1.0)
    }
}

impl Sub<&AffExpr> for &AffExpr {
    type Output = AffExpr;
    fn sub(self, rhs: &AffExpr) -> AffExpr {
        self + &(-rhs)
    }
}

impl Sub<AffExpr> for AffExpr {
    type Output = AffExpr;
    fn sub(self, rhs: AffExpr) -> AffExpr {
        &self - &rhs
    }
}

impl Mul<&AffExpr> for &Mat {
    type Output = AffExpr;
    fn mul(self, rhs: &AffExpr) -> AffExpr {
        rhs.lmul(self)
    }
}

impl Mul<&Mat> for &AffExpr {
    type Output = AffExpr;
    fn mul(self, rhs: &Mat) -> AffExpr {
        self.rmul(rhs)
    }
}

impl Mul<f64> for &AffExpr {
    type Output = AffExpr;
    fn mul(self, rhs: f64) -> AffExpr {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(offset: usize, shape: VarShape) -> Var {
        Var {
            id: 0,
            offset,
            shape,
        }
    }

    #[test]
    fn symmetric_variable_round_trips() {
        let v = var(2, VarShape::Symmetric { n: 3 });
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let m = v.value_from(&x);
        assert_eq!(m, v.expr().eval(&x));
        assert_eq!(m[(0, 1)], 3.0);
        assert_eq!(m[(1, 0)], 3.0);
        assert_eq!(m[(2, 2)], 7.0);
    }

    #[test]
    fn operations_match_dense_evaluation() {
        let v = var(0, VarShape::Full { rows: 2, cols: 2 });
        let x = [1.0, -2.0, 0.5, 3.0];
        let a = Mat::from_row_slice(3, 2, &[1.0, 2.0, 0.0, -1.0, 4.0, 1.0]);
        let xv = v.value_from(&x);
        let e = v.expr().lmul(&a).rmul(&a.transpose());
        assert!((e.eval(&x) - &a * &xv * a.transpose()).norm() < 1e-14);
        assert!((v.expr().he().eval(&x) - (&xv + xv.transpose())).norm() < 1e-14);
        assert!((v.expr().trace().eval(&x)[(0, 0)] - xv.trace()).abs() < 1e-14);
        let b = AffExpr::blocks(&[
            &[&v.expr(), &AffExpr::zeros(2, 1)],
            &[&AffExpr::identity(2), &AffExpr::zeros(2, 1)],
        ]);
        let val = b.eval(&x);
        assert_eq!(val.view((0, 0), (2, 2)), xv);
        assert_eq!(val[(2, 0)], 1.0);
    }
}
