//! Solver-agnostic semidefinite programs.
//!
//! A program owns a flat vector of scalar unknowns, grouped into named
//! variables. Constraints are affine matrix expressions tagged PSD, NSD or
//! zero; the objective is linear plus an optional diagonal quadratic term.

mod clarabel_backend;
mod expr;
mod text;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use clarabel_backend::ClarabelBackend;
pub use expr::{AffExpr, Var, VarShape};
pub use text::{parse_program, write_program};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, max_sym_eig, min_sym_eig, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    /// `expr ⪰ margin·I`
    Psd,
    /// `expr ⪯ -margin·I`
    Nsd,
    /// every entry zero
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub expr: AffExpr,
    pub sense: Sense,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarInfo {
    pub name: String,
    pub var: Var,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Objective {
    pub constant: f64,
    pub linear: BTreeMap<usize, f64>,
    /// weight `w_k` of `w_k x_k²`
    pub quadratic: BTreeMap<usize, f64>,
}

impl Objective {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant
            + self.linear.iter().map(|(k, c)| c * x[*k]).sum::<f64>()
            + self.quadratic.iter().map(|(k, w)| w * x[*k] * x[*k]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdpProgram {
    vars: Vec<VarInfo>,
    n_scalars: usize,
    constraints: Vec<Constraint>,
    objective: Objective,
}

impl SdpProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: &str, shape: VarShape) -> Var {
        let var = Var {
            id: self.vars.len(),
            offset: self.n_scalars,
            shape,
        };
        self.n_scalars += shape.len();
        self.vars.push(VarInfo {
            name: name.split_whitespace().collect::<Vec<_>>().join("_"),
            var,
        });
        var
    }

    pub fn scalar(&mut self, name: &str) -> Var {
        self.add_var(name, VarShape::Scalar)
    }

    pub fn full(&mut self, name: &str, rows: usize, cols: usize) -> Var {
        self.add_var(name, VarShape::Full { rows, cols })
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> Var {
        self.add_var(name, VarShape::Symmetric { n })
    }

    pub fn num_scalars(&self) -> usize {
        self.n_scalars
    }

    pub fn vars(&self) -> &[VarInfo] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    fn check_expr(&self, expr: &AffExpr) -> Result<()> {
        if let Some((k, _)) = expr.terms().last() {
            if k >= self.n_scalars {
                return Err(Error::Dimension(format!(
                    "expression references scalar {k}, program has {}",
                    self.n_scalars
                )));
            }
        }
        if expr.constant_part().iter().any(|v| !v.is_finite())
            || expr.terms().any(|(_, c)| c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("constraint expression"));
        }
        Ok(())
    }

    /// Add `expr ⪰ margin·I`, `expr ⪯ -margin·I` or `expr = 0`.
    pub fn constrain(&mut self, name: &str, expr: AffExpr, sense: Sense, margin: f64) -> Result<()> {
        self.check_expr(&expr)?;
        let expr = match sense {
            Sense::Zero => expr,
            Sense::Psd | Sense::Nsd => {
                let scale = 1.0
                    + expr
                        .terms()
                        .map(|(_, c)| max_abs(c))
                        .fold(max_abs(expr.constant_part()), f64::max);
                let asym = expr.asymmetry();
                if asym > 1e-9 * scale {
                    return Err(Error::Dimension(format!(
                        "constraint {name}: matrix expression is not symmetric (deviation {asym:.3e})"
                    )));
                }
                expr.symmetrize()
            }
        };
        self.constraints.push(Constraint {
            name: name.split_whitespace().collect::<Vec<_>>().join("_"),
            expr: expr.compress(),
            sense,
            margin,
        });
        Ok(())
    }

    pub fn psd(&mut self, name: &str, expr: AffExpr) -> Result<()> {
        self.constrain(name, expr, Sense::Psd, 0.0)
    }

    pub fn nsd(&mut self, name: &str, expr: AffExpr) -> Result<()> {
        self.constrain(name, expr, Sense::Nsd, 0.0)
    }

    pub fn zero(&mut self, name: &str, expr: AffExpr) -> Result<()> {
        self.constrain(name, expr, Sense::Zero, 0.0)
    }

    /// Add a 1×1 affine expression to the objective.
    pub fn minimize(&mut self, expr: &AffExpr) -> Result<()> {
        if expr.shape() != (1, 1) {
            return Err(Error::Dimension("objective term must be 1x1".into()));
        }
        self.check_expr(expr)?;
        self.objective.constant += expr.constant_part()[(0, 0)];
        for (k, c) in expr.terms() {
            *self.objective.linear.entry(k).or_insert(0.0) += c[(0, 0)];
        }
        Ok(())
    }

    /// Add `tr(expr)` to the objective.
    pub fn minimize_trace(&mut self, expr: &AffExpr) -> Result<()> {
        self.minimize(&expr.trace())
    }

    /// Add `weight·‖v‖²_F` to the objective.
    pub fn add_frobenius_sq(&mut self, v: &Var, weight: f64) {
        let symmetric = matches!(v.shape, VarShape::Symmetric { .. });
        for (k, (i, j)) in v.shape.entries().into_iter().enumerate() {
            let w = if symmetric && i != j { 2.0 * weight } else { weight };
            *self.objective.quadratic.entry(v.offset + k).or_insert(0.0) += w;
        }
    }

    /// Worst constraint violation at `x`, relative to each constraint's scale.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| constraint_violation(c, x))
            .fold(0.0, f64::max)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }
}

pub(crate) fn constraint_violation(c: &Constraint, x: &[f64]) -> f64 {
    let val = c.expr.eval(x);
    let scale = 1.0 + max_abs(c.expr.constant_part());
    let raw = match c.sense {
        Sense::Psd => (c.margin - min_sym_eig(&val)).max(0.0),
        Sense::Nsd => (max_sym_eig(&val) + c.margin).max(0.0),
        Sense::Zero => max_abs(&val),
    };
    if val.is_empty() {
        0.0
    } else {
        raw / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Accepted relative constraint violation of an optimal point.
    pub feas_tol: f64,
    /// Relative duality gap target.
    pub rel_tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: 1e-7,
            rel_tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub max_violation: f64,
    pub iterations: u32,
    pub diagnostics: String,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    pub fn value(&self, v: &Var) -> Mat {
        v.value_from(&self.x)
    }

    pub fn scalar(&self, v: &Var) -> f64 {
        self.x[v.offset]
    }

    pub fn eval(&self, e: &AffExpr) -> Mat {
        e.eval(&self.x)
    }
}

/// Interface every solver backend implements. Failures come back as a
/// status, never as a panic.
pub trait SdpBackend {
    fn solve(&self, program: &SdpProgram, opts: &SolveOptions) -> SdpSolution;
}

/// Solve with the default backend.
pub fn solve(program: &SdpProgram, opts: &SolveOptions) -> SdpSolution {
    ClarabelBackend.solve(program, opts)
}
