//! Interior-point backend built on Clarabel.
//!
//! Clarabel solves `min ½xᵀPx + qᵀx  s.t.  Ax + s = b, s ∈ K`; PSD cones use
//! the upper triangle column by column with off-diagonals scaled by √2.

use std::panic::{catch_unwind, AssertUnwindSafe};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{Constraint, SdpBackend, SdpProgram, SdpSolution, SdpStatus, Sense, SolveOptions};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

struct Assembled {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

fn svec_positions(n: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            out.push((i, j, if i == j { 1.0 } else { std::f64::consts::SQRT_2 }));
        }
    }
    out
}

fn assemble(program: &SdpProgram) -> Assembled {
    let mut asm = Assembled {
        rows: Vec::new(),
        cols: Vec::new(),
        vals: Vec::new(),
        b: Vec::new(),
        cones: Vec::new(),
    };
    for c in program.constraints() {
        append(&mut asm, c);
    }
    asm
}

fn append(asm: &mut Assembled, c: &Constraint) {
    let (r, cdim) = c.expr.shape();
    if r == 0 || cdim == 0 {
        return;
    }
    let base = asm.b.len();
    match c.sense {
        Sense::Zero => {
            // Ax + s = b with s = 0:  A = vec(C_k), b = -vec(C0)
            let mut idx = 0;
            for j in 0..cdim {
                for i in 0..r {
                    asm.b.push(-c.expr.constant_part()[(i, j)]);
                    for (k, m) in c.expr.terms() {
                        let v = m[(i, j)];
                        if v != 0.0 {
                            asm.rows.push(base + idx);
                            asm.cols.push(k);
                            asm.vals.push(v);
                        }
                    }
                    idx += 1;
                }
            }
            asm.cones.push(SupportedConeT::ZeroConeT(r * cdim));
        }
        Sense::Psd | Sense::Nsd => {
            // s = sign·svec(expr) - margin·svec(I) = b - Ax
            let sign = if c.sense == Sense::Psd { 1.0 } else { -1.0 };
            let n = r;
            let c0: Mat = c.expr.constant_part() * sign - Mat::identity(n, n) * c.margin;
            for (idx, (i, j, s)) in svec_positions(n).into_iter().enumerate() {
                asm.b.push(s * c0[(i, j)]);
                for (k, m) in c.expr.terms() {
                    let v = m[(i, j)];
                    if v != 0.0 {
                        asm.rows.push(base + idx);
                        asm.cols.push(k);
                        asm.vals.push(-sign * s * v);
                    }
                }
            }
            if n == 1 {
                asm.cones.push(SupportedConeT::NonnegativeConeT(1));
            } else {
                asm.cones.push(SupportedConeT::PSDTriangleConeT(n));
            }
        }
    }
}

fn map_status(status: SolverStatus) -> SdpStatus {
    match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SdpStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SdpStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SdpStatus::Unbounded,
        _ => SdpStatus::NumericalFailure,
    }
}

impl SdpBackend for ClarabelBackend {
    fn solve(&self, program: &SdpProgram, opts: &SolveOptions) -> SdpSolution {
        let n = program.num_scalars();
        let failure = |msg: String| SdpSolution {
            status: SdpStatus::NumericalFailure,
            objective: f64::NAN,
            x: vec![0.0; n],
            max_violation: f64::INFINITY,
            iterations: 0,
            diagnostics: msg,
        };
        let asm = assemble(program);
        let m = asm.b.len();

        let obj = program.objective();
        let mut q = vec![0.0; n];
        for (k, c) in &obj.linear {
            q[*k] += c;
        }
        let (pi, pv): (Vec<usize>, Vec<f64>) = obj
            .quadratic
            .iter()
            .filter(|(_, w)| **w != 0.0)
            .map(|(k, w)| (*k, 2.0 * w))
            .unzip();
        let p_mat = CscMatrix::new_from_triplets(n, n, pi.clone(), pi, pv);
        let a_mat = CscMatrix::new_from_triplets(m, n, asm.rows, asm.cols, asm.vals);

        let tight = opts.rel_tol.min(1e-8);
        let settings = match DefaultSettingsBuilder::default()
            .verbose(opts.verbose)
            .max_iter(opts.max_iter)
            .tol_gap_rel(opts.rel_tol)
            .tol_gap_abs(tight)
            .tol_feas(tight)
            .max_threads(1)
            .build()
        {
            Ok(s) => s,
            Err(e) => return failure(format!("invalid solver settings: {e}")),
        };

        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let mut solver =
                DefaultSolver::new(&p_mat, &q, &a_mat, &asm.b, &asm.cones, settings)
                    .map_err(|e| format!("solver setup failed: {e:?}"))?;
            solver.solve();
            let sol = &solver.solution;
            Ok::<_, String>((sol.status, sol.x.clone(), sol.iterations))
        }));
        let (raw_status, x, iterations) = match outcome {
            Ok(Ok(v)) => v,
            Ok(Err(msg)) => return failure(msg),
            Err(_) => return failure("solver panicked".into()),
        };

        let mut status = map_status(raw_status);
        let x: Vec<f64> = if x.len() == n { x } else { vec![0.0; n] };
        let finite = x.iter().all(|v| v.is_finite());
        let max_violation = if finite {
            program.max_violation(&x)
        } else {
            f64::INFINITY
        };
        if status == SdpStatus::Optimal && max_violation > opts.feas_tol {
            status = SdpStatus::NumericalFailure;
        }
        let objective = if finite { program.evaluate(&x) } else { f64::NAN };
        SdpSolution {
            status,
            objective,
            x,
            max_violation,
            iterations,
            diagnostics: format!("{raw_status:?}"),
        }
    }
}
