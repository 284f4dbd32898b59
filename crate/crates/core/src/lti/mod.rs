//! State-space containers, stability tests, Lyapunov/Riccati solvers and
//! closed-loop H2 evaluation.

mod lyapunov;
mod model;
mod riccati;

pub use lyapunov::{lyapunov, solve_lyapunov, LyapunovSolution};
pub use model::{row_major, Controller, Plant, StateSpace};
pub use riccati::solve_riccati;

use crate::error::{Error, Result};
use crate::linalg::{blocks, ensure_square, spectral_abscissa, Mat};

/// Eigenvalues must satisfy `Re λ < -HURWITZ_TOL`.
pub const HURWITZ_TOL: f64 = 1e-9;

pub fn is_hurwitz(a: &Mat) -> Result<bool> {
    ensure_square(a)?;
    Ok(spectral_abscissa(a)? < -HURWITZ_TOL)
}

/// Squared H2 norm `tr(BᵀXB)` with `X` the observability Gramian.
pub fn h2_norm_sq(sys: &StateSpace) -> Result<f64> {
    sys.validate()?;
    if sys.has_feedthrough() {
        return Err(Error::Feedthrough);
    }
    let gramian = solve_lyapunov(&sys.a, &(sys.c.transpose() * &sys.c)).map_err(|e| match e {
        Error::NotHurwitz { max_real } => Error::NotHurwitz { max_real },
        other => other,
    })?;
    Ok((sys.b.transpose() * gramian * &sys.b).trace().max(0.0))
}

/// Closed loop of `plant` with `ctrl` in the `u = -ŷ` convention:
///
/// ```text
/// Acl = [A  -B2 Ĉ; B̂ C2  Â],  Bcl = [B1; B̂ D21],  Ccl = [C1  -D12 Ĉ]
/// ```
pub fn close_loop(plant: &Plant, ctrl: &Controller) -> Result<StateSpace> {
    let (n, m, nc) = (plant.states(), plant.controls(), ctrl.order());
    if ctrl.channels() != m || ctrl.chat.nrows() != m {
        return Err(Error::Dimension(format!(
            "controller has {} channels, plant has {m}",
            ctrl.channels()
        )));
    }
    let a = blocks(&[
        &[&plant.a, &(-&plant.b2 * &ctrl.chat)],
        &[&(&ctrl.bhat * &plant.c2), &ctrl.ahat],
    ]);
    let b = blocks(&[&[&plant.b1], &[&(&ctrl.bhat * &plant.d21)]]);
    let c = blocks(&[&[&plant.c1, &(-&plant.d12 * &ctrl.chat)]]);
    let d = Mat::zeros(plant.performance_outputs(), plant.disturbances());
    debug_assert_eq!(a.nrows(), n + nc);
    Ok(StateSpace { a, b, c, d })
}
