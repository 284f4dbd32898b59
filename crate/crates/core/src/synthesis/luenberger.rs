//! Observer-based H2-optimal controller from the control and filter Riccati
//! equations.

use crate::error::{Error, Result};
use crate::linalg::{min_sym_eig, spd_inverse, sym, Mat};
use crate::lti::{solve_riccati, Controller, Plant};

fn check_pd(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() == 0 || min_sym_eig(m) <= 1e-12 * (1.0 + m.norm()) {
        return Err(Error::PlantAssumption(format!("{what} must be positive definite")));
    }
    Ok(())
}

/// Full-order H2 controller `(Â, B̂, Ĉ)` with `Â = A − B2Ĉ − B̂C2`, for `u = −Ĉx̂`.
pub fn design_h2_luenberger(plant: &Plant) -> Result<Controller> {
    let r = plant.d12.transpose() * &plant.d12;
    let v = &plant.d21 * plant.d21.transpose();
    check_pd(&r, "D12ᵀD12")?;
    check_pd(&v, "D21D21ᵀ")?;
    let r_inv = spd_inverse(&r, 1e12, "D12ᵀD12")?;
    let v_inv = spd_inverse(&v, 1e12, "D21D21ᵀ")?;
    let n = plant.states();

    let ac = &plant.a - &plant.b2 * &r_inv * plant.d12.transpose() * &plant.c1;
    let proj_c = Mat::identity(plant.performance_outputs(), plant.performance_outputs())
        - &plant.d12 * &r_inv * plant.d12.transpose();
    let qc = sym(&(plant.c1.transpose() * proj_c * &plant.c1));
    let x = solve_riccati(&ac, &plant.b2, &qc, &r).map_err(|e| match e {
        Error::NoStabilizingSolution(msg) => {
            Error::NoStabilizingSolution(format!("control Riccati (is (A, B2) stabilizable?): {msg}"))
        }
        other => other,
    })?;
    let chat = &r_inv * (plant.b2.transpose() * &x + plant.d12.transpose() * &plant.c1);

    let af = &plant.a - &plant.b1 * plant.d21.transpose() * &v_inv * &plant.c2;
    let proj_f = Mat::identity(plant.disturbances(), plant.disturbances())
        - plant.d21.transpose() * &v_inv * &plant.d21;
    let qf = sym(&(&plant.b1 * proj_f * plant.b1.transpose()));
    let y = solve_riccati(&af.transpose(), &plant.c2.transpose(), &qf, &v).map_err(|e| match e {
        Error::NoStabilizingSolution(msg) => {
            Error::NoStabilizingSolution(format!("filter Riccati (is (A, C2) detectable?): {msg}"))
        }
        other => other,
    })?;
    let bhat = (&y * plant.c2.transpose() + &plant.b1 * plant.d21.transpose()) * &v_inv;
    let ahat = &plant.a - &plant.b2 * &chat - &bhat * &plant.c2;
    debug_assert_eq!(ahat.nrows(), n);
    Controller::new(ahat, bhat, chat)
}
