//! Seeded property checks shared by the proptest suites and the acceptance
//! run. Each returns `Err` with a short reason when the property fails.

use conic_synth::conic::{csl_report, estimate_symmetric_cone, frequency_cone_oracle, Cone, CslForm, FrequencyGrid};
use conic_synth::linalg::{blocks, he, max_abs, min_sym_eig, spectral_abscissa, Mat};
use conic_synth::lti::{close_loop, h2_norm_sq, is_hurwitz, lyapunov, solve_lyapunov, solve_riccati, Controller, Plant};
use conic_synth::synthesis::{assemble_closed_loop, build_transform, conic_lmi_matrix, true_cost, KMatrix};
use rand::Rng;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn lyapunov_residual(seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let n = rng.gen_range(1..=6);
    let a = super::hurwitz(&mut rng, n);
    let w = super::psd(&mut rng, n);
    let x = lyapunov(&a, &w).map_err(|e| e.to_string())?.x;
    ensure!((&x - x.transpose()).norm() == 0.0, "solution not symmetric");
    let res = (a.transpose() * &x + &x * &a + &w).norm();
    ensure!(res <= 1e-8 * (a.norm() * x.norm() + w.norm()), "residual {res}");
    ensure!(min_sym_eig(&x) >= -1e-10 * x.norm(), "solution not PSD");
    Ok(())
}

pub fn riccati_stabilizing(seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let n = rng.gen_range(1..=5);
    let m = rng.gen_range(1..=2);
    let a = super::uniform(&mut rng, n, n) * 2.0;
    let b = super::uniform(&mut rng, n, m);
    let q = super::pd(&mut rng, n);
    let r = super::pd(&mut rng, m);
    let x = solve_riccati(&a, &b, &q, &r).map_err(|e| e.to_string())?;
    let r_inv = r.clone().try_inverse().unwrap();
    let brb = &b * &r_inv * b.transpose();
    let res = a.transpose() * &x + &x * &a - &x * &brb * &x + &q;
    let scale = 1.0 + q.norm() + 2.0 * a.norm() * x.norm() + x.norm().powi(2) * brb.norm();
    ensure!(res.norm() <= 1e-7 * scale, "residual {}", res.norm());
    ensure!(min_sym_eig(&x) >= -1e-9 * (1.0 + x.norm()), "solution not PSD");
    ensure!(spectral_abscissa(&(&a - &brb * &x)).unwrap() < 0.0, "not stabilizing");
    Ok(())
}

pub fn closed_loop_stability(seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=2);
    let nc = rng.gen_range(1..=3);
    let plant = super::plant(&mut rng, n, m);
    let ctrl = super::controller(&mut rng, nc, m);
    let cl = close_loop(&plant, &ctrl).map_err(|e| e.to_string())?;
    let expected = spectral_abscissa(&cl.a).unwrap() < -1e-9;
    ensure!(is_hurwitz(&cl.a).unwrap() == expected, "stability test disagrees with eigenvalues");
    Ok(())
}

pub fn h2_against_quadrature(seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=2);
    let p = rng.gen_range(1..=2);
    let sys = super::stable_system(&mut rng, n, m, p);
    let gramian = h2_norm_sq(&sys).map_err(|e| e.to_string())?;
    let quad = super::h2_by_quadrature(&sys, 1e-6);
    ensure!((gramian - quad).abs() <= 1e-4 * quad.abs().max(1e-12), "{gramian} vs {quad}");
    Ok(())
}

/// `Q⁻¹ ⪰ 2Q0⁻¹ − Q0⁻¹QQ0⁻¹`.
pub fn inverse_overbound(seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let n = rng.gen_range(1..=5);
    let q = super::pd(&mut rng, n);
    let q0 = super::pd(&mut rng, n);
    let qi = q.clone().try_inverse().unwrap();
    let q0i = q0.clone().try_inverse().unwrap();
    let gap = &qi - (&q0i * 2.0 - &q0i * &q * &q0i);
    let gap = (&gap + gap.transpose()) * 0.5;
    let low = min_sym_eig(&gap);
    ensure!(low >= -1e-9 * (1.0 + qi.norm() + q0i.norm().powi(2) * q.norm()), "min eig {low}");
    Ok(())
}

const FORMS: [CslForm; 3] = [CslForm::One, CslForm::Two, CslForm::Three];

pub fn random_cone(rng: &mut impl Rng, sys: &conic_synth::lti::StateSpace) -> Cone {
    let g = estimate_symmetric_cone(sys).unwrap().b;
    Cone::new(-g * rng.gen_range(0.05..2.0), g * rng.gen_range(0.05..2.0)).unwrap()
}

/// The three sector forms agree away from the boundary, and a certified
/// system passes the frequency test.
pub fn csl_forms_agree(seed: u64) -> Check {
    let mut rng = super::rng(seed);
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=2);
    let sys = super::stable_system(&mut rng, n, m, m);
    let cone = random_cone(&mut rng, &sys);
    let mut reports = Vec::new();
    for f in FORMS {
        reports.push(csl_report(&sys, &cone, f).map_err(|e| e.to_string())?);
    }
    let feasible: Vec<bool> = reports.iter().map(|r| r.certificate.is_some()).collect();
    if feasible.iter().any(|f| *f != feasible[0]) {
        // disagreement only inside the tolerance band around the boundary
        for r in &reports {
            ensure!(r.t.abs() <= 1e-6 + 100.0 * r.tolerance, "forms disagree: {reports:?}");
        }
    }
    if feasible[0] {
        let freq = frequency_cone_oracle(&sys, &cone, &FrequencyGrid::default()).map_err(|e| e.to_string())?;
        ensure!(freq.passes, "certified but frequency test fails: {freq:?}");
    }
    Ok(())
}

/// Random plant, controller, certificate and cone for the transform checks.
pub struct Instance {
    pub plant: Plant,
    pub ctrl: Controller,
    pub p: Mat,
    pub cone: Cone,
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = super::rng(seed);
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=2);
    let nc = rng.gen_range(1..=2);
    let plant = super::plant(&mut rng, n, m);
    let ctrl = super::controller(&mut rng, nc, m);
    let p = super::pd(&mut rng, nc);
    let cone = Cone::new(-rng.gen_range(0.1..5.0), rng.gen_range(0.1..5.0)).unwrap();
    Instance { plant, ctrl, p, cone }
}

/// The controller sector matrix written out block by block.
fn direct_sector_matrix(c: &Controller, p: &Mat, a: f64, b: f64) -> Mat {
    let i = Mat::identity(c.channels(), c.channels());
    let pb = p * &c.bhat;
    blocks(&[
        &[&he(&(p * &c.ahat)), &pb, &c.chat.transpose()],
        &[&pb.transpose(), &(&i * (-(a - b).powi(2) / (4.0 * b))), &(&i * (-(a + b) / 2.0))],
        &[&c.chat, &(&i * (-(a + b) / 2.0)), &(&i * -b)],
    ])
}

pub fn sector_matrix_identity(seed: u64) -> Check {
    let x = instance(seed);
    let t = build_transform(&x.plant, x.ctrl.order(), &x.cone).map_err(|e| e.to_string())?;
    let got = conic_lmi_matrix(&t, &KMatrix::from_controller(&x.ctrl), &x.p).map_err(|e| e.to_string())?;
    let gap = max_abs(&(got - direct_sector_matrix(&x.ctrl, &x.p, x.cone.a, x.cone.b)));
    ensure!(gap <= 1e-12, "sector matrix differs by {gap:e}");
    Ok(())
}

pub fn closed_loop_identity(seed: u64) -> Check {
    let x = instance(seed);
    let t = build_transform(&x.plant, x.ctrl.order(), &x.cone).map_err(|e| e.to_string())?;
    let k = KMatrix::from_controller(&x.ctrl);
    let a = assemble_closed_loop(&t, &k).map_err(|e| e.to_string())?;
    let b = close_loop(&x.plant, &x.ctrl).map_err(|e| e.to_string())?;
    ensure!(a.a == b.a && a.b == b.b && a.c == b.c, "closed loops differ");
    ensure!(k.to_controller() == x.ctrl, "controller does not round-trip");
    Ok(())
}

/// At the exact Gramian the cross term of the cost vanishes and the cost is
/// the closed-loop H2 norm. Unstable loops pass vacuously.
pub fn cost_identity(seed: u64) -> Check {
    let x = instance(seed);
    let t = build_transform(&x.plant, x.ctrl.order(), &x.cone).map_err(|e| e.to_string())?;
    let k = KMatrix::from_controller(&x.ctrl);
    let cl = assemble_closed_loop(&t, &k).map_err(|e| e.to_string())?;
    if !is_hurwitz(&cl.a).unwrap() {
        return Ok(());
    }
    let q = solve_lyapunov(&cl.a, &(cl.c.transpose() * &cl.c)).map_err(|e| e.to_string())?;
    let eks = &t.e * &k.k * &t.s;
    let cross = he(&(t.b_t.transpose() * &q * &eks)).trace();
    ensure!(cross.abs() <= 1e-12 * (1.0 + q.norm() * t.b_t.norm() * eks.norm()), "cross term {cross:e}");
    let direct = h2_norm_sq(&cl).map_err(|e| e.to_string())?;
    let j = true_cost(&t, &k).map_err(|e| e.to_string())?;
    ensure!((j - direct).abs() <= 1e-9 * (1.0 + direct), "cost {j} vs H2 {direct}");
    Ok(())
}
