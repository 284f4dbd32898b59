#![allow(dead_code)]

pub mod checks;

use conic_synth::linalg::{hstack, spectral_abscissa, vstack, Mat};
use conic_synth::lti::{Controller, Plant, StateSpace};
use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random matrix shifted so its spectral abscissa is in `[-1.5, -0.1]`.
pub fn hurwitz(rng: &mut impl Rng, n: usize) -> Mat {
    let a = uniform(rng, n, n) * 2.0;
    let target = -rng.gen_range(0.1..1.5);
    let shift = spectral_abscissa(&a).unwrap() - target;
    a - Mat::identity(n, n) * shift
}

pub fn psd(rng: &mut impl Rng, n: usize) -> Mat {
    let f = uniform(rng, n, n);
    &f * f.transpose()
}

pub fn pd(rng: &mut impl Rng, n: usize) -> Mat {
    psd(rng, n) + Mat::identity(n, n) * rng.gen_range(0.05..1.0)
}

pub fn stable_system(rng: &mut impl Rng, n: usize, m: usize, p: usize) -> StateSpace {
    StateSpace::strictly_proper(hurwitz(rng, n), uniform(rng, n, m), uniform(rng, p, n)).unwrap()
}

/// Random plant with `D21 B1ᵀ = 0`: disturbances split into process and
/// measurement noise.
pub fn plant(rng: &mut impl Rng, n: usize, m: usize) -> Plant {
    let pw = rng.gen_range(1..=2);
    let q = rng.gen_range(1..=2);
    let b1 = hstack(&[&uniform(rng, n, pw), &Mat::zeros(n, m)]);
    let d21 = hstack(&[&Mat::zeros(m, pw), &Mat::identity(m, m)]);
    let c1 = vstack(&[&uniform(rng, q, n), &Mat::zeros(m, n)]);
    let d12 = vstack(&[&Mat::zeros(q, m), &Mat::identity(m, m)]);
    Plant::new_unchecked(uniform(rng, n, n), b1, uniform(rng, n, m), c1, uniform(rng, m, n), d12, d21)
        .unwrap()
}

pub fn controller(rng: &mut impl Rng, nc: usize, m: usize) -> Controller {
    Controller::new(uniform(rng, nc, nc), uniform(rng, nc, m), uniform(rng, m, nc)).unwrap()
}

/// `(1/π)∫₀^∞ tr(GᴴG) dω` by adaptive Simpson on `ω = tan θ`.
pub fn h2_by_quadrature(sys: &StateSpace, rel_tol: f64) -> f64 {
    let f = |theta: f64| {
        if theta >= std::f64::consts::FRAC_PI_2 {
            return (&sys.c * &sys.b).norm_squared();
        }
        let w = theta.tan();
        let g = sys.transfer_at(Complex::new(0.0, w)).unwrap();
        let tr: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        tr * (1.0 + w * w)
    };
    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            adapt(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + adapt(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    // panels first so narrow resonances are not skipped by the coarse estimate
    let panels = 256;
    let h = std::f64::consts::FRAC_PI_2 / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        let whole = simpson(a, b, fa, fm, fb);
        total += adapt(&f, a, b, fa, fm, fb, whole, rel_tol * whole.abs().max(1e-14), 30);
    }
    total / std::f64::consts::PI
}
