//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails. The benchmark part runs the full design
//! pipeline on the mass-spring chain, which takes several minutes.

mod common;

use std::io::Write;

use common::checks::{self, Check};
use conic_synth::benchmark::{run_benchmark, BenchmarkConfig, BenchmarkOutcome, ChainOutput, ChainParams};
use conic_synth::conic::{csl_check, cst_complement, frequency_cone_oracle, Cone, CslForm, FrequencyGrid};
use conic_synth::init::init_arbitrary;
use conic_synth::lti::Controller;
use conic_synth::parallel::ExecMode;
use conic_synth::synthesis::{build_transform, run_algorithm1_on, SynthesisOptions, SynthesisResult};

const FEAS_TOL: f64 = 1e-7;

struct Line {
    id: u8,
    pass: bool,
    text: String,
}

// libtest captures the print macros; a raw handle keeps the verdicts visible
fn emit(line: &Line) {
    let verdict = if line.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {} {verdict}: {}", line.id, line.text);
}

fn line(id: u8, pass: bool, text: impl Into<String>) -> Line {
    let l = Line { id, pass, text: text.into() };
    emit(&l);
    l
}

fn design<'a>(out: &'a BenchmarkOutcome, name: &str) -> Option<&'a conic_synth::benchmark::DesignRun> {
    out.designs.iter().find(|d| d.name == name)
}

fn synthesis<'a>(out: &'a BenchmarkOutcome, name: &str) -> Option<&'a SynthesisResult> {
    design(out, name).and_then(|d| d.synthesis.as_ref())
}

fn monotone(res: &SynthesisResult) -> Result<f64, String> {
    let tol = 10.0 * FEAS_TOL;
    let mut worst_rise = f64::NEG_INFINITY;
    for w in res.history.windows(2) {
        let rise = w[1].jprime - w[0].jprime;
        worst_rise = worst_rise.max(rise);
        if rise > tol * (1.0 + w[0].jprime.abs()) {
            return Err(format!("J′ rose by {rise:.3e} at iteration {}", w[1].iter));
        }
    }
    for r in &res.history {
        if r.jtrue > r.jprime + tol * (1.0 + r.jprime.abs()) {
            return Err(format!("J {} above J′ {} at iteration {}", r.jtrue, r.jprime, r.iter));
        }
    }
    Ok(worst_rise)
}

fn criterion_1(out: &BenchmarkOutcome) -> Line {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["Cnew", "Inew"] {
        match synthesis(out, name) {
            Some(res) => match monotone(res) {
                Ok(rise) => parts.push(format!("{name} {} iterations, largest change {rise:.2e}", res.history.len() - 1)),
                Err(e) => {
                    pass = false;
                    parts.push(format!("{name}: {e}"));
                }
            },
            None if name == "Cnew" => {
                pass = false;
                parts.push("Cnew has no synthesis history".into());
            }
            None => parts.push(format!("{name} not synthesized")),
        }
    }
    line(1, pass, format!("J′ non-increasing and J ≤ J′ ({})", parts.join("; ")))
}

fn criterion_2(out: &BenchmarkOutcome) -> Line {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["ConicC", "Inew"] {
        let Some(init) = design(out, name).and_then(|d| d.init.as_ref()) else {
            if name == "ConicC" {
                pass = false;
            }
            parts.push(format!("{name}: no start point"));
            continue;
        };
        let gap = (init.jprime - init.jtrue).abs();
        let ok = gap <= 1e-6 * (1.0 + init.jtrue);
        pass &= ok;
        parts.push(format!("{name} |J′ − J| = {gap:.2e}"));
    }
    line(2, pass, format!("start points have J′ = J ({})", parts.join("; ")))
}

fn criterion_3(out: &BenchmarkOutcome) -> Line {
    let grid = FrequencyGrid::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["ConicC", "Cnew", "Inew"] {
        let Some(c) = design(out, name).and_then(|d| d.controller.as_ref()) else {
            parts.push(format!("{name} missing"));
            continue;
        };
        let sys = c.as_state_space();
        let cert = csl_check(&sys, &out.controller_cone, CslForm::One);
        let freq = frequency_cone_oracle(&sys, &out.controller_cone, &grid);
        match (cert, freq) {
            (Ok(Some(cert)), Ok(freq)) if cert.residual <= 1e-6 && freq.passes => {
                parts.push(format!("{name} residual {:.2e}", cert.residual));
            }
            (cert, freq) => {
                pass = false;
                parts.push(format!("{name} failed: {cert:?} / {freq:?}"));
            }
        }
    }
    line(3, pass, format!("synthesized controllers certified in the controller cone ({})", parts.join("; ")))
}

fn criterion_4(out: &BenchmarkOutcome) -> Line {
    let r = &out.report;
    let frac = |name: &str| r.summary(name).and_then(|s| s.unstable_fraction);
    let h2 = frac("H2-Optimal for G1").unwrap_or(0.0);
    let mut pass = r.sets.len() >= 500 && h2 >= 0.2;
    let mut parts = vec![format!("{} sets, H2 unstable on {:.1}%", r.sets.len(), 100.0 * h2)];
    for name in ["ConicC", "Cnew", "Inew"] {
        if let Some(f) = frac(name) {
            pass &= f == 0.0;
            parts.push(format!("{name} unstable on {:.1}%", 100.0 * f));
        }
    }
    line(4, pass, format!("robust stability on sampled plants ({})", parts.join(", ")))
}

fn criterion_5(out: &BenchmarkOutcome) -> Line {
    let cost = |name: &str| out.report.summary(name).map(|s| s.nominal_cost);
    let targets = [("Cnew", 72.10), ("Inew", 72.83), ("ConicC", 77.98)];
    let mut parts = Vec::new();
    let mut pass = true;
    let mut costs = Vec::new();
    for (name, target) in targets {
        match cost(name) {
            Some(c) => {
                let within = (c / target - 1.0).abs() <= 0.2;
                pass &= within;
                parts.push(format!("{name} {c:.3} (reference {target})"));
                costs.push(c);
            }
            None => {
                pass = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    if costs.len() == 3 {
        pass &= costs[0] <= costs[1] && costs[1] <= costs[2];
    }
    line(5, pass, format!("nominal cost ordering Cnew ≤ Inew ≤ ConicC ({})", parts.join(", ")))
}

fn criterion_6() -> Line {
    let run = || -> Result<(usize, f64, f64), String> {
        let g1 = conic_synth::benchmark::build_chain_plant(&ChainParams::nominal(), ChainOutput::Velocity)
            .map_err(|e| e.to_string())?;
        let cone = cst_complement(&Cone::new(-24.84, 62200.0).unwrap()).map_err(|e| e.to_string())?;
        let nc = g1.states();
        let t = build_transform(&g1, nc, &cone).map_err(|e| e.to_string())?;
        let init = init_arbitrary(&t, &Controller::zero(nc, g1.b2.ncols()), FEAS_TOL).map_err(|e| e.to_string())?;
        let res = run_algorithm1_on(&t, &init.state(), &SynthesisOptions::default()).map_err(|e| e.to_string())?;
        Ok((res.iterations(), init.jprime, res.state.jprime))
    };
    match run() {
        Ok((iters, j0, j1)) => {
            let pass = iters == 1 && (j1 - j0).abs() <= 10.0 * FEAS_TOL * (1.0 + j0);
            line(6, pass, format!("zero controller stays put ({iters} iteration, J′ {j0:.6} -> {j1:.6})"))
        }
        Err(e) => line(6, false, format!("zero controller run failed: {e}")),
    }
}

fn run_checks(seeds: std::ops::Range<u64>, checks: &[(&str, fn(u64) -> Check)]) -> (bool, String) {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, f) in checks {
        let failures: Vec<String> = seeds.clone().filter_map(|s| f(s).err().map(|e| format!("seed {s}: {e}"))).collect();
        if failures.is_empty() {
            parts.push(format!("{name} {}/{}", seeds.end - seeds.start, seeds.end - seeds.start));
        } else {
            pass = false;
            parts.push(format!("{name} failed {}: {}", failures.len(), failures[0]));
        }
    }
    (pass, parts.join(", "))
}

fn criterion_7() -> Line {
    let (pass, text) = run_checks(
        0..50,
        &[
            ("sector matrix", checks::sector_matrix_identity),
            ("closed loop", checks::closed_loop_identity),
            ("cost", checks::cost_identity),
        ],
    );
    line(7, pass, format!("transform identities on random instances ({text})"))
}

fn criterion_8() -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    for (range, list) in [
        (
            1000..1100,
            vec![
                ("lyapunov", checks::lyapunov_residual as fn(u64) -> Check),
                ("riccati", checks::riccati_stabilizing),
                ("overbound", checks::inverse_overbound),
            ],
        ),
        (2000..2020, vec![("h2 quadrature", checks::h2_against_quadrature as fn(u64) -> Check)]),
        (3000..3050, vec![("sector forms", checks::csl_forms_agree as fn(u64) -> Check)]),
    ] {
        let (ok, text) = run_checks(range, &list);
        pass &= ok;
        parts.push(text);
    }
    line(8, pass, format!("solver layer ({})", parts.join(", ")))
}

#[test]
fn acceptance() {
    let cfg = BenchmarkConfig {
        literature: false,
        recompute_cone: false,
        ..BenchmarkConfig::default()
    };
    let bench = run_benchmark(&cfg, ExecMode::best());
    let mut lines = Vec::new();
    match &bench {
        Ok(out) => {
            for note in &out.notes {
                let _ = writeln!(std::io::stderr(), "note: {note}");
            }
            lines.push(criterion_1(out));
            lines.push(criterion_2(out));
            lines.push(criterion_3(out));
            lines.push(criterion_4(out));
            lines.push(criterion_5(out));
        }
        Err(e) => {
            for id in 1..=5 {
                lines.push(line(id, false, format!("benchmark failed: {e}")));
            }
        }
    }
    lines.push(criterion_6());
    lines.push(criterion_7());
    lines.push(criterion_8());
    let failed: Vec<u8> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
