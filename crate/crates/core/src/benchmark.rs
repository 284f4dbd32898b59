//! Three-mass spring-damper chain: plant family, parameter grid, controller
//! comparison and report tables.
//!
//! Masses are indexed 1..3. Mass 1 is tied to a wall by `(k1, c1)`, `(k2, c2)`
//! couples masses 1 and 2, and `(k3, c3)` couples masses 2 and 3. The state
//! stacks `[p_i, v_i]` per mass; control force `u_i` and disturbance force
//! `w_i1` act on mass `i` through `1/m_i`, and `w_i2` is measurement noise.

use std::fmt::Write as _;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{csl_check, cst_complement, sector_lower_bound, Cone, CslForm, FrequencyGrid};
use crate::error::{Error, Result};
use crate::init::{init_conicc, init_ico, w_identity, w_optimize, IcoOptions, IcoOutcome, InitResult};
use crate::linalg::{blkdiag, blocks, Mat};
use crate::lti::{close_loop, h2_norm_sq, is_hurwitz, Controller, Plant};
use crate::parallel::{self, ExecMode};
use crate::synthesis::{
    build_transform, design_h2_luenberger, iteration_bound, run_algorithm1_on, SynthesisOptions,
    SynthesisResult, SynthesisStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub m: [f64; 3],
    pub k: [f64; 3],
    pub c: [f64; 3],
}

impl ChainParams {
    pub fn nominal() -> Self {
        ChainParams {
            m: [1.0; 3],
            k: [1.0; 3],
            c: [0.05; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.m.iter().chain(&self.k).all(|v| v.is_finite() && *v > 0.0)
            && self.c.iter().all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidOption(format!(
                "chain parameters need m, k > 0 and c >= 0: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainOutput {
    Velocity,
    Position,
    FilteredPosition,
}

/// Per-channel measurement filter `(A_f, B_f, C_f)`, single input and output.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFilter {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
}

impl MeasurementFilter {
    /// `25s/(s² + 4s + 25)` in controllable canonical form.
    pub fn approximate_derivative() -> Self {
        MeasurementFilter {
            a: Mat::from_row_slice(2, 2, &[0.0, 1.0, -25.0, -4.0]),
            b: Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            c: Mat::from_row_slice(1, 2, &[0.0, 25.0]),
        }
    }

    pub fn response(&self, omega: f64) -> Result<nalgebra::Complex<f64>> {
        let ss = crate::lti::StateSpace::strictly_proper(self.a.clone(), self.b.clone(), self.c.clone())?;
        Ok(ss.transfer_at(nalgebra::Complex::new(0.0, omega))?[(0, 0)])
    }
}

pub fn build_chain_plant(p: &ChainParams, output: ChainOutput) -> Result<Plant> {
    p.validate()?;
    let mut stiff = Mat::zeros(3, 3);
    let mut damp = Mat::zeros(3, 3);
    let elements = [(0, None, 0), (0, Some(1), 1), (1, Some(2), 2)];
    for (i, j, e) in elements {
        stiff[(i, i)] += p.k[e];
        damp[(i, i)] += p.c[e];
        if let Some(j) = j {
            stiff[(j, j)] += p.k[e];
            damp[(j, j)] += p.c[e];
            stiff[(i, j)] -= p.k[e];
            stiff[(j, i)] -= p.k[e];
            damp[(i, j)] -= p.c[e];
            damp[(j, i)] -= p.c[e];
        }
    }
    let mut a = Mat::zeros(6, 6);
    let mut b1 = Mat::zeros(6, 6);
    let mut b2 = Mat::zeros(6, 3);
    let mut c1 = Mat::zeros(9, 6);
    let mut d12 = Mat::zeros(9, 3);
    let mut c2 = Mat::zeros(3, 6);
    let mut d21 = Mat::zeros(3, 6);
    for i in 0..3 {
        a[(2 * i, 2 * i + 1)] = 1.0;
        for j in 0..3 {
            a[(2 * i + 1, 2 * j)] = -stiff[(i, j)] / p.m[i];
            a[(2 * i + 1, 2 * j + 1)] = -damp[(i, j)] / p.m[i];
        }
        b1[(2 * i + 1, 2 * i)] = 1.0 / p.m[i];
        b2[(2 * i + 1, i)] = 1.0 / p.m[i];
        c1[(3 * i, 2 * i)] = 1.0;
        c1[(3 * i + 1, 2 * i + 1)] = 1.0;
        d12[(3 * i + 2, i)] = 1.0;
        d21[(i, 2 * i + 1)] = 1.0;
        let measured = if output == ChainOutput::Velocity { 2 * i + 1 } else { 2 * i };
        c2[(i, measured)] = 1.0;
    }
    let plant = Plant::new_unchecked(a, b1, b2, c1, c2, d12, d21)?;
    match output {
        ChainOutput::FilteredPosition => {
            augment_with_filter(&plant, &MeasurementFilter::approximate_derivative())
        }
        _ => Ok(plant),
    }
}

/// Pass every measured channel through `filter`. Noise enters after the
/// filter, so `D21` is unchanged and the filter states only see `C2·x`.
pub fn augment_with_filter(plant: &Plant, filter: &MeasurementFilter) -> Result<Plant> {
    if filter.b.ncols() != 1 || filter.c.nrows() != 1 || filter.a.nrows() != filter.b.nrows() {
        return Err(Error::Dimension("measurement filter must be single-input single-output".into()));
    }
    let ch = plant.c2.nrows();
    let nf = filter.a.nrows();
    let n = plant.states();
    let af = blkdiag(&vec![&filter.a; ch]);
    let bf = blkdiag(&vec![&filter.b; ch]);
    let cf = blkdiag(&vec![&filter.c; ch]);
    let a = blocks(&[&[&plant.a, &Mat::zeros(n, nf * ch)], &[&(&bf * &plant.c2), &af]]);
    let pad = |m: &Mat| blocks(&[&[m], &[&Mat::zeros(nf * ch, m.ncols())]]);
    Plant::new_unchecked(
        a,
        pad(&plant.b1),
        pad(&plant.b2),
        blocks(&[&[&plant.c1, &Mat::zeros(plant.c1.nrows(), nf * ch)]]),
        blocks(&[&[&Mat::zeros(ch, n), &cf]]),
        plant.d12.clone(),
        plant.d21.clone(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub m: Vec<f64>,
    pub k: Vec<f64>,
    pub c: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid {
            m: vec![0.3, 1.0, 3.0],
            k: vec![0.3, 1.0, 3.0],
            c: vec![0.01, 0.05, 0.1],
        }
    }
}

impl ParamGrid {
    fn levels(&self) -> [&[f64]; 9] {
        let (m, k, c) = (&self.m[..], &self.k[..], &self.c[..]);
        [m, m, m, k, k, k, c, c, c]
    }

    pub fn len(&self) -> usize {
        self.levels().iter().map(|l| l.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Combination `index` in lexicographic order, `c3` varying fastest.
    pub fn at(&self, mut index: usize) -> ChainParams {
        let levels = self.levels();
        let mut v = [0.0; 9];
        for slot in (0..9).rev() {
            let l = levels[slot];
            v[slot] = l[index % l.len()];
            index /= l.len();
        }
        ChainParams {
            m: [v[0], v[1], v[2]],
            k: [v[3], v[4], v[5]],
            c: [v[6], v[7], v[8]],
        }
    }

    fn index_of(&self, p: &ChainParams) -> Option<usize> {
        let vals = [p.m[0], p.m[1], p.m[2], p.k[0], p.k[1], p.k[2], p.c[0], p.c[1], p.c[2]];
        let mut idx = 0;
        for (slot, l) in self.levels().iter().enumerate() {
            let pos = l.iter().position(|x| *x == vals[slot])?;
            idx = idx * l.len() + pos;
        }
        Some(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Sampling {
    Full,
    Sample { n: usize, seed: u64 },
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Sample { n: 500, seed: 2021 }
    }
}

/// Parameter sets to evaluate. Sampling draws distinct grid points and always
/// puts the nominal set first.
pub fn enumerate_parameter_sets(grid: &ParamGrid, mode: Sampling) -> Result<Vec<ChainParams>> {
    let total = grid.len();
    match mode {
        Sampling::Full => Ok((0..total).map(|i| grid.at(i)).collect()),
        Sampling::Sample { n, seed } => {
            if n == 0 {
                return Err(Error::InvalidOption("sample size must be at least 1".into()));
            }
            let nominal = ChainParams::nominal();
            let nom_idx = grid.index_of(&nominal).ok_or_else(|| {
                Error::InvalidOption("parameter grid does not contain the nominal set".into())
            })?;
            let n = n.min(total);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, total - 1, n - 1)
                .into_iter()
                .map(|i| if i >= nom_idx { i + 1 } else { i })
                .collect();
            picks.insert(0, nom_idx);
            Ok(picks.into_iter().map(|i| grid.at(i)).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedController {
    pub name: String,
    pub controller: Controller,
    /// Synthesis iterations, when the design is iterative.
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowSource {
    Design,
    Literature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSummary {
    pub name: String,
    pub nominal_cost: f64,
    /// `100·(cost / reference − 1)`.
    pub percent_increase: f64,
    pub iterations: Option<usize>,
    pub in_cone: Option<bool>,
    pub unstable_fraction: Option<f64>,
    /// Fraction of sets where this controller has the lowest cost among the
    /// certified ones.
    pub best_fraction: Option<f64>,
    pub source: RowSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetOutcome {
    pub params: ChainParams,
    /// H2² per controller, `∞` when the loop is unstable.
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Cost of the H2-optimal design for nominal `G2` on nominal `G2`.
    pub reference_cost: f64,
    pub controllers: Vec<ControllerSummary>,
    pub names: Vec<String>,
    pub sets: Vec<SetOutcome>,
}

fn cost_on(plant: &Plant, ctrl: &Controller) -> f64 {
    match close_loop(plant, ctrl) {
        Ok(cl) => match is_hurwitz(&cl.a) {
            Ok(true) => h2_norm_sq(&cl).unwrap_or(f64::INFINITY),
            _ => f64::INFINITY,
        },
        Err(_) => f64::NAN,
    }
}

/// Stability and cost of every controller on every parameter set of `G2`.
pub fn run_comparison(
    controllers: &[NamedController],
    sets: &[ChainParams],
    controller_cone: Option<&Cone>,
    exec: ExecMode,
) -> Result<BenchReport> {
    let nominal = build_chain_plant(&ChainParams::nominal(), ChainOutput::FilteredPosition)?;
    let reference = design_h2_luenberger(&nominal)?;
    let reference_cost = cost_on(&nominal, &reference);

    let outcomes: Vec<Result<SetOutcome>> = parallel::map(sets, exec, |p| {
        let plant = build_chain_plant(p, ChainOutput::FilteredPosition)?;
        Ok(SetOutcome {
            params: *p,
            costs: controllers.iter().map(|c| cost_on(&plant, &c.controller)).collect(),
        })
    });
    let sets: Vec<SetOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let in_cone: Vec<Option<bool>> = parallel::map(controllers, exec, |c| {
        controller_cone.map(|cone| {
            matches!(
                csl_check(&c.controller.as_state_space(), cone, CslForm::One),
                Ok(Some(_))
            )
        })
    });
    let certified: Vec<usize> = (0..controllers.len())
        .filter(|i| in_cone[*i] == Some(true))
        .collect();
    let n_sets = sets.len().max(1) as f64;
    let mut best_counts = vec![0usize; controllers.len()];
    for s in &sets {
        if let Some(best) = certified
            .iter()
            .copied()
            .filter(|i| s.costs[*i].is_finite())
            .min_by(|a, b| s.costs[*a].total_cmp(&s.costs[*b]))
        {
            best_counts[best] += 1;
        }
    }

    let summaries = controllers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let nominal_cost = cost_on(&nominal, &c.controller);
            let unstable = sets.iter().filter(|s| !s.costs[i].is_finite()).count();
            ControllerSummary {
                name: c.name.clone(),
                nominal_cost,
                percent_increase: 100.0 * (nominal_cost / reference_cost - 1.0),
                iterations: c.iterations,
                in_cone: in_cone[i],
                unstable_fraction: Some(unstable as f64 / n_sets),
                best_fraction: (in_cone[i] == Some(true)).then(|| best_counts[i] as f64 / n_sets),
                source: RowSource::Design,
            }
        })
        .collect();

    Ok(BenchReport {
        reference_cost,
        controllers: summaries,
        names: controllers.iter().map(|c| c.name.clone()).collect(),
        sets,
    })
}

impl BenchReport {
    /// Add a row known only by its published nominal cost.
    pub fn add_literature_row(&mut self, name: &str, nominal_cost: f64, iterations: Option<usize>) {
        self.controllers.push(ControllerSummary {
            name: name.to_string(),
            nominal_cost,
            percent_increase: 100.0 * (nominal_cost / self.reference_cost - 1.0),
            iterations,
            in_cone: Some(true),
            unstable_fraction: None,
            best_fraction: None,
            source: RowSource::Literature,
        });
    }

    pub fn summary(&self, name: &str) -> Option<&ControllerSummary> {
        self.controllers.iter().find(|c| c.name == name)
    }

    pub fn table1_csv(&self) -> String {
        let mut out = String::from(
            "controller,nominal_cost,percent_increase,iterations,in_cone,unstable_percent,best_percent,source\n",
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{}", 100.0 * x)).unwrap_or_default();
        let _ = writeln!(
            out,
            "H2-Optimal for G2,{},0,,,,,reference",
            self.reference_cost
        );
        for c in &self.controllers {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.name,
                c.nominal_cost,
                c.percent_increase,
                c.iterations.map(|i| i.to_string()).unwrap_or_default(),
                c.in_cone.map(|b| if b { "yes" } else { "no" }).unwrap_or(""),
                opt(c.unstable_fraction),
                opt(c.best_fraction),
                match c.source {
                    RowSource::Design => "design",
                    RowSource::Literature => "literature",
                }
            );
        }
        out
    }

    /// Percent of sets with cost at or below each threshold, per controller.
    pub fn histogram_cost_csv(&self, bins: usize) -> String {
        let finite: Vec<f64> = self
            .sets
            .iter()
            .flat_map(|s| s.costs.iter().copied())
            .filter(|c| c.is_finite() && *c > 0.0)
            .collect();
        let mut out = format!("cost,{}\n", self.names.join(","));
        if finite.is_empty() || bins < 2 {
            return out;
        }
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min).ln();
        let hi = finite.iter().copied().fold(0.0, f64::max).ln();
        let n = self.sets.len().max(1) as f64;
        for b in 0..bins {
            let thr = (lo + (hi - lo) * b as f64 / (bins - 1) as f64).exp();
            let cols: Vec<String> = (0..self.names.len())
                .map(|i| {
                    let below = self.sets.iter().filter(|s| s.costs[i] <= thr).count();
                    format!("{}", 100.0 * below as f64 / n)
                })
                .collect();
            let _ = writeln!(out, "{thr},{}", cols.join(","));
        }
        out
    }

    /// Percent of sets whose cost is within each percent error of the best
    /// certified controller on that set.
    pub fn histogram_regret_csv(&self, max_percent: f64, bins: usize) -> String {
        let conic: Vec<usize> = self
            .controllers
            .iter()
            .enumerate()
            .filter(|(i, c)| *i < self.names.len() && c.in_cone == Some(true))
            .map(|(i, _)| i)
            .collect();
        let header: Vec<&str> = conic.iter().map(|i| self.names[*i].as_str()).collect();
        let mut out = format!("percent_error,{}\n", header.join(","));
        if conic.is_empty() || bins < 2 {
            return out;
        }
        let regrets: Vec<Vec<f64>> = self
            .sets
            .iter()
            .map(|s| {
                let best = conic.iter().map(|i| s.costs[*i]).fold(f64::INFINITY, f64::min);
                conic.iter().map(|i| 100.0 * (s.costs[*i] / best - 1.0)).collect()
            })
            .collect();
        let n = self.sets.len().max(1) as f64;
        for b in 0..bins {
            let thr = max_percent * b as f64 / (bins - 1) as f64;
            let cols: Vec<String> = (0..conic.len())
                .map(|j| {
                    let within = regrets.iter().filter(|r| r[j] <= thr).count();
                    format!("{}", 100.0 * within as f64 / n)
                })
                .collect();
            let _ = writeln!(out, "{thr},{}", cols.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub series: String,
    pub iter: usize,
    #[serde(rename = "Jprime")]
    pub jprime: f64,
    #[serde(rename = "Jtrue")]
    pub jtrue: f64,
    pub eps: Option<f64>,
}

pub fn design_curves_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("series,iter,Jprime,Jtrue,eps\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.series,
            p.iter,
            p.jprime,
            p.jtrue,
            p.eps.map(|e| e.to_string()).unwrap_or_default()
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Identity,
    Optimize,
}

/// End-to-end benchmark settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Sector of the uncertain plant family; controllers are designed for
    /// its complement.
    pub plant_cone: Cone,
    pub sampling: Sampling,
    pub grid: ParamGrid,
    pub epsilon: f64,
    pub gamma_reg: f64,
    pub max_iters: usize,
    pub weights: WeightMode,
    pub ico_delta: f64,
    pub ico_gamma: f64,
    pub ico_max_iters: usize,
    /// Designs to run, from `h2`, `conicc`, `cnew`, `inew`.
    pub designs: Vec<String>,
    /// Append the published Iterative Conic row.
    pub literature: bool,
    /// Recompute the lower sector bound of the sampled plants.
    pub recompute_cone: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            plant_cone: Cone {
                a: -24.84,
                b: 62200.0,
                strict: false,
            },
            sampling: Sampling::default(),
            grid: ParamGrid::default(),
            epsilon: 5e-3,
            gamma_reg: 0.1,
            max_iters: 500,
            weights: WeightMode::Optimize,
            ico_delta: 0.1,
            ico_gamma: 1e-5,
            ico_max_iters: 1000,
            designs: ["h2", "conicc", "cnew", "inew"].map(String::from).to_vec(),
            literature: true,
            recompute_cone: true,
        }
    }
}

pub const ITERATIVE_CONIC_COST: f64 = 73.74;
pub const ITERATIVE_CONIC_ITERS: usize = 17;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRun {
    pub name: String,
    pub controller: Option<Controller>,
    pub synthesis: Option<SynthesisResult>,
    pub init: Option<InitResult>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    pub report: BenchReport,
    pub curves: Vec<CurvePoint>,
    pub designs: Vec<DesignRun>,
    pub controller_cone: Cone,
    /// Lower sector bound over the evaluated sets at the configured `b`.
    pub sampled_plant_a: Option<f64>,
    /// Iteration bound of the ConicC start against the unconstrained optimum.
    pub iteration_bound: Option<u64>,
    pub notes: Vec<String>,
}

fn synthesis_options(cfg: &BenchmarkConfig, w: (Mat, Mat)) -> SynthesisOptions {
    SynthesisOptions {
        epsilon: cfg.epsilon,
        gamma_reg: cfg.gamma_reg,
        max_iters: cfg.max_iters,
        w1: Some(w.0),
        w2: Some(w.1),
        ..SynthesisOptions::default()
    }
}

fn curve(series: &str, result: &SynthesisResult) -> Vec<CurvePoint> {
    result
        .history
        .iter()
        .map(|r| CurvePoint {
            series: series.to_string(),
            iter: r.iter,
            jprime: r.jprime,
            jtrue: r.jtrue,
            eps: None,
        })
        .collect()
}

/// Design every requested controller on nominal `G1` and compare them on
/// the sampled `G2` family.
pub fn run_benchmark(cfg: &BenchmarkConfig, exec: ExecMode) -> Result<BenchmarkOutcome> {
    cfg.plant_cone.validate()?;
    let wants = |d: &str| cfg.designs.iter().any(|x| x.eq_ignore_ascii_case(d));
    for d in &cfg.designs {
        if !["h2", "conicc", "cnew", "inew"].contains(&d.to_ascii_lowercase().as_str()) {
            return Err(Error::InvalidOption(format!("unknown design '{d}'")));
        }
    }
    let g1 = build_chain_plant(&ChainParams::nominal(), ChainOutput::Velocity)?;
    let ctrl_cone = cst_complement(&cfg.plant_cone)?;
    let t = build_transform(&g1, g1.states(), &ctrl_cone)?;
    let w = match cfg.weights {
        WeightMode::Identity => w_identity(&t),
        WeightMode::Optimize => w_optimize(&t),
    };
    let opts = synthesis_options(cfg, w.clone());
    let mut designs = Vec::new();
    let mut curves = Vec::new();
    let mut notes = Vec::new();
    let mut bound = None;

    if wants("h2") {
        let c = design_h2_luenberger(&g1)?;
        designs.push(DesignRun {
            name: "H2-Optimal for G1".into(),
            controller: Some(c),
            synthesis: None,
            init: None,
            note: String::new(),
        });
    }
    if wants("conicc") || wants("cnew") {
        let init = init_conicc(&g1, &t, opts.feas_tol)?;
        let j_h2 = crate::synthesis::true_cost(
            &t,
            &crate::synthesis::KMatrix::from_controller(&design_h2_luenberger(&g1)?),
        )?;
        bound = iteration_bound(init.jprime, j_h2, cfg.epsilon).ok();
        if wants("conicc") {
            designs.push(DesignRun {
                name: "ConicC".into(),
                controller: Some(init.controller.clone()),
                synthesis: None,
                init: Some(init.clone()),
                note: String::new(),
            });
        }
        if wants("cnew") {
            let res = run_algorithm1_on(&t, &init.state(), &opts)?;
            info!("Cnew: {} ({})", res.message, res.iterations());
            curves.extend(curve("cnew", &res));
            let note = if res.status.is_success() { String::new() } else { res.message.clone() };
            designs.push(DesignRun {
                name: "Cnew".into(),
                controller: Some(res.state.k.to_controller()),
                synthesis: Some(res),
                init: Some(init),
                note,
            });
        }
    }
    if wants("inew") {
        let ico = IcoOptions {
            delta: cfg.ico_delta,
            gamma_reg: cfg.ico_gamma,
            max_iters: cfg.ico_max_iters,
            w1: Some(w.0.clone()),
            w2: Some(w.1.clone()),
            ..IcoOptions::default()
        };
        match init_ico(&g1, &t, None, &ico)? {
            IcoOutcome::Converged(init) => {
                for r in &init.trace {
                    curves.push(CurvePoint {
                        series: "ico".into(),
                        iter: r.iter,
                        jprime: r.jprime,
                        jtrue: r.jtrue,
                        eps: Some(r.eps),
                    });
                }
                let res = run_algorithm1_on(&t, &init.state(), &opts)?;
                info!("Inew: {} ({})", res.message, res.iterations());
                curves.extend(curve("inew", &res));
                let note = if res.status.is_success() { String::new() } else { res.message.clone() };
                designs.push(DesignRun {
                    name: "Inew".into(),
                    controller: Some(res.state.k.to_controller()),
                    synthesis: Some(res),
                    init: Some(init),
                    note,
                });
            }
            IcoOutcome::NotConverged { reason, iterations, message, .. } => {
                let msg = format!("ICO start did not converge ({reason:?} after {iterations}): {message}");
                warn!("{msg}");
                notes.push(msg.clone());
                designs.push(DesignRun {
                    name: "Inew".into(),
                    controller: None,
                    synthesis: None,
                    init: None,
                    note: msg,
                });
            }
        }
    }
    for d in &designs {
        if let Some(s) = &d.synthesis {
            if s.status != SynthesisStatus::Converged {
                notes.push(format!("{}: {:?}: {}", d.name, s.status, s.message));
            }
        }
    }

    let sets = enumerate_parameter_sets(&cfg.grid, cfg.sampling)?;
    let named: Vec<NamedController> = designs
        .iter()
        .filter_map(|d| {
            d.controller.as_ref().map(|c| NamedController {
                name: d.name.clone(),
                controller: c.clone(),
                iterations: d.synthesis.as_ref().map(|s| s.iterations()),
            })
        })
        .collect();
    let mut report = run_comparison(&named, &sets, Some(&ctrl_cone), exec)?;
    if cfg.literature {
        report.add_literature_row("Iterative Conic", ITERATIVE_CONIC_COST, Some(ITERATIVE_CONIC_ITERS));
    }

    let sampled_plant_a = if cfg.recompute_cone {
        let grid = FrequencyGrid::default();
        let b = cfg.plant_cone.b;
        let lows: Vec<f64> = parallel::map(&sets, exec, |p| {
            build_chain_plant(p, ChainOutput::FilteredPosition)
                .and_then(|g| sector_lower_bound(&g.control_channel(), b, &grid))
                .unwrap_or(f64::NAN)
        });
        let a = lows.iter().copied().fold(f64::INFINITY, f64::min);
        notes.push(format!(
            "sampled lower sector bound at b = {b}: {a:.4} (configured {})",
            cfg.plant_cone.a
        ));
        Some(a)
    } else {
        None
    };

    Ok(BenchmarkOutcome {
        report,
        curves,
        designs,
        controller_cone: ctrl_cone,
        sampled_plant_a,
        iteration_bound: bound,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::complex_eigenvalues;

    #[test]
    fn nominal_chain_is_damped_and_undamped_is_not() {
        let g = build_chain_plant(&ChainParams::nominal(), ChainOutput::Velocity).unwrap();
        assert!(is_hurwitz(&g.a).unwrap());
        let mut p = ChainParams::nominal();
        p.c = [0.0; 3];
        let g = build_chain_plant(&p, ChainOutput::Velocity).unwrap();
        assert!(!is_hurwitz(&g.a).unwrap());
    }

    #[test]
    fn stiffer_springs_scale_frequencies() {
        let mut p = ChainParams::nominal();
        p.c = [0.0; 3];
        let freqs = |p: &ChainParams| {
            let g = build_chain_plant(p, ChainOutput::Velocity).unwrap();
            let mut w: Vec<f64> = complex_eigenvalues(&g.a)
                .unwrap()
                .iter()
                .map(|z| z.im)
                .filter(|v| *v > 0.0)
                .collect();
            w.sort_by(f64::total_cmp);
            w
        };
        let base = freqs(&p);
        p.k = [3.0; 3];
        let stiff = freqs(&p);
        assert_eq!(base.len(), 3);
        for (a, b) in base.iter().zip(&stiff) {
            assert!((b / a - 3f64.sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn filter_response() {
        let f = MeasurementFilter::approximate_derivative();
        assert!(f.response(0.0).unwrap().norm() < 1e-15);
        assert!((f.response(5.0).unwrap().norm() - 6.25).abs() < 1e-12);
        let g2 = build_chain_plant(&ChainParams::nominal(), ChainOutput::FilteredPosition).unwrap();
        assert_eq!(g2.states(), 12);
        assert!((g2.d21.clone() * g2.b1.transpose()).norm() == 0.0);
    }

    #[test]
    fn sampling() {
        let grid = ParamGrid::default();
        assert_eq!(enumerate_parameter_sets(&grid, Sampling::Full).unwrap().len(), 19683);
        let one = enumerate_parameter_sets(&grid, Sampling::Sample { n: 1, seed: 3 }).unwrap();
        assert_eq!(one, vec![ChainParams::nominal()]);
        let a = enumerate_parameter_sets(&grid, Sampling::Sample { n: 50, seed: 9 }).unwrap();
        let b = enumerate_parameter_sets(&grid, Sampling::Sample { n: 50, seed: 9 }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], ChainParams::nominal());
        let idx: std::collections::BTreeSet<usize> = a.iter().map(|p| grid.index_of(p).unwrap()).collect();
        assert_eq!(idx.len(), 50);
        assert_eq!(grid.at(grid.index_of(&a[7]).unwrap()), a[7]);
    }
}
