use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use conic_synth::benchmark::{
    build_chain_plant, enumerate_parameter_sets, run_comparison, ChainOutput, ChainParams, NamedController,
    ParamGrid, Sampling,
};
use conic_synth::parallel::ExecMode;
use conic_synth::synthesis::design_h2_luenberger;

fn sweep(c: &mut Criterion) {
    let nominal = ChainParams::nominal();
    let controllers: Vec<NamedController> = [ChainOutput::Velocity, ChainOutput::FilteredPosition]
        .into_iter()
        .map(|o| NamedController {
            name: format!("{o:?}"),
            controller: design_h2_luenberger(&build_chain_plant(&nominal, o).unwrap()).unwrap(),
            iterations: None,
        })
        .collect();
    let sets = enumerate_parameter_sets(&ParamGrid::default(), Sampling::Sample { n: 500, seed: 7 }).unwrap();

    let mut group = c.benchmark_group("parameter_sweep");
    group.sample_size(10);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(BenchmarkId::new(format!("{mode:?}"), sets.len()), &mode, |b, mode| {
            b.iter(|| run_comparison(&controllers, &sets, None, *mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
