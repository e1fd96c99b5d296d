use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mclip_core::baselines::greedy_evaluate;
use mclip_core::exact::exact_solve_with;
use mclip_core::{ExactCaps, Execution, GenSpec, LocationPlan};

fn exact_solve_modes(c: &mut Criterion) {
    let inst = GenSpec::mclip20(7, 1).generate(0).unwrap();
    let caps = ExactCaps::default();
    let mut g = c.benchmark_group("exact_solve_mclip20");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_function(name, |b| b.iter(|| exact_solve_with(black_box(&inst), &caps, exec).unwrap()));
    }
    g.finish();
}

fn batch_evaluation_modes(c: &mut Criterion) {
    let spec = GenSpec::mclip100(3, 64);
    let insts = spec.generate_all().unwrap();
    let plans: Vec<_> = insts
        .iter()
        .map(|i| LocationPlan::new(i, (0..15).map(|k| k * 6).collect()).unwrap())
        .collect();
    let idx: Vec<usize> = (0..insts.len()).collect();
    let mut g = c.benchmark_group("greedy_evaluate_batch64_mclip100");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_function(name, |b| {
            b.iter(|| exec.map(&idx, |&i| greedy_evaluate(&insts[i], &plans[i]).unwrap().obj))
        });
    }
    g.finish();
}

criterion_group!(benches, exact_solve_modes, batch_evaluation_modes);
criterion_main!(benches);
