use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mclip_core::{Execution, GenSpec};
use mclip_neural::features::SiteGeometry;
use mclip_neural::trainer::{greedy_episode, reinforce_update, AgentPair, Phase, StreamKey};
use mclip_neural::PolicyDims;

fn greedy_episode_batch(c: &mut Criterion) {
    let insts = GenSpec::mclip20(3, 64).generate_all().unwrap();
    let geoms: Vec<SiteGeometry> = insts.iter().map(SiteGeometry::new).collect();
    let pair = AgentPair::new(PolicyDims::toy(), 1, Default::default()).unwrap();
    let idx: Vec<usize> = (0..insts.len()).collect();
    let mut g = c.benchmark_group("greedy_episode_batch64_mclip20");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_function(name, |b| {
            b.iter(|| {
                exec.map(&idx, |&i| greedy_episode(&pair.location, &pair.interdiction, &insts[i], &geoms[i]).unwrap().1)
            })
        });
    }
    g.finish();
}

fn location_update(c: &mut Criterion) {
    let insts = GenSpec::mclip20(5, 32).generate_all().unwrap();
    let mut g = c.benchmark_group("location_update_batch32_mclip20");
    g.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_function(name, |b| {
            b.iter_batched(
                || AgentPair::new(PolicyDims::toy(), 1, Default::default()).unwrap(),
                |mut pair| {
                    let key = StreamKey { seed: 9, first: 0 };
                    reinforce_update(&mut pair, Phase::Location, black_box(&insts), 1e-3, None, key, exec).unwrap()
                },
                criterion::BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, greedy_episode_batch, location_update);
criterion_main!(benches);
