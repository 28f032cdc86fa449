use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tlkit::kfactory::{assemble_k, verify_k, BlockKind, BlockSpec, DClass, KBlockPlan};
use tlkit::model::{build_tl_data, ModelSpec};
use tlkit::sweep::{map_seeds, map_seeds_seq};
use tlkit::{Tolerance, C64};

fn plan() -> KBlockPlan {
    KBlockPlan::new(vec![
        DClass::new(
            C64::new(0.0, 0.0),
            vec![BlockSpec::generic(BlockKind::Nilpotent { t: 2, m: 1 })],
        ),
        DClass::new(
            C64::new(1.0, 0.0),
            vec![BlockSpec::generic(BlockKind::TwoEigen { s: 4, m_prime: 1 })],
        ),
    ])
}

fn sweep(c: &mut Criterion) {
    let tol = Tolerance::default();
    let data = build_tl_data(&ModelSpec::fourier(6), &tol).unwrap();
    let plan = plan();
    let work = |seed: u64| {
        let k = assemble_k(&plan, &data, seed, &tol).unwrap();
        verify_k(&data, &k).unwrap().reflection
    };

    let mut group = c.benchmark_group("reflection_sweep_n6");
    group.sample_size(10);
    for count in [8u64, 32] {
        let seeds: Vec<u64> = (0..count).collect();
        group.bench_with_input(BenchmarkId::new("sequential", count), &seeds, |b, s| {
            b.iter(|| map_seeds_seq(s, work))
        });
        group.bench_with_input(BenchmarkId::new("parallel", count), &seeds, |b, s| {
            b.iter(|| map_seeds(s, work))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
