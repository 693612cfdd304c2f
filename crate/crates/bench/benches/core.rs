use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use dyson_core::dixon_anderson::{DaSampler, OrderedVector};
use dyson_core::sde::{simulate, Process, SdeConfig};
use dyson_core::semigroup::SemigroupAction;
use dyson_core::stats::{stream, tags};
use dyson_core::{build_jack, GeneratorKind, JackBasis, JackParams, Partition};

fn jack(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_jack");
    for kappa in ["2,1", "3,2,1", "4,2,1,1"] {
        let p: Partition = kappa.parse().unwrap();
        let params = JackParams::new(0.7, 4).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(kappa), &p, |b, p| {
            b.iter(|| build_jack(black_box(&params), p).unwrap())
        });
    }
    g.finish();
}

fn semigroup(c: &mut Criterion) {
    let mut g = c.benchmark_group("semigroup_on_basis");
    for kind in [GeneratorKind::Dbm, GeneratorKind::Dou] {
        let basis = JackBasis::up_to_degree(JackParams::new(1.3, 3).unwrap(), 6).unwrap();
        g.bench_function(format!("{kind:?}/deg6/k3"), |b| {
            b.iter(|| SemigroupAction::on_basis(black_box(&basis), kind, 0.8).unwrap())
        });
    }
    g.finish();
}

fn sampler(c: &mut Criterion) {
    let top = OrderedVector::new(vec![-1.0, 0.2, 1.5, 2.4]).unwrap();
    let mut g = c.benchmark_group("da_sample");
    for theta in [0.25, 2.0] {
        let s = DaSampler::new(theta).unwrap();
        let mut rng = stream(1, tags::DA_SAMPLE, 0);
        g.bench_function(format!("theta={theta}/k3"), |b| b.iter(|| s.sample(black_box(&top), &mut rng).unwrap()));
    }
    g.finish();
}

fn sde(c: &mut Criterion) {
    let x0 = OrderedVector::new(vec![-1.0, 0.0, 1.0]).unwrap();
    let mut cfg = SdeConfig::new(1.0, 0.1, 1);
    cfg.dt = 1e-3;
    let mut rng = stream(1, tags::SDE, 0);
    // 100 implicit steps per iteration
    c.bench_function("sde/dbm/k3/100_steps", |b| {
        b.iter(|| simulate(Process::Dbm, black_box(&x0), &cfg, &mut rng).unwrap())
    });
}

criterion_group!(benches, jack, semigroup, sampler, sde);
criterion_main!(benches);
