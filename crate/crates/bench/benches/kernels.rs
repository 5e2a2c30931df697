use criterion::{black_box, criterion_group, criterion_main, Criterion};
use sym2moment::afe::{weight_v, MellinWeight, WeightKind, WeightSpec};
use sym2moment::expsums::{charsum_o1_bruteforce, charsum_o1_closed, kloosterman, kloosterman_row, CharSumParams};
use sym2moment::moment::{offdiag_o2, TruncationPolicy};
use sym2moment::sieve::{character_double_sum, SieveScanConfig};
use sym2moment::specfun::{bessel_j, BesselTable};

fn kloosterman_kernels(c: &mut Criterion) {
    c.bench_function("kloosterman single c=1009", |b| b.iter(|| kloosterman(black_box(7), black_box(11), 1009)));
    c.bench_function("kloosterman row c=1009", |b| b.iter(|| kloosterman_row(black_box(7), 1009)));
}

fn bessel_kernels(c: &mut Criterion) {
    c.bench_function("bessel_j direct nu=11", |b| b.iter(|| bessel_j(11, black_box(1234.5))));
    let table = BesselTable::new(11, 5.0e4, -60.0).unwrap();
    c.bench_function("bessel table 1000 evals", |b| {
        b.iter(|| {
            let mut s = 0.0;
            for i in 0..1000 {
                s += table.eval(black_box(17.0 + 31.3 * i as f64));
            }
            s
        })
    });
    let mut out = vec![0.0; 1000];
    c.bench_function("bessel table progression of 1000", |b| {
        b.iter(|| table.eval_progression::<false>(black_box(0.0137), 2000, &mut out))
    });
}

fn weight_kernels(c: &mut Criterion) {
    let spec = WeightSpec::new(12, 101).unwrap();
    c.bench_function("weight V single point", |b| b.iter(|| weight_v(black_box(0.37), &spec)));
    let w = MellinWeight::for_range(WeightKind::V, &spec, 1e-6, 1e3).unwrap();
    c.bench_function("weight V from prepared nodes", |b| b.iter(|| w.eval(black_box(0.37))));
}

fn charsum_kernels(c: &mut Criterion) {
    let p = CharSumParams::new(4, 5, 189, 5).unwrap();
    c.bench_function("charsum closed form", |b| b.iter(|| charsum_o1_closed(black_box(&p))));
    c.bench_function("charsum brute force", |b| b.iter(|| charsum_o1_bruteforce(black_box(&p))));
}

fn heavy_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("heavy");
    g.sample_size(10);
    let spec = WeightSpec::new(12, 101).unwrap();
    let pol = TruncationPolicy {
        tail_tol: 1e-2,
        ..TruncationPolicy::default()
    };
    g.bench_function("off-diagonal O2 k=12 q=101", |b| b.iter(|| offdiag_o2(&spec, &pol)));
    let cfg = SieveScanConfig::new(400, 400, 101, 1).unwrap();
    g.bench_function("sieve double sum D=C1=400", |b| b.iter(|| character_double_sum(&cfg)));
    g.finish();
}

criterion_group!(benches, kloosterman_kernels, bessel_kernels, weight_kernels, charsum_kernels, heavy_kernels);
criterion_main!(benches);
