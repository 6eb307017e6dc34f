use contagion_bench::{clustered_graph, gaussian_series};
use contagion_core::attribution::fit_2sls;
use contagion_core::detect::wqte_pair;
use contagion_core::network::walktrap;
use contagion_core::quantreg::{qr_fit_design, QuantileDesign};
use contagion_core::synth::gen_two_regime_sample;
use contagion_core::wavelet::{modwt_with, WaveletFilter};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn modwt(c: &mut Criterion) {
    let mut group = c.benchmark_group("modwt_la8_j6");
    for n in [1024, 4096] {
        let x = gaussian_series(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| modwt_with(black_box(x), 6, WaveletFilter::La8).unwrap())
        });
    }
    group.finish();
}

fn quantile(c: &mut Criterion) {
    let mut group = c.benchmark_group("qr_fit");
    for n in [250, 750] {
        let x1 = gaussian_series(n, 2);
        let x2 = gaussian_series(n, 3);
        let y = gaussian_series(n, 4);
        let design = QuantileDesign::from_columns(n, &[&x1, &x2]).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &y, |b, y| {
            b.iter(|| qr_fit_design(&design, black_box(y), 0.5).unwrap())
        });
    }
    group.finish();
}

fn wqte(c: &mut Criterion) {
    let a = gaussian_series(750, 5);
    let b = gaussian_series(750, 6);
    c.bench_function("wqte_pair_750", |bench| {
        bench.iter(|| wqte_pair(black_box(&a), black_box(&b), 0.95).unwrap())
    });
}

fn two_stage(c: &mut Criterion) {
    let (sample, _) = gen_two_regime_sample([0.1, 0.8, 0.05, 0.025, 0.025], 750, 0.3, 7).unwrap();
    c.bench_function("fit_2sls_750", |b| b.iter(|| fit_2sls(black_box(&sample)).unwrap()));
}

fn communities(c: &mut Criterion) {
    let g = clustered_graph(3, 6, 8);
    c.bench_function("walktrap_18", |b| b.iter(|| walktrap(black_box(&g), 4)));
}

criterion_group!(benches, modwt, quantile, wqte, two_stage, communities);
criterion_main!(benches);
