use criterion::{criterion_group, criterion_main, Criterion};
use magswim::atlas::chart_ranges;
use magswim::numerics::eig3;
use magswim::periodic::{continue_constant_period, hopf_seed, shoot_orbit, ContinuationOptions, SEED_AMPLITUDE};
use magswim::stability::{hopf_curves, stability_matrix_at};
use magswim::{bundled, decompose, solve_equilibria};
use std::hint::black_box;

fn kernels(c: &mut Criterion) {
    let b = decompose(&bundled("B").unwrap()).unwrap();

    c.bench_function("solve_equilibria", |bn| bn.iter(|| solve_equilibria(&b, black_box(0.3), black_box(0.1)).unwrap()));

    let a = stability_matrix_at(&b, 0.7, 1.1);
    c.bench_function("eig3", |bn| bn.iter(|| eig3(black_box(&a)).unwrap()));

    let mut g = c.benchmark_group("slow");
    g.sample_size(10);
    g.bench_function("chart_ranges_200", |bn| bn.iter(|| chart_ranges(&b, black_box(200))));
    let curves = hopf_curves(&b, 400);
    let curve = curves.iter().find(|c| c.points.iter().all(|p| p.cos_psi > 0.6)).unwrap();
    let seed = hopf_seed(&b, &curve.points[curve.points.len() / 2], SEED_AMPLITUDE).unwrap();
    let opts = ContinuationOptions { ds_max: 0.02, max_steps: 18, ..Default::default() };
    let o = continue_constant_period(&b, &seed, 1.0, &opts).orbits.pop().unwrap();
    let reference = o.reference();
    g.bench_function("shoot_orbit", |bn| bn.iter(|| shoot_orbit(&b, o.ma, o.cos_psi, black_box(&o.q0), o.period, &reference).unwrap()));
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
