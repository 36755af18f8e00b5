//! End-to-end and hot-loop benches: pair-scalar table build, amplitude
//! transport, one refinement level of a two-particle probability, a window
//! distribution sweep, and the uniformization solve.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use masep::bethe::{pair_scalars, SectorOps, SpectralPoint};
use masep::combinatorics::sector_of;
use masep::oracle::{build_generator, evolve, WindowedStateSpace};
use masep::transition::{distribution, probability};
use masep::{Complex64, ContourSpec, ConvergenceSettings, TransitionQuery};
use masep_bench::{params, state, word};

fn circle(m: usize, radius: f64) -> Vec<Complex64> {
    (0..m)
        .map(|k| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / m as f64))
        .collect()
}

fn bench_pair_table(c: &mut Criterion) {
    let pr = params();
    let nodes = circle(64, 0.4);
    c.bench_function("pair_table_64x64", |b| {
        b.iter(|| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &a in &nodes {
                for &bb in &nodes {
                    let sc = pair_scalars(black_box(a), black_box(bb), &pr).unwrap();
                    acc += sc.same;
                }
            }
            acc
        })
    });
}

fn bench_transport(c: &mut Criterion) {
    let pr = params();
    let ops = SectorOps::new(&sector_of(&word("1122")).unwrap());
    let dim = ops.dim();
    let pt = SpectralPoint::new(vec![
        Complex64::from_polar(0.4, 0.3),
        Complex64::from_polar(0.4, 1.1),
    ])
    .unwrap();
    let sc = pair_scalars(pt.xi(0), pt.xi(1), &pr).unwrap();
    let input: Vec<Complex64> = (0..dim)
        .map(|i| Complex64::new(1.0 / (i + 1) as f64, 0.1 * i as f64))
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    c.bench_function("transport_1122_dim6", |b| {
        b.iter(|| {
            for position in [0, 1, 2, 0, 1, 0] {
                ops.apply(position, black_box(&sc), black_box(&input), &mut out);
            }
            out[0]
        })
    });
}

fn bench_probability_level(c: &mut Criterion) {
    let pr = params();
    let contour = ContourSpec::new(0.4, 32, &pr).unwrap();
    let query = TransitionQuery::new(state(&[0, 2], "12"), state(&[1, 3], "21"), 0.5, pr)
        .unwrap()
        .with_contour(contour)
        // An immediately satisfied tolerance pins the work to the 32- and
        // 64-node levels, so the bench measures a fixed grid pass.
        .with_convergence(ConvergenceSettings { tol_rel: f64::INFINITY, max_nodes: 64 });
    c.bench_function("probability_two_particles_m32_m64", |b| {
        b.iter(|| probability(black_box(&query)).unwrap().value)
    });
}

fn bench_distribution(c: &mut Criterion) {
    let pr = params();
    let initial = state(&[0, 1], "21");
    let contour = ContourSpec::new(0.4, 32, &pr).unwrap();
    let settings = ConvergenceSettings { tol_rel: f64::INFINITY, max_nodes: 64 };
    c.bench_function("distribution_window_pm8_m32_m64", |b| {
        b.iter(|| {
            distribution(black_box(&initial), 0.5, &pr, (-8, 9), Some(contour), &settings)
                .unwrap()
                .total_mass
        })
    });
}

fn bench_uniformization(c: &mut Criterion) {
    let pr = params();
    let initial = state(&[0, 1], "12");
    let space = WindowedStateSpace::around(&initial, 8).unwrap();
    let generator = build_generator(&space, &pr);
    c.bench_function("uniformization_380_states", |b| {
        b.iter(|| {
            evolve(&space, &generator, black_box(&initial), 1.0, 1e-12)
                .unwrap()
                .leakage
        })
    });
}

criterion_group!(
    benches,
    bench_pair_table,
    bench_transport,
    bench_probability_level,
    bench_distribution,
    bench_uniformization
);
criterion_main!(benches);
