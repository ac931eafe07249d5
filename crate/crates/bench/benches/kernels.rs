//! Hot-path benchmarks: one master-equation RK4 step at production size,
//! the mean-field derivative evaluation, a Wigner map, and the Bessel series.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use phonlase::hilbert::partial_trace;
use phonlase::lindblad::{DissipatorSet, Propagator};
use phonlase::meanfield::{derivatives, MeanFieldState};
use phonlase::model::{bessel_j, driven_full, initial_state, ChainLayout};
use phonlase::observables::{wigner, WignerGridSpec};
use phonlase::presets::{fig2_chain, fig3_array};

fn bench_rk4_step(c: &mut Criterion) {
    let config = fig2_chain(40);
    let chain = ChainLayout::new(&config).unwrap();
    let h = driven_full(&config, &chain).unwrap();
    let diss = DissipatorSet::from_config(&config, &chain).unwrap();
    let mut prop = Propagator::new(&h, &diss).unwrap();
    let rho0 = initial_state(&config, &chain).unwrap();
    let mut x = rho0.matrix().clone();
    let mut t = 0.0;
    c.bench_function("rk4_step_dim164", |b| {
        b.iter(|| {
            prop.step(t, 0.012, &mut x);
            t += 0.012;
            black_box(&x);
        })
    });
}

fn bench_meanfield_derivatives(c: &mut Criterion) {
    let config = fig3_array();
    let state = MeanFieldState::seeded(&config, 0.1).unwrap();
    c.bench_function("meanfield_derivatives_n10", |b| {
        b.iter(|| black_box(derivatives(black_box(&state), 1.3, &config)))
    });
}

fn bench_wigner(c: &mut Criterion) {
    let config = fig2_chain(20);
    let chain = ChainLayout::new(&config).unwrap();
    let rho = initial_state(&config, &chain).unwrap();
    let rho_osc = partial_trace(&rho, &[chain.osc_subsystem(0).unwrap()]).unwrap();
    let spec = WignerGridSpec { n_points: 101, ..WignerGridSpec::default_for(20) };
    c.bench_function("wigner_101x101_nmax20", |b| {
        b.iter(|| black_box(wigner(&rho_osc, &spec).unwrap()))
    });
}

fn bench_bessel(c: &mut Criterion) {
    c.bench_function("bessel_j2_x0", |b| {
        b.iter(|| black_box(bessel_j(2, black_box(2.4048)).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_rk4_step,
    bench_meanfield_derivatives,
    bench_wigner,
    bench_bessel
);
criterion_main!(benches);
