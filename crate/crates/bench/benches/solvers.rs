use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dhj_bench::{tc1, tc1_field};
use dhj_core::evolve::{step_explicit, LfScheme};
use dhj_core::oracle::{minimize_action, Convention, OracleConfig};
use dhj_core::phase::rk4_integrate;
use dhj_core::sl::{default_dt, dpp_apply, SlOptions};
use dhj_core::PhaseState;

fn bench_dpp(c: &mut Criterion) {
    let prob = tc1();
    let u = tc1_field(256);
    let dt = default_dt(&prob, u.min_spacing());
    let opts = SlOptions::default();
    c.bench_function("dpp_apply tc1 n=256", |b| {
        b.iter(|| dpp_apply(&prob, black_box(&u), dt, &opts).unwrap())
    });
}

fn bench_lf_step(c: &mut Criterion) {
    let prob = tc1();
    let u = tc1_field(256);
    let scheme = LfScheme::from_fields(&prob, &[&u]);
    let dt = scheme.stable_dt(&prob, &u);
    c.bench_function("lf step tc1 n=256", |b| {
        b.iter(|| step_explicit(&prob, &scheme, black_box(&u), dt).unwrap())
    });
}

fn bench_oracle(c: &mut Criterion) {
    let prob = tc1();
    let cfg = OracleConfig::new(0.8, 400, 5, Convention::Canonical, 0);
    c.bench_function("minimize_action tc1 q=0.25", |b| {
        b.iter(|| minimize_action(&prob, black_box(&[0.25, 0.0]), &cfg).unwrap())
    });
}

fn bench_rk4(c: &mut Criterion) {
    let prob = tc1();
    let z0 = PhaseState {
        q: [0.3, 0.0],
        p: [0.1, 0.0],
    };
    c.bench_function("rk4 tc1 T=2 dt=1e-3", |b| {
        b.iter(|| rk4_integrate(&prob, black_box(&z0), 1e-3, 2.0).unwrap())
    });
}

criterion_group!(benches, bench_dpp, bench_lf_step, bench_oracle, bench_rk4);
criterion_main!(benches);
