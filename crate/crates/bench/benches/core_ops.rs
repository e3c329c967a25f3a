//! Benchmarks for the hot paths: the Euler stepper, network evaluation,
//! gradient sweeps over a residual-style loss, and a full MPC solve.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use sirmpc_bench::{bench_seed, epidemic_setup};
use sirmpc_core::losses::{residual_loss, CollocationGrid, LossWeights};
use sirmpc_core::mpc::{solve_mpc, MpcConfig};
use sirmpc_core::neural::{
    loss_gradient, FixedRate, Graph, GraphMlp, Mlp,
};
use sirmpc_core::sir::{euler_step, simulate};
use std::hint::black_box;

fn bench_sir(c: &mut Criterion) {
    let (x0, params) = epidemic_setup();
    c.bench_function("euler_step", |b| {
        b.iter(|| euler_step(black_box(x0), black_box(params), black_box(0.1)).unwrap())
    });
    let controls = vec![0.0; 50];
    c.bench_function("simulate_50_days", |b| {
        b.iter(|| simulate(black_box(x0), black_box(params), black_box(&controls), 50).unwrap())
    });
}

fn bench_network(c: &mut Criterion) {
    let mut rng = bench_seed().stream("bench-net");
    let net = Mlp::glorot(&[50; 4], &mut rng);
    c.bench_function("mlp_forward_4x50", |b| {
        b.iter(|| black_box(net.forward(black_box(0.37))))
    });

    // One reverse sweep over a physics-residual loss on a 3x20 network with
    // 200 collocation points — the shape the closed loop trains at.
    let s = Mlp::glorot(&[20; 3], &mut rng);
    let i = Mlp::glorot(&[20; 3], &mut rng);
    let u = Mlp::glorot(&[20; 3], &mut rng);
    let n = s.param_count() + i.param_count() + u.param_count();
    let mut g = Graph::new(n);
    let sb = GraphMlp::bind(&mut g, s.dims(), 0);
    let ib = GraphMlp::bind(&mut g, i.dims(), s.param_count());
    let ub = GraphMlp::bind(&mut g, u.dims(), s.param_count() + i.param_count());
    let grid = CollocationGrid::uniform(20.0, 200).unwrap();
    let w = LossWeights::default();
    let root = residual_loss(&mut g, &sb, &ib, &ub, &FixedRate(0.6), 0.2, &grid, &w, 20.0);
    let mut params = Vec::with_capacity(n);
    params.extend_from_slice(s.params());
    params.extend_from_slice(i.params());
    params.extend_from_slice(u.params());
    c.bench_function("residual_gradient_3x20_200pts", |b| {
        b.iter_batched(
            || vec![0.0; n],
            |mut grad| loss_gradient(&mut g, root, &params, &mut grad).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn bench_mpc(c: &mut Criterion) {
    let (_, params) = epidemic_setup();
    let x0 = sirmpc_core::sir::SirState::new(0.9, 0.05, 0.05).unwrap();
    let cfg = MpcConfig {
        horizon: 14,
        q1: 1e3,
        q2: 1.0,
        u_max: 0.4,
        i_max_star: 0.1,
        s_star: 1.0 / 3.0,
        hold_steps: 1,
    };
    let mut group = c.benchmark_group("mpc");
    group.sample_size(10);
    group.bench_function("solve_np14", |b| {
        b.iter(|| solve_mpc(black_box(x0), black_box(params), black_box(&cfg)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_sir, bench_network, bench_mpc);
criterion_main!(benches);
