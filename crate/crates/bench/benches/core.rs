use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use wcsched_core::dualcurve::DualCurveService;
use wcsched_core::feasible::{self, FlowView, SystemSpectra};
use wcsched_core::sched;
use wcsched_core::sim::gen::{random_dual_system, random_spectral};
use wcsched_core::sim::scenario::{run, RunOptions, Scenario};

const DEADLINE_FAIR: &str = include_str!("../../../scenarios/deadline_fair.json");

fn system(n: usize, h: usize, c: u64) -> Vec<(DualCurveService, u64)> {
    random_dual_system(&mut ChaCha8Rng::seed_from_u64(1), n, h, c, 4).unwrap()
}

fn spectra(flows: &[(DualCurveService, u64)], h: usize, c: u64) -> SystemSpectra {
    let views = flows.iter().map(|(s, b)| FlowView::new(b + 1, s.u_hat(b + 1))).collect();
    SystemSpectra::new(c, h, views).unwrap()
}

fn schedulability(cr: &mut Criterion) {
    let mut g = cr.benchmark_group("is_schedulable_dual");
    for h in [16, 64, 256] {
        let flows = system(8, h, 8);
        let refs: Vec<_> = flows.iter().map(|(s, b)| (s, *b)).collect();
        g.bench_with_input(BenchmarkId::from_parameter(h), &refs, |b, refs| {
            b.iter(|| feasible::is_schedulable_dual(black_box(refs), 8).unwrap())
        });
    }
    g.finish();
}

fn selection(cr: &mut Criterion) {
    let mut g = cr.benchmark_group("selection");
    for n in [2, 6, 10] {
        let flows = system(n, 64, 8);
        let sys = spectra(&flows, 64, 8);
        g.bench_with_input(BenchmarkId::new("baseline", n), &sys, |b, sys| b.iter(|| feasible::baseline(black_box(sys)).unwrap()));
        let mu = sys.queues().iter().sum::<u64>().min(8);
        g.bench_with_input(BenchmarkId::new("max_slack", n), &sys, |b, sys| {
            b.iter(|| sched::max_slack(black_box(sys), mu).ok())
        });
    }
    g.finish();
}

fn spectral_update(cr: &mut Criterion) {
    let mut g = cr.benchmark_group("spectral_update");
    for h in [16, 64] {
        let s = random_spectral(&mut ChaCha8Rng::seed_from_u64(2), h, 4 * h as u64, 2).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(h), &s, |b, s| {
            b.iter(|| s.update(black_box(3), s.immediate(3)).unwrap())
        });
    }
    g.finish();
}

fn example_run(cr: &mut Criterion) {
    let sc = Scenario::from_json(DEADLINE_FAIR).unwrap();
    cr.bench_function("run_two_deadline_flows_100_slots", |b| b.iter(|| run(black_box(&sc), &RunOptions::default()).unwrap()));
}

criterion_group!(benches, schedulability, selection, spectral_update, example_run);
criterion_main!(benches);
