//! End-to-end acceptance checks. Runs without the test harness so that every
//! criterion prints exactly one `pass`/`fail` line.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{rng, DualCase};
use rand::Rng;
use wcsched_core::dualcurve::DualCurveService;
use wcsched_core::feasible::{self, DualSpectrum, Spectrum};
use wcsched_core::oracle::{self, lattice, OracleFlow, TabulatedService};
use wcsched_core::sched::{self, PolicySpec};
use wcsched_core::sim::gen::{random_arrivals, random_curve, random_dual_system, random_spectral};
use wcsched_core::sim::scenario::{run, ArrivalSpec, DualSpec, FlowSpec, GeneratorSpec, RunOptions, Scenario, ServiceSpec};
use wcsched_core::sim::{bounds_report, verify_guarantee, FlowRecord, FlowState, Service, SystemState};
use wcsched_core::RunLog;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const DEADLINE_FAIR: &str = include_str!("../../../scenarios/deadline_fair.json");
const DEADLINE_EDF: &str = include_str!("../../../scenarios/deadline_edf.json");
const DEADLINE_STATIC: &str = include_str!("../../../scenarios/deadline_static.json");

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!("{what} took {t:?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

fn deadline_fair() -> Outcome {
    let start = Instant::now();
    let log = run(&Scenario::from_json(DEADLINE_FAIR).unwrap(), &RunOptions::default()).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(1), "run")?;
    for i in 1..=96usize {
        let b = &log.slots[i - 1].backlogs;
        ensure!(*b == vec![2 * (100 - i as u64); 2], "b_{i} = {b:?}");
    }
    for t in [97, 98] {
        ensure!(log.slots[t].schedule == [3, 1], "slot {t}: {:?}", log.slots[t].schedule);
    }
    ensure!(log.slots[99].schedule == [0, 4], "slot 99: {:?}", log.slots[99].schedule);
    ensure!(log.slot_violations() == 0, "{} slot violations", log.slot_violations());
    for f in 0..2 {
        let g = verify_guarantee(&log, f).unwrap();
        ensure!(g.pass, "flow {f}: {g:?}");
    }
    let served: u64 = log.slots.iter().map(|s| s.schedule.iter().sum::<u64>()).sum();
    ensure!(served == 400 && log.slots.len() == 100, "served {served} in {} slots", log.slots.len());
    Ok(format!("400 tasks in 100 slots, {:?}", start.elapsed()))
}

fn deadline_edf() -> Outcome {
    let log = run(&Scenario::from_json(DEADLINE_EDF).unwrap(), &RunOptions::default()).map_err(|e| e.to_string())?;
    ensure!(log.slots.len() == 100, "{} slots", log.slots.len());
    for s in &log.slots {
        let want = if s.slot < 50 { [4, 0] } else { [0, 4] };
        ensure!(s.schedule == want, "slot {}: {:?}", s.slot, s.schedule);
    }
    ensure!(log.slot_violations() == 0, "slot violations");
    for f in 0..2 {
        ensure!(verify_guarantee(&log, f).unwrap().pass, "flow {f} guarantee");
    }
    Ok("(4,0) x50 then (0,4) x50".into())
}

fn deadline_static() -> Outcome {
    let log = run(&Scenario::from_json(DEADLINE_STATIC).unwrap(), &RunOptions::default()).map_err(|e| e.to_string())?;
    let g = verify_guarantee(&log, 0).unwrap();
    ensure!(g.missed == 2, "flow 1 missed {}", g.missed);
    // independent count: flow-1 tasks still queued after the deadline slot
    let late = log.slots[98].backlogs[0];
    ensure!(late == 2, "{late} flow-1 tasks left after slot 98");
    ensure!(verify_guarantee(&log, 1).unwrap().pass, "flow 2 should meet its deadline");
    Ok("2 flow-1 tasks miss slot 98".into())
}

fn spectrum_identification() -> Outcome {
    let start = Instant::now();
    let mut r = rng(0x5e5);
    let mut n = 0;
    while n < 150 {
        let h = r.gen_range(1..=4);
        let b = r.gen_range(0..=2);
        let s = random_spectral(&mut r, h, 5, b).unwrap();
        let cap = s.max_entry() + b + 1;
        let t = TabulatedService::tabulate(h, b, cap, |q| s.eval(q).unwrap()).unwrap();
        ensure!(t.brute_spectrum() == s.rows(), "{s:?}");
        n += 1;
    }
    within(start, Duration::from_secs(30), "150 matrices")?;
    Ok(format!("{n} matrices, {:?}", start.elapsed()))
}

fn feasibility_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(0xfea5);
    let (mut systems, mut schedules, mut slices, mut rejected) = (0, 0, 0, 0);
    while systems < 80 {
        let n = r.gen_range(2..=3);
        let case = DualCase::random(&mut r, n, 4, 4);
        let sys = case.sys();
        let beta = feasible::baseline(&sys).unwrap();
        let of: Vec<OracleFlow> =
            case.flows.iter().zip(&case.q).map(|((s, b), &q)| OracleFlow::from_dual(s, *b, q).unwrap()).collect();
        let brute = oracle::brute_feasible_set(&of, case.c).unwrap();
        let valid = case.valid_schedules();
        for d in &valid {
            ensure!(
                feasible::contains(&beta, &case.q, case.c, d) == brute.contains(d),
                "membership differs at d = {d:?} for {:?} q = {:?} c = {}",
                case.flows,
                case.q,
                case.c
            );
            schedules += 1;
            rejected += usize::from(!brute.contains(d));
        }
        let qt: u64 = case.q.iter().sum();
        for mu in 0..=qt.min(case.c) {
            let f_mu: Vec<&Vec<u64>> = brute.iter().filter(|d| d.iter().sum::<u64>() == mu).collect();
            if f_mu.is_empty() {
                continue;
            }
            slices += 1;
            let ms = sched::max_slack(&sys, mu).map_err(|e| format!("max_slack at mu = {mu}: {e}"))?;
            ensure!(brute.contains(&ms), "max_slack {ms:?} outside F_{mu}");
            let best = case.next_sum(&ms).unwrap();
            for d in valid.iter().filter(|d| d.iter().sum::<u64>() == mu) {
                let Some(other) = case.next_sum(d) else { continue };
                for i in 0..=case.h {
                    for j in 0..=case.h {
                        ensure!(
                            best[i][j] <= other[i][j],
                            "max_slack {ms:?} not minimal at ({i},{j}) against {d:?}"
                        );
                    }
                }
            }
        }
        systems += 1;
    }
    within(start, Duration::from_secs(60), "oracle sweep")?;
    Ok(format!(
        "{systems} systems, {schedules} schedules ({rejected} infeasible), {slices} nonempty slices, {:?}",
        start.elapsed()
    ))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn supermodular_suite() -> Outcome {
    let mut r = rng(0x50b);
    let (mut systems, mut points) = (0, 0);
    for n in 1..=4 {
        for _ in 0..30 {
            let case = DualCase::random(&mut r, n, 4, 4);
            let beta = feasible::baseline(&case.sys()).unwrap();
            ensure!(beta.supermodular_violation().is_none(), "beta: {:?}", beta.supermodular_violation());
            let (lo, hi) = feasible::mu_range(&beta, &case.q, case.c);
            for mu in lo.max(0) as u64..=hi {
                let bm = feasible::beta_mu(&beta, mu, &case.q, case.c).unwrap();
                ensure!(bm.get(0) == 0 && bm.get(bm.full()) == mu as i64, "beta_mu endpoints");
                ensure!(bm.supermodular_violation().is_none(), "beta_mu at {mu}: {:?}", bm.supermodular_violation());
                for pi in permutations(n) {
                    let v = feasible::vertex(&bm, &pi).unwrap();
                    ensure!(feasible::contains(&beta, &case.q, case.c, &v), "vertex {v:?} for {pi:?}");
                    points += 1;
                }
                let (_, d) = feasible::shapley_rounded(&bm, &case.q, case.c);
                ensure!(feasible::contains(&beta, &case.q, case.c, &d), "rounded centroid {d:?}");
                points += 1;
            }
            systems += 1;
        }
    }
    Ok(format!("{systems} systems, {points} points"))
}

fn random_checked_policy<R: Rng>(r: &mut R, n: usize) -> PolicySpec {
    let order: Vec<usize> = {
        let mut o: Vec<usize> = (0..n).collect();
        o.rotate_left(r.gen_range(0..n));
        o
    };
    match r.gen_range(0..7) {
        0 => PolicySpec::MaxSlack { mu: Default::default() },
        1 => PolicySpec::MaxSlack { mu: sched::MuRule::Baseline },
        2 => PolicySpec::Edf { mu: Default::default() },
        3 => PolicySpec::Fair { mu: Default::default() },
        4 => PolicySpec::Priority { mu: Default::default(), order },
        5 => PolicySpec::PerClassMaxSlack {
            mu: Default::default(),
            partition: vec![order[..n / 2].to_vec()],
            class_priority: None,
            promote_after: Some(3),
        },
        _ => PolicySpec::BaselineExcess { base: Default::default(), weights: (1..=n as u64).collect() },
    }
}

/// A random policy-driven run over a random schedulable dual system.
fn random_run(seed: u64, slots: usize) -> (RunLog, PolicySpec) {
    let mut r = rng(seed);
    let n = r.gen_range(1..=4);
    let h = r.gen_range(2..=8);
    let c = r.gen_range(1..=5);
    let flows = random_dual_system(&mut r, n, h, c, 3).unwrap();
    let policy = random_checked_policy(&mut r, n);
    let max_a = r.gen_range(0..=2);
    let arrivals = random_arrivals(&mut r, slots, n, max_a);
    let mut st = SystemState::new(c, h).unwrap();
    let mut log = RunLog { c, h, flows: Vec::new(), slots: Vec::new(), oracle: None };
    for (s, b) in flows {
        log.flows.push(FlowRecord { admitted_at: 0, b0: b, service: Service::Dual(s.clone()) });
        st.flows.push(FlowState::new(Service::Dual(s), b, 0).unwrap());
    }
    for a in &arrivals {
        let rep = st.step(a, &policy).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(st.verdict().unwrap().schedulable, "seed {seed}: unschedulable after slot {}", rep.slot);
        log.slots.push(rep);
    }
    (log, policy)
}

fn update_invariance() -> Outcome {
    let runs = 120;
    for seed in 0..runs {
        let (log, policy) = random_run(seed, 50);
        for (f, rec) in log.flows.iter().enumerate() {
            let a: u64 = log.slots.iter().map(|s| s.arrivals[f]).sum();
            let d: u64 = log.slots.iter().map(|s| s.schedule[f]).sum();
            let end = log.slots.last().unwrap().backlogs[f];
            ensure!(a + rec.b0 == d + end, "seed {seed} flow {f}: {a} + {} != {d} + {end}", rec.b0);
        }
        ensure!(log.slot_violations() == 0, "seed {seed} ({}) slot violations", policy.name());
    }
    Ok(format!("{runs} runs x 50 slots"))
}

fn composition_suite() -> Outcome {
    let mut r = rng(0xc0);
    let (mut pairs, mut points) = (0, 0);
    while pairs < 60 {
        let h = r.gen_range(1..=4);
        let inner = DualCurveService::new(random_curve(&mut r, h, 3), random_curve(&mut r, h, 3)).unwrap();
        let outer = DualCurveService::new(random_curve(&mut r, h, 3), random_curve(&mut r, h, 3)).unwrap();
        let (b1, b2) = (r.gen_range(0..=2), r.gen_range(0..=2));
        let composed = DualCurveService::compose(&inner, &outer, b2).unwrap();
        for q in lattice(h, b1 + b2, b1 + b2 + 5).unwrap() {
            let through = inner.eval(&q.sub_delta(b2)).unwrap().add_delta(b2);
            let want = outer.eval(&through).unwrap();
            ensure!(composed.eval(&q).unwrap() == want, "{inner:?} then {outer:?}, b2 = {b2}, q = {q:?}");
            points += 1;
        }
        pairs += 1;
    }
    Ok(format!("{pairs} pairs, {points} queue vectors"))
}

fn bounds_suite() -> Outcome {
    let mut runs = 0;
    let mut check = |log: &RunLog, tag: &str| -> Result<(), String> {
        for b in bounds_report(log).unwrap() {
            ensure!(b.max_backlog <= b.backlog_bound, "{tag} flow {}: backlog {b:?}", b.flow);
            if let Some(db) = b.delay_bound {
                ensure!(b.max_delay <= db, "{tag} flow {}: delay {b:?}", b.flow);
            }
            ensure!(verify_guarantee(log, b.flow).unwrap().pass, "{tag} flow {} guarantee", b.flow);
        }
        runs += 1;
        Ok(())
    };
    for text in [DEADLINE_FAIR, DEADLINE_EDF] {
        let log = run(&Scenario::from_json(text).unwrap(), &RunOptions::default()).unwrap();
        check(&log, "example")?;
    }
    for seed in 1000..1100 {
        let (log, _) = random_run(seed, 30);
        check(&log, &format!("seed {seed}"))?;
    }
    let pair = run(&Scenario::from_json(DEADLINE_EDF).unwrap(), &RunOptions::default()).unwrap();
    let b = bounds_report(&pair).unwrap();
    ensure!(b[1].max_delay == 99 && b[1].delay_bound == Some(99), "EDF second-flow delay {:?}", b[1]);

    let mut r = rng(0x9a1);
    let mut systems = 0;
    for _ in 0..100 {
        let n = r.gen_range(1..=4);
        let case = DualCase::random(&mut r, n, 6, 4);
        let specs: Vec<DualSpectrum> = case.flows.iter().map(|(svc, b)| DualSpectrum { svc, b: *b }).collect();
        let dyns: Vec<&dyn Spectrum> = specs.iter().map(|s| s as &dyn Spectrum).collect();
        let g = feasible::multiplexing_gain(&dyns, None).unwrap();
        ensure!(g.eta >= num_rational::Ratio::from_integer(1), "eta = {} < 1", g.eta);
        // k copies of one flow have proportional spectra
        let k = r.gen_range(1..=4);
        let dup: Vec<&dyn Spectrum> = (0..k).map(|_| dyns[0]).collect();
        let gd = feasible::multiplexing_gain(&dup, None).unwrap();
        ensure!(gd.eta == num_rational::Ratio::from_integer(1), "duplicated eta = {}", gd.eta);
        systems += 1;
    }
    Ok(format!("{runs} runs, {systems} gain systems"))
}

fn random_scenario(seed: u64) -> Scenario {
    let mut r = rng(seed);
    let n = r.gen_range(1..=3);
    let h = r.gen_range(2..=32);
    let c = r.gen_range(1..=6);
    let flows = random_dual_system(&mut r, n, h, c, 4).unwrap();
    let spec = |s: &DualCurveService, b: u64| FlowSpec {
        service: ServiceSpec::Dual(DualSpec {
            u: wcsched_core::dualcurve::CurveSpec::Points(s.u().as_slice().to_vec()),
            v: wcsched_core::dualcurve::CurveSpec::Points(s.v().as_slice().to_vec()),
        }),
        b: Some(b),
    };
    Scenario {
        c,
        horizon: h,
        slots: Some(h + r.gen_range(0..=h)),
        flows: flows.iter().map(|(s, b)| spec(s, *b)).collect(),
        arrivals: Some(ArrivalSpec::Generator(GeneratorSpec { seed: r.gen(), max_per_slot: r.gen_range(0..=2) })),
        policy: Some(random_checked_policy(&mut r, n)).filter(|p| !matches!(p, PolicySpec::Edf { .. })),
        admissions: Vec::new(),
    }
}

fn cross_representation() -> Outcome {
    let mut compared = 0;
    for seed in 0..60 {
        let sc = random_scenario(seed);
        let dual = run(&sc, &RunOptions::default()).map_err(|e| format!("seed {seed}: {e}"))?;
        let spectral =
            run(&sc, &RunOptions { spectral: true, ..Default::default() }).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure!(dual.to_jsonl() == spectral.to_jsonl(), "seed {seed}: dual and spectral logs differ");
        let again = run(&sc, &RunOptions::default()).unwrap();
        ensure!(again.to_jsonl().as_bytes() == dual.to_jsonl().as_bytes(), "seed {seed}: rerun differs");
        compared += 1;
    }
    let pair = Scenario::from_json(DEADLINE_FAIR).unwrap();
    let a = run(&pair, &RunOptions::default()).unwrap();
    let b = run(&pair, &RunOptions { spectral: true, ..Default::default() }).unwrap();
    ensure!(a.to_jsonl() == b.to_jsonl(), "two-deadline logs differ across representations");
    let mut spectral_flows = 0;
    for rec in &b.flows {
        if let Service::Spectral(_) = rec.service {
            spectral_flows += 1;
        }
    }
    ensure!(spectral_flows == 2, "spectral path not taken");
    Ok(format!("{compared} random scenarios (H <= 32) + the two-deadline scenario"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("two-deadline fair trajectory", deadline_fair),
        ("two-deadline EDF schedule", deadline_edf),
        ("static half/half misses", deadline_static),
        ("spectrum identification", spectrum_identification),
        ("feasibility oracle equivalence", feasibility_oracle),
        ("supermodularity and permutohedron", supermodular_suite),
        ("update invariance and conservation", update_invariance),
        ("tandem composition", composition_suite),
        ("backlog/delay bounds and gain", bounds_suite),
        ("cross-representation determinism", cross_representation),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match res {
            Ok(detail) => println!("criterion {}: pass - {name} ({detail})", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: fail - {name}: {why}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
