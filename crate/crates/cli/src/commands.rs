//! Subcommand bodies. Each returns a JSON report and an exit code.

use std::path::Path;

use anyhow::{bail, Context};
use num_rational::Ratio;
use serde_json::{json, Value};
use wcsched_core::feasible::{self, SetFunction};
use wcsched_core::sim::scenario::{run, state_at, RunOptions, Scenario, ServiceSpec};
use wcsched_core::sim::{bounds_report, verify_guarantee, Service};
use wcsched_core::{DualCurveService, Error, PolicySpec, RunLog};

use crate::{Common, PolytopeArgs};

pub const PASS: u8 = 0;
pub const INPUT_ERROR: u8 = 1;
pub const VIOLATION: u8 = 2;
pub const UNSCHEDULABLE: u8 = 3;

/// Largest flow count for which the baseline table is printed.
const TABLE_FLOWS: usize = 12;
/// Largest flow count for vertex enumeration over all priority orders.
const VERTEX_FLOWS: usize = 8;

pub struct Outcome {
    pub code: u8,
    pub report: Value,
    pub log: Option<RunLog>,
}

impl Outcome {
    fn report(code: u8, report: Value) -> Self {
        Outcome { code, report, log: None }
    }
}

pub fn options(common: &Common, horizon_max: Option<usize>) -> RunOptions {
    RunOptions { seed: common.seed, spectral: common.spectral, oracle: false, horizon_max }
}

pub fn exit_code_of(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::NotSchedulable { .. }) => UNSCHEDULABLE,
        _ => INPUT_ERROR,
    }
}

fn ratio(r: &Ratio<i128>) -> Value {
    json!({ "exact": r.to_string(), "value": *r.numer() as f64 / *r.denom() as f64 })
}

fn ratio_u64(r: &Ratio<u64>) -> Value {
    json!({ "exact": r.to_string(), "value": *r.numer() as f64 / *r.denom() as f64 })
}

fn members(mask: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|w| mask >> w & 1 == 1).collect()
}

fn beta_table(beta: &SetFunction) -> Value {
    if beta.n() > TABLE_FLOWS {
        return Value::Null;
    }
    let rows: Vec<Value> =
        (0..=beta.full()).map(|m| json!({ "set": members(m, beta.n()), "value": beta.get(m) })).collect();
    Value::Array(rows)
}

pub fn check(sc: &Scenario, opts: &RunOptions) -> anyhow::Result<Outcome> {
    let st = sc.system(opts)?;
    let v = st.verdict()?;
    if let Some((i, j)) = v.violation {
        let report = json!({ "schedulable": false, "violation": [i, j], "mu_range": null });
        return Ok(Outcome::report(UNSCHEDULABLE, report));
    }
    let (st, q) = state_at(sc, opts, 0)?;
    let beta = feasible::baseline(&st.spectra(&q)?)?;
    let (lo, hi) = feasible::mu_range(&beta, &q, st.c);
    Ok(Outcome::report(PASS, json!({ "schedulable": true, "violation": null, "mu_range": [lo, hi] })))
}

pub fn simulate(sc: &Scenario, mut opts: RunOptions, oracle: bool) -> anyhow::Result<Outcome> {
    opts.oracle = oracle;
    let log = run(sc, &opts)?;
    let bounds = bounds_report(&log)?;
    let mut flows = Vec::new();
    let mut all_pass = true;
    let mut missed = 0;
    for (k, b) in bounds.iter().enumerate() {
        let g = verify_guarantee(&log, k)?;
        all_pass &= g.pass;
        missed += g.missed;
        flows.push(json!({
            "flow": k,
            "admitted_at": log.flows[k].admitted_at,
            "pass": g.pass,
            "first_violation": g.first_violation,
            "missed": g.missed,
            "max_backlog": b.max_backlog,
            "backlog_bound": b.backlog_bound,
            "max_delay": b.max_delay,
            "delay_bound": b.delay_bound,
        }));
    }
    let slot_violations = log.slot_violations();
    let rejected = log.slots.iter().flat_map(|s| &s.admissions).filter(|a| !a.accepted).count();
    if let Some(o) = &log.oracle {
        if !o.mismatches.is_empty() || !o.chosen_outside.is_empty() {
            bail!("oracle disagreement: mismatches at {:?}, schedule outside the feasible set at {:?}", o.mismatches, o.chosen_outside);
        }
    }
    let pass = all_pass && slot_violations == 0;
    let report = json!({
        "pass": pass,
        "slots": log.slots.len(),
        "policy": sc.policy(),
        "missed": missed,
        "slot_violations": slot_violations,
        "rejected_admissions": rejected,
        "flows": flows,
        "oracle": log.oracle,
    });
    Ok(Outcome { code: if pass { PASS } else { VIOLATION }, report, log: Some(log) })
}

pub fn write_plot_data(log: &RunLog, path: &Path) -> anyhow::Result<()> {
    let n = log.flows.len();
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["slot".to_string()];
    header.extend((0..n).map(|k| format!("backlog_{k}")));
    header.extend((0..n).map(|k| format!("service_{k}")));
    header.push("headroom".into());
    w.write_record(&header)?;
    let cell = |v: &[u64], k: usize| v.get(k).map(u64::to_string).unwrap_or_default();
    for s in &log.slots {
        let mut row = vec![s.slot.to_string()];
        row.extend((0..n).map(|k| cell(&s.backlogs, k)));
        row.extend((0..n).map(|k| cell(&s.schedule, k)));
        row.push(s.headroom.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_probe(s: &str, n: usize) -> anyhow::Result<Vec<u64>> {
    let d = s
        .split(',')
        .map(|x| x.trim().parse::<u64>().with_context(|| format!("probe {s:?}: {x:?} is not a count")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if d.len() != n {
        bail!("probe {s:?} has {} entries for {n} flows", d.len());
    }
    Ok(d)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    fn rec(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for i in k..cur.len() {
            cur.swap(k, i);
            rec(k + 1, cur, out);
            cur.swap(k, i);
        }
    }
    rec(0, &mut cur, &mut out);
    out
}

pub fn polytope(sc: &Scenario, opts: &RunOptions, args: &PolytopeArgs) -> anyhow::Result<Outcome> {
    let (st, q) = state_at(sc, opts, args.slot)?;
    let n = st.flows.len();
    let beta = feasible::baseline(&st.spectra(&q)?)?;
    let (lo, hi) = feasible::mu_range(&beta, &q, st.c);
    let mu = args.mu.unwrap_or(hi);
    let slice = feasible::beta_mu(&beta, mu, &q, st.c)?;
    let vertices = if args.vertices {
        if n > VERTEX_FLOWS {
            bail!("vertex listing supports at most {VERTEX_FLOWS} flows, scenario has {n}");
        }
        let mut vs = permutations(n).iter().map(|p| feasible::vertex(&slice, p)).collect::<Result<Vec<_>, _>>()?;
        vs.sort();
        vs.dedup();
        json!(vs)
    } else {
        Value::Null
    };
    let (phi, rounded) = feasible::shapley_rounded(&slice, &q, st.c);
    let centroid: Vec<Value> = phi.iter().map(ratio).collect();
    let membership = args
        .probe
        .iter()
        .map(|p| {
            let d = parse_probe(p, n)?;
            Ok(json!({
                "d": d,
                "feasible": feasible::contains(&beta, &q, st.c, &d),
                "in_slice": feasible::contains_slice(&slice, &q, st.c, &d),
            }))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = json!({
        "slot": args.slot,
        "c": st.c,
        "q": q,
        "mu_range": [lo, hi],
        "mu": mu,
        "beta": beta_table(&beta),
        "vertices": vertices,
        "centroid": { "exact": centroid, "rounded": rounded },
        "membership": membership,
    });
    Ok(Outcome::report(PASS, report))
}

fn dual_of(spec: &ServiceSpec, h: usize, which: &str) -> anyhow::Result<DualCurveService> {
    match spec.materialize(h)? {
        Service::Dual(s) => Ok(s),
        other => bail!("{which} flow must be a dual-curve service, got {}", other.kind()),
    }
}

pub fn compose(sc: &Scenario, opts: &RunOptions) -> anyhow::Result<Outcome> {
    sc.validate(opts.horizon_max)?;
    if sc.flows.len() != 2 {
        bail!("compose needs exactly two flows (inner, outer), scenario has {}", sc.flows.len());
    }
    let inner = dual_of(&sc.flows[0].service, sc.horizon, "inner")?;
    let outer = dual_of(&sc.flows[1].service, sc.horizon, "outer")?;
    let b_outer = sc.flows[1].backlog();
    let tandem = DualCurveService::compose(&inner, &outer, b_outer)?;
    Ok(Outcome::report(PASS, json!({ "b_outer": b_outer, "service": tandem })))
}

pub fn gain(sc: &Scenario, opts: &RunOptions) -> anyhow::Result<Outcome> {
    let st = sc.system(opts)?;
    let partition = match sc.policy() {
        PolicySpec::PerClassMaxSlack { partition, .. } => Some(partition),
        _ => None,
    };
    let g = st.multiplexing_gain(partition.as_deref())?;
    let report = json!({
        "rho": {
            "singles": g.singles.iter().map(ratio_u64).collect::<Vec<_>>(),
            "total": ratio_u64(&g.total),
            "classes": g.classes.iter().map(ratio_u64).collect::<Vec<_>>(),
        },
        "eta": ratio_u64(&g.eta),
        "partition": partition,
        "eta_p": g.eta_p.as_ref().map(ratio_u64),
    });
    Ok(Outcome::report(PASS, report))
}
