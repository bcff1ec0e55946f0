//! Scenario files and the driver loop that turns one into a [`RunLog`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gen, AdmissionReport, FlowRecord, FlowState, OracleSummary, RunLog, Service, SystemState};
use crate::dualcurve::{CurveSpec, DualCurveService};
use crate::error::{invalid, Error, Result};
use crate::feasible;
use crate::minplus::SpectralMatrix;
use crate::sched::PolicySpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualSpec {
    pub u: CurveSpec,
    pub v: CurveSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadlineSpec {
    pub tasks: u64,
    /// Last slot (0-based) by which all tasks must have left.
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ServiceSpec {
    Spectral(SpectralMatrix),
    Dual(DualSpec),
    Deadline { deadline: DeadlineSpec },
}

impl ServiceSpec {
    pub fn materialize(&self, h: usize) -> Result<Service> {
        Ok(match self {
            ServiceSpec::Spectral(s) => {
                if s.horizon() != h {
                    return Err(invalid(format!("matrix horizon {} differs from scenario horizon {h}", s.horizon())));
                }
                Service::Spectral(s.clone())
            }
            ServiceSpec::Dual(d) => Service::Dual(DualCurveService::new(d.u.materialize(h)?, d.v.materialize(h)?)?),
            ServiceSpec::Deadline { deadline } => {
                Service::Dual(DualCurveService::deadline_step(h, deadline.tasks, deadline.slot)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub service: ServiceSpec,
    /// Initial backlog; defaults to the matrix's own for spectral services, else 0.
    #[serde(default)]
    pub b: Option<u64>,
}

impl FlowSpec {
    pub fn backlog(&self) -> u64 {
        match (&self.b, &self.service) {
            (Some(b), _) => *b,
            (None, ServiceSpec::Spectral(s)) => s.backlog(),
            (None, _) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub max_per_slot: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalSpec {
    /// Row `t` holds the arrivals of slot `t`, one column per active flow.
    Trace(Vec<Vec<u64>>),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissionSpec {
    pub slot: usize,
    pub flow: FlowSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub c: u64,
    pub horizon: usize,
    /// Run length; defaults to the trace length, else the horizon.
    #[serde(default)]
    pub slots: Option<usize>,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
    #[serde(default)]
    pub arrivals: Option<ArrivalSpec>,
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    #[serde(default)]
    pub admissions: Vec<AdmissionSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Replaces the generator seed.
    pub seed: Option<u64>,
    /// Converts dual-curve flows to spectral matrices on admission.
    pub spectral: bool,
    /// Cross-checks each slot against the brute-force feasible set where small enough.
    pub oracle: bool,
    pub horizon_max: Option<usize>,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| invalid(format!("scenario: {e}")))
    }

    pub fn policy(&self) -> PolicySpec {
        self.policy.clone().unwrap_or_default()
    }

    pub fn run_length(&self) -> usize {
        match (&self.slots, &self.arrivals) {
            (Some(s), _) => *s,
            (None, Some(ArrivalSpec::Trace(t))) => t.len(),
            _ => self.horizon,
        }
    }

    pub fn validate(&self, horizon_max: Option<usize>) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidHorizon(0));
        }
        if let Some(m) = horizon_max {
            if self.horizon > m {
                return Err(invalid(format!("horizon {} exceeds the configured maximum {m}", self.horizon)));
            }
        }
        Ok(())
    }

    /// The system at slot 0; fails with `NotSchedulable` if the initial flows are not.
    pub fn initial_state(&self, opts: &RunOptions) -> Result<SystemState> {
        let st = self.system(opts)?;
        st.verdict()?.into_result()?;
        Ok(st)
    }

    /// The initial flows, without the schedulability check.
    pub fn system(&self, opts: &RunOptions) -> Result<SystemState> {
        self.validate(opts.horizon_max)?;
        let mut st = SystemState::new(self.c, self.horizon)?;
        for f in &self.flows {
            st.flows.push(flow_state(f, self.horizon, opts.spectral, 0)?);
        }
        Ok(st)
    }

    /// Arrival rows for the whole run, `n` columns wide (missing entries are 0).
    pub fn arrival_rows(&self, opts: &RunOptions) -> Vec<Vec<u64>> {
        let n = self.flows.len() + self.admissions.len();
        let len = self.run_length();
        match &self.arrivals {
            None => vec![vec![0; n]; len],
            Some(ArrivalSpec::Trace(t)) => (0..len)
                .map(|k| {
                    let row = t.get(k).map(Vec::as_slice).unwrap_or(&[]);
                    (0..n).map(|w| row.get(w).copied().unwrap_or(0)).collect()
                })
                .collect(),
            Some(ArrivalSpec::Generator(g)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.unwrap_or(g.seed));
                gen::random_arrivals(&mut rng, len, n, g.max_per_slot)
            }
        }
    }
}

fn flow_state(f: &FlowSpec, h: usize, spectral: bool, now: usize) -> Result<FlowState> {
    let b = f.backlog();
    let mut svc = f.service.materialize(h)?;
    if spectral {
        svc = svc.to_spectral(b)?;
    }
    FlowState::new(svc, b, now)
}

fn oracle_check(st: &SystemState, arrivals: &[u64], chosen: &[u64], summary: &mut OracleSummary) -> Result<()> {
    let q: Vec<u64> = st.flows.iter().zip(arrivals).map(|(f, &a)| f.b + a).collect();
    let brute = match st.oracle_feasible_set(&q) {
        Ok(s) => s,
        Err(Error::OracleTooLarge(_)) => return Ok(()),
        Err(e) => return Err(e),
    };
    let beta = feasible::baseline(&st.spectra(&q)?)?;
    let mut all = vec![Vec::new()];
    for &qk in &q {
        all = all
            .into_iter()
            .flat_map(|d: Vec<u64>| {
                (0..=qk.min(st.c)).map(move |x| {
                    let mut e = d.clone();
                    e.push(x);
                    e
                })
            })
            .collect();
    }
    let slot = st.t;
    let agree = all
        .iter()
        .filter(|d| d.iter().sum::<u64>() <= st.c)
        .all(|d| feasible::contains(&beta, &q, st.c, d) == brute.contains(d));
    summary.slots_checked += 1;
    if !agree {
        summary.mismatches.push(slot);
    }
    if !brute.iter().any(|d| d == chosen) {
        summary.chosen_outside.push(slot);
    }
    Ok(())
}

/// Runs `scenario` to completion.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunLog> {
    let mut st = scenario.initial_state(opts)?;
    let policy = scenario.policy();
    let rows = scenario.arrival_rows(opts);
    let mut log = RunLog {
        c: scenario.c,
        h: scenario.horizon,
        flows: st
            .flows
            .iter()
            .map(|f| FlowRecord { admitted_at: 0, b0: f.b, service: f.service.clone() })
            .collect(),
        slots: Vec::with_capacity(rows.len()),
        oracle: opts.oracle.then(OracleSummary::default),
    };
    for (t, row) in rows.iter().enumerate() {
        let mut admissions = Vec::new();
        for adm in scenario.admissions.iter().filter(|a| a.slot == t) {
            let f = flow_state(&adm.flow, scenario.horizon, opts.spectral, t)?;
            let rec = FlowRecord { admitted_at: t, b0: f.b, service: f.service.clone() };
            let rep: AdmissionReport = st.admit(f)?;
            if rep.accepted {
                log.flows.push(rec);
            }
            admissions.push(rep);
        }
        let a = &row[..st.flows.len().min(row.len())];
        let mut rep = if let Some(summary) = log.oracle.as_mut() {
            let before = st.clone();
            let rep = st.step(a, &policy)?;
            oracle_check(&before, &rep.arrivals, &rep.schedule, summary)?;
            rep
        } else {
            st.step(a, &policy)?
        };
        rep.admissions = admissions;
        log.slots.push(rep);
    }
    Ok(log)
}

/// The system just before the schedule of `slot` is chosen (admissions for
/// `slot` applied), and the queues `b + a` it will face.
pub fn state_at(scenario: &Scenario, opts: &RunOptions, slot: usize) -> Result<(SystemState, Vec<u64>)> {
    let mut st = scenario.initial_state(opts)?;
    let policy = scenario.policy();
    let rows = scenario.arrival_rows(opts);
    let zeros = vec![0; scenario.flows.len() + scenario.admissions.len()];
    for t in 0..=slot {
        for adm in scenario.admissions.iter().filter(|a| a.slot == t) {
            st.admit(flow_state(&adm.flow, scenario.horizon, opts.spectral, t)?)?;
        }
        let row = rows.get(t).unwrap_or(&zeros);
        let a = &row[..st.flows.len().min(row.len())];
        if t == slot {
            let q = st.flows.iter().enumerate().map(|(k, f)| f.b + a.get(k).copied().unwrap_or(0)).collect();
            return Ok((st, q));
        }
        st.step(a, &policy)?;
    }
    unreachable!("loop returns at t == slot")
}
