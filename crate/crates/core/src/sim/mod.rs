//! Slot-timed scheduling engine: admission, arrivals, schedule selection,
//! state update, guarantee verification and bounds.

pub mod design;
pub mod gen;
pub mod scenario;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cumvec::{CumVec, Tau};
use crate::dualcurve::DualCurveService;
use crate::error::{invalid, Error, Result};
use crate::feasible::{self, DualSpectrum, FlowView, Spectrum, SystemSpectra, Verdict};
use crate::minplus::SpectralMatrix;
use crate::oracle::{self, Matrix, OracleFlow, TabulatedService};
use crate::sched::{self, PolicySpec, PolicyState};

/// A flow's worst-case service in one of its representations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Service {
    Dual(DualCurveService),
    Spectral(SpectralMatrix),
    Tabulated(TabulatedService),
}

impl Service {
    pub fn horizon(&self) -> usize {
        match self {
            Service::Dual(s) => s.horizon(),
            Service::Spectral(s) => s.horizon(),
            Service::Tabulated(t) => t.horizon(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Service::Dual(_) => "dual",
            Service::Spectral(_) => "spectral",
            Service::Tabulated(_) => "tabulated",
        }
    }

    /// The same service as a spectral matrix (dual-curve flows only convert).
    pub fn to_spectral(&self, b: u64) -> Result<Service> {
        match self {
            Service::Dual(s) => Ok(Service::Spectral(s.spectrum(b)?)),
            other => Ok(other.clone()),
        }
    }

    /// `ψ(q)` on a realized `q` of any length; tabulated services stop at their horizon.
    pub fn eval_ext(&self, q: &CumVec) -> Option<CumVec> {
        match self {
            Service::Dual(s) => Some(s.eval_ext(q)),
            Service::Spectral(s) => Some(s.eval_ext(q)),
            Service::Tabulated(t) => {
                let h = t.horizon().min(q.horizon());
                let qh = q.with_horizon(t.horizon()).ok()?;
                t.eval(&qh).and_then(|y| y.with_horizon(h).ok())
            }
        }
    }
}

enum SpectrumRef<'a> {
    Dual(DualSpectrum<'a>),
    Spectral(&'a SpectralMatrix),
    Owned(Matrix),
}

impl SpectrumRef<'_> {
    fn as_dyn(&self) -> &dyn Spectrum {
        match self {
            SpectrumRef::Dual(d) => d,
            SpectrumRef::Spectral(s) => *s,
            SpectrumRef::Owned(m) => m,
        }
    }
}

/// One flow's live state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowState {
    pub service: Service,
    pub b: u64,
    /// Queued tasks as `(arrival slot, count)` runs, oldest first.
    queue: VecDeque<(usize, u64)>,
}

impl FlowState {
    pub fn new(service: Service, b: u64, now: usize) -> Result<Self> {
        if let Service::Spectral(s) = &service {
            if s.backlog() != b {
                return Err(invalid(format!("matrix is conditioned on backlog {}, flow has {b}", s.backlog())));
            }
        }
        if let Service::Tabulated(t) = &service {
            if t.backlog() != b {
                return Err(invalid(format!("table is conditioned on backlog {}, flow has {b}", t.backlog())));
            }
        }
        let mut queue = VecDeque::new();
        if b > 0 {
            queue.push_back((now, b));
        }
        Ok(FlowState { service, b, queue })
    }

    pub fn queue_len(&self) -> u64 {
        self.queue.iter().map(|&(_, k)| k).sum()
    }

    fn view(&self, q1: u64) -> Result<FlowView> {
        Ok(match &self.service {
            Service::Dual(s) => FlowView::new(q1, s.u_hat(q1)),
            Service::Spectral(s) => FlowView::new(q1, s.conditional(q1)?.row(0)),
            Service::Tabulated(t) => {
                let hat = t.brute_conditional_spectrum(q1)?;
                FlowView::new(q1, CumVec::new(hat[0].clone())?)
            }
        })
    }

    fn spectrum(&self) -> SpectrumRef<'_> {
        match &self.service {
            Service::Dual(svc) => SpectrumRef::Dual(DualSpectrum { svc, b: self.b }),
            Service::Spectral(s) => SpectrumRef::Spectral(s),
            Service::Tabulated(t) => SpectrumRef::Owned(t.brute_spectrum()),
        }
    }

    fn oracle_flow(&self, q1: u64) -> Result<OracleFlow> {
        match &self.service {
            Service::Dual(s) => OracleFlow::from_dual(s, self.b, q1),
            Service::Spectral(s) => OracleFlow::from_spectral(s, q1),
            Service::Tabulated(t) => Ok(OracleFlow { service: t.clone(), q: q1 }),
        }
    }

    fn advance(&mut self, q1: u64, d: u64, checked: bool) -> Result<()> {
        self.service = match &self.service {
            Service::Dual(s) => Service::Dual(if checked { s.update(q1, d)? } else { s.update_unchecked(q1, d) }),
            Service::Spectral(s) => {
                Service::Spectral(if checked { s.update(q1, d)? } else { s.update_unchecked(q1, d) })
            }
            Service::Tabulated(t) => Service::Tabulated(t.brute_update(q1, d)?.pad()?),
        };
        self.b = q1 - d;
        Ok(())
    }

    /// Pops `d` tasks FIFO; returns the largest delay among them.
    fn serve(&mut self, d: u64, now: usize) -> usize {
        let mut left = d;
        let mut worst = 0;
        while left > 0 {
            let front = self.queue.front_mut().expect("d <= queue length");
            worst = worst.max(now - front.0);
            let take = left.min(front.1);
            front.1 -= take;
            left -= take;
            if front.1 == 0 {
                self.queue.pop_front();
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub flow: usize,
    pub due: u64,
    pub served: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionReport {
    pub flow: Option<usize>,
    pub accepted: bool,
    pub violation: Option<(usize, usize)>,
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: usize,
    pub admissions: Vec<AdmissionReport>,
    pub arrivals: Vec<u64>,
    pub queued: Vec<u64>,
    pub due: Vec<u64>,
    pub schedule: Vec<u64>,
    pub mu: u64,
    pub backlogs: Vec<u64>,
    pub max_delay: Vec<usize>,
    pub headroom: i64,
    pub violations: Vec<Violation>,
}

/// Server state: flows, capacity, clock.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub c: u64,
    pub h: usize,
    pub t: usize,
    pub flows: Vec<FlowState>,
    pub policy_state: PolicyState,
}

impl SystemState {
    pub fn new(c: u64, h: usize) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidHorizon(h));
        }
        Ok(SystemState { c, h, t: 0, flows: Vec::new(), policy_state: PolicyState::default() })
    }

    pub fn all_dual(&self) -> bool {
        self.flows.iter().all(|f| matches!(f.service, Service::Dual(_)))
    }

    pub fn verdict(&self) -> Result<Verdict> {
        verdict_of(&self.flows, self.c)
    }

    /// Adds `flow` if the enlarged system stays schedulable.
    pub fn admit(&mut self, flow: FlowState) -> Result<AdmissionReport> {
        if flow.service.horizon() != self.h {
            return Err(invalid(format!("flow horizon {} differs from system horizon {}", flow.service.horizon(), self.h)));
        }
        self.flows.push(flow);
        let v = self.verdict()?;
        if v.schedulable {
            Ok(AdmissionReport { flow: Some(self.flows.len() - 1), accepted: true, violation: None })
        } else {
            self.flows.pop();
            Ok(AdmissionReport { flow: None, accepted: false, violation: v.violation })
        }
    }

    /// Conditional views for queues `q`.
    pub fn spectra(&self, q: &[u64]) -> Result<SystemSpectra> {
        let views = self.flows.iter().zip(q).map(|(f, &qk)| f.view(qk)).collect::<Result<Vec<_>>>()?;
        SystemSpectra::new(self.c, self.h, views)
    }

    /// Multiplexing gains of the current flows, optionally per class.
    pub fn multiplexing_gain(&self, classes: Option<&[Vec<usize>]>) -> Result<feasible::Gain> {
        let refs: Vec<SpectrumRef> = self.flows.iter().map(FlowState::spectrum).collect();
        let dyns: Vec<&dyn Spectrum> = refs.iter().map(SpectrumRef::as_dyn).collect();
        feasible::multiplexing_gain(&dyns, classes)
    }

    /// Brute-force feasible set for queues `q`, when the instance is tiny enough.
    pub fn oracle_feasible_set(&self, q: &[u64]) -> Result<Vec<Vec<u64>>> {
        let flows = self.flows.iter().zip(q).map(|(f, &qk)| f.oracle_flow(qk)).collect::<Result<Vec<_>>>()?;
        oracle::brute_feasible_set(&flows, self.c)
    }

    /// One slot: ingest `arrivals`, select and apply a schedule.
    pub fn step(&mut self, arrivals: &[u64], policy: &PolicySpec) -> Result<SlotReport> {
        let checked = policy.is_checked();
        if checked {
            self.verdict()?.into_result()?;
        }
        let n = self.flows.len();
        let a: Vec<u64> = (0..n).map(|k| arrivals.get(k).copied().unwrap_or(0)).collect();
        let q: Vec<u64> = self.flows.iter().zip(&a).map(|(f, &ak)| f.b + ak).collect();
        let sys = self.spectra(&q)?;
        let sel = sched::select(policy, &sys, self.all_dual(), &mut self.policy_state)?;
        let d = sel.d;
        let due: Vec<u64> = sys.flows.iter().map(FlowView::immediate).collect();
        if checked {
            let beta = feasible::baseline(&sys)?;
            if !feasible::contains(&beta, &q, self.c, &d) {
                return Err(Error::PolicyError { slot: self.t, detail: format!("{d:?} is outside the feasible polytope") });
            }
        }
        if d.iter().zip(&q).any(|(x, y)| x > y) || d.iter().sum::<u64>() > self.c {
            return Err(Error::PolicyError { slot: self.t, detail: format!("{d:?} is not a valid schedule") });
        }
        let violations: Vec<Violation> = (0..n)
            .filter(|&k| d[k] < due[k])
            .map(|k| Violation { flow: k, due: due[k], served: d[k] })
            .collect();
        let now = self.t;
        let mut max_delay = Vec::with_capacity(n);
        for (k, f) in self.flows.iter_mut().enumerate() {
            if a[k] > 0 {
                f.queue.push_back((now, a[k]));
            }
            f.advance(q[k], d[k], checked)?;
            max_delay.push(f.serve(d[k], now));
        }
        if checked {
            if let Some((i, j)) = self.verdict()?.violation {
                return Err(Error::PolicyError { slot: now, detail: format!("next state unschedulable over [{i}, {j})") });
            }
        }
        self.policy_state.observe(&q, &d);
        self.t += 1;
        Ok(SlotReport {
            slot: now,
            admissions: Vec::new(),
            arrivals: a,
            queued: q,
            due,
            schedule: d,
            mu: sel.mu,
            backlogs: self.flows.iter().map(|f| f.b).collect(),
            max_delay,
            headroom: sys.headroom(),
            violations,
        })
    }
}

fn verdict_of(flows: &[FlowState], c: u64) -> Result<Verdict> {
    let duals: Option<Vec<(&DualCurveService, u64)>> = flows
        .iter()
        .map(|f| match &f.service {
            Service::Dual(s) => Some((s, f.b)),
            _ => None,
        })
        .collect();
    if let Some(d) = duals {
        return feasible::is_schedulable_dual(&d, c);
    }
    let refs: Vec<SpectrumRef> = flows.iter().map(FlowState::spectrum).collect();
    let dyns: Vec<&dyn Spectrum> = refs.iter().map(SpectrumRef::as_dyn).collect();
    feasible::is_schedulable(&dyns, c)
}

/// Initial service of a flow and the slot it joined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub admitted_at: usize,
    pub b0: u64,
    pub service: Service,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub slots_checked: usize,
    pub mismatches: Vec<usize>,
    pub chosen_outside: Vec<usize>,
}

/// Append-only record of a run; every metric derives from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLog {
    pub c: u64,
    pub h: usize,
    pub flows: Vec<FlowRecord>,
    pub slots: Vec<SlotReport>,
    pub oracle: Option<OracleSummary>,
}

impl RunLog {
    /// One JSON object per slot.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.slots {
            out.push_str(&serde_json::to_string(s).expect("report serializes"));
            out.push('\n');
        }
        out
    }

    pub fn slot_violations(&self) -> usize {
        self.slots.iter().map(|s| s.violations.len()).sum()
    }

    /// Cumulative `(q, d)` of `flow` relative to its admission slot.
    pub fn realized(&self, flow: usize) -> Option<(CumVec, CumVec)> {
        let rec = self.flows.get(flow)?;
        let rows: Vec<&SlotReport> = self.slots.iter().filter(|s| s.slot >= rec.admitted_at).collect();
        let mut q = vec![0u64];
        let mut d = vec![0u64];
        for (k, s) in rows.iter().enumerate() {
            let a = s.arrivals.get(flow).copied().unwrap_or(0);
            let served = s.schedule.get(flow).copied().unwrap_or(0);
            let base = if k == 0 { rec.b0 } else { 0 };
            q.push(q[k] + a + base);
            d.push(d[k] + served);
        }
        if q.len() < 2 {
            return None;
        }
        Some((CumVec::new(q).ok()?, CumVec::new(d).ok()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuaranteeCheck {
    pub flow: usize,
    pub pass: bool,
    /// First `j` with `d_j < ψ_j(q)` and the deficit there.
    pub first_violation: Option<(usize, u64)>,
    /// Guaranteed tasks that left later than their guaranteed slot.
    pub missed: u64,
}

/// Checks `d >= ψ(q)` on the realized trace, with `ψ` the service at admission.
pub fn verify_guarantee(log: &RunLog, flow: usize) -> Result<GuaranteeCheck> {
    let rec = log.flows.get(flow).ok_or_else(|| invalid(format!("no flow {flow}")))?;
    let Some((q, d)) = log.realized(flow) else {
        return Ok(GuaranteeCheck { flow, pass: true, first_violation: None, missed: 0 });
    };
    let psi = rec.service.eval_ext(&q).ok_or_else(|| invalid("realized queue outside the tabulated range"))?;
    let span = psi.horizon();
    let first_violation = (1..=span).find(|&j| d.get(j) < psi.get(j)).map(|j| (j, psi.get(j) - d.get(j)));
    let d = d.with_horizon(span)?;
    let missed = (1..=psi.tail()).filter(|&h| d.tau_unchecked(h) > psi.tau_unchecked(h)).count() as u64;
    Ok(GuaranteeCheck { flow, pass: first_violation.is_none(), first_violation, missed })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowBounds {
    pub flow: usize,
    pub max_backlog: u64,
    pub backlog_bound: u64,
    pub max_delay: usize,
    /// `None` when a served task had no guaranteed departure slot in the window.
    pub delay_bound: Option<usize>,
}

/// Realized worst backlog and delay against `max_j(q_j - ψ_j)` and
/// `max_h(τ_h(ψ) - τ_h(q))` on the realized `q`.
pub fn bounds_report(log: &RunLog) -> Result<Vec<FlowBounds>> {
    let mut out = Vec::new();
    for (flow, rec) in log.flows.iter().enumerate() {
        let Some((q, d)) = log.realized(flow) else {
            out.push(FlowBounds { flow, max_backlog: 0, backlog_bound: 0, max_delay: 0, delay_bound: Some(0) });
            continue;
        };
        let psi = rec.service.eval_ext(&q).ok_or_else(|| invalid("realized queue outside the tabulated range"))?;
        let span = psi.horizon();
        let max_backlog = (1..=span).map(|j| q.get(j) - d.get(j)).max().unwrap_or(0);
        let backlog_bound = (1..=span).map(|j| q.get(j) - psi.get(j)).max().unwrap_or(0);
        let d = d.with_horizon(span)?;
        let q = q.with_horizon(span)?;
        let served = d.tail();
        let mut max_delay = 0;
        let mut delay_bound = Some(0usize);
        for h in 1..=served {
            let arrive = q.tau_unchecked(h).slot().expect("served tasks arrived");
            if let Tau::At(left) = d.tau_unchecked(h) {
                max_delay = max_delay.max(left - arrive);
            }
            delay_bound = match (delay_bound, psi.tau_unchecked(h)) {
                (Some(b), Tau::At(g)) => Some(b.max(g - arrive)),
                _ => None,
            };
        }
        out.push(FlowBounds { flow, max_backlog, backlog_bound, max_delay, delay_bound });
    }
    Ok(out)
}

pub use design::{design_service, Envelope, ServiceDesign};
