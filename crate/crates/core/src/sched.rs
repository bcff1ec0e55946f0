//! Schedule selection policies.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::cumvec::{CumVec, Tau};
use crate::error::{invalid, Error, Result};
use crate::feasible::{self, SetFunction, SystemSpectra};

/// How the slot total `μ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRule {
    /// `μ = min{c, q^Ω}`.
    #[default]
    WorkConserving,
    /// `μ = β(Ω)`.
    Baseline,
    Fixed(u64),
}

/// Base point for [`PolicySpec::BaselineExcess`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseRule {
    #[default]
    Fair,
    MaxSlack,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PolicyJson", into = "PolicyJson")]
pub enum PolicySpec {
    MaxSlack { mu: MuRule },
    /// Classes in priority order are given by `partition`; `ν` is the class
    /// vertex for `class_priority`, or the rounded class centroid when absent.
    PerClassMaxSlack {
        mu: MuRule,
        partition: Vec<Vec<usize>>,
        class_priority: Option<Vec<usize>>,
        promote_after: Option<u32>,
    },
    Edf { mu: MuRule },
    /// Strict priority, highest first.
    Priority { mu: MuRule, order: Vec<usize> },
    Fair { mu: MuRule },
    BaselineExcess { base: BaseRule, weights: Vec<u64> },
    /// Fixed per-flow shares, not checked for feasibility.
    StaticSplit { shares: Vec<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PolicyKind {
    MaxSlack,
    PerClassMaxSlack,
    Edf,
    Priority,
    Fair,
    BaselineExcess,
    StaticSplit,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyJson {
    policy: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<MuRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    priority: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partition: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_priority: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    promote_after: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<BaseRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shares: Option<Vec<u64>>,
}

impl TryFrom<PolicyJson> for PolicySpec {
    type Error = Error;
    fn try_from(j: PolicyJson) -> Result<Self> {
        use PolicyKind as K;
        let allowed: &[&str] = match j.policy {
            K::MaxSlack | K::Edf | K::Fair => &["mu"],
            K::PerClassMaxSlack => &["mu", "partition", "class_priority", "promote_after"],
            K::Priority => &["mu", "priority"],
            K::BaselineExcess => &["weights", "base"],
            K::StaticSplit => &["shares"],
        };
        let given = [
            ("mu", j.mu.is_some()),
            ("priority", j.priority.is_some()),
            ("partition", j.partition.is_some()),
            ("class_priority", j.class_priority.is_some()),
            ("promote_after", j.promote_after.is_some()),
            ("weights", j.weights.is_some()),
            ("base", j.base.is_some()),
            ("shares", j.shares.is_some()),
        ];
        if let Some((name, _)) = given.iter().find(|(n, g)| *g && !allowed.contains(n)) {
            return Err(invalid(format!("field `{name}` does not apply to this policy")));
        }
        let mu = j.mu.unwrap_or_default();
        Ok(match j.policy {
            K::MaxSlack => PolicySpec::MaxSlack { mu },
            K::Edf => PolicySpec::Edf { mu },
            K::Fair => PolicySpec::Fair { mu },
            K::Priority => PolicySpec::Priority {
                mu,
                order: j.priority.ok_or_else(|| invalid("priority policy needs `priority`"))?,
            },
            K::PerClassMaxSlack => PolicySpec::PerClassMaxSlack {
                mu,
                partition: j.partition.ok_or_else(|| invalid("per-class policy needs `partition`"))?,
                class_priority: j.class_priority,
                promote_after: j.promote_after,
            },
            K::BaselineExcess => {
                PolicySpec::BaselineExcess { base: j.base.unwrap_or_default(), weights: j.weights.unwrap_or_default() }
            }
            K::StaticSplit => {
                PolicySpec::StaticSplit { shares: j.shares.ok_or_else(|| invalid("static split needs `shares`"))? }
            }
        })
    }
}

impl From<PolicySpec> for PolicyJson {
    fn from(p: PolicySpec) -> Self {
        let mut j = PolicyJson {
            policy: PolicyKind::MaxSlack,
            mu: None,
            priority: None,
            partition: None,
            class_priority: None,
            promote_after: None,
            weights: None,
            base: None,
            shares: None,
        };
        match p {
            PolicySpec::MaxSlack { mu } => j.mu = Some(mu),
            PolicySpec::Edf { mu } => (j.policy, j.mu) = (PolicyKind::Edf, Some(mu)),
            PolicySpec::Fair { mu } => (j.policy, j.mu) = (PolicyKind::Fair, Some(mu)),
            PolicySpec::Priority { mu, order } => {
                (j.policy, j.mu, j.priority) = (PolicyKind::Priority, Some(mu), Some(order))
            }
            PolicySpec::PerClassMaxSlack { mu, partition, class_priority, promote_after } => {
                j.policy = PolicyKind::PerClassMaxSlack;
                j.mu = Some(mu);
                j.partition = Some(partition);
                j.class_priority = class_priority;
                j.promote_after = promote_after;
            }
            PolicySpec::BaselineExcess { base, weights } => {
                (j.policy, j.base, j.weights) = (PolicyKind::BaselineExcess, Some(base), Some(weights))
            }
            PolicySpec::StaticSplit { shares } => (j.policy, j.shares) = (PolicyKind::StaticSplit, Some(shares)),
        }
        j
    }
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec::MaxSlack { mu: MuRule::default() }
    }
}

impl PolicySpec {
    /// Whether outputs are guaranteed feasible and must be asserted as such.
    pub fn is_checked(&self) -> bool {
        !matches!(self, PolicySpec::StaticSplit { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::MaxSlack { .. } => "max_slack",
            PolicySpec::PerClassMaxSlack { .. } => "per_class_max_slack",
            PolicySpec::Edf { .. } => "edf",
            PolicySpec::Priority { .. } => "priority",
            PolicySpec::Fair { .. } => "fair",
            PolicySpec::BaselineExcess { .. } => "baseline_excess",
            PolicySpec::StaticSplit { .. } => "static_split",
        }
    }
}

pub fn resolve_mu(rule: MuRule, beta: &SetFunction, q: &[u64], c: u64) -> Result<u64> {
    let (lo, hi) = feasible::mu_range(beta, q, c);
    let mu = match rule {
        MuRule::WorkConserving => hi,
        MuRule::Baseline => lo.max(0) as u64,
        MuRule::Fixed(m) => m,
    };
    if (mu as i64) < lo || mu > hi {
        return Err(Error::InfeasibleTotal { mu, lo, hi });
    }
    Ok(mu)
}

/// Bounds `[p_{j}, p_{j+1}]` (or `[p_∞, q]`) of the max-slack hypercuboid for
/// the flows in `members` and total `mu`.
fn cuboid(p: &[CumVec], q: &[u64], members: &[usize], mu: u64) -> (Vec<u64>, Vec<u64>) {
    let h = p.first().map_or(1, CumVec::horizon);
    let total = |j: usize| members.iter().map(|&w| p[w].get(j)).sum::<u64>();
    // j_μ = τ_{μ+1}(p^Γ): the largest j with p^Γ_j <= μ
    let j_mu = if total(h) <= mu { Tau::Beyond } else { Tau::At((0..=h).rev().find(|&j| total(j) <= mu).unwrap_or(0)) };
    match j_mu {
        Tau::At(j) => (members.iter().map(|&w| p[w].get(j)).collect(), members.iter().map(|&w| p[w].get(j + 1)).collect()),
        Tau::Beyond => (members.iter().map(|&w| p[w].get(h)).collect(), members.iter().map(|&w| q[w]).collect()),
    }
}

/// Max-slack hypercuboid of the whole system for total `mu`.
pub fn max_slack_bounds(sys: &SystemSpectra, mu: u64) -> (Vec<u64>, Vec<u64>) {
    let p: Vec<CumVec> = sys.flows.iter().map(|f| f.p_vector()).collect();
    let all: Vec<usize> = (0..sys.n()).collect();
    cuboid(&p, &sys.queues(), &all, mu)
}

/// Fills `lo` up to total `mu` in ascending member order, capped by `hi`.
fn fill(lo: &[u64], hi: &[u64], mu: u64) -> Option<Vec<u64>> {
    let mut d = lo.to_vec();
    let mut left = mu.checked_sub(lo.iter().sum())?;
    for (x, &cap) in d.iter_mut().zip(hi) {
        let add = left.min(cap - *x);
        *x += add;
        left -= add;
    }
    (left == 0).then_some(d)
}

pub fn max_slack(sys: &SystemSpectra, mu: u64) -> Result<Vec<u64>> {
    let q = sys.queues();
    let qt: u64 = q.iter().sum();
    if mu > qt {
        return Err(Error::NoMaxSlackSchedule { mu, q: qt });
    }
    let (lo, hi) = max_slack_bounds(sys, mu);
    fill(&lo, &hi, mu).ok_or(Error::NoMaxSlackSchedule { mu, q: qt })
}

/// Max-slack inside each class, with class totals `nu`.
pub fn per_class_max_slack(sys: &SystemSpectra, classes: &[Vec<usize>], nu: &[u64]) -> Result<Vec<u64>> {
    feasible::check_partition(classes, sys.n())?;
    if nu.len() != classes.len() {
        return Err(invalid(format!("{} class totals for {} classes", nu.len(), classes.len())));
    }
    let p: Vec<CumVec> = sys.flows.iter().map(|f| f.p_vector()).collect();
    let q = sys.queues();
    let mut d = vec![0u64; sys.n()];
    for (k, (class, &v)) in classes.iter().zip(nu).enumerate() {
        let qc: u64 = class.iter().map(|&w| q[w]).sum();
        if v > qc {
            return Err(Error::NoSchedule { class: k, nu: v, q: qc });
        }
        let mut members = class.clone();
        members.sort_unstable();
        let (lo, hi) = cuboid(&p, &q, &members, v);
        let part = fill(&lo, &hi, v).ok_or(Error::NoSchedule { class: k, nu: v, q: qc })?;
        for (&w, x) in members.iter().zip(part) {
            d[w] = x;
        }
    }
    Ok(d)
}

/// Serves the `mu` queued tasks with the earliest deadlines `τ_h(p)`; ties by
/// flow index, then arrival order. Only meaningful for dual-curve flows.
pub fn edf(sys: &SystemSpectra, mu: u64, all_dual: bool) -> Result<Vec<u64>> {
    if !all_dual {
        return Err(Error::UnsupportedServiceKind("edf needs dual-curve flows".into()));
    }
    let q = sys.queues();
    let qt: u64 = q.iter().sum();
    if mu > qt {
        return Err(Error::NoMaxSlackSchedule { mu, q: qt });
    }
    let p: Vec<CumVec> = sys.flows.iter().map(|f| f.p_vector()).collect();
    let mut heap = BinaryHeap::new();
    for (w, pv) in p.iter().enumerate() {
        if q[w] > 0 {
            heap.push(Reverse((pv.tau_unchecked(1), w)));
        }
    }
    let mut d = vec![0u64; sys.n()];
    for _ in 0..mu {
        let Reverse((_, w)) = heap.pop().expect("mu <= total queue");
        d[w] += 1;
        if d[w] < q[w] {
            heap.push(Reverse((p[w].tau_unchecked(d[w] + 1), w)));
        }
    }
    Ok(d)
}

/// Adds `c - Σ base` on top of `base` by weighted round robin within caps `q`.
pub fn baseline_excess(beta: &SetFunction, q: &[u64], c: u64, base: &[u64], weights: &[u64]) -> Result<Vec<u64>> {
    if !feasible::contains_slice(beta, q, c, base) {
        return Err(Error::InvalidBase);
    }
    let mut d = base.to_vec();
    let mut left = c - base.iter().sum::<u64>();
    let w = |k: usize| weights.get(k).copied().unwrap_or(1);
    while left > 0 {
        let mut moved = false;
        for k in 0..d.len() {
            let add = w(k).min(q[k] - d[k]).min(left);
            if add > 0 {
                d[k] += add;
                left -= add;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(d)
}

/// `min{q^ω, share^ω}`, truncated in index order to total `c`.
pub fn static_split(q: &[u64], c: u64, shares: &[u64]) -> Vec<u64> {
    let mut left = c;
    q.iter()
        .enumerate()
        .map(|(k, &qk)| {
            let x = qk.min(shares.get(k).copied().unwrap_or(0)).min(left);
            left -= x;
            x
        })
        .collect()
}

/// Completes a partial priority order with the remaining flows in index order.
fn full_order(order: &[usize], n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = order.iter().copied().filter(|&w| w < n).collect();
    out.extend((0..n).filter(|w| !order.contains(w)));
    out
}

/// Completes a partition with singleton classes for unlisted flows.
fn full_partition(classes: &[Vec<usize>], n: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> =
        classes.iter().map(|c| c.iter().copied().filter(|&w| w < n).collect::<Vec<_>>()).filter(|c| !c.is_empty()).collect();
    let listed: Vec<usize> = out.iter().flatten().copied().collect();
    out.extend((0..n).filter(|w| !listed.contains(w)).map(|w| vec![w]));
    out
}

/// Mutable per-run policy state: starvation counters for class promotion.
///
/// A flow with queued tasks that goes unserved for `promote_after` slots in a
/// row moves one class up. This reassignment rule is a heuristic of this
/// crate, not part of the underlying model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyState {
    pub starvation: Vec<u32>,
    pub promoted: Vec<u32>,
}

impl PolicyState {
    pub fn observe(&mut self, q: &[u64], d: &[u64]) {
        self.starvation.resize(q.len(), 0);
        for k in 0..q.len() {
            if q[k] > 0 && d[k] == 0 {
                self.starvation[k] += 1;
            } else {
                self.starvation[k] = 0;
            }
        }
    }

    fn classes(&mut self, base: &[Vec<usize>], threshold: Option<u32>, n: usize) -> Vec<Vec<usize>> {
        let mut classes = full_partition(base, n);
        let Some(t) = threshold else { return classes };
        self.promoted.resize(n, 0);
        self.starvation.resize(n, 0);
        for w in 0..n {
            if t > 0 && self.starvation[w] >= t {
                self.promoted[w] += 1;
                self.starvation[w] = 0;
            }
        }
        for w in 0..n {
            for _ in 0..self.promoted[w] {
                let k = classes.iter().position(|c| c.contains(&w)).expect("covered");
                if k == 0 || classes[k].len() == 1 {
                    break;
                }
                classes[k].retain(|&x| x != w);
                classes[k - 1].push(w);
            }
        }
        classes
    }
}

/// Output of [`select`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub d: Vec<u64>,
    pub mu: u64,
}

/// Runs `policy` on a system snapshot.
pub fn select(policy: &PolicySpec, sys: &SystemSpectra, all_dual: bool, state: &mut PolicyState) -> Result<Selection> {
    let q = sys.queues();
    let n = sys.n();
    let c = sys.c;
    if let PolicySpec::StaticSplit { shares } = policy {
        let d = static_split(&q, c, shares);
        let mu = d.iter().sum();
        return Ok(Selection { d, mu });
    }
    let beta = feasible::baseline(sys)?;
    let pick = |rule: MuRule| resolve_mu(rule, &beta, &q, c);
    let d = match policy {
        PolicySpec::MaxSlack { mu } => max_slack(sys, pick(*mu)?)?,
        PolicySpec::Edf { mu } => edf(sys, pick(*mu)?, all_dual)?,
        PolicySpec::Priority { mu, order } => {
            let bm = feasible::beta_mu(&beta, pick(*mu)?, &q, c)?;
            feasible::vertex(&bm, &full_order(order, n))?
        }
        PolicySpec::Fair { mu } => {
            let bm = feasible::beta_mu(&beta, pick(*mu)?, &q, c)?;
            feasible::shapley_rounded(&bm, &q, c).1
        }
        PolicySpec::PerClassMaxSlack { mu, partition, class_priority, promote_after } => {
            let bm = feasible::beta_mu(&beta, pick(*mu)?, &q, c)?;
            let classes = state.classes(partition, *promote_after, n);
            let bp = feasible::per_class_beta(&bm, &classes)?;
            let qc: Vec<u64> = classes.iter().map(|cl| cl.iter().map(|&w| q[w]).sum()).collect();
            let nu = match class_priority {
                Some(order) => feasible::vertex(&bp, &full_order(order, classes.len()))?,
                None => feasible::shapley_rounded(&bp, &qc, c).1,
            };
            per_class_max_slack(sys, &classes, &nu)?
        }
        PolicySpec::BaselineExcess { base, weights } => {
            let b0 = beta.get(beta.full()).max(0) as u64;
            let base_d = match base {
                BaseRule::Fair => feasible::shapley_rounded(&feasible::beta_mu(&beta, b0, &q, c)?, &q, c).1,
                BaseRule::MaxSlack => max_slack(sys, b0)?,
            };
            baseline_excess(&beta, &q, c, &base_d, weights)?
        }
        PolicySpec::StaticSplit { .. } => unreachable!(),
    };
    let mu = d.iter().sum();
    Ok(Selection { d, mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualcurve::DualCurveService;
    use crate::feasible::FlowView;

    fn pair(b1: u64, b2: u64, slot: usize) -> SystemSpectra {
        let f1 = DualCurveService::deadline_step(100, b1, 98usize.saturating_sub(slot)).unwrap();
        let f2 = DualCurveService::deadline_step(100, b2, 99 - slot).unwrap();
        SystemSpectra::new(4, 100, vec![FlowView::new(b1, f1.u_hat(b1)), FlowView::new(b2, f2.u_hat(b2))]).unwrap()
    }

    #[test]
    fn deadline_pair_slot_zero_max_slack_and_edf() {
        let sys = pair(200, 200, 0);
        assert_eq!(max_slack(&sys, 4).unwrap(), vec![4, 0]);
        assert_eq!(edf(&sys, 4, true).unwrap(), vec![4, 0]);
        assert_eq!(max_slack(&sys, 0).unwrap(), vec![0, 0]);
        assert!(edf(&sys, 4, false).is_err());
        assert!(matches!(max_slack(&sys, 401), Err(Error::NoMaxSlackSchedule { .. })));
    }

    #[test]
    fn beyond_horizon_deadlines_are_fifo_by_index() {
        let z = DualCurveService::zero(4).unwrap();
        let sys = SystemSpectra::new(3, 4, vec![FlowView::new(2, z.u_hat(2)), FlowView::new(5, z.u_hat(5))]).unwrap();
        assert_eq!(edf(&sys, 3, true).unwrap(), vec![2, 1]);
        assert_eq!(max_slack(&sys, 3).unwrap(), vec![2, 1]);
    }

    #[test]
    fn excess_and_static_split() {
        let beta = SetFunction::new(2, vec![0, 0, 0, 2]).unwrap();
        assert_eq!(baseline_excess(&beta, &[5, 5], 2, &[1, 1], &[1, 1]).unwrap(), vec![1, 1]);
        assert_eq!(baseline_excess(&beta, &[5, 5], 4, &[1, 1], &[1, 1]).unwrap(), vec![2, 2]);
        assert_eq!(baseline_excess(&beta, &[5, 5], 4, &[0, 1], &[1, 1]), Err(Error::InvalidBase));
        assert_eq!(static_split(&[200, 200], 4, &[2, 2]), vec![2, 2]);
        assert_eq!(static_split(&[1, 200], 4, &[2, 2]), vec![1, 2]);
    }

    #[test]
    fn per_class_reductions() {
        let sys = pair(200, 200, 0);
        assert_eq!(per_class_max_slack(&sys, &[vec![0, 1]], &[4]).unwrap(), max_slack(&sys, 4).unwrap());
        assert_eq!(per_class_max_slack(&sys, &[vec![0], vec![1]], &[1, 3]).unwrap(), vec![1, 3]);
        assert!(matches!(per_class_max_slack(&sys, &[vec![0], vec![1]], &[201, 0]), Err(Error::NoSchedule { .. })));
    }

    #[test]
    fn policy_json() {
        let p: PolicySpec = serde_json::from_str(r#"{"policy": "fair", "mu": "work_conserving"}"#).unwrap();
        assert_eq!(p, PolicySpec::Fair { mu: MuRule::WorkConserving });
        let p: PolicySpec = serde_json::from_str(r#"{"policy": "max_slack", "mu": {"fixed": 3}}"#).unwrap();
        assert_eq!(p, PolicySpec::MaxSlack { mu: MuRule::Fixed(3) });
        assert!(serde_json::from_str::<PolicySpec>(r#"{"policy": "fair", "color": 1}"#).is_err());
        assert!(serde_json::from_str::<PolicySpec>(r#"{"policy": "fair", "shares": [1]}"#).is_err());
        assert!(serde_json::from_str::<PolicySpec>(r#"{"policy": "priority"}"#).is_err());
        let p = PolicySpec::PerClassMaxSlack {
            mu: MuRule::Baseline,
            partition: vec![vec![0, 2], vec![1]],
            class_priority: Some(vec![1, 0]),
            promote_after: None,
        };
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<PolicySpec>(&text).unwrap(), p);
    }

    #[test]
    fn starvation_promotes_one_class() {
        let mut st = PolicyState::default();
        st.observe(&[1, 1, 1], &[1, 1, 0]);
        st.observe(&[1, 1, 1], &[1, 1, 0]);
        let cl = st.classes(&[vec![0], vec![1, 2]], Some(2), 3);
        assert_eq!(cl, vec![vec![0, 2], vec![1]]);
    }
}
