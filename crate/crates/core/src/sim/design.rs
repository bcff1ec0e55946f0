//! Dual-curve services that bound backlog or delay for arrivals within a
//! declared envelope.

use serde::{Deserialize, Serialize};

use crate::cumvec::CumVec;
use crate::dualcurve::DualCurveService;
use crate::error::{Error, Result};

/// Admissible arrivals: `q_j - q_i <= burst + rate (j - i)` for `i < j`,
/// with the initial backlog counted at slot 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub rate: u64,
    pub burst: u64,
}

impl Envelope {
    pub fn admits(&self, q: &CumVec) -> bool {
        let e = q.as_slice();
        (0..e.len()).all(|i| (i + 1..e.len()).all(|j| e[j] - e[i] <= self.burst + self.rate * (j - i) as u64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceDesign {
    /// Backlog never exceeds this many tasks.
    BacklogBound(u64),
    /// Every task leaves at most this many slots after the slot it arrived in.
    DelayBound(usize),
}

/// A service curve `u = v` meeting `design` for every envelope-conforming arrival.
pub fn design_service(h: usize, c: u64, design: ServiceDesign, env: Envelope) -> Result<DualCurveService> {
    let Envelope { rate, burst } = env;
    if rate > c {
        return Err(Error::InfeasibleDesign(format!("arrival rate {rate} exceeds capacity {c}")));
    }
    let v = match design {
        ServiceDesign::BacklogBound(bb) => {
            if burst + rate > bb + c {
                return Err(Error::InfeasibleDesign(format!(
                    "a first-slot burst of {} cannot be held to backlog {bb} at capacity {c}",
                    burst + rate
                )));
            }
            CumVec::from_fn(h, |k| if k == 0 { 0 } else { (burst + rate * k as u64).saturating_sub(bb) })?
        }
        ServiceDesign::DelayBound(th) => {
            if burst + rate > (th as u64 + 1) * c {
                return Err(Error::InfeasibleDesign(format!(
                    "a burst of {} cannot clear within {} slots at capacity {c}",
                    burst + rate,
                    th + 1
                )));
            }
            CumVec::from_fn(h, |k| if k > th { burst + rate * (k - th) as u64 } else { 0 })?
        }
    };
    Ok(DualCurveService::service_curve(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumvec::Tau;
    use crate::oracle::lattice;

    #[test]
    fn zero_backlog_zero_arrivals_needs_nothing() {
        let s = design_service(4, 1, ServiceDesign::BacklogBound(0), Envelope { rate: 0, burst: 0 }).unwrap();
        assert_eq!(s, DualCurveService::zero(4).unwrap());
    }

    #[test]
    fn impossible_backlog_bound() {
        // a first slot with bb + c + 1 arrivals can never be cleared to bb
        let r = design_service(4, 2, ServiceDesign::BacklogBound(1), Envelope { rate: 0, burst: 4 });
        assert!(matches!(r, Err(Error::InfeasibleDesign(_))));
        assert!(design_service(4, 2, ServiceDesign::BacklogBound(1), Envelope { rate: 3, burst: 0 }).is_err());
    }

    #[test]
    fn delay_design_holds_over_envelope() {
        let h = 4;
        let env = Envelope { rate: 1, burst: 1 };
        for th in 0..3 {
            let s = design_service(h, 2, ServiceDesign::DelayBound(th), env).unwrap();
            for q in lattice(h, 0, 6).unwrap().into_iter().filter(|q| env.admits(q)) {
                let psi = s.eval(&q).unwrap();
                for k in 1..=q.tail() {
                    let Tau::At(arr) = q.tau(k).unwrap() else { unreachable!() };
                    if let Tau::At(dep) = psi.tau(k).unwrap() {
                        assert!(dep - arr <= th, "{q:?} task {k}");
                    } else {
                        // only tasks too late to be guaranteed inside the window
                        assert!(arr + th >= h);
                    }
                }
            }
        }
    }

    #[test]
    fn backlog_design_holds_over_envelope() {
        let h = 4;
        let env = Envelope { rate: 1, burst: 2 };
        for bb in 0..3 {
            let s = design_service(h, 3, ServiceDesign::BacklogBound(bb), env).unwrap();
            for q in lattice(h, 0, 7).unwrap().into_iter().filter(|q| env.admits(q)) {
                let psi = s.eval(&q).unwrap();
                assert!((1..=h).all(|j| q.get(j) - psi.get(j) <= bb), "{q:?}");
            }
        }
    }
}
