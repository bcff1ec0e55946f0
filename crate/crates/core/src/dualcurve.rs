//! Dual-curve services `(u, v)`: a dynamic curve `u` updated every slot and a
//! static curve `v`, evaluated as
//! `ψ_j(q) = min{u_j, min_{1<=i<=j} (q_i + v_{j-i})}`.
//!
//! The backlog `b` is not stored here; callers pass it where it matters.
//! Only `v_0..v_{H-1}` are ever read, so `v` effectively saturates at `H - 1`.

use serde::{Deserialize, Serialize};

use crate::cumvec::{CumVec, Tau};
use crate::error::{invalid, Result};
use crate::minplus::{check_update, CumulativeMatrix, SpectralMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "DualJson", into = "DualJson")]
pub struct DualCurveService {
    u: CumVec,
    v: CumVec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DualJson {
    u: CumVec,
    v: CumVec,
}

impl TryFrom<DualJson> for DualCurveService {
    type Error = crate::Error;
    fn try_from(j: DualJson) -> Result<Self> {
        DualCurveService::new(j.u, j.v)
    }
}

impl From<DualCurveService> for DualJson {
    fn from(s: DualCurveService) -> Self {
        DualJson { u: s.u, v: s.v }
    }
}

/// A curve given either as explicit points or as piecewise-linear segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurveSpec {
    Points(Vec<u64>),
    Segments(SegmentCurve),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentCurve {
    pub segments: Vec<(usize, u64)>,
    #[serde(default)]
    pub offset: u64,
}

impl CurveSpec {
    pub fn materialize(&self, h: usize) -> Result<CumVec> {
        match self {
            CurveSpec::Points(p) => {
                let x = CumVec::new(p.clone())?;
                if x.horizon() != h {
                    return Err(invalid(format!("curve has horizon {}, expected {h}", x.horizon())));
                }
                Ok(x)
            }
            CurveSpec::Segments(s) => CumVec::from_segments(h, s.offset, &s.segments),
        }
    }
}

/// Per-task deadline offsets `τ_h(p)` for the queued tasks `h = 1..=q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDeadlineList(pub Vec<Tau>);

impl DualCurveService {
    pub fn new(u: CumVec, v: CumVec) -> Result<Self> {
        if u.horizon() != v.horizon() {
            return Err(invalid(format!("u has horizon {}, v has {}", u.horizon(), v.horizon())));
        }
        Ok(DualCurveService { u, v })
    }

    pub fn zero(h: usize) -> Result<Self> {
        let z = CumVec::zeros(h)?;
        Ok(DualCurveService { u: z.clone(), v: z })
    }

    /// Classical service curve: `u = v`.
    pub fn service_curve(v: CumVec) -> Self {
        DualCurveService { u: v.clone(), v }
    }

    /// `tasks` due by the end of slot `deadline`: `u = tasks · R^deadline δ`, `v = 0`.
    pub fn deadline_step(h: usize, tasks: u64, deadline: usize) -> Result<Self> {
        let u = CumVec::delta(h)?.scale(tasks).rshift(deadline);
        Ok(DualCurveService { u, v: CumVec::zeros(h)? })
    }

    /// Service curve `burst + rate (k - latency)` for `k > latency`, 0 before.
    pub fn template(h: usize, rate: u64, burst: u64, latency: usize) -> Result<Self> {
        let v = CumVec::from_fn(h, |k| if k > latency { burst + rate * (k - latency) as u64 } else { 0 })?;
        Ok(Self::service_curve(v))
    }

    pub fn horizon(&self) -> usize {
        self.u.horizon()
    }

    pub fn u(&self) -> &CumVec {
        &self.u
    }

    pub fn v(&self) -> &CumVec {
        &self.v
    }

    #[inline]
    fn v_at(&self, k: usize) -> u64 {
        self.v.get(k.min(self.horizon() - 1))
    }

    pub fn max_entry(&self) -> u64 {
        self.u.tail().max(self.v.tail())
    }

    pub fn eval(&self, q: &CumVec) -> Result<CumVec> {
        if q.horizon() != self.horizon() {
            return Err(invalid(format!("horizon mismatch: {} vs {}", q.horizon(), self.horizon())));
        }
        Ok(self.eval_ext(q))
    }

    /// Evaluates on `q` of any length, reading both curves with saturating tails.
    pub fn eval_ext(&self, q: &CumVec) -> CumVec {
        let qs = q.as_slice();
        let e = (0..qs.len())
            .map(|j| (1..=j).map(|i| qs[i] + self.v_at(j - i)).fold(self.u.get(j), u64::min))
            .collect();
        CumVec::raw(e)
    }

    /// `û_j = min{u_j, q1 + v_{j-1}}`.
    pub fn u_hat(&self, q1: u64) -> CumVec {
        let h = self.horizon();
        CumVec::raw((0..=h).map(|j| if j == 0 { 0 } else { self.u.get(j).min(q1 + self.v_at(j - 1)) }).collect())
    }

    /// Tasks that must be served this slot.
    pub fn immediate(&self, q1: u64) -> u64 {
        self.u.get(1).min(q1)
    }

    pub fn p_vector(&self, q1: u64) -> CumVec {
        self.u.cap(q1)
    }

    pub fn deadlines(&self, q1: u64) -> TaskDeadlineList {
        let p = self.p_vector(q1);
        TaskDeadlineList((1..=q1).map(|h| p.tau_unchecked(h)).collect())
    }

    pub fn update(&self, q1: u64, d: u64) -> Result<Self> {
        check_update(0, q1, self.immediate(q1), d)?;
        Ok(self.update_unchecked(q1, d))
    }

    /// `u̇ = R^{-1}(û - dδ)^+` without checking `d >= p`.
    pub fn update_unchecked(&self, q1: u64, d: u64) -> Self {
        DualCurveService { u: self.u_hat(q1).unshift_clip(d.min(q1)), v: self.v.clone() }
    }

    /// `M^{(u,v)}`: row 0 is `u`, rows below hold `v_{j-i}`.
    pub fn cumulative_matrix(&self) -> Result<CumulativeMatrix> {
        CumulativeMatrix::from_fn(self.horizon(), |i, j| if i == 0 { self.u.get(j) } else { self.v_at(j - i) })
    }

    pub fn spectrum(&self, b: u64) -> Result<SpectralMatrix> {
        SpectralMatrix::from_fn(self.horizon(), b, |i, j| {
            if i == 0 {
                self.u.get(j)
            } else {
                self.u.get(j).saturating_sub(b).min(self.v_at(j - i))
            }
        })
    }

    /// `λ_ij` without materializing the matrix.
    #[inline]
    pub fn lambda(&self, b: u64, i: usize, j: usize) -> u64 {
        if i >= j {
            0
        } else if i == 0 {
            self.u.get(j)
        } else {
            self.u.get(j).saturating_sub(b).min(self.v_at(j - i))
        }
    }

    /// Tandem `inner` then `outer`, where `b_outer` is the outer backlog.
    pub fn compose(inner: &Self, outer: &Self, b_outer: u64) -> Result<Self> {
        let h = inner.horizon();
        if outer.horizon() != h {
            return Err(invalid(format!("horizon mismatch: {h} vs {}", outer.horizon())));
        }
        let u = (0..=h)
            .map(|j| {
                (1..=j)
                    .map(|i| inner.u.get(i) + b_outer + outer.v_at(j - i))
                    .fold(outer.u.get(j), u64::min)
            })
            .collect();
        let v = inner.v.conv(&outer.v)?;
        Ok(DualCurveService { u: CumVec::new(u)?, v })
    }
}
