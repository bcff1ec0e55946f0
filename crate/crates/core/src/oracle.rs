//! Brute-force reference implementations over tiny enumerated instances.
//!
//! A [`TabulatedService`] stores `ψ(q)` for every queued-arrival vector in the
//! lattice `0 = q_0, b <= q_1 <= ... <= q_H <= cap`. Spectra are exhaustive
//! maxima over that lattice; the update shrinks the horizon by one so that no
//! tail convention is involved.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cumvec::CumVec;
use crate::dualcurve::DualCurveService;
use crate::error::{invalid, Error, Result};
use crate::minplus::SpectralMatrix;

/// Upper bound on lattice size accepted by the oracle.
pub const MAX_LATTICE: u64 = 200_000;

pub type Matrix = Vec<Vec<u64>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TabulatedService {
    h: usize,
    b: u64,
    cap: u64,
    table: BTreeMap<Vec<u64>, Vec<u64>>,
}

fn binom(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of lattice points `b <= q_1 <= ... <= q_h <= cap`.
pub fn lattice_size(h: usize, b: u64, cap: u64) -> u64 {
    if b > cap {
        return 0;
    }
    let m = cap - b + 1;
    binom(m + h as u64 - 1, h as u64)
}

/// Every queued-arrival vector of horizon `h` with `q_1 >= b` and entries `<= cap`.
pub fn lattice(h: usize, b: u64, cap: u64) -> Result<Vec<CumVec>> {
    if h == 0 {
        return Err(Error::InvalidHorizon(0));
    }
    let n = lattice_size(h, b, cap);
    if n > MAX_LATTICE {
        return Err(Error::OracleTooLarge(format!("{n} lattice points at h={h}, cap={cap}")));
    }
    let mut out = Vec::with_capacity(n as usize);
    let mut cur = vec![0u64; h + 1];
    fn rec(j: usize, lo: u64, cap: u64, cur: &mut Vec<u64>, out: &mut Vec<CumVec>) {
        if j == cur.len() {
            out.push(CumVec::raw(cur.clone()));
            return;
        }
        for x in lo..=cap {
            cur[j] = x;
            rec(j + 1, x, cap, cur, out);
        }
    }
    rec(1, b, cap, &mut cur, &mut out);
    Ok(out)
}

impl TabulatedService {
    pub fn tabulate(h: usize, b: u64, cap: u64, psi: impl Fn(&CumVec) -> CumVec) -> Result<Self> {
        if b > cap {
            return Err(invalid(format!("backlog {b} exceeds cap {cap}")));
        }
        let mut table = BTreeMap::new();
        for q in lattice(h, b, cap)? {
            let y = psi(&q);
            if !y.le(&q) {
                return Err(invalid(format!("ψ({q:?}) = {y:?} exceeds q")));
            }
            table.insert(q.into_vec(), y.into_vec());
        }
        Ok(TabulatedService { h, b, cap, table })
    }

    pub fn from_dual(svc: &DualCurveService, b: u64, cap: u64) -> Result<Self> {
        Self::tabulate(svc.horizon(), b, cap, |q| svc.eval_ext(q))
    }

    pub fn from_spectral(s: &SpectralMatrix, cap: u64) -> Result<Self> {
        Self::tabulate(s.horizon(), s.backlog(), cap, |q| s.eval_ext(q))
    }

    pub fn horizon(&self) -> usize {
        self.h
    }

    pub fn backlog(&self) -> u64 {
        self.b
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn eval(&self, q: &CumVec) -> Option<CumVec> {
        self.table.get(q.as_slice()).map(|y| CumVec::raw(y.clone()))
    }

    fn spectrum_over<'a>(&'a self, keys: impl Iterator<Item = (&'a Vec<u64>, &'a Vec<u64>)>) -> Matrix {
        let n = self.h + 1;
        let mut lam = vec![vec![0u64; n]; n];
        for (q, y) in keys {
            for (i, row) in lam.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate().skip(i + 1) {
                    *cell = (*cell).max(y[j].saturating_sub(q[i]));
                }
            }
        }
        lam
    }

    /// `λ_ij = max_q (ψ_j(q) - q_i)^+`.
    pub fn brute_spectrum(&self) -> Matrix {
        self.spectrum_over(self.table.iter())
    }

    /// `λ̂_ij`: the same maximum restricted to `q_1 = q1`.
    pub fn brute_conditional_spectrum(&self, q1: u64) -> Result<Matrix> {
        self.check_q1(q1)?;
        Ok(self.spectrum_over(self.table.iter().filter(|(q, _)| q[1] == q1)))
    }

    fn check_q1(&self, q1: u64) -> Result<()> {
        if q1 < self.b || q1 > self.cap {
            return Err(invalid(format!("q1 = {q1} outside [{}, {}]", self.b, self.cap)));
        }
        Ok(())
    }

    /// `p = λ̂_01`.
    pub fn immediate(&self, q1: u64) -> Result<u64> {
        Ok(self.brute_conditional_spectrum(q1)?[0][1])
    }

    /// Service for the next slot after serving `d` of `q1` queued tasks,
    /// tabulated over horizon `H - 1` and cap `cap - d`.
    pub fn brute_update(&self, q1: u64, d: u64) -> Result<TabulatedService> {
        if self.h < 2 {
            return Err(Error::InvalidHorizon(self.h));
        }
        self.check_q1(q1)?;
        if d > q1 {
            return Err(Error::CausalityViolation { d, q: q1 });
        }
        let p = self.immediate(q1)?;
        if d < p {
            return Err(Error::GuaranteeViolation { p, d });
        }
        let b_next = q1 - d;
        let cap_next = self.cap - d;
        let mut table = BTreeMap::new();
        for qn in lattice(self.h - 1, b_next, cap_next)? {
            // q = R(q̇ - ḃδ) + q1 δ
            let qs = qn.as_slice();
            let mut q = Vec::with_capacity(self.h + 1);
            q.push(0);
            q.push(q1);
            q.extend(qs[1..].iter().map(|&x| x + d));
            let y = &self.table[&q];
            let yn: Vec<u64> = (0..self.h).map(|j| if j == 0 { 0 } else { y[j + 1].saturating_sub(d) }).collect();
            table.insert(qn.into_vec(), yn);
        }
        Ok(TabulatedService { h: self.h - 1, b: b_next, cap: cap_next, table })
    }

    /// Extends by one slot, duplicating the last guarantee entry.
    pub fn pad(&self) -> Result<TabulatedService> {
        let mut table = BTreeMap::new();
        for (q, y) in &self.table {
            let last = *q.last().expect("nonempty");
            for x in last..=self.cap {
                let mut qk = q.clone();
                qk.push(x);
                let mut yk = y.clone();
                yk.push(*y.last().expect("nonempty"));
                table.insert(qk, yk);
            }
        }
        if lattice_size(self.h + 1, self.b, self.cap) > MAX_LATTICE {
            return Err(Error::OracleTooLarge("padding".into()));
        }
        Ok(TabulatedService { h: self.h + 1, b: self.b, cap: self.cap, table })
    }
}

/// Whether `Σ λ_ij <= (j - i) c` for all `i < j` over the given spectra.
pub fn spectra_schedulable(spectra: &[Matrix], c: u64) -> bool {
    let Some(first) = spectra.first() else { return true };
    let n = first.len();
    (0..n).all(|i| (i + 1..n).all(|j| spectra.iter().map(|m| m[i][j]).sum::<u64>() <= (j - i) as u64 * c))
}

/// One flow of an oracle system: its tabulated service and this slot's queue.
#[derive(Debug, Clone)]
pub struct OracleFlow {
    pub service: TabulatedService,
    pub q: u64,
}

impl OracleFlow {
    /// Tabulates a dual-curve flow with a cap large enough for exact spectra.
    pub fn from_dual(svc: &DualCurveService, b: u64, q: u64) -> Result<Self> {
        let cap = svc.max_entry() + q + 1;
        Ok(OracleFlow { service: TabulatedService::from_dual(svc, b, cap)?, q })
    }

    pub fn from_spectral(s: &SpectralMatrix, q: u64) -> Result<Self> {
        let cap = s.max_entry() + q + 1;
        Ok(OracleFlow { service: TabulatedService::from_spectral(s, cap)?, q })
    }
}

/// Every valid schedule whose induced next-slot system is schedulable.
/// Returns the empty set when the current system itself is not schedulable.
pub fn brute_feasible_set(flows: &[OracleFlow], c: u64) -> Result<Vec<Vec<u64>>> {
    if flows.len() > 3 || c > 4 || flows.iter().any(|f| f.service.horizon() > 4) {
        return Err(Error::OracleTooLarge(format!("{} flows, c = {c}", flows.len())));
    }
    let now: Vec<Matrix> = flows.iter().map(|f| f.service.brute_spectrum()).collect();
    if !spectra_schedulable(&now, c) {
        return Ok(Vec::new());
    }
    // next-slot spectrum for each (flow, d), None when the update is invalid
    let mut next: Vec<Vec<Option<Matrix>>> = Vec::new();
    for f in flows {
        let opts = (0..=f.q.min(c))
            .map(|d| {
                if f.service.horizon() == 1 {
                    // the next state spans no interval; only d >= p matters
                    let p = f.service.immediate(f.q).ok()?;
                    (d >= p).then(|| vec![vec![0]])
                } else {
                    f.service.brute_update(f.q, d).ok().map(|t| t.brute_spectrum())
                }
            })
            .collect();
        next.push(opts);
    }
    let mut out = Vec::new();
    let mut d = vec![0u64; flows.len()];
    fn rec(k: usize, left: u64, d: &mut Vec<u64>, next: &[Vec<Option<Matrix>>], c: u64, out: &mut Vec<Vec<u64>>) {
        if k == d.len() {
            let picked: Option<Vec<Matrix>> = d.iter().zip(next).map(|(&dk, opts)| opts[dk as usize].clone()).collect();
            if let Some(sp) = picked {
                if spectra_schedulable(&sp, c) {
                    out.push(d.clone());
                }
            }
            return;
        }
        for x in 0..next[k].len() as u64 {
            if x > left {
                break;
            }
            d[k] = x;
            rec(k + 1, left - x, d, next, c, out);
        }
    }
    rec(0, c, &mut d, &next, c, &mut out);
    Ok(out)
}
