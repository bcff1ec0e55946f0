//! Spectral and cumulative matrices and the min-plus services they identify.
//!
//! Both matrix kinds are dense `(H+1) x (H+1)`. Updates read one column past
//! the horizon; that column is synthesized by the stationary-tail rule (see
//! [`tail_entry`]), which is exact for matrices whose rows below the first
//! depend only on the interval length once `j` passes `H` — in particular for
//! every dual-curve matrix.

use serde::{Deserialize, Serialize};

use crate::cumvec::CumVec;
use crate::error::{invalid, Error, Result};

pub const MAX_MATRIX_HORIZON: usize = 512;

#[derive(Clone, PartialEq, Eq, Hash)]
struct Dense {
    h: usize,
    a: Vec<u64>,
}

impl Dense {
    fn zeros(h: usize) -> Self {
        Dense { h, a: vec![0; (h + 1) * (h + 1)] }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> u64 {
        self.a[i * (self.h + 1) + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: u64) {
        let n = self.h + 1;
        self.a[i * n + j] = v;
    }

    /// Entry at column `j <= H + 1`; column `H + 1` comes from the tail rule.
    #[inline]
    fn col(&self, i: usize, j: usize) -> u64 {
        if j <= self.h {
            self.at(i, j)
        } else {
            tail_entry(|r| self.at(r, self.h), i, self.h)
        }
    }

    fn rows(&self) -> Vec<Vec<u64>> {
        self.a.chunks(self.h + 1).map(<[u64]>::to_vec).collect()
    }

    fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidHorizon(n.saturating_sub(1)));
        }
        let h = n - 1;
        if h > MAX_MATRIX_HORIZON {
            return Err(Error::InvalidHorizon(h));
        }
        let mut d = Dense::zeros(h);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Malformed { index: i, reason: format!("row has {} entries, expected {n}", row.len()) });
            }
            for (j, &v) in row.iter().enumerate() {
                d.set(i, j, v);
            }
        }
        Ok(d)
    }

    fn check_cumulative(&self) -> Result<()> {
        let h = self.h;
        for i in 0..=h {
            for j in 0..=h {
                let v = self.at(i, j);
                if i >= j && v != 0 {
                    return Err(bad(i, j, "must be 0 on and below the diagonal"));
                }
                if j < h && v > self.at(i, j + 1) {
                    return Err(bad(i, j, "row must be nondecreasing"));
                }
            }
        }
        Ok(())
    }
}

fn bad(i: usize, j: usize, why: &str) -> Error {
    Error::MalformedMatrix { i, j, reason: why.to_string() }
}

/// Stationary-tail entry of column `H + 1`, given column `H` as `col_h`.
///
/// Row 0 and row 1 saturate; deeper rows take the entry one row up, i.e. the
/// entry for the same interval length.
pub fn tail_entry(col_h: impl Fn(usize) -> u64, i: usize, h: usize) -> u64 {
    match i {
        0 | 1 => col_h(i),
        _ if i > h => 0,
        _ => col_h(i - 1).max(col_h(i)),
    }
}

fn check_matrix_horizon(h: usize) -> Result<()> {
    if h == 0 || h > MAX_MATRIX_HORIZON {
        Err(Error::InvalidHorizon(h))
    } else {
        Ok(())
    }
}

/// Upper-triangular spectral matrix `S` conditioned on backlog `b`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SpectralJson", into = "SpectralJson")]
pub struct SpectralMatrix {
    b: u64,
    m: Dense,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectralJson {
    b: u64,
    h: usize,
    s: Vec<Vec<u64>>,
}

impl TryFrom<SpectralJson> for SpectralMatrix {
    type Error = Error;
    fn try_from(j: SpectralJson) -> Result<Self> {
        if j.s.len() != j.h + 1 {
            return Err(invalid(format!("h = {} but {} rows given", j.h, j.s.len())));
        }
        SpectralMatrix::new(j.b, &j.s)
    }
}

impl From<SpectralMatrix> for SpectralJson {
    fn from(s: SpectralMatrix) -> Self {
        SpectralJson { b: s.b, h: s.m.h, s: s.m.rows() }
    }
}

impl std::fmt::Debug for SpectralMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralMatrix").field("b", &self.b).field("s", &self.m.rows()).finish()
    }
}

impl SpectralMatrix {
    pub fn new(b: u64, rows: &[Vec<u64>]) -> Result<Self> {
        let s = SpectralMatrix { b, m: Dense::from_rows(rows)? };
        s.validate()?;
        Ok(s)
    }

    pub fn zeros(h: usize, b: u64) -> Result<Self> {
        check_matrix_horizon(h)?;
        Ok(SpectralMatrix { b, m: Dense::zeros(h) })
    }

    /// Builds from `f(i, j)` for `i < j`, validating the result.
    pub fn from_fn(h: usize, b: u64, f: impl Fn(usize, usize) -> u64) -> Result<Self> {
        let s = Self::from_fn_unchecked(h, b, f)?;
        s.validate()?;
        Ok(s)
    }

    fn from_fn_unchecked(h: usize, b: u64, f: impl Fn(usize, usize) -> u64) -> Result<Self> {
        check_matrix_horizon(h)?;
        let mut m = Dense::zeros(h);
        for i in 0..h {
            for j in i + 1..=h {
                m.set(i, j, f(i, j));
            }
        }
        Ok(SpectralMatrix { b, m })
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.m;
        m.check_cumulative()?;
        for j in 0..=m.h {
            let cap = m.at(0, j).saturating_sub(self.b);
            for i in 1..=m.h {
                if m.at(i, j) > m.at(i - 1, j) {
                    return Err(bad(i, j, "column must be nonincreasing"));
                }
                if m.at(i, j) > cap {
                    return Err(bad(i, j, "exceeds (s_0j - b)^+"));
                }
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.m.h
    }

    pub fn backlog(&self) -> u64 {
        self.b
    }

    /// `s_ij` for `i, j <= H`.
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.m.at(i, j)
    }

    /// `s_ij` for any `j`, extending past the horizon with the stationary tail.
    pub fn get_ext(&self, i: usize, j: usize) -> u64 {
        let h = self.m.h;
        if i >= j {
            return 0;
        }
        if j <= h {
            return self.m.at(i, j);
        }
        if i == 0 {
            return self.m.at(0, h);
        }
        let shift = j - h;
        if i > shift {
            self.m.at(i - shift, h)
        } else {
            self.m.at(1, h)
        }
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.m.rows()
    }

    pub fn max_entry(&self) -> u64 {
        self.m.at(0, self.m.h)
    }

    /// Row `i` as a cumulative vector.
    pub fn row(&self, i: usize) -> CumVec {
        let h = self.m.h;
        CumVec::raw((0..=h).map(|j| self.m.at(i, j)).collect())
    }

    /// `ψ^S(q)_j = min_{i<=j} (q_i + s_ij)`.
    pub fn eval(&self, q: &CumVec) -> Result<CumVec> {
        if q.horizon() != self.m.h {
            return Err(invalid(format!("horizon mismatch: {} vs {}", q.horizon(), self.m.h)));
        }
        Ok(self.eval_ext(q))
    }

    /// Evaluates on a `q` of any length using the stationary tail.
    pub fn eval_ext(&self, q: &CumVec) -> CumVec {
        let n = q.horizon();
        let qs = q.as_slice();
        CumVec::raw(
            (0..=n).map(|j| (0..=j).map(|i| qs[i] + self.get_ext(i, j)).min().unwrap_or(0)).collect(),
        )
    }

    /// Conditional spectrum `ŝ` given `q_1 = q1`, itself a spectral matrix with backlog `q1`.
    pub fn conditional(&self, q1: u64) -> Result<SpectralMatrix> {
        if q1 < self.b {
            return Err(invalid(format!("q1 = {q1} below backlog {}", self.b)));
        }
        let m = &self.m;
        Self::from_fn_unchecked(m.h, q1, |i, j| {
            if i == 0 {
                m.at(0, j).min(q1 + m.at(1, j))
            } else {
                m.at(0, j).saturating_sub(q1).min(m.at(i, j))
            }
        })
    }

    /// `p_j = min{ŝ_0j, q1}`.
    pub fn p_vector(&self, q1: u64) -> Result<CumVec> {
        Ok(self.conditional(q1)?.row(0).cap(q1))
    }

    /// `p = min{s_01, q1}`.
    pub fn immediate(&self, q1: u64) -> u64 {
        self.m.at(0, 1).min(q1)
    }

    /// Next-slot spectral matrix after serving `d` of `q1` queued tasks.
    pub fn update(&self, q1: u64, d: u64) -> Result<SpectralMatrix> {
        check_update(self.b, q1, self.immediate(q1), d)?;
        Ok(self.update_unchecked(q1, d))
    }

    /// As [`update`](Self::update) but tolerating `d < p`; the shortfall stays owed.
    pub fn update_unchecked(&self, q1: u64, d: u64) -> SpectralMatrix {
        let m = &self.m;
        let d = d.min(q1);
        let up = Self::from_fn_unchecked(m.h, q1 - d, |i, j| {
            if i == 0 {
                m.col(0, j + 1).min(q1 + m.col(1, j + 1)).saturating_sub(d)
            } else {
                m.col(0, j + 1).saturating_sub(q1).min(m.col(i + 1, j + 1))
            }
        })
        .expect("horizon already validated");
        debug_assert!(up.validate().is_ok(), "{up:?}");
        up
    }
}

pub(crate) fn check_update(b: u64, q1: u64, p: u64, d: u64) -> Result<()> {
    if q1 < b {
        return Err(invalid(format!("q1 = {q1} below backlog {b}")));
    }
    if d > q1 {
        return Err(Error::CausalityViolation { d, q: q1 });
    }
    if d < p {
        return Err(Error::GuaranteeViolation { p, d });
    }
    Ok(())
}

/// Cumulative matrix `M` of a min-plus service `ψ^M(q)_j = min_{i<=j}(q_i + m_ij)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CumulativeMatrix {
    m: Dense,
}

impl std::fmt::Debug for CumulativeMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("CumulativeMatrix").field(&self.m.rows()).finish()
    }
}

impl CumulativeMatrix {
    pub fn new(rows: &[Vec<u64>]) -> Result<Self> {
        let m = Dense::from_rows(rows)?;
        m.check_cumulative()?;
        Ok(CumulativeMatrix { m })
    }

    pub fn from_fn(h: usize, f: impl Fn(usize, usize) -> u64) -> Result<Self> {
        check_matrix_horizon(h)?;
        let mut m = Dense::zeros(h);
        for i in 0..h {
            for j in i + 1..=h {
                m.set(i, j, f(i, j));
            }
        }
        m.check_cumulative()?;
        Ok(CumulativeMatrix { m })
    }

    pub fn horizon(&self) -> usize {
        self.m.h
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.m.at(i, j)
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.m.rows()
    }

    pub fn eval(&self, q: &CumVec) -> Result<CumVec> {
        let h = self.m.h;
        if q.horizon() != h {
            return Err(invalid(format!("horizon mismatch: {} vs {h}", q.horizon())));
        }
        let qs = q.as_slice();
        Ok(CumVec::raw((0..=h).map(|j| (0..=j).map(|i| qs[i] + self.m.at(i, j)).min().unwrap_or(0)).collect()))
    }

    /// Spectral matrix identifying the same service for backlog `b`.
    pub fn normalize(&self, b: u64) -> SpectralMatrix {
        let m = &self.m;
        let s = SpectralMatrix::from_fn_unchecked(m.h, b, |i, j| {
            let head = m.at(0, j);
            if i == 0 {
                head
            } else {
                (1..=i).map(|k| m.at(k, j)).min().unwrap_or(0).min(head.saturating_sub(b))
            }
        })
        .expect("horizon already validated");
        debug_assert!(s.validate().is_ok(), "{s:?}");
        s
    }

    pub fn update(&self, q1: u64, d: u64) -> Result<CumulativeMatrix> {
        let p = self.m.at(0, 1).min(q1);
        check_update(0, q1, p, d)?;
        let m = &self.m;
        let mut out = Dense::zeros(m.h);
        for i in 0..m.h {
            for j in i + 1..=m.h {
                let v = if i == 0 {
                    m.col(0, j + 1).min(q1 + m.col(1, j + 1)).saturating_sub(d)
                } else {
                    m.col(i + 1, j + 1)
                };
                out.set(i, j, v);
            }
        }
        debug_assert!(out.check_cumulative().is_ok());
        Ok(CumulativeMatrix { m: out })
    }
}
