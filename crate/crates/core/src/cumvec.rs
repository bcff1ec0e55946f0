//! Finite-horizon cumulative vectors.
//!
//! A `CumVec` of horizon `H` stores entries `x_0..=x_H` with `x_0 = 0`,
//! nondecreasing, and is read with a saturating tail (`x_j = x_H` for
//! `j > H`). All arithmetic is exact on `u64`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Slot index returned by [`CumVec::tau`]; `Beyond` sorts after every slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tau {
    At(usize),
    Beyond,
}

impl Tau {
    pub fn slot(self) -> Option<usize> {
        match self {
            Tau::At(j) => Some(j),
            Tau::Beyond => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct CumVec {
    e: Vec<u64>,
}

impl fmt::Debug for CumVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.e.fmt(f)
    }
}

impl TryFrom<Vec<u64>> for CumVec {
    type Error = Error;
    fn try_from(e: Vec<u64>) -> Result<Self> {
        CumVec::new(e)
    }
}

impl From<CumVec> for Vec<u64> {
    fn from(x: CumVec) -> Self {
        x.e
    }
}

impl CumVec {
    /// Validates `entries` (length `H + 1`, `H >= 1`).
    pub fn new(e: Vec<u64>) -> Result<Self> {
        if e.len() < 2 {
            return Err(Error::InvalidHorizon(e.len().saturating_sub(1)));
        }
        if e[0] != 0 {
            return Err(Error::Malformed { index: 0, reason: format!("must be 0, got {}", e[0]) });
        }
        if let Some(j) = (1..e.len()).find(|&j| e[j] < e[j - 1]) {
            return Err(Error::Malformed {
                index: j,
                reason: format!("decreases from {} to {}", e[j - 1], e[j]),
            });
        }
        Ok(CumVec { e })
    }

    /// Caller guarantees the invariants.
    pub(crate) fn raw(e: Vec<u64>) -> Self {
        debug_assert!(e.len() >= 2 && e[0] == 0 && e.windows(2).all(|w| w[0] <= w[1]), "{e:?}");
        CumVec { e }
    }

    fn check_horizon(h: usize) -> Result<()> {
        if h == 0 {
            Err(Error::InvalidHorizon(h))
        } else {
            Ok(())
        }
    }

    pub fn zeros(h: usize) -> Result<Self> {
        Self::check_horizon(h)?;
        Ok(CumVec { e: vec![0; h + 1] })
    }

    /// `[0, 1, 1, ..., 1]`.
    pub fn delta(h: usize) -> Result<Self> {
        Self::check_horizon(h)?;
        let mut e = vec![1; h + 1];
        e[0] = 0;
        Ok(CumVec { e })
    }

    /// `x_j = f(j)` for `j >= 1`; `x_0 = 0`. Monotonicity is validated.
    pub fn from_fn(h: usize, f: impl Fn(usize) -> u64) -> Result<Self> {
        Self::check_horizon(h)?;
        Self::new((0..=h).map(|j| if j == 0 { 0 } else { f(j) }).collect())
    }

    /// Token-bucket style curve `burst + rate * j` for `j >= 1`.
    pub fn rate_burst(h: usize, rate: u64, burst: u64) -> Result<Self> {
        Self::from_fn(h, |j| burst + rate * j as u64)
    }

    /// `rate * (j - latency)^+`.
    pub fn rate_latency(h: usize, rate: u64, latency: usize) -> Result<Self> {
        Self::from_fn(h, |j| rate * j.saturating_sub(latency) as u64)
    }

    /// Piecewise-linear curve: `x_j = offset + sum of per-slot rates over slots 1..=j`,
    /// where `segments` lists `(length, rate)` pairs; flat after the last segment.
    pub fn from_segments(h: usize, offset: u64, segments: &[(usize, u64)]) -> Result<Self> {
        Self::check_horizon(h)?;
        let mut e = Vec::with_capacity(h + 1);
        e.push(0);
        let mut rates = segments.iter().flat_map(|&(len, r)| std::iter::repeat_n(r, len));
        let mut acc = offset;
        for _ in 1..=h {
            acc += rates.next().unwrap_or(0);
            e.push(acc);
        }
        Ok(CumVec { e })
    }

    pub fn horizon(&self) -> usize {
        self.e.len() - 1
    }

    /// Saturating read.
    pub fn get(&self, j: usize) -> u64 {
        self.e[j.min(self.e.len() - 1)]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.e
    }

    pub fn into_vec(self) -> Vec<u64> {
        self.e
    }

    /// `x_∞` under the saturating tail.
    pub fn tail(&self) -> u64 {
        self.e[self.e.len() - 1]
    }

    pub fn max_entry(&self) -> u64 {
        self.tail()
    }

    /// Truncates or saturation-extends to horizon `h`.
    pub fn with_horizon(&self, h: usize) -> Result<Self> {
        Self::check_horizon(h)?;
        Ok(CumVec { e: (0..=h).map(|j| self.get(j)).collect() })
    }

    pub fn scale(&self, k: u64) -> Self {
        CumVec { e: self.e.iter().map(|&x| x * k).collect() }
    }

    fn zip(&self, y: &CumVec, f: impl Fn(u64, u64) -> u64) -> Result<Self> {
        self.same_horizon(y)?;
        Ok(CumVec::raw(self.e.iter().zip(&y.e).map(|(&a, &b)| f(a, b)).collect()))
    }

    fn same_horizon(&self, y: &CumVec) -> Result<()> {
        if self.e.len() != y.e.len() {
            return Err(invalid(format!("horizon mismatch: {} vs {}", self.horizon(), y.horizon())));
        }
        Ok(())
    }

    pub fn add(&self, y: &CumVec) -> Result<Self> {
        self.zip(y, |a, b| a + b)
    }

    pub fn min(&self, y: &CumVec) -> Result<Self> {
        self.zip(y, u64::min)
    }

    pub fn max(&self, y: &CumVec) -> Result<Self> {
        self.zip(y, u64::max)
    }

    /// `min{x, k δ}`.
    pub fn cap(&self, k: u64) -> Self {
        CumVec::raw(self.e.iter().map(|&x| x.min(k)).collect())
    }

    /// `(x - k δ)^+`.
    pub fn sub_delta(&self, k: u64) -> Self {
        let mut e: Vec<u64> = self.e.iter().map(|&x| x.saturating_sub(k)).collect();
        e[0] = 0;
        CumVec::raw(e)
    }

    /// `x + k δ`.
    pub fn add_delta(&self, k: u64) -> Self {
        let mut e: Vec<u64> = self.e.iter().map(|&x| x + k).collect();
        e[0] = 0;
        CumVec::raw(e)
    }

    /// Pointwise `x <= y` (equal horizons; false otherwise).
    pub fn le(&self, y: &CumVec) -> bool {
        self.e.len() == y.e.len() && self.e.iter().zip(&y.e).all(|(a, b)| a <= b)
    }

    /// `max{ j | x_j < h }`, or `Beyond` when `x_H < h`.
    pub fn tau(&self, h: u64) -> Result<Tau> {
        if h == 0 {
            return Err(invalid("tau requires h >= 1"));
        }
        Ok(self.tau_unchecked(h))
    }

    pub(crate) fn tau_unchecked(&self, h: u64) -> Tau {
        if self.tail() < h {
            return Tau::Beyond;
        }
        // first index with x_j >= h, minus one
        let first = self.e.partition_point(|&x| x < h);
        Tau::At(first - 1)
    }

    /// `R^k x`.
    pub fn rshift(&self, k: usize) -> Self {
        let n = self.e.len();
        CumVec::raw((0..n).map(|j| if j >= k { self.e[j - k] } else { 0 }).collect())
    }

    /// `R^{-1}(x - d δ)^+` with the last entry duplicated; entry 0 is forced to 0.
    pub fn unshift_clip(&self, d: u64) -> Self {
        let n = self.e.len();
        let mut e: Vec<u64> = (0..n).map(|j| self.get(j + 1).saturating_sub(d)).collect();
        e[0] = 0;
        CumVec::raw(e)
    }

    /// Min-plus convolution `(x ⊗ y)_j = min_{i<=j} (x_i + y_{j-i})`.
    pub fn conv(&self, y: &CumVec) -> Result<Self> {
        self.same_horizon(y)?;
        let n = self.e.len();
        let e = (0..n)
            .map(|j| (0..=j).map(|i| self.e[i] + y.e[j - i]).min().unwrap_or(0))
            .collect();
        Ok(CumVec::raw(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(e: &[u64]) -> CumVec {
        CumVec::new(e.to_vec()).unwrap()
    }

    #[test]
    fn delta_and_zero_horizon() {
        assert_eq!(CumVec::delta(3).unwrap().as_slice(), &[0, 1, 1, 1]);
        assert_eq!(CumVec::delta(1).unwrap().as_slice(), &[0, 1]);
        assert_eq!(CumVec::delta(0), Err(Error::InvalidHorizon(0)));
        assert_eq!(CumVec::delta(2).unwrap().scale(200).as_slice(), &[0, 200, 200]);
    }

    #[test]
    fn tau_examples() {
        let x = cv(&[0, 2, 2, 5]);
        assert_eq!(x.tau(1).unwrap(), Tau::At(0));
        assert_eq!(x.tau(3).unwrap(), Tau::At(2));
        assert_eq!(x.tau(6).unwrap(), Tau::Beyond);
        assert!(x.tau(0).is_err());
    }

    #[test]
    fn shifts() {
        assert_eq!(cv(&[0, 1, 2, 3]).rshift(1).as_slice(), &[0, 0, 1, 2]);
        let x = cv(&[0, 1, 2, 3]);
        assert_eq!(x.rshift(0), x);
        let big = CumVec::delta(100).unwrap().scale(200);
        let r98 = big.rshift(98);
        assert!(r98.as_slice()[..=98].iter().all(|&v| v == 0));
        assert_eq!(&r98.as_slice()[99..], &[200, 200]);
        assert_eq!(cv(&[0, 3, 5]).unshift_clip(3).as_slice(), &[0, 2, 2]);
        assert_eq!(cv(&[0, 3, 5]).unshift_clip(9).as_slice(), &[0, 0, 0]);
        assert_eq!(r98.unshift_clip(0), big.rshift(97));
    }

    #[test]
    fn conv_examples() {
        let x = cv(&[0, 1, 2]);
        assert_eq!(x.conv(&cv(&[0, 2, 4])).unwrap().as_slice(), &[0, 1, 2]);
        assert_eq!(x.conv(&CumVec::zeros(2).unwrap()).unwrap().as_slice(), &[0, 0, 0]);
        assert_eq!(x.conv(&CumVec::delta(2).unwrap().scale(1000)).unwrap(), x);
        assert!(x.conv(&CumVec::zeros(3).unwrap()).is_err());
    }

    #[test]
    fn json_errors_are_position_indexed() {
        let err = serde_json::from_str::<CumVec>("[0, 3, 2]").unwrap_err().to_string();
        assert!(err.contains("entry 2"), "{err}");
        let err = serde_json::from_str::<CumVec>("[1, 3]").unwrap_err().to_string();
        assert!(err.contains("entry 0"), "{err}");
        let x: CumVec = serde_json::from_str("[0,1,4]").unwrap();
        assert_eq!(serde_json::to_string(&x).unwrap(), "[0,1,4]");
    }

    #[test]
    fn segments() {
        let x = CumVec::from_segments(5, 1, &[(2, 0), (2, 3)]).unwrap();
        assert_eq!(x.as_slice(), &[0, 1, 1, 4, 7, 7]);
        assert_eq!(CumVec::rate_latency(4, 2, 1).unwrap().as_slice(), &[0, 0, 2, 4, 6]);
    }
}
