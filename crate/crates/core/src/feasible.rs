//! Schedulability, the baseline function, feasible permutohedra and
//! multiplexing gains.

use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::cumvec::CumVec;
use crate::dualcurve::DualCurveService;
use crate::error::{invalid, Error, Result};
use crate::minplus::SpectralMatrix;
use crate::oracle::Matrix;

/// Largest flow count for explicit set-function tables.
pub const MAX_FLOWS: usize = 16;

/// Read access to a spectrum `λ_ij`, `0 <= i, j <= H`.
pub trait Spectrum {
    fn horizon(&self) -> usize;
    fn lambda(&self, i: usize, j: usize) -> u64;
}

impl Spectrum for SpectralMatrix {
    fn horizon(&self) -> usize {
        SpectralMatrix::horizon(self)
    }
    fn lambda(&self, i: usize, j: usize) -> u64 {
        self.get(i, j)
    }
}

impl Spectrum for Matrix {
    fn horizon(&self) -> usize {
        self.len() - 1
    }
    fn lambda(&self, i: usize, j: usize) -> u64 {
        self[i][j]
    }
}

/// Spectrum of a dual-curve service with backlog `b`, evaluated on demand.
#[derive(Debug, Clone, Copy)]
pub struct DualSpectrum<'a> {
    pub svc: &'a DualCurveService,
    pub b: u64,
}

impl Spectrum for DualSpectrum<'_> {
    fn horizon(&self) -> usize {
        self.svc.horizon()
    }
    fn lambda(&self, i: usize, j: usize) -> u64 {
        self.svc.lambda(self.b, i, j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub schedulable: bool,
    /// First violating interval `[i, j)` in row-major order.
    pub violation: Option<(usize, usize)>,
}

impl Verdict {
    pub fn ok() -> Self {
        Verdict { schedulable: true, violation: None }
    }

    pub fn into_result(self) -> Result<()> {
        match self.violation {
            None => Ok(()),
            Some((i, j)) => Err(Error::NotSchedulable { i, j }),
        }
    }
}

fn horizon_of(spectra: &[&dyn Spectrum]) -> Result<usize> {
    let h = spectra.first().map_or(0, |s| s.horizon());
    if spectra.iter().any(|s| s.horizon() != h) {
        return Err(invalid("flows have different horizons"));
    }
    Ok(h)
}

/// `Σ_ω λ_ij <= (j - i) c` for all `0 <= i < j <= H`.
pub fn is_schedulable(spectra: &[&dyn Spectrum], c: u64) -> Result<Verdict> {
    let h = horizon_of(spectra)?;
    for i in 0..h {
        for j in i + 1..=h {
            let total: u64 = spectra.iter().map(|s| s.lambda(i, j)).sum();
            if total > (j - i) as u64 * c {
                return Ok(Verdict { schedulable: false, violation: Some((i, j)) });
            }
        }
    }
    Ok(Verdict::ok())
}

/// Dual-curve specialization in `O(nH)`:
/// `max{u_j^Ω, Σ_ω min{(u_H - b)^+, v_j}} <= jc`.
pub fn is_schedulable_dual(flows: &[(&DualCurveService, u64)], c: u64) -> Result<Verdict> {
    let specs: Vec<DualSpectrum> = flows.iter().map(|&(svc, b)| DualSpectrum { svc, b }).collect();
    let dyns: Vec<&dyn Spectrum> = specs.iter().map(|s| s as &dyn Spectrum).collect();
    let h = horizon_of(&dyns)?;
    let fine = (1..=h).all(|j| {
        let head: u64 = flows.iter().map(|(s, _)| s.u().get(j)).sum();
        // rows below the first peak at column H for a fixed interval length
        let body: u64 = if j < h { flows.iter().map(|&(s, b)| s.lambda(b, h - j, h)).sum() } else { 0 };
        head.max(body) <= j as u64 * c
    });
    if fine {
        Ok(Verdict::ok())
    } else {
        is_schedulable(&dyns, c)
    }
}

/// A flow's conditional spectrum rows 0 and 1 for this slot's queue `q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowView {
    pub q: u64,
    /// `λ̂_0j`, `j = 0..=H`.
    pub row0: CumVec,
}

impl FlowView {
    pub fn new(q: u64, row0: CumVec) -> Self {
        FlowView { q, row0 }
    }

    pub fn horizon(&self) -> usize {
        self.row0.horizon()
    }

    /// `λ̂_0j` with saturation past the horizon.
    pub fn hat0(&self, j: usize) -> u64 {
        self.row0.get(j)
    }

    /// `λ̂_1j = (λ̂_0j - q)^+`.
    pub fn hat1(&self, j: usize) -> u64 {
        self.row0.get(j).saturating_sub(self.q)
    }

    /// `p = λ̂_01`.
    pub fn immediate(&self) -> u64 {
        self.row0.get(1)
    }

    /// `p_j = min{λ̂_0j, q}`.
    pub fn p_vector(&self) -> CumVec {
        self.row0.cap(self.q)
    }
}

/// Per-flow conditional views plus the server capacity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpectra {
    pub c: u64,
    pub h: usize,
    pub flows: Vec<FlowView>,
}

impl SystemSpectra {
    pub fn new(c: u64, h: usize, flows: Vec<FlowView>) -> Result<Self> {
        if flows.iter().any(|f| f.horizon() != h) {
            return Err(invalid("flows have different horizons"));
        }
        if flows.len() > MAX_FLOWS {
            return Err(invalid(format!("{} flows exceed the limit of {MAX_FLOWS}", flows.len())));
        }
        Ok(SystemSpectra { c, h, flows })
    }

    pub fn n(&self) -> usize {
        self.flows.len()
    }

    pub fn queues(&self) -> Vec<u64> {
        self.flows.iter().map(|f| f.q).collect()
    }

    /// `min_j (jc - Σ_ω λ̂_0j)` over `1 <= j <= H`.
    pub fn headroom(&self) -> i64 {
        (1..=self.h)
            .map(|j| (j as u64 * self.c) as i64 - self.flows.iter().map(|f| f.hat0(j)).sum::<u64>() as i64)
            .min()
            .unwrap_or(0)
    }
}

/// Integer function on subsets of `n` flows, indexed by bitmask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetFunction {
    n: usize,
    values: Vec<i64>,
}

impl SetFunction {
    pub fn new(n: usize, values: Vec<i64>) -> Result<Self> {
        if n > MAX_FLOWS {
            return Err(invalid(format!("{n} flows exceed the limit of {MAX_FLOWS}")));
        }
        if values.len() != 1 << n {
            return Err(invalid(format!("expected {} values, got {}", 1usize << n, values.len())));
        }
        Ok(SetFunction { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> i64) -> Result<Self> {
        if n > MAX_FLOWS {
            return Err(invalid(format!("{n} flows exceed the limit of {MAX_FLOWS}")));
        }
        Ok(SetFunction { n, values: (0..1usize << n).map(f).collect() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn full(&self) -> usize {
        (1 << self.n) - 1
    }

    pub fn get(&self, mask: usize) -> i64 {
        self.values[mask]
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    /// First pair violating `χ(A) + χ(B) <= χ(A ∪ B) + χ(A ∩ B)`, if any.
    pub fn supermodular_violation(&self) -> Option<(usize, usize)> {
        let m = 1usize << self.n;
        for a in 0..m {
            for b in a + 1..m {
                if self.values[a] + self.values[b] > self.values[a | b] + self.values[a & b] {
                    return Some((a, b));
                }
            }
        }
        None
    }

    pub fn is_supermodular(&self) -> bool {
        self.supermodular_violation().is_none()
    }
}

/// Builds `mask -> Σ_{ω ∈ mask} x_ω` for all masks.
fn subset_sums(x: &[i64]) -> Vec<i64> {
    let mut s = vec![0i64; 1 << x.len()];
    for mask in 1..s.len() {
        let low = mask.trailing_zeros() as usize;
        s[mask] = s[mask & (mask - 1)] + x[low];
    }
    s
}

/// `β(Γ) = max_{0<=j<=H} (λ̂_{0,j+1}^Γ + λ̂_{1,j+1}^Γ̄ - jc)`.
///
/// Fails with `NotSchedulable` when `β(∅) > 0`, which no schedulable system allows.
pub fn baseline(sys: &SystemSpectra) -> Result<SetFunction> {
    let n = sys.n();
    let mut best = vec![i64::MIN; 1 << n];
    let mut worst_empty = (0i64, 0usize);
    for j in 0..=sys.h {
        let w: Vec<i64> = sys.flows.iter().map(|f| (f.hat0(j + 1) - f.hat1(j + 1)) as i64).collect();
        let rest: i64 = sys.flows.iter().map(|f| f.hat1(j + 1) as i64).sum::<i64>() - (j as u64 * sys.c) as i64;
        if rest > worst_empty.0 {
            worst_empty = (rest, j);
        }
        let sums = subset_sums(&w);
        for (b, s) in best.iter_mut().zip(sums) {
            *b = (*b).max(s + rest);
        }
    }
    if worst_empty.0 > 0 {
        return Err(Error::NotSchedulable { i: 1, j: worst_empty.1 + 1 });
    }
    SetFunction::new(n, best)
}

/// `β(Γ)` for one subset, without building the table.
pub fn baseline_value(sys: &SystemSpectra, mask: usize) -> i64 {
    (0..=sys.h)
        .map(|j| {
            let s: u64 = sys
                .flows
                .iter()
                .enumerate()
                .map(|(w, f)| if mask >> w & 1 == 1 { f.hat0(j + 1) } else { f.hat1(j + 1) })
                .sum();
            s as i64 - (j as u64 * sys.c) as i64
        })
        .max()
        .unwrap_or(0)
}

/// Feasible totals `[β(Ω), min{c, q^Ω}]`; empty when `lo > hi`.
pub fn mu_range(beta: &SetFunction, q: &[u64], c: u64) -> (i64, u64) {
    (beta.get(beta.full()), c.min(q.iter().sum()))
}

/// `β_μ(Γ) = max{β(Γ), μ - q^Γ̄}`.
pub fn beta_mu(beta: &SetFunction, mu: u64, q: &[u64], c: u64) -> Result<SetFunction> {
    let (lo, hi) = mu_range(beta, q, c);
    if (mu as i64) < lo || mu > hi {
        return Err(Error::InfeasibleTotal { mu, lo, hi });
    }
    let qs = subset_sums(&q.iter().map(|&x| x as i64).collect::<Vec<_>>());
    let full = beta.full();
    SetFunction::from_fn(beta.n(), |m| beta.get(m).max(mu as i64 - qs[full & !m]))
}

/// Vertex of `P(χ)` for a strict priority order, listed from highest to lowest.
pub fn vertex(chi: &SetFunction, priority: &[usize]) -> Result<Vec<u64>> {
    check_permutation(priority, chi.n())?;
    let mut d = vec![0u64; chi.n()];
    let mut set = 0usize;
    for &w in priority.iter().rev() {
        let next = set | 1 << w;
        d[w] = (chi.get(next) - chi.get(set)).max(0) as u64;
        set = next;
    }
    Ok(d)
}

fn check_permutation(p: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if p.len() != n || p.iter().any(|&w| w >= n || std::mem::replace(&mut seen[w], true)) {
        return Err(invalid(format!("{p:?} is not a permutation of 0..{n}")));
    }
    Ok(())
}

/// Average of all vertices, via Shapley marginal contributions.
pub fn shapley(chi: &SetFunction) -> Vec<Ratio<i128>> {
    let n = chi.n();
    if n == 0 {
        return Vec::new();
    }
    let fact: Vec<i128> = (0..=n).scan(1i128, |acc, k| {
        if k > 0 {
            *acc *= k as i128;
        }
        Some(*acc)
    })
    .collect();
    let mut num = vec![0i128; n];
    for set in 0..1usize << n {
        let s = set.count_ones() as usize;
        if s == n {
            continue;
        }
        let weight = fact[s] * fact[n - s - 1];
        for (w, acc) in num.iter_mut().enumerate() {
            if set >> w & 1 == 0 {
                *acc += weight * (chi.get(set | 1 << w) - chi.get(set)) as i128;
            }
        }
    }
    num.into_iter().map(|x| Ratio::new(x, fact[n])).collect()
}

/// Integral point of `P(χ)` close to the Shapley centroid.
///
/// Largest-remainder rounding, then unit moves toward violated subsets; falls
/// back to the vertex ordered by centroid size if the repair stalls.
pub fn shapley_rounded(chi: &SetFunction, q: &[u64], c: u64) -> (Vec<Ratio<i128>>, Vec<u64>) {
    let phi = shapley(chi);
    let n = chi.n();
    let total = chi.get(chi.full()).max(0) as i128;
    let mut d: Vec<i128> = phi.iter().map(|r| r.floor().to_integer().max(0)).collect();
    let mut left = total - d.iter().sum::<i128>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = phi[a] - phi[a].floor();
        let fb = phi[b] - phi[b].floor();
        fb.cmp(&fa).then(a.cmp(&b))
    });
    for &w in order.iter().cycle().take(n * 4) {
        if left <= 0 {
            break;
        }
        if (d[w] as u64) < q[w] {
            d[w] += 1;
            left -= 1;
        }
    }
    let mut d: Vec<u64> = d.into_iter().map(|x| x as u64).collect();
    let budget = 4 * (n + 1) * (total as usize + 1);
    for _ in 0..budget {
        if contains_slice(chi, q, c, &d) {
            return (phi, d);
        }
        if !repair_step(chi, q, &phi, &mut d) {
            break;
        }
    }
    if contains_slice(chi, q, c, &d) {
        return (phi, d);
    }
    let mut prio: Vec<usize> = (0..n).collect();
    prio.sort_by(|&a, &b| phi[b].cmp(&phi[a]).then(a.cmp(&b)));
    let v = vertex(chi, &prio).expect("valid permutation");
    (phi, v)
}

/// Moves one unit into the most violated subset. Returns false if no move exists.
fn repair_step(chi: &SetFunction, q: &[u64], phi: &[Ratio<i128>], d: &mut [u64]) -> bool {
    let n = chi.n();
    let sums = subset_sums(&d.iter().map(|&x| x as i64).collect::<Vec<_>>());
    let full = chi.full();
    let mut worst = (0i64, 0usize);
    for (m, &sum) in sums.iter().enumerate().take(full + 1).skip(1) {
        let deficit = chi.get(m) - sum;
        if deficit > worst.0 {
            worst = (deficit, m);
        }
    }
    let (deficit, gamma) = worst;
    if deficit > 0 {
        let gap = |w: usize| phi[w] - Ratio::from_integer(d[w] as i128);
        let to = (0..n).filter(|&w| gamma >> w & 1 == 1 && d[w] < q[w]).max_by(|&a, &b| gap(a).cmp(&gap(b)).then(b.cmp(&a)));
        let from = (0..n).filter(|&w| gamma >> w & 1 == 0 && d[w] > 0).min_by(|&a, &b| gap(a).cmp(&gap(b)).then(a.cmp(&b)));
        if let (Some(t), Some(f)) = (to, from) {
            d[t] += 1;
            d[f] -= 1;
            return true;
        }
        if let (Some(t), None) = (to, from) {
            if sums[full] < chi.get(full) {
                d[t] += 1;
                return true;
            }
        }
        return false;
    }
    // totals off: shed from the largest surplus
    let s = sums[full];
    let target = chi.get(full);
    if s > target {
        let gap = |w: usize| Ratio::from_integer(d[w] as i128) - phi[w];
        if let Some(f) = (0..n).filter(|&w| d[w] > 0).max_by(|&a, &b| gap(a).cmp(&gap(b)).then(b.cmp(&a))) {
            d[f] -= 1;
            return true;
        }
    }
    false
}

/// `d <= q`, `Σd <= c` and `d^Γ >= χ(Γ)` for every `Γ`.
pub fn contains(chi: &SetFunction, q: &[u64], c: u64, d: &[u64]) -> bool {
    if d.len() != chi.n() || q.len() != chi.n() {
        return false;
    }
    if d.iter().zip(q).any(|(a, b)| a > b) || d.iter().sum::<u64>() > c {
        return false;
    }
    let sums = subset_sums(&d.iter().map(|&x| x as i64).collect::<Vec<_>>());
    sums.iter().zip(chi.values()).all(|(s, v)| s >= v)
}

/// [`contains`] plus `Σd = χ(Ω)`: membership in the slice `P(β_μ)`.
pub fn contains_slice(chi: &SetFunction, q: &[u64], c: u64, d: &[u64]) -> bool {
    d.iter().sum::<u64>() as i64 == chi.get(chi.full()) && contains(chi, q, c, d)
}

/// Validates that `classes` partitions `0..n` into nonempty classes.
pub fn check_partition(classes: &[Vec<usize>], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for class in classes {
        if class.is_empty() {
            return Err(invalid("empty class"));
        }
        for &w in class {
            if w >= n || std::mem::replace(&mut seen[w], true) {
                return Err(invalid(format!("flow {w} is out of range or repeated")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(invalid("partition does not cover every flow"));
    }
    Ok(())
}

pub fn class_mask(class: &[usize]) -> usize {
    class.iter().fold(0, |m, &w| m | 1 << w)
}

/// `β^P(S) = χ(∪_{Γ∈S} Γ)` over class subsets `S`.
pub fn per_class_beta(chi: &SetFunction, classes: &[Vec<usize>]) -> Result<SetFunction> {
    check_partition(classes, chi.n())?;
    let masks: Vec<usize> = classes.iter().map(|c| class_mask(c)).collect();
    SetFunction::from_fn(classes.len(), |s| {
        let m = masks.iter().enumerate().filter(|(k, _)| s >> k & 1 == 1).fold(0, |acc, (_, &m)| acc | m);
        chi.get(m)
    })
}

/// `ρ(Γ) = max_{i<j} λ_ij^Γ / (j - i)`.
pub fn rho(spectra: &[&dyn Spectrum], mask: usize) -> Result<Ratio<u64>> {
    let h = horizon_of(spectra)?;
    let mut best = Ratio::zero();
    for i in 0..h {
        for j in i + 1..=h {
            let s: u64 = spectra.iter().enumerate().filter(|(w, _)| mask >> w & 1 == 1).map(|(_, s)| s.lambda(i, j)).sum();
            let r = Ratio::new(s, (j - i) as u64);
            if r > best {
                best = r;
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gain {
    pub singles: Vec<Ratio<u64>>,
    pub total: Ratio<u64>,
    pub classes: Vec<Ratio<u64>>,
    pub eta: Ratio<u64>,
    pub eta_p: Option<Ratio<u64>>,
}

fn ratio_or_one(num: Ratio<u64>, den: Ratio<u64>) -> Ratio<u64> {
    if den.is_zero() {
        Ratio::from_integer(1)
    } else {
        num / den
    }
}

/// `η = Σ_ω ρ({ω}) / ρ(Ω)` and, with a partition, `η^P = Σ_ω ρ({ω}) / Σ_Γ ρ(Γ)`.
/// A zero denominator yields 1.
pub fn multiplexing_gain(spectra: &[&dyn Spectrum], classes: Option<&[Vec<usize>]>) -> Result<Gain> {
    let n = spectra.len();
    let singles = (0..n).map(|w| rho(spectra, 1 << w)).collect::<Result<Vec<_>>>()?;
    let total = rho(spectra, (1 << n) - 1)?;
    let sum: Ratio<u64> = singles.iter().copied().fold(Ratio::zero(), |a, b| a + b);
    let eta = ratio_or_one(sum, total);
    let (class_rho, eta_p) = match classes {
        Some(cl) => {
            check_partition(cl, n)?;
            let r = cl.iter().map(|c| rho(spectra, class_mask(c))).collect::<Result<Vec<_>>>()?;
            let den = r.iter().copied().fold(Ratio::zero(), |a, b| a + b);
            let e = ratio_or_one(sum, den);
            (r, Some(e))
        }
        None => (Vec::new(), None),
    };
    Ok(Gain { singles, total, classes: class_rho, eta, eta_p })
}
