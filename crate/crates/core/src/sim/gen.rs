//! Random schedulable dual-curve systems, used as test scaffolding.
//!
//! Curves are drawn with per-slot increments up to `c`, then every entry
//! (and every backlog) is halved until the system is schedulable.

use rand::Rng;

use crate::cumvec::CumVec;
use crate::dualcurve::DualCurveService;
use crate::error::Result;
use crate::feasible;
use crate::minplus::SpectralMatrix;

/// A cumulative vector with per-slot increments in `0..=step`.
pub fn random_curve<R: Rng>(rng: &mut R, h: usize, step: u64) -> CumVec {
    let mut e = vec![0u64; h + 1];
    for j in 1..=h {
        e[j] = e[j - 1] + rng.gen_range(0..=step);
    }
    CumVec::new(e).expect("nondecreasing by construction")
}

fn halve(x: &CumVec) -> CumVec {
    CumVec::new(x.as_slice().iter().map(|&e| e / 2).collect()).expect("halving keeps order")
}

/// `n` dual-curve flows with backlogs that are jointly schedulable at capacity `c`.
pub fn random_dual_system<R: Rng>(rng: &mut R, n: usize, h: usize, c: u64, max_b: u64) -> Result<Vec<(DualCurveService, u64)>> {
    let step = c.max(1);
    let mut flows: Vec<(DualCurveService, u64)> = (0..n)
        .map(|_| {
            let u = random_curve(rng, h, step);
            let v = random_curve(rng, h, step);
            Ok((DualCurveService::new(u, v)?, rng.gen_range(0..=max_b)))
        })
        .collect::<Result<_>>()?;
    loop {
        let refs: Vec<(&DualCurveService, u64)> = flows.iter().map(|(s, b)| (s, *b)).collect();
        if feasible::is_schedulable_dual(&refs, c)?.schedulable {
            return Ok(flows);
        }
        // halve the flow with the largest curve first to keep some variety
        let k = (0..n).max_by_key(|&k| flows[k].0.max_entry() + flows[k].1).expect("n > 0 when unschedulable");
        let (s, b) = &flows[k];
        flows[k] = (DualCurveService::new(halve(s.u()), halve(s.v()))?, b / 2);
    }
}

/// A valid spectral matrix with entries up to `max` and backlog `b`.
pub fn random_spectral<R: Rng>(rng: &mut R, h: usize, max: u64, b: u64) -> Result<SpectralMatrix> {
    let mut s = vec![vec![0u64; h + 1]; h + 1];
    for j in 1..=h {
        s[0][j] = rng.gen_range(s[0][j - 1]..=max.max(s[0][j - 1]));
    }
    for i in 1..h {
        for j in i + 1..=h {
            let lo = s[i][j - 1];
            let hi = s[i - 1][j].min(s[0][j].saturating_sub(b));
            s[i][j] = rng.gen_range(lo..=hi);
        }
    }
    SpectralMatrix::new(b, &s)
}

/// Per-slot arrivals, uniform in `0..=max_per_slot` for each flow.
pub fn random_arrivals<R: Rng>(rng: &mut R, slots: usize, n: usize, max_per_slot: u64) -> Vec<Vec<u64>> {
    (0..slots).map(|_| (0..n).map(|_| rng.gen_range(0..=max_per_slot)).collect()).collect()
}
