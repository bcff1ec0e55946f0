#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wcsched_core::dualcurve::DualCurveService;
use wcsched_core::feasible::{FlowView, SystemSpectra};
use wcsched_core::oracle::Matrix;
use wcsched_core::sim::gen::random_dual_system;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A schedulable dual-curve system with this slot's queues drawn on top of the backlogs.
pub struct DualCase {
    pub c: u64,
    pub h: usize,
    pub flows: Vec<(DualCurveService, u64)>,
    pub q: Vec<u64>,
}

impl DualCase {
    pub fn random(r: &mut ChaCha8Rng, n: usize, max_h: usize, max_c: u64) -> Self {
        let h = r.gen_range(1..=max_h);
        let c = r.gen_range(1..=max_c);
        let flows = random_dual_system(r, n, h, c, 2).unwrap();
        let q = flows.iter().map(|(_, b)| b + r.gen_range(0..=2)).collect();
        DualCase { c, h, flows, q }
    }

    pub fn sys(&self) -> SystemSpectra {
        let views = self.flows.iter().zip(&self.q).map(|((s, _), &q)| FlowView::new(q, s.u_hat(q))).collect();
        SystemSpectra::new(self.c, self.h, views).unwrap()
    }

    /// Every `d <= q` with total `<= c`.
    pub fn valid_schedules(&self) -> Vec<Vec<u64>> {
        let mut all = vec![Vec::new()];
        for &qk in &self.q {
            all = all
                .into_iter()
                .flat_map(|d: Vec<u64>| (0..=qk.min(self.c)).map(move |x| [d.clone(), vec![x]].concat()))
                .collect();
        }
        all.retain(|d| d.iter().sum::<u64>() <= self.c);
        all
    }

    /// Summed next-slot spectrum after serving `d`, or `None` if some `d < p`.
    pub fn next_sum(&self, d: &[u64]) -> Option<Matrix> {
        let n = self.h + 1;
        let mut sum = vec![vec![0u64; n]; n];
        for (((s, _), &q), &dk) in self.flows.iter().zip(&self.q).zip(d) {
            let m = s.update(q, dk).ok()?.spectrum(q - dk).unwrap();
            for (i, row) in sum.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x += m.get(i, j);
                }
            }
        }
        Some(sum)
    }
}
