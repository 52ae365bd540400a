//! Primal side: objective evaluation, the LP-guided greedy and the
//! farthest-point customer sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instance::Instance;

/// A set of `p` open sites and its exact objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalSolution {
    /// Open sites, ascending.
    pub sites: Vec<usize>,
    pub objective: f64,
}

impl PrimalSolution {
    pub fn new(inst: &Instance, mut sites: Vec<usize>) -> Self {
        sites.sort_unstable();
        sites.dedup();
        let objective = eval_objective(inst, &sites);
        PrimalSolution { sites, objective }
    }
}

/// `max_i min_{j ∈ sites} d(i, j)`; `+∞` for an empty set.
pub fn eval_objective(inst: &Instance, sites: &[usize]) -> f64 {
    if sites.is_empty() {
        return f64::INFINITY;
    }
    (0..inst.n_customers())
        .map(|i| {
            sites
                .iter()
                .map(|&j| inst.distance(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Per-customer distance to the nearest chosen site, kept incrementally.
struct Coverage<'a> {
    inst: &'a Instance,
    nearest: Vec<f64>,
}

impl<'a> Coverage<'a> {
    fn new(inst: &'a Instance) -> Self {
        Coverage {
            inst,
            nearest: vec![f64::INFINITY; inst.n_customers()],
        }
    }

    fn objective_with(&self, j: usize) -> f64 {
        self.nearest
            .iter()
            .enumerate()
            .map(|(i, &cur)| cur.min(self.inst.distance(i, j)))
            .fold(0.0, f64::max)
    }

    fn add(&mut self, j: usize) {
        for (i, cur) in self.nearest.iter_mut().enumerate() {
            *cur = cur.min(self.inst.distance(i, j));
        }
    }

    fn objective(&self) -> f64 {
        if self.nearest.is_empty() {
            return 0.0;
        }
        self.nearest.iter().copied().fold(0.0, f64::max)
    }
}

/// Greedy rounding of a fractional `y*`: sites with positive weight are
/// visited by decreasing weight (ties by index) and kept whenever they
/// strictly lower the objective, in repeated passes until `p` are open.
///
/// When fewer than `p` sites carry weight the list is padded with the
/// remaining sites in ascending order. A pass that opens nothing opens the
/// listed site giving the smallest objective instead.
pub fn greedy_from_lp(inst: &Instance, y: &[f64], p: usize) -> PrimalSolution {
    let m = inst.n_sites();
    let p = p.min(m);
    let mut list: Vec<usize> = (0..m).filter(|&j| y[j] > 0.0).collect();
    list.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    if list.len() < p {
        let mut seen = vec![false; m];
        for &j in &list {
            seen[j] = true;
        }
        list.extend((0..m).filter(|&j| !seen[j]).take(p - list.len()));
    }

    let mut cov = Coverage::new(inst);
    let mut open = vec![false; m];
    let mut chosen = Vec::with_capacity(p);
    let mut current = f64::INFINITY;
    while chosen.len() < p {
        let mut added = false;
        for &j in &list {
            if chosen.len() == p {
                break;
            }
            if open[j] {
                continue;
            }
            let cand = cov.objective_with(j);
            if cand < current {
                cov.add(j);
                open[j] = true;
                chosen.push(j);
                current = cov.objective();
                added = true;
            }
        }
        if !added && chosen.len() < p {
            let best = list
                .iter()
                .copied()
                .filter(|&j| !open[j])
                .map(|j| (j, cov.objective_with(j)))
                .fold(None, |b: Option<(usize, f64)>, c| match b {
                    Some(bb) if bb.1 <= c.1 => Some(bb),
                    _ => Some(c),
                })
                .expect("candidate list holds at least p sites")
                .0;
            cov.add(best);
            open[best] = true;
            chosen.push(best);
            current = cov.objective();
        }
    }
    chosen.sort_unstable();
    PrimalSolution {
        objective: cov.objective(),
        sites: chosen,
    }
}

/// Farthest-point sample of `k` customers; the first one is drawn from a
/// `ChaCha8` stream seeded with `seed`.
pub fn farthest_point_sample(inst: &Instance, k: usize, seed: u64) -> Vec<usize> {
    let n = inst.n_customers();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let first = ChaCha8Rng::seed_from_u64(seed).gen_range(0..n);
    farthest_point_sample_from(inst, k, first)
}

/// Farthest-point sample starting at `first`. Customer `i` is measured to
/// the sample through `d(i, i')`, i.e. customers double as sites. Ties go to
/// the smallest index.
pub fn farthest_point_sample_from(inst: &Instance, k: usize, first: usize) -> Vec<usize> {
    let n = inst.n_customers();
    let k = k.min(n);
    let mut out = Vec::with_capacity(k);
    if k == 0 {
        return out;
    }
    let mut gap = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut next = first;
    loop {
        out.push(next);
        taken[next] = true;
        if out.len() == k {
            return out;
        }
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (i, g) in gap.iter_mut().enumerate() {
            if taken[i] {
                continue;
            }
            *g = g.min(inst.distance(i, next));
            if *g > best.1 {
                best = (i, *g);
            }
        }
        next = best.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Points 0, 1, 4, 9 on a line.
    fn line() -> Instance {
        Instance::from_coords(vec![(0.0, 0.0), (1.0, 0.0), (4.0, 0.0), (9.0, 0.0)], 2).unwrap()
    }

    #[test]
    fn objective_examples() {
        let inst = line();
        assert_eq!(eval_objective(&inst, &[1, 3]), 3.0);
        assert_eq!(eval_objective(&inst, &[0, 1, 2, 3]), 0.0);
        assert_eq!(eval_objective(&inst, &[0]), 9.0);
        assert_eq!(eval_objective(&inst, &[]), f64::INFINITY);
    }

    #[test]
    fn greedy_hand_trace() {
        let inst = line();
        let s = greedy_from_lp(&inst, &[0.0, 0.9, 0.0, 0.8], 2);
        assert_eq!(s.sites, vec![1, 3]);
        assert_eq!(s.objective, 3.0);
    }

    #[test]
    fn greedy_single_center_and_integral_support() {
        let inst = line().with_p(1).unwrap();
        let s = greedy_from_lp(&inst, &[0.0, 0.0, 1.0, 0.0], 1);
        assert_eq!((s.sites.clone(), s.objective), (vec![2], 5.0));
        let inst = line();
        let s = greedy_from_lp(&inst, &[1.0, 0.0, 1.0, 0.0], 2);
        assert_eq!(s.sites, vec![0, 2]);
        assert_eq!(s.objective, eval_objective(&inst, &[0, 2]));
    }

    #[test]
    fn greedy_pads_and_escapes() {
        let inst = line();
        // only one weighted site: padding adds site 0
        let s = greedy_from_lp(&inst, &[0.0, 0.0, 0.0, 2.0], 2);
        assert_eq!(s.sites.len(), 2);
        // identical points: the second copy never improves, escape hatch fires
        let dup = Instance::from_coords(vec![(0.0, 0.0), (0.0, 0.0), (5.0, 0.0)], 3).unwrap();
        let s = greedy_from_lp(&dup, &[1.0, 1.0, 1.0], 3);
        assert_eq!(s.sites, vec![0, 1, 2]);
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn sampler_examples() {
        let inst = line();
        assert_eq!(farthest_point_sample_from(&inst, 3, 0), vec![0, 3, 2]);
        let mut all = farthest_point_sample_from(&inst, 4, 1);
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(farthest_point_sample_from(&inst, 1, 2), vec![2]);
        let a = farthest_point_sample(&inst, 3, 42);
        assert_eq!(a, farthest_point_sample(&inst, 3, 42));
        assert_eq!(a.len(), 3);
    }
}
