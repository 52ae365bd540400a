//! Exhaustive reference solver and seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;

pub const DEFAULT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub optimum: f64,
    /// First optimal set in lexicographic order.
    pub sites: Vec<usize>,
    pub enumerated: u64,
}

/// `C(m, p)`, saturating at `u64::MAX`.
pub fn binomial(m: usize, p: usize) -> u64 {
    if p > m {
        return 0;
    }
    let p = p.min(m - p) as u64;
    let mut acc: u128 = 1;
    for k in 0..p {
        acc = acc * (m as u128 - k as u128) / (k as u128 + 1);
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Enumerates every `p`-subset of sites in lexicographic order.
pub fn brute_force(inst: &Instance, p: usize, cap: u64) -> Result<OracleResult> {
    let m = inst.n_sites();
    let n = inst.n_customers();
    if p == 0 || p > m {
        return Err(Error::Invalid(format!("p = {p} must lie in 1..={m}")));
    }
    let count = binomial(m, p);
    if count > cap {
        return Err(Error::TooLarge(format!(
            "C({m}, {p}) = {count} subsets exceeds the cap of {cap}"
        )));
    }
    let dist: Vec<Vec<f64>> = (0..n).map(|i| inst.distance_row(i)).collect();
    // nearest[depth][i]: distance of customer i to the first `depth` chosen sites
    let mut nearest = vec![vec![f64::INFINITY; n]; p + 1];
    let mut idx: Vec<usize> = (0..p).collect();
    for d in 0..p {
        for i in 0..n {
            nearest[d + 1][i] = nearest[d][i].min(dist[i][idx[d]]);
        }
    }
    let mut best = (f64::INFINITY, idx.clone());
    let mut enumerated = 0u64;
    loop {
        enumerated += 1;
        let obj = nearest[p].iter().copied().fold(0.0, f64::max);
        if obj < best.0 {
            best = (obj, idx.clone());
        }
        // advance to the next combination
        let mut k = p;
        while k > 0 && idx[k - 1] == m - p + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for t in k..p {
            idx[t] = idx[t - 1] + 1;
        }
        for d in (k - 1)..p {
            let j = idx[d];
            let (lo, hi) = nearest.split_at_mut(d + 1);
            for ((nx, &pv), row) in hi[0].iter_mut().zip(&lo[d]).zip(&dist) {
                *nx = pv.min(row[j]);
            }
        }
    }
    Ok(OracleResult {
        optimum: if n == 0 { 0.0 } else { best.0 },
        sites: best.1,
        enumerated,
    })
}

/// Symmetric integer instance on `n` vertices: a random spanning tree plus
/// extra edges with probability `density`, weights in `1..=max_weight`,
/// closed under shortest paths so the triangle inequality holds.
pub fn random_graph_instance(n: usize, p: usize, density: f64, max_weight: u32, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.push((u, v, rng.gen_range(1..=max_weight) as f64));
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(density) {
                edges.push((u, v, rng.gen_range(1..=max_weight) as f64));
            }
        }
    }
    Instance::from_graph(n, &edges, p)
        .expect("a spanning tree keeps the graph connected")
        .with_name(format!("graph-n{n}-p{p}-s{seed}"))
}

/// `n` random points with integer coordinates in `[0, extent)` under the
/// floored Euclidean metric.
pub fn random_euclid_instance(n: usize, p: usize, extent: u32, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n)
        .map(|_| (rng.gen_range(0..extent) as f64, rng.gen_range(0..extent) as f64))
        .collect();
    Instance::from_coords(coords, p)
        .expect("generated coordinates are finite")
        .with_name(format!("euclid-n{n}-p{p}-s{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristic::eval_objective;

    #[test]
    fn line_optimum() {
        let inst = Instance::from_coords(vec![(0.0, 0.0), (1.0, 0.0), (4.0, 0.0), (9.0, 0.0)], 2).unwrap();
        let r = brute_force(&inst, 2, DEFAULT_CAP).unwrap();
        assert_eq!(r.optimum, 3.0);
        assert_eq!(r.sites, vec![1, 3]);
        assert_eq!(r.enumerated, 6);
        assert_eq!(brute_force(&inst, 4, DEFAULT_CAP).unwrap().optimum, 0.0);
    }

    #[test]
    fn single_customer_row() {
        let inst = Instance::from_rows(&[vec![5.0, 2.0, 7.0]], 1).unwrap();
        let r = brute_force(&inst, 1, DEFAULT_CAP).unwrap();
        assert_eq!((r.optimum, r.sites), (2.0, vec![1]));
    }

    #[test]
    fn cap_is_enforced() {
        let inst = random_graph_instance(30, 5, 0.2, 10, 1);
        assert!(matches!(brute_force(&inst, 5, 1000), Err(Error::TooLarge(_))));
        assert_eq!(binomial(30, 5), 142_506);
        assert_eq!(binomial(100, 5), 75_287_520);
    }

    #[test]
    fn incremental_enumeration_matches_direct_evaluation() {
        for seed in 0..20 {
            let inst = random_graph_instance(9, 3, 0.3, 9, seed);
            let r = brute_force(&inst, 3, DEFAULT_CAP).unwrap();
            assert_eq!(r.optimum, eval_objective(&inst, &r.sites));
            let radii = inst.candidate_radii(None).unwrap();
            assert!(radii.contains(r.optimum));
            let mut best = f64::INFINITY;
            for a in 0..9 {
                for b in a + 1..9 {
                    for c in b + 1..9 {
                        best = best.min(eval_objective(&inst, &[a, b, c]));
                    }
                }
            }
            assert_eq!(best, r.optimum);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = random_graph_instance(12, 3, 0.3, 20, 5);
        let b = random_graph_instance(12, 3, 0.3, 20, 5);
        for i in 0..12 {
            assert_eq!(a.distance_row(i), b.distance_row(i));
            for j in 0..12 {
                assert_eq!(a.distance(i, j), a.distance(j, i));
            }
        }
        let e = random_euclid_instance(10, 2, 100, 3);
        assert!(e.integral_distances());
    }
}
