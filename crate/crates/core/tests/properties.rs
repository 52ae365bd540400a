//! Randomized checks of the structural facts the solver relies on.

use pcenter::bounds::{
    check_pc1_point, iterate_lb_sharp, lb_star, pc1_lp_value, pc2_lp_value, pclb_value, projection_witness,
    scp_lp_value, PclbVariant,
};
use pcenter::cuts::{build_cut, max_violation, max_violation_brute};
use pcenter::engine::{solve, Scheme, SolverConfig};
use pcenter::heuristic::{eval_objective, greedy_from_lp};
use pcenter::oracle::{brute_force, random_euclid_instance, random_graph_instance, DEFAULT_CAP};
use pcenter::Instance;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(n: usize, p: usize, seed: u64) -> Instance {
    if seed % 2 == 0 {
        random_graph_instance(n, p, 0.25, 20, seed)
    } else {
        random_euclid_instance(n, p, 60, seed)
    }
}

/// A point with `Σy = p` and `0 <= y <= 1`, spread by random transfers.
fn fractional_y(m: usize, p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut y = vec![p as f64 / m as f64; m];
    for _ in 0..4 * m {
        let (a, b) = (rng.gen_range(0..m), rng.gen_range(0..m));
        if a == b {
            continue;
        }
        let t = rng.gen::<f64>() * (1.0 - y[a]).min(y[b]);
        y[a] += t;
        y[b] -= t;
    }
    y
}

fn subsets(m: usize, p: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for j in start..=m - left {
            cur.push(j);
            rec(j + 1, m, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, p, &mut Vec::new(), &mut out);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lifted_cuts_hold_for_every_feasible_set(seed in 0u64..10_000, n in 4usize..9, p in 1usize..4) {
        let p = p.min(n - 1);
        let inst = instance(n, p, seed);
        let opt = brute_force(&inst, p, DEFAULT_CAP).unwrap().optimum;
        for lb in [0.0, opt / 2.0, opt] {
            for set in subsets(n, p) {
                let z = eval_objective(&inst, &set);
                let mut open = vec![false; n];
                for &j in &set {
                    open[j] = true;
                }
                for i in 0..n {
                    for j in 0..n {
                        if let Some(cut) = build_cut(&inst, i, j, lb) {
                            prop_assert!(cut.is_satisfied_by_sites(&open, z, 1e-9));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn a_larger_lift_bound_never_weakens_a_cut(seed in 0u64..10_000, n in 3usize..12) {
        let inst = instance(n, 2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = fractional_y(n, 2, &mut rng);
        let (lo, hi) = (rng.gen_range(0.0..20.0), rng.gen_range(20.0..40.0));
        for i in 0..n {
            for j in 0..n {
                let strong = build_cut(&inst, i, j, hi);
                let weak = build_cut(&inst, i, j, lo);
                if let (Some(s), Some(w)) = (strong, weak) {
                    prop_assert!(s.rhs_at(&y) >= w.rhs_at(&y) - 1e-9);
                }
            }
        }
    }

    #[test]
    fn separation_finds_the_most_violated_anchor(seed in 0u64..10_000, n in 2usize..14) {
        let p = 1 + (seed as usize) % n.min(4);
        let inst = instance(n, p.min(n), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
        let y = fractional_y(n, p.min(n), &mut rng);
        let z: f64 = rng.gen_range(0.0..30.0);
        let lb = rng.gen_range(0.0..z.max(1.0));
        for i in 0..n {
            let fast = max_violation(&inst, i, lb, &y, z).violation;
            let slow = max_violation_brute(&inst, i, lb, &y, z);
            prop_assert!((fast - slow).abs() <= 1e-9, "customer {}: {} vs {}", i, fast, slow);
        }
    }

    #[test]
    fn greedy_is_feasible_and_never_beats_the_optimum(seed in 0u64..10_000, n in 4usize..11, p in 1usize..4) {
        let p = p.min(n - 1);
        let inst = instance(n, p, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = fractional_y(n, p, &mut rng);
        let sol = greedy_from_lp(&inst, &y, p);
        prop_assert!(sol.sites.len() <= p && !sol.sites.is_empty());
        prop_assert_eq!(sol.objective, eval_objective(&inst, &sol.sites));
        prop_assert!(sol.objective >= brute_force(&inst, p, DEFAULT_CAP).unwrap().optimum);
    }

    #[test]
    fn pclb_improves_valid_bounds(seed in 0u64..10_000, n in 4usize..12, p in 1usize..4) {
        let p = p.min(n - 1);
        let inst = instance(n, p, seed);
        let opt = brute_force(&inst, p, DEFAULT_CAP).unwrap().optimum;
        let radii = inst.candidate_radii(None).unwrap();
        for &lb in radii.values().iter().filter(|&&d| d <= opt) {
            let v = pclb_value(&inst, p, lb, PclbVariant::Full).unwrap();
            prop_assert!(v >= lb - 1e-6);
            prop_assert!(v <= opt + 1e-6);
            // fixed points are exactly the radii where the set cover fits in p
            let fixed = (v - lb).abs() <= 1e-6;
            prop_assert_eq!(fixed, scp_lp_value(&inst, lb).unwrap() <= p as f64 + 1e-6);
        }
    }

    #[test]
    fn lb_sharp_is_lb_star(seed in 0u64..10_000, n in 4usize..13, p in 1usize..4) {
        let p = p.min(n - 1);
        let inst = instance(n, p, seed);
        let full = iterate_lb_sharp(&inst, p, PclbVariant::Full).unwrap();
        let reduced = iterate_lb_sharp(&inst, p, PclbVariant::Reduced).unwrap();
        prop_assert_eq!(full.lb_sharp, reduced.lb_sharp);
        prop_assert!((full.lb_sharp - lb_star(&inst, p).unwrap()).abs() <= 1e-6);
        prop_assert!(inst.candidate_radii(None).unwrap().contains(full.lb_sharp));
        prop_assert!(full.lb_sharp <= brute_force(&inst, p, DEFAULT_CAP).unwrap().optimum);
    }

    #[test]
    fn assignment_and_projection_relaxations_agree(seed in 0u64..10_000, n in 3usize..12, p in 1usize..4) {
        let p = p.min(n - 1);
        let inst = instance(n, p, seed);
        let a = pc1_lp_value(&inst, p).unwrap();
        let b = pc2_lp_value(&inst, p).unwrap();
        prop_assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn projected_points_lift_back(seed in 0u64..10_000, n in 2usize..13) {
        let p = 1 + (seed as usize) % n.min(4);
        let p = p.min(n);
        let inst = instance(n, p, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = fractional_y(n, p, &mut rng);
        let z = (0..n).map(|i| max_violation(&inst, i, 0.0, &y, 0.0).violation).fold(0.0, f64::max)
            + rng.gen_range(0.0..3.0);
        let x = projection_witness(&inst, &y);
        prop_assert_eq!(check_pc1_point(&inst, p, &x, &y, z, 1e-8), Ok(()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn both_schemes_are_exact(seed in 0u64..10_000, n in 3usize..13, p in 1usize..4) {
        let p = p.min(n - 1);
        let inst = instance(n, p, seed);
        let opt = brute_force(&inst, p, DEFAULT_CAP).unwrap().optimum;
        for scheme in [Scheme::MaxViolated, Scheme::FixedCustomer] {
            let cfg = SolverConfig { seed, ..SolverConfig::default().with_scheme(scheme) };
            let res = solve(&inst, p, &cfg).unwrap();
            prop_assert_eq!(res.upper_bound, opt);
            prop_assert_eq!(res.lower_bound, opt);
            let sites = &res.best_solution.unwrap().sites;
            prop_assert!(sites.len() <= p);
            prop_assert_eq!(eval_objective(&inst, sites), opt);
        }
    }

    #[test]
    fn local_cuts_only_live_below_their_node(seed in 0u64..10_000, n in 8usize..15) {
        let inst = instance(n, 3, seed);
        let cfg = SolverConfig {
            trace: true,
            use_heuristic: false,
            max_num_sep_root: 2,
            ..SolverConfig::default()
        };
        let res = solve(&inst, 3, &cfg).unwrap();
        for visit in res.trace.unwrap() {
            for (_, owner) in &visit.active_local_cuts {
                prop_assert!(visit.lineage.contains(owner), "node {} sees a cut of {}", visit.node, owner);
            }
        }
    }
}
