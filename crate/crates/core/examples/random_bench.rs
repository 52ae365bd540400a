//! Solves seeded random Euclidean instances and prints one line per run.
//!
//! ```text
//! cargo run --release -p pcenter --example random_bench -- 1600 2,3,5 fixedcustomer
//! ```

use pcenter::engine::{solve, Scheme, SolverConfig};
use pcenter::oracle::random_euclid_instance;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let ps: Vec<usize> = args
        .get(2)
        .map(|s| s.split(',').filter_map(|v| v.parse().ok()).collect())
        .unwrap_or_else(|| vec![2, 3, 5]);
    let scheme: Scheme = args
        .get(3)
        .map(|s| s.parse().expect("scheme"))
        .unwrap_or(Scheme::MaxViolated);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1);
    for p in ps {
        let inst = random_euclid_instance(n, p, 10_000, seed);
        let cfg = SolverConfig {
            scheme,
            time_limit: 600.0,
            ..SolverConfig::default()
        };
        let r = solve(&inst, p, &cfg).expect("solve");
        println!(
            "n={n} p={p} {scheme} status={} LB={} UB={} nodes={} cuts={} rounds={} time={:.2}s",
            r.status, r.lower_bound, r.upper_bound, r.nodes, r.cuts_added, r.separation_rounds, r.wall_time
        );
    }
}
