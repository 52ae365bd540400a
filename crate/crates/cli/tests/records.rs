use pcenter::bounds::{BoundReport, IterationRecord, PclbVariant};
use pcenter::engine::{Scheme, SolveStatus};
use pcenter_cli::{read_bounds_csv, read_runs_csv, write_bounds_csv, write_runs_csv, RunRecord};
use proptest::prelude::*;

fn status() -> impl Strategy<Value = SolveStatus> {
    prop_oneof![
        Just(SolveStatus::Optimal),
        Just(SolveStatus::TimeLimit),
        Just(SolveStatus::Infeasible)
    ]
}

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::MaxViolated), Just(Scheme::FixedCustomer)]
}

fn bound() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..100_000).prop_map(f64::from),
        0.0f64..1e6,
        Just(f64::INFINITY)
    ]
}

fn record(scheme: Scheme) -> impl Strategy<Value = RunRecord> {
    (
        "[a-z][a-z0-9_]{0,12}",
        1usize..20_000,
        1usize..500,
        bound(),
        bound(),
        0u32..10_001,
        0usize..1_000_000,
        0usize..1_000_000,
        0.0f64..5000.0,
        status(),
    )
        .prop_map(move |(name, vertices, p, lb, ub, gap, nodes, cuts, time, status)| RunRecord {
            name,
            vertices,
            p,
            scheme,
            lb,
            ub,
            gap_percent: f64::from(gap) / 100.0,
            nodes,
            cuts,
            time_seconds: time,
            status,
        })
}

fn report() -> impl Strategy<Value = BoundReport> {
    (
        prop_oneof![Just(PclbVariant::Full), Just(PclbVariant::Reduced)],
        0.0f64..1e5,
        0.0f64..1e5,
        0.0f64..500.0,
        prop::collection::vec((0.0f64..1e5, 0.0f64..1e5, 0.0f64..1e5), 0..8),
    )
        .prop_map(|(variant, lb_sharp, lb_star, scp, its)| BoundReport {
            variant,
            lb_sharp,
            iterations: its.len(),
            per_iteration: its
                .into_iter()
                .map(|(lb_in, value, snapped)| IterationRecord { lb_in, value, snapped })
                .collect(),
            lb_star,
            scp_value_at_lb_sharp: scp,
        })
}

proptest! {
    #[test]
    fn run_records_round_trip_through_json(rec in scheme().prop_flat_map(record)) {
        let text = serde_json::to_string(&rec).unwrap();
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, rec);
    }

    #[test]
    fn run_records_round_trip_through_csv(
        (s, recs) in scheme().prop_flat_map(|s| (Just(s), prop::collection::vec(record(s), 0..6)))
    ) {
        let mut buf = Vec::new();
        write_runs_csv(&mut buf, &recs).unwrap();
        let back = read_runs_csv(buf.as_slice(), s).unwrap();
        prop_assert_eq!(back, recs);
    }

    #[test]
    fn bound_reports_round_trip(reps in prop::collection::vec(report(), 0..4)) {
        let text = serde_json::to_string(&reps).unwrap();
        let back: Vec<BoundReport> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &reps);

        let mut buf = Vec::new();
        write_bounds_csv(&mut buf, &reps).unwrap();
        let back = read_bounds_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, reps);
    }
}

#[test]
fn csv_header_is_fixed() {
    let mut buf = Vec::new();
    write_runs_csv(&mut buf, &[]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "name,V,p,LB,UB,gap,nodes,cuts,time,status\n");
}

#[test]
fn exit_rule() {
    let mut rec = RunRecord {
        name: "x".into(),
        vertices: 10,
        p: 2,
        scheme: Scheme::MaxViolated,
        lb: 3.0,
        ub: 5.0,
        gap_percent: 40.0,
        nodes: 1,
        cuts: 1,
        time_seconds: 1.0,
        status: SolveStatus::TimeLimit,
    };
    assert!(rec.succeeded());
    rec.ub = f64::INFINITY;
    assert!(!rec.succeeded());
    rec.status = SolveStatus::Infeasible;
    assert!(!rec.succeeded());
    rec.status = SolveStatus::Optimal;
    assert!(rec.succeeded());
}
