use coordmd_core::probability::Pmf;
use coordmd_core::region::{grid_oracle, trace_frontier, RegionQuery, SearchConfig, Theorem, GRID_ORACLE_LIMIT};

const LN2: f64 = std::f64::consts::LN_2;

fn binary_identity(deltas: [f64; 3]) -> RegionQuery {
    RegionQuery::identity_target(Pmf::uniform(2).unwrap(), deltas).unwrap()
}

#[test]
fn zero_radii_force_twice_ln2() {
    let q = binary_identity([0.0; 3]);
    let oracle = grid_oracle(&q, Theorem::One, 32, 1, GRID_ORACLE_LIMIT).unwrap();
    let trace = trace_frontier(&q, Theorem::One, &SearchConfig::default()).unwrap();
    assert_eq!(oracle.points.len(), 1);
    assert!((oracle.min_sum_rate().unwrap() - 2.0 * LN2).abs() < 1e-12);
    assert!((trace.min_sum_rate().unwrap() - 2.0 * LN2).abs() < 0.01);
    assert!(trace.covers(&oracle, 0.01) && oracle.covers(&trace, 0.01));
}

#[test]
fn half_radii_reach_ln2() {
    let q = binary_identity([0.5, 0.5, 0.0]);
    let oracle = grid_oracle(&q, Theorem::One, 32, 1, GRID_ORACLE_LIMIT).unwrap();
    let trace = trace_frontier(&q, Theorem::One, &SearchConfig::default()).unwrap();
    assert!((oracle.min_sum_rate().unwrap() - LN2).abs() < 0.02);
    assert!((trace.min_sum_rate().unwrap() - LN2).abs() < 0.02);
    assert!(trace.covers(&oracle, 0.02));
    for (l1, l2) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 2.0), (2.0, 1.0)] {
        let (a, b) = (trace.weighted_min(l1, l2).unwrap(), oracle.weighted_min(l1, l2).unwrap());
        assert!((a - b).abs() <= 0.02 * (l1 + l2));
    }
}
