use hydrowatch::localization::{
    forward_delays, residual_at, solve_position, ArrayGeometry, Point, SearchRange, TdoaMeasurement,
};

#[test]
fn lattice_round_trip_is_exact() {
    let g = ArrayGeometry::default();
    let search = SearchRange::around(g.position(1), 10.0);
    let mut checked = 0;
    for i in (0..=200).step_by(20) {
        for j in (5..=100).step_by(10) {
            let p = search.point(i, j);
            let t = forward_delays(p, &g);
            assert_eq!(t.reference, 1);
            let r = solve_position(&t, &g, &search).unwrap();
            assert_eq!(r.position, p, "source {p:?}");
            checked += 1;
        }
    }
    assert!(checked >= 100, "{checked}");
}

#[test]
fn st2_minimizer_lies_on_the_wall_line() {
    // The quoted delays overshoot the hyperbola pair: v·(36 ms) − 50 m > 0 on the
    // H3 side, so residual minimization is pulled onto y = 0.
    let g = ArrayGeometry::default();
    let t = TdoaMeasurement::new(1, vec![0.032, 0.0, 0.036]);
    let r = solve_position(&t, &g, &SearchRange::for_measurement(&t, &g)).unwrap();
    assert!((r.position.x - 2.86).abs() < 0.05, "{:?}", r.position);
    assert!(r.position.y < 0.05);
    assert!(r.residual > 0.0);
    assert!(residual_at(Point::new(2.8, 1.5), &t, &g) > r.residual);
}

#[test]
fn st1_lands_next_to_h1() {
    let g = ArrayGeometry::default();
    let t = TdoaMeasurement::new(0, vec![0.0, 0.035, 0.070]);
    let r = solve_position(&t, &g, &SearchRange::for_measurement(&t, &g)).unwrap();
    assert!(r.offset_from_reference.x.abs() <= 1.0, "{r:?}");
    assert!(r.offset_from_reference.y <= 3.0);
}
