use dispersim_bench::gaussian_state;

#[test]
fn bench_input_is_normalized_and_resolved() {
    let s = gaussian_state(1024, 400.0, 4.0, 1.0);
    let expect = (std::f64::consts::PI.sqrt() * 4.0).sqrt();
    assert!((s.l2() - expect).abs() < 1e-10 * expect);
    assert!(s.boundary_mass() < 1e-12);
}
