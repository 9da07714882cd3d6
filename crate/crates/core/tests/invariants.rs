//! Long-run invariants of the traditional pump at the reference parameters.

use thouless_pump::dynamics::{run_protocol, EvolveOptions, InitialState, Protocol};
use thouless_pump::model::ModelParams;

#[test]
fn traditional_pump_invariants() {
    let p = ModelParams::default();
    let initial = InitialState::default_for(&p);
    let opts = EvolveOptions::default();
    let traj = run_protocol(&p, Protocol::Traditional, 2, &initial, &opts).unwrap();

    let drift = traj
        .states
        .iter()
        .map(|s| (s.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(drift < 1e-10, "norm drift {drift:e}");
    assert!(
        traj.min_band_population() >= 0.99,
        "{}",
        traj.min_band_population()
    );
    let t = traj.period();
    for n in 1..=2 {
        let dp = traj.sample_at(n as f64 * t).delta_p;
        assert!((dp / n as f64 + 1.0).abs() < 1e-2, "cycle {n}: {dp}");
    }

    // slower ramping spreads the packet further
    let slow = ModelParams {
        omega: p.omega / 2.0,
        ..p.clone()
    };
    let slow_traj = run_protocol(&slow, Protocol::Traditional, 1, &initial, &opts).unwrap();
    let fast_max = traj
        .samples
        .iter()
        .filter(|s| s.t <= t)
        .map(|s| s.d_w)
        .fold(0.0, f64::max);
    assert!(
        slow_traj.max_d_w() > fast_max,
        "{} vs {fast_max}",
        slow_traj.max_d_w()
    );
}
