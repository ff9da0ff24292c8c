//! Structural properties of simulated traces.

use proptest::prelude::*;
use rss_odd::kinematics::{self, BrakeCap, ScenarioParams};
use rss_odd::oracle;
use rss_odd::units::G;

fn scenario() -> impl Strategy<Value = ScenarioParams> {
    (0.0..40.0f64, 0.0..40.0f64, 0.0..2.0f64, 0.0..1.2 * G, 0.05 * G..1.2 * G, 0.05 * G..1.2 * G)
        .prop_map(|(v_r, v_f, rho, acc, a_min, a_max)| ScenarioParams {
            v_r,
            v_f,
            rho,
            a_max_accel: acc,
            a_min_brake: a_min,
            a_max_brake: BrakeCap::Finite(a_max),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn trace_invariants(p in scenario(), gap in 0.0..100.0f64) {
        let trace = oracle::simulate(&p, gap, 1e-2).unwrap();
        let first = trace.samples[0];
        prop_assert_eq!(first.t, 0.0);
        prop_assert_eq!(first.gap, gap);
        for w in trace.samples.windows(2) {
            prop_assert!(w[1].t > w[0].t);
            prop_assert!(w[1].x_f >= w[0].x_f && w[1].x_r >= w[0].x_r);
        }
        for s in &trace.samples {
            prop_assert!(s.v_f >= 0.0 && s.v_r >= 0.0);
        }
        let last = trace.samples.last().unwrap();
        prop_assert!(last.v_f == 0.0 && last.v_r == 0.0);
        let min = trace.samples.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(min, trace.min_gap);
        prop_assert_eq!(trace.collided, min < -oracle::CONTACT_TOLERANCE);
    }

    #[test]
    fn doubling_dt_keeps_verdict_away_from_tangency(p in scenario(), offset in 0.0..50.0f64, below in any::<bool>()) {
        let dt = 5e-3;
        let d = kinematics::d_min(&p).unwrap().d_min;
        let margin = 10.0 * 2.0 * dt * (p.v_r + p.v_f) + 1e-3 + offset;
        let gap = if below { d - margin } else { d + margin };
        prop_assume!(gap >= 0.0);
        prop_assert_eq!(
            oracle::collides(&p, gap, dt).unwrap(),
            oracle::collides(&p, gap, 2.0 * dt).unwrap()
        );
        prop_assert_eq!(oracle::collides(&p, gap, dt).unwrap(), below);
    }

    #[test]
    fn crossing_within_one_step(p in scenario()) {
        prop_assume!(kinematics::is_special_case(&p));
        let dt = 1e-2;
        let t_eq = kinematics::equal_speed_time(&p).unwrap();
        let trace = oracle::simulate(&p, 1000.0, dt).unwrap();
        let t = trace.velocity_crossing(p.rho).unwrap();
        prop_assert!((t - (p.rho + t_eq)).abs() <= dt * (1.0 + 1e-9));
    }
}

#[test]
fn static_scenario_keeps_its_gap() {
    let p = ScenarioParams {
        v_r: 12.0,
        v_f: 12.0,
        rho: 0.0,
        a_max_accel: 0.0,
        a_min_brake: 4.0,
        a_max_brake: BrakeCap::Finite(4.0),
    };
    let trace = oracle::simulate(&p, 7.5, 1e-3).unwrap();
    assert!(trace.samples.iter().all(|s| (s.gap - 7.5).abs() < 1e-9));
}

#[test]
fn stationary_rear_needs_no_gap() {
    let p = ScenarioParams {
        v_r: 0.0,
        v_f: 20.0,
        rho: 1.0,
        a_max_accel: 0.0,
        a_min_brake: 3.0,
        a_max_brake: BrakeCap::Finite(8.0),
    };
    assert!(oracle::min_safe_gap(&p, 1e-4).unwrap() <= 1e-4);
}

#[test]
fn bad_steps_and_gaps_are_rejected() {
    let p = ScenarioParams::with_g_units(10.0, 10.0, 0.5, 0.1, 0.5, Some(0.5));
    assert!(oracle::simulate(&p, 1.0, 0.0).is_err());
    assert!(oracle::simulate(&p, 1.0, f64::NAN).is_err());
    assert!(oracle::simulate(&p, -1.0, 1e-3).is_err());
    assert!(oracle::min_safe_gap(&p, 0.0).is_err());
}
