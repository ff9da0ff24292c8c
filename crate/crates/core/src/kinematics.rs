//! Closed-form minimum safe following distance.
//!
//! The rear (ego) vehicle may accelerate at `a_max_accel` for the response
//! time `rho` and then brakes at no less than `a_min_brake`; the front vehicle
//! panic-brakes at up to `a_max_brake` from time zero. Two separations matter:
//!
//! * the rest-position bound `d'`, which keeps the rear vehicle's stopping
//!   point behind the front vehicle's, and
//! * the mid-braking bound `d'' + d'''`, the closure during the response time
//!   plus the worst encroachment afterwards, which matters when the rear
//!   vehicle is faster at the end of the response time *and* brakes harder.
//!
//! All braking magnitudes are positive; the formulas own the signs. A vehicle
//! that has stopped stays stopped, so neither position is ever allowed to
//! move backwards.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("not applicable: {0}")]
    NotApplicable(&'static str),
}

/// Front-vehicle braking capability. `Unbounded` is the instant-stop limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BrakeCap {
    Finite(f64),
    Unbounded,
}

impl BrakeCap {
    pub fn finite(self) -> Option<f64> {
        match self {
            BrakeCap::Finite(v) => Some(v),
            BrakeCap::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, BrakeCap::Unbounded)
    }

    /// The smaller of two caps.
    pub fn min(self, other: BrakeCap) -> BrakeCap {
        match (self, other) {
            (BrakeCap::Unbounded, x) | (x, BrakeCap::Unbounded) => x,
            (BrakeCap::Finite(a), BrakeCap::Finite(b)) => BrakeCap::Finite(a.min(b)),
        }
    }

    /// Ordering key; unbounded sorts above every finite value.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for BrakeCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BrakeCap::Finite(v) => write!(f, "{v}"),
            BrakeCap::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for BrakeCap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BrakeCap::Finite(v) => s.serialize_f64(*v),
            BrakeCap::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for BrakeCap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(BrakeCap::Finite(v)),
            Raw::Text(s) if s == "unbounded" => Ok(BrakeCap::Unbounded),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"unbounded\", got `{s}`"
            ))),
        }
    }
}

/// The six longitudinal inputs, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Rear vehicle initial speed, m/s.
    pub v_r: f64,
    /// Front vehicle initial speed, m/s.
    pub v_f: f64,
    /// Rear response time, s.
    pub rho: f64,
    /// Rear acceleration during the response time, m/s².
    pub a_max_accel: f64,
    /// Rear guaranteed braking, m/s².
    pub a_min_brake: f64,
    /// Front maximum braking, m/s².
    pub a_max_brake: BrakeCap,
}

impl ScenarioParams {
    /// Convenience constructor with accelerations in units of g.
    pub fn with_g_units(
        v_r: f64,
        v_f: f64,
        rho: f64,
        a_max_accel_g: f64,
        a_min_brake_g: f64,
        a_max_brake_g: Option<f64>,
    ) -> Self {
        use crate::units::G;
        ScenarioParams {
            v_r,
            v_f,
            rho,
            a_max_accel: a_max_accel_g * G,
            a_min_brake: a_min_brake_g * G,
            a_max_brake: a_max_brake_g.map_or(BrakeCap::Unbounded, |a| BrakeCap::Finite(a * G)),
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        self.check_motion()?;
        positive("a_min_brake", self.a_min_brake)?;
        if let BrakeCap::Finite(a) = self.a_max_brake {
            positive("a_max_brake", a)?;
        }
        Ok(())
    }

    fn check_motion(&self) -> Result<(), KinematicsError> {
        non_negative("v_r", self.v_r)?;
        non_negative("v_f", self.v_f)?;
        non_negative("rho", self.rho)?;
        non_negative("a_max_accel", self.a_max_accel)
    }

    /// Rear speed at the end of the response time.
    pub fn rear_speed_after_response(&self) -> f64 {
        self.v_r + self.a_max_accel * self.rho
    }

    /// Front speed at the end of the response time, without the stop clamp.
    /// Negative when the front vehicle halts inside the response time.
    fn front_speed_after_response_unclamped(&self, a_front: f64) -> f64 {
        self.v_f - a_front * self.rho
    }

    fn rear_response_travel(&self) -> f64 {
        self.v_r * self.rho + 0.5 * self.a_max_accel * self.rho * self.rho
    }

    fn rear_stopping_distance_after_response(&self) -> f64 {
        let v = self.rear_speed_after_response();
        v * v / (2.0 * self.a_min_brake)
    }

    fn front_stopping_distance(&self) -> f64 {
        match self.a_max_brake {
            BrakeCap::Finite(a) => self.v_f * self.v_f / (2.0 * a),
            BrakeCap::Unbounded => 0.0,
        }
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<(), KinematicsError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(KinematicsError::InvalidParameter {
            name,
            value,
            reason: "must be finite and non-negative",
        })
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), KinematicsError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(KinematicsError::InvalidParameter {
            name,
            value,
            reason: "must be finite and strictly positive",
        })
    }
}

fn finite_front_brake(p: &ScenarioParams) -> Result<f64, KinematicsError> {
    p.a_max_brake.finite().ok_or(KinematicsError::NotApplicable(
        "front braking is unbounded (instant stop)",
    ))
}

/// Full breakdown of a minimum-distance evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DminResult {
    pub d_min: f64,
    pub d_prime: f64,
    pub d_double_prime: Option<f64>,
    pub d_triple_prime: Option<f64>,
    pub special_case_applied: bool,
    pub t_equal: Option<f64>,
}

impl DminResult {
    /// True when the mid-braking bound is strictly larger than the
    /// rest-position bound, i.e. it is the binding term.
    pub fn special_case_prevails(&self) -> bool {
        match (self.d_double_prime, self.d_triple_prime) {
            (Some(a), Some(b)) => a + b > self.d_prime,
            _ => false,
        }
    }
}

/// Unclamped rest-position separation: how far the rear vehicle's stopping
/// point lies beyond the front vehicle's when both start level.
pub fn d_prime_unclamped(p: &ScenarioParams) -> Result<f64, KinematicsError> {
    p.validate()?;
    Ok(p.rear_response_travel() + p.rear_stopping_distance_after_response()
        - p.front_stopping_distance())
}

/// Rest-position following distance, clamped at zero.
pub fn d_prime_min(p: &ScenarioParams) -> Result<f64, KinematicsError> {
    d_prime_unclamped(p).map(|d| d.max(0.0))
}

/// Closure consumed during the response time.
///
/// `(v_r - v_f)·rho + (a_max_accel + a_max_brake)·rho²/2` while the front
/// vehicle is still moving at the end of the response time. If it halts
/// earlier its travel is capped at its stopping distance. May be negative.
/// Zero front braking is accepted here (the front vehicle simply coasts).
pub fn d_double_prime_min(p: &ScenarioParams) -> Result<f64, KinematicsError> {
    p.check_motion()?;
    let a_f = finite_front_brake(p)?;
    non_negative("a_max_brake", a_f)?;
    Ok(p.rear_response_travel() - braking_travel(p.v_f, a_f, p.rho))
}

/// Distance covered from speed `v` braking at `a` for `t`, holding still
/// after the stop.
fn braking_travel(v: f64, a: f64, t: f64) -> f64 {
    if a > 0.0 && v <= a * t {
        v * v / (2.0 * a)
    } else {
        v * t - 0.5 * a * t * t
    }
}

/// Encroachment of the rear vehicle on the front vehicle after the response
/// time: rear travel over `t_rear` minus front travel over `t_front`, each
/// measured from the end of the response time and each frozen once that
/// vehicle has stopped.
pub fn post_response_encroachment(
    p: &ScenarioParams,
    t_rear: f64,
    t_front: f64,
) -> Result<f64, KinematicsError> {
    p.validate()?;
    let a_f = finite_front_brake(p)?;
    for (name, t) in [("t_rear", t_rear), ("t_front", t_front)] {
        non_negative(name, t)?;
    }
    let v_r = p.rear_speed_after_response();
    let rear = braking_travel(v_r, p.a_min_brake, t_rear);
    let v_f = p.front_speed_after_response_unclamped(a_f);
    let front = if v_f <= 0.0 {
        0.0
    } else {
        braking_travel(v_f, a_f, t_front)
    };
    Ok(rear - front)
}

/// Encroachment after the response time with both vehicles evaluated at the
/// same instant `t`.
pub fn d_triple_prime_at(p: &ScenarioParams, t: f64) -> Result<f64, KinematicsError> {
    post_response_encroachment(p, t, t)
}

/// Rear faster at the end of the response time and braking strictly harder
/// than the front vehicle.
pub fn is_special_case(p: &ScenarioParams) -> bool {
    match p.a_max_brake {
        BrakeCap::Unbounded => false,
        BrakeCap::Finite(a_f) => {
            p.rear_speed_after_response() > p.front_speed_after_response_unclamped(a_f)
                && p.a_min_brake > a_f
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoppingTimes {
    /// Front stopping time after the response time; zero if it stops within it.
    pub front: f64,
    /// Rear stopping time after the response time.
    pub rear: f64,
}

pub fn stopping_times(p: &ScenarioParams) -> Result<StoppingTimes, KinematicsError> {
    p.validate()?;
    let front = match p.a_max_brake {
        BrakeCap::Finite(a) => (p.front_speed_after_response_unclamped(a) / a).max(0.0),
        BrakeCap::Unbounded => 0.0,
    };
    Ok(StoppingTimes {
        front,
        rear: p.rear_speed_after_response() / p.a_min_brake,
    })
}

/// First instant after the response time at which the two speeds coincide.
///
/// This is the crossing of the braking speed profiles when it happens while
/// the front vehicle is still moving. Otherwise the front vehicle halts first,
/// the rear keeps closing, and the speeds only meet (at zero) when the rear
/// vehicle stops, so the crossing is clamped to the later stopping time.
pub fn equal_speed_time(p: &ScenarioParams) -> Result<f64, KinematicsError> {
    p.validate()?;
    if !is_special_case(p) {
        return Err(KinematicsError::NotApplicable(
            "equal-speed time needs the mid-braking special case",
        ));
    }
    let a_f = finite_front_brake(p)?;
    let closing = p.rear_speed_after_response() - p.front_speed_after_response_unclamped(a_f);
    let t = closing / (p.a_min_brake - a_f);
    let stops = stopping_times(p)?;
    Ok(t.clamp(0.0, stops.front.max(stops.rear)))
}

/// Minimum safe following distance with the mid-braking special case.
pub fn d_min(p: &ScenarioParams) -> Result<DminResult, KinematicsError> {
    let d_prime = d_prime_min(p)?;
    if !is_special_case(p) {
        return Ok(DminResult {
            d_min: d_prime,
            d_prime,
            d_double_prime: None,
            d_triple_prime: None,
            special_case_applied: false,
            t_equal: None,
        });
    }
    let d2 = d_double_prime_min(p)?;
    let t = equal_speed_time(p)?;
    let d3 = d_triple_prime_at(p, t)?;
    Ok(DminResult {
        d_min: d_prime.max(d2 + d3),
        d_prime,
        d_double_prime: Some(d2),
        d_triple_prime: Some(d3),
        special_case_applied: true,
        t_equal: Some(t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::G;

    fn highway_pair(a_min_brake_g: f64, a_max_brake_g: Option<f64>) -> ScenarioParams {
        ScenarioParams::with_g_units(25.0, 25.0, 0.5, 0.3, a_min_brake_g, a_max_brake_g)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rest_bound_ice_follower() {
        let p = highway_pair(0.05, Some(0.3));
        assert!(!is_special_case(&p));
        let d = d_prime_min(&p).unwrap();
        assert_eq!(format!("{d:.1}"), "621.0");
    }

    #[test]
    fn rest_bound_clamps_for_stationary_rear() {
        let p = ScenarioParams {
            v_r: 0.0,
            v_f: 10.0,
            rho: 0.5,
            a_max_accel: 0.0,
            a_min_brake: 3.0,
            a_max_brake: BrakeCap::Finite(5.0),
        };
        assert!(d_prime_unclamped(&p).unwrap() < 0.0);
        assert_eq!(d_prime_min(&p).unwrap(), 0.0);
    }

    #[test]
    fn response_closure_values() {
        let p = highway_pair(0.4, Some(0.3));
        // 0.6 g * 0.25 / 2
        assert!(close(d_double_prime_min(&p).unwrap(), 0.735_75, 1e-9));

        let mut p0 = p;
        p0.rho = 0.0;
        p0.v_f = 31.0;
        assert_eq!(d_double_prime_min(&p0).unwrap(), 0.0);

        let still = ScenarioParams {
            v_r: 20.0,
            v_f: 20.0,
            rho: 1.0,
            a_max_accel: 0.0,
            a_min_brake: 5.0,
            a_max_brake: BrakeCap::Finite(0.0),
        };
        assert_eq!(d_double_prime_min(&still).unwrap(), 0.0);
    }

    #[test]
    fn response_closure_rejects_instant_stop() {
        let p = highway_pair(1.0, None);
        assert!(matches!(
            d_double_prime_min(&p),
            Err(KinematicsError::NotApplicable(_))
        ));
    }

    #[test]
    fn response_closure_caps_front_travel_at_its_stop() {
        // Both parked: nothing closes, however long the response time.
        let p = ScenarioParams {
            v_r: 0.0,
            v_f: 0.0,
            rho: 0.5,
            a_max_accel: 0.0,
            a_min_brake: 5.0,
            a_max_brake: BrakeCap::Finite(3.0),
        };
        assert_eq!(d_double_prime_min(&p).unwrap(), 0.0);
        assert_eq!(d_min(&p).unwrap().d_min, 0.0);
    }

    #[test]
    fn encroachment_at_equal_speed() {
        let p = highway_pair(0.4, Some(0.3));
        let t = equal_speed_time(&p).unwrap();
        assert!(close(t, 3.0, 1e-12));
        let d3 = d_triple_prime_at(&p, 3.0).unwrap();
        // 2.943 * 3 - 0.981 * 9 / 2
        assert!(close(d3, 4.4145, 1e-9));
        assert_eq!(d_triple_prime_at(&p, 0.0).unwrap(), 0.0);
        assert!(d_triple_prime_at(&p, -0.1).is_err());
    }

    #[test]
    fn encroachment_peaks_at_equal_speed_time() {
        let p = highway_pair(0.4, Some(0.3));
        let t_eq = equal_speed_time(&p).unwrap();
        let t_stop = stopping_times(&p).unwrap().rear;
        let steps = (t_stop / 1e-4).ceil() as usize;
        let (mut best_t, mut best) = (0.0, f64::MIN);
        for i in 0..=steps {
            let t = (i as f64 * 1e-4).min(t_stop);
            let d = d_triple_prime_at(&p, t).unwrap();
            if d > best {
                best = d;
                best_t = t;
            }
        }
        assert!(close(best_t, t_eq, 1e-4));
        assert!(best <= d_triple_prime_at(&p, t_eq).unwrap() + 1e-12);
    }

    #[test]
    fn equal_speed_time_edges() {
        let p = ScenarioParams {
            v_r: 20.0,
            v_f: 20.0,
            rho: 0.0,
            a_max_accel: 1.0,
            a_min_brake: 8.0,
            a_max_brake: BrakeCap::Finite(4.0),
        };
        // Not faster at the end of a zero response time: predicate fails.
        assert!(!is_special_case(&p));
        assert!(equal_speed_time(&p).is_err());

        let mut q = p;
        q.v_r = 20.0 + 1e-12;
        assert!(is_special_case(&q));
        assert!(equal_speed_time(&q).unwrap() < 1e-9);
    }

    #[test]
    fn special_case_predicate() {
        assert!(is_special_case(&highway_pair(0.4, Some(0.3))));
        assert!(!is_special_case(&highway_pair(0.3, Some(0.3))));
        let slow_rear = ScenarioParams {
            v_r: 0.0,
            v_f: 30.0,
            rho: 0.0,
            a_max_accel: 2.0,
            a_min_brake: 9.0,
            a_max_brake: BrakeCap::Finite(3.0),
        };
        assert!(!is_special_case(&slow_rear));
        assert!(!is_special_case(&highway_pair(1.0, None)));
    }

    #[test]
    fn stopping_time_values() {
        let p = highway_pair(0.4, Some(0.6));
        let s = stopping_times(&p).unwrap();
        assert!(close(s.front, (25.0 - 2.943) / 5.886, 1e-12));
        assert!(close(s.front, 3.7473, 1e-4));

        let parked = ScenarioParams {
            v_r: 0.0,
            v_f: 1.0,
            rho: 0.5,
            a_max_accel: 0.0,
            a_min_brake: 5.0,
            a_max_brake: BrakeCap::Finite(5.0),
        };
        let s = stopping_times(&parked).unwrap();
        assert_eq!(s.rear, 0.0);
        assert_eq!(s.front, 0.0);
    }

    #[test]
    fn reference_cells() {
        let mid = d_min(&highway_pair(0.4, Some(0.3))).unwrap();
        assert!(mid.special_case_applied);
        assert!(mid.special_case_prevails());
        assert_eq!(mid.d_prime, 0.0);
        assert_eq!(format!("{:.1}", mid.d_min), "5.2");

        let instant = d_min(&highway_pair(1.0, None)).unwrap();
        assert!(!instant.special_case_applied);
        assert_eq!(format!("{:.1}", instant.d_min), "48.6");

        let ice = d_min(&highway_pair(0.05, None)).unwrap();
        assert_eq!(format!("{:.1}", ice.d_min), "727.2");
    }

    #[test]
    fn both_at_rest() {
        let p = ScenarioParams {
            v_r: 0.0,
            v_f: 0.0,
            rho: 0.5,
            a_max_accel: 0.0,
            a_min_brake: 0.4 * G,
            a_max_brake: BrakeCap::Finite(0.3 * G),
        };
        assert_eq!(d_min(&p).unwrap().d_min, 0.0);
    }

    #[test]
    fn rejects_invalid_parameters() {
        let mut p = highway_pair(0.4, Some(0.3));
        p.v_r = -1.0;
        assert!(matches!(
            d_min(&p),
            Err(KinematicsError::InvalidParameter { name: "v_r", .. })
        ));
        let mut p = highway_pair(0.4, Some(0.3));
        p.a_min_brake = 0.0;
        assert!(d_prime_min(&p).is_err());
        let mut p = highway_pair(0.4, Some(0.3));
        p.a_max_brake = BrakeCap::Finite(0.0);
        assert!(d_min(&p).is_err());
        let mut p = highway_pair(0.4, Some(0.3));
        p.rho = f64::NAN;
        assert!(d_min(&p).is_err());
    }
}
