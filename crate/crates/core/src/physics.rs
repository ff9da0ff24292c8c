//! Braking capability from road and environment conditions.
//!
//! Friction supplies at most `mu * g * cos(slope)` of deceleration (vehicle
//! mass cancels). Cornering consumes part of that budget: the lateral demand
//! `v^2 / R` and the longitudinal braking share one friction circle. Grade
//! then adds (uphill) or removes (downhill) `g * sin(|slope|)`.

use serde::Deserialize;
use thiserror::Error;

use crate::kinematics::BrakeCap;
use crate::units::{self, G};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("invalid environment parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("curve infeasible: lateral demand {lateral:.4} m/s^2 exceeds friction limit {limit:.4} m/s^2")]
    CurveInfeasible { lateral: f64, limit: f64 },
    #[error("no safe distance exists: rear vehicle cannot hold on this grade")]
    NoSafeDistance,
    #[error("front vehicle has no braking capability in its environment")]
    FrontCannotBrake,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveRadius {
    Straight,
    Radius(f64),
}

impl<'de> Deserialize<'de> for CurveRadius {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = units::QuantityText::deserialize(d)?;
        if text.0.trim().eq_ignore_ascii_case("straight") {
            return Ok(CurveRadius::Straight);
        }
        match units::parse_magnitude(&text.0, units::Dimension::Length)
            .map_err(serde::de::Error::custom)?
        {
            units::Magnitude::Unbounded => Ok(CurveRadius::Straight),
            units::Magnitude::Finite(r) => Ok(CurveRadius::Radius(r)),
        }
    }
}

/// Road conditions seen by one vehicle. Slope is positive uphill in the
/// direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadEnvironment {
    #[serde(deserialize_with = "units::de::dimensionless")]
    pub mu: f64,
    #[serde(deserialize_with = "units::de::angle", default)]
    pub slope: f64,
    #[serde(default = "straight")]
    pub curve_radius: CurveRadius,
    #[serde(deserialize_with = "units::de::speed", default)]
    pub speed_for_curve: f64,
}

fn straight() -> CurveRadius {
    CurveRadius::Straight
}

impl RoadEnvironment {
    pub fn flat(mu: f64) -> Self {
        RoadEnvironment {
            mu,
            slope: 0.0,
            curve_radius: CurveRadius::Straight,
            speed_for_curve: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let bad = |name, value, reason| PhysicsError::InvalidParameter {
            name,
            value,
            reason,
        };
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(bad("mu", self.mu, "must be finite and non-negative"));
        }
        if !(self.slope.is_finite() && self.slope.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(bad("slope", self.slope, "must lie strictly within ±90°"));
        }
        if let CurveRadius::Radius(r) = self.curve_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(bad("curve_radius", r, "must be positive or straight"));
            }
        }
        if !(self.speed_for_curve.is_finite() && self.speed_for_curve >= 0.0) {
            return Err(bad(
                "speed_for_curve",
                self.speed_for_curve,
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }

    /// Centripetal acceleration needed to hold the curve.
    pub fn lateral_demand(&self) -> f64 {
        match self.curve_radius {
            CurveRadius::Straight => 0.0,
            CurveRadius::Radius(r) => self.speed_for_curve * self.speed_for_curve / r,
        }
    }
}

/// Maximum tire-road deceleration from friction alone.
pub fn friction_limit(mu: f64, slope: f64) -> f64 {
    mu * G * slope.cos()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrakingBudget {
    /// Net deceleration available, m/s², never negative.
    pub decel: f64,
    /// Set on a downgrade where gravity beats the available friction.
    pub cannot_hold: bool,
}

pub fn effective_braking_decel(env: &RoadEnvironment) -> Result<BrakingBudget, PhysicsError> {
    env.validate()?;
    let limit = friction_limit(env.mu, env.slope);
    let lateral = env.lateral_demand();
    if lateral > limit {
        return Err(PhysicsError::CurveInfeasible { lateral, limit });
    }
    let longitudinal = (limit * limit - lateral * lateral).max(0.0).sqrt();
    // Straight and level must reproduce the friction limit bit for bit.
    let longitudinal = if lateral == 0.0 { limit } else { longitudinal };
    let gravity = G * env.slope.sin();
    let net = longitudinal + gravity;
    if env.slope < 0.0 && net < 0.0 {
        return Ok(BrakingBudget {
            decel: 0.0,
            cannot_hold: true,
        });
    }
    Ok(BrakingBudget {
        decel: net.max(0.0),
        cannot_hold: false,
    })
}

/// Braking inputs for the kinematics from each vehicle's own environment.
///
/// The rear vehicle's guaranteed braking is its effective deceleration; the
/// front vehicle's maximum braking is the smaller of `front_brake_cap` and
/// what its road allows.
pub fn environment_to_scenario(
    env_rear: &RoadEnvironment,
    env_front: &RoadEnvironment,
    front_brake_cap: BrakeCap,
) -> Result<(f64, BrakeCap), PhysicsError> {
    let rear = effective_braking_decel(env_rear)?;
    if rear.cannot_hold || rear.decel <= 0.0 {
        return Err(PhysicsError::NoSafeDistance);
    }
    let front = effective_braking_decel(env_front)?;
    if front.decel <= 0.0 {
        return Err(PhysicsError::FrontCannotBrake);
    }
    Ok((rear.decel, front_brake_cap.min(BrakeCap::Finite(front.decel))))
}
