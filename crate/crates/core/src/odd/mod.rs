//! Micro-ODDs: bounded operating cells with a precomputed worst-case
//! following distance, a state machine that moves between them, and the
//! belief update that drives its transitions.

mod belief;
mod config;
mod machine;
mod partition;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::kinematics::BrakeCap;
use crate::units::{self, Dimension, Magnitude, UnitError};

pub use belief::{belief_update, BeliefError, BeliefState, TransitionRule};
pub use config::{load_odd_config, parse_odd_config, parse_table_config, TableConfig};
pub use machine::{
    preemptive_transition_check, step_state_machine, Comparison, Condition, EvidenceRecord,
    LookaheadRule, MuOddSpec, OddConfig, OddMachine, StepOutcome, TransitionRecord,
};
pub use partition::{
    build_partition_table, figure4_axes, figure4_table, worst_case_dmin, Axis, Cell, CellValue,
    PartitionTable, WorstCase, DEFAULT_GRID,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OddError {
    #[error("no safe distance exists within the bounds")]
    NoSafeDistance,
    #[error("bounds are missing parameter {0}")]
    MissingBound(Param),
    #[error("invalid bound for {param}: {reason}")]
    InvalidBound { param: Param, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("unknown micro-ODD `{0}`")]
    UnknownOdd(String),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Units(#[from] UnitError),
}

/// A bounded parameter: the six kinematic inputs plus environment terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Param {
    VR,
    VF,
    Rho,
    AMaxAccel,
    AMinBrake,
    AMaxBrake,
    Mu,
    Slope,
    CurveRadius,
}

impl Param {
    pub const ALL: [Param; 9] = [
        Param::VR,
        Param::VF,
        Param::Rho,
        Param::AMaxAccel,
        Param::AMinBrake,
        Param::AMaxBrake,
        Param::Mu,
        Param::Slope,
        Param::CurveRadius,
    ];

    pub const KINEMATIC: [Param; 6] = [
        Param::VR,
        Param::VF,
        Param::Rho,
        Param::AMaxAccel,
        Param::AMinBrake,
        Param::AMaxBrake,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::VR => "v_r",
            Param::VF => "v_f",
            Param::Rho => "rho",
            Param::AMaxAccel => "a_max_accel",
            Param::AMinBrake => "a_min_brake",
            Param::AMaxBrake => "a_max_brake",
            Param::Mu => "mu",
            Param::Slope => "slope",
            Param::CurveRadius => "curve_radius",
        }
    }

    pub fn dimension(self) -> Dimension {
        match self {
            Param::VR | Param::VF => Dimension::Speed,
            Param::Rho => Dimension::Time,
            Param::AMaxAccel | Param::AMinBrake | Param::AMaxBrake => Dimension::Acceleration,
            Param::Mu => Dimension::Dimensionless,
            Param::Slope => Dimension::Angle,
            Param::CurveRadius => Dimension::Length,
        }
    }

    fn allows_unbounded(self) -> bool {
        matches!(
            self,
            Param::AMinBrake | Param::AMaxBrake | Param::CurveRadius
        )
    }

    /// Parse a single observed value of this parameter.
    pub fn parse_value(self, text: &str) -> Result<f64, UnitError> {
        if self == Param::CurveRadius && text.trim().eq_ignore_ascii_case("straight") {
            return Ok(f64::INFINITY);
        }
        match units::parse_magnitude(text, self.dimension())? {
            Magnitude::Finite(v) => Ok(v),
            Magnitude::Unbounded if self.allows_unbounded() => Ok(f64::INFINITY),
            Magnitude::Unbounded => Err(UnitError::UnboundedNotAllowed(
                text.to_string(),
                self.dimension(),
            )),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown parameter `{s}`"))
    }
}

impl Serialize for Param {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Closed interval `[lo, hi]` in SI units; `hi` may be unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: Magnitude,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi: Magnitude::Finite(hi),
        }
    }

    pub fn point(v: f64) -> Self {
        Interval::new(v, v)
    }

    pub fn at_least(lo: f64) -> Self {
        Interval {
            lo,
            hi: Magnitude::Unbounded,
        }
    }

    pub fn hi_f64(&self) -> f64 {
        self.hi.finite().unwrap_or(f64::INFINITY)
    }

    pub fn is_point(&self) -> bool {
        self.hi == Magnitude::Finite(self.lo)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi_f64()
    }

    fn check(&self, param: Param) -> Result<(), OddError> {
        let bad = |reason: &str| OddError::InvalidBound {
            param,
            reason: reason.to_string(),
        };
        if !self.lo.is_finite() {
            return Err(bad("lower bound must be finite"));
        }
        match self.hi {
            Magnitude::Finite(hi) if !hi.is_finite() => Err(bad("upper bound must be finite")),
            Magnitude::Finite(hi) if hi < self.lo => Err(bad("lower bound exceeds upper bound")),
            Magnitude::Unbounded if !param.allows_unbounded() => {
                Err(bad("upper bound may not be unbounded"))
            }
            _ => Ok(()),
        }
    }

    /// Upper bound as a front braking cap.
    pub fn hi_cap(&self) -> BrakeCap {
        match self.hi {
            Magnitude::Finite(v) => BrakeCap::Finite(v),
            Magnitude::Unbounded => BrakeCap::Unbounded,
        }
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeTuple;
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&self.lo)?;
        match self.hi {
            Magnitude::Finite(v) => t.serialize_element(&v)?,
            Magnitude::Unbounded => t.serialize_element("unbounded")?,
        }
        t.end()
    }
}

pub type Bounds = BTreeMap<Param, Interval>;

pub fn check_bounds(bounds: &Bounds) -> Result<(), OddError> {
    bounds.iter().try_for_each(|(p, i)| i.check(*p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Posture {
    Normal,
    /// Encodes a behaviour (e.g. "stop") instead of a following distance.
    Defensive { behavior: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuOdd {
    pub id: String,
    #[serde(serialize_with = "serialize_bounds")]
    pub bounds: Bounds,
    /// Worst-case following distance, m; `None` only for defensive postures.
    pub d_min_worst: Option<f64>,
    pub posture: Posture,
}

fn serialize_bounds<S: Serializer>(bounds: &Bounds, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(bounds.len()))?;
    for (k, v) in bounds {
        m.serialize_entry(k.name(), v)?;
    }
    m.end()
}

impl MuOdd {
    pub fn is_defensive(&self) -> bool {
        matches!(self.posture, Posture::Defensive { .. })
    }

    /// Ordering key for conservativeness: defensive cells rank above all.
    pub fn conservativeness(&self) -> f64 {
        if self.is_defensive() {
            f64::INFINITY
        } else {
            self.d_min_worst.unwrap_or(f64::INFINITY)
        }
    }

    /// Whether every observed condition lies within this cell's bounds.
    /// Parameters the cell does not bound are unconstrained.
    pub fn admits(&self, conditions: &BTreeMap<Param, f64>) -> bool {
        conditions
            .iter()
            .all(|(p, v)| self.bounds.get(p).is_none_or(|i| i.contains(*v)))
    }
}
