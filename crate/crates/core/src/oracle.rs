//! Discrete-time simulation of the two-vehicle braking scenario.
//!
//! This is the brute-force ground truth for the closed form in
//! [`crate::kinematics`] and deliberately shares none of its formulas. Each
//! vehicle follows a piecewise-constant acceleration profile. Samples fall on
//! a uniform `dt` grid, with the response-time boundary and both stop
//! instants inserted as extra samples. Positions are evaluated in closed form
//! from the start of the current segment, so the only discretisation error is
//! in *where* the gap is sampled, never in the gap itself.

use std::ops::ControlFlow;

use serde::Serialize;
use thiserror::Error;

use crate::kinematics::{BrakeCap, KinematicsError, ScenarioParams};

/// A gap this far below zero counts as overlap; anything above is contact at
/// worst. Absorbs rounding in positions of a few hundred metres.
pub const CONTACT_TOLERANCE: f64 = 1e-9;

/// Largest step [`min_safe_gap`] will use regardless of tolerance.
const MAX_SEARCH_DT: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("initial gap must be non-negative and finite, got {0}")]
    InvalidGap(f64),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Params(#[from] KinematicsError),
    #[error("no safe gap found below {0} m")]
    NoSafeGap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x_f: f64,
    pub v_f: f64,
    pub x_r: f64,
    pub v_r: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub min_gap: f64,
    pub min_gap_time: f64,
    pub collided: bool,
}

impl SimTrace {
    /// First sample at or after `after` where the rear speed has dropped to
    /// the front speed.
    pub fn velocity_crossing(&self, after: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|s| s.t >= after && s.v_r <= s.v_f)
            .map(|s| s.t)
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: f64,
    end: f64,
    x0: f64,
    v0: f64,
    accel: f64,
}

/// Motion of one vehicle as consecutive constant-acceleration segments; the
/// last segment is the vehicle at rest and extends forever.
#[derive(Debug, Clone)]
struct Profile {
    segments: Vec<Segment>,
}

enum Phase {
    /// Constant acceleration for a fixed duration.
    For(f64, f64),
    /// Deceleration (positive magnitude) until the vehicle stops.
    BrakeToStop(f64),
}

impl Profile {
    fn build(v0: f64, phases: &[Phase]) -> Profile {
        let mut segments = Vec::new();
        let (mut t, mut x, mut v) = (0.0, 0.0, v0);
        for phase in phases {
            let (accel, duration) = match *phase {
                Phase::For(a, d) => (a, d),
                Phase::BrakeToStop(b) => (-b, if v > 0.0 { v / b } else { 0.0 }),
            };
            if duration > 0.0 {
                segments.push(Segment {
                    start: t,
                    end: t + duration,
                    x0: x,
                    v0: v,
                    accel,
                });
                x += v * duration + 0.5 * accel * duration * duration;
                v += accel * duration;
                t += duration;
            }
            if matches!(phase, Phase::BrakeToStop(_)) {
                v = 0.0;
            }
        }
        segments.push(Segment {
            start: t,
            end: f64::INFINITY,
            x0: x,
            v0: 0.0,
            accel: 0.0,
        });
        Profile { segments }
    }

    fn rest_time(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.start)
    }

    fn rest_position(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.x0)
    }

    fn event_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().map(|s| s.start)
    }
}

/// Walks a profile forward in time without rescanning earlier segments.
struct Cursor<'a> {
    profile: &'a Profile,
    index: usize,
}

impl<'a> Cursor<'a> {
    fn new(profile: &'a Profile) -> Self {
        Cursor { profile, index: 0 }
    }

    fn state_at(&mut self, t: f64) -> (f64, f64) {
        let segs = &self.profile.segments;
        while t >= segs[self.index].end {
            self.index += 1;
        }
        let s = segs[self.index];
        let tau = t - s.start;
        let x = s.x0 + s.v0 * tau + 0.5 * s.accel * tau * tau;
        let v = (s.v0 + s.accel * tau).max(0.0);
        (x, v)
    }
}

struct Scenario {
    front: Profile,
    rear: Profile,
}

impl Scenario {
    fn new(p: &ScenarioParams) -> Result<Self, OracleError> {
        p.validate()?;
        let front = match p.a_max_brake {
            BrakeCap::Finite(a) => Profile::build(p.v_f, &[Phase::BrakeToStop(a)]),
            BrakeCap::Unbounded => Profile::build(0.0, &[]),
        };
        let rear = Profile::build(
            p.v_r,
            &[
                Phase::For(p.a_max_accel, p.rho),
                Phase::BrakeToStop(p.a_min_brake),
            ],
        );
        Ok(Scenario { front, rear })
    }

    fn end_time(&self) -> f64 {
        self.front.rest_time().max(self.rear.rest_time())
    }

    /// Visit every sample in time order until the visitor breaks.
    fn scan(&self, initial_gap: f64, dt: f64, mut visit: impl FnMut(Sample) -> ControlFlow<()>) {
        let end = self.end_time();
        let mut events: Vec<f64> = self
            .front
            .event_times()
            .chain(self.rear.event_times())
            .filter(|&t| t > 0.0 && t <= end)
            .collect();
        events.push(end);
        events.sort_by(f64::total_cmp);
        events.dedup();
        let mut events = events.into_iter().peekable();

        let mut front = Cursor::new(&self.front);
        let mut rear = Cursor::new(&self.rear);
        let mut k: u64 = 0;
        loop {
            let grid = k as f64 * dt;
            let t = match events.peek() {
                Some(&e) if e <= grid => {
                    events.next();
                    if e == grid {
                        k += 1;
                    }
                    e
                }
                _ if grid > end => break,
                _ => {
                    k += 1;
                    grid
                }
            };
            let (x_f, v_f) = front.state_at(t);
            let (x_r, v_r) = rear.state_at(t);
            let sample = Sample {
                t,
                x_f,
                v_f,
                x_r,
                v_r,
                gap: initial_gap + x_f - x_r,
            };
            if visit(sample).is_break() || t >= end {
                break;
            }
        }
    }
}

fn check_inputs(initial_gap: f64, dt: f64) -> Result<(), OracleError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(OracleError::InvalidTimeStep(dt));
    }
    if !(initial_gap.is_finite() && initial_gap >= 0.0) {
        return Err(OracleError::InvalidGap(initial_gap));
    }
    Ok(())
}

/// Simulate from `initial_gap` until both vehicles are at rest.
pub fn simulate(p: &ScenarioParams, initial_gap: f64, dt: f64) -> Result<SimTrace, OracleError> {
    check_inputs(initial_gap, dt)?;
    let scenario = Scenario::new(p)?;
    let mut samples = Vec::new();
    scenario.scan(initial_gap, dt, |s| {
        samples.push(s);
        ControlFlow::Continue(())
    });
    let (min_gap, min_gap_time) = samples
        .iter()
        .fold((f64::INFINITY, 0.0), |(g, t), s| {
            if s.gap < g {
                (s.gap, s.t)
            } else {
                (g, t)
            }
        });
    Ok(SimTrace {
        dt,
        samples,
        min_gap,
        min_gap_time,
        collided: min_gap < -CONTACT_TOLERANCE,
    })
}

/// Whether a simulation from `initial_gap` ever overlaps. Stops at the first
/// overlapping sample and keeps no trace.
pub fn collides(p: &ScenarioParams, initial_gap: f64, dt: f64) -> Result<bool, OracleError> {
    check_inputs(initial_gap, dt)?;
    let scenario = Scenario::new(p)?;
    Ok(scenario_collides(&scenario, initial_gap, dt))
}

fn scenario_collides(scenario: &Scenario, initial_gap: f64, dt: f64) -> bool {
    let mut hit = false;
    scenario.scan(initial_gap, dt, |s| {
        if s.gap < -CONTACT_TOLERANCE {
            hit = true;
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    hit
}

/// Step used by [`min_safe_gap`] for tolerance `tol`.
///
/// Between samples the gap is a quadratic whose curvature is at most the sum
/// of the three acceleration magnitudes, so a sampled minimum misses the true
/// one by no more than `a_rel * dt^2 / 8`. The step keeps that below `tol/4`.
pub fn search_time_step(p: &ScenarioParams, tol: f64) -> f64 {
    let a_rel = p.a_max_accel + p.a_min_brake + p.a_max_brake.finite().unwrap_or(0.0);
    if a_rel <= 0.0 {
        return MAX_SEARCH_DT;
    }
    (2.0 * tol / a_rel).sqrt().min(MAX_SEARCH_DT)
}

/// Smallest initial gap (within `tol`) for which the simulation never
/// overlaps, by bisection.
pub fn min_safe_gap(p: &ScenarioParams, tol: f64) -> Result<f64, OracleError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(OracleError::InvalidTolerance(tol));
    }
    let scenario = Scenario::new(p)?;
    let dt = search_time_step(p, tol);
    // The rear vehicle cannot encroach by more than its own total travel.
    let upper = scenario.rear.rest_position() + 1.0;
    if scenario_collides(&scenario, upper, dt) {
        return Err(OracleError::NoSafeGap(upper));
    }
    if !scenario_collides(&scenario, 0.0, dt) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, upper);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if scenario_collides(&scenario, mid, dt) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
