//! Worst-case following distance over a bounded cell and the partition
//! table built from it.

use serde::Serialize;

use super::{check_bounds, Bounds, Interval, OddError, Param};
use crate::kinematics::{self, BrakeCap, ScenarioParams};
use crate::physics::{self, CurveRadius, PhysicsError, RoadEnvironment};
use crate::units::{Magnitude, G};

/// Grid points per bounded dimension, endpoints included.
pub const DEFAULT_GRID: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCase {
    pub d_min: f64,
    /// The mid-braking bound, not the rest-position bound, set the value.
    pub special_case: bool,
    /// Parameters attaining the worst case.
    pub at: ScenarioParams,
}

/// Evenly spaced points over a finite interval, or for an interval unbounded
/// above, the lower end followed by values reaching towards the limit.
fn finite_candidates(interval: &Interval, grid: usize) -> Vec<f64> {
    if interval.is_point() {
        return vec![interval.lo];
    }
    let n = grid.max(2);
    match interval.hi {
        Magnitude::Finite(hi) => (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    interval.lo + (hi - interval.lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
        Magnitude::Unbounded => {
            let base = if interval.lo > 0.0 { interval.lo } else { 1.0 };
            std::iter::once(interval.lo)
                .chain((1..n).map(|k| base * f64::from(1u32 << k.min(30))))
                .collect()
        }
    }
}

/// Front braking candidates. An unbounded upper end is evaluated at the
/// instant-stop limit, which dominates every finite value because the front
/// vehicle can never travel less than nothing.
fn front_brake_candidates(interval: &Interval, grid: usize) -> Vec<BrakeCap> {
    match interval.hi {
        Magnitude::Finite(_) => finite_candidates(interval, grid)
            .into_iter()
            .map(BrakeCap::Finite)
            .collect(),
        Magnitude::Unbounded => vec![BrakeCap::Finite(interval.lo), BrakeCap::Unbounded],
    }
}

/// Interval of effective rear braking over the environment part of `bounds`,
/// or `None` when no environment parameter is bounded.
fn environment_braking(
    bounds: &Bounds,
    speed: f64,
    grid: usize,
) -> Result<Option<(f64, f64)>, OddError> {
    let has_env = [Param::Mu, Param::Slope, Param::CurveRadius]
        .iter()
        .any(|p| bounds.contains_key(p));
    if !has_env {
        return Ok(None);
    }
    let mu = bounds.get(&Param::Mu).ok_or(OddError::MissingBound(Param::Mu))?;
    let slope = bounds
        .get(&Param::Slope)
        .copied()
        .unwrap_or(Interval::point(0.0));
    let radii: Vec<CurveRadius> = match bounds.get(&Param::CurveRadius) {
        None => vec![CurveRadius::Straight],
        Some(r) => {
            let mut v: Vec<CurveRadius> = finite_candidates(
                &Interval::new(r.lo, r.hi.finite().unwrap_or(r.lo)),
                grid,
            )
            .into_iter()
            .map(CurveRadius::Radius)
            .collect();
            if r.hi == Magnitude::Unbounded {
                v.push(CurveRadius::Straight);
            }
            v
        }
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &m in &finite_candidates(mu, grid) {
        for &s in &finite_candidates(&slope, grid) {
            for &curve_radius in &radii {
                let env = RoadEnvironment {
                    mu: m,
                    slope: s,
                    curve_radius,
                    speed_for_curve: speed,
                };
                let budget = match physics::effective_braking_decel(&env) {
                    Ok(b) => b,
                    Err(PhysicsError::CurveInfeasible { .. }) => {
                        return Err(OddError::NoSafeDistance)
                    }
                    Err(e) => {
                        return Err(OddError::InvalidBound {
                            param: Param::Mu,
                            reason: e.to_string(),
                        })
                    }
                };
                if budget.cannot_hold || budget.decel <= 0.0 {
                    return Err(OddError::NoSafeDistance);
                }
                lo = lo.min(budget.decel);
                hi = hi.max(budget.decel);
            }
        }
    }
    Ok(Some((lo, hi)))
}

/// Worst case of the minimum following distance over every corner of the
/// bounded region and a `grid`-point lattice per dimension.
///
/// Environment bounds, when present, are mapped through the road physics
/// first and cap the rear vehicle's guaranteed braking: it cannot brake
/// harder than its friction budget allows. The lateral demand is taken at the
/// highest rear speed in the region. Front braking is left as bounded, since
/// the front vehicle may be on a different surface.
pub fn worst_case_dmin(bounds: &Bounds, grid: usize) -> Result<WorstCase, OddError> {
    check_bounds(bounds)?;
    let get = |p: Param| bounds.get(&p).copied().ok_or(OddError::MissingBound(p));
    let v_r = get(Param::VR)?;
    let v_f = get(Param::VF)?;
    let rho = get(Param::Rho)?;
    let accel = get(Param::AMaxAccel)?;
    let mut rear_brake = get(Param::AMinBrake)?;
    let front_brake = get(Param::AMaxBrake)?;

    if let Some((e_lo, e_hi)) = environment_braking(bounds, v_r.hi_f64(), grid)? {
        let hi = rear_brake.hi_f64().min(e_hi);
        rear_brake = Interval::new(rear_brake.lo.min(e_lo), hi);
    }

    let rear_brakes: Vec<f64> = finite_candidates(&rear_brake, grid)
        .into_iter()
        .filter(|&a| a > 0.0)
        .collect();
    let front_brakes: Vec<BrakeCap> = front_brake_candidates(&front_brake, grid)
        .into_iter()
        .filter(|a| a.as_f64() > 0.0)
        .collect();
    if rear_brakes.is_empty() {
        return Err(OddError::InvalidBound {
            param: Param::AMinBrake,
            reason: "no strictly positive braking in range".into(),
        });
    }
    if front_brakes.is_empty() {
        return Err(OddError::InvalidBound {
            param: Param::AMaxBrake,
            reason: "no strictly positive braking in range".into(),
        });
    }

    let mut worst: Option<WorstCase> = None;
    for &vr in &finite_candidates(&v_r, grid) {
        for &vf in &finite_candidates(&v_f, grid) {
            for &r in &finite_candidates(&rho, grid) {
                for &acc in &finite_candidates(&accel, grid) {
                    for &rear in &rear_brakes {
                        for &front in &front_brakes {
                            let p = ScenarioParams {
                                v_r: vr,
                                v_f: vf,
                                rho: r,
                                a_max_accel: acc,
                                a_min_brake: rear,
                                a_max_brake: front,
                            };
                            let res = kinematics::d_min(&p).map_err(|e| {
                                OddError::InvalidConfiguration(e.to_string())
                            })?;
                            if worst.is_none_or(|w| res.d_min > w.d_min) {
                                worst = Some(WorstCase {
                                    d_min: res.d_min,
                                    special_case: res.special_case_prevails(),
                                    at: p,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    worst.ok_or(OddError::InvalidConfiguration("empty parameter region".into()))
}

/// One axis of a partition table: a parameter split into ordered bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub param: Param,
    pub bins: Vec<Interval>,
    pub labels: Vec<String>,
}

impl Axis {
    /// Bins labelled from their endpoints (accelerations in g).
    pub fn new(param: Param, bins: Vec<Interval>) -> Self {
        let labels = bins.iter().map(|b| bin_label(param, b)).collect();
        Axis {
            param,
            bins,
            labels,
        }
    }

    fn check(&self) -> Result<(), OddError> {
        if self.bins.is_empty() {
            return Err(OddError::InvalidConfiguration(format!(
                "axis {} has no bins",
                self.param
            )));
        }
        for b in &self.bins {
            b.check(self.param)?;
        }
        for w in self.bins.windows(2) {
            if w[1].lo < w[0].hi_f64() {
                return Err(OddError::InvalidConfiguration(format!(
                    "bins of {} overlap or are out of order",
                    self.param
                )));
            }
        }
        Ok(())
    }
}

fn trim_number(v: f64) -> String {
    let rounded = (v * 1e6).round() / 1e6;
    format!("{rounded}")
}

fn bin_label(param: Param, bin: &Interval) -> String {
    let (scale, unit) = match param.dimension() {
        crate::units::Dimension::Acceleration => (G, "g"),
        crate::units::Dimension::Speed => (1.0, "m/s"),
        crate::units::Dimension::Time => (1.0, "s"),
        crate::units::Dimension::Length => (1.0, "m"),
        crate::units::Dimension::Angle => (1.0, "rad"),
        _ => (1.0, ""),
    };
    let lo = trim_number(bin.lo / scale);
    match bin.hi {
        Magnitude::Unbounded => format!("{lo}{unit}+"),
        Magnitude::Finite(hi) if hi == bin.lo => format!("{lo}{unit}"),
        Magnitude::Finite(hi) => format!("{lo}-{}{unit}", trim_number(hi / scale)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellValue {
    DMin { value: f64, special_case: bool },
    NoSafeDistance,
}

impl CellValue {
    /// One-decimal display; `*` marks cells where the mid-braking bound binds.
    pub fn display(&self) -> String {
        match self {
            CellValue::DMin {
                value,
                special_case,
            } => format!("{value:.1}{}", if *special_case { "*" } else { "" }),
            CellValue::NoSafeDistance => "no-safe-distance".into(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            CellValue::DMin { value, .. } => Some(*value),
            CellValue::NoSafeDistance => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    #[serde(skip)]
    pub bounds: Bounds,
    #[serde(flatten)]
    pub value: CellValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionTable {
    pub row_param: Param,
    pub col_param: Param,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub grid: usize,
    pub cells: Vec<Vec<Cell>>,
}

impl PartitionTable {
    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.cells[row][col]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().flatten()
    }
}

/// Worst-case distance for every (row bin × column bin) cell, with all other
/// parameters taken from `fixed`.
pub fn build_partition_table(
    rows: &Axis,
    cols: &Axis,
    fixed: &Bounds,
    grid: usize,
) -> Result<PartitionTable, OddError> {
    rows.check()?;
    cols.check()?;
    if rows.param == cols.param {
        return Err(OddError::InvalidConfiguration(
            "row and column axes must be different parameters".into(),
        ));
    }
    check_bounds(fixed)?;
    let mut cells = Vec::with_capacity(rows.bins.len());
    for (i, rb) in rows.bins.iter().enumerate() {
        let mut row = Vec::with_capacity(cols.bins.len());
        for (j, cb) in cols.bins.iter().enumerate() {
            let mut bounds = fixed.clone();
            bounds.insert(rows.param, *rb);
            bounds.insert(cols.param, *cb);
            let value = match worst_case_dmin(&bounds, grid) {
                Ok(w) => CellValue::DMin {
                    value: w.d_min,
                    special_case: w.special_case,
                },
                Err(OddError::NoSafeDistance) => CellValue::NoSafeDistance,
                Err(e) => return Err(e),
            };
            row.push(Cell {
                row: i,
                col: j,
                bounds,
                value,
            });
        }
        cells.push(row);
    }
    Ok(PartitionTable {
        row_param: rows.param,
        col_param: cols.param,
        row_labels: rows.labels.clone(),
        col_labels: cols.labels.clone(),
        grid,
        cells,
    })
}

/// The reference 6×7 layout: front braking rows against rear braking
/// columns, with both vehicles at 25 m/s, 0.3 g acceleration and a 0.5 s
/// response time.
pub fn figure4_axes() -> (Axis, Axis, Bounds) {
    let g = |lo: f64, hi: Option<f64>| match hi {
        Some(hi) => Interval::new(lo * G, hi * G),
        None => Interval::at_least(lo * G),
    };
    let rows = Axis::new(
        Param::AMaxBrake,
        vec![
            g(0.0, Some(0.3)),
            g(0.3, Some(0.5)),
            g(0.5, Some(0.6)),
            g(0.6, Some(0.7)),
            g(0.7, Some(1.0)),
            g(1.0, None),
        ],
    );
    let cols = Axis::new(
        Param::AMinBrake,
        vec![
            g(0.05, Some(0.1)),
            g(0.1, Some(0.3)),
            g(0.3, Some(0.4)),
            g(0.4, Some(0.5)),
            g(0.5, Some(0.6)),
            g(0.6, Some(1.0)),
            g(1.0, None),
        ],
    );
    let fixed: Bounds = [
        (Param::VR, Interval::point(25.0)),
        (Param::VF, Interval::point(25.0)),
        (Param::Rho, Interval::point(0.5)),
        (Param::AMaxAccel, Interval::point(0.3 * G)),
    ]
    .into_iter()
    .collect();
    (rows, cols, fixed)
}

pub fn figure4_table(grid: usize) -> Result<PartitionTable, OddError> {
    let (rows, cols, fixed) = figure4_axes();
    build_partition_table(&rows, &cols, &fixed, grid)
}
