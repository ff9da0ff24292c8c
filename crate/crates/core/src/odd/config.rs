//! TOML loading for micro-ODD configurations and partition-table layouts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::machine::MuOddSpec;
use super::{
    Axis, BeliefState, Bounds, Comparison, Condition, Interval, LookaheadRule, OddConfig,
    OddError, Param, Posture, TransitionRule, DEFAULT_GRID,
};
use crate::units::{self, Magnitude, QuantityText};

#[derive(Deserialize)]
#[serde(untagged)]
enum BoundText {
    Point(QuantityText),
    Range([QuantityText; 2]),
}

fn parse_bound(param: Param, text: &QuantityText) -> Result<Magnitude, OddError> {
    if param == Param::CurveRadius && text.0.trim().eq_ignore_ascii_case("straight") {
        return Ok(Magnitude::Unbounded);
    }
    Ok(units::parse_magnitude(&text.0, param.dimension())?)
}

fn to_interval(param: Param, raw: &BoundText) -> Result<Interval, OddError> {
    let finite = |m: Magnitude, which: &str| {
        m.finite().ok_or_else(|| OddError::InvalidBound {
            param,
            reason: format!("{which} bound must be finite"),
        })
    };
    let interval = match raw {
        BoundText::Point(t) => Interval::point(finite(parse_bound(param, t)?, "point")?),
        BoundText::Range([lo, hi]) => Interval {
            lo: finite(parse_bound(param, lo)?, "lower")?,
            hi: parse_bound(param, hi)?,
        },
    };
    interval.check(param)?;
    Ok(interval)
}

fn to_bounds(raw: &BTreeMap<String, BoundText>) -> Result<Bounds, OddError> {
    raw.iter()
        .map(|(k, v)| {
            let param: Param = k.parse().map_err(OddError::InvalidConfiguration)?;
            Ok((param, to_interval(param, v)?))
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawPosture {
    Normal,
    Defensive,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMuOdd {
    id: String,
    posture: RawPosture,
    behavior: Option<String>,
    #[serde(default)]
    bounds: BTreeMap<String, BoundText>,
}

fn likelihood<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
    let raw = BTreeMap::<String, QuantityText>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            units::parse_quantity(&v.0, units::Dimension::Dimensionless)
                .map(|x| (k, x))
                .map_err(serde::de::Error::custom)
        })
        .collect()
}

#[derive(Deserialize)]
struct Weights(#[serde(deserialize_with = "likelihood")] BTreeMap<String, f64>);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    evidence_key: String,
    likelihoods: BTreeMap<String, Weights>,
    target_map: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCondition {
    key: String,
    op: Comparison,
    value: QuantityText,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLookahead {
    target: String,
    when: Vec<RawCondition>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOddConfig {
    mu_odds: Vec<RawMuOdd>,
    hypotheses: Vec<String>,
    prior: Weights,
    #[serde(default)]
    rules: Vec<RawRule>,
    defensive_id: Option<String>,
    #[serde(default)]
    lookahead_rules: Vec<RawLookahead>,
    initial_id: Option<String>,
    grid: Option<usize>,
    /// Optional partition-table layout sharing the file.
    #[allow(dead_code)]
    table: Option<toml::Value>,
}

/// Parse and validate a micro-ODD configuration.
pub fn parse_odd_config(text: &str) -> Result<OddConfig, OddError> {
    let raw: RawOddConfig =
        toml::from_str(text).map_err(|e| OddError::InvalidConfiguration(e.to_string()))?;
    let Some(defensive_id) = raw.defensive_id else {
        return Err(OddError::InvalidConfiguration(
            "no defensive micro-ODD configured (`defensive_id`)".into(),
        ));
    };
    let mut cells = Vec::with_capacity(raw.mu_odds.len());
    for m in raw.mu_odds {
        let posture = match (m.posture, m.behavior) {
            (RawPosture::Normal, None) => Posture::Normal,
            (RawPosture::Normal, Some(_)) => {
                return Err(OddError::InvalidConfiguration(format!(
                    "micro-ODD `{}`: only defensive postures carry a behavior",
                    m.id
                )))
            }
            (RawPosture::Defensive, behavior) => Posture::Defensive {
                behavior: behavior.unwrap_or_else(|| "stop".into()),
            },
        };
        let bounds = to_bounds(&m.bounds).map_err(|e| {
            OddError::InvalidConfiguration(format!("micro-ODD `{}`: {e}", m.id))
        })?;
        cells.push(MuOddSpec {
            id: m.id,
            bounds,
            posture,
        });
    }
    let prior = BeliefState::new(raw.prior.0)?;
    let rules = raw
        .rules
        .into_iter()
        .map(|r| TransitionRule {
            evidence_key: r.evidence_key,
            likelihoods: r.likelihoods.into_iter().map(|(k, w)| (k, w.0)).collect(),
            target_map: r.target_map,
        })
        .collect();
    let lookahead_rules = raw
        .lookahead_rules
        .into_iter()
        .map(|l| LookaheadRule {
            target: l.target,
            when: l
                .when
                .into_iter()
                .map(|c| Condition {
                    key: c.key,
                    op: c.op,
                    value: c.value.0,
                })
                .collect(),
        })
        .collect();
    OddConfig::new(
        cells,
        raw.hypotheses,
        prior,
        rules,
        defensive_id,
        lookahead_rules,
        raw.initial_id,
        raw.grid.unwrap_or(DEFAULT_GRID),
    )
}

pub fn load_odd_config(path: &Path) -> Result<OddConfig, OddError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        OddError::InvalidConfiguration(format!("cannot read {}: {e}", path.display()))
    })?;
    parse_odd_config(&text)
}

/// A partition-table layout: two binned axes and fixed values for the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct TableConfig {
    pub rows: Axis,
    pub cols: Axis,
    pub fixed: Bounds,
    pub grid: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    row_param: String,
    row_bins: Vec<BoundText>,
    col_param: String,
    col_bins: Vec<BoundText>,
    fixed: BTreeMap<String, BoundText>,
    grid: Option<usize>,
}

#[derive(Deserialize)]
struct RawTableFile {
    table: RawTable,
}

/// Parse the `[table]` section of a configuration file.
pub fn parse_table_config(text: &str) -> Result<TableConfig, OddError> {
    let raw: RawTableFile =
        toml::from_str(text).map_err(|e| OddError::InvalidConfiguration(e.to_string()))?;
    let t = raw.table;
    let axis = |name: &str, bins: &[BoundText]| -> Result<Axis, OddError> {
        let param: Param = name.parse().map_err(OddError::InvalidConfiguration)?;
        let bins = bins
            .iter()
            .map(|b| to_interval(param, b))
            .collect::<Result<_, _>>()?;
        Ok(Axis::new(param, bins))
    };
    Ok(TableConfig {
        rows: axis(&t.row_param, &t.row_bins)?,
        cols: axis(&t.col_param, &t.col_bins)?,
        fixed: to_bounds(&t.fixed)?,
        grid: t.grid.unwrap_or(DEFAULT_GRID),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
hypotheses = ["clear", "risky"]
defensive_id = "halt"

[prior]
clear = 0.7
risky = 0.3

[[mu_odds]]
id = "cruise"
posture = "normal"
[mu_odds.bounds]
v_r = ["0 m/s", "10 m/s"]
v_f = "0 m/s"
rho = "0.5 s"
a_max_accel = "0.2 g"
a_min_brake = ["0.4 g", "0.5 g"]
a_max_brake = ["0.8 g", "unbounded"]

[[mu_odds]]
id = "halt"
posture = "defensive"
behavior = "stop"

[[rules]]
evidence_key = "weather"
[rules.likelihoods.rain]
clear = 0.2
risky = 0.8
[rules.target_map]
clear = "cruise"
risky = "halt"
"#;

    #[test]
    fn loads_minimal_config() {
        let c = parse_odd_config(MINIMAL).unwrap();
        assert_eq!(c.initial_id(), "cruise");
        let cruise = c.odd("cruise").unwrap();
        assert!(cruise.d_min_worst.unwrap() > 0.0);
        assert_eq!(c.odd("halt").unwrap().d_min_worst, None);
    }

    #[test]
    fn missing_defensive_is_rejected_at_load() {
        let text = MINIMAL.replace("defensive_id = \"halt\"\n", "");
        let err = parse_odd_config(&text).unwrap_err();
        assert!(err.to_string().contains("defensive"), "{err}");
    }

    #[test]
    fn defensive_id_must_be_defensive() {
        let text = MINIMAL.replace("defensive_id = \"halt\"", "defensive_id = \"cruise\"");
        assert!(parse_odd_config(&text).is_err());
    }

    #[test]
    fn bare_numbers_with_units_are_rejected() {
        let text = MINIMAL.replace("rho = \"0.5 s\"", "rho = 0.5");
        assert!(parse_odd_config(&text).is_err());
    }

    #[test]
    fn syntax_errors_carry_a_location() {
        let err = parse_odd_config("hypotheses = [\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn uncovered_hypothesis_is_rejected() {
        let text = MINIMAL.replace("risky = \"halt\"", "");
        assert!(parse_odd_config(&text).is_err());
        let text = MINIMAL.replace("risky = 0.8", "");
        assert!(parse_odd_config(&text).is_err());
    }

    #[test]
    fn unknown_target_is_rejected() {
        let text = MINIMAL.replace("risky = \"halt\"", "risky = \"nowhere\"");
        assert!(parse_odd_config(&text).is_err());
    }

    #[test]
    fn table_config_round() {
        let t = parse_table_config(
            r#"
[table]
row_param = "a_max_brake"
row_bins = [["0.3 g", "0.4 g"]]
col_param = "a_min_brake"
col_bins = [["0.4 g", "0.4 g"]]
[table.fixed]
v_r = "25 m/s"
v_f = "25 m/s"
rho = "0.5 s"
a_max_accel = "0.3 g"
"#,
        )
        .unwrap();
        assert_eq!(t.rows.bins.len(), 1);
        assert_eq!(t.grid, DEFAULT_GRID);
        assert_eq!(t.fixed.len(), 4);
    }

    #[test]
    fn overlapping_bins_parse_but_fail_to_build() {
        let t = parse_table_config(
            r#"
[table]
row_param = "a_max_brake"
row_bins = [["0 g", "0.5 g"], ["0.4 g", "0.6 g"]]
col_param = "a_min_brake"
col_bins = ["0.4 g"]
[table.fixed]
v_r = "25 m/s"
v_f = "25 m/s"
rho = "0.5 s"
a_max_accel = "0.3 g"
"#,
        )
        .unwrap();
        assert!(matches!(
            super::super::build_partition_table(&t.rows, &t.cols, &t.fixed, 3),
            Err(OddError::InvalidConfiguration(_))
        ));
    }
}
