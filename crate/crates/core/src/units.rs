//! Unit-suffixed quantity parsing.
//!
//! Every dimensional value read from a file carries an explicit suffix
//! (`"25 m/s"`, `"0.3 g"`, `"-10 deg"`). Bare numbers are accepted only for
//! dimensionless quantities such as the friction coefficient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer};
use thiserror::Error;

/// Standard gravity used for every g-unit conversion. 9.81 rather than
/// 9.80665 so that the partition table reproduces to one decimal.
pub const G: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitError {
    #[error("empty quantity")]
    Empty,
    #[error("`{0}` has no unit suffix; expected one of {1}")]
    MissingUnit(String, &'static str),
    #[error("`{text}`: unit `{unit}` is not a {dim} unit (expected one of {expected})")]
    WrongUnit {
        text: String,
        unit: String,
        dim: Dimension,
        expected: &'static str,
    },
    #[error("`{0}` is not a number")]
    BadNumber(String),
    #[error("`{0}`: unbounded is not allowed for a {1} quantity")]
    UnboundedNotAllowed(String, Dimension),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    Length,
    Time,
    Speed,
    Acceleration,
    Angle,
    Temperature,
    Dimensionless,
}

impl Dimension {
    fn expected(self) -> &'static str {
        match self {
            Dimension::Length => "m, km",
            Dimension::Time => "s, ms",
            Dimension::Speed => "m/s, km/h, mph",
            Dimension::Acceleration => "m/s^2, m/s2, g",
            Dimension::Angle => "deg, rad, %",
            Dimension::Temperature => "degC, C, K",
            Dimension::Dimensionless => "no suffix",
        }
    }

    /// Scale and offset converting the given unit into SI, or `None` when the
    /// unit does not belong to this dimension.
    fn conversion(self, unit: &str) -> Option<Conversion> {
        let scale = |s| Some(Conversion::Scale(s));
        match (self, unit) {
            (Dimension::Length, "m") => scale(1.0),
            (Dimension::Length, "km") => scale(1000.0),
            (Dimension::Time, "s") => scale(1.0),
            (Dimension::Time, "ms") => scale(1e-3),
            (Dimension::Speed, "m/s") => scale(1.0),
            (Dimension::Speed, "km/h" | "kph") => scale(1000.0 / 3600.0),
            (Dimension::Speed, "mph") => scale(1609.344 / 3600.0),
            (Dimension::Acceleration, "m/s^2" | "m/s2") => scale(1.0),
            (Dimension::Acceleration, "g") => scale(G),
            (Dimension::Angle, "rad") => scale(1.0),
            (Dimension::Angle, "deg") => scale(std::f64::consts::PI / 180.0),
            (Dimension::Angle, "%") => Some(Conversion::Grade),
            (Dimension::Temperature, "degC" | "C") => scale(1.0),
            (Dimension::Temperature, "K") => Some(Conversion::Offset(-273.15)),
            _ => None,
        }
    }
}

enum Conversion {
    Scale(f64),
    Offset(f64),
    /// Percent grade to angle.
    Grade,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dimension::Length => "length",
            Dimension::Time => "time",
            Dimension::Speed => "speed",
            Dimension::Acceleration => "acceleration",
            Dimension::Angle => "angle",
            Dimension::Temperature => "temperature",
            Dimension::Dimensionless => "dimensionless",
        };
        f.write_str(s)
    }
}

/// A parsed value in SI units (temperatures in degrees Celsius), possibly
/// unbounded above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Magnitude {
    Finite(f64),
    Unbounded,
}

impl Magnitude {
    pub fn finite(self) -> Option<f64> {
        match self {
            Magnitude::Finite(v) => Some(v),
            Magnitude::Unbounded => None,
        }
    }
}

fn is_unbounded_word(s: &str) -> bool {
    matches!(
        s.to_ascii_lowercase().as_str(),
        "unbounded" | "inf" | "infinity" | "+inf"
    )
}

/// Parse `text` as a quantity of dimension `dim`, converting to SI.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, UnitError> {
    match parse_magnitude(text, dim)? {
        Magnitude::Finite(v) => Ok(v),
        Magnitude::Unbounded => Err(UnitError::UnboundedNotAllowed(text.to_string(), dim)),
    }
}

/// Like [`parse_quantity`] but also accepts `unbounded` / `inf`.
pub fn parse_magnitude(text: &str, dim: Dimension) -> Result<Magnitude, UnitError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(UnitError::Empty);
    }
    if is_unbounded_word(trimmed) {
        return Ok(Magnitude::Unbounded);
    }
    let split = trimmed
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(trimmed.len());
    // An exponent marker directly before a unit letter (e.g. "3e") is not part
    // of the number.
    let (mut num, mut unit) = trimmed.split_at(split);
    while num.ends_with(['e', 'E']) {
        let cut = num.len() - 1;
        unit = &trimmed[cut..];
        num = &trimmed[..cut];
    }
    let unit = unit.trim();
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| UnitError::BadNumber(trimmed.to_string()))?;
    if !value.is_finite() {
        return Err(UnitError::BadNumber(trimmed.to_string()));
    }
    if dim == Dimension::Dimensionless {
        return if unit.is_empty() {
            Ok(Magnitude::Finite(value))
        } else {
            Err(UnitError::WrongUnit {
                text: trimmed.to_string(),
                unit: unit.to_string(),
                dim,
                expected: dim.expected(),
            })
        };
    }
    if unit.is_empty() {
        return Err(UnitError::MissingUnit(trimmed.to_string(), dim.expected()));
    }
    let conv = dim.conversion(unit).ok_or_else(|| UnitError::WrongUnit {
        text: trimmed.to_string(),
        unit: unit.to_string(),
        dim,
        expected: dim.expected(),
    })?;
    Ok(Magnitude::Finite(match conv {
        Conversion::Scale(s) => value * s,
        Conversion::Offset(o) => value + o,
        Conversion::Grade => (value / 100.0).atan(),
    }))
}

/// Raw quantity text as it appears in a config file; converted once the
/// expected dimension is known.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantityText(pub String);

impl<'de> Deserialize<'de> for QuantityText {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
        }
        Ok(QuantityText(match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s,
            Raw::Int(i) => i.to_string(),
            Raw::Float(f) => f.to_string(),
        }))
    }
}

impl FromStr for QuantityText {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(QuantityText(s.to_string()))
    }
}

/// Deserialize a field that must parse as a quantity of a fixed dimension.
/// Errors surface through serde so the TOML parser can attach a location.
macro_rules! quantity_field {
    ($name:ident, $dim:expr) => {
        pub fn $name<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            let text = $crate::units::QuantityText::deserialize(d)?;
            $crate::units::parse_quantity(&text.0, $dim).map_err(serde::de::Error::custom)
        }
    };
}

pub mod de {
    use super::Dimension;
    use serde::Deserialize;

    quantity_field!(speed, Dimension::Speed);
    quantity_field!(time, Dimension::Time);
    quantity_field!(acceleration, Dimension::Acceleration);
    quantity_field!(angle, Dimension::Angle);
    quantity_field!(dimensionless, Dimension::Dimensionless);

    pub fn opt_speed<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        speed(d).map(Some)
    }

    pub fn opt_acceleration<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> Result<Option<f64>, D::Error> {
        acceleration(d).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_suffixed_values() {
        assert_eq!(parse_quantity("25 m/s", Dimension::Speed).unwrap(), 25.0);
        assert!((parse_quantity("0.3 g", Dimension::Acceleration).unwrap() - 2.943).abs() < 1e-12);
        assert!((parse_quantity("90 km/h", Dimension::Speed).unwrap() - 25.0).abs() < 1e-12);
        assert!(
            (parse_quantity("-10 deg", Dimension::Angle).unwrap() + 10f64.to_radians()).abs()
                < 1e-15
        );
        assert_eq!(parse_quantity("500ms", Dimension::Time).unwrap(), 0.5);
        assert_eq!(parse_quantity("1e-3 s", Dimension::Time).unwrap(), 1e-3);
        assert_eq!(parse_quantity("2 degC", Dimension::Temperature).unwrap(), 2.0);
        assert_eq!(parse_quantity("0.7", Dimension::Dimensionless).unwrap(), 0.7);
    }

    #[test]
    fn rejects_bare_numbers_for_dimensional_values() {
        assert!(matches!(
            parse_quantity("25", Dimension::Speed),
            Err(UnitError::MissingUnit(..))
        ));
        assert!(matches!(
            parse_quantity("25 m", Dimension::Speed),
            Err(UnitError::WrongUnit { .. })
        ));
        assert!(matches!(
            parse_quantity("0.7 g", Dimension::Dimensionless),
            Err(UnitError::WrongUnit { .. })
        ));
        assert!(parse_quantity("fast m/s", Dimension::Speed).is_err());
    }

    #[test]
    fn unbounded_only_where_allowed() {
        assert_eq!(
            parse_magnitude("unbounded", Dimension::Acceleration).unwrap(),
            Magnitude::Unbounded
        );
        assert!(matches!(
            parse_quantity("inf", Dimension::Speed),
            Err(UnitError::UnboundedNotAllowed(..))
        ));
    }
}
