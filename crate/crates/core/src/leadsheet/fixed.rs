use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Decimal fixed-point number with six fractional digits.
///
/// Beat positions and tempi are stored this way so that a lead-sheet document
/// survives parse/serialize without any floating point drift.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fixed(i64);

/// Positions and lengths measured in beats.
pub type Beats = Fixed;

impl Fixed {
    pub const SCALE: i64 = 1_000_000;
    pub const ZERO: Fixed = Fixed(0);

    pub const fn from_micros(micros: i64) -> Self {
        Fixed(micros)
    }

    pub const fn from_int(value: i64) -> Self {
        Fixed(value * Self::SCALE)
    }

    /// Fraction `num / den`, rounded to the nearest millionth.
    pub fn from_ratio(num: i64, den: i64) -> Self {
        let scaled = num as i128 * Self::SCALE as i128;
        let den = den as i128;
        let q = scaled.div_euclid(den);
        let r = scaled.rem_euclid(den);
        Fixed((q + i128::from(2 * r >= den)) as i64)
    }

    /// Nearest representable value to `value`.
    pub fn from_f64(value: f64) -> Self {
        Fixed((value * Self::SCALE as f64).round() as i64)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// Round to the nearest multiple of `step` (ties away from zero).
    pub fn snap(self, step: Fixed) -> Self {
        assert!(step.0 > 0);
        let q = (2 * self.0 + step.0).div_euclid(2 * step.0);
        Fixed(q * step.0)
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 + rhs.0)
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 - rhs.0)
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let int = abs / Self::SCALE as u64;
        let frac = abs % Self::SCALE as u64;
        if frac == 0 {
            write!(f, "{sign}{int}")
        } else {
            let digits = format!("{frac:06}");
            write!(f, "{sign}{int}.{}", digits.trim_end_matches('0'))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedParseError(pub String);

impl fmt::Display for FixedParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for FixedParseError {}

impl FromStr for Fixed {
    type Err = FixedParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || {
            FixedParseError(format!(
                "expected a decimal with at most 6 fractional digits, got {s:?}"
            ))
        };
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty()
            || !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
            || frac_part.len() > 6
            || (body.contains('.') && frac_part.is_empty())
        {
            return Err(err());
        }
        let int: i64 = int_part.parse().map_err(|_| err())?;
        let mut frac: i64 = 0;
        for (i, b) in frac_part.bytes().enumerate() {
            frac += (b - b'0') as i64 * 10i64.pow(5 - i as u32);
        }
        let magnitude = int
            .checked_mul(Self::SCALE)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(err)?;
        Ok(Fixed(if negative { -magnitude } else { magnitude }))
    }
}

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fixed {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Int(i64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Int(i) => Ok(Fixed::from_int(i)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text() {
        for (text, micros) in [
            ("0", 0),
            ("1.5", 1_500_000),
            ("0.000001", 1),
            ("12.25", 12_250_000),
            ("-2.5", -2_500_000),
        ] {
            let v: Fixed = text.parse().unwrap();
            assert_eq!(v.micros(), micros);
            assert_eq!(v.to_string(), text);
        }
        assert_eq!("1.50".parse::<Fixed>().unwrap().to_string(), "1.5");
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", ".5", "1.", "1.1234567", "a", "1e3", "1..2", "--1"] {
            assert!(bad.parse::<Fixed>().is_err(), "{bad}");
        }
    }

    #[test]
    fn ratio_and_snap() {
        assert_eq!(Fixed::from_ratio(1, 4), Fixed::from_micros(250_000));
        assert_eq!(Fixed::from_ratio(1, 3), Fixed::from_micros(333_333));
        assert_eq!(Fixed::from_ratio(2, 3), Fixed::from_micros(666_667));
        let quarter = Fixed::from_ratio(1, 4);
        assert_eq!(
            Fixed::from_micros(1_120_000).snap(quarter),
            Fixed::from_micros(1_000_000)
        );
        assert_eq!(
            Fixed::from_micros(1_130_000).snap(quarter),
            Fixed::from_micros(1_250_000)
        );
        assert_eq!(
            Fixed::from_micros(1_125_000).snap(quarter),
            Fixed::from_micros(1_250_000)
        );
    }

    #[test]
    fn serde_as_string() {
        let v = Fixed::from_micros(3_750_000);
        assert_eq!(serde_json::to_string(&v).unwrap(), "\"3.75\"");
        let back: Fixed = serde_json::from_str("\"3.75\"").unwrap();
        assert_eq!(back, v);
        let int: Fixed = serde_json::from_str("4").unwrap();
        assert_eq!(int, Fixed::from_int(4));
    }
}
