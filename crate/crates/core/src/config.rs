//! Mining configuration with exact decimal fractions.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ConfigError;
use crate::property::DetectConfig;

/// A non-negative decimal fraction kept exactly, e.g. `0.98`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fraction {
    text: String,
    value: BigRational,
}

impl Fraction {
    pub fn value(&self) -> &BigRational {
        &self.value
    }

    pub fn one() -> Self {
        "1".parse().expect("literal")
    }

    /// `n * self` rounded up.
    pub fn ceil_mul(&self, n: usize) -> usize {
        let prod = &self.value * BigRational::from_integer(BigInt::from(n));
        let c = prod.ceil().to_integer();
        usize::try_from(c).expect("bounded by n")
    }

    /// `numerator >= self * denominator`, exactly.
    pub fn admits(&self, numerator: usize, denominator: usize) -> bool {
        BigRational::from_integer(BigInt::from(numerator))
            >= &self.value * BigRational::from_integer(BigInt::from(denominator))
    }
}

impl FromStr for Fraction {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Decimal(s.to_string());
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        let digits = |d: &str| d.bytes().all(|b| b.is_ascii_digit());
        if (int.is_empty() && frac.is_empty()) || !digits(int) || !digits(frac) {
            return Err(bad());
        }
        let frac = frac.trim_end_matches('0');
        let int = int.trim_start_matches('0');
        let all: String = format!("{int}{frac}");
        let num = if all.is_empty() {
            BigInt::zero()
        } else {
            BigInt::parse_bytes(all.as_bytes(), 10).ok_or_else(bad)?
        };
        let den = BigInt::from(10u8).pow(frac.len() as u32);
        let text = match (int.is_empty(), frac.is_empty()) {
            (true, true) => "0".to_string(),
            (false, true) => int.to_string(),
            (true, false) => format!("0.{frac}"),
            (false, false) => format!("{int}.{frac}"),
        };
        Ok(Fraction {
            text,
            value: BigRational::new(num, den),
        })
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        // numbers keep their shortest decimal rendering, so 0.98 stays exact
        let v = serde_json::Value::deserialize(d)?;
        let text = match v {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(serde::de::Error::custom(format!(
                    "expected a decimal, got {other}"
                )))
            }
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct MinerConfig {
    pub threshold: Fraction,
    pub min_support: usize,
    pub min_applicable_fraction: Fraction,
    pub include_ordering: bool,
    pub pair_budget: usize,
    pub include_reverted: bool,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            threshold: "0.98".parse().expect("literal"),
            min_support: 5,
            min_applicable_fraction: "0.5".parse().expect("literal"),
            include_ordering: false,
            pair_budget: 20_000,
            include_reverted: false,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = self.threshold.value();
        if t.is_zero() || *t > BigRational::one() {
            return Err(ConfigError::Threshold(self.threshold.to_string()));
        }
        if *self.min_applicable_fraction.value() > BigRational::one() {
            return Err(ConfigError::Fraction {
                name: "minApplicableFraction",
                value: self.min_applicable_fraction.to_string(),
            });
        }
        if self.min_support == 0 {
            return Err(ConfigError::MinSupport);
        }
        Ok(())
    }

    pub fn detect(&self) -> DetectConfig {
        DetectConfig {
            include_ordering: self.include_ordering,
            pair_budget: self.pair_budget,
        }
    }

    /// Applicable traces a candidate needs in a group of `group_len`.
    pub fn applicable_floor(&self, group_len: usize) -> usize {
        self.min_support
            .max(self.min_applicable_fraction.ceil_mul(group_len))
    }
}
