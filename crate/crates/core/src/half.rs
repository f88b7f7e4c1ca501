//! Half-integer quantum numbers stored exactly as twice their value.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Half(i32);

impl Half {
    pub const ZERO: Half = Half(0);
    pub const ONE_HALF: Half = Half(1);

    pub const fn from_twice(twice: i32) -> Self {
        Half(twice)
    }

    pub const fn integer(n: i32) -> Self {
        Half(2 * n)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn abs(self) -> Self {
        Half(self.0.abs())
    }

    /// Accepts `x` only if `2x` is an integer to within 1e-9.
    pub fn from_f64(x: f64) -> Option<Self> {
        let t = 2.0 * x;
        if !t.is_finite() || (t - t.round()).abs() > 1e-9 || t.abs() > i32::MAX as f64 {
            return None;
        }
        Some(Half(t.round() as i32))
    }

    /// Values `self, self-1, ..., -self` (descending magnetic quantum numbers).
    pub fn projections(self) -> impl Iterator<Item = Half> {
        let j = self.0;
        (0..=j).map(move |i| Half(j - 2 * i))
    }
}

impl Add for Half {
    type Output = Half;
    fn add(self, rhs: Half) -> Half {
        Half(self.0 + rhs.0)
    }
}

impl Sub for Half {
    type Output = Half;
    fn sub(self, rhs: Half) -> Half {
        Half(self.0 - rhs.0)
    }
}

impl Neg for Half {
    type Output = Half;
    fn neg(self) -> Half {
        Half(-self.0)
    }
}

impl fmt::Display for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for Half {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        let bad = || Error::parse("half-integer", format!("cannot parse {s:?}"));
        if let Some((num, den)) = s.split_once('/') {
            let num: i32 = num.trim().parse().map_err(|_| bad())?;
            match den.trim() {
                "2" => Ok(Half(num)),
                "1" => Ok(Half(2 * num)),
                _ => Err(bad()),
            }
        } else {
            let x: f64 = s.parse().map_err(|_| bad())?;
            Half::from_f64(x).ok_or_else(bad)
        }
    }
}

impl Serialize for Half {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Half {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Float(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Int(n) => Ok(Half::integer(n as i32)),
            Repr::Float(x) => Half::from_f64(x)
                .ok_or_else(|| serde::de::Error::custom(format!("{x} is not a half-integer"))),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
