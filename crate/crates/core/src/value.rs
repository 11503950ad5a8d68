//! Scalar values, exact decimals and tuple keys.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;
use std::sync::Arc;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Fixed-point decimal with two fractional digits, stored as hundredths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decimal(i64);

impl Decimal {
    pub const ZERO: Decimal = Decimal(0);

    pub const fn from_cents(cents: i64) -> Self {
        Decimal(cents)
    }

    pub const fn from_units(units: i64) -> Self {
        Decimal(units * 100)
    }

    pub const fn cents(self) -> i64 {
        self.0
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid decimal literal {0:?}")]
pub struct ParseDecimalError(String);

impl FromStr for Decimal {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseDecimalError(s.to_string());
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        if whole.is_empty() || frac.len() > 2 || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let whole: i64 = whole.parse().map_err(|_| err())?;
        let frac: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| err())? * 10,
            _ => frac.parse().map_err(|_| err())?,
        };
        let cents = whole
            .checked_mul(100)
            .and_then(|c| c.checked_add(frac))
            .ok_or_else(err)?;
        Ok(Decimal(if neg { -cents } else { cents }))
    }
}

impl Add for Decimal {
    type Output = Decimal;
    fn add(self, rhs: Decimal) -> Decimal {
        Decimal(self.0 + rhs.0)
    }
}

impl AddAssign for Decimal {
    fn add_assign(&mut self, rhs: Decimal) {
        self.0 += rhs.0;
    }
}

impl Sub for Decimal {
    type Output = Decimal;
    fn sub(self, rhs: Decimal) -> Decimal {
        Decimal(self.0 - rhs.0)
    }
}

impl SubAssign for Decimal {
    fn sub_assign(&mut self, rhs: Decimal) {
        self.0 -= rhs.0;
    }
}

impl Neg for Decimal {
    type Output = Decimal;
    fn neg(self) -> Decimal {
        Decimal(-self.0)
    }
}

/// Scaling by an integer quantity stays exact.
impl Mul<i64> for Decimal {
    type Output = Decimal;
    fn mul(self, rhs: i64) -> Decimal {
        Decimal(self.0 * rhs)
    }
}

impl std::iter::Sum for Decimal {
    fn sum<I: Iterator<Item = Decimal>>(iter: I) -> Decimal {
        iter.fold(Decimal::ZERO, |a, b| a + b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKind {
    Int,
    Decimal,
    Text,
    Timestamp,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Int => "int",
            ValueKind::Decimal => "decimal",
            ValueKind::Text => "text",
            ValueKind::Timestamp => "timestamp",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Null,
    Int(i64),
    Decimal(Decimal),
    Text(Arc<str>),
    /// Microseconds since the Unix epoch.
    Timestamp(i64),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot compare {left} with {right}")]
pub struct KindMismatch {
    pub left: ValueKind,
    pub right: ValueKind,
}

impl Value {
    pub fn text(s: &str) -> Value {
        Value::Text(Arc::from(s))
    }

    pub fn kind(&self) -> Option<ValueKind> {
        match self {
            Value::Null => None,
            Value::Int(_) => Some(ValueKind::Int),
            Value::Decimal(_) => Some(ValueKind::Decimal),
            Value::Text(_) => Some(ValueKind::Text),
            Value::Timestamp(_) => Some(ValueKind::Timestamp),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            Value::Decimal(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_timestamp(&self) -> Option<i64> {
        match self {
            Value::Timestamp(v) => Some(*v),
            _ => None,
        }
    }

    /// Null sorts before everything; values of different kinds do not compare.
    pub fn try_cmp(&self, other: &Value) -> Result<Ordering, KindMismatch> {
        match (self.kind(), other.kind()) {
            (None, None) => Ok(Ordering::Equal),
            (None, Some(_)) => Ok(Ordering::Less),
            (Some(_), None) => Ok(Ordering::Greater),
            (Some(l), Some(r)) if l != r => Err(KindMismatch { left: l, right: r }),
            _ => Ok(self.cmp(other)),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Int(_) => 1,
            Value::Decimal(_) => 2,
            Value::Text(_) => 3,
            Value::Timestamp(_) => 4,
        }
    }
}

/// Total order used by the maps. Cross-kind ordering by kind rank only exists
/// so the order is total; the relational layer never lets it happen.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Decimal(a), Value::Decimal(b)) => a.cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Timestamp(a), Value::Timestamp(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Decimal(v) => write!(f, "{v}"),
            Value::Text(v) => write!(f, "{v:?}"),
            Value::Timestamp(v) => write!(f, "@{v}"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<Decimal> for Value {
    fn from(v: Decimal) -> Self {
        Value::Decimal(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::text(v)
    }
}

/// A tuple key compared lexicographically; a proper prefix sorts before its
/// extensions, which is what prefix range scans rely on.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key(Arc<[Value]>);

impl Key {
    pub fn new(values: Vec<Value>) -> Self {
        Key(Arc::from(values))
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn starts_with(&self, prefix: &Key) -> bool {
        self.0.starts_with(&prefix.0)
    }

    /// Lexicographic comparison that rejects cross-kind components.
    pub fn try_cmp(&self, other: &Key) -> Result<Ordering, KindMismatch> {
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            match a.try_cmp(b)? {
                Ordering::Equal => continue,
                ord => return Ok(ord),
            }
        }
        Ok(self.0.len().cmp(&other.0.len()))
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_unit(),
            Value::Int(v) | Value::Timestamp(v) => s.serialize_i64(*v),
            Value::Decimal(v) => s.collect_str(v),
            Value::Text(v) => s.serialize_str(v),
        }
    }
}

/// Decodes without a schema: numbers become `Int` and strings `Text`.
/// [`Value::coerce`] restores the declared kind.
impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Value;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an integer, a string or null")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Value, E> {
                Ok(Value::Int(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Value, E> {
                i64::try_from(v).map(Value::Int).map_err(|_| E::custom("integer out of range"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Value, E> {
                Ok(Value::text(v))
            }
            fn visit_unit<E: de::Error>(self) -> Result<Value, E> {
                Ok(Value::Null)
            }
            fn visit_none<E: de::Error>(self) -> Result<Value, E> {
                Ok(Value::Null)
            }
        }
        d.deserialize_any(V)
    }
}

impl Value {
    /// Reinterprets a schema-free decoded value as `kind`.
    pub fn coerce(self, kind: ValueKind) -> Result<Value, String> {
        match (self, kind) {
            (Value::Null, _) => Ok(Value::Null),
            (Value::Int(v), ValueKind::Int) => Ok(Value::Int(v)),
            (Value::Int(v), ValueKind::Timestamp) => Ok(Value::Timestamp(v)),
            (Value::Text(t), ValueKind::Decimal) => t.parse().map(Value::Decimal).map_err(|e: ParseDecimalError| e.to_string()),
            (Value::Text(t), ValueKind::Text) => Ok(Value::Text(t)),
            (v @ Value::Decimal(_), ValueKind::Decimal) | (v @ Value::Timestamp(_), ValueKind::Timestamp) => Ok(v),
            (v, k) => Err(format!("{v} is not a valid {k}")),
        }
    }
}

impl Serialize for Key {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Key {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Vec::<Value>::deserialize(d).map(Key::new)
    }
}

/// Builds a key from a list of expressions convertible into [`Value`].
#[macro_export]
macro_rules! key {
    ($($v:expr),* $(,)?) => {
        $crate::Key::new(vec![$($crate::Value::from($v)),*])
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parse_and_display() {
        assert_eq!("12.34".parse::<Decimal>().unwrap(), Decimal::from_cents(1234));
        assert_eq!("-0.05".parse::<Decimal>().unwrap(), Decimal::from_cents(-5));
        assert_eq!("7".parse::<Decimal>().unwrap(), Decimal::from_units(7));
        assert_eq!("7.5".parse::<Decimal>().unwrap(), Decimal::from_cents(750));
        assert!("1.234".parse::<Decimal>().is_err());
        assert!("abc".parse::<Decimal>().is_err());
        assert!(".5".parse::<Decimal>().is_err());
        assert_eq!(Decimal::from_cents(-105).to_string(), "-1.05");
        assert_eq!(Decimal::from_cents(300_000_00).to_string(), "300000.00");
    }

    #[test]
    fn decimal_sums_are_exact() {
        // 0.10 added a thousand times is exactly 100.00, unlike binary floats.
        let total: Decimal = (0..1000).map(|_| Decimal::from_cents(10)).sum();
        assert_eq!(total, Decimal::from_units(100));
        assert_eq!(Decimal::from_cents(199) * 3, Decimal::from_cents(597));
    }

    #[test]
    fn null_sorts_first_and_kinds_do_not_mix() {
        assert_eq!(Value::Null.try_cmp(&Value::Int(-5)), Ok(Ordering::Less));
        assert_eq!(Value::text("a").try_cmp(&Value::Null), Ok(Ordering::Greater));
        assert!(Value::Int(1).try_cmp(&Value::text("1")).is_err());
        assert!(key![1, 2].try_cmp(&key![1, "x"]).is_err());
    }

    #[test]
    fn prefix_sorts_before_extensions() {
        let p = key![1, 2];
        assert!(p < key![1, 2, 0]);
        assert!(key![1, 2, 99] < key![1, 3]);
        assert!(key![1, 2, 7].starts_with(&p));
        assert_eq!(key![1, 2].try_cmp(&key![1, 2, 3]), Ok(Ordering::Less));
    }

    #[test]
    fn json_round_trip_through_coerce() {
        let vals = vec![
            Value::Int(-3),
            Value::Decimal(Decimal::from_cents(1234)),
            Value::text("x"),
            Value::Timestamp(1_700_000_000_000_000),
            Value::Null,
        ];
        let json = serde_json::to_string(&vals).unwrap();
        assert_eq!(json, r#"[-3,"12.34","x",1700000000000000,null]"#);
        let raw: Vec<Value> = serde_json::from_str(&json).unwrap();
        let kinds = [ValueKind::Int, ValueKind::Decimal, ValueKind::Text, ValueKind::Timestamp, ValueKind::Int];
        let back: Vec<Value> = raw.into_iter().zip(kinds).map(|(v, k)| v.coerce(k).unwrap()).collect();
        assert_eq!(back, vals);
        assert!(serde_json::from_str::<Value>("1.5").is_err());
        assert!(Value::text("abc").coerce(ValueKind::Int).is_err());
    }
}
