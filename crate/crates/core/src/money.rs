//! Fixed-point currency and exact probabilities.
//!
//! Realized payoffs are whole cents (`Money`). Expectations are exact
//! rationals over cents (`Expected`), so closed-form accounting such as
//! `0.98 * 4 + 0.02 * 8` never picks up float drift.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ParseValueError;

pub const CENTS_PER_UNIT: i64 = 100;

/// Parses a plain decimal literal (`-12.375`, `3`, `.5`) into an exact ratio.
pub fn parse_decimal(text: &str) -> Result<Ratio<i64>, ParseValueError> {
    let t = text.trim();
    let bad = || ParseValueError::Decimal(text.to_string());
    if t.is_empty() {
        return Err(bad());
    }
    let (negative, digits) = match t.as_bytes()[0] {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, t),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part
        .bytes()
        .chain(frac_part.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    if frac_part.len() > 12 || int_part.len() > 12 {
        return Err(bad());
    }
    let whole: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| bad())?
    };
    let scale = 10i64.pow(frac_part.len() as u32);
    let frac: i64 = if frac_part.is_empty() {
        0
    } else {
        frac_part.parse().map_err(|_| bad())?
    };
    let mut value = Ratio::new(whole * scale + frac, scale);
    if negative {
        value = -value;
    }
    Ok(value)
}

/// Exact decimal value of a float as it prints (shortest round-trip form).
pub fn ratio_from_f64(value: f64) -> Result<Ratio<i64>, ParseValueError> {
    if !value.is_finite() {
        return Err(ParseValueError::Decimal(value.to_string()));
    }
    parse_decimal(&format!("{value}"))
}

/// Whole cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: i64) -> Self {
        Money(cents)
    }

    pub const fn from_units(units: i64) -> Self {
        Money(units * CENTS_PER_UNIT)
    }

    pub const fn cents(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / CENTS_PER_UNIT as f64
    }

    pub fn to_expected(self) -> Expected {
        Expected(Ratio::from_integer(self.0))
    }

    pub fn abs(self) -> Money {
        Money(self.0.abs())
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Money {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let value = parse_decimal(s)? * Ratio::from_integer(CENTS_PER_UNIT);
        if !value.is_integer() {
            return Err(ParseValueError::SubCent(s.to_string()));
        }
        Ok(Money(value.to_integer()))
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Mul<i64> for Money {
    type Output = Money;
    fn mul(self, rhs: i64) -> Money {
        Money(self.0 * rhs)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = DecimalLiteral::deserialize(deserializer)?;
        let value =
            raw.into_ratio().map_err(de::Error::custom)? * Ratio::from_integer(CENTS_PER_UNIT);
        if !value.is_integer() {
            return Err(de::Error::custom(format!(
                "{} has fractions of a cent",
                raw_display(&value)
            )));
        }
        Ok(Money(value.to_integer()))
    }
}

fn raw_display(value: &Ratio<i64>) -> String {
    format!(
        "{}",
        value.to_f64().unwrap_or(f64::NAN) / CENTS_PER_UNIT as f64
    )
}

/// Number-or-string literal accepted wherever the scenario format takes a decimal.
#[derive(Deserialize)]
#[serde(untagged)]
enum DecimalLiteral {
    Int(i64),
    Float(f64),
    Text(String),
}

impl DecimalLiteral {
    fn into_ratio(self) -> Result<Ratio<i64>, ParseValueError> {
        match self {
            DecimalLiteral::Int(i) => Ok(Ratio::from_integer(i)),
            DecimalLiteral::Float(f) => ratio_from_f64(f),
            DecimalLiteral::Text(s) => parse_decimal(&s),
        }
    }
}

/// An exact probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Probability(Ratio<i64>);

impl Probability {
    pub fn new(value: Ratio<i64>) -> Result<Self, ParseValueError> {
        if value < Ratio::zero() || value > Ratio::one() {
            return Err(ParseValueError::Probability(value.to_string()));
        }
        Ok(Probability(value))
    }

    /// `numer / denom`; panics when outside `[0, 1]` or `denom == 0`.
    pub fn ratio(numer: i64, denom: i64) -> Self {
        Probability::new(Ratio::new(numer, denom)).expect("probability out of range")
    }

    pub fn zero() -> Self {
        Probability(Ratio::zero())
    }

    pub fn one() -> Self {
        Probability(Ratio::one())
    }

    pub fn from_f64(value: f64) -> Result<Self, ParseValueError> {
        Probability::new(ratio_from_f64(value)?)
    }

    pub fn value(self) -> Ratio<i64> {
        self.0
    }

    pub fn complement(self) -> Self {
        Probability(Ratio::one() - self.0)
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    /// Bernoulli draw from an integer uniform on `[0, denom)`, so the
    /// outcome is identical on every platform.
    pub fn sample<R: rand::Rng + ?Sized>(self, rng: &mut R) -> bool {
        let denom = *self.0.denom();
        let numer = *self.0.numer();
        if numer <= 0 {
            return false;
        }
        if numer >= denom {
            return true;
        }
        rng.random_range(0..denom) < numer
    }
}

impl Mul for Probability {
    type Output = Probability;
    fn mul(self, rhs: Probability) -> Probability {
        Probability(self.0 * rhs.0)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl FromStr for Probability {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n
                .trim()
                .parse()
                .map_err(|_| ParseValueError::Decimal(s.to_string()))?;
            let d: i64 = d
                .trim()
                .parse()
                .map_err(|_| ParseValueError::Decimal(s.to_string()))?;
            if d == 0 {
                return Err(ParseValueError::Decimal(s.to_string()));
            }
            return Probability::new(Ratio::new(n, d));
        }
        Probability::new(parse_decimal(s)?)
    }
}

impl Serialize for Probability {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match DecimalLiteral::deserialize(deserializer)? {
            DecimalLiteral::Text(s) => s.parse().map_err(de::Error::custom),
            other => Probability::new(other.into_ratio().map_err(de::Error::custom)?)
                .map_err(de::Error::custom),
        }
    }
}

/// An exact expected amount, in cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Expected(Ratio<i64>);

impl Expected {
    pub fn zero() -> Self {
        Expected(Ratio::zero())
    }

    pub fn from_cents_ratio(value: Ratio<i64>) -> Self {
        Expected(value)
    }

    pub fn cents(self) -> Ratio<i64> {
        self.0
    }

    pub fn weighted(amount: Money, weight: Probability) -> Self {
        Expected(Ratio::from_integer(amount.cents()) * weight.value())
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN) / CENTS_PER_UNIT as f64
    }

    pub fn scale(self, factor: i64) -> Expected {
        Expected(self.0 * Ratio::from_integer(factor))
    }

    pub fn abs(self) -> Expected {
        Expected(self.0.abs())
    }

    /// Exact whole-cent value, if there is one.
    pub fn as_money(self) -> Option<Money> {
        self.0
            .is_integer()
            .then(|| Money::from_cents(self.0.to_integer()))
    }

    /// Rounded to the nearest cent, halves away from zero.
    pub fn round_to_money(self) -> Money {
        Money::from_cents(self.0.round().to_integer())
    }
}

impl From<Money> for Expected {
    fn from(m: Money) -> Self {
        m.to_expected()
    }
}

impl Add for Expected {
    type Output = Expected;
    fn add(self, rhs: Expected) -> Expected {
        Expected(self.0 + rhs.0)
    }
}

impl AddAssign for Expected {
    fn add_assign(&mut self, rhs: Expected) {
        self.0 += rhs.0;
    }
}

impl Sub for Expected {
    type Output = Expected;
    fn sub(self, rhs: Expected) -> Expected {
        Expected(self.0 - rhs.0)
    }
}

impl Neg for Expected {
    type Output = Expected;
    fn neg(self) -> Expected {
        Expected(-self.0)
    }
}

impl Mul<Probability> for Expected {
    type Output = Expected;
    fn mul(self, rhs: Probability) -> Expected {
        Expected(self.0 * rhs.value())
    }
}

impl std::iter::Sum for Expected {
    fn sum<I: Iterator<Item = Expected>>(iter: I) -> Expected {
        iter.fold(Expected::zero(), |a, b| a + b)
    }
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.round_to_money())
    }
}

impl Serialize for Expected {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!("1.6".parse::<Money>().unwrap(), Money::from_cents(160));
        assert_eq!("-0.29".parse::<Money>().unwrap(), Money::from_cents(-29));
        assert_eq!("15.68".parse::<Money>().unwrap(), Money::from_cents(1568));
        assert!("1.605".parse::<Money>().is_err());
        assert!("abc".parse::<Money>().is_err());
        assert_eq!(
            "0.98".parse::<Probability>().unwrap(),
            Probability::ratio(49, 50)
        );
        assert_eq!(
            "1/3".parse::<Probability>().unwrap(),
            Probability::ratio(1, 3)
        );
        assert!("1.2".parse::<Probability>().is_err());
    }

    #[test]
    fn float_inputs_use_their_printed_decimal() {
        assert_eq!(
            Probability::from_f64(0.92).unwrap(),
            Probability::ratio(23, 25)
        );
        assert_eq!(ratio_from_f64(0.1).unwrap(), Ratio::new(1, 10));
    }

    #[test]
    fn display_renders_two_decimals() {
        assert_eq!(Money::from_cents(640).to_string(), "6.40");
        assert_eq!(Money::from_cents(-79).to_string(), "-0.79");
        assert_eq!(
            Expected::from_cents_ratio(Ratio::new(1001, 2)).to_string(),
            "5.01"
        );
    }

    #[test]
    fn money_deserializes_from_numbers_and_strings() {
        #[derive(Deserialize)]
        struct W {
            a: Money,
            b: Money,
            c: Money,
        }
        let w: W = serde_json::from_str(r#"{"a": 1.6, "b": 10, "c": "0.25"}"#).unwrap();
        assert_eq!((w.a.cents(), w.b.cents(), w.c.cents()), (160, 1000, 25));
    }

    #[test]
    fn bernoulli_edges() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert!(!Probability::zero().sample(&mut rng));
        assert!(Probability::one().sample(&mut rng));
    }
}
