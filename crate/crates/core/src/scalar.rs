//! Number backends.
//!
//! Every audit and graph computation is generic over [`Scalar`], implemented
//! for the exact [`Rational`] type and for `f64`. Exact results are the
//! default; the float path compares with an absolute tolerance of `1e-9`.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Absolute tolerance of the floating-point backend.
pub const FLOAT_TOL: f64 = 1e-9;

/// Arithmetic backend used by audits, distances and graph statistics.
pub trait Scalar:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + for<'a> AddAssign<&'a Self>
    + for<'a> SubAssign<&'a Self>
    + Sum
{
    /// True for backends whose comparisons are exact.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn to_f64(&self) -> f64;
    fn abs(&self) -> Self;
    /// Exact copy when the backend is exact, `None` otherwise.
    fn to_rational(&self) -> Option<Rational>;
    /// Lossless decimal string (`p/q` when no finite decimal exists).
    fn to_decimal(&self) -> String;
    fn parse_decimal(s: &str) -> Result<Self>;
    /// Comparison tolerance: zero for exact backends.
    fn tol() -> Self;

    fn from_int(n: i64) -> Self {
        Self::from_ratio(n, 1)
    }

    fn from_usize(n: usize) -> Self {
        Self::from_ratio(n as i64, 1)
    }

    fn is_zero_tol(&self) -> bool {
        self.abs() <= Self::tol()
    }

    /// `self <= other` up to the backend tolerance.
    fn le_tol(&self, other: &Self) -> bool {
        *self <= other.clone() + Self::tol()
    }

    /// `self > other` beyond the backend tolerance.
    fn gt_tol(&self, other: &Self) -> bool {
        !self.le_tol(other)
    }

    fn eq_tol(&self, other: &Self) -> bool {
        (self.clone() - other.clone()).abs() <= Self::tol()
    }

    fn powi(&self, k: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..k {
            acc *= self.clone();
        }
        acc
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

/// Exact rational number backed by arbitrary-precision integers.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(pub BigRational);

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_bigints(num: BigInt, den: BigInt) -> Self {
        Rational(BigRational::new(num, den))
    }

    pub fn integer(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    /// Exact value of a finite float.
    pub fn from_f64(x: f64) -> Option<Self> {
        BigRational::from_float(x).map(Rational)
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn floor(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    /// `(num, den)` as machine integers when they fit.
    pub fn to_i128_pair(&self) -> Option<(i128, i128)> {
        Some((self.numer().to_i128()?, self.denom().to_i128()?))
    }
}

fn pow10(k: u32) -> BigInt {
    num_traits::pow(BigInt::from(10u8), k as usize)
}

fn format_rational(r: &BigRational) -> String {
    let mut den = r.denom().clone();
    let mut twos = 0u32;
    let mut fives = 0u32;
    let two = BigInt::from(2u8);
    let five = BigInt::from(5u8);
    while den.is_even() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let digits = twos.max(fives);
    if digits == 0 {
        return r.numer().to_string();
    }
    let scaled = (r * BigRational::from_integer(pow10(digits))).to_integer();
    let neg = scaled.sign() == Sign::Minus;
    let mut s = scaled.abs().to_string();
    if s.len() <= digits as usize {
        s = "0".repeat(digits as usize + 1 - s.len()) + &s;
    }
    let split = s.len() - digits as usize;
    let out = format!("{}.{}", &s[..split], &s[split..]);
    if neg {
        format!("-{out}")
    } else {
        out
    }
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let t = s.trim();
    let bad = || Error::Parse(format!("not a decimal or rational number: {s:?}"));
    if t.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::new(
        BigInt::from_str(&digits).map_err(|_| bad())?,
        pow10(frac_part.len() as u32),
    );
    let ten = BigRational::from_integer(BigInt::from(10u8));
    if exp >= 0 {
        value *= num_traits::pow(ten, exp as usize);
    } else {
        value /= num_traits::pow(ten, (-exp) as usize);
    }
    Ok(if neg { -value } else { value })
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rational(&self.0))
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_rational(s).map(Rational)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident) => {
        impl $tr for Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                Rational(self.0.$m(rhs.0))
            }
        }
        impl<'a> $tr<&'a Rational> for &'a Rational {
            type Output = Rational;
            fn $m(self, rhs: &'a Rational) -> Rational {
                Rational((&self.0).$m(&rhs.0))
            }
        }
        impl $atr for Rational {
            fn $am(&mut self, rhs: Rational) {
                self.0.$am(rhs.0);
            }
        }
        impl<'a> $atr<&'a Rational> for Rational {
            fn $am(&mut self, rhs: &'a Rational) {
                self.0.$am(&rhs.0);
            }
        }
    };
}

forward_binop!(Add, add, AddAssign, add_assign);
forward_binop!(Sub, sub, SubAssign, sub_assign);
forward_binop!(Mul, mul, MulAssign, mul_assign);
forward_binop!(Div, div, DivAssign, div_assign);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        let mut acc = BigRational::zero();
        for x in iter {
            acc += x.0;
        }
        Rational(acc)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        let mut acc = BigRational::zero();
        for x in iter {
            acc += &x.0;
        }
        Rational(acc)
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::integer(n)
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Rational(BigRational::zero())
    }
    fn one() -> Self {
        Rational(BigRational::one())
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(num, den)
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
    fn abs(&self) -> Self {
        Rational(self.0.abs())
    }
    fn to_rational(&self) -> Option<Rational> {
        Some(self.clone())
    }
    fn to_decimal(&self) -> String {
        self.to_string()
    }
    fn parse_decimal(s: &str) -> Result<Self> {
        s.parse()
    }
    fn tol() -> Self {
        Self::zero()
    }
    fn is_zero_tol(&self) -> bool {
        self.0.is_zero()
    }
    fn le_tol(&self, other: &Self) -> bool {
        self <= other
    }
    fn eq_tol(&self, other: &Self) -> bool {
        self == other
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn from_rational(r: &Rational) -> Self {
        r.to_f64()
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn to_rational(&self) -> Option<Rational> {
        None
    }
    fn to_decimal(&self) -> String {
        format!("{self}")
    }
    fn parse_decimal(s: &str) -> Result<Self> {
        if s.contains('/') {
            return parse_rational(s).map(|r| Rational(r).to_f64());
        }
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
    }
    fn tol() -> Self {
        FLOAT_TOL
    }
}

/// A tolerance of the form `r^(1/k)` for rational `r ≥ 0`.
///
/// Roots appear in the bridges between audit values and the conditional
/// definitions (`√ε`, `ε^(1/3)`); comparing `x ≤ r^(1/k)` as `x^k ≤ r` keeps
/// those comparisons exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Eps {
    radicand: Rational,
    root: u32,
    /// The radicand as `(p, q)` when both fit `i128`.
    small: Option<(i128, i128)>,
}

impl Eps {
    pub fn new(value: Rational) -> Result<Self> {
        Self::root_of(value, 1)
    }

    pub fn root_of(radicand: Rational, root: u32) -> Result<Self> {
        if radicand.is_negative() || root == 0 {
            return Err(Error::invalid("tolerance must be a nonnegative value with root ≥ 1"));
        }
        Ok(Self::make(radicand, root))
    }

    fn make(radicand: Rational, root: u32) -> Self {
        let small = radicand.to_i128_pair();
        Eps { radicand, root, small }
    }

    pub fn sqrt(value: Rational) -> Result<Self> {
        Self::root_of(value, 2)
    }

    pub fn cbrt(value: Rational) -> Result<Self> {
        Self::root_of(value, 3)
    }

    pub fn radicand(&self) -> &Rational {
        &self.radicand
    }

    pub fn root(&self) -> u32 {
        self.root
    }

    pub fn to_f64(&self) -> f64 {
        self.radicand.to_f64().powf(1.0 / self.root as f64)
    }

    /// Exact value when the root is trivial.
    pub fn as_rational(&self) -> Option<&Rational> {
        (self.root == 1).then_some(&self.radicand)
    }

    /// `x ≤ ε·s` for nonnegative `x` and `s`.
    pub fn admits_scaled<T: Scalar>(&self, x: &T, s: &T) -> bool {
        let lhs = x.powi(self.root);
        let rhs = T::from_rational(&self.radicand) * s.powi(self.root);
        lhs.le_tol(&rhs)
    }

    /// `x ≤ ε` for nonnegative `x`.
    pub fn admits<T: Scalar>(&self, x: &T) -> bool {
        self.admits_scaled(x, &T::one())
    }

    /// `x ≥ ε·s` for nonnegative `x` and `s`.
    pub fn reached_scaled<T: Scalar>(&self, x: &T, s: &T) -> bool {
        let lhs = x.powi(self.root);
        let rhs = T::from_rational(&self.radicand) * s.powi(self.root);
        rhs.le_tol(&lhs)
    }

    /// `√ε`, still exact.
    pub fn sqrt_of(&self) -> Eps {
        Self::make(self.radicand.clone(), self.root * 2)
    }

    /// `ε·c` for a rational `c ≥ 0`.
    pub fn scaled(&self, c: &Rational) -> Eps {
        Self::make(self.radicand.clone() * c.powi(self.root), self.root)
    }

    /// `ε^p ≤ x` for `x ≥ 0`.
    pub fn pow_le(&self, p: u32, x: &Rational) -> bool {
        self.radicand.powi(p) <= x.powi(self.root)
    }

    /// Integer form of [`Eps::admits_scaled`]: `x ≤ ε·s` for `x, s ≥ 0`.
    pub fn admits_scaled_int(&self, x: i128, s: i128) -> bool {
        self.cmp_scaled_int(x, s) != Ordering::Greater
    }

    /// Compares `x` with `ε·s` exactly, for `x, s ≥ 0`.
    pub fn cmp_scaled_int(&self, x: i128, s: i128) -> Ordering {
        if let Some((p, q)) = self.small {
            let lhs = checked_pow(x, self.root).and_then(|v| v.checked_mul(q));
            let rhs = checked_pow(s, self.root).and_then(|v| v.checked_mul(p));
            if let (Some(l), Some(r)) = (lhs, rhs) {
                return l.cmp(&r);
            }
        }
        let k = self.root as usize;
        let lhs = num_traits::pow(BigInt::from(x), k) * self.radicand.denom();
        let rhs = num_traits::pow(BigInt::from(s), k) * self.radicand.numer();
        lhs.cmp(&rhs)
    }
}

fn checked_pow(x: i128, k: u32) -> Option<i128> {
    let mut acc: i128 = 1;
    for _ in 0..k {
        acc = acc.checked_mul(x)?;
    }
    Some(acc)
}

impl fmt::Display for Eps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.root {
            1 => write!(f, "{}", self.radicand),
            2 => write!(f, "sqrt({})", self.radicand),
            k => write!(f, "({})^(1/{k})", self.radicand),
        }
    }
}
