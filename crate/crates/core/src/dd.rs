//! Double-double arithmetic: an unevaluated sum `hi + lo` of two `f64`s
//! giving roughly 106 bits of significand.
//!
//! Arithmetic, `sqrt`, `exp` and the logarithms are carried out at full
//! double-double precision. Trigonometric and hyperbolic functions fall back
//! to `f64`.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

const LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};
const LN10: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_10,
    lo: -2.170_756_223_382_249e-16,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const fn from_parts(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub const fn of(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    #[inline]
    fn renorm(hi: f64, lo: f64) -> Self {
        if !hi.is_finite() {
            return Self { hi, lo: 0.0 };
        }
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    fn scale_pow2(self, k: i32) -> Self {
        // Two steps so that 2^k itself never overflows.
        let half = k / 2;
        let a = 2f64.powi(half);
        let b = 2f64.powi(k - half);
        Self::renorm(self.hi * a * b, self.lo * a * b)
    }

    /// Taylor series of `exp(x) − 1`, accurate for `|x| < 1e-3`.
    fn expm1_series(self) -> Self {
        let mut term = self;
        let mut sum = self;
        for i in 2..=10 {
            term = term * self / Self::of(i as f64);
            sum += term;
        }
        sum
    }

    fn from_f64_fn(f: impl Fn(f64) -> f64, x: Self) -> Self {
        f(x.hi + x.lo).into()
    }
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }
}

impl fmt::Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DoubleDouble({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&(self.hi + self.lo), f)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        if !s.is_finite() {
            return Self { hi: s, lo: 0.0 };
        }
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Self::renorm(s, e + f)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        if !p.is_finite() {
            return Self { hi: p, lo: 0.0 };
        }
        Self::renorm(p, e + (self.hi * rhs.lo + self.lo * rhs.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        if !q1.is_finite() || rhs.hi.is_infinite() {
            return Self { hi: q1, lo: 0.0 };
        }
        let r = self - rhs * Self::of(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Self::of(q2);
        let q3 = r.hi / rhs.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Self { hi: q1, lo: q2 } + Self::of(q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;
    fn rem(self, rhs: Self) -> Self {
        self - rhs * (self / rhs).trunc()
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {
        $(impl $tr for DoubleDouble {
            fn $m(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        })*
    };
}

assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /, RemAssign rem_assign %);

impl Sum for DoubleDouble {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self { hi: 0.0, lo: 0.0 }
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self { hi: 1.0, lo: 0.0 }
    }
}

impl Num for DoubleDouble {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Self::of)
    }
}

impl ToPrimitive for DoubleDouble {
    fn to_i64(&self) -> Option<i64> {
        let t = self.trunc();
        t.hi.to_i64().and_then(|h| h.checked_add(t.lo.to_i64()?))
    }
    fn to_u64(&self) -> Option<u64> {
        let t = self.trunc();
        let (h, l) = (t.hi.to_i128()?, t.lo.to_i128()?);
        u64::try_from(h + l).ok()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.hi + self.lo)
    }
}

impl FromPrimitive for DoubleDouble {
    fn from_i64(n: i64) -> Option<Self> {
        let hi = n as f64;
        let lo = (n as i128 - hi as i128) as f64;
        Some(Self::renorm(hi, lo))
    }
    fn from_u64(n: u64) -> Option<Self> {
        let hi = n as f64;
        let lo = (n as i128 - hi as i128) as f64;
        Some(Self::renorm(hi, lo))
    }
    fn from_f64(n: f64) -> Option<Self> {
        Some(n.into())
    }
}

impl NumCast for DoubleDouble {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(Self::of)
    }
}

impl Float for DoubleDouble {
    fn nan() -> Self {
        f64::NAN.into()
    }
    fn infinity() -> Self {
        f64::INFINITY.into()
    }
    fn neg_infinity() -> Self {
        f64::NEG_INFINITY.into()
    }
    fn neg_zero() -> Self {
        (-0.0).into()
    }
    fn min_value() -> Self {
        f64::MIN.into()
    }
    fn min_positive_value() -> Self {
        f64::MIN_POSITIVE.into()
    }
    fn epsilon() -> Self {
        2f64.powi(-104).into()
    }
    fn max_value() -> Self {
        f64::MAX.into()
    }
    fn is_nan(self) -> bool {
        self.hi.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.hi.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.hi.is_finite()
    }
    fn is_normal(self) -> bool {
        self.hi.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.hi.classify()
    }
    fn floor(self) -> Self {
        let hi = self.hi.floor();
        if hi == self.hi {
            Self::renorm(hi, self.lo.floor())
        } else {
            hi.into()
        }
    }
    fn ceil(self) -> Self {
        -(-self).floor()
    }
    fn round(self) -> Self {
        if self.hi >= 0.0 {
            (self + Self::of(0.5)).floor()
        } else {
            -((-self) + Self::of(0.5)).floor()
        }
    }
    fn trunc(self) -> Self {
        if self.hi >= 0.0 {
            self.floor()
        } else {
            self.ceil()
        }
    }
    fn fract(self) -> Self {
        self - self.trunc()
    }
    fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.hi.is_sign_negative()) {
            -self
        } else {
            self
        }
    }
    fn signum(self) -> Self {
        self.hi.signum().into()
    }
    fn is_sign_positive(self) -> bool {
        self.hi.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.hi.is_sign_negative()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        Self::one() / self
    }
    fn powi(self, n: i32) -> Self {
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }
    fn powf(self, n: Self) -> Self {
        (n * self.ln()).exp()
    }
    fn sqrt(self) -> Self {
        if self.hi <= 0.0 || !self.hi.is_finite() {
            return self.hi.sqrt().into();
        }
        let x = Self::of(self.hi.sqrt());
        x + (self - x * x) / (x + x)
    }
    fn exp(self) -> Self {
        if self.hi > 709.8 {
            return Self::infinity();
        }
        if self.hi < -745.2 {
            return Self::zero();
        }
        if self.hi.is_nan() {
            return self;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Self::of(k)).scale_pow2(-10);
        // expm1 of the reduced argument, then undo the reduction with
        // s ← 2s + s², which keeps the small quantity separate from 1.
        let mut s = r.expm1_series();
        for _ in 0..10 {
            s = s + s + s * s;
        }
        (s + Self::one()).scale_pow2(k as i32)
    }
    fn exp2(self) -> Self {
        (self * LN2).exp()
    }
    fn ln(self) -> Self {
        if self.hi <= 0.0 || !self.hi.is_finite() {
            return self.hi.ln().into();
        }
        // One Newton step on exp(y) = x doubles the f64 accuracy. Near
        // x = 1 the correction x·exp(−y) − 1 is formed as
        // x·expm1(−y) + (x − 1) to keep its relative accuracy.
        let y = Self::of(self.hi.ln() + self.lo / self.hi);
        if y.hi.abs() < 0.5 {
            y + (self * (-y).exp_m1() + (self - Self::one()))
        } else {
            y + (self * (-y).exp() - Self::one())
        }
    }
    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }
    fn log2(self) -> Self {
        self.ln() / LN2
    }
    fn log10(self) -> Self {
        self.ln() / LN10
    }
    fn max(self, other: Self) -> Self {
        if self.is_nan() || other > self {
            other
        } else {
            self
        }
    }
    fn min(self, other: Self) -> Self {
        if self.is_nan() || other < self {
            other
        } else {
            self
        }
    }
    fn abs_sub(self, other: Self) -> Self {
        if self <= other {
            Self::zero()
        } else {
            self - other
        }
    }
    fn cbrt(self) -> Self {
        if self.hi == 0.0 || !self.hi.is_finite() {
            return self.hi.cbrt().into();
        }
        let y = Self::of(self.hi.cbrt());
        y - (y * y * y - self) / (Self::of(3.0) * y * y)
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn sin(self) -> Self {
        Self::from_f64_fn(f64::sin, self)
    }
    fn cos(self) -> Self {
        Self::from_f64_fn(f64::cos, self)
    }
    fn tan(self) -> Self {
        Self::from_f64_fn(f64::tan, self)
    }
    fn asin(self) -> Self {
        Self::from_f64_fn(f64::asin, self)
    }
    fn acos(self) -> Self {
        Self::from_f64_fn(f64::acos, self)
    }
    fn atan(self) -> Self {
        Self::from_f64_fn(f64::atan, self)
    }
    fn atan2(self, other: Self) -> Self {
        (self.hi + self.lo).atan2(other.hi + other.lo).into()
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn exp_m1(self) -> Self {
        if self.hi.abs() < 1e-3 {
            self.expm1_series()
        } else {
            self.exp() - Self::one()
        }
    }
    fn ln_1p(self) -> Self {
        let u = Self::one() + self;
        if u.hi <= 0.0 || !u.hi.is_finite() {
            return self.hi.ln_1p().into();
        }
        if self.hi.abs() > 0.5 {
            return u.ln();
        }
        let y = Self::of(self.hi.ln_1p() + self.lo / u.hi);
        // Newton step on y ↦ (1 + x)·exp(−y) − 1.
        let e = (-y).exp_m1();
        y + (self + e + self * e)
    }
    fn sinh(self) -> Self {
        Self::from_f64_fn(f64::sinh, self)
    }
    fn cosh(self) -> Self {
        Self::from_f64_fn(f64::cosh, self)
    }
    fn tanh(self) -> Self {
        Self::from_f64_fn(f64::tanh, self)
    }
    fn asinh(self) -> Self {
        Self::from_f64_fn(f64::asinh, self)
    }
    fn acosh(self) -> Self {
        Self::from_f64_fn(f64::acosh, self)
    }
    fn atanh(self) -> Self {
        Self::from_f64_fn(f64::atanh, self)
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.hi.integer_decode()
    }
}

impl Scalar for DoubleDouble {}
