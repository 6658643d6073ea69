//! Double-double arithmetic: an unevaluated sum `hi + lo` of two `f64`
//! carrying about 106 significant bits.
//!
//! Arithmetic, `sqrt`, `exp`, `ln`, `tanh`, `sinh` and `cosh` are carried to
//! full precision. Trigonometric and inverse hyperbolic functions fall back to
//! `f64` accuracy on the leading part.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Float, Num, NumCast, One, ToPrimitive, Zero};

use super::tensor::{DType, Scalar};

#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleF64 {
    hi: f64,
    lo: f64,
}

const LN2: DoubleF64 = DoubleF64 {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};
const LN10: DoubleF64 = DoubleF64 {
    hi: std::f64::consts::LN_10,
    lo: -2.170_756_223_382_249_4e-16,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleF64 {
    pub const fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        if !hi.is_finite() {
            return Self { hi, lo: 0.0 };
        }
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    fn scale_pow2(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        Self {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    fn rounded(self) -> f64 {
        if self.hi.is_finite() {
            self.hi + self.lo
        } else {
            self.hi
        }
    }

    fn map_f64(self, f: impl FnOnce(f64) -> f64) -> Self {
        Self::from_f64(f(self.hi))
    }

    /// `sinh` by its Taylor series, for `|x| < 0.5`.
    fn sinh_series(self) -> Self {
        let x2 = self * self;
        let mut term = self;
        let mut sum = self;
        let mut k = 1.0;
        while term.hi.abs() > 1e-34 * sum.hi.abs() {
            term = term * x2 / Self::from_f64((k + 1.0) * (k + 2.0));
            sum += term;
            k += 2.0;
        }
        sum
    }
}

impl PartialEq for DoubleF64 {
    fn eq(&self, other: &Self) -> bool {
        self.hi == other.hi && self.lo == other.lo
    }
}

impl PartialOrd for DoubleF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            o => Some(o),
        }
    }
}

impl fmt::Display for DoubleF64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.rounded(), f)
    }
}

impl Neg for DoubleF64 {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleF64 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (s1, s2) = two_sum(self.hi, o.hi);
        if !s1.is_finite() {
            return Self::from_f64(s1);
        }
        let (t1, t2) = two_sum(self.lo, o.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        Self::renorm(s1, s2 + t2)
    }
}

impl Sub for DoubleF64 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleF64 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (p1, p2) = two_prod(self.hi, o.hi);
        if !p1.is_finite() {
            return Self::from_f64(p1);
        }
        Self::renorm(p1, p2 + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for DoubleF64 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        if !q1.is_finite() || o.hi == 0.0 {
            return Self::from_f64(q1);
        }
        let r = self - o * Self::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Self::from_f64(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::from_f64(q3)
    }
}

impl Rem for DoubleF64 {
    type Output = Self;
    fn rem(self, o: Self) -> Self {
        self - (self / o).trunc() * o
    }
}

macro_rules! assign_ops {
    ($($tr:ident $f:ident $op:tt),*) => {$(
        impl $tr for DoubleF64 {
            fn $f(&mut self, o: Self) {
                *self = *self $op o;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /, RemAssign rem_assign %);

impl Sum for DoubleF64 {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl Zero for DoubleF64 {
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for DoubleF64 {
    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl Num for DoubleF64 {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Self::from_f64)
    }
}

impl ToPrimitive for DoubleF64 {
    fn to_i64(&self) -> Option<i64> {
        self.rounded().to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.rounded().to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.rounded())
    }
}

impl NumCast for DoubleF64 {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(Self::from_f64)
    }
}

impl Float for DoubleF64 {
    fn nan() -> Self {
        Self::from_f64(f64::NAN)
    }
    fn infinity() -> Self {
        Self::from_f64(f64::INFINITY)
    }
    fn neg_infinity() -> Self {
        Self::from_f64(f64::NEG_INFINITY)
    }
    fn neg_zero() -> Self {
        Self::from_f64(-0.0)
    }
    fn min_value() -> Self {
        Self::from_f64(f64::MIN)
    }
    fn min_positive_value() -> Self {
        Self::from_f64(f64::MIN_POSITIVE)
    }
    fn epsilon() -> Self {
        Self::from_f64(2f64.powi(-104))
    }
    fn max_value() -> Self {
        Self::from_f64(f64::MAX)
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
        let f = self.hi.floor();
        if f == self.hi {
            Self::renorm(f, self.lo.floor())
        } else {
            Self::from_f64(f)
        }
    }
    fn ceil(self) -> Self {
        let c = self.hi.ceil();
        if c == self.hi {
            Self::renorm(c, self.lo.ceil())
        } else {
            Self::from_f64(c)
        }
    }
    fn round(self) -> Self {
        let r = self.hi.round();
        if r == self.hi {
            Self::renorm(r, self.lo.round())
        } else if (r - self.hi).abs() == 0.5 && self.lo != 0.0 {
            // an exact tie in `hi` is broken by the sign of `lo`
            let up = self.hi + 0.5 * self.lo.signum();
            Self::from_f64(up.round())
        } else {
            Self::from_f64(r)
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
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }
    fn signum(self) -> Self {
        Self::from_f64(self.hi.signum())
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
            base = base * base;
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
        if self.hi <= 0.0 {
            return Self::from_f64(self.hi.sqrt());
        }
        let a = self.hi.sqrt();
        let y = Self::from_f64(a);
        let r = self - y * y;
        y + Self::from_f64(r.hi * 0.5 / a)
    }
    fn exp(self) -> Self {
        if self.hi > 709.8 {
            return Self::infinity();
        }
        if self.hi < -745.2 {
            return Self::zero();
        }
        if !self.hi.is_finite() {
            return Self::from_f64(self.hi.exp());
        }
        let m = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Self::from_f64(m)).scale_pow2(-10);
        // e^r − 1 by Taylor series, then ten squarings kept in the form
        // (1 + q)² − 1 = q·(q + 2) so the small part never loses digits
        let mut q = Self::zero();
        for k in (1..=11).rev() {
            q = r * (Self::one() + q) / Self::from_f64(k as f64);
        }
        for _ in 0..10 {
            q = q * (q + Self::from_f64(2.0));
        }
        let p = Self::one() + q;
        // split the power of two so that neither factor overflows
        let m = m as i32;
        p.scale_pow2(m / 2).scale_pow2(m - m / 2)
    }
    fn exp2(self) -> Self {
        (self * LN2).exp()
    }
    fn ln(self) -> Self {
        if self.hi <= 0.0 || !self.hi.is_finite() {
            return Self::from_f64(self.hi.ln());
        }
        let y = Self::from_f64(self.hi.ln());
        y + self * (-y).exp() - Self::one()
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
    fn to_degrees(self) -> Self {
        self.map_f64(f64::to_degrees)
    }
    fn to_radians(self) -> Self {
        self.map_f64(f64::to_radians)
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
        (self - other).max(Self::zero())
    }
    fn cbrt(self) -> Self {
        if self.hi == 0.0 || !self.hi.is_finite() {
            return self;
        }
        let y = Self::from_f64(self.hi.cbrt());
        y - (y * y * y - self) / (Self::from_f64(3.0) * y * y)
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn sin(self) -> Self {
        self.map_f64(f64::sin)
    }
    fn cos(self) -> Self {
        self.map_f64(f64::cos)
    }
    fn tan(self) -> Self {
        self.map_f64(f64::tan)
    }
    fn asin(self) -> Self {
        self.map_f64(f64::asin)
    }
    fn acos(self) -> Self {
        self.map_f64(f64::acos)
    }
    fn atan(self) -> Self {
        self.map_f64(f64::atan)
    }
    fn atan2(self, other: Self) -> Self {
        Self::from_f64(self.hi.atan2(other.hi))
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn exp_m1(self) -> Self {
        if self.hi.abs() < 0.5 {
            let s = (self * Self::from_f64(0.5)).sinh_series();
            // e^x − 1 = 2·sinh(x/2)·e^{x/2}
            Self::from_f64(2.0) * s * (self * Self::from_f64(0.5)).exp()
        } else {
            self.exp() - Self::one()
        }
    }
    fn ln_1p(self) -> Self {
        (Self::one() + self).ln()
    }
    fn sinh(self) -> Self {
        if self.hi.abs() < 0.5 {
            return self.sinh_series();
        }
        let e = self.exp();
        (e - e.recip()) * Self::from_f64(0.5)
    }
    fn cosh(self) -> Self {
        let e = self.exp();
        (e + e.recip()) * Self::from_f64(0.5)
    }
    fn tanh(self) -> Self {
        if self.hi < 0.0 {
            return -(-self).tanh();
        }
        if self.hi > 40.0 {
            return Self::one();
        }
        if self.hi < 0.5 {
            let s = self.sinh_series();
            return s / (Self::one() + s * s).sqrt();
        }
        let e = (self * Self::from_f64(2.0)).exp();
        (e - Self::one()) / (e + Self::one())
    }
    fn asinh(self) -> Self {
        self.map_f64(f64::asinh)
    }
    fn acosh(self) -> Self {
        self.map_f64(f64::acosh)
    }
    fn atanh(self) -> Self {
        self.map_f64(f64::atanh)
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.hi.integer_decode()
    }
}

impl Scalar for DoubleF64 {
    /// Stored rounded to `f64`.
    const DTYPE: DType = DType::F64;
    fn of(x: f64) -> Self {
        Self::from_f64(x)
    }
    fn as_f64(self) -> f64 {
        self.rounded()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(x: f64) -> DoubleF64 {
        DoubleF64::from_f64(x)
    }

    #[test]
    fn captures_bits_lost_by_f64() {
        let tiny = 2f64.powi(-70);
        let x = dd(1.0) + dd(tiny);
        assert_eq!(x.hi(), 1.0);
        assert_eq!(x.lo(), tiny);
        assert_eq!((x - dd(1.0)).as_f64(), tiny);
    }

    #[test]
    fn division_and_sqrt_round_trip() {
        let third = dd(1.0) / dd(3.0);
        let back = third * dd(3.0) - dd(1.0);
        assert!(back.as_f64().abs() < 1e-31);
        let r = dd(2.0).sqrt();
        assert!((r * r - dd(2.0)).as_f64().abs() < 1e-31);
    }

    #[test]
    fn exp_and_ln_are_inverse() {
        for x in [-20.0, -1.3, -1e-3, 0.0, 0.7, 5.0, 300.0] {
            let y = dd(x).exp().ln();
            assert!((y - dd(x)).as_f64().abs() <= 1e-30 * x.abs().max(1.0), "{x}");
            assert!((dd(x).exp().as_f64() - x.exp()).abs() <= 4e-16 * x.exp());
        }
        assert_eq!(dd(1000.0).exp(), DoubleF64::infinity());
        assert_eq!(dd(-1000.0).exp(), DoubleF64::zero());
    }

    #[test]
    fn exp_of_one_matches_e_to_double_precision() {
        // e = 2.718281828459045 + 1.4456468917292502e-16
        let e = dd(1.0).exp();
        assert_eq!(e.hi(), std::f64::consts::E);
        assert!((e.lo() - 1.445_646_891_729_250_2e-16).abs() < 1e-31);
    }

    #[test]
    fn tanh_is_odd_and_consistent() {
        for x in [1e-9, 0.1, 0.49, 0.51, 2.0, 30.0, 50.0] {
            let t = dd(x).tanh();
            assert_eq!((-dd(x)).tanh(), -t);
            assert!((t.as_f64() - x.tanh()).abs() <= 5e-16 * x.tanh().abs());
            let identity = t * (dd(x).cosh()) - dd(x).sinh();
            if x < 30.0 {
                assert!(identity.as_f64().abs() <= 1e-30 * x.cosh(), "{x}");
            }
        }
    }

    #[test]
    fn rounding_functions() {
        let x = dd(3.0) - dd(2f64.powi(-80));
        assert_eq!(x.floor(), dd(2.0));
        assert_eq!(x.ceil(), dd(3.0));
        assert_eq!(x.trunc(), dd(2.0));
        assert_eq!(x.round(), dd(3.0));
        assert_eq!(dd(-2.5).round(), dd(-3.0));
        assert!((dd(7.5) % dd(2.0) - dd(1.5)).as_f64().abs() < 1e-30);
        assert_eq!(dd(-4.0).abs(), dd(4.0));
        assert_eq!(dd(2.0).powi(-2), dd(0.25));
    }
}
