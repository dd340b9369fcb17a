//! Double-double arithmetic: an unevaluated sum `hi + lo` of two `f64`s with
//! roughly 106 bits of significand.
//!
//! Only the operations the tape uses are carried at full precision (`+ − × ÷`,
//! `exp`, `ln`, `tanh`, `sqrt`, comparisons). The remaining `num_traits::Float`
//! methods round through `f64`. The type exists to evaluate losses for
//! finite-difference oracles, where a difference quotient in `f64` is limited
//! to about `1e-16·|f| / eps` absolute accuracy.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Num, NumCast, One, ToPrimitive, Zero};

use super::array::Float;

#[derive(Clone, Copy, Default)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };

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

impl Dd {
    pub const fn new(hi: f64) -> Self {
        Self { hi, lo: 0.0 }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Self { hi: self.hi * s, lo: self.lo * s }
    }

    fn exp_dd(self) -> Self {
        if self.hi > 709.0 {
            return Self::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Self::new(0.0);
        }
        if self.hi.is_nan() {
            return self;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Self::new(k)).ldexp(-10);
        // |r| < 4e-4, so 14 Taylor terms of exp(r) − 1 are far below 1e-32.
        // Squaring in the form (1 + s)² − 1 = s·(s + 2) keeps the low bits.
        let mut term = r;
        let mut s = r;
        for n in 2..=14 {
            term = term * r / Self::new(n as f64);
            s += term;
        }
        for _ in 0..10 {
            s = s * (s + Self::new(2.0));
        }
        (s + Self::new(1.0)).ldexp(k as i32)
    }

    fn ln_dd(self) -> Self {
        if self.hi <= 0.0 || !self.hi.is_finite() {
            return Self::new(self.hi.ln());
        }
        let mut y = Self::new(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp_dd() - Self::new(1.0);
        }
        y
    }

    fn tanh_dd(self) -> Self {
        if self.hi.abs() > 40.0 {
            return Self::new(self.hi.signum());
        }
        let a = self.abs_dd();
        let e = (a * Self::new(-2.0)).exp_dd();
        let t = (Self::new(1.0) - e) / (Self::new(1.0) + e);
        if self.hi < 0.0 { -t } else { t }
    }

    fn sqrt_dd(self) -> Self {
        if self.hi <= 0.0 {
            return Self::new(self.hi.sqrt());
        }
        let s = Self::new(self.hi.sqrt());
        s + (self - s * s) / (s * Self::new(2.0))
    }

    fn abs_dd(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) { -self } else { self }
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Self::new(v)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        if !s.is_finite() {
            return Self::new(s);
        }
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Self::norm(s, e + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        if !p.is_finite() {
            return Self::new(p);
        }
        Self::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        if !q1.is_finite() || o.hi == 0.0 {
            return Self::new(q1);
        }
        let r = self - o * Self::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Self::new(q2);
        let q3 = r.hi / o.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Self { hi: q1, lo: q2 } + Self::new(q3)
    }
}

impl Rem for Dd {
    type Output = Dd;
    fn rem(self, o: Dd) -> Dd {
        let q = num_traits::Float::trunc(self / o);
        self - q * o
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl $tr for Dd {
            fn $m(&mut self, o: Dd) {
                *self = *self $op o;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /, RemAssign rem_assign %);

impl PartialEq for Dd {
    fn eq(&self, o: &Dd) -> bool {
        self.hi == o.hi && self.lo == o.lo
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, o: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&o.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&o.lo),
            ord => Some(ord),
        }
    }
}

impl Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::new(0.0), |a, b| a + b)
    }
}

impl fmt::Debug for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dd({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.hi, f)
    }
}

impl fmt::LowerExp for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerExp::fmt(&self.hi, f)
    }
}

impl Zero for Dd {
    fn zero() -> Self {
        Dd::new(0.0)
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for Dd {
    fn one() -> Self {
        Dd::new(1.0)
    }
}

impl Num for Dd {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Dd::new)
    }
}

impl ToPrimitive for Dd {
    fn to_i64(&self) -> Option<i64> {
        num_traits::Float::trunc(*self).hi.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        num_traits::Float::trunc(*self).hi.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.hi + self.lo)
    }
}

impl NumCast for Dd {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(Dd::new)
    }
}

macro_rules! via_f64 {
    ($($m:ident),*) => {$(
        fn $m(self) -> Self {
            Dd::new(self.hi.$m())
        }
    )*};
}

impl num_traits::Float for Dd {
    fn nan() -> Self {
        Dd::new(f64::NAN)
    }
    fn infinity() -> Self {
        Dd::new(f64::INFINITY)
    }
    fn neg_infinity() -> Self {
        Dd::new(f64::NEG_INFINITY)
    }
    fn neg_zero() -> Self {
        Dd::new(-0.0)
    }
    fn min_value() -> Self {
        Dd::new(f64::MIN)
    }
    fn min_positive_value() -> Self {
        Dd::new(f64::MIN_POSITIVE)
    }
    fn max_value() -> Self {
        Dd::new(f64::MAX)
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
        let h = self.hi.floor();
        if h == self.hi { Self::norm(h, self.lo.floor()) } else { Dd::new(h) }
    }
    fn ceil(self) -> Self {
        let h = self.hi.ceil();
        if h == self.hi { Self::norm(h, self.lo.ceil()) } else { Dd::new(h) }
    }
    fn round(self) -> Self {
        (self + Dd::new(0.5)).floor()
    }
    fn trunc(self) -> Self {
        if self.hi >= 0.0 { self.floor() } else { self.ceil() }
    }
    fn fract(self) -> Self {
        self - self.trunc()
    }
    fn abs(self) -> Self {
        self.abs_dd()
    }
    fn signum(self) -> Self {
        Dd::new(self.hi.signum())
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
        Dd::new(1.0) / self
    }
    fn powi(self, n: i32) -> Self {
        let mut acc = Dd::new(1.0);
        let mut base = self;
        let mut k = n.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                acc *= base;
            }
            base = base * base;
            k >>= 1;
        }
        if n < 0 { acc.recip() } else { acc }
    }
    fn powf(self, n: Self) -> Self {
        (self.ln_dd() * n).exp_dd()
    }
    fn sqrt(self) -> Self {
        self.sqrt_dd()
    }
    fn exp(self) -> Self {
        self.exp_dd()
    }
    fn exp2(self) -> Self {
        (self * LN2).exp_dd()
    }
    fn ln(self) -> Self {
        self.ln_dd()
    }
    fn log(self, base: Self) -> Self {
        self.ln_dd() / base.ln_dd()
    }
    fn log2(self) -> Self {
        self.ln_dd() / LN2
    }
    fn log10(self) -> Self {
        self.ln_dd() / Dd::new(10.0).ln_dd()
    }
    fn max(self, o: Self) -> Self {
        if self.is_nan() || o > self { o } else { self }
    }
    fn min(self, o: Self) -> Self {
        if self.is_nan() || o < self { o } else { self }
    }
    fn abs_sub(self, o: Self) -> Self {
        if self > o { self - o } else { Dd::new(0.0) }
    }
    fn hypot(self, o: Self) -> Self {
        (self * self + o * o).sqrt_dd()
    }
    fn atan2(self, o: Self) -> Self {
        Dd::new(self.hi.atan2(o.hi))
    }
    fn sin_cos(self) -> (Self, Self) {
        (Dd::new(self.hi.sin()), Dd::new(self.hi.cos()))
    }
    fn exp_m1(self) -> Self {
        self.exp_dd() - Dd::new(1.0)
    }
    fn ln_1p(self) -> Self {
        (self + Dd::new(1.0)).ln_dd()
    }
    fn tanh(self) -> Self {
        self.tanh_dd()
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        num_traits::Float::integer_decode(self.hi)
    }
    via_f64!(cbrt, sin, cos, tan, asin, acos, atan, sinh, cosh, asinh, acosh, atanh);
}

impl Float for Dd {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Dd,
        a: *const Dd,
        rsa: isize,
        csa: isize,
        b: *const Dd,
        rsb: isize,
        csb: isize,
        beta: Dd,
        c: *mut Dd,
        rsc: isize,
        csc: isize,
    ) {
        for i in 0..m as isize {
            for j in 0..n as isize {
                let mut acc = Dd::new(0.0);
                for p in 0..k as isize {
                    // SAFETY: the caller guarantees every strided offset is in bounds.
                    unsafe { acc += *a.offset(i * rsa + p * csa) * *b.offset(p * rsb + j * csb) };
                }
                // SAFETY: as above.
                let out = unsafe { &mut *c.offset(i * rsc + j * csc) };
                *out = if beta.is_zero() { alpha * acc } else { alpha * acc + beta * *out };
            }
        }
    }

    fn from_f64(v: f64) -> Self {
        Dd::new(v)
    }

    fn as_f64(self) -> f64 {
        self.hi + self.lo
    }
}
