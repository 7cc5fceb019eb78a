//! Scalar abstraction over `f64` and double-double (`qd::Quad`).

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, Neg, SubAssign};

use num_complex::Complex;
use num_traits::Num;

/// Double-double real, about 31 significant digits.
pub type Dd = qd::Quad;
/// Complex double-double.
pub type CDd = Complex<Dd>;

/// Real scalar usable by the Gram, Cholesky and polynomial kernels.
pub trait Real:
    Num + Copy + Debug + Send + Sync + PartialOrd + Neg<Output = Self> + AddAssign + SubAssign + MulAssign + DivAssign + 'static
{
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn exp(self) -> Self;
    fn of_dd(x: Dd) -> Self;
    fn to_dd(self) -> Dd;
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn of_dd(x: Dd) -> Self {
        x.0 + x.1
    }
    #[inline]
    fn to_dd(self) -> Dd {
        Dd::from(self)
    }
}

impl Real for Dd {
    #[inline]
    fn of(x: f64) -> Self {
        Dd::from(x)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self.0 + self.1
    }
    #[inline]
    fn sqrt(self) -> Self {
        if self.0 <= 0.0 {
            return Dd::ZERO;
        }
        Dd::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        Dd::abs(self)
    }
    #[inline]
    fn exp(self) -> Self {
        Dd::exp(self)
    }
    #[inline]
    fn of_dd(x: Dd) -> Self {
        x
    }
    #[inline]
    fn to_dd(self) -> Dd {
        self
    }
}

/// Arithmetic mode for Gram assembly and everything downstream of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Double,
    Extended,
}

/// Degrees above this switch to extended precision automatically.
pub const EXTENDED_THRESHOLD: usize = 24;

impl Precision {
    pub fn for_degree(n: usize, force_extended: bool) -> Self {
        if force_extended || n > EXTENDED_THRESHOLD {
            Precision::Extended
        } else {
            Precision::Double
        }
    }
}

/// e^{2πi l/m} in double-double, reduced to the first octant exactly.
pub fn unit_phase(l: usize, m: usize) -> CDd {
    assert!(m > 0);
    let l = l % m;
    let quadrant = 4 * l / m;
    let r = 4 * l - quadrant * m;
    let half_pi = Dd::PI * Dd::from(0.5);
    let (c, s) = if 2 * r <= m {
        cos_sin_small(half_pi * Dd::from(r as f64) / Dd::from(m as f64))
    } else {
        let (c, s) = cos_sin_small(half_pi * Dd::from((m - r) as f64) / Dd::from(m as f64));
        (s, c)
    };
    match quadrant {
        0 => Complex::new(c, s),
        1 => Complex::new(-s, c),
        2 => Complex::new(-c, -s),
        _ => Complex::new(s, -c),
    }
}

/// (cos y, sin y) by Taylor series for 0 ≤ y ≤ π/4.
fn cos_sin_small(y: Dd) -> (Dd, Dd) {
    let y2 = y * y;
    let (mut c, mut s) = (Dd::ONE, y);
    let (mut tc, mut ts) = (Dd::ONE, y);
    let mut k = 1.0;
    while ts.0.abs() > 1e-36 || tc.0.abs() > 1e-36 {
        tc = -tc * y2 / Dd::from((2.0 * k - 1.0) * (2.0 * k));
        ts = -ts * y2 / Dd::from((2.0 * k) * (2.0 * k + 1.0));
        c += tc;
        s += ts;
        k += 1.0;
    }
    (c, s)
}

#[inline]
pub fn cx<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::of(z.re), T::of(z.im))
}

#[inline]
pub fn c64<T: Real>(z: Complex<T>) -> Complex<f64> {
    Complex::new(z.re.to_f64(), z.im.to_f64())
}

#[inline]
pub fn cdd<T: Real>(z: Complex<T>) -> CDd {
    Complex::new(z.re.to_dd(), z.im.to_dd())
}

#[inline]
pub fn from_cdd<T: Real>(z: CDd) -> Complex<T> {
    Complex::new(T::of_dd(z.re), T::of_dd(z.im))
}

/// Modulus in the working precision.
#[inline]
pub fn cabs<T: Real>(z: Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}

/// Split a double-double into its (hi, lo) parts for lossless serialization.
pub fn dd_parts(x: Dd) -> (f64, f64) {
    (x.0, x.1)
}

pub fn dd_from_parts(hi: f64, lo: f64) -> Dd {
    qd::Quad(hi, lo)
}
