//! Complex amplitudes as polynomials in h truncated after h².

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Coefficients below this magnitude are treated as structural zeros when
/// looking for a leading order.
pub const ZERO_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OrderSeries {
    #[serde(with = "pair")]
    pub c0: C64,
    #[serde(with = "pair")]
    pub c1: C64,
    #[serde(with = "pair")]
    pub c2: C64,
}

mod pair {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

impl OrderSeries {
    pub const ZERO: Self = Self::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    pub const ONE: Self = Self::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));

    pub const fn new(c0: C64, c1: C64, c2: C64) -> Self {
        Self { c0, c1, c2 }
    }

    pub fn real(c0: f64, c1: f64, c2: f64) -> Self {
        Self::new(c0.into(), c1.into(), c2.into())
    }

    pub fn constant(c: C64) -> Self {
        Self::new(c, C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    /// `c·h`
    pub fn linear(c: C64) -> Self {
        Self::new(C64::new(0.0, 0.0), c, C64::new(0.0, 0.0))
    }

    /// `c·h²`
    pub fn quadratic(c: C64) -> Self {
        Self::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), c)
    }

    pub fn coeffs(&self) -> [C64; 3] {
        [self.c0, self.c1, self.c2]
    }

    pub fn coeff(&self, k: usize) -> C64 {
        match k {
            0 => self.c0,
            1 => self.c1,
            2 => self.c2,
            _ => C64::new(0.0, 0.0),
        }
    }

    pub fn from_coeffs(c: [C64; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }

    pub fn conj(&self) -> Self {
        Self::new(self.c0.conj(), self.c1.conj(), self.c2.conj())
    }

    pub fn scale(&self, k: C64) -> Self {
        Self::new(self.c0 * k, self.c1 * k, self.c2 * k)
    }

    pub fn scale_re(&self, k: f64) -> Self {
        Self::new(self.c0 * k, self.c1 * k, self.c2 * k)
    }

    /// z·z̄, truncated. The result has vanishing imaginary parts.
    pub fn norm_sqr(&self) -> Self {
        *self * self.conj()
    }

    pub fn eval(&self, h: f64) -> C64 {
        self.c0 + (self.c1 + self.c2 * h) * h
    }

    pub fn re(&self) -> [f64; 3] {
        [self.c0.re, self.c1.re, self.c2.re]
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.coeffs().iter().all(|c| c.norm() <= tol)
    }

    /// Lowest order whose coefficient exceeds `tol`, if any.
    pub fn leading_order(&self, tol: f64) -> Option<usize> {
        self.coeffs().iter().position(|c| c.norm() > tol)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs()
            .iter()
            .zip(other.coeffs().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl From<C64> for OrderSeries {
    fn from(c: C64) -> Self {
        Self::constant(c)
    }
}

impl From<f64> for OrderSeries {
    fn from(c: f64) -> Self {
        Self::constant(c.into())
    }
}

impl Add for OrderSeries {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.c0 + o.c0, self.c1 + o.c1, self.c2 + o.c2)
    }
}

impl Sub for OrderSeries {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.c0 - o.c0, self.c1 - o.c1, self.c2 - o.c2)
    }
}

impl Neg for OrderSeries {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.c0, -self.c1, -self.c2)
    }
}

impl Mul for OrderSeries {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        series_mul(&self, &o)
    }
}

impl Mul<C64> for OrderSeries {
    type Output = Self;
    fn mul(self, k: C64) -> Self {
        self.scale(k)
    }
}

impl Mul<f64> for OrderSeries {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        self.scale_re(k)
    }
}

impl AddAssign for OrderSeries {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for OrderSeries {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl std::iter::Sum for OrderSeries {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for OrderSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) + ({})h + ({})h²", self.c0, self.c1, self.c2)
    }
}

pub fn series_mul(a: &OrderSeries, b: &OrderSeries) -> OrderSeries {
    OrderSeries::new(
        a.c0 * b.c0,
        a.c0 * b.c1 + a.c1 * b.c0,
        a.c0 * b.c2 + a.c1 * b.c1 + a.c2 * b.c0,
    )
}

/// A real series together with the highest order through which its
/// coefficients are exact. Square roots and moduli whose leading term starts
/// late lose exactness at the top end; the lost orders are known to be zero
/// only below `exact_through`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealSeries {
    pub c: [f64; 3],
    pub exact_through: u8,
}

impl RealSeries {
    pub fn exact(c: [f64; 3]) -> Self {
        Self { c, exact_through: 2 }
    }

    pub fn zero() -> Self {
        Self::exact([0.0; 3])
    }

    pub fn from_series_re(s: &OrderSeries) -> Self {
        Self::exact(s.re())
    }

    pub fn to_series(&self) -> OrderSeries {
        OrderSeries::real(self.c[0], self.c[1], self.c[2])
    }

    pub fn eval(&self, h: f64) -> f64 {
        self.c[0] + (self.c[1] + self.c[2] * h) * h
    }

    pub fn scale(&self, k: f64) -> Self {
        Self { c: self.c.map(|x| x * k), exact_through: self.exact_through }
    }

    /// Lowest known order with a coefficient above `tol`.
    pub fn leading_order(&self, tol: f64) -> Option<usize> {
        (0..=self.exact_through as usize).find(|&k| self.c[k].abs() > tol)
    }

    /// Square root of a series that is non-negative as a function of small h > 0.
    pub fn sqrt(&self) -> Result<Self> {
        let e = self.exact_through;
        let [x0, x1, x2] = self.c;
        if x0 > ZERO_TOL {
            let r = x0.sqrt();
            let c1 = if e >= 1 { x1 / (2.0 * r) } else { 0.0 };
            let c2 = if e >= 2 { x2 / (2.0 * r) - x1 * x1 / (8.0 * x0 * r) } else { 0.0 };
            return Ok(Self { c: [r, c1, c2], exact_through: e });
        }
        if x0 < -ZERO_TOL {
            return Err(Error::NegativeSeries(x0));
        }
        match e {
            0 | 1 => Ok(Self { c: [0.0; 3], exact_through: 0 }),
            _ => {
                if x1 > ZERO_TOL {
                    Err(Error::FractionalOrder)
                } else if x1 < -ZERO_TOL {
                    Err(Error::NegativeSeries(x1))
                } else if x2 > ZERO_TOL {
                    Ok(Self { c: [0.0, x2.sqrt(), 0.0], exact_through: 1 })
                } else if x2 < -ZERO_TOL {
                    Err(Error::NegativeSeries(x2))
                } else {
                    // x = O(h³), so √x = o(h)
                    Ok(Self { c: [0.0; 3], exact_through: 1 })
                }
            }
        }
    }
}

impl Add for RealSeries {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            c: [self.c[0] + o.c[0], self.c[1] + o.c[1], self.c[2] + o.c[2]],
            exact_through: self.exact_through.min(o.exact_through),
        }
    }
}

impl Sub for RealSeries {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o.scale(-1.0)
    }
}

impl Mul for RealSeries {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (a, b) = (self.c, o.c);
        Self {
            c: [a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[0] * b[2] + a[1] * b[1] + a[2] * b[0]],
            exact_through: self.exact_through.min(o.exact_through),
        }
    }
}

/// |z| as a real series. Exact through order 2 for any input: the expansion is
/// taken around the leading nonzero coefficient.
pub fn modulus(z: &OrderSeries) -> RealSeries {
    let [c0, c1, c2] = z.coeffs();
    if c0.norm() > ZERO_TOL {
        let x = z.norm_sqr().re();
        let r = x[0].sqrt();
        return RealSeries::exact([r, x[1] / (2.0 * r), x[2] / (2.0 * r) - x[1] * x[1] / (8.0 * x[0] * r)]);
    }
    if c1.norm() > ZERO_TOL {
        let a = c1.norm();
        return RealSeries::exact([0.0, a, (c2 * c1.conj()).re / a]);
    }
    RealSeries::exact([0.0, 0.0, c2.norm()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn mul_examples() {
        let x = OrderSeries::new(c(1.5, -2.0), c(0.25, 3.0), c(-7.0, 0.5));
        assert_eq!(OrderSeries::ONE * x, x);
        let h = OrderSeries::linear(c(1.0, 0.0));
        assert_eq!(h * h, OrderSeries::quadratic(c(1.0, 0.0)));
        assert_eq!(h * OrderSeries::quadratic(c(1.0, 0.0)), OrderSeries::ZERO);
    }

    #[test]
    fn modulus_leading_linear() {
        // z = (3+4i)h + (1-2i)h²; |z| = 5h + Re((1-2i)(3-4i))/5 h²
        let z = OrderSeries::new(c(0.0, 0.0), c(3.0, 4.0), c(1.0, -2.0));
        let m = modulus(&z);
        assert_eq!(m.exact_through, 2);
        assert_relative_eq!(m.c[1], 5.0);
        assert_relative_eq!(m.c[2], (3.0 - 8.0) / 5.0);
        let h = 1e-5;
        assert_relative_eq!(m.eval(h), z.eval(h).norm(), max_relative = 1e-9);
    }

    #[test]
    fn sqrt_branches() {
        let s = RealSeries::exact([4.0, 2.0, 1.0]).sqrt().unwrap();
        let h = 1e-4;
        assert_relative_eq!(s.eval(h), (4.0f64 + 2.0 * h + h * h).sqrt(), max_relative = 1e-11);

        let s = RealSeries::exact([0.0, 0.0, 9.0]).sqrt().unwrap();
        assert_eq!((s.c, s.exact_through), ([0.0, 3.0, 0.0], 1));

        let s = RealSeries::exact([0.0, 0.0, 0.0]).sqrt().unwrap();
        assert_eq!(s.exact_through, 1);

        assert_eq!(RealSeries::exact([0.0, 1.0, 0.0]).sqrt(), Err(Error::FractionalOrder));
        assert!(RealSeries::exact([-1.0, 0.0, 0.0]).sqrt().is_err());
    }

    #[test]
    fn serde_shape() {
        let x = OrderSeries::new(c(1.0, 2.0), c(0.0, -1.0), c(0.5, 0.0));
        let v = serde_json::to_value(x).unwrap();
        assert_eq!(v["c0"], serde_json::json!([1.0, 2.0]));
        let back: OrderSeries = serde_json::from_value(v).unwrap();
        assert_eq!(back, x);
    }

    fn cplx() -> impl Strategy<Value = C64> {
        (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b)| C64::new(a, b))
    }

    fn series() -> impl Strategy<Value = OrderSeries> {
        (cplx(), cplx(), cplx()).prop_map(|(a, b, c)| OrderSeries::new(a, b, c))
    }

    proptest! {
        #[test]
        fn ring_laws(a in series(), b in series(), d in series()) {
            let tol = 1e-9;
            prop_assert!((a * b).max_abs_diff(&(b * a)) < tol);
            prop_assert!(((a * b) * d).max_abs_diff(&(a * (b * d))) < tol);
            prop_assert!((a * (b + d)).max_abs_diff(&(a * b + a * d)) < tol);
            prop_assert!((a * b).conj().max_abs_diff(&(a.conj() * b.conj())) < tol);
        }

        #[test]
        fn modulus_matches_numeric(a in series(), drop0 in any::<bool>(), h in 1e-4..1e-3f64) {
            let a = if drop0 { OrderSeries { c0: C64::new(0.0, 0.0), ..a } } else { a };
            // the expansion is asymptotic in h/|leading coefficient|
            prop_assume!(a.c0.norm() > 1.0 || (drop0 && a.c1.norm() > 1.0));
            let m = modulus(&a);
            let err = (m.eval(h) - a.eval(h).norm()).abs();
            // next omitted order is h³ times coefficients of size ≲ 10⁴
            prop_assert!(err < 1e5 * h * h * h + 1e-12, "err {err}");
        }
    }
}
