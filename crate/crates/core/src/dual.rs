//! Forward-mode dual numbers carrying a value and its gradient in three variables.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// A value together with its partial derivatives with respect to `x1, x2, x3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual3 {
    pub value: f64,
    pub partials: [f64; 3],
}

impl Dual3 {
    pub const fn constant(value: f64) -> Self {
        Self { value, partials: [0.0; 3] }
    }

    /// The coordinate function `x_{axis+1}` seeded at `value`.
    pub fn variable(axis: usize, value: f64) -> Self {
        let mut partials = [0.0; 3];
        partials[axis] = 1.0;
        Self { value, partials }
    }

    /// Applies a scalar function with known derivative `df` (evaluated at `self.value`).
    #[inline]
    fn chain(self, value: f64, df: f64) -> Self {
        Self { value, partials: [df * self.partials[0], df * self.partials[1], df * self.partials[2]] }
    }

    pub fn sin(self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }

    pub fn tan(self) -> Self {
        let t = self.value.tan();
        self.chain(t, 1.0 + t * t)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn ln(self) -> Self {
        self.chain(self.value.ln(), 1.0 / self.value)
    }

    pub fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s)
    }

    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::constant(1.0);
        }
        self.chain(self.value.powi(n), f64::from(n) * self.value.powi(n - 1))
    }

    pub fn powf(self, n: f64) -> Self {
        self.chain(self.value.powf(n), n * self.value.powf(n - 1.0))
    }

    /// `atan2(self, x)` with the usual quadrant convention.
    pub fn atan2(self, x: Self) -> Self {
        let y = self;
        let r2 = y.value * y.value + x.value * x.value;
        let mut partials = [0.0; 3];
        for (i, d) in partials.iter_mut().enumerate() {
            *d = (x.value * y.partials[i] - y.value * x.partials[i]) / r2;
        }
        Self { value: y.value.atan2(x.value), partials }
    }
}

impl Add for Dual3 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self {
            value: self.value + o.value,
            partials: [
                self.partials[0] + o.partials[0],
                self.partials[1] + o.partials[1],
                self.partials[2] + o.partials[2],
            ],
        }
    }
}

impl Sub for Dual3 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self {
            value: self.value - o.value,
            partials: [
                self.partials[0] - o.partials[0],
                self.partials[1] - o.partials[1],
                self.partials[2] - o.partials[2],
            ],
        }
    }
}

impl Mul for Dual3 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let (a, b) = (self.value, o.value);
        Self {
            value: a * b,
            partials: [
                self.partials[0] * b + a * o.partials[0],
                self.partials[1] * b + a * o.partials[1],
                self.partials[2] * b + a * o.partials[2],
            ],
        }
    }
}

impl Div for Dual3 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let (a, b) = (self.value, o.value);
        let inv = 1.0 / b;
        let q = a * inv;
        Self {
            value: q,
            partials: [
                (self.partials[0] - q * o.partials[0]) * inv,
                (self.partials[1] - q * o.partials[1]) * inv,
                (self.partials[2] - q * o.partials[2]) * inv,
            ],
        }
    }
}

impl Neg for Dual3 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { value: -self.value, partials: [-self.partials[0], -self.partials[1], -self.partials[2]] }
    }
}
