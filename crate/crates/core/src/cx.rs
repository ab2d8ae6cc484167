//! Complex numbers over any [`Scalar`], so complex quantities can carry jets.

use std::ops::{Add, Mul, Neg, Sub};

use serde::Serialize;

use crate::jet::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cx<S> {
    pub re: S,
    pub im: S,
}

pub type C64 = Cx<f64>;

impl<S: Scalar> Cx<S> {
    pub fn new(re: S, im: S) -> Self {
        Cx { re, im }
    }

    pub fn real(re: S) -> Self {
        Cx { re, im: S::zero() }
    }

    pub fn zero() -> Self {
        Cx { re: S::zero(), im: S::zero() }
    }

    pub fn i() -> Self {
        Cx { re: S::zero(), im: S::cst(1.0) }
    }

    pub fn conj(&self) -> Self {
        Cx { re: self.re.clone(), im: -self.im.clone() }
    }

    /// Multiplication by `i`.
    pub fn rot(&self) -> Self {
        Cx { re: -self.im.clone(), im: self.re.clone() }
    }

    pub fn norm_sqr(&self) -> S {
        self.re.clone() * self.re.clone() + self.im.clone() * self.im.clone()
    }

    pub fn scale(&self, k: S) -> Self {
        Cx { re: self.re.clone() * k.clone(), im: self.im.clone() * k }
    }

    pub fn scale_f(&self, k: f64) -> Self {
        Cx { re: self.re.clone() * k, im: self.im.clone() * k }
    }

    pub fn d(&self, var: usize) -> Self {
        Cx { re: self.re.d(var), im: self.im.d(var) }
    }

    pub fn value(&self) -> C64 {
        Cx { re: self.re.value(), im: self.im.value() }
    }
}

impl C64 {
    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn from_polar(r: f64, phi: f64) -> C64 {
        Cx { re: r * phi.cos(), im: r * phi.sin() }
    }
}

impl<S: Scalar> Add for Cx<S> {
    type Output = Cx<S>;
    fn add(self, o: Cx<S>) -> Cx<S> {
        Cx { re: self.re + o.re, im: self.im + o.im }
    }
}

impl<S: Scalar> Sub for Cx<S> {
    type Output = Cx<S>;
    fn sub(self, o: Cx<S>) -> Cx<S> {
        Cx { re: self.re - o.re, im: self.im - o.im }
    }
}

impl<S: Scalar> Neg for Cx<S> {
    type Output = Cx<S>;
    fn neg(self) -> Cx<S> {
        Cx { re: -self.re, im: -self.im }
    }
}

impl<S: Scalar> Mul for Cx<S> {
    type Output = Cx<S>;
    fn mul(self, o: Cx<S>) -> Cx<S> {
        Cx {
            re: self.re.clone() * o.re.clone() - self.im.clone() * o.im.clone(),
            im: self.re * o.im + self.im * o.re,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = C64::new(1.0, 2.0);
        let b = C64::new(-3.0, 0.5);
        let p = a.clone() * b.clone();
        assert_eq!(p, C64::new(-4.0, -5.5));
        assert_eq!(a.rot(), C64::i() * a.clone());
        assert_eq!((a.clone() * a.conj()).re, a.norm_sqr());
        assert!((C64::from_polar(2.0, 0.3).abs() - 2.0).abs() < 1e-15);
    }
}
