//! Truncated multivariate Taylor arithmetic (forward-mode AD of arbitrary order).
//!
//! A [`Jet`] stores the Taylor coefficients `c_α = ∂^α f / α!` of a function of
//! `dim` variables for all multi-indices with `|α| ≤ order`. Arithmetic and the
//! elementary functions propagate every coefficient exactly (up to rounding), so
//! derivatives obtained this way carry no truncation error.
//!
//! Jets without a layout are plain constants; they mix freely with jets of any
//! layout, which lets generic code create literals through [`Scalar::cst`].

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::sync::Mutex;

use smallvec::SmallVec;

/// Coefficient bookkeeping shared by every jet of one `(dim, order)` shape.
#[derive(Debug)]
pub struct Layout {
    dim: usize,
    order: usize,
    monos: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    mul: Vec<(u16, u16, u16)>,
    /// Per variable: `(target, source, factor)` triples of the partial derivative.
    deriv: Vec<Vec<(u16, u16, f64)>>,
}

impl Layout {
    fn build(dim: usize, order: usize) -> Layout {
        let mut monos: Vec<Vec<u8>> = vec![vec![0; dim]];
        for deg in 1..=order {
            let mut next = Vec::new();
            enumerate(dim, deg, &mut vec![0u8; dim], 0, &mut next);
            monos.extend(next);
        }
        let index: HashMap<Vec<u8>, usize> =
            monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let degree = |m: &Vec<u8>| m.iter().map(|&e| e as usize).sum::<usize>();
        let mut mul = Vec::new();
        for (i, a) in monos.iter().enumerate() {
            for (j, b) in monos.iter().enumerate() {
                if degree(a) + degree(b) > order {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                mul.push((i as u16, j as u16, index[&sum] as u16));
            }
        }
        let mut deriv = vec![Vec::new(); dim];
        for (v, table) in deriv.iter_mut().enumerate() {
            for (t, m) in monos.iter().enumerate() {
                let mut src = m.clone();
                src[v] += 1;
                if let Some(&s) = index.get(&src) {
                    table.push((t as u16, s as u16, src[v] as f64));
                }
            }
        }
        Layout { dim, order, monos, index, mul, deriv }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    pub fn monomials(&self) -> &[Vec<u8>] {
        &self.monos
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.index.get(alpha).copied()
    }
}

fn enumerate(dim: usize, left: usize, cur: &mut Vec<u8>, pos: usize, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == dim {
        cur[pos] = left as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k as u8;
        enumerate(dim, left - k, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

static LAYOUTS: Mutex<Vec<((usize, usize), &'static Layout)>> = Mutex::new(Vec::new());

/// Returns the shared layout for `dim` variables truncated at total degree `order`.
pub fn layout(dim: usize, order: usize) -> &'static Layout {
    assert!(dim >= 1, "jets need at least one variable");
    let mut cache = LAYOUTS.lock().expect("layout cache poisoned");
    if let Some((_, l)) = cache.iter().find(|(k, _)| *k == (dim, order)) {
        return l;
    }
    let l: &'static Layout = Box::leak(Box::new(Layout::build(dim, order)));
    cache.push(((dim, order), l));
    l
}

type Coeffs = SmallVec<[f64; 20]>;

#[derive(Clone)]
pub struct Jet {
    lay: Option<&'static Layout>,
    c: Coeffs,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lay {
            None => write!(f, "Jet({})", self.c[0]),
            Some(l) => write!(f, "Jet[d={},k={}]{:?}", l.dim, l.order, &self.c[..]),
        }
    }
}

impl Jet {
    pub fn constant(v: f64) -> Jet {
        let mut c = Coeffs::new();
        c.push(v);
        Jet { lay: None, c }
    }

    pub fn constant_in(lay: &'static Layout, v: f64) -> Jet {
        let mut c: Coeffs = SmallVec::from_elem(0.0, lay.len());
        c[0] = v;
        Jet { lay: Some(lay), c }
    }

    /// The coordinate function `u_var` expanded around `value`.
    pub fn variable(lay: &'static Layout, var: usize, value: f64) -> Jet {
        let mut j = Jet::constant_in(lay, value);
        if lay.order >= 1 {
            let mut e = vec![0u8; lay.dim];
            e[var] = 1;
            j.c[lay.index[&e]] = 1.0;
        }
        j
    }

    pub fn from_coeffs(lay: &'static Layout, coeffs: &[f64]) -> Jet {
        assert_eq!(coeffs.len(), lay.len());
        Jet { lay: Some(lay), c: SmallVec::from_slice(coeffs) }
    }

    pub fn layout(&self) -> Option<&'static Layout> {
        self.lay
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// Taylor coefficient of the monomial `alpha` (zero when out of range).
    pub fn coeff(&self, alpha: &[u8]) -> f64 {
        match self.lay {
            None => {
                if alpha.iter().all(|&a| a == 0) {
                    self.c[0]
                } else {
                    0.0
                }
            }
            Some(l) => l.index_of(alpha).map_or(0.0, |i| self.c[i]),
        }
    }

    /// Mixed partial derivative `∂^alpha f` at the expansion point.
    pub fn partial(&self, alpha: &[u8]) -> f64 {
        let fact: f64 = alpha.iter().map(|&a| factorial(a as usize)).product();
        self.coeff(alpha) * fact
    }

    /// Partial derivative with respect to variable `var`. The top-degree
    /// coefficients of the result are unknown and set to zero.
    pub fn deriv(&self, var: usize) -> Jet {
        match self.lay {
            None => Jet::constant(0.0),
            Some(l) => {
                let mut c: Coeffs = SmallVec::from_elem(0.0, l.len());
                for &(t, s, k) in &l.deriv[var] {
                    c[t as usize] = self.c[s as usize] * k;
                }
                Jet { lay: Some(l), c }
            }
        }
    }

    fn same(a: &'static Layout, b: &'static Layout) {
        debug_assert!(std::ptr::eq(a, b), "mixing jets of different layouts");
    }

    fn scale(mut self, k: f64) -> Jet {
        for v in self.c.iter_mut() {
            *v *= k;
        }
        self
    }

    /// Evaluates `g(self)` given `g` and its derivatives at the constant term.
    fn compose(&self, derivs: &[f64]) -> Jet {
        let Some(l) = self.lay else {
            return Jet::constant(derivs[0]);
        };
        let mut delta = self.clone();
        delta.c[0] = 0.0;
        let k = l.order;
        let mut out = Jet::constant_in(l, derivs[k] / factorial(k));
        for i in (0..k).rev() {
            out = out * delta.clone();
            out.c[0] += derivs[i] / factorial(i);
        }
        out
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        match (self.lay, rhs.lay) {
            (None, None) => Jet::constant(self.c[0] + rhs.c[0]),
            (Some(_), None) => self + rhs.c[0],
            (None, Some(_)) => rhs + self.c[0],
            (Some(a), Some(b)) => {
                Jet::same(a, b);
                let mut out = self;
                for (x, y) in out.c.iter_mut().zip(rhs.c.iter()) {
                    *x += y;
                }
                out
            }
        }
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        let lhs = std::mem::replace(self, Jet::constant(0.0));
        *self = lhs + rhs;
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.c[0] -= rhs;
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        match (self.lay, rhs.lay) {
            (None, None) => Jet::constant(self.c[0] * rhs.c[0]),
            (Some(_), None) => self.scale(rhs.c[0]),
            (None, Some(_)) => rhs.scale(self.c[0]),
            (Some(a), Some(b)) => {
                Jet::same(a, b);
                let mut c: Coeffs = SmallVec::from_elem(0.0, a.len());
                for &(i, j, k) in &a.mul {
                    c[k as usize] += self.c[i as usize] * rhs.c[j as usize];
                }
                Jet { lay: Some(a), c }
            }
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        match rhs.lay {
            None => self.scale(1.0 / rhs.c[0]),
            Some(_) => self * rhs.recip(),
        }
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self.scale(1.0 / rhs)
    }
}

/// Number types the geometry pipeline is generic over: plain `f64` for
/// value-only evaluation and [`Jet`] when derivatives are required.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn recip(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn powi(&self, k: i32) -> Self;
    /// Partial derivative along chart variable `var` (zero for plain numbers).
    fn d(&self, var: usize) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> f64 {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn recip(&self) -> f64 {
        1.0 / self
    }
    fn sqrt(&self) -> f64 {
        f64::sqrt(*self)
    }
    fn sin(&self) -> f64 {
        f64::sin(*self)
    }
    fn cos(&self) -> f64 {
        f64::cos(*self)
    }
    fn exp(&self) -> f64 {
        f64::exp(*self)
    }
    fn ln(&self) -> f64 {
        f64::ln(*self)
    }
    fn powi(&self, k: i32) -> f64 {
        f64::powi(*self, k)
    }
    fn d(&self, _var: usize) -> f64 {
        0.0
    }
}

impl Scalar for Jet {
    fn cst(v: f64) -> Jet {
        Jet::constant(v)
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn recip(&self) -> Jet {
        let x = self.c[0];
        let k = self.lay.map_or(0, |l| l.order);
        let mut d = Vec::with_capacity(k + 1);
        let mut acc = 1.0 / x;
        for i in 0..=k {
            d.push(acc);
            acc *= -((i + 1) as f64) / x;
        }
        self.compose(&d)
    }
    fn sqrt(&self) -> Jet {
        let x = self.c[0];
        let k = self.lay.map_or(0, |l| l.order);
        let mut d = Vec::with_capacity(k + 1);
        let mut coef = 1.0;
        for i in 0..=k {
            d.push(coef * x.powf(0.5 - i as f64));
            coef *= 0.5 - i as f64;
        }
        self.compose(&d)
    }
    fn sin(&self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        let k = self.lay.map_or(0, |l| l.order);
        let cyc = [s, c, -s, -c];
        let d: Vec<f64> = (0..=k).map(|i| cyc[i % 4]).collect();
        self.compose(&d)
    }
    fn cos(&self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        let k = self.lay.map_or(0, |l| l.order);
        let cyc = [c, -s, -c, s];
        let d: Vec<f64> = (0..=k).map(|i| cyc[i % 4]).collect();
        self.compose(&d)
    }
    fn exp(&self) -> Jet {
        let e = self.c[0].exp();
        let k = self.lay.map_or(0, |l| l.order);
        self.compose(&vec![e; k + 1])
    }
    fn ln(&self) -> Jet {
        let x = self.c[0];
        let k = self.lay.map_or(0, |l| l.order);
        let mut d = vec![x.ln()];
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            d.push(sign * factorial(i - 1) / x.powi(i as i32));
        }
        self.compose(&d)
    }
    fn powi(&self, p: i32) -> Jet {
        if p == 0 {
            return Jet::constant(1.0);
        }
        if p < 0 {
            return self.powi(-p).recip();
        }
        let mut base = self.clone();
        let mut acc: Option<Jet> = None;
        let mut e = p as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(a) => a * base.clone(),
                });
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc.expect("positive exponent")
    }
    fn d(&self, var: usize) -> Jet {
        self.deriv(var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts() {
        assert_eq!(layout(3, 3).len(), 20);
        assert_eq!(layout(3, 4).len(), 35);
        assert_eq!(layout(1, 2).len(), 3);
        assert_eq!(layout(5, 0).len(), 1);
    }

    #[test]
    fn square_derivatives() {
        let l = layout(1, 3);
        let u = Jet::variable(l, 0, 3.0);
        let f = u.clone() * u;
        assert_eq!(f.value(), 9.0);
        assert_eq!(f.partial(&[1]), 6.0);
        assert_eq!(f.partial(&[2]), 2.0);
        assert_eq!(f.partial(&[3]), 0.0);
    }

    #[test]
    fn elementary_functions_match_closed_forms() {
        let l = layout(1, 4);
        let x0 = 0.7;
        let u = Jet::variable(l, 0, x0);
        let s = u.sin();
        assert!((s.partial(&[3]) + x0.cos()).abs() < 1e-14);
        let e = u.exp();
        assert!((e.partial(&[4]) - x0.exp()).abs() < 1e-13);
        let g = u.ln();
        assert!((g.partial(&[2]) + 1.0 / (x0 * x0)).abs() < 1e-13);
        let r = u.sqrt();
        assert!((r.partial(&[2]) + 0.25 * x0.powf(-1.5)).abs() < 1e-13);
        let q = u.recip();
        assert!((q.partial(&[3]) + 6.0 / x0.powi(4)).abs() < 1e-12);
        let p = u.powi(-3);
        assert!((p.partial(&[1]) + 3.0 * x0.powi(-4)).abs() < 1e-12);
    }

    #[test]
    fn mixed_partials_and_deriv() {
        let l = layout(2, 3);
        let x = Jet::variable(l, 0, 0.3);
        let y = Jet::variable(l, 1, -0.4);
        let f = (x.clone() * y.clone()).sin() + x.clone().powi(2) * y.clone();
        // ∂x∂y of sin(xy) + x²y = cos(xy) - xy sin(xy) + 2x
        let (a, b) = (0.3f64, -0.4f64);
        let expect = (a * b).cos() - a * b * (a * b).sin() + 2.0 * a;
        assert!((f.partial(&[1, 1]) - expect).abs() < 1e-14);
        let fx = f.deriv(0);
        assert!((fx.partial(&[0, 1]) - expect).abs() < 1e-14);
    }

    #[test]
    fn constants_mix_with_jets() {
        let l = layout(2, 2);
        let x = Jet::variable(l, 0, 2.0);
        let f = Jet::cst(3.0) * x.clone() + Jet::cst(1.0);
        assert_eq!(f.value(), 7.0);
        assert_eq!(f.partial(&[1, 0]), 3.0);
        let g = Jet::cst(1.0) / x;
        assert!((g.partial(&[1, 0]) + 0.25).abs() < 1e-15);
    }
}
