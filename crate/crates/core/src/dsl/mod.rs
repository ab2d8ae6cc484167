//! Surface description language: expression trees, immersions and their jets.

mod builtin;
mod parse;
mod print;

pub use builtin::{builtin, parse_builtin_spec};
pub use parse::parse;

use crate::error::{Error, Result};
use crate::heis::{HPoint, HTangent};
use crate::jet::{layout, Jet, Scalar};
use crate::psh::PSHElement;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    /// Index into the immersion's parameter list.
    Param(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

// Builder helpers; they keep builtin definitions readable.
impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }
    pub fn p(i: usize) -> Expr {
        Expr::Param(i)
    }
    pub fn add(self, o: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(o))
    }
    pub fn sub(self, o: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(o))
    }
    pub fn mul(self, o: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(o))
    }
    pub fn div(self, o: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(o))
    }
    pub fn pow(self, k: i32) -> Expr {
        Expr::Pow(Box::new(self), k)
    }
    pub fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
    pub fn call(f: Func, e: Expr) -> Expr {
        Expr::Call(f, Box::new(e))
    }

    pub fn eval<S: Scalar>(&self, u: &[S]) -> Result<S> {
        Ok(match self {
            Expr::Num(v) => S::cst(*v),
            Expr::Pi => S::cst(std::f64::consts::PI),
            Expr::Param(i) => u[*i].clone(),
            Expr::Neg(a) => -a.eval(u)?,
            Expr::Add(a, b) => a.eval(u)? + b.eval(u)?,
            Expr::Sub(a, b) => a.eval(u)? - b.eval(u)?,
            Expr::Mul(a, b) => a.eval(u)? * b.eval(u)?,
            Expr::Div(a, b) => {
                let d = b.eval(u)?;
                if d.value() == 0.0 {
                    return Err(Error::Domain("division by zero".into()));
                }
                a.eval(u)? / d
            }
            Expr::Pow(a, k) => {
                let b = a.eval(u)?;
                if *k < 0 && b.value() == 0.0 {
                    return Err(Error::Domain("negative power of zero".into()));
                }
                b.powi(*k)
            }
            Expr::Call(f, a) => {
                let v = a.eval(u)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Ln => {
                        if v.value() <= 0.0 {
                            return Err(Error::Domain(format!("ln of {}", v.value())));
                        }
                        v.ln()
                    }
                    Func::Sqrt => {
                        if v.value() < 0.0 {
                            return Err(Error::Domain(format!("sqrt of {}", v.value())));
                        }
                        v.sqrt()
                    }
                }
            }
        })
    }

    /// Replaces every parameter `i` by `subs[i]`.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        let b = |e: &Expr| Box::new(e.substitute(subs));
        match self {
            Expr::Num(_) | Expr::Pi => self.clone(),
            Expr::Param(i) => subs[*i].clone(),
            Expr::Neg(a) => Expr::Neg(b(a)),
            Expr::Add(x, y) => Expr::Add(b(x), b(y)),
            Expr::Sub(x, y) => Expr::Sub(b(x), b(y)),
            Expr::Mul(x, y) => Expr::Mul(b(x), b(y)),
            Expr::Div(x, y) => Expr::Div(b(x), b(y)),
            Expr::Pow(x, k) => Expr::Pow(b(x), *k),
            Expr::Call(f, x) => Expr::Call(*f, b(x)),
        }
    }
}

/// Sum of `c_k · e_k` skipping zero coefficients.
pub(crate) fn linear_combination(constant: f64, terms: &[(f64, &Expr)]) -> Expr {
    let mut acc: Option<Expr> = if constant != 0.0 { Some(Expr::num(constant)) } else { None };
    for (c, e) in terms {
        if *c == 0.0 {
            continue;
        }
        let term = if *c == 1.0 { (*e).clone() } else { Expr::num(*c).mul((*e).clone()) };
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(term),
        });
    }
    acc.unwrap_or(Expr::num(0.0))
}

/// A parametrized submanifold `X: U ⊂ R^{2m+1} → H_n` with a box chart `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct Immersion {
    pub label: String,
    pub n: usize,
    pub m: usize,
    pub params: Vec<String>,
    pub chart: Vec<(f64, f64)>,
    /// `x_1..x_n, y_1..y_n, t`.
    pub coords: Vec<Expr>,
}

/// Value and first two derivatives of an immersion at one chart point.
#[derive(Clone, Debug)]
pub struct Jet2 {
    pub value: HPoint,
    pub d1: Vec<HTangent>,
    /// `d2[i][j][c]` = `∂_i∂_j X_c`.
    pub d2: Vec<Vec<Vec<f64>>>,
}

impl Immersion {
    pub fn dim(&self) -> usize {
        2 * self.m + 1
    }

    pub fn in_chart(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter().zip(&self.chart).all(|(v, (lo, hi))| {
                let slack = 1e-12 * (hi - lo).abs().max(1.0);
                *v >= lo - slack && *v <= hi + slack
            })
    }

    fn check_chart(&self, u: &[f64]) -> Result<()> {
        if !self.in_chart(u) {
            return Err(Error::OutOfChart(u.to_vec()));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec<f64> {
        self.chart.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    /// Coordinates `(x, y, t)` evaluated on scalars of any kind (no chart check).
    pub fn eval_generic<S: Scalar>(&self, u: &[S]) -> Result<Vec<S>> {
        self.coords.iter().map(|e| e.eval(u)).collect()
    }

    pub fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_chart(u)?;
        self.eval_generic(u)
    }

    pub fn point(&self, u: &[f64]) -> Result<HPoint> {
        HPoint::from_slice(&self.eval(u)?)
    }

    /// Taylor jets of order `order` of all coordinates about `u`.
    pub fn jet(&self, u: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.check_chart(u)?;
        let l = layout(self.dim(), order);
        let vars: Vec<Jet> = u.iter().enumerate().map(|(i, v)| Jet::variable(l, i, *v)).collect();
        self.eval_generic(&vars)
    }

    pub fn jet2(&self, u: &[f64]) -> Result<Jet2> {
        let j = self.jet(u, 2)?;
        let d = self.dim();
        let value = HPoint::from_slice(&j.iter().map(|c| c.value()).collect::<Vec<_>>())?;
        let unit = |i: usize| {
            let mut a = vec![0u8; d];
            a[i] += 1;
            a
        };
        let mut d1 = Vec::with_capacity(d);
        for i in 0..d {
            let c: Vec<f64> = j.iter().map(|x| x.partial(&unit(i))).collect();
            d1.push(HTangent::from_coord(&value, c)?);
        }
        let mut d2 = vec![vec![Vec::new(); d]; d];
        for i in 0..d {
            for k in 0..d {
                let mut a = unit(i);
                a[k] += 1;
                d2[i][k] = j.iter().map(|x| x.partial(&a)).collect();
            }
        }
        Ok(Jet2 { value, d1, d2 })
    }

    /// Image of the surface under a rigid motion.
    pub fn moved(&self, g: &PSHElement) -> Immersion {
        let k = 2 * self.n + 1;
        let coords = (0..k)
            .map(|i| {
                let terms: Vec<(f64, &Expr)> =
                    (0..k).map(|j| (g.mat[(1 + i, 1 + j)], &self.coords[j])).collect();
                linear_combination(g.mat[(1 + i, 0)], &terms)
            })
            .collect();
        Immersion { coords, ..self.clone() }
    }

    pub fn to_text(&self) -> String {
        print::immersion_to_text(self)
    }

    /// Pretty-prints one expression with this immersion's parameter names.
    pub fn expr_to_text(&self, e: &Expr) -> String {
        print::expr_to_text(e, &self.params)
    }

    /// Regular lattice with `counts[i]` samples along axis `i`.
    pub fn grid(&self, counts: &[usize]) -> Result<Grid> {
        Grid::new(&self.chart, counts)
    }
}

/// Tensor-product lattice over a chart box.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(chart: &[(f64, f64)], counts: &[usize]) -> Result<Grid> {
        if chart.len() != counts.len() {
            return Err(Error::Shape(format!("{} grid axes for a {}-dimensional chart", counts.len(), chart.len())));
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(Error::InvalidArgument("grid needs at least 2 samples per axis".into()));
        }
        Ok(Grid {
            lo: chart.iter().map(|c| c.0).collect(),
            hi: chart.iter().map(|c| c.1).collect(),
            counts: counts.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.counts[axis] - 1) as f64
    }

    /// Multi-index of a flat index; axis 0 varies slowest.
    pub fn index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.counts[a];
            flat /= self.counts[a];
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (i, c)| acc * c + i)
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dim()).map(|a| self.lo[a] + self.step(a) * idx[a] as f64).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|f| self.point(&self.index(f))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_derivatives_six_and_two() {
        let imm = parse(
            "surface sq { n = 1; m = 1; params = [u, v, w]; chart = [[0, 4], [0, 1], [0, 1]]; }
             x[1] = u^2; y[1] = v; t = w;",
        )
        .unwrap();
        let j = imm.jet(&[3.0, 0.5, 0.5], 2).unwrap();
        assert_eq!(j[0].value(), 9.0);
        assert_eq!(j[0].partial(&[1, 0, 0]), 6.0);
        assert_eq!(j[0].partial(&[2, 0, 0]), 2.0);
        let j2 = imm.jet2(&[3.0, 0.5, 0.5]).unwrap();
        assert_eq!(j2.d2[0][0][0], 2.0);
    }

    #[test]
    fn domain_and_chart_errors() {
        let imm = parse(
            "surface d { n = 1; m = 1; params = [u, v, w]; chart = [[-1, 1], [-1, 1], [-1, 1]]; }
             x[1] = ln(u); y[1] = sqrt(v); t = 1/w;",
        )
        .unwrap();
        assert!(matches!(imm.eval(&[-0.5, 0.5, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(imm.eval(&[0.5, -0.5, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(imm.eval(&[0.5, 0.5, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(imm.eval(&[2.0, 0.5, 0.5]), Err(Error::OutOfChart(_))));
        assert!(imm.eval(&[0.5, 0.5, 0.5]).is_ok());
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::new(&[(0.0, 1.0), (-1.0, 1.0), (2.0, 3.0)], &[3, 4, 5]).unwrap();
        for f in 0..g.len() {
            assert_eq!(g.flat(&g.index(f)), f);
        }
        assert_eq!(g.point(&[2, 3, 4]), vec![1.0, 1.0, 3.0]);
    }
}
