//! Pointwise geometry of the Heisenberg group `H_n = R^{2n+1}`.
//!
//! Coordinates are `(x_1..x_n, y_1..y_n, t)` with group law
//! `(x,y,t)∘(x',y',t') = (x+x', y+y', t+t'+⟨y,x'⟩−⟨x,y'⟩)` and contact form
//! `Θ = dt + Σ x_β dy_β − y_β dx_β`. The left-invariant frame is
//! `e̊_β = ∂x_β + y_β ∂t`, `e̊_{n+β} = ∂y_β − x_β ∂t`, `T = ∂t`.

use serde::Serialize;
use crate::cx::C64;
use crate::error::{Error, Result};
use crate::jet::Scalar;

pub const HORIZONTAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
}

impl HPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>, t: f64) -> Result<HPoint> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::Shape(format!("x has {} entries, y has {}", x.len(), y.len())));
        }
        if !x.iter().chain(&y).all(|v| v.is_finite()) || !t.is_finite() {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(HPoint { x, y, t })
    }

    pub fn origin(n: usize) -> HPoint {
        HPoint { x: vec![0.0; n], y: vec![0.0; n], t: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Coordinates packed as `(x, y, t)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.extend_from_slice(&self.y);
        v.push(self.t);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<HPoint> {
        if v.len() < 3 || v.len() % 2 == 0 {
            return Err(Error::Shape(format!("{} coordinates is not 2n+1", v.len())));
        }
        let n = (v.len() - 1) / 2;
        HPoint::new(v[..n].to_vec(), v[n..2 * n].to_vec(), v[2 * n])
    }

    pub fn distance(&self, other: &HPoint) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn group_mul(p: &HPoint, q: &HPoint) -> Result<HPoint> {
    if p.n() != q.n() {
        return Err(Error::Shape(format!("H_{} times H_{}", p.n(), q.n())));
    }
    let x = p.x.iter().zip(&q.x).map(|(a, b)| a + b).collect();
    let y = p.y.iter().zip(&q.y).map(|(a, b)| a + b).collect();
    Ok(HPoint { x, y, t: p.t + q.t + dot(&p.y, &q.x) - dot(&p.x, &q.y) })
}

pub fn group_inv(p: &HPoint) -> HPoint {
    HPoint {
        x: p.x.iter().map(|v| -v).collect(),
        y: p.y.iter().map(|v| -v).collect(),
        t: -p.t,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Frame components `(a, b, Θ(v))` of a vector with coordinate components
/// `c` at the point `(x, y, ·)`.
pub fn coord_to_frame<S: Scalar>(x: &[S], y: &[S], c: &[S]) -> Vec<S> {
    let n = x.len();
    let mut out: Vec<S> = c[..2 * n].to_vec();
    let mut th = c[2 * n].clone();
    for b in 0..n {
        th = th - c[b].clone() * y[b].clone() + c[n + b].clone() * x[b].clone();
    }
    out.push(th);
    out
}

/// Inverse of [`coord_to_frame`].
pub fn frame_to_coord<S: Scalar>(x: &[S], y: &[S], f: &[S]) -> Vec<S> {
    let n = x.len();
    let mut out: Vec<S> = f[..2 * n].to_vec();
    let mut ct = f[2 * n].clone();
    for b in 0..n {
        ct = ct + f[b].clone() * y[b].clone() - f[n + b].clone() * x[b].clone();
    }
    out.push(ct);
    out
}

/// Tangent vector at a point of `H_n`, stored in both coordinate and frame components.
#[derive(Clone, Debug, PartialEq)]
pub struct HTangent {
    pub base: HPoint,
    pub coord: Vec<f64>,
    pub frame: Vec<f64>,
}

impl HTangent {
    pub fn from_coord(base: &HPoint, coord: Vec<f64>) -> Result<HTangent> {
        check_len(base, coord.len())?;
        let frame = coord_to_frame(&base.x, &base.y, &coord);
        Ok(HTangent { base: base.clone(), coord, frame })
    }

    pub fn from_frame(base: &HPoint, frame: Vec<f64>) -> Result<HTangent> {
        check_len(base, frame.len())?;
        let coord = frame_to_coord(&base.x, &base.y, &frame);
        Ok(HTangent { base: base.clone(), coord, frame })
    }

    /// The left-invariant field `e̊_A` (0-based, `A = 2n` is `T`).
    pub fn basis(base: &HPoint, a: usize) -> HTangent {
        let mut f = vec![0.0; 2 * base.n() + 1];
        f[a] = 1.0;
        HTangent::from_frame(base, f).expect("length matches")
    }

    pub fn reeb(base: &HPoint) -> HTangent {
        HTangent::basis(base, 2 * base.n())
    }

    pub fn is_horizontal(&self, tol: f64) -> bool {
        contact_form(self).abs() <= tol
    }
}

fn check_len(base: &HPoint, len: usize) -> Result<()> {
    if len != 2 * base.n() + 1 {
        return Err(Error::Shape(format!("{} components at a point of H_{}", len, base.n())));
    }
    Ok(())
}

pub fn contact_form(v: &HTangent) -> f64 {
    let n = v.base.n();
    let (x, y, c) = (&v.base.x, &v.base.y, &v.coord);
    c[2 * n] + (0..n).map(|b| x[b] * c[n + b] - y[b] * c[b]).sum::<f64>()
}

pub fn complex_structure(v: &HTangent, tol: f64) -> Result<HTangent> {
    let th = contact_form(v);
    if th.abs() > tol {
        return Err(Error::NonHorizontal(th));
    }
    let n = v.base.n();
    let mut f = vec![0.0; 2 * n + 1];
    for b in 0..n {
        f[b] = -v.frame[n + b];
        f[n + b] = v.frame[b];
    }
    HTangent::from_frame(&v.base, f)
}

pub fn adapted_metric(v: &HTangent, w: &HTangent) -> Result<f64> {
    if v.base != w.base {
        return Err(Error::BaseMismatch);
    }
    Ok(dot(&v.frame, &w.frame))
}

/// Pushforward of `v` (based at `q`) under left translation by `p`.
pub fn push_left(p: &HPoint, v: &HTangent) -> Result<HTangent> {
    let base = group_mul(p, &v.base)?;
    let n = p.n();
    let mut c = v.coord.clone();
    for b in 0..n {
        c[2 * n] += p.y[b] * v.coord[b] - p.x[b] * v.coord[n + b];
    }
    HTangent::from_coord(&base, c)
}

/// Adapted frame `(e_1..e_n, e_{n+1}..e_{2n}, T)` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameAtPoint {
    pub base: HPoint,
    pub columns: Vec<HTangent>,
}

impl FrameAtPoint {
    pub fn standard(base: &HPoint) -> FrameAtPoint {
        let columns = (0..=2 * base.n()).map(|a| HTangent::basis(base, a)).collect();
        FrameAtPoint { base: base.clone(), columns }
    }

    /// Builds a frame from the frame components of `e_1..e_{2n}` (T is appended).
    pub fn from_frame_columns(base: &HPoint, cols: &[Vec<f64>]) -> Result<FrameAtPoint> {
        let n = base.n();
        if cols.len() != 2 * n {
            return Err(Error::Shape(format!("{} horizontal columns for H_{}", cols.len(), n)));
        }
        let mut columns = Vec::with_capacity(2 * n + 1);
        for c in cols {
            let mut f = c.clone();
            if f.len() == 2 * n {
                f.push(0.0);
            }
            columns.push(HTangent::from_frame(base, f)?);
        }
        columns.push(HTangent::reeb(base));
        Ok(FrameAtPoint { base: base.clone(), columns })
    }

    /// Largest violation of the adapted-frame conditions.
    pub fn residual(&self) -> f64 {
        let n = self.base.n();
        if self.columns.len() != 2 * n + 1 {
            return f64::INFINITY;
        }
        let mut r: f64 = 0.0;
        let t = &self.columns[2 * n].frame;
        for (a, v) in t.iter().enumerate() {
            r = r.max((v - if a == 2 * n { 1.0 } else { 0.0 }).abs());
        }
        for a in 0..2 * n {
            let ca = &self.columns[a].frame;
            r = r.max(ca[2 * n].abs());
            for b in 0..2 * n {
                let g = dot(ca, &self.columns[b].frame);
                r = r.max((g - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        for b in 0..n {
            let (e, je) = (&self.columns[b].frame, &self.columns[n + b].frame);
            for k in 0..n {
                r = r.max((je[k] + e[n + k]).abs()).max((je[n + k] - e[k]).abs());
            }
        }
        r
    }
}

/// Levi pairing `⟨v, Z_β⟩ = ½(⟨v,e_β⟩ + i⟨v,e_{n+β}⟩)` for `Z_β = ½(e_β − i e_{n+β})`
/// of the frame `f` (β is 0-based).
pub fn hermitian_pairing(v: &HTangent, f: &FrameAtPoint, beta: usize, tol: f64) -> Result<C64> {
    let th = contact_form(v);
    if th.abs() > tol {
        return Err(Error::NonHorizontal(th));
    }
    let n = f.base.n();
    if beta >= n {
        return Err(Error::Shape(format!("index {} out of range for H_{}", beta, n)));
    }
    let re = adapted_metric(v, &f.columns[beta])?;
    let im = adapted_metric(v, &f.columns[n + beta])?;
    Ok(C64::new(0.5 * re, 0.5 * im))
}
