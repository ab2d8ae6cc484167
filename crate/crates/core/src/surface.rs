//! Sources of Taylor jets for a parametrized submanifold: automatic
//! differentiation of expression trees, or finite differences of a black box.

use std::collections::HashMap;

use serde::Serialize;

use crate::dsl::Immersion;
use crate::error::{Error, Result};
use crate::jet::{layout, Jet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DerivMode {
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "FD")]
    Fd,
}

/// Tolerances are multiplied by this factor when derivatives come from finite differences.
pub const FD_TOL_SCALE: f64 = 1e4;

impl DerivMode {
    pub fn tol_scale(self) -> f64 {
        match self {
            DerivMode::Ad => 1.0,
            DerivMode::Fd => FD_TOL_SCALE,
        }
    }
}

pub trait SurfaceMap: Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn chart(&self) -> &[(f64, f64)];
    fn label(&self) -> &str;
    /// Coordinates `(x, y, t)` at `u`, without any chart check.
    fn eval_raw(&self, u: &[f64]) -> Result<Vec<f64>>;
    /// Exact jets when the map is known symbolically.
    fn ad_jet(&self, _u: &[f64], _order: usize) -> Option<Result<Vec<Jet>>> {
        None
    }
    fn dim(&self) -> usize {
        2 * self.m() + 1
    }
}

impl SurfaceMap for Immersion {
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.m
    }
    fn chart(&self) -> &[(f64, f64)] {
        &self.chart
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn eval_raw(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.eval_generic(u)
    }
    fn ad_jet(&self, u: &[f64], order: usize) -> Option<Result<Vec<Jet>>> {
        Some(self.jet(u, order))
    }
}

/// A black-box map given as a closure; only finite-difference jets are available.
pub struct FnSurface<F> {
    pub n: usize,
    pub m: usize,
    pub chart: Vec<(f64, f64)>,
    pub label: String,
    pub f: F,
}

impl<F> SurfaceMap for FnSurface<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.m
    }
    fn chart(&self) -> &[(f64, f64)] {
        &self.chart
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn eval_raw(&self, u: &[f64]) -> Result<Vec<f64>> {
        (self.f)(u)
    }
}

/// Jets of `X` at `u` in the requested mode. AD falls back to FD for black boxes.
pub fn x_jet(s: &dyn SurfaceMap, u: &[f64], order: usize, mode: DerivMode) -> Result<Vec<Jet>> {
    if mode == DerivMode::Ad {
        if let Some(j) = s.ad_jet(u, order) {
            return j;
        }
    }
    fd_jet(s, u, order)
}

/// Base step per derivative order (index = order); balances truncation and rounding.
const FD_STEPS: [f64; 5] = [0.0, 1e-3, 4e-3, 1e-2, 2e-2];

fn stencil(order: u8) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        _ => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
    }
}

/// Central-difference jets with one Richardson step (`δ` and `δ/2`), up to order 4.
pub fn fd_jet(s: &dyn SurfaceMap, u: &[f64], order: usize) -> Result<Vec<Jet>> {
    if order > 4 {
        return Err(Error::InvalidArgument("finite-difference jets are limited to order 4".into()));
    }
    let d = u.len();
    let k = 2 * s.n() + 1;
    let l = layout(d, order);
    let mut cache: HashMap<Vec<i64>, Vec<f64>> = HashMap::new();
    // Offsets are stored in units of δ_min/4 to share evaluations between orders.
    let unit = FD_STEPS[1] / 4.0;
    let mut eval = |off: &[f64]| -> Result<Vec<f64>> {
        let key: Vec<i64> = off.iter().map(|o| (o / unit).round() as i64).collect();
        if let Some(v) = cache.get(&key) {
            return Ok(v.clone());
        }
        let p: Vec<f64> = u.iter().zip(off).map(|(a, b)| a + b).collect();
        let v = s.eval_raw(&p)?;
        if v.len() != k {
            return Err(Error::Shape(format!("surface returned {} coordinates, expected {k}", v.len())));
        }
        cache.insert(key, v.clone());
        Ok(v)
    };
    let mut coeffs = vec![vec![0.0; l.len()]; k];
    for (idx, alpha) in l.monomials().iter().enumerate() {
        let deg: usize = alpha.iter().map(|&a| a as usize).sum();
        let mut est = Vec::new();
        for h in [FD_STEPS[deg.max(1)], FD_STEPS[deg.max(1)] / 2.0] {
            let mut acc = vec![0.0; k];
            let mut combos: Vec<(Vec<f64>, f64)> = vec![(vec![0.0; d], 1.0)];
            for (axis, &a) in alpha.iter().enumerate() {
                let mut next = Vec::new();
                for (off, w) in &combos {
                    for &(o, c) in stencil(a) {
                        let mut off2 = off.clone();
                        off2[axis] += o as f64 * h;
                        next.push((off2, w * c / h.powi(a as i32)));
                    }
                }
                combos = next;
            }
            for (off, w) in combos {
                let v = eval(&off)?;
                for c in 0..k {
                    acc[c] += w * v[c];
                }
            }
            est.push(acc);
        }
        let fact: f64 = alpha.iter().map(|&a| (1..=a as u32).product::<u32>() as f64).product();
        for c in 0..k {
            let val = if deg == 0 { est[0][c] } else { (4.0 * est[1][c] - est[0][c]) / 3.0 };
            coeffs[c][idx] = val / fact;
        }
    }
    Ok(coeffs.iter().map(|c| Jet::from_coeffs(l, c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_builtin_spec;

    #[test]
    fn fd_jets_track_ad_jets() {
        let imm = parse_builtin_spec("sphere(2,1)").unwrap();
        let u = imm.center();
        let ad = x_jet(&imm, &u, 3, DerivMode::Ad).unwrap();
        let fd = x_jet(&imm, &u, 3, DerivMode::Fd).unwrap();
        for (a, f) in ad.iter().zip(&fd) {
            for (i, (p, q)) in a.coeffs().iter().zip(f.coeffs()).enumerate() {
                let tol = if i < 4 { 1e-9 } else { 1e-6 };
                assert!((p - q).abs() < tol, "coefficient {i}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn closures_use_finite_differences() {
        let s = FnSurface {
            n: 1,
            m: 1,
            chart: vec![(-1.0, 1.0); 3],
            label: "cb".into(),
            f: |u: &[f64]| Ok(vec![u[0] * u[0], u[1], u[2] + u[0] * u[1]]),
        };
        let j = x_jet(&s, &[0.5, 0.25, 0.0], 2, DerivMode::Ad).unwrap();
        assert!((j[0].partial(&[1, 0, 0]) - 1.0).abs() < 1e-10);
        assert!((j[0].partial(&[2, 0, 0]) - 2.0).abs() < 1e-8);
        assert!((j[2].partial(&[1, 1, 0]) - 1.0).abs() < 1e-8);
    }
}
