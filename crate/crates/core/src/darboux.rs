//! Darboux frames along a submanifold, the fundamental vector field ν and the
//! Darboux derivative `ω_f = f⁻¹ df`.
//!
//! Everything at a chart point is computed on Taylor jets of the immersion, so
//! the frame `f`, the form `ω_f` and the dual tangent frame come with exact
//! derivatives of the orders needed downstream.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::cx::C64;
use crate::dsl::Grid;
use crate::error::{Error, Result};
use crate::heis::{coord_to_frame, frame_to_coord, FrameAtPoint, HPoint, HTangent};
use crate::jet::{Jet, Scalar};
use crate::mat::{solve, Mat};
use crate::psh::{algebra_validate, compose_generic, inverse_generic, AlgebraValue};
use crate::surface::{x_jet, DerivMode, SurfaceMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Gauge {
    /// Seeds picked once from the standard basis at the grid base point.
    Canonical,
    /// Last normal leg `e_n = −ν/|ν|` (completely non-vertical surfaces).
    Sphere,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GaugeUsed {
    Canonical,
    Neighbor,
    Sphere,
}

#[derive(Clone, Debug)]
pub struct FrameOptions {
    pub mode: DerivMode,
    /// Jet order of the immersion; 3 gives curvature values.
    pub order: usize,
    pub rank_floor: f64,
    pub singular_floor: f64,
    pub cr_tol: f64,
    pub gauge: Gauge,
    /// Rotation `e_a ↦ cos ψ e_a + sin ψ Je_a` applied to every normal leg.
    pub normal_phase: f64,
    /// Seeds whose projection falls below this are replaced by the neighbouring frame.
    pub seed_floor: f64,
    pub coframe_cond: f64,
    /// Fixed seeds for grid sweeps; `None` picks them from the grid.
    pub seeds: Option<Seeds>,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            mode: DerivMode::Ad,
            order: 3,
            rank_floor: 1e-8,
            singular_floor: 1e-8,
            cr_tol: 1e-7,
            gauge: Gauge::Canonical,
            normal_phase: 0.0,
            seed_floor: 0.1,
            coframe_cond: 1e10,
            seeds: None,
        }
    }
}

/// Frame-component vectors used to start the Gram–Schmidt passes.
#[derive(Clone, Debug, PartialEq)]
pub struct Seeds {
    pub tangent: Vec<Vec<f64>>,
    pub normal: Vec<Vec<f64>>,
}

impl Seeds {
    /// Seeds carried by the rotation block `R` of a motion, so that frames of the
    /// moved surface are the moved frames.
    pub fn rotated(&self, rot: &DMatrix<f64>) -> Seeds {
        let r = |v: &Vec<f64>| (rot * nalgebra::DVector::from_column_slice(v)).iter().copied().collect::<Vec<_>>();
        Seeds { tangent: self.tangent.iter().map(r).collect(), normal: self.normal.iter().map(r).collect() }
    }
}

/// Everything known at one chart point, as jets in the chart variables.
#[derive(Clone, Debug)]
pub struct PointFrame {
    pub n: usize,
    pub m: usize,
    pub u: Vec<f64>,
    /// Coordinates of `X(u)`.
    pub x: Vec<Jet>,
    /// Frame components of ν.
    pub nu: Vec<Jet>,
    /// Frame components of `e_1..e_n` (the `J`-images complete the frame).
    pub legs: Vec<Vec<Jet>>,
    pub f: Mat<Jet>,
    /// `ω_f(∂_i)` for each chart direction.
    pub omega: Vec<Mat<Jet>>,
    /// Chart components of `ê_1..ê_m, ê_{m+1}..ê_{2m}, T̂` as columns.
    pub dual: Mat<Jet>,
    pub gauge: GaugeUsed,
    pub weak_seed: bool,
    pub cr_residual: f64,
    /// Chart components of an orthonormal basis of `ξ̂`, with frame components.
    pub xi_hat: Vec<(Vec<Jet>, Vec<Jet>)>,
}

fn dotj(a: &[Jet], b: &[Jet]) -> Jet {
    let mut acc = a[0].clone() * b[0].clone();
    for i in 1..a.len() {
        acc += a[i].clone() * b[i].clone();
    }
    acc
}

fn axpy(y: &mut [Jet], a: &Jet, x: &[Jet]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        let v = yi.clone() + a.clone() * xi.clone();
        *yi = v;
    }
}

fn scaled(x: &[Jet], a: &Jet) -> Vec<Jet> {
    x.iter().map(|v| v.clone() * a.clone()).collect()
}

/// `J₀` on frame components `(a, b) ↦ (−b, a)`.
pub fn jrot<S: Scalar>(v: &[S]) -> Vec<S> {
    let n = v.len() / 2;
    let mut out = Vec::with_capacity(2 * n);
    for b in 0..n {
        out.push(-v[n + b].clone());
    }
    for b in 0..n {
        out.push(v[b].clone());
    }
    out
}

fn norm_val(v: &[Jet]) -> f64 {
    v.iter().map(|c| c.value() * c.value()).sum::<f64>().sqrt()
}

fn cst_vec(v: &[f64]) -> Vec<Jet> {
    v.iter().map(|c| Jet::cst(*c)).collect()
}

struct Tangents {
    /// Horizontal frame components of `∂_i X`.
    h: Vec<Vec<Jet>>,
    /// `Θ(∂_i X)`.
    c: Vec<Jet>,
    sigma_max: f64,
}

fn tangents(x: &[Jet], n: usize, d: usize, u: &[f64], opts: &FrameOptions) -> Result<Tangents> {
    let (xs, ys) = (&x[..n], &x[n..2 * n]);
    let mut h = Vec::with_capacity(d);
    let mut c = Vec::with_capacity(d);
    let mut vals = DMatrix::zeros(2 * n + 1, d);
    for i in 0..d {
        let tc: Vec<Jet> = x.iter().map(|xc| xc.deriv(i)).collect();
        let mut fr = coord_to_frame(xs, ys, &tc);
        for (r, v) in fr.iter().enumerate() {
            vals[(r, i)] = v.value();
        }
        c.push(fr.pop().expect("2n+1 components"));
        h.push(fr);
    }
    let sv = vals.singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    if !(sigma_min > opts.rank_floor * sigma_max) {
        return Err(Error::NotImmersed { at: u.to_vec(), sigma: sigma_min });
    }
    Ok(Tangents { h, c, sigma_max })
}

/// Orthonormal basis of `ξ̂ = TM ∩ ξ` as `(chart components, frame components)` pairs,
/// plus the worst `J`-invariance residual.
fn xi_hat_basis(t: &Tangents, d: usize, u: &[f64], opts: &FrameOptions) -> Result<(Vec<(Vec<Jet>, Vec<Jet>)>, f64)> {
    let k = (0..d)
        .max_by(|&a, &b| t.c[a].value().abs().total_cmp(&t.c[b].value().abs()))
        .expect("d ≥ 1");
    if t.c[k].value().abs() < opts.singular_floor * t.sigma_max {
        return Err(Error::SingularPoint { at: u.to_vec() });
    }
    let ck_inv = t.c[k].recip();
    let mut basis: Vec<(Vec<Jet>, Vec<Jet>)> = Vec::with_capacity(d - 1);
    for i in (0..d).filter(|&i| i != k) {
        let ratio = -(t.c[i].clone() * ck_inv.clone());
        let mut chart = vec![Jet::cst(0.0); d];
        chart[i] = Jet::cst(1.0);
        chart[k] = ratio.clone();
        let mut v = t.h[i].clone();
        axpy(&mut v, &ratio, &t.h[k]);
        for _ in 0..2 {
            for (qc, qv) in &basis {
                let p = -dotj(&v, qv);
                axpy(&mut v, &p, qv);
                axpy(&mut chart, &p, qc);
            }
        }
        let nv = norm_val(&v);
        if nv < opts.singular_floor * t.sigma_max {
            return Err(Error::SingularPoint { at: u.to_vec() });
        }
        let inv = dotj(&v, &v).sqrt().recip();
        basis.push((scaled(&chart, &inv), scaled(&v, &inv)));
    }
    let mut cr: f64 = 0.0;
    for (_, q) in &basis {
        let jq: Vec<f64> = jrot(q).iter().map(|c| c.value()).collect();
        let mut rest = jq.clone();
        for (_, p) in &basis {
            let pv: Vec<f64> = p.iter().map(|c| c.value()).collect();
            let a: f64 = jq.iter().zip(&pv).map(|(x, y)| x * y).sum();
            for (r, pi) in rest.iter_mut().zip(&pv) {
                *r -= a * pi;
            }
        }
        cr = cr.max(rest.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    if cr > opts.cr_tol {
        return Err(Error::NotCRInvariant { at: u.to_vec(), residual: cr });
    }
    Ok((basis, cr))
}

/// Solves `Σ a_i Θ(∂_i X) = 1`, `Σ a_i ⟨h_i, q_r⟩ = 0`; returns `(a, ν)`.
/// `order` permutes the unknowns before elimination.
fn solve_reeb(t: &Tangents, basis: &[(Vec<Jet>, Vec<Jet>)], d: usize, order: &[usize]) -> Result<(Vec<Jet>, Vec<Jet>)> {
    let mut a = Mat::<Jet>::zeros(d, d);
    let mut rhs = Mat::<Jet>::zeros(d, 1);
    for (col, &i) in order.iter().enumerate() {
        a[(0, col)] = t.c[i].clone();
        for (r, (_, q)) in basis.iter().enumerate() {
            a[(1 + r, col)] = dotj(&t.h[i], q);
        }
    }
    rhs[(0, 0)] = Jet::cst(1.0);
    let sol = solve(&a, &rhs, 1e-13).ok_or_else(|| Error::LinearSolveFailure("Reeb system is singular".into()))?;
    let mut coef = vec![Jet::cst(0.0); d];
    for (col, &i) in order.iter().enumerate() {
        coef[i] = sol[(col, 0)].clone();
    }
    let mut nu = scaled(&t.h[0], &coef[0]);
    for i in 1..d {
        axpy(&mut nu, &coef[i], &t.h[i]);
    }
    Ok((coef, nu))
}

/// Removes from `v` its components along `e` and `Je` for every leg in `legs`.
fn strip(v: &mut Vec<Jet>, legs: &[Vec<Jet>]) {
    for _ in 0..2 {
        for e in legs {
            let je = jrot(e);
            let a = -dotj(v, e);
            let b = -dotj(v, &je);
            axpy(v, &a, e);
            axpy(v, &b, &je);
        }
    }
}

fn normalize(v: Vec<Jet>) -> Vec<Jet> {
    let inv = dotj(&v, &v).sqrt().recip();
    scaled(&v, &inv)
}

/// Projects `seed` through `project`; when the result is shorter than `floor`, the
/// standard basis vector with the longest projection is used instead and the point is flagged.
fn seeded(seed: &[f64], n: usize, floor: f64, project: impl Fn(&[f64]) -> Vec<Jet>) -> (Vec<Jet>, bool) {
    let v = project(seed);
    if norm_val(&v) >= floor {
        return (v, false);
    }
    let mut best = v;
    for a in 0..2 * n {
        let mut e = vec![0.0; 2 * n];
        e[a] = 1.0;
        let c = project(&e);
        if norm_val(&c) > norm_val(&best) {
            best = c;
        }
    }
    (best, true)
}

/// Per-point frame construction from the immersion's jets.
pub fn frame_from_jets(
    x: Vec<Jet>,
    n: usize,
    m: usize,
    u: &[f64],
    seeds: &Seeds,
    opts: &FrameOptions,
    pivot_order: Option<&[usize]>,
) -> Result<PointFrame> {
    let d = 2 * m + 1;
    let t = tangents(&x, n, d, u, opts)?;
    let (basis, cr_residual) = xi_hat_basis(&t, d, u, opts)?;
    let natural: Vec<usize> = (0..d).collect();
    let (coef, nu) = solve_reeb(&t, &basis, d, pivot_order.unwrap_or(&natural))?;

    let mut weak = false;
    let mut legs: Vec<Vec<Jet>> = Vec::with_capacity(n);
    let tangent_candidate = |s: &[f64], legs: &[Vec<Jet>]| {
        let sv = cst_vec(s);
        let mut v = vec![Jet::cst(0.0); 2 * n];
        for (_, q) in &basis {
            let p = dotj(&sv, q);
            axpy(&mut v, &p, q);
        }
        strip(&mut v, legs);
        v
    };
    for s in seeds.tangent.iter().take(m) {
        let (v, w) = seeded(s, n, opts.seed_floor, |c| tangent_candidate(c, &legs));
        weak |= w;
        legs.push(normalize(v));
    }
    let sphere = opts.gauge == Gauge::Sphere && n > m;
    let mut normals: Vec<Option<Vec<Jet>>> = vec![None; n - m];
    if sphere {
        let nn = norm_val(&nu);
        if nn < 1e-12 {
            return Err(Error::WrongClass { expected: "CompletelyNonVertical".into(), found: "ν = 0".into() });
        }
        normals[n - m - 1] = Some(normalize(nu.iter().map(|c| -c.clone()).collect()));
    }
    for (a, s) in seeds.normal.iter().enumerate().take(n - m) {
        if normals[a].is_some() {
            continue;
        }
        let mut done: Vec<Vec<Jet>> = legs.clone();
        done.extend(normals.iter().flatten().cloned());
        let (v, w) = seeded(s, n, opts.seed_floor, |c| {
            let mut v = cst_vec(c);
            strip(&mut v, &done);
            v
        });
        weak |= w;
        normals[a] = Some(normalize(v));
    }
    let (cpsi, spsi) = (opts.normal_phase.cos(), opts.normal_phase.sin());
    for e in normals.into_iter() {
        let e = e.expect("every normal leg is built");
        if opts.normal_phase != 0.0 {
            let je = jrot(&e);
            legs.push(e.iter().zip(&je).map(|(a, b)| a.clone() * cpsi + b.clone() * spsi).collect());
        } else {
            legs.push(e);
        }
    }

    let mut r = Mat::<Jet>::zeros(2 * n, 2 * n);
    for (col, e) in legs.iter().enumerate() {
        let je = jrot(e);
        for row in 0..2 * n {
            r[(row, col)] = e[row].clone();
            r[(row, n + col)] = je[row].clone();
        }
    }
    let f = compose_generic(&x, &r);
    let finv = inverse_generic(&f);
    let omega: Vec<Mat<Jet>> = (0..d).map(|i| finv.mul(&f.d(i))).collect();

    // Dual tangent frame: e_j and Je_j expressed through ξ̂'s chart basis, T̂ from the Reeb solve.
    let mut dual = Mat::<Jet>::zeros(d, d);
    for j in 0..m {
        for (slot, v) in [(j, legs[j].clone()), (m + j, jrot(&legs[j]))] {
            let mut chart = vec![Jet::cst(0.0); d];
            for (qc, q) in &basis {
                let p = dotj(&v, q);
                axpy(&mut chart, &p, qc);
            }
            for i in 0..d {
                dual[(i, slot)] = chart[i].clone();
            }
        }
    }
    for i in 0..d {
        dual[(i, 2 * m)] = coef[i].clone();
    }

    let gauge = if sphere { GaugeUsed::Sphere } else { GaugeUsed::Canonical };
    Ok(PointFrame {
        n,
        m,
        u: u.to_vec(),
        x,
        nu,
        legs,
        f,
        omega,
        dual,
        gauge,
        weak_seed: weak,
        cr_residual,
        xi_hat: basis,
    })
}

pub fn point_frame(s: &dyn SurfaceMap, u: &[f64], seeds: &Seeds, opts: &FrameOptions) -> Result<PointFrame> {
    let x = x_jet(s, u, opts.order.max(2), opts.mode)?;
    frame_from_jets(x, s.n(), s.m(), u, seeds, opts, None)
}

impl PointFrame {
    pub fn d(&self) -> usize {
        2 * self.m + 1
    }

    /// Leg values `e_1..e_n` as seeds for a neighbouring point.
    pub fn leg_seeds(&self) -> Seeds {
        let vals: Vec<Vec<f64>> = self.legs.iter().map(|e| e.iter().map(|v| v.value()).collect()).collect();
        Seeds { tangent: vals[..self.m].to_vec(), normal: vals[self.m..].to_vec() }
    }

    /// Structure-equation residual `max_{i<j} ‖∂_iω_j − ∂_jω_i + [ω_i, ω_j]‖` from the jets.
    pub fn structure_residual(&self) -> f64 {
        let d = self.d();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                let a = self.omega[j].d(i).value() - self.omega[i].d(j).value();
                let wi = self.omega[i].value();
                let wj = self.omega[j].value();
                let r = a + &wi * &wj - &wj * &wi;
                worst = worst.max(r.amax());
            }
        }
        worst
    }

    /// Value-level snapshot kept on grids.
    pub fn sample(&self) -> FrameSample {
        let d = self.d();
        FrameSample {
            n: self.n,
            m: self.m,
            u: self.u.clone(),
            x: self.x.iter().map(|c| c.value()).collect(),
            tangents: DMatrix::from_fn(2 * self.n + 1, d, |r, i| self.x[r].deriv(i).value()),
            nu: self.nu.iter().map(|c| c.value()).collect(),
            legs: DMatrix::from_fn(2 * self.n, self.n, |r, c| self.legs[c][r].value()),
            f: self.f.value(),
            omega: self.omega.iter().map(|w| w.value()).collect(),
            dual: self.dual.value(),
            gauge: self.gauge,
            cr_residual: self.cr_residual,
            structure: self.structure_residual(),
        }
    }
}

/// Values of a [`PointFrame`] at its chart point.
#[derive(Clone, Debug)]
pub struct FrameSample {
    pub n: usize,
    pub m: usize,
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    /// Coordinate components of `∂_i X` as columns.
    pub tangents: DMatrix<f64>,
    pub nu: Vec<f64>,
    /// Frame components of `e_1..e_n` as columns.
    pub legs: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub omega: Vec<DMatrix<f64>>,
    pub dual: DMatrix<f64>,
    pub gauge: GaugeUsed,
    pub cr_residual: f64,
    /// Pointwise structure-equation residual from the jets.
    pub structure: f64,
}

impl FrameSample {
    pub fn point(&self) -> HPoint {
        HPoint::from_slice(&self.x).expect("2n+1 coordinates")
    }

    pub fn leg(&self, c: usize) -> Vec<f64> {
        self.legs.column(c).iter().copied().collect()
    }

    pub fn frame(&self) -> FrameAtPoint {
        let cols: Vec<Vec<f64>> = (0..2 * self.n)
            .map(|c| if c < self.n { self.leg(c) } else { jrot(&self.leg(c - self.n)) })
            .collect();
        FrameAtPoint::from_frame_columns(&self.point(), &cols).expect("2n columns")
    }

    pub fn mc_values(&self) -> Vec<AlgebraValue> {
        self.omega.iter().map(|w| AlgebraValue { n: self.n, mat: w.clone() }).collect()
    }

    /// `⟨ν, Z_a⟩` with the Levi pairing `g(ν, e_a) + i g(ν, Je_a)`, for the normal legs.
    pub fn nu_levi(&self) -> Vec<C64> {
        (self.m..self.n)
            .map(|a| {
                let e = self.leg(a);
                C64::new(dotf(&self.nu, &e), dotf(&self.nu, &jrot(&e)))
            })
            .collect()
    }

    pub fn leg_seeds(&self) -> Seeds {
        let vals: Vec<Vec<f64>> = (0..self.n).map(|c| self.leg(c)).collect();
        Seeds { tangent: vals[..self.m].to_vec(), normal: vals[self.m..].to_vec() }
    }
}


fn dotf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Seeds chosen greedily from the standard basis at `u`, maximizing the projection
/// onto `ξ̂` (tangent legs) and then onto its complement (normal legs).
pub fn canonical_seeds(s: &dyn SurfaceMap, u: &[f64], opts: &FrameOptions) -> Result<Seeds> {
    canonical_seeds_over(s, &[u.to_vec()], opts)
}

/// Greedy seed choice scored by the smallest projection over several sample points.
pub fn canonical_seeds_over(s: &dyn SurfaceMap, samples: &[Vec<f64>], opts: &FrameOptions) -> Result<Seeds> {
    let (n, m) = (s.n(), s.m());
    let d = 2 * m + 1;
    let mut bases: Vec<Vec<Vec<f64>>> = Vec::with_capacity(samples.len());
    for u in samples {
        let x = x_jet(s, u, 1, opts.mode)?;
        let t = tangents(&x, n, d, u, opts)?;
        let (basis, _) = xi_hat_basis(&t, d, u, opts)?;
        bases.push(basis.iter().map(|(_, v)| v.iter().map(|c| c.value()).collect()).collect());
    }
    let unit = |a: usize| {
        let mut e = vec![0.0; 2 * n];
        e[a] = 1.0;
        e
    };
    let strip_f = |v: &mut Vec<f64>, legs: &[Vec<f64>]| {
        for e in legs {
            let je = jrot(e);
            let (a, b) = (dotf(v, e), dotf(v, &je));
            for k in 0..v.len() {
                v[k] -= a * e[k] + b * je[k];
            }
        }
    };
    // Legs chosen so far, per sample point.
    let mut chosen: Vec<Vec<Vec<f64>>> = vec![Vec::new(); samples.len()];
    let mut used: Vec<usize> = Vec::new();
    let (mut tangent, mut normal) = (Vec::new(), Vec::new());
    for slot in 0..n {
        let mut best: Option<(f64, usize, Vec<Vec<f64>>)> = None;
        for a in (0..2 * n).filter(|a| !used.contains(a)) {
            let e = unit(a);
            let mut score = f64::INFINITY;
            let mut legs = Vec::with_capacity(samples.len());
            for (q, ch) in bases.iter().zip(&chosen) {
                let mut v = if slot < m {
                    let mut v = vec![0.0; 2 * n];
                    for qq in q {
                        let p = dotf(&e, qq);
                        for k in 0..2 * n {
                            v[k] += p * qq[k];
                        }
                    }
                    v
                } else {
                    e.clone()
                };
                strip_f(&mut v, ch);
                let nv = dotf(&v, &v).sqrt();
                score = score.min(nv);
                legs.push(v.iter().map(|c| c / nv).collect::<Vec<f64>>());
            }
            if best.as_ref().map_or(true, |b| score > b.0 + 1e-12) {
                best = Some((score, a, legs));
            }
        }
        let (_, a, legs) = best.expect("candidates remain");
        used.push(a);
        for (ch, l) in chosen.iter_mut().zip(legs) {
            ch.push(l);
        }
        if slot < m {
            tangent.push(unit(a));
        } else {
            normal.push(unit(a));
        }
    }
    Ok(Seeds { tangent, normal })
}

/// Grid corners and centre, where seeds are scored.
fn seed_samples(grid: &Grid) -> Vec<Vec<f64>> {
    let d = grid.dim();
    let mut out: Vec<Vec<f64>> = (0..1usize << d)
        .map(|mask| {
            let idx: Vec<usize> = (0..d).map(|a| if mask >> a & 1 == 1 { grid.counts[a] - 1 } else { 0 }).collect();
            grid.point(&idx)
        })
        .collect();
    out.push(grid.point(&grid.counts.iter().map(|c| c / 2).collect::<Vec<_>>()));
    out
}

/// Orthonormal basis of `TM ∩ ξ` at `u`.
pub fn contact_intersection(s: &dyn SurfaceMap, u: &[f64], opts: &FrameOptions) -> Result<Vec<HTangent>> {
    let x = x_jet(s, u, 1, opts.mode)?;
    let base = HPoint::from_slice(&x.iter().map(|c| c.value()).collect::<Vec<_>>())?;
    let d = s.dim();
    let t = tangents(&x, s.n(), d, u, opts)?;
    let (basis, _) = xi_hat_basis(&t, d, u, opts)?;
    basis
        .iter()
        .map(|(_, q)| {
            let mut f: Vec<f64> = q.iter().map(|c| c.value()).collect();
            f.push(0.0);
            HTangent::from_frame(&base, f)
        })
        .collect()
}

/// `(T̂, ν)` at `u`. `pivot_order` permutes the unknowns of the linear solve.
pub fn reeb_and_nu(
    s: &dyn SurfaceMap,
    u: &[f64],
    opts: &FrameOptions,
    pivot_order: Option<&[usize]>,
) -> Result<(HTangent, HTangent)> {
    let x = x_jet(s, u, 1, opts.mode)?;
    let base = HPoint::from_slice(&x.iter().map(|c| c.value()).collect::<Vec<_>>())?;
    let d = s.dim();
    let t = tangents(&x, s.n(), d, u, opts)?;
    let (basis, _) = xi_hat_basis(&t, d, u, opts)?;
    let natural: Vec<usize> = (0..d).collect();
    let (_, nu) = solve_reeb(&t, &basis, d, pivot_order.unwrap_or(&natural))?;
    let mut nf: Vec<f64> = nu.iter().map(|c| c.value()).collect();
    nf.push(0.0);
    let nu_t = HTangent::from_frame(&base, nf.clone())?;
    nf[2 * s.n()] = 1.0;
    Ok((HTangent::from_frame(&base, nf)?, nu_t))
}

/// Per-point results of a grid sweep, in grid order.
#[derive(Clone, Debug)]
pub struct Sweep<T> {
    pub seeds: Seeds,
    pub items: Vec<T>,
    pub gauges: Vec<GaugeUsed>,
    /// Largest distance between leg matrices of grid neighbours.
    pub continuity: f64,
}

fn neighbour(grid: &Grid, flat: usize) -> Option<usize> {
    let mut idx = grid.index(flat);
    for a in (0..grid.dim()).rev() {
        if idx[a] > 0 {
            idx[a] -= 1;
            return Some(grid.flat(&idx));
        }
    }
    None
}

/// Builds the frame at every grid point and maps it through `f`.
///
/// Points are processed in parallel with the canonical seeds; points where a seed
/// is weak are then redone in grid order, seeded by the preceding neighbour's frame.
pub fn sweep<T, F>(s: &dyn SurfaceMap, grid: &Grid, opts: &FrameOptions, f: F) -> Result<Sweep<T>>
where
    T: Send,
    F: Fn(&PointFrame) -> Result<T> + Sync,
{
    let seeds = match &opts.seeds {
        Some(fixed) => fixed.clone(),
        None => canonical_seeds_over(s, &seed_samples(grid), opts)?,
    };
    let pts = grid.points();
    type Slot<T> = Option<(T, DMatrix<f64>, GaugeUsed)>;
    let first: Vec<Slot<T>> = pts
        .par_iter()
        .map(|u| {
            let pf = point_frame(s, u, &seeds, opts)?;
            if pf.weak_seed {
                return Ok(None);
            }
            let legs = pf.sample().legs;
            Ok(Some((f(&pf)?, legs, pf.gauge)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut items = Vec::with_capacity(pts.len());
    let mut legs: Vec<DMatrix<f64>> = Vec::with_capacity(pts.len());
    let mut gauges = Vec::with_capacity(pts.len());
    for (flat, slot) in first.into_iter().enumerate() {
        let (item, l, g) = match slot {
            Some(v) => v,
            None => {
                let ns = match neighbour(grid, flat) {
                    Some(nb) => {
                        let lm = &legs[nb];
                        let vals: Vec<Vec<f64>> = (0..lm.ncols()).map(|c| lm.column(c).iter().copied().collect()).collect();
                        Seeds { tangent: vals[..s.m()].to_vec(), normal: vals[s.m()..].to_vec() }
                    }
                    None => seeds.clone(),
                };
                let pf = point_frame(s, &pts[flat], &ns, opts)?;
                let g = if pf.gauge == GaugeUsed::Canonical { GaugeUsed::Neighbor } else { pf.gauge };
                let l = pf.sample().legs;
                (f(&pf)?, l, g)
            }
        };
        items.push(item);
        legs.push(l);
        gauges.push(g);
    }
    let mut continuity: f64 = 0.0;
    for flat in 0..pts.len() {
        let idx = grid.index(flat);
        for a in 0..grid.dim() {
            if idx[a] + 1 < grid.counts[a] {
                let mut j = idx.clone();
                j[a] += 1;
                continuity = continuity.max((&legs[flat] - &legs[grid.flat(&j)]).amax());
            }
        }
    }
    Ok(Sweep { seeds, items, gauges, continuity })
}

/// Darboux frames over a grid.
#[derive(Clone, Debug)]
pub struct DarbouxFrameField {
    pub grid: Grid,
    pub points: Vec<FrameSample>,
    pub seeds: Seeds,
    pub continuity: f64,
    pub mode: DerivMode,
}

pub fn darboux_frame(s: &dyn SurfaceMap, grid: &Grid, opts: &FrameOptions) -> Result<DarbouxFrameField> {
    let sw = sweep(s, grid, opts, |pf| Ok(pf.sample()))?;
    let mut points = sw.items;
    for (p, g) in points.iter_mut().zip(&sw.gauges) {
        p.gauge = *g;
    }
    Ok(DarbouxFrameField { grid: grid.clone(), points, seeds: sw.seeds, continuity: sw.continuity, mode: opts.mode })
}

impl DarbouxFrameField {
    pub fn worst_frame_residual(&self) -> f64 {
        self.points.iter().map(|p| p.frame().residual()).fold(0.0, f64::max)
    }
}

/// The Maurer–Cartan form sampled on the chart directions at every grid point.
#[derive(Clone, Debug)]
pub struct MCForm {
    pub n: usize,
    pub grid: Grid,
    pub slots: Vec<Vec<AlgebraValue>>,
    /// Pointwise jet residual of the structure equation per grid point.
    pub pointwise: Vec<f64>,
    pub mode: DerivMode,
}

impl MCForm {
    pub fn worst_validation(&self) -> f64 {
        self.slots.iter().flatten().map(|v| algebra_validate(v, f64::INFINITY).worst()).fold(0.0, f64::max)
    }

    /// Discrete structure residual over every plaquette of the grid:
    /// `(Δ_iω_j − Δ_jω_i)/h + [ω̄_i, ω̄_j]` with edge-averaged slots, at the plaquette centre.
    pub fn plaquette_residual(&self) -> f64 {
        let g = &self.grid;
        let d = g.dim();
        let mut worst: f64 = 0.0;
        for flat in 0..g.len() {
            let idx = g.index(flat);
            for i in 0..d {
                for j in i + 1..d {
                    if idx[i] + 1 >= g.counts[i] || idx[j] + 1 >= g.counts[j] {
                        continue;
                    }
                    let at = |di: usize, dj: usize| {
                        let mut k = idx.clone();
                        k[i] += di;
                        k[j] += dj;
                        &self.slots[g.flat(&k)]
                    };
                    let (p00, p10, p01, p11) = (at(0, 0), at(1, 0), at(0, 1), at(1, 1));
                    let (hi, hj) = (g.step(i), g.step(j));
                    // ω_i on the two i-edges, ω_j on the two j-edges.
                    let wi_lo = (&p00[i].mat + &p10[i].mat) * 0.5;
                    let wi_hi = (&p01[i].mat + &p11[i].mat) * 0.5;
                    let wj_lo = (&p00[j].mat + &p01[j].mat) * 0.5;
                    let wj_hi = (&p10[j].mat + &p11[j].mat) * 0.5;
                    let di_wj = (&wj_hi - &wj_lo) / hi;
                    let dj_wi = (&wi_hi - &wi_lo) / hj;
                    let wi = (&wi_lo + &wi_hi) * 0.5;
                    let wj = (&wj_lo + &wj_hi) * 0.5;
                    let r = di_wj - dj_wi + &wi * &wj - &wj * &wi;
                    worst = worst.max(r.amax());
                }
            }
        }
        worst
    }

    /// The residual the acceptance check reads: jets in AD mode, plaquettes in FD mode.
    pub fn structure_residual(&self) -> f64 {
        match self.mode {
            DerivMode::Ad => self.pointwise.iter().copied().fold(0.0, f64::max),
            DerivMode::Fd => self.plaquette_residual(),
        }
    }
}

pub fn darboux_derivative(field: &DarbouxFrameField) -> MCForm {
    let n = field.points.first().map_or(1, |p| p.n);
    MCForm {
        n,
        grid: field.grid.clone(),
        slots: field.points.iter().map(|p| p.mc_values()).collect(),
        pointwise: field.points.iter().map(|p| p.structure).collect(),
        mode: field.mode,
    }
}

/// Per-point ν data.
#[derive(Clone, Debug, Serialize)]
pub struct NuPoint {
    pub nu: Vec<f64>,
    pub norm: f64,
    /// `⟨ν, Z_a⟩` (Levi pairing).
    pub components: Vec<C64>,
}

pub fn nu_field(field: &DarbouxFrameField) -> Vec<NuPoint> {
    field
        .points
        .iter()
        .map(|p| NuPoint { norm: dotf(&p.nu, &p.nu).sqrt(), components: p.nu_levi(), nu: p.nu.clone() })
        .collect()
}

/// Residuals of the pullback identities for `ω^j, ω^{n+j}, ω^a, ω^{n+a}` on `M`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PullbackReport {
    pub tangent: f64,
    pub normal: f64,
    pub nu_tangency: f64,
    pub nu_norm_consistency: f64,
}

impl PullbackReport {
    pub fn max(&self) -> f64 {
        self.tangent.max(self.normal).max(self.nu_tangency).max(self.nu_norm_consistency)
    }
}

pub fn pullback_check(field: &DarbouxFrameField) -> PullbackReport {
    let mut rep = PullbackReport::default();
    for p in &field.points {
        let (n, m, d) = (p.n, p.m, 2 * p.m + 1);
        let form = |row: usize, col: usize| -> f64 { (0..d).map(|i| p.omega[i][(1 + row, 0)] * p.dual[(i, col)]).sum() };
        for col in 0..d {
            let th = form(2 * n, col);
            for j in 0..m {
                let ej = if col == j { 1.0 } else { 0.0 };
                let enj = if col == m + j { 1.0 } else { 0.0 };
                rep.tangent = rep.tangent.max((form(j, col) - ej).abs()).max((form(n + j, col) - enj).abs());
            }
            for a in m..n {
                let e = p.leg(a);
                rep.normal = rep
                    .normal
                    .max((form(a, col) - dotf(&p.nu, &e) * th).abs())
                    .max((form(n + a, col) - dotf(&p.nu, &jrot(&e)) * th).abs());
            }
        }
        // T + ν must be the push-forward of the chart vector T̂.
        let push = &p.tangents * p.dual.column(2 * m);
        let pt = p.point();
        let mut expect = p.nu.clone();
        expect.push(1.0);
        let expect_c = frame_to_coord(&pt.x, &pt.y, &expect);
        let tang = push.iter().zip(&expect_c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rep.nu_tangency = rep.nu_tangency.max(tang);
        let levi: f64 = p.nu_levi().iter().map(|c| c.norm_sqr()).sum();
        rep.nu_norm_consistency = rep.nu_norm_consistency.max((levi - dotf(&p.nu, &p.nu)).abs());
    }
    rep
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, parse_builtin_spec};

    fn field(spec: &str, counts: usize, opts: &FrameOptions) -> DarbouxFrameField {
        let imm = parse_builtin_spec(spec).unwrap();
        let grid = imm.grid(&vec![counts; imm.dim()]).unwrap();
        darboux_frame(&imm, &grid, opts).unwrap()
    }

    #[test]
    fn heis_sub_has_standard_frames_and_zero_nu() {
        let f = field("heis_sub(1,2)", 4, &FrameOptions::default());
        for p in &f.points {
            assert!(dotf(&p.nu, &p.nu) < 1e-28);
            let fr = p.frame();
            let std = FrameAtPoint::standard(&fr.base);
            for (a, b) in fr.columns.iter().zip(&std.columns) {
                for (x, y) in a.frame.iter().zip(&b.frame) {
                    assert!((x - y).abs() < 1e-14);
                }
            }
            assert!(p.structure < 1e-12);
        }
        let mc = darboux_derivative(&f);
        for v in mc.slots.iter().flatten() {
            let n = v.n;
            assert!(v.mat.view((1, 1), (2 * n, 2 * n)).amax() < 1e-14);
        }
        assert!((mc.slots[0][0].omega(0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_nu_matches_closed_form() {
        let r = 2.0;
        let imm = parse_builtin_spec("sphere(2,2)").unwrap();
        let opts = FrameOptions::default();
        for u in imm.grid(&[3, 3, 3]).unwrap().points() {
            let (that, nu) = reeb_and_nu(&imm, &u, &opts, None).unwrap();
            let p = imm.point(&u).unwrap();
            // ν = (x_β e̊_{n+β} − y_β e̊_β)/r²
            let expect = [-p.y[0] / (r * r), -p.y[1] / (r * r), p.x[0] / (r * r), p.x[1] / (r * r), 0.0];
            for (a, b) in nu.frame.iter().zip(expect) {
                assert!((a - b).abs() < 1e-13);
            }
            assert_eq!(that.frame[4], 1.0);
            let norm = nu.frame.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0 / r).abs() < 1e-13);
            let basis = contact_intersection(&imm, &u, &opts).unwrap();
            assert_eq!(basis.len(), 2);
            for b in &basis {
                assert!(crate::heis::contact_form(b).abs() < 1e-13);
                assert!(crate::heis::adapted_metric(b, &nu).unwrap().abs() < 1e-13);
            }
        }
    }

    #[test]
    fn nu_is_independent_of_pivot_order() {
        let imm = parse_builtin_spec("inverted_sphere").unwrap();
        let opts = FrameOptions::default();
        let u = imm.center();
        let (_, a) = reeb_and_nu(&imm, &u, &opts, None).unwrap();
        let (_, b) = reeb_and_nu(&imm, &u, &opts, Some(&[2, 0, 1])).unwrap();
        for (x, y) in a.frame.iter().zip(&b.frame) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_gauge_puts_nu_in_last_normal_leg() {
        let opts = FrameOptions { gauge: Gauge::Sphere, ..FrameOptions::default() };
        let f = field("sphere(2,1)", 3, &opts);
        for p in &f.points {
            let nn = dotf(&p.nu, &p.nu).sqrt();
            for (e, v) in p.leg(1).iter().zip(&p.nu) {
                assert!((e + v / nn).abs() < 1e-13);
            }
            assert!(p.frame().residual() < 1e-12);
            assert!(p.structure < 1e-10);
        }
        let rep = pullback_check(&f);
        assert!(rep.max() < 1e-10, "{rep:?}");
    }

    #[test]
    fn fd_plaquette_residual_converges_at_second_order() {
        let imm = parse_builtin_spec("sphere(2,1)").unwrap();
        let opts = FrameOptions { mode: DerivMode::Fd, order: 2, ..FrameOptions::default() };
        let mut res = Vec::new();
        for k in [3usize, 5, 9] {
            let lo: Vec<(f64, f64)> = imm.chart.iter().map(|(a, b)| (0.5 * (a + b) - 0.2, 0.5 * (a + b) + 0.2)).collect();
            let grid = Grid::new(&lo, &[k, k, k]).unwrap();
            let f = darboux_frame(&imm, &grid, &opts).unwrap();
            res.push(darboux_derivative(&f).structure_residual());
        }
        let o1 = (res[0] / res[1]).log2();
        let o2 = (res[1] / res[2]).log2();
        assert!(o1 > 1.7 && o2 > 1.7, "{res:?}");
    }

    #[test]
    fn left_translation_leaves_mc_form_unchanged() {
        use rand::SeedableRng;
        let imm = parse_builtin_spec("sphere(2,1)").unwrap();
        let g = crate::psh::random_element(2, 1.0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        let moved = imm.moved(&g);
        let opts = FrameOptions::default();
        let u = imm.center();
        let x1 = x_jet(&imm, &u, 2, opts.mode).unwrap();
        let x2 = x_jet(&moved, &u, 2, opts.mode).unwrap();
        let seeds = canonical_seeds(&imm, &u, &opts).unwrap();
        let a = frame_from_jets(x1, 2, 1, &u, &seeds, &opts, None).unwrap().sample();
        // Seeds rotate with the motion.
        let rot = g.rotation_block();
        let rs = |v: &Vec<f64>| (&rot * nalgebra::DVector::from_vec(v.clone())).iter().copied().collect::<Vec<_>>();
        let seeds2 = Seeds { tangent: seeds.tangent.iter().map(rs).collect(), normal: seeds.normal.iter().map(rs).collect() };
        let b = frame_from_jets(x2, 2, 1, &u, &seeds2, &opts, None).unwrap().sample();
        for (wa, wb) in a.omega.iter().zip(&b.omega) {
            assert!((wa - wb).amax() < 1e-12);
        }
        assert!((&g.mat * &a.f - &b.f).amax() < 1e-12);
    }

    #[test]
    fn singular_configuration_is_detected() {
        let imm = parse(
            "surface tilt { n = 2; m = 1; params = [a, b, c]; chart = [[-1, 1], [-1, 1], [-1, 1]]; }
             x[1] = a; x[2] = b; y[1] = c; y[2] = 0; t = a*c;",
        )
        .unwrap();
        let opts = FrameOptions::default();
        assert!(matches!(contact_intersection(&imm, &[0.0, 0.2, 0.3], &opts), Err(Error::SingularPoint { .. })));
        assert!(matches!(contact_intersection(&imm, &[0.5, 0.2, 0.3], &opts), Err(Error::NotCRInvariant { .. })));
    }

    #[test]
    fn ellipsoid_is_not_cr() {
        let imm = parse_builtin_spec("ellipsoid(2,1,1.3)").unwrap();
        let err = contact_intersection(&imm, &imm.center(), &FrameOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotCRInvariant { .. }), "{err:?}");
    }
}
