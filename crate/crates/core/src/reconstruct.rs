//! Integration of `df = f η` on a chart grid: integrability by plaquette holonomy,
//! frame reconstruction, congruence of two frame fields, and assembly of `η` from
//! intrinsic data.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cx::Cx;
use crate::darboux::{sweep, FrameOptions, MCForm};
use crate::dsl::Grid;
use crate::error::{Error, Result};
use crate::heis::HPoint;
use crate::invariants::{invariants_with_intrinsic, InvariantField, InvariantPoint};
use crate::jet::{layout, Jet, Layout, Scalar};
use crate::mat::Mat;
use crate::psh::{algebra_generic, algebra_validate, compose_generic, j0, PSHElement};
use crate::surface::{DerivMode, SurfaceMap};

/// Intrinsic data of a CR submanifold at one point, in chart components.
///
/// Normal indices `a` run over `0..n − m` and stand for `m + a`.
#[derive(Clone, Debug)]
pub struct IntrinsicData<S> {
    pub n: usize,
    pub m: usize,
    /// `θ̂^k` as `[k][i]`.
    pub theta: Vec<Vec<Cx<S>>>,
    /// `θ̂` as `[i]`.
    pub theta0: Vec<S>,
    /// `Γ_{jl}^k` as `[j][k][l]`.
    pub gamma_hol: Vec<Vec<Vec<Cx<S>>>>,
    /// `Γ_{jl̄}^k` as `[j][k][l]`.
    pub gamma_anti: Vec<Vec<Vec<Cx<S>>>>,
    /// `Γ_{j0}^k` as `[j][k]`.
    pub gamma0: Vec<Vec<Cx<S>>>,
    /// Second fundamental form candidate `g^a_{jk}` as `[a][j][k]`.
    pub h: Vec<Vec<Vec<Cx<S>>>>,
    /// `⟨μ, W_a⟩`.
    pub nu_c: Vec<Cx<S>>,
    /// `|μ|²`.
    pub nu2: S,
    /// Normal connection `η_a^b` on `(θ̂^k, θ̂^{k̄}, θ̂)` as `[a][b][slot]`.
    pub normal: Vec<Vec<Vec<Cx<S>>>>,
    /// `⟨∇_{W_j}μ, W_a⟩` as `[a][j]`.
    pub nu_deriv: Vec<Vec<Cx<S>>>,
}

impl<S: Scalar> IntrinsicData<S> {
    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    /// Worst violation of `g` symmetry and `η_a^b` skew-hermitian symmetry.
    pub fn shape_residual(&self) -> f64 {
        let (m, k) = (self.m, self.n - self.m);
        let mut r: f64 = 0.0;
        for a in 0..k {
            for j in 0..m {
                for l in 0..m {
                    r = r.max((self.h[a][j][l].value() - self.h[a][l][j].value()).abs());
                }
            }
            for b in 0..k {
                let (x, y) = (&self.normal[a][b], &self.normal[b][a]);
                for s in 0..m {
                    r = r.max((x[s].value() + y[m + s].value().conj()).abs());
                }
                r = r.max((x[2 * m].value() + y[2 * m].value().conj()).abs());
            }
        }
        r
    }
}

fn czero<S: Scalar>() -> Cx<S> {
    Cx::new(S::zero(), S::zero())
}

/// `η(∂_i)` for every chart direction `i`:
/// `η^j = θ̂^j`, `η^a = ⟨μ,W_a⟩θ̂`, `η = θ̂`, `η_j^k = θ̂_j^k + iδ_{jk}|μ|²θ̂`,
/// `η_j^a = g^a_{jk}θ̂^k + iδ_{jk}⟨μ,W_a⟩θ̂^{k̄} + ⟨∇_{W_j}μ,W_a⟩θ̂`, `η_a^j = −conj(η_j^a)`.
pub fn assemble_slots<S: Scalar>(data: &IntrinsicData<S>) -> Vec<Mat<S>> {
    let (n, m) = (data.n, data.m);
    (0..data.dim())
        .map(|i| {
            let th: Vec<Cx<S>> = (0..m).map(|k| data.theta[k][i].clone()).collect();
            let th0 = data.theta0[i].clone();
            let c0 = Cx::new(th0.clone(), S::zero());
            let mut vartheta = th.clone();
            for a in 0..n - m {
                vartheta.push(data.nu_c[a].clone() * c0.clone());
            }
            let mut conn = vec![vec![czero::<S>(); n]; n];
            for j in 0..m {
                for k in 0..m {
                    let mut acc = data.gamma0[j][k].clone() * c0.clone();
                    for l in 0..m {
                        acc = acc + data.gamma_hol[j][k][l].clone() * th[l].clone();
                        acc = acc + data.gamma_anti[j][k][l].clone() * th[l].conj();
                    }
                    if j == k {
                        acc = acc + Cx::new(S::zero(), data.nu2.clone()) * c0.clone();
                    }
                    conn[j][k] = acc;
                }
            }
            for a in 0..n - m {
                for j in 0..m {
                    let mut acc = data.nu_deriv[a][j].clone() * c0.clone();
                    for k in 0..m {
                        acc = acc + data.h[a][j][k].clone() * th[k].clone();
                    }
                    acc = acc + (data.nu_c[a].clone() * th[j].conj()).rot();
                    conn[m + a][j] = -acc.conj();
                    conn[j][m + a] = acc;
                }
                for b in 0..n - m {
                    let nb = &data.normal[a][b];
                    let mut acc = nb[2 * m].clone() * c0.clone();
                    for k in 0..m {
                        acc = acc + nb[k].clone() * th[k].clone() + nb[m + k].clone() * th[k].conj();
                    }
                    conn[m + a][m + b] = acc;
                }
            }
            algebra_generic(&th0, &vartheta, &conn)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Provenance {
    FromFrame,
    Assembled,
}

/// A `psh(n)`-valued one-form sampled on the chart directions at every grid point.
#[derive(Clone, Debug)]
pub struct EtaForm {
    pub n: usize,
    pub grid: Grid,
    /// `slots[point][i] = η(∂_i)`.
    pub slots: Vec<Vec<DMatrix<f64>>>,
    /// `∂_i^k η(∂_i)` for `k = 1..=r`, per point and direction, when known. Edge
    /// propagators then interpolate with two-point Hermite polynomials of degree
    /// `2r + 1` instead of Lagrange polynomials through neighbouring samples.
    pub axis_derivs: Option<Vec<Vec<Vec<DMatrix<f64>>>>>,
    pub provenance: Provenance,
}

/// Samples of one slot along a grid line.
struct LineView<'a> {
    vals: Vec<&'a DMatrix<f64>>,
    derivs: Option<Vec<&'a Vec<DMatrix<f64>>>>,
    h: f64,
    /// Inverse confluent Vandermonde matrix of the Hermite conditions.
    hermite: Option<DMatrix<f64>>,
}

impl<'a> LineView<'a> {
    fn new(vals: Vec<&'a DMatrix<f64>>, derivs: Option<Vec<&'a Vec<DMatrix<f64>>>>, h: f64) -> Self {
        let hermite = derivs.as_ref().and_then(|d| d.first()).map(|d| hermite_inverse(d.len()));
        LineView { vals, derivs, h, hermite }
    }

    fn at(&self, pos: f64) -> DMatrix<f64> {
        match (&self.derivs, &self.hermite) {
            (Some(d), Some(minv)) if self.vals.len() > 1 => {
                let i = (pos.floor().max(0.0) as usize).min(self.vals.len() - 2);
                let t = pos - i as f64;
                let size = minv.nrows();
                let powers = DMatrix::from_fn(1, size, |_, j| t.powi(j as i32));
                let w = powers * minv;
                let r = size / 2 - 1;
                let mut out = self.vals[i] * w[(0, 0)] + self.vals[i + 1] * w[(0, r + 1)];
                let mut hk = 1.0;
                for k in 1..=r {
                    hk *= self.h;
                    out += &d[i][k - 1] * (w[(0, k)] * hk) + &d[i + 1][k - 1] * (w[(0, r + 1 + k)] * hk);
                }
                out
            }
            _ => interpolate(&self.vals, pos),
        }
    }
}

/// Inverse of the matrix mapping monomial coefficients of a degree `2r + 1`
/// polynomial on `[0, 1]` to its derivatives of order `0..=r` at both ends.
fn hermite_inverse(r: usize) -> DMatrix<f64> {
    let size = 2 * r + 2;
    let falling = |j: usize, k: usize| -> f64 { (0..k).map(|q| (j - q) as f64).product() };
    let m = DMatrix::from_fn(size, size, |row, j| {
        let (k, at_one) = if row <= r { (row, false) } else { (row - r - 1, true) };
        if j < k || (!at_one && j != k) {
            0.0
        } else {
            falling(j, k)
        }
    });
    m.try_inverse().expect("confluent Vandermonde matrices are invertible")
}

impl EtaForm {
    pub fn from_mc(mc: &MCForm) -> EtaForm {
        EtaForm {
            n: mc.n,
            grid: mc.grid.clone(),
            slots: mc.slots.iter().map(|s| s.iter().map(|v| v.mat.clone()).collect()).collect(),
            axis_derivs: None,
            provenance: Provenance::FromFrame,
        }
    }

    pub fn zero(n: usize, grid: &Grid) -> EtaForm {
        let z = DMatrix::zeros(2 * n + 2, 2 * n + 2);
        EtaForm { n, grid: grid.clone(), slots: vec![vec![z; grid.dim()]; grid.len()], axis_derivs: None, provenance: Provenance::FromFrame }
    }

    pub fn worst_validation(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .map(|m| algebra_validate(&crate::psh::AlgebraValue { n: self.n, mat: m.clone() }, f64::INFINITY).worst())
            .fold(0.0, f64::max)
    }

    /// Samples of slot `axis` along the grid line through `idx` in direction `axis`.
    fn line(&self, idx: &[usize], axis: usize) -> LineView<'_> {
        let mut k = idx.to_vec();
        let flats: Vec<usize> = (0..self.grid.counts[axis])
            .map(|c| {
                k[axis] = c;
                self.grid.flat(&k)
            })
            .collect();
        LineView::new(
            flats.iter().map(|&f| &self.slots[f][axis]).collect(),
            self.axis_derivs.as_ref().map(|d| flats.iter().map(|&f| &d[f][axis]).collect()),
            self.grid.step(axis),
        )
    }
}

/// Value and axis derivatives up to order `r` of jet-valued slots.
fn slot_samples(eta: &[Mat<Jet>], r: usize) -> (Vec<DMatrix<f64>>, Vec<Vec<DMatrix<f64>>>) {
    let d = eta.len();
    let vals = eta.iter().map(|e| e.value()).collect();
    let derivs = (0..d)
        .map(|i| {
            let e = &eta[i];
            (1..=r)
                .map(|k| {
                    let mut alpha = vec![0u8; d];
                    alpha[i] = k as u8;
                    let fact: f64 = (1..=k).map(|q| q as f64).product();
                    DMatrix::from_fn(e.rows, e.rows, |a, b| fact * e[(a, b)].coeff(&alpha))
                })
                .collect()
        })
        .collect();
    (vals, derivs)
}

/// Derivative order carried by EtaForms built from jets.
pub const AXIS_DERIV_ORDER: usize = 3;

/// `ω_f` of the Darboux frame field on a grid, with the axis derivatives needed for
/// accurate edge propagators. Frames are built from jets of order at least
/// `AXIS_DERIV_ORDER + 2`.
pub fn darboux_eta(s: &dyn SurfaceMap, grid: &Grid, opts: &FrameOptions) -> Result<EtaForm> {
    let o = FrameOptions { order: opts.order.max(AXIS_DERIV_ORDER + 2), ..opts.clone() };
    let sw = sweep(s, grid, &o, |pf| Ok(slot_samples(&pf.omega, AXIS_DERIV_ORDER)))?;
    let (slots, derivs): (Vec<_>, Vec<_>) = sw.items.into_iter().unzip();
    let axis_derivs = (opts.mode == DerivMode::Ad).then_some(derivs);
    Ok(EtaForm { n: s.n(), grid: grid.clone(), slots, axis_derivs, provenance: Provenance::FromFrame })
}

/// `η` assembled from the intrinsic data stored in an invariant field.
pub fn assemble_eta(field: &InvariantField) -> Result<EtaForm> {
    let mut slots = Vec::with_capacity(field.points.len());
    for p in &field.points {
        let data = p.intrinsic(field.n);
        let r = data.shape_residual();
        if r > 1e-8 {
            return Err(Error::Shape(format!("intrinsic data at {:?} violates symmetry ({r:e})", p.u)));
        }
        slots.push(assemble_slots(&data).iter().map(|m| m.value()).collect());
    }
    Ok(EtaForm { n: field.n, grid: field.grid.clone(), slots, axis_derivs: None, provenance: Provenance::Assembled })
}

/// Lagrange interpolation of a line of samples at fractional index `pos`, using up to
/// six nodes around it.
fn interpolate(line: &[&DMatrix<f64>], pos: f64) -> DMatrix<f64> {
    let len = line.len();
    let k = len.min(6);
    let centre = pos.floor() as isize - (k as isize / 2 - 1);
    let lo = centre.clamp(0, (len - k) as isize) as usize;
    let mut out = DMatrix::zeros(line[0].nrows(), line[0].ncols());
    for a in lo..lo + k {
        let mut w = 1.0;
        for b in lo..lo + k {
            if a != b {
                w *= (pos - b as f64) / (a as f64 - b as f64);
            }
        }
        out += line[a] * w;
    }
    out
}

/// One classical Runge–Kutta step of `F' = F η` from `F = I`; `eta(s)` gives `η` at
/// fractional position `s ∈ [0, 1]` of the step.
fn rk4_step(eta: impl Fn(f64) -> DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let d = eta(0.0).nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let (e0, em, e1) = (eta(0.0), eta(0.5), eta(1.0));
    let k1 = e0;
    let k2 = (&id + &k1 * (h / 2.0)) * &em;
    let k3 = (&id + &k2 * (h / 2.0)) * &em;
    let k4 = (&id + &k3 * h) * &e1;
    id + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Projects onto `PSH(n)`: the rotation block is symmetrized into the commutant of
/// `J₀` and replaced by its polar factor; the translation column is kept and the rest
/// rebuilt. Returns the projected matrix and the size of the correction.
pub fn project(f: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let d = f.nrows();
    let n = (d - 2) / 2;
    let r = f.view((1, 1), (2 * n, 2 * n)).into_owned();
    let j = j0(n);
    let sym = (&r - &j * &r * &j) * 0.5;
    let svd = sym.svd(true, true);
    let q = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    let p: Vec<f64> = (1..d).map(|i| f[(i, 0)]).collect();
    let out = compose_generic(&p, &Mat::from_f64(&q)).value();
    let drift = (&out - f).amax();
    (out, drift)
}

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    /// Runge–Kutta steps per grid edge.
    pub substeps: usize,
    /// Allowed `holonomy / plaquette area`.
    pub threshold: f64,
    pub drift_bound: f64,
    pub check_integrability: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { substeps: 8, threshold: 1e-6, drift_bound: 1e-4, check_integrability: true }
    }
}

/// Propagator along the grid edge from line node `i0` to `i0 + 1`, with or without
/// reprojection after each substep. `f` is the frame at the start.
fn advance(
    f: &DMatrix<f64>,
    line: &LineView,
    i0: usize,
    substeps: usize,
    drift_bound: Option<f64>,
) -> Result<DMatrix<f64>> {
    let k = substeps.max(1);
    let hs = line.h / k as f64;
    let mut cur = f.clone();
    for s in 0..k {
        let base = i0 as f64 + s as f64 / k as f64;
        let step = rk4_step(|t| line.at(base + t / k as f64), hs);
        cur = &cur * step;
        if let Some(bound) = drift_bound {
            let (p, drift) = project(&cur);
            if drift > bound {
                return Err(Error::ProjectionDrift(drift));
            }
            cur = p;
        }
    }
    Ok(cur)
}

/// Integrates `F' = F η` along a line of equally spaced samples, starting from `base`.
pub fn integrate_line(samples: &[DMatrix<f64>], h: f64, base: &DMatrix<f64>, opts: &IntegrateOptions) -> Result<Vec<DMatrix<f64>>> {
    let line = LineView::new(samples.iter().collect(), None, h);
    let mut out = vec![base.clone()];
    for i in 0..samples.len() - 1 {
        let next = advance(&out[i], &line, i, opts.substeps, Some(opts.drift_bound))?;
        out.push(next);
    }
    Ok(out)
}

/// Plaquette holonomies of `η`.
#[derive(Clone, Debug, Serialize)]
pub struct HolonomyReport {
    /// `(corner, axis i, axis j, ‖loop product − I‖)`.
    pub plaquettes: Vec<(usize, usize, usize, f64)>,
    pub max: f64,
    /// Largest holonomy divided by the plaquette area.
    pub max_ratio: f64,
}

fn edge(eta: &EtaForm, idx: &[usize], axis: usize, substeps: usize) -> DMatrix<f64> {
    let d = 2 * eta.n + 2;
    let line = eta.line(idx, axis);
    advance(&DMatrix::identity(d, d), &line, idx[axis], substeps, None).expect("no projection")
}

pub fn holonomy_residual(eta: &EtaForm, substeps: usize) -> HolonomyReport {
    let g = &eta.grid;
    let mut plaquettes = Vec::new();
    let (mut max, mut max_ratio) = (0.0f64, 0.0f64);
    for flat in 0..g.len() {
        let idx = g.index(flat);
        for i in 0..g.dim() {
            for j in i + 1..g.dim() {
                if idx[i] + 1 >= g.counts[i] || idx[j] + 1 >= g.counts[j] {
                    continue;
                }
                let mut ii = idx.clone();
                ii[i] += 1;
                let mut jj = idx.clone();
                jj[j] += 1;
                let a = edge(eta, &idx, i, substeps) * edge(eta, &ii, j, substeps);
                let b = edge(eta, &idx, j, substeps) * edge(eta, &jj, i, substeps);
                let r = (a - b).amax();
                let area = g.step(i) * g.step(j);
                max = max.max(r);
                max_ratio = max_ratio.max(r / area);
                plaquettes.push((flat, i, j, r));
            }
        }
    }
    HolonomyReport { plaquettes, max, max_ratio }
}

/// Frames obtained by integrating `η` from the grid corner.
#[derive(Clone, Debug)]
pub struct FrameSolution {
    pub n: usize,
    pub grid: Grid,
    pub frames: Vec<PSHElement>,
    pub base: PSHElement,
    pub substeps: usize,
    pub method: &'static str,
    /// Largest plaquette holonomy over plaquette area, when checked before integrating.
    pub holonomy_ratio: Option<f64>,
}

impl FrameSolution {
    pub fn positions(&self) -> Vec<HPoint> {
        self.frames.iter().map(|f| f.translation_part()).collect()
    }
}

/// The grid point preceding `flat` on its axis-ordered path from the corner, with the axis.
fn predecessor(grid: &Grid, flat: usize) -> Option<(usize, usize)> {
    let mut idx = grid.index(flat);
    for a in (0..grid.dim()).rev() {
        if idx[a] > 0 {
            idx[a] -= 1;
            return Some((grid.flat(&idx), a));
        }
    }
    None
}

pub fn integrate_frame(eta: &EtaForm, base: &PSHElement, opts: &IntegrateOptions) -> Result<FrameSolution> {
    let mut holonomy_ratio = None;
    if opts.check_integrability {
        let hol = holonomy_residual(eta, opts.substeps);
        if hol.max_ratio > opts.threshold {
            return Err(Error::IntegrabilityFailure { holonomy: hol.max_ratio, threshold: opts.threshold });
        }
        holonomy_ratio = Some(hol.max_ratio);
    }
    let g = &eta.grid;
    let mut frames: Vec<DMatrix<f64>> = Vec::with_capacity(g.len());
    frames.push(base.mat.clone());
    for flat in 1..g.len() {
        let (prev, axis) = predecessor(g, flat).expect("not the corner");
        let pidx = g.index(prev);
        let line = eta.line(&pidx, axis);
        let f = advance(&frames[prev], &line, pidx[axis], opts.substeps, Some(opts.drift_bound))?;
        frames.push(f);
    }
    Ok(FrameSolution {
        n: eta.n,
        grid: g.clone(),
        frames: frames.into_iter().map(|m| PSHElement { n: eta.n, mat: m }).collect(),
        base: base.clone(),
        substeps: opts.substeps,
        method: "RK4",
        holonomy_ratio,
    })
}

/// `g = f₂(base)·f₁(base)⁻¹` and `max_u ‖f₂(u) − g·f₁(u)‖`.
pub fn congruence(f1: &[PSHElement], f2: &[PSHElement]) -> Result<(PSHElement, f64)> {
    if f1.len() != f2.len() || f1.is_empty() {
        return Err(Error::Shape("frame fields live on different grids".into()));
    }
    let g = f2[0].mul(&f1[0].inverse());
    let r = f1.iter().zip(f2).map(|(a, b)| (&g.mul(a).mat - &b.mat).amax()).fold(0.0, f64::max);
    Ok((g, r))
}

pub fn embed(eta: &EtaForm, base: &PSHElement, opts: &IntegrateOptions) -> Result<Vec<HPoint>> {
    Ok(integrate_frame(eta, base, opts)?.positions())
}

fn retarget(j: &Jet, lay: &'static Layout) -> Jet {
    let c: Vec<f64> = lay.monomials().iter().map(|a| j.coeff(a)).collect();
    Jet::from_coeffs(lay, &c)
}

/// Jets of `G` with `G(0) = I` and `∂_iG = G η_i`, from the jets of `η_i`.
pub fn local_frame_jets(eta: &[Mat<Jet>], order: usize) -> Mat<Jet> {
    let d = eta.len();
    let size = eta[0].rows;
    let lay = layout(d, order);
    let eta_t: Vec<Mat<Jet>> = eta
        .iter()
        .map(|m| {
            let mut o = Mat::zeros(size, size);
            for r in 0..size {
                for c in 0..size {
                    o[(r, c)] = retarget(&m[(r, c)], lay);
                }
            }
            o
        })
        .collect();
    let mut g: Mat<Jet> = Mat::zeros(size, size);
    for r in 0..size {
        g[(r, r)] = Jet::constant_in(lay, 1.0);
    }
    for _ in 0..order {
        let prods: Vec<Mat<Jet>> = eta_t.iter().map(|e| g.mul(e)).collect();
        let mut next: Mat<Jet> = Mat::zeros(size, size);
        for r in 0..size {
            for c in 0..size {
                let coeffs: Vec<f64> = lay
                    .monomials()
                    .iter()
                    .map(|beta| match beta.iter().position(|&b| b > 0) {
                        None => {
                            if r == c {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Some(i) => {
                            let mut alpha = beta.clone();
                            alpha[i] -= 1;
                            prods[i][(r, c)].coeff(&alpha) / beta[i] as f64
                        }
                    })
                    .collect();
                next[(r, c)] = Jet::from_coeffs(lay, &coeffs);
            }
        }
        g = next;
    }
    g
}

/// An immersion known only through coordinate jets at the points of a grid.
pub struct JetSurface {
    pub n: usize,
    pub m: usize,
    pub grid: Grid,
    pub chart: Vec<(f64, f64)>,
    pub label: String,
    pub jets: Vec<Vec<Jet>>,
}

impl JetSurface {
    fn locate(&self, u: &[f64]) -> Option<usize> {
        let idx: Vec<usize> = (0..self.grid.dim())
            .map(|a| ((u[a] - self.grid.lo[a]) / self.grid.step(a)).round().max(0.0) as usize)
            .collect();
        if idx.iter().zip(&self.grid.counts).any(|(i, c)| i >= c) {
            return None;
        }
        let p = self.grid.point(&idx);
        let close = p.iter().zip(u).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        close.then(|| self.grid.flat(&idx))
    }
}

impl SurfaceMap for JetSurface {
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
        let k = self.locate(u).ok_or_else(|| Error::OutOfChart(u.to_vec()))?;
        Ok(self.jets[k].iter().map(|j| j.value()).collect())
    }
    fn ad_jet(&self, u: &[f64], order: usize) -> Option<Result<Vec<Jet>>> {
        let k = match self.locate(u) {
            Some(k) => k,
            None => return Some(Err(Error::OutOfChart(u.to_vec()))),
        };
        let lay = layout(self.grid.dim(), order);
        Some(Ok(self.jets[k].iter().map(|j| retarget(j, lay)).collect()))
    }
}

/// Largest pointwise differences of the headline invariants between two fields.
#[derive(Clone, Debug, Default, Serialize)]
pub struct FieldDiff {
    pub nu: f64,
    pub h: f64,
    pub torsion: f64,
    pub scalar: f64,
}

impl FieldDiff {
    pub fn max(&self) -> f64 {
        self.nu.max(self.h).max(self.torsion).max(self.scalar)
    }
}

pub fn field_diff(a: &[InvariantPoint], b: &[InvariantPoint]) -> FieldDiff {
    let mut d = FieldDiff::default();
    for (p, q) in a.iter().zip(b) {
        d.nu = d.nu.max((p.nu_norm - q.nu_norm).abs());
        d.h = d.h.max((p.h_norm2().sqrt() - q.h_norm2().sqrt()).abs());
        d.torsion = d.torsion.max((p.torsion_norm2().sqrt() - q.torsion_norm2().sqrt()).abs());
        d.scalar = d.scalar.max((p.scalar - q.scalar).abs());
    }
    d
}

#[derive(Clone, Debug)]
pub struct RoundTrip {
    pub reconstruction: Reconstruction,
    pub rebuilt: InvariantField,
    pub diff: FieldDiff,
}

/// A submanifold rebuilt from its own intrinsic data.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub original: InvariantField,
    /// Darboux frames of the input, for the congruence comparison.
    pub original_frames: Vec<PSHElement>,
    pub eta: EtaForm,
    pub solution: FrameSolution,
    /// `max ‖f_integrated − g·f_original‖` for the constant `g` fixed at the base point.
    pub congruence_residual: f64,
    /// First column of the local frame jets `G`, per point.
    columns: Vec<Vec<Jet>>,
}

impl Reconstruction {
    /// Coordinate jets of the rebuilt immersion, to third order.
    pub fn surface(&self, chart: &[(f64, f64)], label: &str) -> JetSurface {
        let n = self.original.n;
        let jets = self
            .solution
            .frames
            .iter()
            .zip(&self.columns)
            .map(|(f, col)| {
                (1..2 * n + 2)
                    .map(|r| {
                        let mut acc = Jet::constant_in(col[0].layout().expect("jet layout"), 0.0);
                        for (k, c) in col.iter().enumerate() {
                            acc += c.clone() * f.mat[(r, k)];
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        JetSurface { n, m: self.original.m, grid: self.original.grid.clone(), chart: chart.to_vec(), label: label.into(), jets }
    }
}

/// Extract invariants with their jets, assemble `η`, and integrate frames from the identity.
pub fn reconstruct(s: &dyn SurfaceMap, grid: &Grid, opts: &FrameOptions, iopts: &IntegrateOptions) -> Result<Reconstruction> {
    if opts.mode != DerivMode::Ad {
        return Err(Error::InvalidArgument("reconstruction needs AD jets".into()));
    }
    let (n, m) = (s.n(), s.m());
    let src = FrameOptions { order: opts.order.max(AXIS_DERIV_ORDER + 2), ..opts.clone() };
    let sw = sweep(s, grid, &src, |pf| {
        let (point, data) = invariants_with_intrinsic(pf, &src)?;
        let eta = assemble_slots(&data);
        let g = local_frame_jets(&eta, 3);
        let col: Vec<Jet> = (0..2 * n + 2).map(|r| g[(r, 0)].clone()).collect();
        Ok((point, slot_samples(&eta, AXIS_DERIV_ORDER), col, pf.f.value()))
    })?;
    let mut points = Vec::with_capacity(grid.len());
    let mut slots = Vec::with_capacity(grid.len());
    let mut derivs = Vec::with_capacity(grid.len());
    let mut columns = Vec::with_capacity(grid.len());
    let mut original_frames = Vec::with_capacity(grid.len());
    for ((p, (e, de), c, f), gauge) in sw.items.into_iter().zip(&sw.gauges) {
        original_frames.push(PSHElement { n, mat: f });
        points.push(InvariantPoint { gauge: *gauge, ..p });
        slots.push(e);
        derivs.push(de);
        columns.push(c);
    }
    let original = InvariantField { n, m, grid: grid.clone(), mode: opts.mode, seeds: sw.seeds, continuity: sw.continuity, points };
    let eta = EtaForm { n, grid: grid.clone(), slots, axis_derivs: Some(derivs), provenance: Provenance::Assembled };
    let solution = integrate_frame(&eta, &PSHElement::identity(n), iopts)?;
    let (_, congruence_residual) = congruence(&original_frames, &solution.frames)?;
    Ok(Reconstruction { original, original_frames, eta, solution, congruence_residual, columns })
}

/// Reconstruct, then extract the invariants of the rebuilt immersion and compare.
pub fn round_trip(s: &dyn SurfaceMap, grid: &Grid, opts: &FrameOptions, iopts: &IntegrateOptions) -> Result<RoundTrip> {
    let rec = reconstruct(s, grid, opts, iopts)?;
    let surf = rec.surface(s.chart(), &format!("{}-rebuilt", s.label()));
    let rebuilt = crate::invariants::extract(&surf, grid, &FrameOptions { order: 3, ..opts.clone() })?;
    let diff = field_diff(&rec.original.points, &rebuilt.points);
    Ok(RoundTrip { diff, rebuilt, reconstruction: rec })
}

/// Closed-form frame `exp(φ(s) η)` for a constant algebra element `η`.
pub fn exp_curve(eta: &DMatrix<f64>, phi: f64) -> DMatrix<f64> {
    (eta * phi).exp()
}

/// `η` value of the rotating horizontal curve in `H_1`: `ω^1 = 1`, `ω_1^1 = 0`, `ω_1^2 = κ`.
pub fn rotating_curve_eta(kappa: f64) -> DMatrix<f64> {
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -kappa, kappa, 0.0]);
    crate::psh::AlgebraValue::from_parts(&[1.0, 0.0, 0.0], &rot).mat
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darboux::{darboux_derivative, darboux_frame};
    use crate::dsl::parse_builtin_spec;
    use crate::psh::random_element;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_error(h: f64, curved: bool) -> f64 {
        let eta = rotating_curve_eta(1.3);
        let len = 1.0;
        let k = (len / h).round() as usize;
        // η(s) = φ'(s) η₀ with φ = s (constant) or φ = s + s²/2.
        let phi = |s: f64| if curved { s + s * s / 2.0 } else { s };
        let dphi = |s: f64| if curved { 1.0 + s } else { 1.0 };
        let samples: Vec<DMatrix<f64>> = (0..=k).map(|i| &eta * dphi(i as f64 * h)).collect();
        let opts = IntegrateOptions { substeps: 1, ..IntegrateOptions::default() };
        let f = integrate_line(&samples, h, &DMatrix::identity(4, 4), &opts).unwrap();
        (f.last().unwrap() - exp_curve(&eta, phi(len))).amax()
    }

    #[test]
    fn integrator_is_fourth_order() {
        for curved in [false, true] {
            let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&h| line_error(h, curved)).collect();
            for w in e.windows(2) {
                let p = (w[0] / w[1]).log2();
                assert!((p - 4.0).abs() < 0.5, "curved={curved} errors {e:?}");
            }
        }
    }

    #[test]
    fn zero_form_gives_constant_frames() {
        let grid = Grid::new(&[(0.0, 1.0); 3], &[3, 3, 3]).unwrap();
        let eta = EtaForm::zero(1, &grid);
        assert_eq!(holonomy_residual(&eta, 1).max, 0.0);
        let sol = integrate_frame(&eta, &PSHElement::identity(1), &IntegrateOptions::default()).unwrap();
        assert!(sol.frames.iter().all(|f| (&f.mat - DMatrix::identity(4, 4)).amax() == 0.0));
    }

    #[test]
    fn sphere_frames_are_reproduced() {
        let imm = parse_builtin_spec("sphere(2,1)").unwrap();
        let grid = imm.grid(&[9, 9, 9]).unwrap();
        let field = darboux_frame(&imm, &grid, &FrameOptions::default()).unwrap();
        let eta = EtaForm::from_mc(&darboux_derivative(&field));
        let hol = holonomy_residual(&eta, 4);
        assert!(hol.max < 1e-6, "{}", hol.max);
        let base = PSHElement { n: 2, mat: field.points[0].f.clone() };
        let opts = IntegrateOptions { check_integrability: false, ..IntegrateOptions::default() };
        let sol = integrate_frame(&eta, &base, &opts).unwrap();
        let orig: Vec<PSHElement> = field.points.iter().map(|p| PSHElement { n: 2, mat: p.f.clone() }).collect();
        let (g, r) = congruence(&orig, &sol.frames).unwrap();
        assert!((g.mat - DMatrix::identity(6, 6)).amax() < 1e-14);
        assert!(r < 1e-5, "{r}");
    }

    #[test]
    fn perturbed_form_is_not_integrable() {
        let imm = parse_builtin_spec("sphere(2,1)").unwrap();
        let grid = imm.grid(&[5, 5, 5]).unwrap();
        let field = darboux_frame(&imm, &grid, &FrameOptions::default()).unwrap();
        let mut eta = EtaForm::from_mc(&darboux_derivative(&field));
        for s in eta.slots.iter_mut() {
            s[0][(1, 0)] += 0.3;
            s[1][(2, 1)] += 0.2;
            s[1][(1, 2)] -= 0.2;
            s[1][(4, 3)] += 0.2;
            s[1][(3, 4)] -= 0.2;
        }
        let hol = holonomy_residual(&eta, 2);
        assert!(hol.max_ratio > 1e-2);
        let err = integrate_frame(&eta, &PSHElement::identity(2), &IntegrateOptions::default()).unwrap_err();
        assert!(matches!(err, Error::IntegrabilityFailure { .. }));
    }

    #[test]
    fn left_invariance_and_congruence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let imm = parse_builtin_spec("holograph").unwrap();
        let grid = imm.grid(&[5, 5, 5]).unwrap();
        let field = darboux_frame(&imm, &grid, &FrameOptions::default()).unwrap();
        let eta = darboux_eta(&imm, &grid, &FrameOptions::default()).unwrap();
        let opts = IntegrateOptions { check_integrability: false, ..IntegrateOptions::default() };
        let base = PSHElement { n: 2, mat: field.points[0].f.clone() };
        let g = random_element(2, 1.0, &mut rng);
        let a = integrate_frame(&eta, &base, &opts).unwrap();
        let b = integrate_frame(&eta, &g.mul(&base), &opts).unwrap();
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert!((&g.mul(x).mat - &y.mat).amax() < 1e-10);
        }
        let (found, r) = congruence(&a.frames, &b.frames).unwrap();
        assert!((found.mat - g.mat).amax() < 1e-10 && r < 1e-10);
    }

    #[test]
    fn assembled_eta_equals_darboux_derivative() {
        for spec in ["sphere(2,1)", "holograph", "siegel_quadric", "holograph(1,1,1)"] {
            let imm = parse_builtin_spec(spec).unwrap();
            let grid = imm.grid(&vec![3; imm.dim()]).unwrap();
            let opts = FrameOptions::default();
            let field = crate::invariants::extract(&imm, &grid, &opts).unwrap();
            let eta = assemble_eta(&field).unwrap();
            let mc = darboux_derivative(&darboux_frame(&imm, &grid, &opts).unwrap());
            for (a, b) in eta.slots.iter().zip(&mc.slots) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - &y.mat).amax() < 1e-10, "{spec}: {}", (x - &y.mat).amax());
                }
            }
        }
    }

    #[test]
    fn assembled_jets_match_frame_jets() {
        for spec in ["siegel_quadric", "sphere(2,1)"] {
            let imm = parse_builtin_spec(spec).unwrap();
            let grid = imm.grid(&[3, 3, 3]).unwrap();
            let opts = FrameOptions { order: AXIS_DERIV_ORDER + 2, ..FrameOptions::default() };
            let reference = darboux_eta(&imm, &grid, &opts).unwrap();
            let rd = reference.axis_derivs.as_ref().unwrap();
            let sw = sweep(&imm, &grid, &opts, |pf| {
                let (_, data) = invariants_with_intrinsic(pf, &opts)?;
                Ok(slot_samples(&assemble_slots(&data), AXIS_DERIV_ORDER))
            })
            .unwrap();
            for (p, (v, d)) in sw.items.iter().enumerate() {
                for i in 0..3 {
                    assert!((&v[i] - &reference.slots[p][i]).amax() < 1e-12);
                    for r in 0..AXIS_DERIV_ORDER {
                        assert!((&d[i][r] - &rd[p][i][r]).amax() < 1e-10, "{spec} order {}", r + 1);
                    }
                }
            }
        }
    }

    #[test]
    fn round_trip_on_holograph() {
        let imm = parse_builtin_spec("holograph").unwrap();
        let grid = Grid::new(&[(0.0, 0.5), (-0.25, 0.25), (0.0, 0.5)], &[5, 5, 5]).unwrap();
        let rt = round_trip(&imm, &grid, &FrameOptions::default(), &IntegrateOptions::default()).unwrap();
        assert!(rt.diff.max() < 1e-5, "{:?}", rt.diff);
        assert!(rt.reconstruction.congruence_residual < 1e-6, "{}", rt.reconstruction.congruence_residual);
    }

    #[test]
    fn local_frame_jets_match_exponential() {
        let eta0 = rotating_curve_eta(0.7);
        let lay = layout(3, 3);
        let mut eta = Vec::new();
        for i in 0..3 {
            let s = if i == 0 { 1.0 } else { 0.0 };
            eta.push(Mat::from_f64(&(&eta0 * s)));
        }
        let _ = lay;
        let g = local_frame_jets(&eta, 3);
        let e = exp_curve(&eta0, 1.0);
        // Third-order Taylor coefficient of exp(sη) at s = 0 is η³/6.
        let c3 = &eta0 * &eta0 * &eta0 / 6.0;
        for r in 0..4 {
            for c in 0..4 {
                assert!((g[(r, c)].coeff(&[3, 0, 0]) - c3[(r, c)]).abs() < 1e-14);
            }
        }
        assert!(e.amax() > 0.0);
    }
}
