//! Pseudohermitian invariants of a submanifold: second fundamental form, normal
//! connection, the intrinsic Tanaka–Webster connection with its torsion and
//! curvature, and residuals of the identities tying ambient and intrinsic data.
//!
//! Forms are handled by their chart components and read off by evaluating on the
//! dual frame `Z_k = ½(ê_k − i ê_{m+k})`, `Z_k̄`, `T̂`. Two-forms use
//! `(α∧β)(V, W) = α(V)β(W) − α(W)β(V)` and `dα(V, W) = V^i W^j (∂_iα_j − ∂_jα_i)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cx::{Cx, C64};
use crate::darboux::{jrot, sweep, FrameOptions, GaugeUsed, PointFrame, Seeds};
use crate::dsl::Grid;
use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};
use crate::mat::{solve, Mat};
use crate::reconstruct::IntrinsicData;
use crate::surface::{DerivMode, SurfaceMap};

type CJ = Cx<Jet>;

/// Below this `|ν|` a point counts as vertical.
pub const VERTICAL_TOL: f64 = 1e-9;
/// Nondegeneracy floor for `R_{pp̄pp̄}` in [`h_from_curvature`].
pub const DEGENERATE_TOL: f64 = 1e-6;

fn cz() -> CJ {
    Cx::new(Jet::cst(0.0), Jet::cst(0.0))
}

fn cr(v: Jet) -> CJ {
    Cx::new(v, Jet::cst(0.0))
}

fn ev(form: &[CJ], v: &[CJ]) -> CJ {
    let mut acc = cz();
    for (a, b) in form.iter().zip(v) {
        acc = acc + a.clone() * b.clone();
    }
    acc
}

fn vder(v: &[CJ], f: &CJ) -> CJ {
    let mut acc = cz();
    for (i, vi) in v.iter().enumerate() {
        acc = acc + vi.clone() * f.d(i);
    }
    acc
}

/// `dα` as the antisymmetric component matrix `∂_iα_j − ∂_jα_i`.
fn dform(form: &[CJ]) -> Vec<Vec<CJ>> {
    let d = form.len();
    (0..d).map(|i| (0..d).map(|j| form[j].d(i) - form[i].d(j)).collect()).collect()
}

fn ev2(f: &[Vec<CJ>], v: &[CJ], w: &[CJ]) -> CJ {
    let mut acc = cz();
    for (i, vi) in v.iter().enumerate() {
        let mut row = cz();
        for (j, wj) in w.iter().enumerate() {
            row = row + f[i][j].clone() * wj.clone();
        }
        acc = acc + vi.clone() * row;
    }
    acc
}

fn dform_val(form: &[CJ]) -> Vec<Vec<C64>> {
    let d = form.len();
    (0..d).map(|i| (0..d).map(|j| (form[j].d(i) - form[i].d(j)).value()).collect()).collect()
}

fn ev_val(form: &[C64], v: &[C64]) -> C64 {
    form.iter().zip(v).fold(C64::zero(), |acc, (a, b)| acc + *a * *b)
}

fn ev2_val(f: &[Vec<C64>], v: &[C64], w: &[C64]) -> C64 {
    let mut acc = C64::zero();
    for (i, vi) in v.iter().enumerate() {
        for (j, wj) in w.iter().enumerate() {
            acc = acc + *vi * *wj * f[i][j];
        }
    }
    acc
}

fn wedge_val(a: &[C64], b: &[C64], v: &[C64], w: &[C64]) -> C64 {
    ev_val(a, v) * ev_val(b, w) - ev_val(a, w) * ev_val(b, v)
}

fn vals(v: &[CJ]) -> Vec<C64> {
    v.iter().map(|c| c.value()).collect()
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Worst violation of each identity at one point.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PointResiduals {
    /// Consistency of the solved `Γ, A` with `dθ̂^k` on the remaining slot pairs.
    pub tanaka_webster: f64,
    /// The five pullback identities: `θ^j`, `θ^a`, `θ`, `θ_j^k`, `θ_j^a`.
    pub restriction: [f64; 5],
    pub h_symmetry: f64,
    pub normal_skew: f64,
    /// `R_{jl̄pq̄} + Σ_c h^c_{jp} conj(h^c_{lq}) − (δ_{jl}δ_{pq} + δ_{jq}δ_{lp})|ν|²`.
    pub gauss: f64,
    /// Curvature against `|ν|` and torsion (codimension one, non-vertical).
    pub curvature_torsion: Option<f64>,
    /// `|ν|²` recovered from `R` and `|A|²` (codimension one, non-vertical).
    pub nu_recovery: Option<f64>,
    /// `A_{kl} + Σ_a conj⟨ν,Z_a⟩ h^a_{kl}`.
    pub torsion_link: f64,
    /// `|ν|θ_n^n` against its intrinsic expression (codimension one, sphere gauge).
    pub theta_nn: Option<f64>,
    /// `Re h_{11,0}` (vertical, codimension one).
    pub h110_real: Option<f64>,
    pub ricci_hermitian: f64,
}

/// All invariants at one grid point.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantPoint {
    pub u: Vec<f64>,
    pub gauge: GaugeUsed,
    /// `h^a_{jk}`, indexed `[a − m][j][k]`.
    pub h: Vec<Vec<Vec<C64>>>,
    /// `θ_a^b` coefficients on `(θ̂^1..θ̂^m, θ̂^{1̄}..θ̂^{m̄}, θ̂)`, indexed `[a − m][b − m]`.
    pub normal_conn: Vec<Vec<Vec<C64>>>,
    pub nu_components: Vec<C64>,
    pub nu_norm: f64,
    /// `Γ_{jl}^k` as `[j][k][l]`.
    pub gamma_hol: Vec<Vec<Vec<C64>>>,
    /// `Γ_{jl̄}^k` as `[j][k][l]`.
    pub gamma_anti: Vec<Vec<Vec<C64>>>,
    /// `Γ_{j0}^k` as `[j][k]`.
    pub gamma0: Vec<Vec<C64>>,
    /// `A^j_{k̄}` as `[j][k]`.
    pub torsion: Vec<Vec<C64>>,
    /// `R_k^j_{pq̄}` as `[k][j][p][q]`.
    pub curv: Vec<Vec<Vec<Vec<C64>>>>,
    /// `W_k^j_p` as `[k][j][p]`.
    pub w_hol: Vec<Vec<Vec<C64>>>,
    /// `W^j_{kp̄}` as `[j][k][p]`.
    pub w_anti: Vec<Vec<Vec<C64>>>,
    /// `R_{kj̄}` as `[k][j]`.
    pub ricci: Vec<Vec<C64>>,
    pub scalar: f64,
    /// Chart components of `θ̂^k` as `[k][i]`.
    pub coframe: Vec<Vec<C64>>,
    /// Chart components of `θ̂`.
    pub coframe_t: Vec<f64>,
    /// `⟨∇⊥_{Ẑ_j}ν, Z_a⟩ = Ẑ_j⟨ν,Z_a⟩ + Σ_b ⟨ν,Z_b⟩θ_b^a(Ẑ_j)` as `[a − m][j]`.
    pub nu_deriv: Vec<Vec<C64>>,
    pub residuals: PointResiduals,
}

impl InvariantPoint {
    pub fn m(&self) -> usize {
        self.torsion.len()
    }

    /// Value-level intrinsic data for [`crate::reconstruct::assemble_eta`].
    pub fn intrinsic(&self, n: usize) -> IntrinsicData<f64> {
        IntrinsicData {
            n,
            m: self.m(),
            theta: self.coframe.clone(),
            theta0: self.coframe_t.clone(),
            gamma_hol: self.gamma_hol.clone(),
            gamma_anti: self.gamma_anti.clone(),
            gamma0: self.gamma0.clone(),
            h: self.h.clone(),
            nu_c: self.nu_components.clone(),
            nu2: self.nu_norm * self.nu_norm,
            normal: self.normal_conn.clone(),
            nu_deriv: self.nu_deriv.clone(),
        }
    }

    /// `‖II‖² = Σ |h^a_{jk}|²`.
    pub fn h_norm2(&self) -> f64 {
        self.h.iter().flatten().flatten().map(|c| c.norm_sqr()).sum()
    }

    /// `|A|² = Σ_{j,k} |A_{jk}|²`.
    pub fn torsion_norm2(&self) -> f64 {
        self.torsion.iter().flatten().map(|c| c.norm_sqr()).sum()
    }

    pub fn curv_max(&self) -> f64 {
        self.curv.iter().flatten().flatten().flatten().map(|c| c.abs()).fold(0.0, f64::max)
    }

    /// Largest eigenvalue of the hermitian matrix `R_{kj̄}`.
    pub fn ricci_max_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.ricci).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Eigenvalues of a hermitian matrix through its real form `[[Re, −Im], [Im, Re]]`
/// (each eigenvalue appears twice there; one copy is kept).
pub fn hermitian_eigenvalues(h: &[Vec<C64>]) -> Vec<f64> {
    let m = h.len();
    let big = DMatrix::from_fn(2 * m, 2 * m, |r, c| {
        let (i, j) = (r % m, c % m);
        let z = h[i][j];
        match (r < m, c < m) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let sym = (&big + big.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.into_iter().step_by(2).collect()
}

/// `|ν|² = (R + √(R² + 4m(m+1)|A|²)) / (2m(m+1))`.
pub fn nu_from_curvature(scalar: f64, torsion_norm2: f64, m: usize) -> f64 {
    let k = (m * (m + 1)) as f64;
    (scalar + (scalar * scalar + 4.0 * k * torsion_norm2).sqrt()) / (2.0 * k)
}

/// Second fundamental form of a vertical codimension-one surface from its curvature,
/// in the normal gauge where the pivot entry `h_{pp}` is real and positive.
pub fn h_from_curvature(curv: &[Vec<Vec<Vec<C64>>>], tol: f64) -> Result<Vec<Vec<C64>>> {
    let m = curv.len();
    let p = (0..m)
        .max_by(|&a, &b| curv[a][a][a][a].abs().total_cmp(&curv[b][b][b][b].abs()))
        .ok_or_else(|| Error::InvalidArgument("empty curvature tensor".into()))?;
    let rp = curv[p][p][p][p].re;
    if !(rp < -tol) {
        return Err(Error::DegeneratePoint { at: vec![] });
    }
    let hpp = (-rp).sqrt();
    Ok((0..m).map(|j| (0..m).map(|k| -curv[j][p][k][p].scale_f(1.0 / hpp)).collect()).collect())
}

struct Coframe {
    z: Vec<Vec<CJ>>,
    zb: Vec<Vec<CJ>>,
    t: Vec<CJ>,
    theta: Vec<Vec<CJ>>,
    theta0: Vec<CJ>,
}

fn coframe(pf: &PointFrame, cond_max: f64) -> Result<Coframe> {
    let (m, d) = (pf.m, pf.d());
    let vv = pf.dual.value();
    let sv = vv.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= cond_max) {
        return Err(Error::IllConditionedCoframe { at: pf.u.clone(), cond });
    }
    let c = solve(&pf.dual, &Mat::identity(d), 0.0)
        .ok_or_else(|| Error::IllConditionedCoframe { at: pf.u.clone(), cond: f64::INFINITY })?;
    let col = |k: usize| -> Vec<Jet> { (0..d).map(|i| pf.dual[(i, k)].clone()).collect() };
    let mut z = Vec::with_capacity(m);
    let mut zb = Vec::with_capacity(m);
    for k in 0..m {
        let (a, b) = (col(k), col(m + k));
        let v: Vec<CJ> = a.iter().zip(&b).map(|(x, y)| Cx::new(x.clone() * 0.5, -(y.clone() * 0.5))).collect();
        zb.push(v.iter().map(|c| c.conj()).collect());
        z.push(v);
    }
    let t: Vec<CJ> = col(2 * m).into_iter().map(cr).collect();
    let theta = (0..m).map(|k| (0..d).map(|i| Cx::new(c[(k, i)].clone(), c[(m + k, i)].clone())).collect()).collect();
    let theta0 = (0..d).map(|i| cr(c[(2 * m, i)].clone())).collect();
    Ok(Coframe { z, zb, t, theta, theta0 })
}

/// Ambient complex forms restricted to `M`.
struct Ambient {
    n: usize,
    omega: Vec<Mat<Jet>>,
}

impl Ambient {
    fn real(&self, row: usize, col: usize) -> Vec<Jet> {
        self.omega.iter().map(|w| w[(row, col)].clone()).collect()
    }
    fn cplx(&self, r1: usize, r2: usize, col: usize) -> Vec<CJ> {
        self.real(r1, col).into_iter().zip(self.real(r2, col)).map(|(a, b)| Cx::new(a, b)).collect()
    }
    /// `θ^β`.
    fn theta(&self, b: usize) -> Vec<CJ> {
        self.cplx(1 + b, 1 + self.n + b, 0)
    }
    /// `θ`.
    fn theta0(&self) -> Vec<CJ> {
        self.real(1 + 2 * self.n, 0).into_iter().map(cr).collect()
    }
    /// `θ_γ^β`.
    fn conn(&self, g: usize, b: usize) -> Vec<CJ> {
        self.cplx(1 + b, 1 + self.n + b, 1 + g)
    }
}

/// Computes every invariant and identity residual at one frame.
pub fn invariants_at(pf: &PointFrame, opts: &FrameOptions) -> Result<InvariantPoint> {
    compute(pf, opts).map(|r| r.0)
}

/// Invariants together with the intrinsic data as jets, for assembling `η` with derivatives.
pub fn invariants_with_intrinsic(pf: &PointFrame, opts: &FrameOptions) -> Result<(InvariantPoint, IntrinsicData<Jet>)> {
    compute(pf, opts)
}

fn compute(pf: &PointFrame, opts: &FrameOptions) -> Result<(InvariantPoint, IntrinsicData<Jet>)> {
    let (n, m, d) = (pf.n, pf.m, pf.d());
    let cf = coframe(pf, opts.coframe_cond)?;
    let (z, zb, t) = (&cf.z, &cf.zb, &cf.t);

    // Intrinsic Tanaka–Webster connection and torsion.
    let dth: Vec<Vec<Vec<CJ>>> = cf.theta.iter().map(|f| dform(f)).collect();
    let mut gamma_anti = vec![vec![vec![cz(); m]; m]; m];
    let mut gamma0 = vec![vec![cz(); m]; m];
    let mut torsion = vec![vec![cz(); m]; m];
    for k in 0..m {
        for j in 0..m {
            for l in 0..m {
                gamma_anti[j][k][l] = ev2(&dth[k], &z[j], &zb[l]);
            }
            gamma0[j][k] = ev2(&dth[k], &z[j], t);
            torsion[k][j] = -ev2(&dth[k], &zb[j], t);
        }
    }
    let gamma_hol: Vec<Vec<Vec<CJ>>> =
        (0..m).map(|j| (0..m).map(|k| (0..m).map(|l| -gamma_anti[k][j][l].conj()).collect()).collect()).collect();
    let mut tw: f64 = 0.0;
    for k in 0..m {
        for p in 0..m {
            for q in 0..m {
                let lhs = gamma_hol[p][k][q].value() - gamma_hol[q][k][p].value();
                tw = tw.max((lhs - ev2(&dth[k], &z[p], &z[q]).value()).abs());
                tw = tw.max(ev2(&dth[k], &zb[p], &zb[q]).value().abs());
            }
            tw = tw.max((gamma0[k][p].value() + gamma0[p][k].value().conj()).abs());
            tw = tw.max((torsion[k][p].value() - torsion[p][k].value()).abs());
        }
    }

    // Connection forms θ̂_j^k and their curvature.
    let conn_form = |j: usize, k: usize| -> Vec<CJ> {
        (0..d)
            .map(|i| {
                let mut acc = gamma0[j][k].clone() * cf.theta0[i].clone();
                for l in 0..m {
                    acc = acc
                        + gamma_hol[j][k][l].clone() * cf.theta[l][i].clone()
                        + gamma_anti[j][k][l].clone() * cf.theta[l][i].conj();
                }
                acc
            })
            .collect()
    };
    let hat_conn: Vec<Vec<Vec<CJ>>> = (0..m).map(|j| (0..m).map(|k| conn_form(j, k)).collect()).collect();
    let hat_conn_v: Vec<Vec<Vec<C64>>> = hat_conn.iter().map(|r| r.iter().map(|f| vals(f)).collect()).collect();
    let (zv, zbv, tv): (Vec<Vec<C64>>, Vec<Vec<C64>>, Vec<C64>) =
        (z.iter().map(|v| vals(v)).collect(), zb.iter().map(|v| vals(v)).collect(), vals(t));
    let mut curv = vec![vec![vec![vec![C64::zero(); m]; m]; m]; m];
    let mut w_hol = vec![vec![vec![C64::zero(); m]; m]; m];
    let mut w_anti = vec![vec![vec![C64::zero(); m]; m]; m];
    for k in 0..m {
        for j in 0..m {
            let dc = dform_val(&hat_conn[k][j]);
            let omega = |v: &[C64], w: &[C64]| -> C64 {
                let mut acc = ev2_val(&dc, v, w);
                for l in 0..m {
                    acc = acc - wedge_val(&hat_conn_v[k][l], &hat_conn_v[l][j], v, w);
                }
                acc
            };
            for p in 0..m {
                for q in 0..m {
                    curv[k][j][p][q] = omega(&zv[p], &zbv[q]);
                }
                w_hol[k][j][p] = omega(&zv[p], &tv);
                w_anti[j][k][p] = -omega(&zbv[p], &tv);
            }
        }
    }
    let ricci: Vec<Vec<C64>> =
        (0..m).map(|k| (0..m).map(|j| (0..m).fold(C64::zero(), |acc, l| acc + curv[k][j][l][l])).collect()).collect();
    let scalar_c = (0..m).fold(C64::zero(), |acc, k| acc + ricci[k][k]);
    let mut ricci_herm: f64 = scalar_c.im.abs();
    for k in 0..m {
        for j in 0..m {
            ricci_herm = ricci_herm.max((ricci[k][j] - ricci[j][k].conj()).abs());
        }
    }

    // Ambient side.
    let amb = Ambient { n, omega: pf.omega.clone() };
    let nu_c: Vec<CJ> = (m..n)
        .map(|a| {
            let e = &pf.legs[a];
            let je = jrot(e);
            let mut re = Jet::cst(0.0);
            let mut im = Jet::cst(0.0);
            for r in 0..2 * n {
                re += pf.nu[r].clone() * e[r].clone();
                im += pf.nu[r].clone() * je[r].clone();
            }
            Cx::new(re, im)
        })
        .collect();
    let nu2: Jet = pf.nu.iter().fold(Jet::cst(0.0), |acc, c| acc + c.clone() * c.clone());
    let nu_norm = nu2.value().sqrt();
    let th0_amb = amb.theta0();
    let mut inc = [0.0f64; 5];
    let slots: Vec<(&Vec<CJ>, usize)> =
        z.iter().map(|v| (v, 0)).chain(zb.iter().map(|v| (v, 1))).chain(std::iter::once((t, 2))).collect();
    let upd = |r: &mut f64, v: C64| *r = r.max(v.abs());
    for j in 0..m {
        let f = amb.theta(j);
        for (s, (v, kind)) in slots.iter().enumerate() {
            let expect = if *kind == 0 && s == j { 1.0 } else { 0.0 };
            upd(&mut inc[0], ev(&f, v).value() - C64::real(expect));
        }
    }
    for (ai, a) in (m..n).enumerate() {
        let f = amb.theta(a);
        for (v, kind) in &slots {
            let expect = if *kind == 2 { nu_c[ai].value() } else { C64::zero() };
            upd(&mut inc[1], ev(&f, v).value() - expect);
        }
    }
    for (v, kind) in &slots {
        let expect = if *kind == 2 { 1.0 } else { 0.0 };
        upd(&mut inc[2], ev(&th0_amb, v).value() - C64::real(expect));
    }
    for j in 0..m {
        for k in 0..m {
            let f = amb.conn(j, k);
            for (v, _) in &slots {
                let vv = vals(v);
                let extra = C64::new(0.0, delta(j, k) * nu2.value()) * ev_val(&vals(&cf.theta0), &vv);
                upd(&mut inc[3], ev(&f, v).value() - ev_val(&hat_conn_v[j][k], &vv) - extra);
            }
        }
    }
    let mut h = vec![vec![vec![C64::zero(); m]; m]; n - m];
    let mut h_jet = vec![vec![vec![cz(); m]; m]; n - m];
    let mut nu_deriv = vec![vec![cz(); m]; n - m];
    let normal_conn_forms: Vec<Vec<Vec<CJ>>> = (m..n).map(|a| (m..n).map(|b| amb.conn(a, b)).collect()).collect();
    for (ai, a) in (m..n).enumerate() {
        for j in 0..m {
            let f = amb.conn(j, a);
            for k in 0..m {
                h_jet[ai][j][k] = ev(&f, &z[k]);
                h[ai][j][k] = h_jet[ai][j][k].value();
                let expect = C64::new(0.0, delta(j, k)) * nu_c[ai].value();
                upd(&mut inc[4], ev(&f, &zb[k]).value() - expect);
            }
            let mut expect_t = vder(&z[j], &nu_c[ai]);
            let mut expect_bar = vder(&zb[j], &nu_c[ai]);
            for (bi, _) in (m..n).enumerate() {
                expect_t = expect_t + nu_c[bi].clone() * ev(&normal_conn_forms[bi][ai], &z[j]);
                expect_bar = expect_bar + nu_c[bi].clone() * ev(&normal_conn_forms[bi][ai], &zb[j]);
            }
            upd(&mut inc[4], ev(&f, t).value() - expect_t.value());
            nu_deriv[ai][j] = expect_t;
            upd(&mut inc[4], expect_bar.value());
        }
    }
    let mut h_sym: f64 = 0.0;
    for hb in &h {
        for j in 0..m {
            for k in 0..m {
                h_sym = h_sym.max((hb[j][k] - hb[k][j]).abs());
            }
        }
    }
    let mut normal_skew: f64 = 0.0;
    let normal_jets: Vec<Vec<Vec<CJ>>> = normal_conn_forms
        .iter()
        .map(|row| row.iter().map(|f| slots.iter().map(|(v, _)| ev(f, v)).collect()).collect())
        .collect();
    let normal_conn: Vec<Vec<Vec<C64>>> = to_v3(&normal_jets);
    for a in 0..n - m {
        for b in 0..n - m {
            let (x, y) = (&normal_conn[a][b], &normal_conn[b][a]);
            for s in 0..m {
                normal_skew = normal_skew.max((x[s] + y[m + s].conj()).abs());
            }
            normal_skew = normal_skew.max((x[2 * m] + y[2 * m].conj()).abs());
        }
    }

    let mut gauss: f64 = 0.0;
    for j in 0..m {
        for l in 0..m {
            for p in 0..m {
                for q in 0..m {
                    let s = (0..n - m).fold(C64::zero(), |acc, c| acc + h[c][j][p] * h[c][l][q].conj())
                        - C64::new((delta(j, l) * delta(p, q) + delta(j, q) * delta(l, p)) * nu2.value(), 0.0);
                    gauss = gauss.max((curv[j][l][p][q] + s).abs());
                }
            }
        }
    }
    let torsion_v: Vec<Vec<C64>> = torsion.iter().map(|r| vals(r)).collect();
    let a2: f64 = torsion_v.iter().flatten().map(|c| c.norm_sqr()).sum();
    let mut link: f64 = 0.0;
    for k in 0..m {
        for l in 0..m {
            let s = (0..n - m).fold(C64::zero(), |acc, a| acc + nu_c[a].value().conj() * h[a][k][l]);
            link = link.max((torsion_v[k][l].conj() + s).abs());
        }
    }
    let codim_one_nv = n == m + 1 && nu_norm > VERTICAL_TOL;
    let (mut curvature_torsion, mut nu_recovery, mut theta_nn, mut h110_real) = (None, None, None, None);
    if codim_one_nv {
        let nn2 = nu2.value();
        let mut r15: f64 = 0.0;
        for k in 0..m {
            for j in 0..m {
                for l in 0..m {
                    for q in 0..m {
                        let model = C64::real(delta(j, k) * delta(l, q) * nn2 + delta(j, l) * delta(k, q) * nn2)
                            - torsion_v[k][l].conj() * torsion_v[j][q].scale_f(1.0 / nn2);
                        r15 = r15.max((curv[k][j][l][q] - model).abs());
                    }
                }
            }
        }
        curvature_torsion = Some(r15);
        nu_recovery = Some((nu_from_curvature(scalar_c.re, a2, m) - nn2).abs());
        if pf.gauge == GaugeUsed::Sphere {
            theta_nn = Some(theta_nn_residual(&cf, &gamma_anti, &nu2, a2, &normal_conn_forms[0][0], m));
        }
    }
    if n == m + 1 && nu_norm <= VERTICAL_TOL {
        // h_{jk,0} = T̂h − θ_j^l(T̂)h_{lk} − θ_k^l(T̂)h_{jl} + θ_n^n(T̂)h_{jk}, at j = k = 1.
        let hh = &h_jet[0];
        let tc = |a: usize, b: usize| ev(&amb.conn(a, b), t).value();
        let mut v = vder(t, &hh[0][0]).value() + ev(&normal_conn_forms[0][0], t).value() * hh[0][0].value();
        for l in 0..m {
            v = v - tc(0, l) * hh[l][0].value() - tc(0, l) * hh[0][l].value();
        }
        h110_real = Some(v.re.abs());
    }

    let point = InvariantPoint {
        u: pf.u.clone(),
        gauge: pf.gauge,
        h,
        normal_conn,
        nu_components: vals(&nu_c),
        nu_norm,
        gamma_hol: to_v3(&gamma_hol),
        gamma_anti: to_v3(&gamma_anti),
        gamma0: gamma0.iter().map(|r| vals(r)).collect(),
        torsion: torsion_v,
        curv,
        w_hol,
        w_anti,
        ricci,
        scalar: scalar_c.re,
        residuals: PointResiduals {
            tanaka_webster: tw,
            restriction: inc,
            h_symmetry: h_sym,
            normal_skew,
            gauss,
            curvature_torsion,
            nu_recovery,
            torsion_link: link,
            theta_nn,
            h110_real,
            ricci_hermitian: ricci_herm,
        },
        coframe: cf.theta.iter().map(|r| vals(r)).collect(),
        coframe_t: cf.theta0.iter().map(|c| c.value().re).collect(),
        nu_deriv: nu_deriv.iter().map(|r| vals(r)).collect(),
    };
    let data = IntrinsicData {
        n,
        m,
        theta: cf.theta.clone(),
        theta0: cf.theta0.iter().map(|c| c.re.clone()).collect(),
        gamma_hol,
        gamma_anti,
        gamma0,
        h: h_jet,
        nu_c,
        nu2,
        normal: normal_jets,
        nu_deriv,
    };
    Ok((point, data))
}

fn to_v3(x: &[Vec<Vec<CJ>>]) -> Vec<Vec<Vec<C64>>> {
    x.iter().map(|r| r.iter().map(|c| vals(c)).collect()).collect()
}

/// Compares `|ν|θ_n^n` with `∂̂_b|ν| − ∂̄̂_b|ν| − i Im(b_nn) θ̂`, where
/// `Im b_nn = [2Σ|ν|_{jj̄} − i T̂|ν| − 2Σ|Z_j|ν||²/|ν| + |A|²/|ν|]/m − |ν|³`.
fn theta_nn_residual(cf: &Coframe, gamma_anti: &[Vec<Vec<CJ>>], nu2: &Jet, a2: f64, theta_nn: &[CJ], m: usize) -> f64 {
    let nn = cr(nu2.sqrt());
    let nv = nn.value().re;
    let zn: Vec<CJ> = cf.z.iter().map(|v| vder(v, &nn)).collect();
    let mut lap = C64::zero();
    for j in 0..m {
        lap = lap + vder(&cf.zb[j], &zn[j]).value();
        for k in 0..m {
            lap = lap - gamma_anti[j][k][j].value() * zn[k].value();
        }
    }
    let grad2: f64 = zn.iter().map(|c| c.value().norm_sqr()).sum();
    let tn = vder(&cf.t, &nn).value();
    let imb = (lap.scale_f(2.0) - C64::i() * tn + C64::real(-2.0 * grad2 / nv + a2 / nv)).scale_f(1.0 / m as f64)
        - C64::real(nv * nv * nv);
    let mut r: f64 = 0.0;
    for l in 0..m {
        r = r.max((ev(theta_nn, &cf.z[l]).value().scale_f(nv) - zn[l].value()).abs());
        r = r.max((ev(theta_nn, &cf.zb[l]).value().scale_f(nv) + vder(&cf.zb[l], &nn).value()).abs());
    }
    r.max((ev(theta_nn, &cf.t).value().scale_f(nv) + C64::i() * imb).abs())
}

/// Invariants over a grid.
#[derive(Clone, Debug)]
pub struct InvariantField {
    pub n: usize,
    pub m: usize,
    pub grid: Grid,
    pub mode: DerivMode,
    pub seeds: Seeds,
    pub continuity: f64,
    pub points: Vec<InvariantPoint>,
}

pub fn extract(s: &dyn SurfaceMap, grid: &Grid, opts: &FrameOptions) -> Result<InvariantField> {
    let sw = sweep(s, grid, opts, |pf| invariants_at(pf, opts))?;
    let mut points = sw.items;
    for (p, g) in points.iter_mut().zip(&sw.gauges) {
        p.gauge = *g;
    }
    Ok(InvariantField {
        n: s.n(),
        m: s.m(),
        grid: grid.clone(),
        mode: opts.mode,
        seeds: sw.seeds,
        continuity: sw.continuity,
        points,
    })
}

fn fold_max<'a>(it: impl Iterator<Item = &'a InvariantPoint>, f: impl Fn(&InvariantPoint) -> f64) -> f64 {
    it.map(f).fold(0.0, f64::max)
}

fn fold_opt<'a>(it: impl Iterator<Item = &'a InvariantPoint>, f: impl Fn(&InvariantPoint) -> Option<f64>) -> Option<f64> {
    it.filter_map(f).fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

/// Grid maxima of the headline scalars and every residual.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub max_h: f64,
    pub max_torsion: f64,
    pub max_nu: f64,
    pub min_nu: f64,
    pub max_curv: f64,
    pub scalar_min: f64,
    pub scalar_max: f64,
    pub max_ricci_eigenvalue: f64,
    pub tanaka_webster: f64,
    pub restriction: [f64; 5],
    pub h_symmetry: f64,
    pub normal_skew: f64,
    pub gauss: f64,
    pub curvature_torsion: Option<f64>,
    pub nu_recovery: Option<f64>,
    pub torsion_link: f64,
    pub theta_nn: Option<f64>,
    pub h110_real: Option<f64>,
    pub ricci_hermitian: f64,
}

impl InvariantField {
    pub fn summary(&self) -> Summary {
        let p = || self.points.iter();
        let mut restriction = [0.0; 5];
        for (i, slot) in restriction.iter_mut().enumerate() {
            *slot = fold_max(p(), |q| q.residuals.restriction[i]);
        }
        Summary {
            max_h: fold_max(p(), |q| q.h_norm2().sqrt()),
            max_torsion: fold_max(p(), |q| q.torsion_norm2().sqrt()),
            max_nu: fold_max(p(), |q| q.nu_norm),
            min_nu: p().map(|q| q.nu_norm).fold(f64::INFINITY, f64::min),
            max_curv: fold_max(p(), |q| q.curv_max()),
            scalar_min: p().map(|q| q.scalar).fold(f64::INFINITY, f64::min),
            scalar_max: p().map(|q| q.scalar).fold(f64::NEG_INFINITY, f64::max),
            max_ricci_eigenvalue: p().map(|q| q.ricci_max_eigenvalue()).fold(f64::NEG_INFINITY, f64::max),
            tanaka_webster: fold_max(p(), |q| q.residuals.tanaka_webster),
            restriction,
            h_symmetry: fold_max(p(), |q| q.residuals.h_symmetry),
            normal_skew: fold_max(p(), |q| q.residuals.normal_skew),
            gauss: fold_max(p(), |q| q.residuals.gauss),
            curvature_torsion: fold_opt(p(), |q| q.residuals.curvature_torsion),
            nu_recovery: fold_opt(p(), |q| q.residuals.nu_recovery),
            torsion_link: fold_max(p(), |q| q.residuals.torsion_link),
            theta_nn: fold_opt(p(), |q| q.residuals.theta_nn),
            h110_real: fold_opt(p(), |q| q.residuals.h110_real),
            ricci_hermitian: fold_max(p(), |q| q.residuals.ricci_hermitian),
        }
    }

    pub fn second_fundamental_form(&self) -> Vec<&Vec<Vec<Vec<C64>>>> {
        self.points.iter().map(|p| &p.h).collect()
    }

    pub fn normal_connection(&self) -> Vec<&Vec<Vec<Vec<C64>>>> {
        self.points.iter().map(|p| &p.normal_conn).collect()
    }

    pub fn is_vertical(&self) -> bool {
        self.points.iter().all(|p| p.nu_norm <= VERTICAL_TOL)
    }

    pub fn is_completely_non_vertical(&self) -> bool {
        self.points.iter().all(|p| p.nu_norm > VERTICAL_TOL)
    }
}

/// The five pullback residuals, maximized over the grid.
pub fn restriction_residual(field: &InvariantField) -> [f64; 5] {
    field.summary().restriction
}

#[derive(Clone, Debug, Serialize)]
pub struct RicciReport {
    pub max_eigenvalue: f64,
    pub pass: bool,
}

pub fn ricci_nonpositivity_check(field: &InvariantField, tol: f64) -> Result<RicciReport> {
    if !field.is_vertical() {
        return Err(Error::WrongClass { expected: "Vertical".into(), found: "non-vertical points".into() });
    }
    let max_eigenvalue =
        field.points.iter().map(|p| p.ricci_max_eigenvalue()).fold(f64::NEG_INFINITY, f64::max);
    Ok(RicciReport { max_eigenvalue, pass: max_eigenvalue <= tol })
}

/// `|h_{jk}|` recovered from curvature against the ambient `|h^n_{jk}|`, over the
/// nondegenerate points; returns `(worst difference, nondegenerate point count)`.
pub fn h_from_curvature_check(field: &InvariantField, tol: f64) -> Result<(f64, usize)> {
    if field.n != field.m + 1 || !field.is_vertical() {
        return Err(Error::WrongClass { expected: "Vertical codimension one".into(), found: "other".into() });
    }
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for p in &field.points {
        match h_from_curvature(&p.curv, tol) {
            Ok(hc) => {
                count += 1;
                for j in 0..field.m {
                    for k in 0..field.m {
                        worst = worst.max((hc[j][k].abs() - p.h[0][j][k].abs()).abs());
                    }
                }
            }
            Err(Error::DegeneratePoint { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((worst, count))
}

/// Residual of the intrinsic expression for `θ_n^n` (needs the sphere gauge).
pub fn theta_nn_from_intrinsic(field: &InvariantField) -> Result<f64> {
    if field.n != field.m + 1 || !field.is_completely_non_vertical() {
        return Err(Error::WrongClass { expected: "CompletelyNonVertical codimension one".into(), found: "other".into() });
    }
    field
        .summary()
        .theta_nn
        .ok_or_else(|| Error::InvalidArgument("the θ_n^n check needs the sphere gauge".into()))
}

/// Convenience: frames with default options in the requested mode and gauge, then extraction.
pub fn extract_with(s: &dyn SurfaceMap, grid: &Grid, mode: DerivMode, sphere_gauge: bool) -> Result<InvariantField> {
    let opts = FrameOptions {
        mode,
        gauge: if sphere_gauge { crate::darboux::Gauge::Sphere } else { crate::darboux::Gauge::Canonical },
        ..FrameOptions::default()
    };
    extract(s, grid, &opts)
}
