//! The pseudohermitian group `PSH(n)` as `(2n+2)×(2n+2)` real matrices and its Lie algebra.
//!
//! An element is `[[1, 0], [p, E]]` where `p` is the image of the origin and the
//! columns of `E` are the coordinate components of an adapted frame at `p`.
//! Every element factors uniquely as `L_p ∘ Φ_R` with `R ∈ SO(2n)` commuting
//! with `J₀ = [[0, −I], [I, 0]]`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cx::{Cx, C64};
use crate::error::{Error, Result};
use crate::heis::{FrameAtPoint, HPoint};
use crate::jet::Scalar;
use crate::mat::Mat;

#[derive(Clone, Debug, PartialEq)]
pub struct PSHElement {
    pub n: usize,
    pub mat: DMatrix<f64>,
}

/// Standard complex structure `[[0, −I], [I, 0]]` on `R^{2n}`.
pub fn j0(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for b in 0..n {
        j[(n + b, b)] = 1.0;
        j[(b, n + b)] = -1.0;
    }
    j
}

/// Generic form of `L_p ∘ Φ_R`: `p` holds `(x, y, t)` and `r` is the `2n×2n` rotation block.
pub fn compose_generic<S: Scalar>(p: &[S], r: &Mat<S>) -> Mat<S> {
    let n = r.rows / 2;
    let d = 2 * n + 2;
    let mut a = Mat::zeros(d, d);
    a[(0, 0)] = S::cst(1.0);
    for i in 0..=2 * n {
        a[(1 + i, 0)] = p[i].clone();
    }
    for i in 0..2 * n {
        for j in 0..2 * n {
            a[(1 + i, 1 + j)] = r[(i, j)].clone();
        }
    }
    // Bottom row of E_p·diag(R, 1) is (y, −x)ᵀ R.
    for j in 0..2 * n {
        let mut acc = S::zero();
        for b in 0..n {
            acc = acc + p[n + b].clone() * r[(b, j)].clone() - p[b].clone() * r[(n + b, j)].clone();
        }
        a[(2 * n + 1, 1 + j)] = acc;
    }
    a[(2 * n + 1, 2 * n + 1)] = S::cst(1.0);
    a
}

/// Inverse of a valid element, using `E⁻¹ = diag(Rᵀ, 1)·E_p⁻¹`.
pub fn inverse_generic<S: Scalar>(a: &Mat<S>) -> Mat<S> {
    let d = a.rows;
    let n = (d - 2) / 2;
    let mut einv = Mat::zeros(d - 1, d - 1);
    for i in 0..2 * n {
        for j in 0..2 * n {
            einv[(i, j)] = a[(1 + j, 1 + i)].clone();
        }
    }
    // Row 2n of E⁻¹ is the contact form in coordinates: (−y, x, 1).
    for b in 0..n {
        einv[(2 * n, b)] = -a[(1 + n + b, 0)].clone();
        einv[(2 * n, n + b)] = a[(1 + b, 0)].clone();
    }
    einv[(2 * n, 2 * n)] = S::cst(1.0);
    let mut out = Mat::zeros(d, d);
    out[(0, 0)] = S::cst(1.0);
    for i in 0..d - 1 {
        let mut acc = S::zero();
        for k in 0..d - 1 {
            acc = acc - einv[(i, k)].clone() * a[(1 + k, 0)].clone();
        }
        out[(1 + i, 0)] = acc;
        for j in 0..d - 1 {
            out[(1 + i, 1 + j)] = einv[(i, j)].clone();
        }
    }
    out
}

impl PSHElement {
    pub fn identity(n: usize) -> PSHElement {
        PSHElement { n, mat: DMatrix::identity(2 * n + 2, 2 * n + 2) }
    }

    /// `L_p ∘ Φ_R`.
    pub fn from_parts(p: &HPoint, r: &DMatrix<f64>) -> Result<PSHElement> {
        let n = p.n();
        if r.nrows() != 2 * n || r.ncols() != 2 * n {
            return Err(Error::Shape(format!("rotation block {}×{} for H_{}", r.nrows(), r.ncols(), n)));
        }
        let m = compose_generic::<f64>(&p.to_vec(), &Mat::from_f64(r));
        Ok(PSHElement { n, mat: m.value() })
    }

    pub fn translation(p: &HPoint) -> PSHElement {
        PSHElement::from_parts(p, &DMatrix::identity(2 * p.n(), 2 * p.n())).expect("shapes agree")
    }

    pub fn from_matrix(mat: DMatrix<f64>, tol: f64) -> Result<PSHElement> {
        let diag = psh_validate(&mat, tol);
        if !diag.pass {
            return Err(Error::InvalidFrame(format!("matrix fails validation: {:?}", diag)));
        }
        Ok(PSHElement { n: (mat.nrows() - 2) / 2, mat })
    }

    pub fn mul(&self, o: &PSHElement) -> PSHElement {
        PSHElement { n: self.n, mat: &self.mat * &o.mat }
    }

    pub fn inverse(&self) -> PSHElement {
        let inv = inverse_generic::<f64>(&Mat::from_f64(&self.mat));
        PSHElement { n: self.n, mat: inv.value() }
    }

    pub fn translation_part(&self) -> HPoint {
        let v: Vec<f64> = (1..=2 * self.n + 1).map(|i| self.mat[(i, 0)]).collect();
        HPoint::from_slice(&v).expect("2n+1 entries")
    }

    pub fn rotation_block(&self) -> DMatrix<f64> {
        let k = 2 * self.n;
        self.mat.view((1, 1), (k, k)).into_owned()
    }
}

pub fn frame_to_matrix(f: &FrameAtPoint, tol: f64) -> Result<PSHElement> {
    let r = f.residual();
    if r > tol {
        return Err(Error::InvalidFrame(format!("frame residual {r:e}")));
    }
    let n = f.base.n();
    let d = 2 * n + 2;
    let mut mat = DMatrix::zeros(d, d);
    mat[(0, 0)] = 1.0;
    for (i, v) in f.base.to_vec().into_iter().enumerate() {
        mat[(1 + i, 0)] = v;
    }
    for (j, col) in f.columns.iter().enumerate() {
        for (i, v) in col.coord.iter().enumerate() {
            mat[(1 + i, 1 + j)] = *v;
        }
    }
    Ok(PSHElement { n, mat })
}

pub fn apply(g: &PSHElement, q: &HPoint) -> Result<HPoint> {
    if q.n() != g.n {
        return Err(Error::Shape(format!("PSH({}) acting on H_{}", g.n, q.n())));
    }
    let mut v = vec![1.0];
    v.extend(q.to_vec());
    let w = &g.mat * nalgebra::DVector::from_vec(v);
    HPoint::from_slice(&w.as_slice()[1..])
}

/// Splits `g = L_p ∘ Φ_R`.
pub fn decompose(g: &PSHElement, tol: f64) -> Result<(HPoint, DMatrix<f64>)> {
    let diag = psh_validate(&g.mat, tol);
    if !diag.pass {
        return Err(Error::InvalidFrame(format!("matrix fails validation: {:?}", diag)));
    }
    let p = g.translation_part();
    let rest = PSHElement::translation(&p).inverse().mul(g);
    Ok((p, rest.rotation_block()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupDiagnostics {
    pub first_row: f64,
    pub t_column: f64,
    pub orthonormality: f64,
    pub j_compat: f64,
    pub pass: bool,
}

pub fn psh_validate(mat: &DMatrix<f64>, tol: f64) -> GroupDiagnostics {
    let d = mat.nrows();
    if d != mat.ncols() || d < 4 || d % 2 == 1 {
        return GroupDiagnostics {
            first_row: f64::INFINITY,
            t_column: f64::INFINITY,
            orthonormality: f64::INFINITY,
            j_compat: f64::INFINITY,
            pass: false,
        };
    }
    let n = (d - 2) / 2;
    let mut first_row: f64 = (mat[(0, 0)] - 1.0).abs();
    for j in 1..d {
        first_row = first_row.max(mat[(0, j)].abs());
    }
    let mut t_column: f64 = (mat[(d - 1, d - 1)] - 1.0).abs();
    for i in 1..d - 1 {
        t_column = t_column.max(mat[(i, d - 1)].abs());
    }
    let r = mat.view((1, 1), (2 * n, 2 * n)).into_owned();
    let orthonormality = (r.transpose() * &r - DMatrix::identity(2 * n, 2 * n)).amax();
    let j = j0(n);
    let j_compat = (&r * &j - &j * &r).amax();
    // The bottom row must be the one forced by the translation part.
    let p: Vec<f64> = (1..d).map(|i| mat[(i, 0)]).collect();
    let expect = compose_generic::<f64>(&p, &Mat::from_f64(&r)).value();
    let mut bottom: f64 = 0.0;
    for jj in 1..d - 1 {
        bottom = bottom.max((mat[(d - 1, jj)] - expect[(d - 1, jj)]).abs());
    }
    let orthonormality = orthonormality.max(bottom);
    let pass = [first_row, t_column, orthonormality, j_compat].iter().all(|v| *v < tol);
    GroupDiagnostics { first_row, t_column, orthonormality, j_compat, pass }
}

/// Value of the Maurer–Cartan form on one tangent direction: an element of `psh(n)`.
///
/// Layout: entry `[1+B][0]` is `ω^B`, entry `[1+B][1+A]` is `ω_A{}^B` for
/// `A, B < 2n`, and the bottom row carries `(ω^{n+α}, −ω^α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraValue {
    pub n: usize,
    pub mat: DMatrix<f64>,
}

impl AlgebraValue {
    pub fn zero(n: usize) -> AlgebraValue {
        AlgebraValue { n, mat: DMatrix::zeros(2 * n + 2, 2 * n + 2) }
    }

    /// `ω^A` for `A < 2n`; `A = 2n` gives `ω^{2n+1}`.
    pub fn omega(&self, a: usize) -> f64 {
        self.mat[(1 + a, 0)]
    }

    /// `ω_A{}^B`.
    pub fn conn(&self, a: usize, b: usize) -> f64 {
        self.mat[(1 + b, 1 + a)]
    }

    /// Builds the algebra element from `ω^A` (`2n+1` values) and the rotation block.
    pub fn from_parts(omega: &[f64], rot: &DMatrix<f64>) -> AlgebraValue {
        let n = rot.nrows() / 2;
        let mut mat = DMatrix::zeros(2 * n + 2, 2 * n + 2);
        for (a, v) in omega.iter().enumerate() {
            mat[(1 + a, 0)] = *v;
        }
        for i in 0..2 * n {
            for j in 0..2 * n {
                mat[(1 + i, 1 + j)] = rot[(i, j)];
            }
        }
        for b in 0..n {
            mat[(2 * n + 1, 1 + b)] = omega[n + b];
            mat[(2 * n + 1, 1 + n + b)] = -omega[b];
        }
        AlgebraValue { n, mat }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgebraDiagnostics {
    pub first_row: f64,
    pub last_column: f64,
    pub skew: f64,
    pub j_compat: f64,
    pub bottom_row: f64,
    pub pass: bool,
}

impl AlgebraDiagnostics {
    pub fn worst(&self) -> f64 {
        self.first_row.max(self.last_column).max(self.skew).max(self.j_compat).max(self.bottom_row)
    }
}

pub fn algebra_validate(v: &AlgebraValue, tol: f64) -> AlgebraDiagnostics {
    let m = &v.mat;
    let n = v.n;
    let d = 2 * n + 2;
    let first_row = (0..d).map(|j| m[(0, j)].abs()).fold(0.0, f64::max);
    let last_column = (0..d).map(|i| m[(i, d - 1)].abs()).fold(0.0, f64::max);
    let r = m.view((1, 1), (2 * n, 2 * n)).into_owned();
    let skew = (&r + r.transpose()).amax();
    let j = j0(n);
    let j_compat = (&r * &j - &j * &r).amax();
    let mut bottom_row: f64 = 0.0;
    for b in 0..n {
        bottom_row = bottom_row
            .max((m[(d - 1, 1 + b)] - m[(1 + n + b, 0)]).abs())
            .max((m[(d - 1, 1 + n + b)] + m[(1 + b, 0)]).abs());
    }
    let pass = [first_row, last_column, skew, j_compat, bottom_row].iter().all(|x| *x < tol);
    AlgebraDiagnostics { first_row, last_column, skew, j_compat, bottom_row, pass }
}

/// Complex view `θ = ω^{2n+1}`, `θ^β = ω^β + iω^{n+β}`, `θ_γ{}^β = ω_γ{}^β + iω_γ{}^{n+β}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSlices {
    pub theta: C64,
    pub vartheta: Vec<C64>,
    /// `conn[γ][β] = θ_γ{}^β`.
    pub conn: Vec<Vec<C64>>,
}

impl ComplexSlices {
    pub fn skew_residual(&self) -> f64 {
        let n = self.vartheta.len();
        let mut r = self.theta.im.abs();
        for g in 0..n {
            for b in 0..n {
                r = r.max((self.conn[g][b].clone() + self.conn[b][g].conj()).abs());
            }
        }
        r
    }
}

pub fn complexify(v: &AlgebraValue) -> ComplexSlices {
    let n = v.n;
    ComplexSlices {
        theta: C64::real(v.omega(2 * n)),
        vartheta: (0..n).map(|b| C64::new(v.omega(b), v.omega(n + b))).collect(),
        conn: (0..n)
            .map(|g| (0..n).map(|b| C64::new(v.conn(g, b), v.conn(g, n + b))).collect())
            .collect(),
    }
}

pub fn realify(s: &ComplexSlices, tol: f64) -> Result<AlgebraValue> {
    let r = s.skew_residual();
    if r > tol {
        return Err(Error::InvalidArgument(format!("connection not skew-hermitian ({r:e})")));
    }
    let n = s.vartheta.len();
    let mut omega = vec![0.0; 2 * n + 1];
    for b in 0..n {
        omega[b] = s.vartheta[b].re;
        omega[n + b] = s.vartheta[b].im;
    }
    omega[2 * n] = s.theta.re;
    let mut rot = DMatrix::zeros(2 * n, 2 * n);
    for g in 0..n {
        for b in 0..n {
            let c = &s.conn[g][b];
            rot[(b, g)] = c.re;
            rot[(n + b, g)] = c.im;
            rot[(b, n + g)] = -c.im;
            rot[(n + b, n + g)] = c.re;
        }
    }
    Ok(AlgebraValue::from_parts(&omega, &rot))
}

/// Algebra element from complex slices over any scalar; `conn[γ][β] = θ_γ{}^β`.
/// Only `Re θ` is used.
pub fn algebra_generic<S: Scalar>(theta: &S, vartheta: &[Cx<S>], conn: &[Vec<Cx<S>>]) -> Mat<S> {
    let n = vartheta.len();
    let d = 2 * n + 2;
    let mut mat: Mat<S> = Mat::zeros(d, d);
    for b in 0..n {
        mat[(1 + b, 0)] = vartheta[b].re.clone();
        mat[(1 + n + b, 0)] = vartheta[b].im.clone();
        mat[(2 * n + 1, 1 + b)] = vartheta[b].im.clone();
        mat[(2 * n + 1, 1 + n + b)] = -vartheta[b].re.clone();
    }
    mat[(2 * n + 1, 0)] = theta.clone();
    for g in 0..n {
        for b in 0..n {
            let c = &conn[g][b];
            mat[(1 + b, 1 + g)] = c.re.clone();
            mat[(1 + n + b, 1 + g)] = c.im.clone();
            mat[(1 + b, 1 + n + g)] = -c.im.clone();
            mat[(1 + n + b, 1 + n + g)] = c.re.clone();
        }
    }
    mat
}

/// Random element of `PSH(n)`: translation with entries in `[-scale, scale]` and
/// a unitary rotation block built from a random hermitian generator.
pub fn random_element<R: rand::Rng>(n: usize, scale: f64, rng: &mut R) -> PSHElement {
    let mut coords = vec![0.0; 2 * n + 1];
    for c in coords.iter_mut() {
        *c = rng.gen_range(-scale..scale);
    }
    let p = HPoint::from_slice(&coords).expect("2n+1 entries");
    let mut gen = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        for b in 0..=a {
            let (re, im) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            // Skew-hermitian generator re + i im realified.
            let (re, im) = if a == b { (0.0, im) } else { (re, im) };
            gen[(a, b)] = re;
            gen[(n + a, n + b)] = re;
            gen[(n + a, b)] = im;
            gen[(a, n + b)] = -im;
            if a != b {
                gen[(b, a)] = -re;
                gen[(n + b, n + a)] = -re;
                gen[(n + b, a)] = im;
                gen[(b, n + a)] = -im;
            }
        }
    }
    let r = gen.exp();
    PSHElement::from_parts(&p, &r).expect("shapes agree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heis::group_mul;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generic_assembly_matches_realify() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_element(2, 1.0, &mut rng);
        let h = random_element(2, 1.0, &mut rng);
        // A valid algebra element: difference quotient of a curve through the identity.
        let v = AlgebraValue { n: 2, mat: g.inverse().mat * h.mat - DMatrix::identity(6, 6) };
        let s = complexify(&v);
        let a = algebra_generic(&s.theta.re, &s.vartheta, &s.conn);
        let b = AlgebraValue::from_parts(
            &(0..5).map(|i| v.omega(i)).collect::<Vec<_>>(),
            &v.mat.view((1, 1), (4, 4)).into_owned(),
        );
        let conn_part = |m: &DMatrix<f64>| m.view((1, 0), (5, 5)).into_owned();
        assert!((conn_part(&a.value()) - conn_part(&b.mat)).amax() < 1e-15);
    }

    #[test]
    fn standard_frame_gives_left_translation() {
        let id = frame_to_matrix(&FrameAtPoint::standard(&HPoint::origin(2)), 1e-12).unwrap();
        assert_eq!(id, PSHElement::identity(2));
        let p = HPoint::from_slice(&[0.3, -1.2, 0.7, 2.0, 0.5]).unwrap();
        let lp = frame_to_matrix(&FrameAtPoint::standard(&p), 1e-12).unwrap();
        let q = HPoint::from_slice(&[1.0, 0.4, -0.3, 0.9, -2.0]).unwrap();
        let got = apply(&lp, &q).unwrap();
        assert!(got.distance(&group_mul(&p, &q).unwrap()) < 1e-14);
        assert_eq!(lp, PSHElement::translation(&p));
    }

    #[test]
    fn rotation_fixes_origin_and_decomposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_element(2, 0.0001, &mut rng);
        let (_, r) = decompose(&g, 1e-10).unwrap();
        let rot = PSHElement::from_parts(&HPoint::origin(2), &r).unwrap();
        assert!(apply(&rot, &HPoint::origin(2)).unwrap().distance(&HPoint::origin(2)) < 1e-15);
        for _ in 0..10 {
            let g = random_element(2, 2.0, &mut rng);
            let (p, r) = decompose(&g, 1e-10).unwrap();
            let back = PSHElement::from_parts(&p, &r).unwrap();
            assert!((back.mat - &g.mat).amax() < 1e-12);
        }
    }

    #[test]
    fn validation_examples() {
        let id = PSHElement::identity(1).mat;
        assert!(psh_validate(&id, 1e-12).pass);
        let mut bad = id.clone();
        bad[(0, 0)] = 2.0;
        let d = psh_validate(&bad, 1e-12);
        assert!(!d.pass);
        assert_eq!(d.first_row, 1.0);
    }

    #[test]
    fn group_closure_and_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let g = random_element(2, 2.0, &mut rng);
            let h = random_element(2, 2.0, &mut rng);
            assert!(psh_validate(&g.mul(&h).mat, 1e-10).pass);
            assert!(psh_validate(&g.inverse().mat, 1e-10).pass);
            assert!((g.mul(&g.inverse()).mat - DMatrix::identity(6, 6)).amax() < 1e-12);
            let q = HPoint::from_slice(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
            let a = apply(&g.mul(&h), &q).unwrap();
            let b = apply(&g, &apply(&h, &q).unwrap()).unwrap();
            assert!(a.distance(&b) < 1e-12);
        }
    }

    #[test]
    fn algebra_examples() {
        assert!(algebra_validate(&AlgebraValue::zero(2), 1e-12).pass);
        let mut v = AlgebraValue::zero(2);
        v.mat[(1, 2)] = 0.5;
        v.mat[(2, 1)] = 0.5;
        let d = algebra_validate(&v, 1e-12);
        assert!(!d.pass);
        assert_eq!(d.skew, 1.0);
        let mut w = AlgebraValue::zero(1);
        w.mat[(1, 0)] = 1.0;
        w.mat[(3, 2)] = -1.0;
        let s = complexify(&w);
        assert_eq!(s.vartheta[0], C64::new(1.0, 0.0));
        assert_eq!(realify(&s, 1e-12).unwrap(), w);
    }

    #[test]
    fn maurer_cartan_difference_quotient_is_in_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_element(2, 1.0, &mut rng);
        let eps = 1e-7;
        let w = g.inverse().mat * (g.mat.clone() * small_motion(2, eps) - &g.mat) / eps;
        let v = AlgebraValue { n: 2, mat: w };
        let d = algebra_validate(&v, 1e-5);
        assert!(d.pass, "{d:?}");
        let back = realify(&complexify(&v), 1e-5).unwrap();
        assert!((back.mat - &v.mat).amax() < 1e-5);
    }

    fn small_motion(n: usize, eps: f64) -> DMatrix<f64> {
        let p = HPoint::from_slice(&vec![eps; 2 * n + 1]).unwrap();
        let mut g = DMatrix::zeros(2 * n, 2 * n);
        g[(0, 1)] = -eps;
        g[(1, 0)] = eps;
        g[(n, n + 1)] = -eps;
        g[(n + 1, n)] = eps;
        g[(n, 0)] = eps;
        g[(0, n)] = -eps;
        PSHElement::from_parts(&p, &g.exp()).unwrap().mat
    }
}
