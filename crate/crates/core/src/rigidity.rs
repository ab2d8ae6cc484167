//! Classification by verticality and the rigidity detectors for flat and
//! spherical hypersurfaces.

use serde::Serialize;

use crate::cx::C64;
use crate::darboux::{jrot, DarbouxFrameField};
use crate::error::{Error, Result};
use crate::heis::HPoint;
use crate::invariants::InvariantField;
use crate::psh::{apply, frame_to_matrix, PSHElement};

pub const CLASSIFY_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verticality {
    Vertical,
    CompletelyNonVertical,
    Mixed,
}

impl Verticality {
    pub fn name(self) -> &'static str {
        match self {
            Verticality::Vertical => "Vertical",
            Verticality::CompletelyNonVertical => "CompletelyNonVertical",
            Verticality::Mixed => "Mixed",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerticalityClass {
    pub class: Verticality,
    pub min_nu: f64,
    pub max_nu: f64,
}

pub fn classify(nu: &[f64], tol: f64) -> VerticalityClass {
    let min_nu = nu.iter().copied().fold(f64::INFINITY, f64::min);
    let max_nu = nu.iter().copied().fold(0.0, f64::max);
    let class = if max_nu < tol {
        Verticality::Vertical
    } else if min_nu > tol {
        Verticality::CompletelyNonVertical
    } else {
        Verticality::Mixed
    };
    VerticalityClass { class, min_nu, max_nu }
}

pub fn classify_field(field: &InvariantField, tol: f64) -> VerticalityClass {
    classify(&field.points.iter().map(|p| p.nu_norm).collect::<Vec<_>>(), tol)
}

fn require(found: &VerticalityClass, expected: Verticality) -> Result<()> {
    if found.class == expected {
        Ok(())
    } else {
        Err(Error::WrongClass { expected: expected.name().into(), found: found.class.name().into() })
    }
}

fn require_hypersurface(field: &InvariantField) -> Result<()> {
    if field.m + 1 == field.n {
        Ok(())
    } else {
        Err(Error::WrongClass { expected: "codimension one".into(), found: format!("codimension {}", field.n - field.m) })
    }
}

fn same_grid(field: &InvariantField, frames: &DarbouxFrameField) -> Result<()> {
    if field.points.len() == frames.points.len() {
        Ok(())
    } else {
        Err(Error::Shape("invariants and frames live on different grids".into()))
    }
}

#[derive(Clone, Debug)]
pub struct RigidMotionFit {
    pub motion: PSHElement,
    /// Largest `|z_n|` of the moved image.
    pub image_residual: f64,
    /// Phase `ψ` of the parallel normal gauge `e_n ↦ e^{iψ} e_n` at every grid point.
    pub normal_phase: Vec<f64>,
    /// Largest plaquette circulation of `Im θ_n^n`; the connection is closed in the
    /// flat case, so this measures discretization only.
    pub phase_closure: f64,
}

/// `Im θ_n^n(∂_i)` at one point.
fn normal_connection_rate(p: &crate::invariants::InvariantPoint, i: usize) -> f64 {
    let m = p.m();
    let nc = &p.normal_conn[0][0];
    let mut acc = nc[2 * m] * C64::new(p.coframe_t[i], 0.0);
    for k in 0..m {
        acc = acc + nc[k] * p.coframe[k][i] + nc[m + k] * p.coframe[k][i].conj();
    }
    acc.im
}

/// Moves a flat vertical hypersurface into `H_{n−1} = {z_n = 0}`.
///
/// The motion is the inverse of the Darboux frame at the base point. The normal
/// gauge is transported along the grid sweep with the phase that cancels `θ_n^n`;
/// the phase is zero at the base point, so it leaves the motion unchanged up to a
/// rotation preserving `H_{n−1}`.
pub fn detect_flat(field: &InvariantField, frames: &DarbouxFrameField, tol: f64) -> Result<RigidMotionFit> {
    require_hypersurface(field)?;
    same_grid(field, frames)?;
    require(&classify_field(field, CLASSIFY_TOL), Verticality::Vertical)?;
    let max_h = field.summary().max_h;
    if max_h >= tol {
        return Err(Error::NotFlat(max_h));
    }
    let g = &field.grid;
    let mut phase = vec![0.0; g.len()];
    for flat in 1..g.len() {
        let mut idx = g.index(flat);
        let axis = (0..g.dim()).rev().find(|&a| idx[a] > 0).expect("not the corner");
        idx[axis] -= 1;
        let prev = g.flat(&idx);
        let rate = normal_connection_rate(&field.points[prev], axis) + normal_connection_rate(&field.points[flat], axis);
        phase[flat] = phase[prev] - 0.5 * g.step(axis) * rate;
    }
    let mut phase_closure: f64 = 0.0;
    for flat in 0..g.len() {
        let idx = g.index(flat);
        for i in 0..g.dim() {
            for j in i + 1..g.dim() {
                if idx[i] + 1 >= g.counts[i] || idx[j] + 1 >= g.counts[j] {
                    continue;
                }
                let at = |di: usize, dj: usize| {
                    let mut k = idx.clone();
                    k[i] += di;
                    k[j] += dj;
                    g.flat(&k)
                };
                let edge = |a: usize, b: usize, axis: usize| {
                    0.5 * g.step(axis) * (normal_connection_rate(&field.points[a], axis) + normal_connection_rate(&field.points[b], axis))
                };
                let (p00, p10, p01, p11) = (at(0, 0), at(1, 0), at(0, 1), at(1, 1));
                let loop_sum = edge(p00, p10, i) + edge(p10, p11, j) - edge(p01, p11, i) - edge(p00, p01, j);
                phase_closure = phase_closure.max(loop_sum.abs());
            }
        }
    }
    let base = frames.points[0].frame();
    let motion = frame_to_matrix(&base, 1e-8)?.inverse();
    let n = field.n;
    let mut image_residual: f64 = 0.0;
    for p in &frames.points {
        let q = apply(&motion, &p.point())?;
        image_residual = image_residual.max(q.x[n - 1].hypot(q.y[n - 1]));
    }
    Ok(RigidMotionFit { motion, image_residual, normal_phase: phase, phase_closure })
}

#[derive(Clone, Debug, Serialize)]
pub struct SphereFit {
    pub center: HPoint,
    pub radius: f64,
    /// Largest coordinate deviation of a per-point center from the median.
    pub center_residual: f64,
    pub radius_residual: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Center `X⁰` at one point from `a = e_{2n}/|ν|` in the sphere gauge `e_n = −ν/|ν|`.
pub fn point_center(x: &[f64], nu: &[f64]) -> (Vec<f64>, f64) {
    let n = nu.len() / 2;
    let nn: f64 = nu.iter().map(|c| c * c).sum();
    let a: Vec<f64> = jrot(nu).iter().map(|c| -c / nn).collect();
    let x0: Vec<f64> = (0..n).map(|b| x[b] - a[b]).collect();
    let y0: Vec<f64> = (0..n).map(|b| x[n + b] - a[n + b]).collect();
    let pair: f64 = (0..n).map(|b| a[b] * y0[b] - a[n + b] * x0[b]).sum();
    let mut c = x0;
    c.extend(y0);
    c.push(x[2 * n] - pair);
    (c, 1.0 / nn.sqrt())
}

pub fn detect_sphere(field: &InvariantField, frames: &DarbouxFrameField, tol: f64) -> Result<SphereFit> {
    require_hypersurface(field)?;
    same_grid(field, frames)?;
    require(&classify_field(field, CLASSIFY_TOL), Verticality::CompletelyNonVertical)?;
    let max_a = field.summary().max_torsion;
    if max_a >= tol {
        return Err(Error::NotTorsionFree(max_a));
    }
    let fits: Vec<(Vec<f64>, f64)> = frames.points.iter().map(|p| point_center(&p.x, &p.nu)).collect();
    let dim = fits[0].0.len();
    let center: Vec<f64> = (0..dim).map(|k| median(fits.iter().map(|f| f.0[k]).collect())).collect();
    let radius = median(fits.iter().map(|f| f.1).collect());
    let center_residual = fits
        .iter()
        .flat_map(|f| f.0.iter().zip(&center).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let radius_residual = fits.iter().map(|f| (f.1 - radius).abs()).fold(0.0, f64::max);
    Ok(SphereFit { center: HPoint::from_slice(&center)?, radius, center_residual, radius_residual })
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub mean: f64,
    pub spread: f64,
    /// `m(m+1)` times the mean of `|ν|²`.
    pub expected: f64,
    pub max_torsion: f64,
    pub torsion_free: bool,
    pub pass: bool,
}

pub fn constant_curvature_check(field: &InvariantField, tol: f64) -> Result<CurvatureReport> {
    require(&classify_field(field, CLASSIFY_TOL), Verticality::CompletelyNonVertical)?;
    let s = field.summary();
    let k = field.points.len() as f64;
    let mean = field.points.iter().map(|p| p.scalar).sum::<f64>() / k;
    let mm = (field.m * (field.m + 1)) as f64;
    let expected = mm * field.points.iter().map(|p| p.nu_norm * p.nu_norm).sum::<f64>() / k;
    let spread = s.scalar_max - s.scalar_min;
    let torsion_free = s.max_torsion < tol;
    Ok(CurvatureReport {
        mean,
        spread,
        expected,
        max_torsion: s.max_torsion,
        torsion_free,
        pass: torsion_free && spread < tol * (1.0 + mean.abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darboux::{darboux_frame, nu_field, FrameOptions};
    use crate::dsl::parse_builtin_spec;
    use crate::invariants::extract;
    use crate::psh::random_element;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fields(spec: &str, k: usize) -> (InvariantField, DarbouxFrameField) {
        let imm = parse_builtin_spec(spec).unwrap();
        let grid = imm.grid(&vec![k; imm.dim()]).unwrap();
        let opts = FrameOptions::default();
        (extract(&imm, &grid, &opts).unwrap(), darboux_frame(&imm, &grid, &opts).unwrap())
    }

    #[test]
    fn classes() {
        let (f, _) = fields("heis_sub(1,2)", 3);
        assert_eq!(classify_field(&f, CLASSIFY_TOL).class, Verticality::Vertical);
        let (f, _) = fields("sphere(2,2)", 3);
        let c = classify_field(&f, CLASSIFY_TOL);
        assert_eq!(c.class, Verticality::CompletelyNonVertical);
        assert!((c.min_nu - 0.5).abs() < 1e-12 && (c.max_nu - 0.5).abs() < 1e-12);
        let imm = parse_builtin_spec("siegel_quadric(0.5, 0.8)").unwrap();
        let grid = imm.grid(&[5, 5, 5]).unwrap();
        let frames = darboux_frame(&imm, &grid, &FrameOptions::default()).unwrap();
        let nu: Vec<f64> = nu_field(&frames).iter().map(|p| p.norm).collect();
        assert_eq!(classify(&nu, CLASSIFY_TOL).class, Verticality::Mixed);
    }

    #[test]
    fn origin_sphere() {
        let (f, fr) = fields("sphere(2,1)", 5);
        let fit = detect_sphere(&f, &fr, 1e-7).unwrap();
        assert!(fit.center.to_vec().iter().all(|c| c.abs() < 1e-10), "{:?}", fit.center);
        assert!((fit.radius - 1.0).abs() < 1e-10 && fit.center_residual < 1e-10);
    }

    #[test]
    fn moved_sphere_center_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let imm = parse_builtin_spec("sphere(2,2)").unwrap();
        let g = random_element(2, 1.0, &mut rng);
        let moved = imm.moved(&g);
        let grid = moved.grid(&[5, 5, 5]).unwrap();
        let opts = FrameOptions::default();
        let fit = detect_sphere(&extract(&moved, &grid, &opts).unwrap(), &darboux_frame(&moved, &grid, &opts).unwrap(), 1e-7).unwrap();
        let expect = apply(&g, &HPoint::origin(2)).unwrap();
        assert!(fit.center.distance(&expect) < 1e-9, "{:?} vs {:?}", fit.center, expect);
        assert!((fit.radius - 2.0).abs() < 1e-10);
    }

    #[test]
    fn flat_detection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let imm = parse_builtin_spec("heis_sub(1,2)").unwrap();
        let moved = imm.moved(&random_element(2, 1.0, &mut rng));
        let grid = moved.grid(&[4, 4, 4]).unwrap();
        let opts = FrameOptions::default();
        let fit = detect_flat(&extract(&moved, &grid, &opts).unwrap(), &darboux_frame(&moved, &grid, &opts).unwrap(), 1e-7).unwrap();
        assert!(fit.image_residual < 1e-9, "{}", fit.image_residual);
        assert!(fit.phase_closure < 1e-12);
    }

    #[test]
    fn wrong_classes_are_rejected() {
        let (f, fr) = fields("holograph", 3);
        assert!(matches!(detect_flat(&f, &fr, 1e-7), Err(Error::NotFlat(_))));
        assert!(matches!(detect_sphere(&f, &fr, 1e-7), Err(Error::WrongClass { .. })));
        let (f, fr) = fields("siegel_quadric", 3);
        assert!(matches!(detect_sphere(&f, &fr, 1e-7), Err(Error::NotTorsionFree(_))));
        let r = constant_curvature_check(&f, 1e-7).unwrap();
        assert!(!r.torsion_free && !r.pass);
    }

    #[test]
    fn sphere_curvature_is_constant() {
        for (spec, mean) in [("sphere(2,1)", 2.0), ("sphere(2,2)", 0.5)] {
            let (f, _) = fields(spec, 5);
            let r = constant_curvature_check(&f, 1e-7).unwrap();
            assert!(r.pass && r.spread < 1e-7, "{r:?}");
            assert!((r.mean - mean).abs() < 1e-6 && (r.expected - mean).abs() < 1e-6);
        }
    }
}
