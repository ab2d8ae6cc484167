//! Acceptance criteria. Prints one PASS/FAIL line per criterion, then fails if any failed.
//!
//! Run with `cargo test -p cartan-heis --test acceptance -- --nocapture` to see the lines.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use cartan_heis::darboux::{darboux_derivative, darboux_frame, DarbouxFrameField, FrameOptions};
use cartan_heis::dsl::{parse, parse_builtin_spec, Grid, Immersion};
use cartan_heis::invariants::{extract, h_from_curvature_check, InvariantField};
use cartan_heis::psh::{apply, random_element, PSHElement};
use cartan_heis::reconstruct::{
    congruence, exp_curve, integrate_line, rotating_curve_eta, round_trip, IntegrateOptions,
};
use cartan_heis::rigidity::{detect_flat, detect_sphere};
use cartan_heis::surface::DerivMode;
use cartan_heis::heis::HPoint;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn builtin(spec: &str) -> Immersion {
    parse_builtin_spec(spec).unwrap_or_else(|e| panic!("{spec}: {e}"))
}

fn cube(imm: &Immersion, k: usize) -> Grid {
    imm.grid(&vec![k; imm.dim()]).unwrap()
}

fn field(imm: &Immersion, k: usize) -> cartan_heis::Result<InvariantField> {
    extract(imm, &cube(imm, k), &FrameOptions::default())
}

fn frames(imm: &Immersion, k: usize, opts: &FrameOptions) -> DarbouxFrameField {
    darboux_frame(imm, &cube(imm, k), opts).unwrap()
}

fn c1_flat_model() -> Outcome {
    let imm = builtin("heis_sub(1,2)");
    let t = Instant::now();
    let s = field(&imm, 9).unwrap().summary();
    let secs = t.elapsed().as_secs_f64();
    let worst = s.max_h.max(s.max_torsion).max(s.max_nu).max(s.max_curv);
    outcome(worst < 1e-8 && secs < 2.0, format!("max(|II|, |A|, |nu|, |R|) = {worst:.2e}, {secs:.2} s"))
}

fn c2_sphere_invariants() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in [1.0, 2.0] {
        let imm = builtin(&format!("sphere(2,{r})"));
        let t = Instant::now();
        let f = field(&imm, 17).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let nu_err = f.points.iter().map(|p| (p.nu_norm - 1.0 / r).abs()).fold(0.0, f64::max);
        let s = f.summary();
        let expect = 2.0 / (r * r);
        let r_err = f.points.iter().map(|p| (p.scalar - expect).abs() / expect).fold(0.0, f64::max);
        let ok = nu_err < 1e-8 && s.max_h < 1e-8 && s.max_torsion < 1e-8 && r_err < 1e-6 && secs < 10.0;
        pass &= ok;
        parts.push(format!(
            "r={r}: |nu|-1/r {nu_err:.1e}, II {:.1e}, A {:.1e}, rel R {r_err:.1e}, {secs:.2} s",
            s.max_h, s.max_torsion
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c3_sphere_rigidity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sphere = builtin("sphere(2,1)");
    let (mut worst_c, mut worst_r) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let g = random_element(2, 1.0, &mut rng);
        let imm = sphere.moved(&g);
        let opts = FrameOptions::default();
        let fit = detect_sphere(&field(&imm, 9).unwrap(), &frames(&imm, 9, &opts), 1e-7).unwrap();
        let want = apply(&g, &HPoint::origin(2)).unwrap();
        let dc = fit.center.to_vec().iter().zip(want.to_vec()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_c = worst_c.max(dc);
        worst_r = worst_r.max((fit.radius - 1.0).abs());
    }
    outcome(worst_c < 1e-6 && worst_r < 1e-6, format!("20 motions: center err {worst_c:.1e}, radius err {worst_r:.1e}"))
}

fn c4_flat_rigidity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let flat = builtin("heis_sub(1,2)");
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let imm = flat.moved(&random_element(2, 1.0, &mut rng));
        let fit = detect_flat(&field(&imm, 9).unwrap(), &frames(&imm, 9, &FrameOptions::default()), 1e-7).unwrap();
        worst = worst.max(fit.image_residual);
    }
    outcome(worst < 1e-7, format!("20 motions: image residual {worst:.1e}"))
}

fn identity_suite(f: &InvariantField) -> (bool, String) {
    let s = f.summary();
    let incon = s.restriction.iter().copied().fold(0.0, f64::max);
    let nu_recovery = s.nu_recovery.unwrap_or(f64::INFINITY);
    let pass = incon < 1e-5 && s.gauss < 1e-5 && nu_recovery < 1e-5 && s.torsion_link < 1e-6;
    let detail = format!(
        "restriction {incon:.1e}, Gauss-like {:.1e}, nu_recovery {nu_recovery:.1e}, h|nu|-A {:.1e}, max |A| {:.2}",
        s.gauss, s.torsion_link, s.max_torsion
    );
    (pass, detail)
}

fn c5_identity_suite() -> Outcome {
    let literal = match field(&builtin("ellipsoid(2,1,1.3)"), 17) {
        Ok(f) => identity_suite(&f),
        Err(e) => (false, format!("ellipsoid(2,1,1.3) rejected: {e}")),
    };
    let sub = identity_suite(&field(&builtin("siegel_quadric(0.5)"), 17).unwrap());
    println!("    torsionful substitute siegel_quadric(0.5): {} ({})", if sub.0 { "pass" } else { "fail" }, sub.1);
    outcome(literal.0, literal.1)
}

fn c6_structure_equations() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let specs = [
        "heis_sub(1,2)",
        "plane",
        "sphere(2,1)",
        "sphere(3,2)",
        "holograph",
        "holograph(3)",
        "holograph(1,1,1)",
        "ellipsoid(2,1,1)",
        "ellipsoid(2,1,1.3)",
        "inverted_sphere",
        "inverted_plane",
        "siegel_quadric",
    ];
    let mut worst = 0.0f64;
    for spec in specs {
        let imm = builtin(spec);
        match darboux_frame(&imm, &cube(&imm, 5), &FrameOptions::default()) {
            Ok(f) => {
                let r = darboux_derivative(&f).structure_residual();
                worst = worst.max(r);
                pass &= r < 1e-8;
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{spec}: {e}"));
            }
        }
    }
    parts.insert(0, format!("AD worst {worst:.1e} over {} builtins", specs.len()));
    let fd = FrameOptions { mode: DerivMode::Fd, order: 2, ..FrameOptions::default() };
    for spec in ["sphere(2,1)", "holograph"] {
        let imm = builtin(spec);
        let res: Vec<f64> = [5usize, 9, 17]
            .iter()
            .map(|&k| {
                let patch: Vec<(f64, f64)> =
                    imm.chart.iter().map(|(a, b)| (0.5 * (a + b) - 0.2, 0.5 * (a + b) + 0.2)).collect();
                let f = darboux_frame(&imm, &Grid::new(&patch, &[k; 3]).unwrap(), &fd).unwrap();
                darboux_derivative(&f).structure_residual()
            })
            .collect();
        let orders: Vec<f64> = res.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        pass &= orders.iter().all(|&o| o >= 1.7);
        parts.push(format!("FD {spec} orders {:.2}, {:.2}", orders[0], orders[1]));
    }
    outcome(pass, parts.join("; "))
}

fn c7_uniqueness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let imm = builtin("holograph");
    let opts = FrameOptions::default();
    let base = frames(&imm, 5, &opts);
    let mc = darboux_derivative(&base);
    let orig: Vec<PSHElement> = base.points.iter().map(|p| PSHElement { n: 2, mat: p.f.clone() }).collect();
    let (mut d_mc, mut d_g) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let g = random_element(2, 1.0, &mut rng);
        let moved_opts = FrameOptions { seeds: Some(base.seeds.rotated(&g.rotation_block())), ..opts.clone() };
        let moved = frames(&imm.moved(&g), 5, &moved_opts);
        let mc2 = darboux_derivative(&moved);
        for (a, b) in mc.slots.iter().flatten().zip(mc2.slots.iter().flatten()) {
            d_mc = d_mc.max((&a.mat - &b.mat).amax());
        }
        let other: Vec<PSHElement> = moved.points.iter().map(|p| PSHElement { n: 2, mat: p.f.clone() }).collect();
        let (found, _) = congruence(&orig, &other).unwrap();
        d_g = d_g.max((&found.mat - &g.mat).amax());
    }
    outcome(d_mc < 1e-12 && d_g < 1e-10, format!("20 motions: Darboux derivative diff {d_mc:.1e}, motion err {d_g:.1e}"))
}

fn h1_curve_error(h: f64) -> f64 {
    let eta = rotating_curve_eta(1.3);
    let k = (1.0 / h).round() as usize;
    let phi = |s: f64| s + s * s / 2.0;
    let samples: Vec<DMatrix<f64>> = (0..=k).map(|i| &eta * (1.0 + i as f64 * h)).collect();
    let opts = IntegrateOptions { substeps: 1, ..IntegrateOptions::default() };
    let f = integrate_line(&samples, h, &DMatrix::identity(4, 4), &opts).unwrap();
    (f.last().unwrap() - exp_curve(&eta, phi(1.0))).amax()
}

fn c8_round_trip() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in ["heis_sub(1,2)", "sphere(2,1)", "holograph"] {
        let imm = builtin(spec);
        match round_trip(&imm, &cube(&imm, 17), &FrameOptions::default(), &IntegrateOptions::default()) {
            Ok(rt) => {
                let d = rt.diff.max();
                let c = rt.reconstruction.congruence_residual;
                pass &= d < 1e-5;
                parts.push(format!("{spec}: field diff {d:.1e}, frame congruence {c:.1e}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{spec}: {e}"));
            }
        }
    }
    let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&h| h1_curve_error(h)).collect();
    let orders: Vec<f64> = e.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    pass &= orders.iter().all(|o| (o - 4.0).abs() <= 0.5);
    parts.push(format!("H_1 curve RK4 orders {:.2}, {:.2}", orders[0], orders[1]));
    outcome(pass, parts.join("; "))
}

fn c9_curvature_determines_h() -> Outcome {
    let f = field(&builtin("holograph"), 17).unwrap();
    let (worst, count) = h_from_curvature_check(&f, 1e-10).unwrap();
    outcome(worst < 1e-6 && count > 0, format!("{count}/{} nondegenerate points, worst {worst:.1e}", f.points.len()))
}

fn c10_ricci_sign() -> Outcome {
    let f = field(&builtin("holograph"), 17).unwrap();
    let top = f.points.iter().map(|p| p.ricci_max_eigenvalue()).fold(f64::NEG_INFINITY, f64::max);
    outcome(top <= 1e-8, format!("largest Ricci eigenvalue {top:.1e}"))
}

fn c11_parser_corpus() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let mut failures = Vec::new();
    let mut valid = 0;
    for entry in std::fs::read_dir(root.join("valid")).unwrap() {
        let path = entry.unwrap().path();
        let src = std::fs::read_to_string(&path).unwrap();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        match parse(&src) {
            Ok(imm) => {
                let printed = imm.to_text();
                match parse(&printed) {
                    Ok(back) if back == imm && back.to_text() == printed => {}
                    _ => failures.push(format!("{name}: pretty-print does not round-trip")),
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
        valid += 1;
    }
    let expected = std::fs::read_to_string(root.join("invalid/EXPECTED")).unwrap();
    let mut invalid = 0;
    for line in expected.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let path = root.join("invalid").join(f[0]);
        let out = Command::new(env!("CARGO_BIN_EXE_cartan-heis"))
            .args(["invariants", "--grid", "3", "--surface"])
            .arg(&path)
            .output()
            .unwrap();
        let stderr = String::from_utf8_lossy(&out.stderr);
        let loc = format!("{}:{}:{}:", path.display(), f[2], f[3]);
        if out.status.code() != Some(2) || !stderr.contains(&loc) {
            failures.push(format!("{}: exit {:?}, stderr {}", f[0], out.status.code(), stderr.trim()));
        }
        invalid += 1;
    }
    let pass = failures.is_empty() && valid + invalid >= 30;
    outcome(pass, format!("{valid} valid, {invalid} invalid files{}", if pass { String::new() } else { format!(": {failures:?}") }))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("flat model invariants", c1_flat_model),
        ("sphere invariants", c2_sphere_invariants),
        ("sphere rigidity", c3_sphere_rigidity),
        ("flat rigidity", c4_flat_rigidity),
        ("identity suite on ellipsoid(2,1,1.3)", c5_identity_suite),
        ("structure equations", c6_structure_equations),
        ("uniqueness", c7_uniqueness),
        ("existence round trip", c8_round_trip),
        ("curvature determines II", c9_curvature_determines_h),
        ("vertical Ricci sign", c10_ricci_sign),
        ("parser corpus", c11_parser_corpus),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        println!(
            "criterion {:>2} {}: {} ({}) [{:.1} s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
