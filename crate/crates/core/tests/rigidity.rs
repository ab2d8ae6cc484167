use cartan_heis::darboux::{darboux_frame, FrameOptions};
use cartan_heis::dsl::parse_builtin_spec;
use cartan_heis::error::Error;
use cartan_heis::invariants::{extract, InvariantField};
use cartan_heis::darboux::DarbouxFrameField;
use cartan_heis::rigidity::{classify_field, constant_curvature_check, detect_flat, detect_sphere, Verticality};

fn fields(spec: &str, k: usize) -> (InvariantField, DarbouxFrameField) {
    let imm = parse_builtin_spec(spec).unwrap();
    let grid = imm.grid(&vec![k; imm.dim()]).unwrap();
    let opts = FrameOptions::default();
    (extract(&imm, &grid, &opts).unwrap(), darboux_frame(&imm, &grid, &opts).unwrap())
}

#[test]
fn verticality_classes() {
    assert_eq!(classify_field(&fields("heis_sub(1,2)", 3).0, 1e-7).class, Verticality::Vertical);
    assert_eq!(classify_field(&fields("sphere(2,1)", 3).0, 1e-7).class, Verticality::CompletelyNonVertical);
    assert_eq!(classify_field(&fields("siegel_quadric(0.5,0.8)", 5).0, 1e-7).class, Verticality::Mixed);
}

#[test]
fn unmoved_flat_subgroup_needs_no_motion() {
    let (f, fr) = fields("heis_sub(1,2)", 5);
    let fit = detect_flat(&f, &fr, 1e-7).unwrap();
    assert!(fit.image_residual < 1e-9, "{}", fit.image_residual);
}

#[test]
fn wrong_classes_are_reported() {
    let (f, fr) = fields("holograph", 3);
    assert!(matches!(detect_flat(&f, &fr, 1e-7), Err(Error::NotFlat(_))));
    let (f, fr) = fields("siegel_quadric", 3);
    assert!(matches!(detect_sphere(&f, &fr, 1e-7), Err(Error::NotTorsionFree(_))));
}

#[test]
fn sphere_curvature_scales_with_radius() {
    let (f, _) = fields("sphere(2,2)", 5);
    let rep = constant_curvature_check(&f, 1e-7).unwrap();
    assert!(rep.pass && rep.torsion_free);
    assert!((rep.mean - rep.expected).abs() < 1e-7, "{rep:?}");
}
