use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use cartan_heis_ffi::*;

fn message() -> String {
    let mut buf = vec![0u8; 512];
    let n = unsafe { ch_last_error_message(buf.as_mut_ptr().cast::<c_char>(), buf.len()) };
    buf.truncate(n.min(511));
    String::from_utf8(buf).unwrap()
}

fn builtin(spec: &str) -> *mut ChSurface {
    let spec = CString::new(spec).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ch_surface_builtin(spec.as_ptr(), &mut s) }, ChStatus::Ok);
    s
}

#[test]
fn sphere_through_handles() {
    unsafe {
        let s = builtin("sphere(2, 1)");
        let (mut n, mut m, mut d) = (0, 0, 0);
        assert_eq!(ch_surface_dims(s, &mut n, &mut m, &mut d), ChStatus::Ok);
        assert_eq!((n, m, d), (2, 1, 3));
        let mut f = ptr::null_mut();
        assert_eq!(ch_extract(s, [7usize].as_ptr(), 1, ChMode::Ad, &mut f), ChStatus::Ok);
        assert_eq!(ch_field_len(f), 343);
        let mut nu = vec![0.0; 343];
        assert_eq!(ch_field_nu(f, nu.as_mut_ptr(), nu.len()), ChStatus::Ok);
        assert!(nu.iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert_eq!(ch_field_nu(f, nu.as_mut_ptr(), 3), ChStatus::BufferTooSmall);
        let mut sum = ChSummary::default();
        assert_eq!(ch_field_summary(f, &mut sum), ChStatus::Ok);
        assert!((sum.scalar_min - 2.0).abs() < 1e-9 && sum.gauss < 1e-9 && sum.curvature_torsion < 1e-9);
        let mut class = ChClass::Mixed;
        assert_eq!(ch_field_classify(f, 1e-7, &mut class), ChStatus::Ok);
        assert_eq!(class, ChClass::CompletelyNonVertical);
        let mut center = [9.0; 5];
        let mut fit = ChSphereFit::default();
        assert_eq!(ch_field_sphere_fit(f, 1e-7, center.as_mut_ptr(), 5, &mut fit), ChStatus::Ok);
        assert!(center.iter().all(|c| c.abs() < 1e-9) && (fit.radius - 1.0).abs() < 1e-9);
        ch_field_free(f);
        ch_surface_free(s);
    }
}

#[test]
fn errors_carry_codes_and_locations() {
    unsafe {
        let src = CString::new("surface bad\nn = 2\nm = 1\nchart u in [0, 1], v in [0,1], w in [0, 1]\nx1 = u +* v\n").unwrap();
        let mut s = ptr::null_mut();
        let st = ch_surface_parse(src.as_ptr(), &mut s);
        assert!(matches!(st, ChStatus::Syntax | ChStatus::DimensionMismatch | ChStatus::UndeclaredParameter), "{st:?}");
        assert!(s.is_null());
        let (mut l, mut c) = (0, 0);
        ch_last_error_location(&mut l, &mut c);
        assert!(l > 0 && c > 0, "{}", message());

        let spec = CString::new("no_such_surface").unwrap();
        assert_eq!(ch_surface_builtin(spec.as_ptr(), &mut s), ChStatus::UnknownBuiltin);
        assert!(message().contains("no_such_surface"));
        assert_eq!(ch_surface_builtin(ptr::null(), &mut s), ChStatus::NullPointer);
        assert_eq!(ch_field_summary(ptr::null(), &mut ChSummary::default()), ChStatus::NullPointer);

        let h = builtin("holograph");
        let mut f = ptr::null_mut();
        assert_eq!(ch_extract(h, [5usize].as_ptr(), 1, ChMode::Ad, &mut f), ChStatus::Ok);
        let mut fit = ChSphereFit::default();
        let st = ch_field_sphere_fit(f, 1e-7, [0.0; 5].as_mut_ptr(), 5, &mut fit);
        assert_eq!(st, ChStatus::WrongClass, "{}", message());
        assert_eq!(ch_field_summary(f, &mut ChSummary::default()), ChStatus::Ok);
        assert_eq!(ch_last_error_message(ptr::null_mut(), 0), 0);
        ch_field_free(f);
        ch_surface_free(h);
    }
}

#[test]
fn decompose_vertical_translation() {
    let n = 1;
    let mut g = [0.0; 16];
    for i in 0..4 {
        g[i * 4 + i] = 1.0;
    }
    g[12] = 0.5;
    let (mut p, mut r) = ([0.0; 3], [0.0; 4]);
    let st = unsafe { ch_psh_decompose(n, g.as_ptr(), 1e-9, p.as_mut_ptr(), r.as_mut_ptr()) };
    assert_eq!(st, ChStatus::Ok, "{}", message());
    assert_eq!(r, [1.0, 0.0, 0.0, 1.0]);
    assert_eq!(p, [0.0, 0.0, 0.5]);
}

#[test]
fn header_compiles_and_links_from_c() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include/cartan_heis.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["ch_surface_builtin", "ch_extract", "ch_field_free", "CH_STATUS_NOT_CR_INVARIANT", "typedef struct ChField ChField"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libcartan_heis_ffi.a");
    if !lib.exists() {
        eprintln!("static library not built at {}; skipping C link", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("smoke.c");
    std::fs::write(
        &c,
        r#"#include <stdio.h>
#include "cartan_heis.h"
int main(void) {
    ChSurface *s = NULL;
    ChField *f = NULL;
    size_t k = 5;
    ChSummary sum;
    if (ch_surface_builtin("sphere(2,1)", &s) != CH_STATUS_OK) return 1;
    if (ch_extract(s, &k, 1, CH_MODE_AD, &f) != CH_STATUS_OK) return 2;
    if (ch_field_summary(f, &sum) != CH_STATUS_OK) return 3;
    printf("%zu %.6f\n", ch_field_len(f), sum.scalar_min);
    ch_field_free(f);
    ch_surface_free(s);
    return ch_surface_builtin("nope", &s) == CH_STATUS_UNKNOWN_BUILTIN ? 0 : 4;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let st = Command::new("cc")
        .arg(&c)
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(st.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{:?}", out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "125 2.000000");
}
