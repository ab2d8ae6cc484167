//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a verdict or a requested residual check
//! fails, 2 on malformed input.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::darboux::{darboux_derivative, darboux_frame, pullback_check, FrameOptions, Gauge, GaugeUsed};
use crate::dsl::{parse, parse_builtin_spec, Grid, Immersion};
use crate::error::{Error, Result};
use crate::invariants::{extract, InvariantField};
use crate::psh::{decompose, psh_validate, random_element, PSHElement};
use crate::reconstruct::{reconstruct, round_trip, IntegrateOptions};
use crate::report::{checked, num, stats, Format, Report};
use crate::rigidity::{classify_field, constant_curvature_check, detect_flat, detect_sphere, Verticality};
use crate::surface::{DerivMode, SurfaceMap};

pub const DEFAULT_GRID: usize = 17;

/// Tolerance names and defaults. Residual tolerances are scaled for finite differences.
pub const TOLERANCES: &[(&str, f64, bool)] = &[
    ("structure", 1e-8, true),
    ("tanaka_webster", 1e-8, true),
    ("restriction", 1e-5, true),
    ("gauss", 1e-5, true),
    ("curvature_torsion", 1e-5, true),
    ("nu_recovery", 1e-5, true),
    ("torsion_link", 1e-6, true),
    ("pullback", 1e-8, true),
    ("classify", 1e-7, false),
    ("flat", 1e-7, false),
    ("sphere", 1e-7, false),
    ("curvature", 1e-7, false),
    ("holonomy", 1e-6, false),
    ("drift", 1e-4, false),
    ("roundtrip", 1e-5, false),
    ("congruence", 1e-6, false),
];

#[derive(Parser, Debug)]
#[command(name = "cartan-heis", version, about = "Invariants, reconstruction and rigidity of submanifolds of the Heisenberg group")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract invariants on a grid and report them.
    Invariants(Common),
    /// Extract invariants and fail unless every identity residual is under tolerance.
    Check(Common),
    /// Classify by verticality and run the flat or sphere detector.
    Classify(ClassifyArgs),
    /// Rebuild the submanifold from its intrinsic data and report the sampled immersion.
    Reconstruct(Common),
    /// Reconstruct, re-extract and compare invariants.
    Roundtrip(Common),
    /// Split a PSH(n) matrix into translation and rotation.
    Decompose(DecomposeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    #[arg(long, value_enum, default_value = "text")]
    pub format: FormatArg,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// `builtin:NAME(args)` or a path to a surface file.
    #[arg(long)]
    pub surface: String,
    /// Samples per axis, either one count or one per chart coordinate.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<usize>,
    #[arg(long, value_enum, default_value = "ad")]
    pub mode: ModeArg,
    /// Tolerance override `NAME=VALUE`; repeatable.
    #[arg(long = "tol", value_parser = parse_tol)]
    pub tol: Vec<(String, f64)>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "canonical")]
    pub gauge: GaugeArg,
    /// Omit per-point tables.
    #[arg(long)]
    pub summary_only: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug, Clone)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Exit 1 unless this fit succeeds.
    #[arg(long, value_enum)]
    pub require: Option<RequireArg>,
}

#[derive(Args, Debug, Clone)]
pub struct DecomposeArgs {
    /// Row-major matrix entries separated by commas or whitespace.
    #[arg(long)]
    pub matrix: Option<String>,
    /// Heisenberg dimension of a random element when no matrix is given.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Text,
    Structured,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Ad,
    Fd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GaugeArg {
    Canonical,
    Sphere,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RequireArg {
    Flat,
    Sphere,
}

fn parse_tol(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    if !TOLERANCES.iter().any(|t| t.0 == k.trim()) {
        let names: Vec<&str> = TOLERANCES.iter().map(|t| t.0).collect();
        return Err(format!("unknown tolerance `{k}`; known: {}", names.join(", ")));
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("tolerance `{k}` must be positive"));
    }
    Ok((k.trim().to_string(), v))
}

/// Effective tolerances for a run.
pub fn tolerances(mode: DerivMode, overrides: &[(String, f64)]) -> BTreeMap<String, f64> {
    let mut t: BTreeMap<String, f64> =
        TOLERANCES.iter().map(|(k, v, scaled)| (k.to_string(), if *scaled { v * mode.tol_scale() } else { *v })).collect();
    for (k, v) in overrides {
        t.insert(k.clone(), *v);
    }
    t
}

/// A surface from `builtin:NAME(args)` or from a file.
pub fn load_surface(spec: &str) -> Result<Immersion> {
    if let Some(b) = spec.strip_prefix("builtin:") {
        return parse_builtin_spec(b);
    }
    let text = std::fs::read_to_string(spec).map_err(|e| Error::Io(format!("{spec}: {e}")))?;
    parse(&text)
}

fn grid_for(imm: &Immersion, counts: &[usize]) -> Result<Grid> {
    let d = imm.dim();
    let counts: Vec<usize> = match counts {
        [] => vec![DEFAULT_GRID; d],
        [k] => vec![*k; d],
        ks if ks.len() == d => ks.to_vec(),
        ks => return Err(Error::InvalidArgument(format!("grid has {} counts but the chart has {d} coordinates", ks.len()))),
    };
    if counts.iter().any(|&k| k < 3) {
        return Err(Error::InvalidArgument("grid needs at least 3 samples per axis".into()));
    }
    imm.grid(&counts)
}

struct Setup {
    imm: Immersion,
    grid: Grid,
    opts: FrameOptions,
    tol: BTreeMap<String, f64>,
}

fn setup(c: &Common) -> Result<Setup> {
    let imm = load_surface(&c.surface)?;
    let grid = grid_for(&imm, &c.grid)?;
    let mode = match c.mode {
        ModeArg::Ad => DerivMode::Ad,
        ModeArg::Fd => DerivMode::Fd,
    };
    let gauge = match c.gauge {
        GaugeArg::Canonical => Gauge::Canonical,
        GaugeArg::Sphere => Gauge::Sphere,
    };
    let opts = FrameOptions { mode, gauge, ..FrameOptions::default() };
    Ok(Setup { imm, grid, opts, tol: tolerances(mode, &c.tol) })
}

fn config(c: &Common, s: &Setup) -> Value {
    json!({
        "surface": c.surface,
        "label": s.imm.label(),
        "n": s.imm.n,
        "m": s.imm.m,
        "grid": s.grid.counts,
        "mode": match s.opts.mode { DerivMode::Ad => "AD", DerivMode::Fd => "FD" },
        "gauge": format!("{:?}", c.gauge).to_lowercase(),
        "seed": c.seed,
        "tolerances": s.tol,
    })
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|r| Value::Array((0..m.ncols()).map(|c| num(m[(r, c)])).collect())).collect())
}

fn gauge_name(g: GaugeUsed) -> &'static str {
    match g {
        GaugeUsed::Canonical => "canonical",
        GaugeUsed::Neighbor => "neighbor",
        GaugeUsed::Sphere => "sphere",
    }
}

/// Summary statistics, residuals and per-point tables of an invariant field.
fn fill_invariants(r: &mut Report, field: &InvariantField, tol: &BTreeMap<String, f64>, tables: bool) {
    let p = &field.points;
    let nu: Vec<f64> = p.iter().map(|q| q.nu_norm).collect();
    let h: Vec<f64> = p.iter().map(|q| q.h_norm2().sqrt()).collect();
    let a: Vec<f64> = p.iter().map(|q| q.torsion_norm2().sqrt()).collect();
    let rr: Vec<f64> = p.iter().map(|q| q.scalar).collect();
    let class = classify_field(field, tol["classify"]);
    r.set("class", Value::String(class.class.name().into()));
    r.set("nu", stats(&nu));
    r.set("II.norm", stats(&h));
    r.set("torsion.norm", stats(&a));
    r.set("webster.R", stats(&rr));
    let s = field.summary();
    r.set("residuals.tanaka_webster", checked(s.tanaka_webster, tol["tanaka_webster"]));
    r.set(
        "residuals.restriction",
        Value::Array(s.restriction.iter().map(|&v| checked(v, tol["restriction"])).collect()),
    );
    r.set("residuals.gauss", checked(s.gauss, tol["gauss"]));
    if let Some(v) = s.curvature_torsion {
        r.set("residuals.curvature_torsion", checked(v, tol["curvature_torsion"]));
    }
    if let Some(v) = s.nu_recovery {
        r.set("residuals.nu_recovery", checked(v, tol["nu_recovery"]));
    }
    r.set("residuals.torsion_link", checked(s.torsion_link, tol["torsion_link"]));
    r.set("residuals.h_symmetry", checked(s.h_symmetry, tol["tanaka_webster"]));
    r.set("residuals.normal_skew", checked(s.normal_skew, tol["tanaka_webster"]));
    let mut gauges: BTreeMap<&str, usize> = BTreeMap::new();
    for q in p {
        *gauges.entry(gauge_name(q.gauge)).or_default() += 1;
    }
    r.set("diagnostics.gauges", json!(gauges));
    r.set("diagnostics.frame_continuity", num(field.continuity));
    r.set("diagnostics.seeds", json!({ "tangent": field.seeds.tangent, "normal": field.seeds.normal }));
    if tables {
        let rows: Vec<Value> = p
            .iter()
            .map(|q| {
                json!({
                    "u": q.u.iter().map(|&v| num(v)).collect::<Vec<_>>(),
                    "nu": num(q.nu_norm),
                    "II": num(q.h_norm2().sqrt()),
                    "torsion": num(q.torsion_norm2().sqrt()),
                    "R": num(q.scalar),
                })
            })
            .collect();
        r.set("points", Value::Array(rows));
    }
}

fn fill_structure(r: &mut Report, s: &Setup) -> Result<()> {
    let frames = darboux_frame(&s.imm, &s.grid, &s.opts)?;
    let mc = darboux_derivative(&frames);
    r.set("residuals.structure", checked(mc.structure_residual(), s.tol["structure"]));
    r.set("residuals.pullback", checked(pullback_check(&frames).max(), s.tol["pullback"]));
    Ok(())
}

/// Outcome of a command: the report and whether its verdicts passed.
pub struct Outcome {
    pub report: Report,
    pub pass: bool,
    pub format: Format,
    pub out: Option<PathBuf>,
}

fn format_of(o: &Output) -> Format {
    match o.format {
        FormatArg::Text => Format::Text,
        FormatArg::Structured => Format::Structured,
    }
}

fn outcome(report: Report, pass: bool, o: &Output) -> Outcome {
    Outcome { report, pass, format: format_of(o), out: o.out.clone() }
}

pub fn execute(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Invariants(c) | Command::Check(c) => {
            let s = setup(c)?;
            let name = if matches!(cmd, Command::Check(_)) { "check" } else { "invariants" };
            let mut r = Report::new(name, config(c, &s));
            let field = extract(&s.imm, &s.grid, &s.opts)?;
            fill_invariants(&mut r, &field, &s.tol, !c.summary_only);
            fill_structure(&mut r, &s)?;
            let pass = name == "invariants" || r.all_pass();
            Ok(outcome(r, pass, &c.output))
        }
        Command::Classify(a) => {
            let c = &a.common;
            let s = setup(c)?;
            let mut r = Report::new("classify", config(c, &s));
            let field = extract(&s.imm, &s.grid, &s.opts)?;
            fill_invariants(&mut r, &field, &s.tol, !c.summary_only);
            let class = classify_field(&field, s.tol["classify"]);
            r.set("verdict.class", json!(class));
            let frames = darboux_frame(&s.imm, &s.grid, &s.opts)?;
            let mut flat_ok = false;
            let mut sphere_ok = false;
            if class.class == Verticality::Vertical {
                match detect_flat(&field, &frames, s.tol["flat"]) {
                    Ok(fit) => {
                        r.set("fits.flat.motion", matrix_json(&fit.motion.mat));
                        r.set("fits.flat.image_residual", checked(fit.image_residual, s.tol["flat"]));
                        r.set("fits.flat.phase_closure", num(fit.phase_closure));
                        flat_ok = fit.image_residual < s.tol["flat"];
                    }
                    Err(e) => r.set("fits.flat.error", Value::String(e.to_string())),
                }
            }
            if class.class == Verticality::CompletelyNonVertical {
                match detect_sphere(&field, &frames, s.tol["sphere"]) {
                    Ok(fit) => {
                        r.set("fits.sphere.center", json!(fit.center.to_vec().iter().map(|&v| num(v)).collect::<Vec<_>>()));
                        r.set("fits.sphere.radius", num(fit.radius));
                        r.set("fits.sphere.center_residual", checked(fit.center_residual, s.tol["sphere"]));
                        r.set("fits.sphere.radius_residual", checked(fit.radius_residual, s.tol["sphere"]));
                        sphere_ok = fit.center_residual < s.tol["sphere"] && fit.radius_residual < s.tol["sphere"];
                    }
                    Err(e) => r.set("fits.sphere.error", Value::String(e.to_string())),
                }
                let cc = constant_curvature_check(&field, s.tol["curvature"])?;
                r.set("fits.curvature", json!(cc));
            }
            let pass = match a.require {
                None => true,
                Some(RequireArg::Flat) => flat_ok,
                Some(RequireArg::Sphere) => sphere_ok,
            };
            Ok(outcome(r, pass, &c.output))
        }
        Command::Reconstruct(c) | Command::Roundtrip(c) => {
            let s = setup(c)?;
            let trip = matches!(cmd, Command::Roundtrip(_));
            let mut r = Report::new(if trip { "roundtrip" } else { "reconstruct" }, config(c, &s));
            let iopts = IntegrateOptions { threshold: s.tol["holonomy"], drift_bound: s.tol["drift"], ..IntegrateOptions::default() };
            let (rec, rt) = if trip {
                let rt = round_trip(&s.imm, &s.grid, &s.opts, &iopts)?;
                (rt.reconstruction.clone(), Some(rt))
            } else {
                (reconstruct(&s.imm, &s.grid, &s.opts, &iopts)?, None)
            };
            let sol = &rec.solution;
            r.set("integration.method", Value::String(sol.method.into()));
            r.set("integration.substeps", json!(sol.substeps));
            if let Some(h) = sol.holonomy_ratio {
                r.set("integration.holonomy", checked(h, s.tol["holonomy"]));
            }
            r.set("integration.congruence", checked(rec.congruence_residual, s.tol["congruence"]));
            fill_invariants(&mut r, &rec.original, &s.tol, false);
            if !c.summary_only {
                let rows: Vec<Value> = sol
                    .grid
                    .points()
                    .iter()
                    .zip(sol.positions())
                    .map(|(u, x)| json!({ "u": u.iter().map(|&v| num(v)).collect::<Vec<_>>(), "x": x.to_vec().iter().map(|&v| num(v)).collect::<Vec<_>>() }))
                    .collect();
                r.set("immersion", Value::Array(rows));
            }
            let mut pass = rec.congruence_residual < s.tol["congruence"];
            if let Some(rt) = rt {
                let t = s.tol["roundtrip"];
                r.set("roundtrip.nu", checked(rt.diff.nu, t));
                r.set("roundtrip.II", checked(rt.diff.h, t));
                r.set("roundtrip.torsion", checked(rt.diff.torsion, t));
                r.set("roundtrip.R", checked(rt.diff.scalar, t));
                pass &= rt.diff.max() < t;
            }
            Ok(outcome(r, pass, &c.output))
        }
        Command::Decompose(a) => {
            let g = match &a.matrix {
                Some(text) => parse_matrix(text, a.tol)?,
                None => random_element(a.n, 1.0, &mut ChaCha8Rng::seed_from_u64(a.seed)),
            };
            let mut r = Report::new(
                "decompose",
                json!({ "matrix": a.matrix, "n": g.n, "seed": a.seed, "tolerances": { "group": a.tol } }),
            );
            let (p, rot) = decompose(&g, a.tol)?;
            r.set("input", matrix_json(&g.mat));
            r.set("translation", json!(p.to_vec().iter().map(|&v| num(v)).collect::<Vec<_>>()));
            r.set("rotation", matrix_json(&rot));
            let d = psh_validate(&g.mat, a.tol);
            r.set("diagnostics.orthonormality", checked(d.orthonormality, a.tol));
            r.set("diagnostics.j_compat", checked(d.j_compat, a.tol));
            Ok(outcome(r, true, &a.output))
        }
    }
}

fn parse_matrix(text: &str, tol: f64) -> Result<PSHElement> {
    let vals: Vec<f64> = text
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("`{t}` is not a number"))))
        .collect::<Result<_>>()?;
    let size = (vals.len() as f64).sqrt().round() as usize;
    if size * size != vals.len() || size < 4 || size % 2 != 0 {
        return Err(Error::Shape(format!("{} entries do not form a (2n+2)×(2n+2) matrix", vals.len())));
    }
    PSHElement::from_matrix(DMatrix::from_row_slice(size, size, &vals), tol)
}

/// Error text with a `file:line:col` prefix where the error has a location.
pub fn describe(err: &Error, surface: Option<&str>) -> String {
    let loc = match err {
        Error::Syntax { line, col, .. } | Error::UndeclaredParameter { line, col, .. } | Error::DimensionMismatch { line, col, .. } => {
            Some((*line, *col))
        }
        _ => None,
    };
    match (loc, surface) {
        (Some((l, c)), Some(path)) => format!("{path}:{l}:{c}: {err}"),
        _ => err.to_string(),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_input_error() {
        2
    } else {
        1
    }
}

fn surface_of(cmd: &Command) -> Option<&str> {
    match cmd {
        Command::Invariants(c) | Command::Check(c) | Command::Reconstruct(c) | Command::Roundtrip(c) => Some(&c.surface),
        Command::Classify(a) => Some(&a.common.surface),
        Command::Decompose(_) => None,
    }
}

fn write_report(o: &Outcome) -> Result<()> {
    let text = o.report.serialize(o.format);
    match &o.out {
        Some(p) => write_file(p, &text),
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io(format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

fn write_file(p: &Path, text: &str) -> Result<()> {
    std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Ok(v) = std::env::var("CARTAN_HEIS_THREADS") {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => {
                eprintln!("error: CARTAN_HEIS_THREADS must be a positive integer, got `{v}`");
                return 2;
            }
        }
    }
    let result = execute(&cli.command).and_then(|o| write_report(&o).map(|_| o.pass));
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {}", describe(&e, surface_of(&cli.command)));
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_overrides_and_scaling() {
        let t = tolerances(DerivMode::Fd, &[("gauss".into(), 0.5)]);
        assert_eq!(t["gauss"], 0.5);
        assert_eq!(t["structure"], 1e-8 * crate::surface::FD_TOL_SCALE);
        assert_eq!(t["classify"], 1e-7);
        assert!(parse_tol("nope=1").is_err());
        assert!(parse_tol("gauss=-1").is_err());
    }

    #[test]
    fn grids() {
        let imm = parse_builtin_spec("sphere(2,1)").unwrap();
        assert_eq!(grid_for(&imm, &[]).unwrap().counts, vec![17; 3]);
        assert_eq!(grid_for(&imm, &[5]).unwrap().counts, vec![5; 3]);
        assert!(grid_for(&imm, &[5, 5]).is_err());
        assert!(grid_for(&imm, &[2, 5, 5]).is_err());
    }

    #[test]
    fn located_errors() {
        let e = Error::Syntax { line: 3, col: 7, msg: "unexpected token".into() };
        assert_eq!(describe(&e, Some("bad.srf")), "bad.srf:3:7: syntax error at line 3, column 7: unexpected token");
        assert_eq!(exit_code(&e), 2);
        assert_eq!(exit_code(&Error::NotFlat(1.0)), 1);
    }

    #[test]
    fn matrices() {
        let g = parse_matrix("1 0 0 0; 0 1 0 0; 0 0 1 0; 0 0 0 1", 1e-12).unwrap();
        assert_eq!(g.n, 1);
        assert!(parse_matrix("1 2 3", 1e-12).is_err());
    }
}
