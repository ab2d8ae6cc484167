//! Library of ready-made surfaces, built as expression trees.

use super::{Expr, Func, Immersion};
use crate::error::{Error, Result};

fn names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

fn sin(e: Expr) -> Expr {
    Expr::call(Func::Sin, e)
}

fn cos(e: Expr) -> Expr {
    Expr::call(Func::Cos, e)
}

/// `H_m ⊂ H_n`: `x_j = u_j`, `y_j = u_{m+j}`, `t = u_{2m+1}`, remaining coordinates zero.
pub fn heis_sub(m: usize, n: usize) -> Result<Immersion> {
    if m == 0 || m > n {
        return Err(Error::BadParameters(format!("heis_sub needs 1 ≤ m ≤ n, got m = {m}, n = {n}")));
    }
    let mut coords = vec![Expr::num(0.0); 2 * n + 1];
    for j in 0..m {
        coords[j] = Expr::p(j);
        coords[n + j] = Expr::p(m + j);
    }
    coords[2 * n] = Expr::p(2 * m);
    let label = if m == n { "plane".to_string() } else { "heis_sub".to_string() };
    Ok(Immersion { label, n, m, params: names("u", 2 * m + 1), chart: vec![(-1.0, 1.0); 2 * m + 1], coords })
}

/// Moduli `μ_1..μ_n` on the positive orthant of `S^{n−1}` in terms of angles `s_1..s_{n−1}`.
fn orthant_moduli(n: usize) -> Vec<Expr> {
    let mut out = Vec::with_capacity(n);
    let mut prefix: Option<Expr> = None;
    for k in 0..n {
        let factor = if k + 1 < n { Some(cos(Expr::p(k))) } else { None };
        let term = match (&prefix, factor) {
            (None, Some(f)) => f,
            (Some(p), Some(f)) => p.clone().mul(f),
            (Some(p), None) => p.clone(),
            (None, None) => Expr::num(1.0),
        };
        out.push(term);
        if k + 1 < n {
            let s = sin(Expr::p(k));
            prefix = Some(match prefix {
                None => s,
                Some(p) => p.mul(s),
            });
        }
    }
    out
}

/// `{(z, 0) : Σ |z_β|²/a_β² = 1}` with `z_β = a_β μ_β e^{iφ_β}`; equal axes give the sphere.
fn quadric(label: &str, axes: &[f64]) -> Result<Immersion> {
    let n = axes.len();
    if n < 2 {
        return Err(Error::BadParameters(format!("{label} needs n ≥ 2")));
    }
    if axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::BadParameters(format!("{label} axes must be positive")));
    }
    let mu = orthant_moduli(n);
    let mut coords = vec![Expr::num(0.0); 2 * n + 1];
    for b in 0..n {
        let phi = Expr::p(n - 1 + b);
        let rad = if axes[b] == 1.0 { mu[b].clone() } else { Expr::num(axes[b]).mul(mu[b].clone()) };
        coords[b] = rad.clone().mul(cos(phi.clone()));
        coords[n + b] = rad.mul(sin(phi));
    }
    let mut params = names("s", n - 1);
    params.extend(names("p", n));
    let mut chart = vec![(0.3, 1.2); n - 1];
    chart.extend(vec![(-1.0, 1.0); n]);
    Ok(Immersion { label: label.to_string(), n, m: n - 1, params, chart, coords })
}

pub fn sphere(n: usize, r: f64) -> Result<Immersion> {
    quadric("sphere", &vec![r; n])
}

pub fn ellipsoid(axes: &[f64]) -> Result<Immersion> {
    quadric("ellipsoid", axes)
}

fn cmul(a: &(Expr, Expr), b: &(Expr, Expr)) -> (Expr, Expr) {
    (
        a.0.clone().mul(b.0.clone()).sub(a.1.clone().mul(b.1.clone())),
        a.0.clone().mul(b.1.clone()).add(a.1.clone().mul(b.0.clone())),
    )
}

fn cscale(c: f64, a: (Expr, Expr)) -> (Expr, Expr) {
    (Expr::num(c).mul(a.0), Expr::num(c).mul(a.1))
}

/// Vertical graph `z_2 = z_1^k` in `H_2` (default `k = 2`).
pub fn holograph(k: i32) -> Result<Immersion> {
    if k < 2 {
        return Err(Error::BadParameters("holograph power must be at least 2".into()));
    }
    let z1 = (Expr::p(0), Expr::p(1));
    let mut w = z1.clone();
    for _ in 1..k {
        w = cmul(&w, &z1);
    }
    let coords = vec![z1.0, w.0, z1.1, w.1, Expr::p(2)];
    Ok(Immersion {
        label: "holograph".into(),
        n: 2,
        m: 1,
        params: names("u", 3),
        chart: vec![(-1.0, 1.0); 3],
        coords,
    })
}

/// Vertical graph `z_3 = a z_1² + b z_1 z_2 + c z_2²` in `H_3`.
pub fn holograph3(a: f64, b: f64, c: f64) -> Result<Immersion> {
    let z1 = (Expr::p(0), Expr::p(2));
    let z2 = (Expr::p(1), Expr::p(3));
    let q1 = cscale(a, cmul(&z1, &z1));
    let q2 = cscale(b, cmul(&z1, &z2));
    let q3 = cscale(c, cmul(&z2, &z2));
    let w = (q1.0.add(q2.0).add(q3.0), q1.1.add(q2.1).add(q3.1));
    let coords = vec![z1.0, z2.0, w.0, z1.1, z2.1, w.1, Expr::p(4)];
    Ok(Immersion {
        label: "holograph".into(),
        n: 3,
        m: 2,
        params: names("u", 5),
        chart: vec![(-0.8, 0.8); 5],
        coords,
    })
}

/// Composition with the inversion `σ(z, t) = (z/w, −t/|w|²)`, `w = t + i|z|²/2`.
///
/// `σ` is a CR diffeomorphism away from the origin (it is the Siegel-domain
/// inversion restricted to the boundary), so it maps pseudohermitian
/// submanifolds to CR submanifolds that are in general not congruent to the
/// original.
pub fn invert(imm: &Immersion) -> Immersion {
    let n = imm.n;
    let (x, y, t) = (&imm.coords[..n], &imm.coords[n..2 * n], &imm.coords[2 * n]);
    let mut rho: Option<Expr> = None;
    for b in 0..n {
        let sq = x[b].clone().pow(2).add(y[b].clone().pow(2));
        rho = Some(match rho {
            None => sq,
            Some(r) => r.add(sq),
        });
    }
    let rho = Expr::num(0.5).mul(rho.expect("n ≥ 1"));
    let den = t.clone().pow(2).add(rho.clone().pow(2));
    let mut coords = Vec::with_capacity(2 * n + 1);
    for b in 0..n {
        coords.push(x[b].clone().mul(t.clone()).add(y[b].clone().mul(rho.clone())).div(den.clone()));
    }
    for b in 0..n {
        coords.push(y[b].clone().mul(t.clone()).sub(x[b].clone().mul(rho.clone())).div(den.clone()));
    }
    coords.push(t.clone().neg().div(den));
    Immersion { coords, ..imm.clone() }
}

/// `σ(L_p S^3(r))` with `p = (c, 0, 0, 0, 0)`; the image is again a sphere, placed off the origin.
pub fn inverted_sphere(r: f64, c: f64) -> Result<Immersion> {
    if !(c > r && r > 0.0) {
        return Err(Error::BadParameters("inverted_sphere needs c > r > 0".into()));
    }
    let s = sphere(2, r)?;
    let mut coords = s.coords.clone();
    // Left translation by (c, 0, 0, 0, 0): x_1 += c, t += −c·y_1.
    coords[0] = coords[0].clone().add(Expr::num(c));
    coords[4] = Expr::num(-c).mul(coords[2].clone());
    let moved = Immersion { coords, ..s };
    Ok(Immersion { label: "inverted_sphere".into(), ..invert(&moved) })
}

/// `σ({z_2 = c})`: the inversion turns this vertical slice into a sphere.
pub fn inverted_plane(c: f64) -> Result<Immersion> {
    if c == 0.0 {
        return Err(Error::BadParameters("inverted_plane needs c ≠ 0".into()));
    }
    let mut base = heis_sub(1, 2)?;
    base.coords[1] = Expr::num(c);
    Ok(Immersion { label: "inverted_plane".into(), ..invert(&base) })
}

/// `{z_2 = c (w − is)²}` on the Siegel boundary `w = t + i|z|²/2`, parametrized by
/// `w = a + ib` and the phase of `z_1`: `|z_1|² = 2b − |z_2|²`, `t = a`.
/// Completely non-vertical with nonzero torsion for `c ≠ 0` and `s = 0`; `ν`
/// vanishes where `w = is`, so `s ∈ [0.6, 1]` gives a surface of mixed type.
pub fn siegel_quadric(c: f64, s: f64) -> Result<Immersion> {
    if c == 0.0 || c.abs() > 0.5 {
        return Err(Error::BadParameters("siegel_quadric needs 0 < |c| ≤ 0.5".into()));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::BadParameters("siegel_quadric shift must lie in [0, 1]".into()));
    }
    let w = (Expr::p(0), Expr::p(1).sub(Expr::num(s)));
    let g = cscale(c, cmul(&w, &w));
    let r2 = Expr::num(2.0).mul(Expr::p(1)).sub(g.0.clone().pow(2)).sub(g.1.clone().pow(2));
    let r = Expr::call(Func::Sqrt, r2);
    let coords = vec![r.clone().mul(cos(Expr::p(2))), g.0, r.mul(sin(Expr::p(2))), g.1, Expr::p(0)];
    Ok(Immersion {
        label: "siegel_quadric".into(),
        n: 2,
        m: 1,
        params: vec!["a".into(), "b".into(), "phi".into()],
        chart: vec![(-0.5, 0.5), (0.6, 1.0), (-1.0, 1.0)],
        coords,
    })
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v.fract() != 0.0 || !(1.0..=64.0).contains(&v) {
        return Err(Error::BadParameters(format!("{what} must be a small positive integer, got {v}")));
    }
    Ok(v as usize)
}

/// Constructs a builtin surface by name.
pub fn builtin(name: &str, args: &[f64]) -> Result<Immersion> {
    let bad = |msg: &str| Err(Error::BadParameters(format!("{name}: {msg}")));
    match name {
        "heis_sub" => match args {
            [m, n] => heis_sub(as_count(*m, "m")?, as_count(*n, "n")?),
            _ => bad("expected (m, n)"),
        },
        "plane" => match args {
            [] => heis_sub(1, 1),
            [n] => {
                let n = as_count(*n, "n")?;
                heis_sub(n, n)
            }
            _ => bad("expected (n)"),
        },
        "sphere" => match args {
            [] => sphere(2, 1.0),
            [n] => sphere(as_count(*n, "n")?, 1.0),
            [n, r] if *r > 0.0 => sphere(as_count(*n, "n")?, *r),
            _ => bad("expected (n, r) with r > 0"),
        },
        "holograph" => match args {
            [] => holograph(2),
            [k] => holograph(as_count(*k, "power")? as i32),
            [a, b, c] => holograph3(*a, *b, *c),
            _ => bad("expected (), (power) or (a, b, c)"),
        },
        "ellipsoid" => match args {
            [n, axes @ ..] if axes.len() == as_count(*n, "n")? => ellipsoid(axes),
            _ => bad("expected (n, a_1, ..., a_n)"),
        },
        "inverted_sphere" => match args {
            [] => inverted_sphere(1.0, 2.0),
            [r, c] => inverted_sphere(*r, *c),
            _ => bad("expected (r, c)"),
        },
        "inverted_plane" => match args {
            [] => inverted_plane(1.0),
            [c] => inverted_plane(*c),
            _ => bad("expected (c)"),
        },
        "siegel_quadric" => match args {
            [] => siegel_quadric(0.5, 0.0),
            [c] => siegel_quadric(*c, 0.0),
            [c, s] => siegel_quadric(*c, *s),
            _ => bad("expected (c) or (c, s)"),
        },
        _ => Err(Error::UnknownBuiltin(name.to_string())),
    }
}

/// Parses `NAME`, `NAME(a, b, ...)` or the same prefixed by `builtin:`.
pub fn parse_builtin_spec(spec: &str) -> Result<Immersion> {
    let s = spec.trim();
    let s = s.strip_prefix("builtin:").unwrap_or(s);
    let (name, args) = match s.find('(') {
        None => (s, Vec::new()),
        Some(i) => {
            let inner = s[i + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::BadParameters(format!("unbalanced parentheses in `{spec}`")))?;
            let args = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(|a| {
                        a.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::BadParameters(format!("`{}` is not a number", a.trim())))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            (&s[..i], args)
        }
    };
    builtin(name.trim(), &args)
}
