//! Canonical text form; parsing the output reproduces the same tree.

use super::{Expr, Immersion};

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Num(v) if v.is_sign_negative() => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

fn num(v: f64) -> String {
    if v.is_sign_negative() {
        format!("-{}", -v)
    } else {
        format!("{v}")
    }
}

fn write(e: &Expr, names: &[String], min: u8, out: &mut String) {
    let wrap = prec(e) < min;
    if wrap {
        out.push('(');
    }
    match e {
        Expr::Num(v) => out.push_str(&num(*v)),
        Expr::Pi => out.push_str("pi"),
        Expr::Param(i) => out.push_str(&names[*i]),
        Expr::Neg(a) => {
            out.push('-');
            write(a, names, 3, out);
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            write(a, names, 1, out);
            out.push_str(if matches!(e, Expr::Add(..)) { " + " } else { " - " });
            write(b, names, 2, out);
        }
        Expr::Mul(a, b) | Expr::Div(a, b) => {
            write(a, names, 2, out);
            out.push_str(if matches!(e, Expr::Mul(..)) { "*" } else { "/" });
            write(b, names, 3, out);
        }
        Expr::Pow(a, k) => {
            write(a, names, 5, out);
            out.push('^');
            out.push_str(&k.to_string());
        }
        Expr::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write(a, names, 0, out);
            out.push(')');
        }
    }
    if wrap {
        out.push(')');
    }
}

pub fn expr_to_text(e: &Expr, names: &[String]) -> String {
    let mut s = String::new();
    write(e, names, 0, &mut s);
    s
}

pub fn immersion_to_text(imm: &Immersion) -> String {
    let mut s = format!("surface {} {{\n  n = {};\n  m = {};\n", imm.label, imm.n, imm.m);
    s.push_str(&format!("  params = [{}];\n", imm.params.join(", ")));
    let chart: Vec<String> = imm.chart.iter().map(|(lo, hi)| format!("[{}, {}]", num(*lo), num(*hi))).collect();
    s.push_str(&format!("  chart = [{}];\n}}\n", chart.join(", ")));
    let n = imm.n;
    for (i, e) in imm.coords.iter().enumerate() {
        let lhs = if i < n {
            format!("x[{}]", i + 1)
        } else if i < 2 * n {
            format!("y[{}]", i - n + 1)
        } else {
            "t".to_string()
        };
        s.push_str(&format!("{lhs} = {};\n", expr_to_text(e, &imm.params)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn print_parse_is_identity_on_trees() {
        let src = "surface r { n = 1; m = 1; params = [u, v, w]; chart = [[-1, 1], [-1, 1], [-1, 1]]; }
            x[1] = -(u - v) - (w - u)*2/(3*v) + (-2)^3 + u^-2;
            y[1] = sin(cos(u))^2 - -v - (u^2)^3;
            t = 1/(u/v) + exp(-w*0.125) - ln(2 + u) + sqrt(pi);";
        let a = parse(src).unwrap();
        let text = a.to_text();
        let b = parse(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.to_text(), text);
    }

    #[test]
    fn negative_literals_print_with_leading_minus() {
        let names = vec!["u".to_string()];
        let e = Expr::Num(-2.5).pow(2).add(Expr::p(0).mul(Expr::Num(-1.0)));
        assert_eq!(expr_to_text(&e, &names), "(-2.5)^2 + u*-1");
    }
}
