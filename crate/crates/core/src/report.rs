//! Text and JSON renderings of a [`Report`], and the solution file format
//! (`n m` header, `m` rows of `F`, `m` rows of `G`).

use std::fmt::Write as _;

use crate::linalg::Mat;
use crate::metrics::Report;
use crate::problem::{write_rows, ParseError};

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "unavailable".to_string(), |v| format!("{v:.16e}"))
}

/// `key=value` lines followed by the `F` and `G` blocks when given.
pub fn format_text(rep: &Report, gains: Option<(&Mat, &Mat)>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "precs={:.16e}", rep.precs);
    let _ = writeln!(out, "deltaF2={}", opt(rep.delta_f2));
    let _ = writeln!(out, "normF={:.16e}", rep.norms.norm_f);
    let _ = writeln!(out, "normG={:.16e}", rep.norms.norm_g);
    let _ = writeln!(out, "kappaXGF={}", opt(rep.norms.kappa_xgf));
    let _ = writeln!(out, "kappaX={}", opt(rep.norms.kappa_eigvec));
    let _ = writeln!(out, "residualA={}", opt(rep.residual_a));
    let _ = writeln!(out, "residualE={}", opt(rep.residual_e));
    let _ = writeln!(out, "infinite_count={}", rep.infinite_count);
    let _ = writeln!(out, "finite_count={}", rep.finite_count);
    let _ = writeln!(out, "regular={}", rep.regular);
    let _ = writeln!(out, "index_ok={}", rep.index_ok);
    let _ = writeln!(out, "verdict={}", if rep.verdict { "pass" } else { "fail" });
    for f in &rep.failures {
        let _ = writeln!(out, "failure={f}");
    }
    if let Some((f, g)) = gains {
        out.push_str("F\n");
        write_rows(&mut out, f);
        out.push_str("G\n");
        write_rows(&mut out, g);
    }
    out
}

pub fn format_json(rep: &Report) -> String {
    serde_json::to_string_pretty(rep).expect("report serializes")
}

pub fn write_solution(f: &Mat, g: &Mat) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", f.ncols(), f.nrows());
    out.push_str("# F\n");
    write_rows(&mut out, f);
    out.push_str("# G\n");
    write_rows(&mut out, g);
    out
}

/// Reads `(F, G)`. Non-finite entries are rejected with their line number.
pub fn parse_solution(text: &str) -> Result<(Mat, Mat), ParseError> {
    let mut lines = text.lines().enumerate().filter_map(|(i, line)| {
        let toks: Vec<&str> = line.split('#').next().unwrap_or("").split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    });
    let (hl, header) = lines.next().ok_or(ParseError { line: 1, message: "missing header `n m`".into() })?;
    let dims: Vec<usize> = header.iter().map(|t| t.parse::<usize>()).collect::<Result<_, _>>().map_err(|_| ParseError { line: hl, message: "malformed header".into() })?;
    let [n, m] = dims[..] else {
        return Err(ParseError { line: hl, message: "malformed header: expected `n m`".into() });
    };
    let mut read = |name: &str| -> Result<Mat, ParseError> {
        let mut mat = Mat::zeros(m, n);
        for i in 0..m {
            let (ln, toks) = lines.next().ok_or(ParseError { line: hl, message: format!("{name}: expected {m} rows") })?;
            if toks.len() != n {
                return Err(ParseError { line: ln, message: format!("{name}: row has {} entries, expected {n}", toks.len()) });
            }
            for (j, t) in toks.iter().enumerate() {
                let v: f64 = t.parse().map_err(|_| ParseError { line: ln, message: format!("non-numeric token `{t}`") })?;
                if !v.is_finite() {
                    return Err(ParseError { line: ln, message: format!("non-finite value `{t}`") });
                }
                mat[(i, j)] = v;
            }
        }
        Ok(mat)
    };
    let f = read("F")?;
    let g = read("G")?;
    Ok((f, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solution_round_trip() {
        let f = Mat::from_row_slice(1, 2, &[0.1, -2.5e-17]);
        let g = Mat::from_row_slice(1, 2, &[3.0, 1.0 / 3.0]);
        let (f2, g2) = parse_solution(&write_solution(&f, &g)).unwrap();
        assert_eq!((f, g), (f2, g2));
    }

    #[test]
    fn solution_rejects_nan() {
        let err = parse_solution("2 1\n0 NaN\n0 0\n").unwrap_err();
        assert_eq!(err.line, 2);
    }
}
