//! Plain-text dump of a program, one block matrix at a time.
//!
//! ```text
//! sdp 1
//! var W sym 2
//! objective 0
//! lin 0 1
//! quad 1 0.1
//! constraint schur psd 2 2 0
//! const
//! 0 1
//! 1 0
//! term 0
//! 1 0
//! 0 0
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so parsing a dump gives
//! back the identical program.

use std::fmt::Write as _;

use super::{AffExpr, Sense, SdpProgram, VarShape};
use crate::error::{Error, Result};
use crate::linalg::Mat;

fn write_matrix(out: &mut String, m: &Mat) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

pub fn write_program(p: &SdpProgram) -> String {
    let mut out = String::from("sdp 1\n");
    for v in p.vars() {
        let shape = match v.var.shape {
            VarShape::Scalar => "scalar".to_string(),
            VarShape::Full { rows, cols } => format!("full {rows} {cols}"),
            VarShape::Symmetric { n } => format!("sym {n}"),
        };
        let _ = writeln!(out, "var {} {shape}", v.name);
    }
    let obj = p.objective();
    let _ = writeln!(out, "objective {:?}", obj.constant);
    for (k, c) in &obj.linear {
        let _ = writeln!(out, "lin {k} {c:?}");
    }
    for (k, w) in &obj.quadratic {
        let _ = writeln!(out, "quad {k} {w:?}");
    }
    for c in p.constraints() {
        let sense = match c.sense {
            Sense::Psd => "psd",
            Sense::Nsd => "nsd",
            Sense::Zero => "zero",
        };
        let (r, cols) = c.expr.shape();
        let _ = writeln!(out, "constraint {} {sense} {r} {cols} {:?}", c.name, c.margin);
        out.push_str("const\n");
        write_matrix(&mut out, c.expr.constant_part());
        for (k, m) in c.expr.terms() {
            let _ = writeln!(out, "term {k}");
            write_matrix(&mut out, m);
        }
        out.push_str("end\n");
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                self.line = i + 1;
                return Some(t);
            }
        }
        None
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn expect(&mut self) -> Result<&'a str> {
        self.next().ok_or_else(|| self.err("unexpected end of input"))
    }
}

fn num<T: std::str::FromStr>(lines: &Lines, tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| lines.err(format!("expected {what}")))
}

fn read_matrix(lines: &mut Lines, rows: usize, cols: usize) -> Result<Mat> {
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        let l = lines.expect()?;
        let vals: Vec<&str> = l.split_whitespace().collect();
        if vals.len() != cols {
            return Err(lines.err(format!("expected {cols} entries, found {}", vals.len())));
        }
        for (j, v) in vals.into_iter().enumerate() {
            m[(i, j)] = num(lines, Some(v), "a number")?;
        }
    }
    Ok(m)
}

pub fn parse_program(text: &str) -> Result<SdpProgram> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.expect()?;
    if header != "sdp 1" {
        return Err(lines.err("missing 'sdp 1' header"));
    }
    let mut p = SdpProgram::new();
    while let Some(l) = lines.next() {
        let mut tok = l.split_whitespace();
        match tok.next() {
            Some("var") => {
                let name = tok.next().ok_or_else(|| lines.err("variable name"))?;
                let shape = match tok.next() {
                    Some("scalar") => VarShape::Scalar,
                    Some("sym") => VarShape::Symmetric {
                        n: num(&lines, tok.next(), "size")?,
                    },
                    Some("full") => VarShape::Full {
                        rows: num(&lines, tok.next(), "rows")?,
                        cols: num(&lines, tok.next(), "cols")?,
                    },
                    _ => return Err(lines.err("unknown variable shape")),
                };
                p.add_var(name, shape);
            }
            Some("objective") => {
                p.objective.constant = num(&lines, tok.next(), "objective constant")?;
            }
            Some("lin") => {
                let k: usize = num(&lines, tok.next(), "index")?;
                let c: f64 = num(&lines, tok.next(), "coefficient")?;
                p.objective.linear.insert(k, c);
            }
            Some("quad") => {
                let k: usize = num(&lines, tok.next(), "index")?;
                let w: f64 = num(&lines, tok.next(), "weight")?;
                p.objective.quadratic.insert(k, w);
            }
            Some("constraint") => {
                let name = tok.next().ok_or_else(|| lines.err("constraint name"))?;
                let sense = match tok.next() {
                    Some("psd") => Sense::Psd,
                    Some("nsd") => Sense::Nsd,
                    Some("zero") => Sense::Zero,
                    _ => return Err(lines.err("unknown constraint sense")),
                };
                let rows: usize = num(&lines, tok.next(), "rows")?;
                let cols: usize = num(&lines, tok.next(), "cols")?;
                let margin: f64 = num(&lines, tok.next(), "margin")?;
                if lines.expect()? != "const" {
                    return Err(lines.err("expected 'const'"));
                }
                let mut expr = AffExpr::constant(read_matrix(&mut lines, rows, cols)?);
                loop {
                    let l = lines.expect()?;
                    if l == "end" {
                        break;
                    }
                    let k = match l.strip_prefix("term ") {
                        Some(idx) => num::<usize>(&lines, Some(idx.trim()), "term index")?,
                        None => return Err(lines.err("expected 'term' or 'end'")),
                    };
                    if k >= p.num_scalars() {
                        return Err(lines.err(format!("term index {k} out of range")));
                    }
                    let m = read_matrix(&mut lines, rows, cols)?;
                    expr.terms.insert(k, m);
                }
                // stored expressions are already symmetrized; keep them verbatim
                p.constraints.push(super::Constraint {
                    name: name.to_string(),
                    expr,
                    sense,
                    margin,
                });
            }
            _ => return Err(lines.err(format!("unrecognised line '{l}'"))),
        }
    }
    let n = p.num_scalars();
    if p
        .objective
        .linear
        .keys()
        .chain(p.objective.quadratic.keys())
        .any(|k| *k >= n)
    {
        return Err(Error::Parse {
            line: lines.line,
            msg: "objective index out of range".into(),
        });
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::super::{solve, SolveOptions};
    use super::*;

    fn sample() -> SdpProgram {
        let mut p = SdpProgram::new();
        let w = p.symmetric("W", 2);
        let k = p.full("K", 1, 2);
        let t = p.scalar("t");
        let one = AffExpr::identity(1);
        p.psd(
            "schur",
            AffExpr::blocks(&[
                &[&w.expr(), &k.expr().transpose()],
                &[&k.expr(), &one],
            ]),
        )
        .unwrap();
        p.constrain("t", t.expr(), Sense::Psd, 0.1).unwrap();
        p.zero(
            "pin",
            k.expr().add_constant(&Mat::from_row_slice(1, 2, &[-1.0, 0.3])),
        )
        .unwrap();
        p.minimize_trace(&w.expr()).unwrap();
        p.minimize(&t.expr().scale(1.0 / 3.0)).unwrap();
        p.add_frobenius_sq(&w, 0.01);
        p
    }

    #[test]
    fn dump_parses_back_to_the_same_program() {
        let p = sample();
        let text = write_program(&p);
        let q = parse_program(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, write_program(&q));
        let (a, b) = (
            solve(&p, &SolveOptions::default()),
            solve(&q, &SolveOptions::default()),
        );
        assert!(a.is_optimal());
        assert!((a.objective - b.objective).abs() <= 1e-9);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_program("sdp 1\nvar x blob\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_program("nope").is_err());
        assert!(parse_program("sdp 1\nvar x scalar\nlin 4 1.0\n").is_err());
    }
}
