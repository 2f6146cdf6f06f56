//! Plain-text dump of a [`QpProblem`] for offline debugging.
//!
//! ```text
//! qp v1
//! n <variables> m <inequalities>
//! H
//! <n rows of n numbers>
//! f
//! <n numbers>
//! lb
//! <n numbers>
//! ub
//! <n numbers>
//! G
//! <m rows of n numbers>
//! g
//! <m numbers>
//! ```
//!
//! Numbers are written in shortest round-trip scientific form, so parsing a
//! dump gives back the identical problem. Infinite bounds are `inf` / `-inf`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::QpProblem;
use crate::error::QpError;

const HEADER: &str = "qp v1";

fn write_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

impl QpProblem {
    pub fn to_text(&self) -> String {
        let n = self.n_variables();
        let m = self.n_inequalities();
        let mut out = format!("{HEADER}\nn {n} m {m}\nH\n");
        for i in 0..n {
            write_row(&mut out, self.hessian.row(i).iter());
        }
        for (tag, v) in [("f", &self.linear), ("lb", &self.lower), ("ub", &self.upper)] {
            out.push_str(tag);
            out.push('\n');
            write_row(&mut out, v.iter());
        }
        out.push_str("G\n");
        for j in 0..m {
            write_row(&mut out, self.constraint_matrix.row(j).iter());
        }
        out.push_str("g\n");
        write_row(&mut out, self.constraint_bound.iter());
        out
    }

    pub fn from_text(text: &str) -> Result<Self, QpError> {
        let mut r = Reader {
            lines: text.lines().collect(),
            at: 0,
        };
        if r.line("header")?.trim() != HEADER {
            return Err(bad("unknown header"));
        }
        let dims: Vec<&str> = r.line("dimensions")?.split_whitespace().collect();
        let (n, m) = match dims.as_slice() {
            ["n", n, "m", m] => (
                n.parse::<usize>().map_err(|_| bad("bad n"))?,
                m.parse::<usize>().map_err(|_| bad("bad m"))?,
            ),
            _ => return Err(bad("bad dimension line")),
        };
        r.section("H")?;
        let h = r.rows(n, n)?;
        let f = r.vector("f", n)?;
        let lb = r.vector("lb", n)?;
        let ub = r.vector("ub", n)?;
        r.section("G")?;
        let g = r.rows(m, n)?;
        let bound = r.vector("g", m)?;
        Ok(QpProblem {
            hessian: DMatrix::from_row_slice(n, n, &h),
            linear: f,
            lower: lb,
            upper: ub,
            constraint_matrix: DMatrix::from_row_slice(m, n, &g),
            constraint_bound: bound,
        })
    }
}

fn bad(m: &str) -> QpError {
    QpError::Malformed(format!("qp text: {m}"))
}

struct Reader<'a> {
    lines: Vec<&'a str>,
    at: usize,
}

impl<'a> Reader<'a> {
    fn line(&mut self, what: &str) -> Result<&'a str, QpError> {
        let l = self.lines.get(self.at).ok_or_else(|| bad(&format!("missing {what}")))?;
        self.at += 1;
        Ok(l)
    }

    fn section(&mut self, tag: &str) -> Result<(), QpError> {
        if self.line(tag)?.trim() != tag {
            return Err(bad(&format!("expected section `{tag}`")));
        }
        Ok(())
    }

    fn numbers(&mut self, len: usize) -> Result<Vec<f64>, QpError> {
        // An empty vector may be written as a blank line or omitted at the end.
        let line = if len == 0 { self.line("row").unwrap_or("") } else { self.line("row")? };
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(&format!("bad number `{t}`"))))
            .collect::<Result<_, _>>()?;
        if v.len() != len {
            return Err(bad(&format!("expected {len} numbers, found {}", v.len())));
        }
        Ok(v)
    }

    fn rows(&mut self, count: usize, len: usize) -> Result<Vec<f64>, QpError> {
        let mut out = Vec::with_capacity(count * len);
        for _ in 0..count {
            out.extend(self.numbers(len)?);
        }
        Ok(out)
    }

    fn vector(&mut self, tag: &str, len: usize) -> Result<DVector<f64>, QpError> {
        self.section(tag)?;
        Ok(DVector::from_vec(self.numbers(len)?))
    }
}
