//! Plain-text dump of a [`ConicProgram`] for reproducing solver issues.
//!
//! ```text
//! conic-program 1
//! variables <n>
//! <index> <name>            (n lines)
//! objective <k> <offset>
//! <index> <coef>            (k lines, nonzero entries only)
//! cones <m>
//! cone <rows>               (then 1 + rows affine lines: rhs first)
//! equalities <p>
//! <affine>                  (p lines)
//! end
//! ```
//!
//! An affine line is `<constant> <terms> <index> <coef> ...`. Numbers are
//! written in shortest round-trip scientific notation, so a reloaded
//! program is bit-identical to the original.

use std::fmt::Write as _;

use super::{AffineExpr, ConicProgram, SocpError, VarId};

const HEADER: &str = "conic-program 1";

fn write_affine(out: &mut String, e: &AffineExpr) {
    let _ = write!(out, "{:e} {}", e.constant, e.terms.len());
    for (i, c) in &e.terms {
        let _ = write!(out, " {i} {c:e}");
    }
    out.push('\n');
}

pub fn to_text(p: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "variables {}", p.num_vars());
    for (i, name) in p.var_names().iter().enumerate() {
        let _ = writeln!(out, "{i} {name}");
    }
    let nz: Vec<(usize, f64)> = p.objective().iter().copied().enumerate().filter(|t| t.1 != 0.0).collect();
    let _ = writeln!(out, "objective {} {:e}", nz.len(), p.objective_offset());
    for (i, c) in nz {
        let _ = writeln!(out, "{i} {c:e}");
    }
    let _ = writeln!(out, "cones {}", p.cones().len());
    for c in p.cones() {
        let _ = writeln!(out, "cone {}", c.lhs.len());
        write_affine(&mut out, &c.rhs);
        for e in &c.lhs {
            write_affine(&mut out, e);
        }
    }
    let _ = writeln!(out, "equalities {}", p.equalities().len());
    for e in p.equalities() {
        write_affine(&mut out, e);
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Result<Vec<&'a str>, SocpError> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let l = l.trim();
                    if !l.is_empty() && !l.starts_with('#') {
                        return Ok(l.split_whitespace().collect());
                    }
                }
                None => return Err(self.err("unexpected end of input")),
            }
        }
    }

    fn err(&self, msg: &str) -> SocpError {
        SocpError::Parse { line: self.line, msg: msg.to_string() }
    }

    fn keyword(&mut self, kw: &str) -> Result<Vec<&'a str>, SocpError> {
        let t = self.next_tokens()?;
        if t.first() != Some(&kw) {
            return Err(self.err(&format!("expected `{kw}`")));
        }
        Ok(t[1..].to_vec())
    }

    fn count(&mut self, kw: &str) -> Result<usize, SocpError> {
        let t = self.keyword(kw)?;
        self.num(t.first())
    }

    fn num<T: std::str::FromStr>(&self, s: Option<&&str>) -> Result<T, SocpError> {
        s.and_then(|s| s.parse().ok()).ok_or_else(|| self.err("bad number"))
    }

    fn affine(&mut self) -> Result<AffineExpr, SocpError> {
        let t = self.next_tokens()?;
        let constant: f64 = self.num(t.first())?;
        let k: usize = self.num(t.get(1))?;
        if t.len() != 2 + 2 * k {
            return Err(self.err("term count mismatch"));
        }
        let mut terms = Vec::with_capacity(k);
        for q in 0..k {
            terms.push((self.num(t.get(2 + 2 * q))?, self.num(t.get(3 + 2 * q))?));
        }
        Ok(AffineExpr { terms, constant })
    }
}

pub fn from_text(text: &str) -> Result<ConicProgram, SocpError> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let head = lines.next_tokens()?;
    if head.join(" ") != HEADER {
        return Err(lines.err("missing header"));
    }
    let mut p = ConicProgram::new();
    let n: usize = lines.count("variables")?;
    for i in 0..n {
        let t = lines.next_tokens()?;
        let idx: usize = lines.num(t.first())?;
        if idx != i || t.len() != 2 {
            return Err(lines.err("variables must be listed in index order"));
        }
        p.add_var(t[1]).map_err(|e| lines.err(&e.to_string()))?;
    }
    let obj = lines.keyword("objective")?;
    let k: usize = lines.num(obj.first())?;
    p.add_objective_offset(lines.num(obj.get(1))?);
    for _ in 0..k {
        let t = lines.next_tokens()?;
        let i: usize = lines.num(t.first())?;
        if i >= n {
            return Err(lines.err("objective index out of range"));
        }
        p.add_objective(VarId(i), lines.num(t.get(1))?);
    }
    let m: usize = lines.count("cones")?;
    for _ in 0..m {
        let rows: usize = lines.count("cone")?;
        let rhs = lines.affine()?;
        let lhs = (0..rows).map(|_| lines.affine()).collect::<Result<Vec<_>, _>>()?;
        p.add_cone(lhs, rhs).map_err(|e| lines.err(&e.to_string()))?;
    }
    let q: usize = lines.count("equalities")?;
    for _ in 0..q {
        let e = lines.affine()?;
        p.add_eq(e).map_err(|e| lines.err(&e.to_string()))?;
    }
    lines.keyword("end")?;
    Ok(p)
}
