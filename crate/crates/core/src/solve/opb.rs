//! OPB (pseudo-Boolean competition) emission and an independent parser.
//!
//! Emitted grammar, one constraint per line, variables `x1..xN` numbered
//! by declaration order (`VarId(k)` becomes `x{k+1}`, recorded in a
//! sidecar name list):
//!
//! ```text
//! * #variable= 3 #constraint= 2
//! +1 x1 +1 x2 = 1 ;
//! +2 x3 -1 x1 >= 0 ;
//! ```
//!
//! Negated literals are folded into variable form (`c * ~x` becomes
//! `-c * x` with the bound shifted), and `<=` is emitted as the negated
//! `>=`, so the output only uses `>=` and `=`.

use crate::encode::{PbFormula, Rel};
use crate::error::{Error, Result};

/// OPB text plus the variable-name sidecar (index k names `x{k+1}`).
#[derive(Debug, Clone)]
pub struct OpbDocument {
    pub text: String,
    pub var_names: Vec<String>,
}

/// Emit a formula in OPB syntax. Reified constraints are linearized
/// first; the document then covers exactly the formula's model set.
pub fn to_opb(f: &PbFormula) -> OpbDocument {
    let lin = if f.reified.is_empty() {
        None
    } else {
        Some(f.linearized())
    };
    let f = lin.as_ref().unwrap_or(f);
    let mut body = String::new();
    for c in &f.hard {
        let (rel, flip) = match c.rel {
            Rel::Ge => (">=", false),
            Rel::Eq => ("=", false),
            Rel::Le => (">=", true),
        };
        let mut bound = if flip { -c.bound } else { c.bound };
        let mut first = true;
        for t in &c.terms {
            let mut coeff = if flip { -t.coeff } else { t.coeff };
            if t.lit.negated {
                bound -= coeff;
                coeff = -coeff;
            }
            if !first {
                body.push(' ');
            }
            body.push_str(&format!("{:+} x{}", coeff, t.lit.var.0 + 1));
            first = false;
        }
        body.push_str(&format!(" {rel} {bound} ;\n"));
    }
    let header = format!(
        "* #variable= {} #constraint= {}\n",
        f.num_vars(),
        f.hard.len()
    );
    OpbDocument {
        text: header + &body,
        var_names: (0..f.num_vars())
            .map(|k| f.name(crate::encode::VarId(k as u32)).to_string())
            .collect(),
    }
}

/// A parsed OPB constraint over 1-based variable indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpbConstraint {
    pub terms: Vec<(i64, u32)>,
    pub rel: Rel,
    pub bound: i64,
}

impl OpbConstraint {
    pub fn eval(&self, values: &[bool]) -> bool {
        let s: i64 = self
            .terms
            .iter()
            .map(|&(c, v)| if values[(v - 1) as usize] { c } else { 0 })
            .sum();
        match self.rel {
            Rel::Ge => s >= self.bound,
            Rel::Le => s <= self.bound,
            Rel::Eq => s == self.bound,
        }
    }
}

/// Parsed OPB file.
#[derive(Debug, Clone)]
pub struct OpbFile {
    /// Declared variable count from the header, when present.
    pub n_vars: Option<usize>,
    pub n_constraints: Option<usize>,
    pub constraints: Vec<OpbConstraint>,
}

/// Parse OPB text. Kept intentionally separate from the emitter so the
/// two can cross-check each other.
pub fn parse_opb(text: &str) -> Result<OpbFile> {
    let mut out = OpbFile {
        n_vars: None,
        n_constraints: None,
        constraints: Vec::new(),
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('*') {
            for part in comment.split_whitespace().collect::<Vec<_>>().windows(2) {
                match part[0] {
                    "#variable=" => out.n_vars = part[1].parse().ok(),
                    "#constraint=" => out.n_constraints = part[1].parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        let err = |msg: &str| Error::OpbParse {
            line: ln + 1,
            msg: msg.to_string(),
        };
        let mut terms = Vec::new();
        let mut rel: Option<Rel> = None;
        let mut bound: Option<i64> = None;
        let mut pending: Option<i64> = None;
        for tok in line.split_whitespace() {
            match tok {
                ";" => break,
                ">=" => rel = Some(Rel::Ge),
                "<=" => rel = Some(Rel::Le),
                "=" => rel = Some(Rel::Eq),
                _ if rel.is_some() => {
                    let t = tok.strip_suffix(';').unwrap_or(tok);
                    if t.is_empty() {
                        break;
                    }
                    bound = Some(t.parse().map_err(|_| err("bad bound"))?);
                }
                _ if tok.starts_with('x') => {
                    let v: u32 = tok[1..].parse().map_err(|_| err("bad variable"))?;
                    if v == 0 {
                        return Err(err("variables are 1-based"));
                    }
                    let c = pending.take().ok_or_else(|| err("variable without coefficient"))?;
                    terms.push((c, v));
                }
                _ => {
                    if pending.is_some() {
                        return Err(err("consecutive coefficients"));
                    }
                    pending = Some(tok.parse().map_err(|_| err("bad coefficient"))?);
                }
            }
        }
        let rel = rel.ok_or_else(|| err("missing relation"))?;
        let bound = bound.ok_or_else(|| err("missing bound"))?;
        if pending.is_some() {
            return Err(err("dangling coefficient"));
        }
        out.constraints.push(OpbConstraint { terms, rel, bound });
    }
    Ok(out)
}
