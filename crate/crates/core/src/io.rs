//! Instance ingestion and serialization.
//!
//! Two input formats are supported.
//!
//! **DIMACS graph coloring** (`.col`): `c` comment lines, one
//! `p edge <vertices> <edges>` header, and `e <u> <v>` edge lines with
//! 1-based vertices. Each vertex becomes a variable with domain
//! `1..=colors` and each edge becomes a not-equal constraint.
//!
//! **CSP text**: line oriented, `#` starts a comment.
//!
//! ```text
//! var x1 1 2          # variable name followed by its integer domain
//! var x2 1 2
//! nogood x1=1 x2=1    # forbidden combination; a bare `nogood` is the empty one
//! neq x1 x2           # shorthand for one nogood per shared value
//! ```
//!
//! Variables must be declared before they are used and are numbered in
//! declaration order.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{compile_neq_constraint, validate_instance, CspInstance, Literal, Nogood, Value, VarId, Violation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing `p edge` header")]
    MissingHeader,
    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("number of colors must be at least 1")]
    NoColors,
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, msg: msg.into() }
}

/// A parsed DIMACS file plus non-fatal findings such as an edge count that
/// disagrees with the header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimacsInstance {
    pub instance: CspInstance,
    pub vertices: usize,
    pub edges: usize,
    pub warnings: Vec<String>,
}

pub fn parse_dimacs_col(text: &str, colors: u32) -> Result<DimacsInstance, ParseError> {
    if colors == 0 {
        return Err(ParseError::NoColors);
    }
    let mut header: Option<(usize, usize)> = None;
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut edge_lines = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            None | Some("c") => continue,
            Some("p") => {
                if header.is_some() {
                    return Err(syntax(line_no, "duplicate `p` header"));
                }
                let kind = parts.next().ok_or_else(|| syntax(line_no, "malformed header"))?;
                if kind != "edge" && kind != "col" {
                    return Err(syntax(line_no, format!("unsupported problem kind `{kind}`")));
                }
                let n = parse_num::<usize>(parts.next(), line_no, "vertex count")?;
                let m = parse_num::<usize>(parts.next(), line_no, "edge count")?;
                if parts.next().is_some() {
                    return Err(syntax(line_no, "malformed header"));
                }
                header = Some((n, m));
            }
            Some("e") => {
                let (n, _) = header.ok_or(ParseError::MissingHeader)?;
                let u = parse_num::<u32>(parts.next(), line_no, "edge endpoint")?;
                let v = parse_num::<u32>(parts.next(), line_no, "edge endpoint")?;
                for x in [u, v] {
                    if x == 0 || x as usize > n {
                        return Err(syntax(line_no, format!("vertex {x} out of range 1..={n}")));
                    }
                }
                if u == v {
                    return Err(syntax(line_no, format!("self-loop on vertex {u}")));
                }
                edge_lines += 1;
                edges.insert((u.min(v) - 1, u.max(v) - 1));
            }
            Some(other) => return Err(syntax(line_no, format!("unknown line type `{other}`"))),
        }
    }
    let (n, m) = header.ok_or(ParseError::MissingHeader)?;
    let mut warnings = Vec::new();
    if edge_lines != m {
        warnings.push(format!("header declares {m} edges, found {edge_lines} edge lines"));
    }
    let base = CspInstance::uniform(n, colors);
    let mut nogoods = Vec::new();
    for &(u, v) in &edges {
        nogoods.extend(compile_neq_constraint(VarId(u), VarId(v), &base).expect("endpoints checked above"));
    }
    Ok(DimacsInstance {
        instance: base.with_nogoods(nogoods),
        vertices: n,
        edges: edges.len(),
        warnings,
    })
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, ParseError> {
    let tok = tok.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| syntax(line, format!("invalid {what} `{tok}`")))
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.contains('=') && !name.starts_with('#')
}

pub fn parse_csp_text(text: &str) -> Result<CspInstance, ParseError> {
    let mut names: HashMap<String, VarId> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut domains: Vec<Vec<Value>> = Vec::new();
    let mut nogoods: Vec<Nogood> = Vec::new();
    let mut pending_neq: Vec<(usize, VarId, VarId)> = Vec::new();

    let lookup = |names: &HashMap<String, VarId>, name: &str, line: usize| {
        names
            .get(name)
            .copied()
            .ok_or_else(|| syntax(line, format!("undeclared variable `{name}`")))
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            None => continue,
            Some("var") => {
                let name = parts.next().ok_or_else(|| syntax(line_no, "missing variable name"))?;
                if !valid_name(name) {
                    return Err(syntax(line_no, format!("invalid variable name `{name}`")));
                }
                if names.contains_key(name) {
                    return Err(syntax(line_no, format!("variable `{name}` declared twice")));
                }
                let domain = parts
                    .map(|t| parse_num::<u32>(Some(t), line_no, "domain value").map(Value))
                    .collect::<Result<Vec<_>, _>>()?;
                names.insert(name.to_string(), VarId(labels.len() as u32));
                labels.push(name.to_string());
                domains.push(domain);
            }
            Some("nogood") => {
                let mut lits = Vec::new();
                for tok in parts {
                    let (name, val) = tok
                        .split_once('=')
                        .ok_or_else(|| syntax(line_no, format!("expected `name=value`, got `{tok}`")))?;
                    let var = lookup(&names, name, line_no)?;
                    let val = parse_num::<u32>(Some(val), line_no, "value")?;
                    lits.push(Literal { var, val: Value(val) });
                }
                nogoods.push(lits.into_iter().collect());
            }
            Some("neq") => {
                let u = parts.next().ok_or_else(|| syntax(line_no, "missing variable"))?;
                let v = parts.next().ok_or_else(|| syntax(line_no, "missing variable"))?;
                if parts.next().is_some() {
                    return Err(syntax(line_no, "`neq` takes exactly two variables"));
                }
                let (u, v) = (lookup(&names, u, line_no)?, lookup(&names, v, line_no)?);
                if u == v {
                    return Err(syntax(line_no, "`neq` on a single variable"));
                }
                pending_neq.push((line_no, u, v));
            }
            Some(other) => return Err(syntax(line_no, format!("unknown directive `{other}`"))),
        }
    }

    let base = CspInstance::new(domains, nogoods).with_labels(labels);
    let mut extra = Vec::new();
    for (line, u, v) in pending_neq {
        extra.extend(compile_neq_constraint(u, v, &base).map_err(|e| syntax(line, e.to_string()))?);
    }
    let inst = base.with_nogoods(extra);
    validate_instance(&inst).map_err(ParseError::Invalid)?;
    Ok(inst)
}

/// Writes `inst` in the CSP text format; [`parse_csp_text`] reads it back
/// to an equal instance.
pub fn serialize_csp_text(inst: &CspInstance) -> String {
    let mut out = String::new();
    for v in inst.vars() {
        let _ = write!(out, "var {}", inst.label(v));
        for d in inst.domain(v) {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
    }
    for n in inst.nogoods() {
        out.push_str("nogood");
        for l in n.literals() {
            let _ = write!(out, " {}={}", inst.label(l.var), l.val);
        }
        out.push('\n');
    }
    out
}
