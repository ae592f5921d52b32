//! Domain vocabulary: variables, values, literals, nogoods and instances.
//!
//! A [`Nogood`] is a forbidden partial assignment `¬(l_1 ∧ … ∧ l_k)`. It is
//! always held in canonical form (sorted by `(var, val)`, no duplicates) so
//! that equality and hashing are plain set equality. The empty nogood is
//! the refutation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0 + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Value(pub u32);

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The assignment proposition `var = val`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub var: VarId,
    pub val: Value,
}

impl Literal {
    pub fn new(var: u32, val: u32) -> Self {
        Literal {
            var: VarId(var),
            val: Value(val),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.var, self.val)
    }
}

/// A canonical set of literals read as the negated conjunction of its members.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nogood {
    literals: Vec<Literal>,
}

impl Nogood {
    pub fn empty() -> Self {
        Nogood::default()
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn contains(&self, lit: &Literal) -> bool {
        self.literals.binary_search(lit).is_ok()
    }

    /// Literals of `var` in this nogood, in value order.
    pub fn literals_of(&self, var: VarId) -> impl Iterator<Item = &Literal> + '_ {
        self.literals.iter().filter(move |l| l.var == var)
    }

    pub fn mentions(&self, var: VarId) -> bool {
        self.literals.iter().any(|l| l.var == var)
    }

    /// The nogood with `lit` removed; used to form bucket tails.
    pub fn without(&self, lit: &Literal) -> Nogood {
        Nogood {
            literals: self.literals.iter().filter(|l| *l != lit).copied().collect(),
        }
    }

    /// Set union of two canonical nogoods, itself canonical.
    pub fn union(&self, other: &Nogood) -> Nogood {
        let (a, b) = (&self.literals, &other.literals);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Nogood { literals: out }
    }

    /// The variables occurring in this nogood, ascending and distinct.
    pub fn variables(&self) -> Vec<VarId> {
        let mut vars: Vec<VarId> = self.literals.iter().map(|l| l.var).collect();
        vars.dedup();
        vars
    }

    /// Whether the complete assignment `values[var]` violates this nogood,
    /// i.e. makes every literal true.
    pub fn violated_by(&self, values: &[Value]) -> bool {
        self.literals.iter().all(|l| values[l.var.index()] == l.val)
    }
}

impl fmt::Display for Nogood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.literals.is_empty() {
            return f.write_str("□");
        }
        f.write_str("¬(")?;
        for (i, l) in self.literals.iter().enumerate() {
            if i > 0 {
                f.write_str(" ∧ ")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(")")
    }
}

impl FromIterator<Literal> for Nogood {
    fn from_iter<I: IntoIterator<Item = Literal>>(iter: I) -> Self {
        canonicalize(iter)
    }
}

/// Sorts and deduplicates a literal collection into a [`Nogood`].
pub fn canonicalize<I: IntoIterator<Item = Literal>>(literals: I) -> Nogood {
    let mut literals: Vec<Literal> = literals.into_iter().collect();
    literals.sort_unstable();
    literals.dedup();
    Nogood { literals }
}

/// True when two literals assign different values to the same variable.
/// Such a nogood is satisfied by every assignment and carries no information.
pub fn is_false_nogood(n: &Nogood) -> bool {
    // canonical order puts same-variable literals next to each other
    n.literals.windows(2).any(|w| w[0].var == w[1].var)
}

/// `a` subsumes `b` when `a`'s literal set is a subset of `b`'s.
pub fn subsumes(a: &Nogood, b: &Nogood) -> bool {
    is_subset(&a.literals, &b.literals)
}

pub(crate) fn is_subset(a: &[Literal], b: &[Literal]) -> bool {
    if a.len() > b.len() {
        return false;
    }
    let mut j = 0;
    for lit in a {
        loop {
            if j == b.len() {
                return false;
            }
            match b[j].cmp(lit) {
                std::cmp::Ordering::Less => j += 1,
                std::cmp::Ordering::Equal => {
                    j += 1;
                    break;
                }
                std::cmp::Ordering::Greater => return false,
            }
        }
    }
    true
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("not-equal constraint between {0} and itself")]
    SelfLoop(VarId),
    #[error("variable {0} is not declared")]
    UnknownVariable(VarId),
}

/// A single broken instance invariant, reported by [`validate_instance`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    EmptyDomain { var: VarId },
    DanglingVariable { nogood: usize, var: VarId },
    OutOfDomain { nogood: usize, literal: Literal },
    LabelCount { expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDomain { var } => write!(f, "{var} has an empty domain"),
            Violation::DanglingVariable { nogood, var } => {
                write!(f, "nogood #{nogood} references undeclared variable {var}")
            }
            Violation::OutOfDomain { nogood, literal } => {
                write!(f, "nogood #{nogood} uses out-of-domain literal {literal}")
            }
            Violation::LabelCount { expected, found } => {
                write!(f, "expected {expected} labels, found {found}")
            }
        }
    }
}

/// A (distributed) CSP with extensional constraints.
///
/// Domains are kept sorted and duplicate-free, initial nogoods are kept as a
/// sorted set; two instances with the same content therefore compare equal
/// regardless of the order they were written in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CspInstance {
    domains: Vec<Vec<Value>>,
    nogoods: Vec<Nogood>,
    labels: Option<Vec<String>>,
}

impl CspInstance {
    /// Builds an instance without validating it; see [`validate_instance`].
    pub fn new(domains: Vec<Vec<Value>>, nogoods: impl IntoIterator<Item = Nogood>) -> Self {
        let domains = domains
            .into_iter()
            .map(|mut d| {
                d.sort_unstable();
                d.dedup();
                d
            })
            .collect();
        let nogoods: BTreeSet<Nogood> = nogoods.into_iter().collect();
        CspInstance {
            domains,
            nogoods: nogoods.into_iter().collect(),
            labels: None,
        }
    }

    /// `var_count` variables, each with domain `1..=domain_size`.
    pub fn uniform(var_count: usize, domain_size: u32) -> Self {
        Self::new(vec![(1..=domain_size).map(Value).collect(); var_count], Vec::new())
    }

    /// Attaches display names. Names identical to the defaults (`x1`, `x2`,
    /// ...) are dropped so that labelled and unlabelled forms compare equal.
    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        let default = labels.len() == self.domains.len()
            && labels
                .iter()
                .enumerate()
                .all(|(i, l)| *l == VarId(i as u32).to_string());
        self.labels = (!default).then_some(labels);
        self
    }

    pub fn with_nogoods(mut self, extra: impl IntoIterator<Item = Nogood>) -> Self {
        let mut all: BTreeSet<Nogood> = self.nogoods.into_iter().collect();
        all.extend(extra);
        self.nogoods = all.into_iter().collect();
        self
    }

    pub fn var_count(&self) -> usize {
        self.domains.len()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> {
        (0..self.domains.len() as u32).map(VarId)
    }

    pub fn domain(&self, var: VarId) -> &[Value] {
        &self.domains[var.index()]
    }

    pub fn domains(&self) -> &[Vec<Value>] {
        &self.domains
    }

    pub fn nogoods(&self) -> &[Nogood] {
        &self.nogoods
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Display name for `var`: its label if present, else `x<index+1>`.
    pub fn label(&self, var: VarId) -> String {
        self.labels
            .as_ref()
            .and_then(|l| l.get(var.index()).cloned())
            .unwrap_or_else(|| var.to_string())
    }

    pub fn declares(&self, var: VarId) -> bool {
        var.index() < self.domains.len()
    }
}

/// Expands `u ≠ v` into one binary nogood per shared domain value.
pub fn compile_neq_constraint(u: VarId, v: VarId, inst: &CspInstance) -> Result<Vec<Nogood>, ModelError> {
    if u == v {
        return Err(ModelError::SelfLoop(u));
    }
    for var in [u, v] {
        if !inst.declares(var) {
            return Err(ModelError::UnknownVariable(var));
        }
    }
    let other = inst.domain(v);
    Ok(inst
        .domain(u)
        .iter()
        .filter(|d| other.binary_search(d).is_ok())
        .map(|&d| canonicalize([Literal { var: u, val: d }, Literal { var: v, val: d }]))
        .collect())
}

/// Checks every instance invariant and reports all violations found.
pub fn validate_instance(inst: &CspInstance) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    for var in inst.vars() {
        if inst.domain(var).is_empty() {
            violations.push(Violation::EmptyDomain { var });
        }
    }
    if let Some(labels) = inst.labels() {
        if labels.len() != inst.var_count() {
            violations.push(Violation::LabelCount {
                expected: inst.var_count(),
                found: labels.len(),
            });
        }
    }
    for (idx, ng) in inst.nogoods().iter().enumerate() {
        for lit in ng.literals() {
            if !inst.declares(lit.var) {
                violations.push(Violation::DanglingVariable {
                    nogood: idx,
                    var: lit.var,
                });
            } else if inst.domain(lit.var).binary_search(&lit.val).is_err() {
                violations.push(Violation::OutOfDomain {
                    nogood: idx,
                    literal: *lit,
                });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Shorthand for building nogoods in tests and fixtures: `ng(&[(0, 1), (1, 1)])`
/// is `¬(x1=1 ∧ x2=1)` with zero-based variable indices.
pub fn ng(pairs: &[(u32, u32)]) -> Nogood {
    pairs.iter().map(|&(v, d)| Literal::new(v, d)).collect()
}

/// The complete graph on `n` vertices colored with `colors` colors, with
/// each edge compiled to not-equal nogoods. `k_n(3, 2)` is the three-node
/// two-color example used throughout the tests.
pub fn complete_graph_coloring(n: usize, colors: u32) -> CspInstance {
    let base = CspInstance::uniform(n, colors);
    let mut nogoods = Vec::new();
    for u in 0..n as u32 {
        for v in (u + 1)..n as u32 {
            nogoods.extend(compile_neq_constraint(VarId(u), VarId(v), &base).expect("distinct vertices"));
        }
    }
    base.with_nogoods(nogoods)
}
