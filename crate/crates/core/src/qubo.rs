//! Binary (one-hot) encoding of a Min-d-Cut instance for external solvers.
//!
//! Variable `x_{i,k}` (index `i·d + k`) is 1 when vertex `i` sits in
//! partition `k`. The objective is
//!
//! ```text
//! Σ_{(i,j)} W_ij (1 − Σ_k x_ik x_jk)  [+ Σ_k −λ₁(C − Σ_i x_ik) + λ₂(C − Σ_i x_ik)²]
//! ```
//!
//! with `x² = x` folded into the linear part. The one-hot rows
//! `Σ_k x_ik = 1` are always hard equalities; capacity is either the
//! penalty above or hard rows `Σ_i x_ik ≤ C`.
//!
//! Two serializations: CPLEX-style LP text and a JSON document
//! (`schema = "qudit-qite/qubo"`, `version = 1`) with fields `mode`,
//! `num_vertices`, `d`, `c_max`, `lambda1`, `lambda2`, `variables`,
//! `offset`, `linear` (dense, one entry per variable), `quadratic`
//! (`[a, b, coeff]` with `a < b`, sorted), `equalities` and
//! `inequalities` (`{name, vars, sense, rhs}` rows).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::MinDCutInstance;

pub const QUBO_SCHEMA: &str = "qudit-qite/qubo";
pub const QUBO_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Capacity through the same unbalanced penalty the solver uses.
    Penalized,
    /// Capacity as hard `≤ C_max` rows, no penalty in the objective.
    Hard,
}

impl ConstraintMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintMode::Penalized => "penalized",
            ConstraintMode::Hard => "hard",
        }
    }
}

impl FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penalized" => Ok(ConstraintMode::Penalized),
            "hard" => Ok(ConstraintMode::Hard),
            other => Err(Error::Format(format!("unknown constraint mode {other:?} (expected penalized or hard)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub name: String,
    pub vars: Vec<usize>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboModel {
    pub schema: String,
    pub version: u32,
    pub mode: ConstraintMode,
    pub num_vertices: usize,
    pub d: usize,
    pub c_max: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub variables: Vec<String>,
    pub offset: f64,
    pub linear: Vec<f64>,
    pub quadratic: Vec<(usize, usize, f64)>,
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
}

pub fn variable_index(vertex: usize, partition: usize, d: usize) -> usize {
    vertex * d + partition
}

pub fn export_qubo(instance: &MinDCutInstance, mode: ConstraintMode) -> QuboModel {
    let n = instance.num_vertices();
    let d = instance.num_partitions();
    let p = *instance.penalty();
    let c = p.c_max as f64;
    let var = |i, k| variable_index(i, k, d);

    let mut offset = 0.0;
    let mut linear = vec![0.0; n * d];
    let mut quad: BTreeMap<(usize, usize), f64> = BTreeMap::new();

    for e in instance.graph().edges() {
        let w = e.weight as f64;
        offset += w;
        for k in 0..d {
            *quad.entry((var(e.i, k), var(e.j, k))).or_insert(0.0) -= w;
        }
    }

    if mode == ConstraintMode::Penalized {
        // −λ₁(C − s) + λ₂(C² − 2Cs + s²), s = Σ_i x_ik, s² = s + 2Σ_{i<j} x_ik x_jk
        let lin = p.lambda1 - 2.0 * c * p.lambda2 + p.lambda2;
        for k in 0..d {
            offset += -p.lambda1 * c + p.lambda2 * c * c;
            for i in 0..n {
                linear[var(i, k)] += lin;
                for j in i + 1..n {
                    *quad.entry((var(i, k), var(j, k))).or_insert(0.0) += 2.0 * p.lambda2;
                }
            }
        }
    }

    let equalities = (0..n)
        .map(|i| LinearRow { name: format!("assign_{i}"), vars: (0..d).map(|k| var(i, k)).collect(), sense: Sense::Eq, rhs: 1.0 })
        .collect();
    let inequalities = match mode {
        ConstraintMode::Penalized => Vec::new(),
        ConstraintMode::Hard => (0..d)
            .map(|k| LinearRow { name: format!("cap_{k}"), vars: (0..n).map(|i| var(i, k)).collect(), sense: Sense::Le, rhs: c })
            .collect(),
    };

    QuboModel {
        schema: QUBO_SCHEMA.to_string(),
        version: QUBO_VERSION,
        mode,
        num_vertices: n,
        d,
        c_max: p.c_max,
        lambda1: p.lambda1,
        lambda2: p.lambda2,
        variables: (0..n).flat_map(|i| (0..d).map(move |k| format!("x_{i}_{k}"))).collect(),
        offset,
        linear,
        quadratic: quad.into_iter().filter(|&(_, q)| q != 0.0).map(|((a, b), q)| (a, b, q)).collect(),
        equalities,
        inequalities,
    }
}

impl QuboModel {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    /// Objective value at a binary point (constraints ignored).
    pub fn evaluate(&self, x: &[bool]) -> f64 {
        let mut v = self.offset;
        for (i, &l) in self.linear.iter().enumerate() {
            if x[i] {
                v += l;
            }
        }
        for &(a, b, q) in &self.quadratic {
            if x[a] && x[b] {
                v += q;
            }
        }
        v
    }

    pub fn satisfies_constraints(&self, x: &[bool]) -> bool {
        self.equalities.iter().chain(&self.inequalities).all(|row| {
            let s = row.vars.iter().filter(|&&v| x[v]).count() as f64;
            match row.sense {
                Sense::Eq => s == row.rhs,
                Sense::Le => s <= row.rhs,
            }
        })
    }

    /// One-hot encoding of an integer assignment.
    pub fn encode(&self, assignment: &[usize]) -> Vec<bool> {
        let mut x = vec![false; self.num_variables()];
        for (i, &k) in assignment.iter().enumerate() {
            x[variable_index(i, k, self.d)] = true;
        }
        x
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("QUBO serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: QuboModel = serde_json::from_str(text).map_err(|e| Error::Format(format!("QUBO JSON: {e}")))?;
        if m.version != QUBO_VERSION {
            return Err(Error::SchemaVersion { what: "qubo", found: m.version, expected: QUBO_VERSION });
        }
        Ok(m)
    }

    /// CPLEX LP text. Numbers use Rust's shortest round-trip formatting.
    pub fn to_lp(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ Min-d-Cut binary model, mode {}", self.mode.as_str());
        let _ = writeln!(
            out,
            "\\ N = {}, d = {}, c_max = {}, lambda1 = {}, lambda2 = {}",
            self.num_vertices, self.d, self.c_max, self.lambda1, self.lambda2
        );
        out.push_str("Minimize\n obj:");
        let mut first = true;
        let mut term = |out: &mut String, coeff: f64, body: &str| {
            let sign = if coeff < 0.0 { "-" } else if first { "" } else { "+" };
            first = false;
            let _ = write!(out, " {sign} {} {body}", coeff.abs());
        };
        for (i, &l) in self.linear.iter().enumerate() {
            if l != 0.0 {
                term(&mut out, l, &self.variables[i]);
            }
        }
        if !self.quadratic.is_empty() {
            out.push_str(if first { " [" } else { " + [" });
            let mut qfirst = true;
            for &(a, b, q) in &self.quadratic {
                // LP quadratic objective sections are halved: [ 2q a*b ] / 2
                let c = 2.0 * q;
                let sign = if c < 0.0 { "-" } else if qfirst { "" } else { "+" };
                qfirst = false;
                let _ = write!(out, " {sign} {} {} * {}", c.abs(), self.variables[a], self.variables[b]);
            }
            out.push_str(" ] / 2");
            first = false;
        }
        if self.offset != 0.0 || first {
            let sign = if self.offset < 0.0 { "-" } else if first { "" } else { "+" };
            let _ = write!(out, " {sign} {}", self.offset.abs());
        }
        out.push_str("\nSubject To\n");
        for row in self.equalities.iter().chain(&self.inequalities) {
            let lhs: Vec<&str> = row.vars.iter().map(|&v| self.variables[v].as_str()).collect();
            let sense = match row.sense {
                Sense::Eq => "=",
                Sense::Le => "<=",
            };
            let _ = writeln!(out, " {}: {} {sense} {}", row.name, lhs.join(" + "), row.rhs);
        }
        out.push_str("Binary\n");
        for chunk in self.variables.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
        out.push_str("End\n");
        out
    }
}
