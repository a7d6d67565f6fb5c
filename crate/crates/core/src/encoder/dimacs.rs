//! Weighted DIMACS emission and loading.
//!
//! Standard `p cnf` header and clause lines, with weights carried in
//! `c p weight <lit> <w> 0` comment lines (both phases listed) and the
//! normalization factor in a `c p gamma <value>` line. Weights are printed
//! with the shortest round-tripping decimal form, so emit/load is lossless
//! and emission is byte-stable. Unrecognized comment lines are ignored.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::encoder::{Cnf, EncodeError, WeightedFormula};

/// Write the formula in weighted DIMACS form.
pub fn emit_weighted_dimacs<W: Write>(
    wf: &WeightedFormula,
    out: &mut W,
) -> Result<(), EncodeError> {
    writeln!(out, "p cnf {} {}", wf.cnf.num_vars, wf.cnf.clauses.len())?;
    for (&lit, &w) in &wf.weights {
        writeln!(out, "c p weight {lit} {w} 0")?;
    }
    writeln!(out, "c p gamma {}", wf.gamma())?;
    for clause in &wf.cnf.clauses {
        let mut line = String::new();
        for &l in clause {
            line.push_str(&l.to_string());
            line.push(' ');
        }
        line.push('0');
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Parse a weighted DIMACS file produced by [`emit_weighted_dimacs`] (or any
/// compatible tool). A missing gamma line means γ = 1.
pub fn load_weighted_dimacs<R: BufRead>(input: R) -> Result<WeightedFormula, EncodeError> {
    let mut header: Option<(u32, usize)> = None;
    let mut weights: BTreeMap<i32, f64> = BTreeMap::new();
    let mut ln_gamma = 0.0;
    let mut clauses: Vec<Vec<i32>> = Vec::new();

    for (no, line) in input.lines().enumerate() {
        let line = line?;
        let bad = |what: &str| EncodeError::Parse(format!("line {}: {what}", no + 1));
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        match toks[0] {
            "c" => {
                if toks.len() >= 6 && toks[1] == "p" && toks[2] == "weight" {
                    let lit: i32 = toks[3].parse().map_err(|_| bad("bad weight literal"))?;
                    if lit == 0 {
                        return Err(bad("weight literal 0"));
                    }
                    let w: f64 = toks[4].parse().map_err(|_| bad("bad weight value"))?;
                    if toks[5] != "0" {
                        return Err(bad("weight line not 0-terminated"));
                    }
                    weights.insert(lit, w);
                } else if toks.len() >= 4 && toks[1] == "p" && toks[2] == "gamma" {
                    let g: f64 = toks[3].parse().map_err(|_| bad("bad gamma value"))?;
                    if !(g > 0.0) {
                        return Err(bad("gamma must be positive"));
                    }
                    ln_gamma = g.ln();
                }
                // Any other comment line is ignored.
            }
            "p" => {
                if header.is_some() {
                    return Err(bad("duplicate header"));
                }
                if toks.len() != 4 || toks[1] != "cnf" {
                    return Err(bad("expected 'p cnf <vars> <clauses>'"));
                }
                let nv: u32 = toks[2].parse().map_err(|_| bad("bad variable count"))?;
                let nc: usize = toks[3].parse().map_err(|_| bad("bad clause count"))?;
                header = Some((nv, nc));
            }
            _ => {
                let (nv, _) = header.ok_or_else(|| bad("clause before header"))?;
                let mut clause = Vec::new();
                let mut terminated = false;
                for tok in &toks {
                    let l: i32 = tok.parse().map_err(|_| bad("bad clause literal"))?;
                    if l == 0 {
                        terminated = true;
                        break;
                    }
                    if l.unsigned_abs() > nv {
                        return Err(bad("literal outside declared variable range"));
                    }
                    clause.push(l);
                }
                if !terminated {
                    return Err(bad("clause not 0-terminated"));
                }
                clauses.push(clause);
            }
        }
    }

    let (num_vars, declared) = header.ok_or_else(|| EncodeError::Parse("missing header".into()))?;
    if clauses.len() != declared {
        return Err(EncodeError::Parse(format!(
            "header declares {declared} clauses, found {}",
            clauses.len()
        )));
    }
    for lit in weights.keys() {
        if lit.unsigned_abs() > num_vars {
            return Err(EncodeError::Parse(format!(
                "weighted literal {lit} outside declared variable range"
            )));
        }
    }
    let wf = WeightedFormula {
        cnf: Cnf { num_vars, clauses },
        weights,
        ln_gamma,
    };
    wf.check_weights()?;
    Ok(wf)
}
