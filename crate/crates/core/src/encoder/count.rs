//! Exact weighted model counting.
//!
//! Plain DPLL: branch, propagate units, undo. Weighted variables (the fault
//! and gadget variables of scenario encodings) are branched first; everything
//! else in these encodings is functionally implied, so propagation usually
//! finishes the job. As soon as every clause is satisfied the remaining free
//! variables contribute closed-form factors (2 per unweighted variable, the
//! phase-weight sum per weighted one), which keeps tautological subtrees
//! cheap. All mass is accumulated in log-space in a fixed order, so results
//! are bit-stable.

use crate::encoder::{CountOutcome, EncodeError, WeightedFormula};

pub(crate) const DEFAULT_DECISION_CAP: u64 = 1 << 24;

/// Exact weighted model count (default cap of 2^24 branch decisions).
pub fn exact_weighted_count(wf: &WeightedFormula) -> Result<CountOutcome, EncodeError> {
    exact_weighted_count_capped(wf, DEFAULT_DECISION_CAP)
}

pub(crate) fn exact_weighted_count_capped(
    wf: &WeightedFormula,
    cap: u64,
) -> Result<CountOutcome, EncodeError> {
    wf.check_weights()?;
    let n = wf.cnf.num_vars as usize;

    let mut clauses: Vec<Vec<i32>> = Vec::with_capacity(wf.cnf.clauses.len());
    let mut root_units: Vec<i32> = Vec::new();
    for cl in &wf.cnf.clauses {
        let mut c = cl.clone();
        c.sort_unstable_by_key(|l| (l.unsigned_abs(), *l));
        c.dedup();
        if c.is_empty() {
            return Ok(CountOutcome {
                ln_count: f64::NEG_INFINITY,
                ln_gamma: wf.ln_gamma,
            });
        }
        if c.windows(2).any(|w| w[0] == -w[1]) {
            continue;
        }
        if c.len() == 1 {
            root_units.push(c[0]);
        }
        clauses.push(c);
    }

    let mut weighted: Vec<WeightedVar> = Vec::new();
    for (&lit, &w) in &wf.weights {
        if lit > 0 {
            let neg = wf.weights[&-lit];
            weighted.push(WeightedVar {
                var: lit as u32,
                ln_pos: w.ln(),
                ln_neg: neg.ln(),
            });
        }
    }
    let mut order: Vec<u32> = weighted.iter().map(|w| w.var).collect();
    order.extend((1..=n as u32).filter(|v| !wf.weights.contains_key(&(*v as i32))));

    let mut pos_occ = vec![Vec::new(); n + 1];
    let mut neg_occ = vec![Vec::new(); n + 1];
    for (ci, c) in clauses.iter().enumerate() {
        for &l in c {
            if l > 0 {
                pos_occ[l as usize].push(ci as u32);
            } else {
                neg_occ[-l as usize].push(ci as u32);
            }
        }
    }

    let n_free = clauses.iter().map(|c| c.len() as u32).collect();
    let mut solver = Solver {
        n_true: vec![0; clauses.len()],
        n_free,
        clauses,
        pos_occ,
        neg_occ,
        sat_clauses: 0,
        assign: vec![0i8; n + 1],
        trail: Vec::new(),
        assigned: 0,
        n,
        weighted,
        order,
        decisions: 0,
        cap,
    };

    let ln_count = if solver.propagate(root_units) {
        solver.explore()?
    } else {
        f64::NEG_INFINITY
    };
    Ok(CountOutcome {
        ln_count,
        ln_gamma: wf.ln_gamma,
    })
}

struct WeightedVar {
    var: u32,
    ln_pos: f64,
    ln_neg: f64,
}

struct Solver {
    clauses: Vec<Vec<i32>>,
    pos_occ: Vec<Vec<u32>>,
    neg_occ: Vec<Vec<u32>>,
    n_free: Vec<u32>,
    n_true: Vec<u32>,
    sat_clauses: usize,
    assign: Vec<i8>,
    trail: Vec<u32>,
    assigned: usize,
    n: usize,
    weighted: Vec<WeightedVar>,
    order: Vec<u32>,
    decisions: u64,
    cap: u64,
}

impl Solver {
    /// Assign the queued literals and all consequences; false on conflict.
    /// Counters stay consistent either way, so `undo_to` always restores.
    fn propagate(&mut self, mut queue: Vec<i32>) -> bool {
        while let Some(lit) = queue.pop() {
            let var = lit.unsigned_abs() as usize;
            match self.assign[var] {
                0 => {}
                v => {
                    if (v == 1) == (lit > 0) {
                        continue;
                    }
                    return false;
                }
            }
            self.assign[var] = if lit > 0 { 1 } else { -1 };
            self.trail.push(var as u32);
            self.assigned += 1;
            let mut conflict = false;
            let sat_side = if lit > 0 { &self.pos_occ } else { &self.neg_occ };
            for idx in 0..sat_side[var].len() {
                let ci = if lit > 0 {
                    self.pos_occ[var][idx]
                } else {
                    self.neg_occ[var][idx]
                } as usize;
                self.n_true[ci] += 1;
                if self.n_true[ci] == 1 {
                    self.sat_clauses += 1;
                }
            }
            let unsat_len = if lit > 0 {
                self.neg_occ[var].len()
            } else {
                self.pos_occ[var].len()
            };
            for idx in 0..unsat_len {
                let ci = if lit > 0 {
                    self.neg_occ[var][idx]
                } else {
                    self.pos_occ[var][idx]
                } as usize;
                self.n_free[ci] -= 1;
                if self.n_true[ci] == 0 {
                    match self.n_free[ci] {
                        0 => conflict = true,
                        1 => {
                            let unit = self.clauses[ci]
                                .iter()
                                .copied()
                                .find(|l| self.assign[l.unsigned_abs() as usize] == 0)
                                .expect("one free literal left");
                            queue.push(unit);
                        }
                        _ => {}
                    }
                }
            }
            if conflict {
                return false;
            }
        }
        true
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let var = self.trail.pop().expect("trail not empty") as usize;
            let was_true = self.assign[var] == 1;
            self.assign[var] = 0;
            self.assigned -= 1;
            let sat_len = if was_true {
                self.pos_occ[var].len()
            } else {
                self.neg_occ[var].len()
            };
            for idx in 0..sat_len {
                let ci = if was_true {
                    self.pos_occ[var][idx]
                } else {
                    self.neg_occ[var][idx]
                } as usize;
                self.n_true[ci] -= 1;
                if self.n_true[ci] == 0 {
                    self.sat_clauses -= 1;
                }
            }
            let unsat_len = if was_true {
                self.neg_occ[var].len()
            } else {
                self.pos_occ[var].len()
            };
            for idx in 0..unsat_len {
                let ci = if was_true {
                    self.neg_occ[var][idx]
                } else {
                    self.pos_occ[var][idx]
                } as usize;
                self.n_free[ci] += 1;
            }
        }
    }

    /// ln of the mass of the current subtree once every clause is satisfied:
    /// assigned weighted literals multiply in, free variables factor out.
    fn leaf_ln(&self) -> f64 {
        let mut ln = 0.0;
        let mut free_unweighted = self.n - self.assigned;
        for w in &self.weighted {
            match self.assign[w.var as usize] {
                1 => ln += w.ln_pos,
                -1 => ln += w.ln_neg,
                _ => {
                    free_unweighted -= 1;
                    ln += logaddexp(w.ln_pos, w.ln_neg);
                }
            }
        }
        ln + free_unweighted as f64 * std::f64::consts::LN_2
    }

    fn explore(&mut self) -> Result<f64, EncodeError> {
        if self.sat_clauses == self.clauses.len() {
            return Ok(self.leaf_ln());
        }
        let var = match self
            .order
            .iter()
            .copied()
            .find(|&v| self.assign[v as usize] == 0)
        {
            Some(v) => v,
            // All assigned yet a clause is unsatisfied: dead branch.
            None => return Ok(f64::NEG_INFINITY),
        };
        self.decisions += 1;
        if self.decisions > self.cap {
            return Err(EncodeError::CountTooLarge { cap: self.cap });
        }
        let mut acc = f64::NEG_INFINITY;
        for phase in [-1i32, 1] {
            let mark = self.trail.len();
            if self.propagate(vec![phase * var as i32]) {
                acc = logaddexp(acc, self.explore()?);
            }
            self.undo_to(mark);
        }
        Ok(acc)
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
