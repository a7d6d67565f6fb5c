//! Sequential saturating counter: CNF certificate that ≥ ℓ inputs are true.
//!
//! One counter copy of `⌈log2(ℓ+1)⌉` bits per input variable. Copy 1 is
//! forced to zero, copy `i+1` equals copy `i` saturating-incremented by
//! input `i`, and the acceptance clauses assert the value after the last
//! input equals the saturation value ℓ — expressed over the last stored copy
//! and the last input, so no extra copy is materialized. The counter bits
//! are functions of the inputs, hence unit propagation pins them all once
//! the inputs are fixed.

use crate::encoder::{Cnf, EncodeError};

/// Append the threshold constraint over `x` to `cnf`; returns the counter
/// bits, copy-major (`|x| * ⌈log2(ℓ+1)⌉` of them).
pub fn encode_counter(cnf: &mut Cnf, x: &[u32], ell: u32) -> Result<Vec<u32>, EncodeError> {
    let n = x.len();
    if ell == 0 || ell as usize > n {
        return Err(EncodeError::ThresholdOutOfRange { ell, max: n });
    }
    let b = (u32::BITS - ell.leading_zeros()) as usize;
    let copies: Vec<Vec<u32>> = (0..n)
        .map(|_| (0..b).map(|_| cnf.fresh_var()).collect())
        .collect();
    for &y in &copies[0] {
        cnf.add_clause(vec![-(y as i32)]);
    }
    for i in 0..n - 1 {
        transition(cnf, &copies[i], x[i], &copies[i + 1], ell, b);
    }
    // Accept iff the running count reaches ℓ: either the last copy is
    // already saturated, or it reads ℓ-1 and the last input pushes it over.
    let saturated = pattern(&copies[n - 1], ell, b);
    let mut almost = pattern(&copies[n - 1], ell - 1, b);
    almost.push(x[n - 1] as i32);
    for &l1 in &saturated {
        for &l2 in &almost {
            if l1 == -l2 {
                continue;
            }
            if l1 == l2 {
                cnf.add_clause(vec![l1]);
            } else {
                cnf.add_clause(vec![l1, l2]);
            }
        }
    }
    Ok(copies.into_iter().flatten().collect())
}

/// Append the complement constraint: fewer than `ell` of `x` are true.
pub(crate) fn encode_counter_below(cnf: &mut Cnf, x: &[u32], ell: u32) -> Result<(), EncodeError> {
    let n = x.len();
    if ell == 0 || ell as usize > n {
        return Err(EncodeError::ThresholdOutOfRange { ell, max: n });
    }
    let b = (u32::BITS - ell.leading_zeros()) as usize;
    let copies: Vec<Vec<u32>> = (0..n)
        .map(|_| (0..b).map(|_| cnf.fresh_var()).collect())
        .collect();
    for &y in &copies[0] {
        cnf.add_clause(vec![-(y as i32)]);
    }
    for i in 0..n - 1 {
        transition(cnf, &copies[i], x[i], &copies[i + 1], ell, b);
    }
    // Reject iff the count reaches ℓ: the last copy must not be saturated,
    // and must not read ℓ-1 with the last input pushing it over.
    let not_saturated: Vec<i32> = pattern(&copies[n - 1], ell, b).iter().map(|l| -l).collect();
    cnf.add_clause(not_saturated);
    let mut not_pushed: Vec<i32> =
        pattern(&copies[n - 1], ell - 1, b).iter().map(|l| -l).collect();
    not_pushed.push(-(x[n - 1] as i32));
    cnf.add_clause(not_pushed);
    Ok(())
}

/// Append the constraint that exactly `k` of `x` are true.
pub(crate) fn encode_exactly(cnf: &mut Cnf, x: &[u32], k: u32) {
    let n = x.len();
    assert!(k as usize <= n, "exact cardinality above input count");
    if k == 0 {
        for &v in x {
            cnf.add_clause(vec![-(v as i32)]);
        }
        return;
    }
    if k as usize == n {
        for &v in x {
            cnf.add_clause(vec![v as i32]);
        }
        return;
    }
    // Saturate one past k so overshoot stays distinguishable from exactly k.
    let cap = k + 1;
    let b = (u32::BITS - cap.leading_zeros()) as usize;
    let copies: Vec<Vec<u32>> = (0..n)
        .map(|_| (0..b).map(|_| cnf.fresh_var()).collect())
        .collect();
    for &y in &copies[0] {
        cnf.add_clause(vec![-(y as i32)]);
    }
    for i in 0..n - 1 {
        transition(cnf, &copies[i], x[i], &copies[i + 1], cap, b);
    }
    // Exactly k: the last copy reads k and the last input is false, or it
    // reads k-1 and the last input is true.
    let mut stay = pattern(&copies[n - 1], k, b);
    stay.push(-(x[n - 1] as i32));
    let mut step = pattern(&copies[n - 1], k - 1, b);
    step.push(x[n - 1] as i32);
    for &l1 in &stay {
        for &l2 in &step {
            if l1 == -l2 {
                continue;
            }
            if l1 == l2 {
                cnf.add_clause(vec![l1]);
            } else {
                cnf.add_clause(vec![l1, l2]);
            }
        }
    }
}

/// `next = min(min(cur, ell) + x, ell)`, spelled out row by row.
fn transition(cnf: &mut Cnf, cur: &[u32], x: u32, next: &[u32], ell: u32, b: usize) {
    for val in 0..(1u32 << b) {
        for xv in [false, true] {
            let eff = val.min(ell);
            let tgt = if xv { (eff + 1).min(ell) } else { eff };
            let mut reject: Vec<i32> = (0..b)
                .map(|j| {
                    let lit = cur[j] as i32;
                    if val & (1 << j) != 0 { -lit } else { lit }
                })
                .collect();
            reject.push(if xv { -(x as i32) } else { x as i32 });
            for j in 0..b {
                let mut clause = reject.clone();
                let lit = next[j] as i32;
                clause.push(if tgt & (1 << j) != 0 { lit } else { -lit });
                cnf.add_clause(clause);
            }
        }
    }
}

/// Literals asserting that `bits` spell `val` (little-endian).
fn pattern(bits: &[u32], val: u32, b: usize) -> Vec<i32> {
    (0..b)
        .map(|j| {
            let lit = bits[j] as i32;
            if val & (1 << j) != 0 { lit } else { -lit }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{exact_weighted_count, WeightedFormula};
    use std::collections::BTreeMap;

    fn extensions(n: usize, ell: u32, assignment: u32) -> f64 {
        let mut cnf = Cnf::new();
        let xs: Vec<u32> = (0..n).map(|_| cnf.fresh_var()).collect();
        encode_counter(&mut cnf, &xs, ell).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let lit = x as i32;
            cnf.add_clause(vec![if assignment & (1 << i) != 0 { lit } else { -lit }]);
        }
        let wf = WeightedFormula {
            cnf,
            weights: BTreeMap::new(),
            ln_gamma: 0.0,
        };
        exact_weighted_count(&wf).unwrap().count()
    }

    #[test]
    fn bit_budget_is_copies_times_width() {
        let mut cnf = Cnf::new();
        let xs: Vec<u32> = (0..3).map(|_| cnf.fresh_var()).collect();
        let ys = encode_counter(&mut cnf, &xs, 2).unwrap();
        assert_eq!(ys.len(), 6);
    }

    #[test]
    fn threshold_examples() {
        // Two trues out of three: meets 2, misses 3.
        assert_eq!(extensions(3, 2, 0b101), 1.0);
        assert_eq!(extensions(3, 3, 0b101), 0.0);
    }

    #[test]
    fn rejects_out_of_range_thresholds() {
        let mut cnf = Cnf::new();
        let xs: Vec<u32> = (0..3).map(|_| cnf.fresh_var()).collect();
        assert!(matches!(
            encode_counter(&mut cnf, &xs, 0),
            Err(EncodeError::ThresholdOutOfRange { ell: 0, max: 3 })
        ));
        assert!(matches!(
            encode_counter(&mut cnf, &xs, 4),
            Err(EncodeError::ThresholdOutOfRange { ell: 4, max: 3 })
        ));
    }

    #[test]
    fn extension_exists_exactly_when_enough_inputs_are_true() {
        for n in 1..=5usize {
            for ell in 1..=n as u32 {
                for assignment in 0..(1u32 << n) {
                    let expected = if assignment.count_ones() >= ell { 1.0 } else { 0.0 };
                    assert_eq!(
                        extensions(n, ell, assignment),
                        expected,
                        "n={n} ell={ell} assignment={assignment:b}"
                    );
                }
            }
        }
    }

    fn pinned_count(cnf: Cnf, xs: &[u32], assignment: u32) -> f64 {
        let mut cnf = cnf;
        for (i, &x) in xs.iter().enumerate() {
            let lit = x as i32;
            cnf.add_clause(vec![if assignment & (1 << i) != 0 { lit } else { -lit }]);
        }
        let wf = WeightedFormula {
            cnf,
            weights: BTreeMap::new(),
            ln_gamma: 0.0,
        };
        exact_weighted_count(&wf).unwrap().count()
    }

    #[test]
    fn below_block_accepts_exactly_the_short_counts() {
        for n in 1..=5usize {
            for ell in 1..=n as u32 {
                for assignment in 0..(1u32 << n) {
                    let mut cnf = Cnf::new();
                    let xs: Vec<u32> = (0..n).map(|_| cnf.fresh_var()).collect();
                    encode_counter_below(&mut cnf, &xs, ell).unwrap();
                    let expected = if assignment.count_ones() < ell { 1.0 } else { 0.0 };
                    assert_eq!(
                        pinned_count(cnf, &xs, assignment),
                        expected,
                        "n={n} ell={ell} assignment={assignment:b}"
                    );
                }
            }
        }
    }

    #[test]
    fn exactly_block_accepts_exactly_the_matching_counts() {
        for n in 1..=5usize {
            for k in 0..=n as u32 {
                for assignment in 0..(1u32 << n) {
                    let mut cnf = Cnf::new();
                    let xs: Vec<u32> = (0..n).map(|_| cnf.fresh_var()).collect();
                    encode_exactly(&mut cnf, &xs, k);
                    let expected = if assignment.count_ones() == k { 1.0 } else { 0.0 };
                    assert_eq!(
                        pinned_count(cnf, &xs, assignment),
                        expected,
                        "n={n} k={k} assignment={assignment:b}"
                    );
                }
            }
        }
    }

    #[test]
    fn below_rejects_out_of_range_thresholds() {
        let mut cnf = Cnf::new();
        let xs: Vec<u32> = (0..3).map(|_| cnf.fresh_var()).collect();
        assert!(matches!(
            encode_counter_below(&mut cnf, &xs, 0),
            Err(EncodeError::ThresholdOutOfRange { ell: 0, max: 3 })
        ));
        assert!(matches!(
            encode_counter_below(&mut cnf, &xs, 4),
            Err(EncodeError::ThresholdOutOfRange { ell: 4, max: 3 })
        ));
    }
}
