//! Literal weights and correction gadgets for a scenario encoding.
//!
//! Independent faults (temporary crashes, slot-one permanent crashes) are
//! weighted directly with their probability. State-dependent faults need a
//! correction: an omission fate is only drawn when something was forwarded,
//! and a permanent crash is only re-drawn while the edge is still alive. Each
//! such dependency gets a pair of gadget variables whose weights, together
//! with one γ factor per gadget, multiply out to exactly the conditional
//! probability — weight `p` on the "fault occurred and was drawn" indicator,
//! `1/(2-p)` on the "no fault and no draw" indicator.

use std::collections::BTreeMap;

use crate::encoder::{
    gadget_weights, EncodeError, ScenarioEncoding, VarRole, VariableBook, WeightedFormula,
};
use crate::model::{FaultModel, Scenario};

/// Attach weights (and gadgets) so that γ times the weighted model count of
/// the returned formula equals the scenario's score.
pub fn to_literal_weighted(
    enc: ScenarioEncoding,
    s: &Scenario,
) -> Result<(WeightedFormula, VariableBook), EncodeError> {
    let ScenarioEncoding { mut cnf, mut book } = enc;
    let mut weights: BTreeMap<i32, f64> = BTreeMap::new();
    let mut ln_gamma = 0.0;

    let p_crash: BTreeMap<&str, f64> = s
        .network
        .edges
        .iter()
        .map(|e| (e.id.as_str(), e.p_crash))
        .collect();
    let p_omit: BTreeMap<&str, f64> = s
        .network
        .edges
        .iter()
        .map(|e| (e.id.as_str(), e.p_omit))
        .collect();

    let mut crash_vars: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    let mut omit_vars: Vec<(String, u32, u32)> = Vec::new();
    for (var, role) in book.iter() {
        match role {
            VarRole::Crash { edge, micro } => {
                crash_vars.entry(edge.clone()).or_default().push((*micro, var));
            }
            VarRole::Omit { edge, micro } => omit_vars.push((edge.clone(), *micro, var)),
            _ => {}
        }
    }

    let weigh = |weights: &mut BTreeMap<i32, f64>, var: u32, p: f64| {
        weights.insert(var as i32, p);
        weights.insert(-(var as i32), 1.0 - p);
    };

    for (edge, mut vars) in crash_vars {
        let p = p_crash[edge.as_str()];
        vars.sort_unstable();
        // The first draw of an edge is unconditional either way.
        weigh(&mut weights, vars[0].1, p);
        if s.fault_model == FaultModel::Temporary {
            for &(_, var) in &vars[1..] {
                weigh(&mut weights, var, p);
            }
            continue;
        }
        // Permanent: each later slot re-draws only while still alive.
        let (wd, wc, g) = gadget_weights(p);
        for pair in vars.windows(2) {
            let (prev, cur) = (pair[0].1 as i32, pair[1].1 as i32);
            let micro = pair[1].0;
            let c = book.fresh(
                &mut cnf,
                VarRole::GadgetC { edge: edge.clone(), micro },
            ) as i32;
            cnf.add_clause(vec![-c, cur]);
            cnf.add_clause(vec![-c, prev]);
            cnf.add_clause(vec![c, -cur, -prev]);
            let d = book.fresh(
                &mut cnf,
                VarRole::GadgetD { edge: edge.clone(), micro },
            ) as i32;
            cnf.add_clause(vec![-d, cur]);
            cnf.add_clause(vec![-d, -prev]);
            cnf.add_clause(vec![d, -cur, prev]);
            weigh(&mut weights, c as u32, wc);
            weigh(&mut weights, d as u32, wd);
            ln_gamma += g.ln();
        }
    }

    for (edge, micro, om) in omit_vars {
        let p = p_omit[edge.as_str()];
        let fr = book
            .var(&VarRole::Forwarded { edge: edge.clone(), micro: micro - 1 })
            .expect("omission variables come with a forwarded flag") as i32;
        let om = om as i32;
        let (wa, wb, g) = gadget_weights(p);
        let a = book.fresh(&mut cnf, VarRole::GadgetA { edge: edge.clone(), micro }) as i32;
        cnf.add_clause(vec![-a, om]);
        cnf.add_clause(vec![-a, fr]);
        cnf.add_clause(vec![a, -om, -fr]);
        let b = book.fresh(&mut cnf, VarRole::GadgetB { edge: edge.clone(), micro }) as i32;
        cnf.add_clause(vec![-b, -om]);
        cnf.add_clause(vec![-b, -fr]);
        cnf.add_clause(vec![b, om, fr]);
        weigh(&mut weights, a as u32, wa);
        weigh(&mut weights, b as u32, wb);
        ln_gamma += g.ln();
    }

    let wf = WeightedFormula { cnf, weights, ln_gamma };
    wf.check_weights()?;
    Ok((wf, book))
}
