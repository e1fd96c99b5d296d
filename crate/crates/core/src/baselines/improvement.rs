use crate::coverage::{Evaluation, LocationPlan};
use crate::error::Result;
use crate::exact::ExactCaps;
use crate::instance::Instance;

use super::constructive::{best_swap, greedy_myopic};
use super::{final_evaluate, robust_estimate, Scratch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImprovementMethod {
    /// Apply the first improving swap found, then rescan.
    GreedyExchange,
    /// Apply the best swap of the whole neighborhood, then rescan.
    GlobalInterchange,
}

/// Swap-based local search from `init` (greedy myopic when `None`).
///
/// Every accepted move strictly raises the robust estimate, which is bounded
/// by twice the customer count, so the search stops after at most 2|I| moves.
pub fn improvement_locate(
    inst: &Instance,
    method: ImprovementMethod,
    init: Option<&LocationPlan>,
    caps: &ExactCaps,
) -> Result<(LocationPlan, Evaluation)> {
    let (loc, _) = improve(inst, method, init)?;
    let eval = final_evaluate(inst, &loc, caps)?;
    Ok((loc, eval))
}

/// Local search returning the plan and the number of accepted moves.
pub(crate) fn improve(inst: &Instance, method: ImprovementMethod, init: Option<&LocationPlan>) -> Result<(LocationPlan, usize)> {
    let mut s = Scratch::new(inst);
    let mut open = match init {
        Some(l) => {
            crate::coverage::pre_interdiction_coverage(inst, l)?;
            l.open_sites().to_vec()
        }
        None => greedy_myopic(inst, &mut s),
    };
    let mut current = robust_estimate(inst, &open, &mut s);
    let mut moves = 0;
    loop {
        let step = match method {
            ImprovementMethod::GreedyExchange => first_swap(inst, &open, current, &mut s),
            ImprovementMethod::GlobalInterchange => best_swap(inst, &open, current, &mut s),
        };
        match step {
            Some((pos, j, f)) => {
                open[pos] = j;
                current = f;
                moves += 1;
            }
            None => break,
        }
    }
    Ok((LocationPlan::new(inst, open)?, moves))
}

pub(crate) fn first_swap(inst: &Instance, open: &[usize], current: usize, s: &mut Scratch) -> Option<(usize, usize, usize)> {
    let mut cand = open.to_vec();
    for pos in 0..open.len() {
        for j in 0..inst.num_sites() {
            if open.contains(&j) {
                continue;
            }
            cand[pos] = j;
            let f = robust_estimate(inst, &cand, s);
            if f > current {
                return Some((pos, j, f));
            }
        }
        cand[pos] = open[pos];
    }
    None
}
