use crate::coverage::{Evaluation, LocationPlan};
use crate::error::Result;
use crate::exact::ExactCaps;
use crate::instance::Instance;

use super::{final_evaluate, robust_estimate, Scratch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstructiveMethod {
    /// Add one site at a time, maximizing the robust estimate.
    GreedyMyopic,
    /// Start with every site open and drop the least useful one at a time.
    Stingy,
    /// Alternate a greedy addition with the best improving substitution.
    AlternateSelection,
}

pub fn constructive_locate(
    inst: &Instance,
    method: ConstructiveMethod,
    caps: &ExactCaps,
) -> Result<(LocationPlan, Evaluation)> {
    let mut s = Scratch::new(inst);
    let open = match method {
        ConstructiveMethod::GreedyMyopic => greedy_myopic(inst, &mut s),
        ConstructiveMethod::Stingy => stingy(inst, &mut s),
        ConstructiveMethod::AlternateSelection => alternate_selection(inst, &mut s),
    };
    let loc = LocationPlan::new(inst, open)?;
    let eval = final_evaluate(inst, &loc, caps)?;
    Ok((loc, eval))
}

/// Closed site whose addition scores best (ties to the lowest index).
fn best_addition(inst: &Instance, open: &[usize], s: &mut Scratch) -> usize {
    let mut cand = open.to_vec();
    cand.push(0);
    let mut best: Option<(usize, usize)> = None;
    for j in 0..inst.num_sites() {
        if open.contains(&j) {
            continue;
        }
        *cand.last_mut().expect("nonempty") = j;
        let f = robust_estimate(inst, &cand, s);
        if best.is_none_or(|b| f > b.1) {
            best = Some((j, f));
        }
    }
    best.expect("a closed site exists").0
}

pub(crate) fn greedy_myopic(inst: &Instance, s: &mut Scratch) -> Vec<usize> {
    let mut open = Vec::with_capacity(inst.p());
    while open.len() < inst.p() {
        let j = best_addition(inst, &open, s);
        open.push(j);
    }
    open
}

fn stingy(inst: &Instance, s: &mut Scratch) -> Vec<usize> {
    let mut open: Vec<usize> = (0..inst.num_sites()).collect();
    let mut cand = Vec::with_capacity(open.len());
    while open.len() > inst.p() {
        let mut best: Option<(usize, usize)> = None;
        for pos in 0..open.len() {
            cand.clear();
            cand.extend(open.iter().enumerate().filter(|&(q, _)| q != pos).map(|(_, &j)| j));
            let f = robust_estimate(inst, &cand, s);
            if best.is_none_or(|b| f > b.1) {
                best = Some((pos, f));
            }
        }
        open.remove(best.expect("open is nonempty").0);
    }
    open
}

/// Best strictly improving single swap `(position in open, closed site)`.
pub(crate) fn best_swap(inst: &Instance, open: &[usize], current: usize, s: &mut Scratch) -> Option<(usize, usize, usize)> {
    let mut cand = open.to_vec();
    let mut best: Option<(usize, usize, usize)> = None;
    for pos in 0..open.len() {
        for j in 0..inst.num_sites() {
            if open.contains(&j) {
                continue;
            }
            cand[pos] = j;
            let f = robust_estimate(inst, &cand, s);
            if f > best.map_or(current, |b| b.2) {
                best = Some((pos, j, f));
            }
        }
        cand[pos] = open[pos];
    }
    best
}

fn alternate_selection(inst: &Instance, s: &mut Scratch) -> Vec<usize> {
    let mut open = Vec::with_capacity(inst.p());
    while open.len() < inst.p() {
        let j = best_addition(inst, &open, s);
        open.push(j);
        let current = robust_estimate(inst, &open, s);
        if let Some((pos, j, _)) = best_swap(inst, &open, current, s) {
            open[pos] = j;
        }
    }
    open
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::t1;
    use crate::instance::GenSpec;

    #[test]
    fn t1_gm_trace() {
        let inst = t1();
        let mut s = Scratch::new(&inst);
        // first pick: every single site scores pre 2, post 0; lowest index wins
        assert_eq!(best_addition(&inst, &[], &mut s), 0);
        // second pick: the other cluster
        assert_eq!(best_addition(&inst, &[0], &mut s), 2);
        let (loc, e) = constructive_locate(&inst, ConstructiveMethod::GreedyMyopic, &ExactCaps::default()).unwrap();
        assert_eq!(loc.open_sites(), &[0, 2]);
        assert_eq!(e.obj, 6);
    }

    #[test]
    fn all_methods_reach_six_on_t1() {
        for m in [ConstructiveMethod::GreedyMyopic, ConstructiveMethod::Stingy, ConstructiveMethod::AlternateSelection] {
            let (_, e) = constructive_locate(&t1(), m, &ExactCaps::default()).unwrap();
            assert_eq!(e.obj, 6, "{m:?}");
        }
    }

    #[test]
    fn p_equal_to_sites_opens_everything() {
        let inst = GenSpec { n: 6, p: 6, r: 2, radius: 0.3, seed: 4, count: 1 }.generate(0).unwrap();
        for m in [ConstructiveMethod::GreedyMyopic, ConstructiveMethod::Stingy, ConstructiveMethod::AlternateSelection] {
            let (loc, _) = constructive_locate(&inst, m, &ExactCaps::default()).unwrap();
            assert_eq!(loc.open_sites(), &[0, 1, 2, 3, 4, 5]);
        }
    }
}
