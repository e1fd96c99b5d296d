use crate::coverage::{Evaluation, LocationPlan};
use crate::error::Result;
use crate::exact::{binomial, next_combination, ExactCaps};
use crate::instance::Instance;

use super::final_evaluate;

/// Plain MCLP that ignores the attacker, then scored under the attack.
///
/// Stage one maximizes pre-attack coverage exactly when C(|J|, p) is within
/// the bi-level cap (lexicographically first maximizer), otherwise by greedy
/// marginal coverage.
pub fn sequential_locate(inst: &Instance, caps: &ExactCaps) -> Result<(LocationPlan, Evaluation)> {
    let open = if binomial(inst.num_sites(), inst.p()) <= caps.bilevel {
        max_coverage_exact(inst)
    } else {
        max_coverage_greedy(inst)
    };
    let loc = LocationPlan::new(inst, open)?;
    let eval = final_evaluate(inst, &loc, caps)?;
    Ok((loc, eval))
}

pub(crate) fn max_coverage_exact(inst: &Instance) -> Vec<usize> {
    let (m, p) = (inst.num_sites(), inst.p());
    let mut cur: Vec<usize> = (0..p).collect();
    let mut best = (cur.clone(), 0usize);
    let mut buf = Vec::new();
    let full = inst.num_customers();
    let mut first = true;
    loop {
        let pre = inst.covered_count(cur.iter().copied(), &mut buf);
        if first || pre > best.1 {
            best = (cur.clone(), pre);
            first = false;
            if pre == full {
                break;
            }
        }
        if !next_combination(&mut cur, m) {
            break;
        }
    }
    best.0
}

pub(crate) fn max_coverage_greedy(inst: &Instance) -> Vec<usize> {
    let mut open: Vec<usize> = Vec::with_capacity(inst.p());
    let mut buf = Vec::new();
    for _ in 0..inst.p() {
        let mut best: Option<(usize, usize)> = None;
        for j in (0..inst.num_sites()).filter(|j| !open.contains(j)) {
            let c = inst.covered_count(open.iter().copied().chain([j]), &mut buf);
            if best.is_none_or(|b| c > b.1) {
                best = Some((j, c));
            }
        }
        open.push(best.expect("p <= |J>").0);
    }
    open
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::t1;
    use crate::instance::Point;

    #[test]
    fn t1_sequential() {
        let (loc, e) = sequential_locate(&t1(), &ExactCaps::default()).unwrap();
        assert_eq!(loc.open_sites(), &[0, 2]);
        assert_eq!(e, Evaluation { pre: 4, post: 2, obj: 6 });
    }

    #[test]
    fn ignoring_the_attack_can_collapse_post() {
        // site 0 covers everybody; any second site is redundant
        let pts = vec![Point::new(0.5, 0.5), Point::new(0.45, 0.5), Point::new(0.55, 0.5), Point::new(0.5, 0.55)];
        let inst = Instance::new(pts.clone(), pts, 0.06, 2, 1).unwrap();
        let (_, e) = sequential_locate(&inst, &ExactCaps::default()).unwrap();
        assert_eq!(e.pre, 4);
        assert!(e.post <= e.pre);
    }

    #[test]
    fn greedy_fallback_matches_exact_on_easy_case() {
        let inst = t1();
        assert_eq!(max_coverage_greedy(&inst), vec![0, 2]);
        let tiny = ExactCaps { bilevel: 1, ..ExactCaps::default() };
        let (loc, _) = sequential_locate(&inst, &tiny).unwrap();
        assert_eq!(loc.open_sites(), &[0, 2]);
    }
}
