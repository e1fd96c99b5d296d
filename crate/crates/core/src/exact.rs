//! Exhaustive enumeration for the lower-level attack and the full bi-level problem.
//!
//! Ties are broken toward the lexicographically smallest index set everywhere.

use serde::{Deserialize, Serialize};

use crate::coverage::{Evaluation, InterdictionPlan, LocationPlan};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::instance::Instance;

/// Enumeration limits. Exceeding one is an error, never a silent truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactCaps {
    /// Max C(p, r) for the worst-case attack.
    pub interdiction: u128,
    /// Max C(|J|, p) * C(p, r) for the bi-level solve.
    pub bilevel: u128,
    /// Max C(p, r) patterns in the single-level export.
    pub patterns: u128,
}

impl Default for ExactCaps {
    fn default() -> Self {
        ExactCaps {
            interdiction: 1_000_000,
            bilevel: 100_000_000,
            patterns: 100_000,
        }
    }
}

impl ExactCaps {
    pub fn interdiction_enumerable(&self, inst: &Instance) -> bool {
        binomial(inst.p(), inst.r()) <= self.interdiction
    }

    pub fn bilevel_work(inst: &Instance) -> u128 {
        binomial(inst.num_sites(), inst.p()).saturating_mul(binomial(inst.p(), inst.r()))
    }

    pub fn bilevel_enumerable(&self, inst: &Instance) -> bool {
        Self::bilevel_work(inst) <= self.bilevel
    }
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advance `idx` to the next k-subset of `0..n` in lexicographic order.
pub fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for t in i + 1..k {
                idx[t] = idx[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// All k-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut cur: Option<Vec<usize>> = if k <= n { Some((0..k).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let mut next = out.clone();
        cur = if next_combination(&mut next, n) { Some(next) } else { None };
        Some(out)
    })
}

/// Minimum surviving coverage over all r-subsets of `open` (sorted), plus the
/// lexicographically smallest minimizing hit set.
pub(crate) fn min_post(inst: &Instance, open: &[usize], r: usize, buf: &mut Vec<u64>) -> (Vec<usize>, usize) {
    let p = open.len();
    let mut pos: Vec<usize> = (0..r).collect();
    let mut best_post = usize::MAX;
    let mut best_pos = pos.clone();
    loop {
        let post = inst.covered_count(
            (0..p).filter(|k| !pos.contains(k)).map(|k| open[k]),
            buf,
        );
        if post < best_post {
            best_post = post;
            best_pos.clone_from(&pos);
            if post == 0 {
                break;
            }
        }
        if !next_combination(&mut pos, p) {
            break;
        }
    }
    (best_pos.into_iter().map(|k| open[k]).collect(), best_post)
}

pub fn worst_case_interdiction(inst: &Instance, loc: &LocationPlan) -> Result<(InterdictionPlan, usize)> {
    worst_case_interdiction_with(inst, loc, &ExactCaps::default())
}

/// Exact attacker best response by enumeration of all r-subsets of the open sites.
pub fn worst_case_interdiction_with(
    inst: &Instance,
    loc: &LocationPlan,
    caps: &ExactCaps,
) -> Result<(InterdictionPlan, usize)> {
    // validates the plan against the instance
    crate::coverage::pre_interdiction_coverage(inst, loc)?;
    let needed = binomial(inst.p(), inst.r());
    if needed > caps.interdiction {
        return Err(Error::ScaleTooLarge { needed, cap: caps.interdiction });
    }
    let mut buf = Vec::new();
    let (hits, post) = min_post(inst, loc.open_sites(), inst.r(), &mut buf);
    Ok((InterdictionPlan::new(inst, loc, hits)?, post))
}

/// Score a location plan with the exact worst-case attack.
pub fn exact_evaluate(inst: &Instance, loc: &LocationPlan, caps: &ExactCaps) -> Result<Evaluation> {
    let pre = crate::coverage::pre_interdiction_coverage(inst, loc)?;
    let (_, post) = worst_case_interdiction_with(inst, loc, caps)?;
    Ok(Evaluation::new(pre, post))
}

pub fn exact_solve(inst: &Instance) -> Result<(LocationPlan, Evaluation)> {
    exact_solve_with(inst, &ExactCaps::default(), Execution::default())
}

struct Best {
    obj: usize,
    pre: usize,
    post: usize,
    open: Vec<usize>,
}

/// Bi-level optimum by enumerating every p-subset of sites and its exact
/// worst-case attack. Work is split by the smallest open site index; the
/// lexicographically first maximizer wins regardless of scheduling.
pub fn exact_solve_with(
    inst: &Instance,
    caps: &ExactCaps,
    exec: Execution,
) -> Result<(LocationPlan, Evaluation)> {
    let needed = ExactCaps::bilevel_work(inst);
    if needed > caps.bilevel {
        return Err(Error::ScaleTooLarge { needed, cap: caps.bilevel });
    }
    let (p, r, m) = (inst.p(), inst.r(), inst.num_sites());
    if p == 0 {
        return Ok((LocationPlan::new(inst, vec![])?, Evaluation::new(0, 0)));
    }

    let chunk = |first: usize| -> Option<Best> {
        let mut buf = Vec::new();
        let mut best: Option<Best> = None;
        // remaining p-1 sites drawn from first+1..m
        let rest_n = m - first - 1;
        let mut rest: Vec<usize> = (0..p - 1).collect();
        let mut open = vec![0usize; p];
        loop {
            open[0] = first;
            for (k, &t) in rest.iter().enumerate() {
                open[k + 1] = first + 1 + t;
            }
            let pre = inst.covered_count(open.iter().copied(), &mut buf);
            // obj <= 2 * pre; an equal value can only tie a lexicographically earlier set
            if best.as_ref().is_none_or(|b| 2 * pre > b.obj) {
                let (_, post) = min_post(inst, &open, r, &mut buf);
                let obj = pre + post;
                if best.as_ref().is_none_or(|b| obj > b.obj) {
                    best = Some(Best { obj, pre, post, open: open.clone() });
                }
            }
            if !next_combination(&mut rest, rest_n) {
                break;
            }
        }
        best
    };

    let firsts = m - p + 1;
    let results = exec.map_range(firsts, chunk);
    let mut winner: Option<Best> = None;
    for b in results.into_iter().flatten() {
        if winner.as_ref().is_none_or(|w| b.obj > w.obj) {
            winner = Some(b);
        }
    }
    let w = winner.expect("at least one p-subset exists");
    Ok((LocationPlan::new(inst, w.open)?, Evaluation { pre: w.pre, post: w.post, obj: w.obj }))
}
