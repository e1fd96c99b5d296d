//! Non-learning baselines.
//!
//! Every method here scores candidate location plans with the same robust
//! estimate: pre-attack coverage plus coverage left after the greedy attack.
//! Final answers are re-scored with the exact worst-case attack whenever that
//! is enumerable, so reported gaps are honest.

mod constructive;
mod improvement;
mod meta;
mod sequential;

pub use constructive::{constructive_locate, ConstructiveMethod};
pub use improvement::{improvement_locate, ImprovementMethod};
pub use meta::{metaheuristic_locate, MetaConfig, MetaKnobs, MetaMethod};
pub use sequential::sequential_locate;

use std::str::FromStr;

use crate::coverage::{pre_interdiction_coverage, Evaluation, InterdictionPlan, LocationPlan};
use crate::error::{Error, Result};
use crate::exact::{exact_evaluate, ExactCaps};
use crate::instance::Instance;

/// Reusable scratch space for coverage counting.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    counts: Vec<u32>,
    mask: Vec<u64>,
}

impl Scratch {
    pub(crate) fn new(inst: &Instance) -> Self {
        Scratch {
            counts: vec![0; inst.num_customers()],
            mask: Vec::with_capacity(inst.mask_words()),
        }
    }
}

/// Greedy attack on `open`: `min(r, |open|)` rounds, each removing the
/// surviving facility whose loss uncovers the most customers (ties to the
/// lowest site index). Returns the hits in removal order and the surviving
/// coverage.
pub(crate) fn greedy_attack(inst: &Instance, open: &[usize], r: usize, s: &mut Scratch) -> (Vec<usize>, usize) {
    let counts = &mut s.counts;
    counts.iter_mut().for_each(|c| *c = 0);
    for &j in open {
        for &i in inst.site_customers(j) {
            counts[i] += 1;
        }
    }
    let mut alive: Vec<usize> = open.to_vec();
    alive.sort_unstable();
    let mut hits = Vec::with_capacity(r);
    for _ in 0..r.min(open.len()) {
        let mut best = (0usize, usize::MAX);
        for (pos, &j) in alive.iter().enumerate() {
            let drop = inst.site_customers(j).iter().filter(|&&i| counts[i] == 1).count();
            if best.1 == usize::MAX || drop > best.1 {
                best = (pos, drop);
            }
        }
        let j = alive.remove(best.0);
        for &i in inst.site_customers(j) {
            counts[i] -= 1;
        }
        hits.push(j);
    }
    let post = counts.iter().filter(|&&c| c > 0).count();
    (hits, post)
}

/// Robust estimate of `open`: pre-coverage plus greedy-attack survivors.
pub(crate) fn robust_estimate(inst: &Instance, open: &[usize], s: &mut Scratch) -> usize {
    let pre = inst.covered_count(open.iter().copied(), &mut s.mask);
    let (_, post) = greedy_attack(inst, open, inst.r(), s);
    pre + post
}

/// The standardized greedy interdiction heuristic for the lower level.
pub fn greedy_interdiction(inst: &Instance, loc: &LocationPlan) -> Result<InterdictionPlan> {
    pre_interdiction_coverage(inst, loc)?;
    let mut s = Scratch::new(inst);
    let (hits, _) = greedy_attack(inst, loc.open_sites(), inst.r(), &mut s);
    InterdictionPlan::new(inst, loc, hits)
}

/// Evaluation of `loc` under the greedy attack.
pub fn greedy_evaluate(inst: &Instance, loc: &LocationPlan) -> Result<Evaluation> {
    let pre = pre_interdiction_coverage(inst, loc)?;
    let mut s = Scratch::new(inst);
    let (_, post) = greedy_attack(inst, loc.open_sites(), inst.r(), &mut s);
    Ok(Evaluation::new(pre, post))
}

/// Final scoring: exact worst case when enumerable, otherwise the greedy attack.
pub fn final_evaluate(inst: &Instance, loc: &LocationPlan, caps: &ExactCaps) -> Result<Evaluation> {
    if caps.interdiction_enumerable(inst) {
        exact_evaluate(inst, loc, caps)
    } else {
        greedy_evaluate(inst, loc)
    }
}

/// Every baseline by its tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMethod {
    Exact,
    Sequential,
    Gm,
    Stingy,
    As,
    Ge,
    Gi,
    Ga,
    Sa,
    Ts,
    Vns,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 11] = [
        BaselineMethod::Exact,
        BaselineMethod::Sequential,
        BaselineMethod::Gm,
        BaselineMethod::Ge,
        BaselineMethod::Gi,
        BaselineMethod::Stingy,
        BaselineMethod::As,
        BaselineMethod::Ga,
        BaselineMethod::Sa,
        BaselineMethod::Ts,
        BaselineMethod::Vns,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            BaselineMethod::Exact => "exact",
            BaselineMethod::Sequential => "sequential",
            BaselineMethod::Gm => "gm",
            BaselineMethod::Stingy => "stingy",
            BaselineMethod::As => "as",
            BaselineMethod::Ge => "ge",
            BaselineMethod::Gi => "gi",
            BaselineMethod::Ga => "ga",
            BaselineMethod::Sa => "sa",
            BaselineMethod::Ts => "ts",
            BaselineMethod::Vns => "vns",
        }
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        BaselineMethod::ALL
            .into_iter()
            .find(|m| m.tag() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method tag `{s}`")))
    }
}

impl std::fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Run one baseline with its default configuration.
pub fn solve_baseline(
    inst: &Instance,
    method: BaselineMethod,
    seed: u64,
    time_limit_s: Option<f64>,
    caps: &ExactCaps,
) -> Result<(LocationPlan, Evaluation)> {
    let meta = |m: MetaMethod| {
        let mut cfg = MetaConfig::new(m, seed);
        cfg.time_limit_s = time_limit_s;
        metaheuristic_locate(inst, &cfg, caps)
    };
    match method {
        BaselineMethod::Exact => {
            crate::exact::exact_solve_with(inst, caps, crate::exec::Execution::Sequential)
        }
        BaselineMethod::Sequential => sequential_locate(inst, caps),
        BaselineMethod::Gm => constructive_locate(inst, ConstructiveMethod::GreedyMyopic, caps),
        BaselineMethod::Stingy => constructive_locate(inst, ConstructiveMethod::Stingy, caps),
        BaselineMethod::As => constructive_locate(inst, ConstructiveMethod::AlternateSelection, caps),
        BaselineMethod::Ge => improvement_locate(inst, ImprovementMethod::GreedyExchange, None, caps),
        BaselineMethod::Gi => improvement_locate(inst, ImprovementMethod::GlobalInterchange, None, caps),
        BaselineMethod::Ga => meta(MetaMethod::Genetic),
        BaselineMethod::Sa => meta(MetaMethod::Annealing),
        BaselineMethod::Ts => meta(MetaMethod::Tabu),
        BaselineMethod::Vns => meta(MetaMethod::Vns),
    }
}
