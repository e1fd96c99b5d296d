//! Surrogate-ensemble inference.
//!
//! Sample `K` location plans, score each by the mean objective over `E`
//! sampled responses of the interdiction policy, keep the best. Identical
//! plans are merged and their response samples pooled. The winner is then
//! rescored under the exact worst-case attack when that is enumerable; both
//! numbers are reported.

use std::collections::HashMap;

use mclip_core::baselines::greedy_evaluate;
use mclip_core::exact::exact_evaluate;
use mclip_core::{evaluate, Evaluation, ExactCaps, Execution, Instance, LocationPlan};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SiteGeometry;
use crate::params::{PolicyParams, Role};
use crate::policy::PolicyContext;
use crate::trainer::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalScoring {
    SurrogateOnly,
    ExactWhenEnumerable,
}

/// How a candidate's ensemble reward is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    /// `E` sampled rollouts of the interdiction policy.
    Policy,
    /// One run of the greedy interdiction heuristic (ablation arm).
    GreedyHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub k: usize,
    pub e: usize,
    pub seed: u64,
    pub scoring: FinalScoring,
    pub surrogate: Surrogate,
}

impl InferConfig {
    pub fn new(k: usize, e: usize, seed: u64) -> Self {
        InferConfig { k, e, seed, scoring: FinalScoring::ExactWhenEnumerable, surrogate: Surrogate::Policy }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.e == 0 {
            return Err(Error::Config("K and E must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferResult {
    pub plan: LocationPlan,
    /// Final score: exact worst case when enumerable and requested, else the
    /// greedy-attack evaluation.
    pub evaluation: Evaluation,
    pub exact: bool,
    /// Ensemble (surrogate) reward of the winner.
    pub reward: f64,
    /// Distinct sampled plans.
    pub candidates: usize,
}

/// Per-candidate ensemble statistics, in first-occurrence order.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub plan: LocationPlan,
    /// Index of the first location sample that produced this plan.
    pub first: usize,
    pub multiplicity: usize,
    pub reward: f64,
    pub draws: usize,
}

fn check_pair(lp: &PolicyParams, ip: &PolicyParams) -> Result<()> {
    if lp.role != Role::Location || ip.role != Role::Interdiction {
        return Err(Error::Role("expected a location and an interdiction policy".into()));
    }
    if !lp.is_finite() || !ip.is_finite() {
        return Err(Error::Role("parameters contain non-finite values".into()));
    }
    Ok(())
}

fn final_score(inst: &Instance, loc: &LocationPlan, scoring: FinalScoring, caps: &ExactCaps) -> Result<(Evaluation, bool)> {
    if scoring == FinalScoring::ExactWhenEnumerable && caps.interdiction_enumerable(inst) {
        Ok((exact_evaluate(inst, loc, caps)?, true))
    } else {
        Ok((greedy_evaluate(inst, loc)?, false))
    }
}

/// Ensemble reward of `loc` from `draws` sampled responses; draw `j` of
/// location sample `i` uses its own stream so pooled merges stay reproducible.
fn policy_reward(
    ip: &PolicyParams,
    inst: &Instance,
    geom: &SiteGeometry,
    loc: &LocationPlan,
    sample_ids: &[usize],
    e: usize,
    seed: u64,
) -> Result<f64> {
    let ctx = PolicyContext::new(ip, inst, geom, Some(loc))?;
    let mut total = 0.0;
    for &i in sample_ids {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0xE5, i as u64]));
        for _ in 0..e {
            let hits = ctx.sample(&mut rng)?.interdiction_plan(inst, loc)?;
            total += evaluate(inst, loc, &hits)?.obj as f64;
        }
    }
    Ok(total / (sample_ids.len() * e) as f64)
}

/// Sample and score all candidates.
pub fn ensemble_candidates(
    inst: &Instance,
    lp: &PolicyParams,
    ip: &PolicyParams,
    cfg: &InferConfig,
    exec: Execution,
) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    check_pair(lp, ip)?;
    let geom = SiteGeometry::new(inst);
    let lctx = PolicyContext::new(lp, inst, &geom, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0x10C]));
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut groups: Vec<(LocationPlan, Vec<usize>)> = Vec::new();
    for i in 0..cfg.k {
        let plan = lctx.sample(&mut rng)?.location_plan(inst)?;
        match index.get(plan.open_sites()) {
            Some(&g) => groups[g].1.push(i),
            None => {
                index.insert(plan.open_sites().to_vec(), groups.len());
                groups.push((plan, vec![i]));
            }
        }
    }
    let scored = exec.map(&groups, |(plan, ids)| -> Result<(f64, usize)> {
        match cfg.surrogate {
            Surrogate::Policy => Ok((policy_reward(ip, inst, &geom, plan, ids, cfg.e, cfg.seed)?, ids.len() * cfg.e)),
            Surrogate::GreedyHeuristic => Ok((greedy_evaluate(inst, plan)?.obj as f64, 1)),
        }
    });
    groups
        .into_iter()
        .zip(scored)
        .map(|((plan, ids), s)| {
            let (reward, draws) = s?;
            Ok(Candidate { plan, first: ids[0], multiplicity: ids.len(), reward, draws })
        })
        .collect()
}

pub fn ensemble_infer(
    inst: &Instance,
    lp: &PolicyParams,
    ip: &PolicyParams,
    cfg: &InferConfig,
    caps: &ExactCaps,
    exec: Execution,
) -> Result<InferResult> {
    let cands = ensemble_candidates(inst, lp, ip, cfg, exec)?;
    // candidates are in first-occurrence order, so strict `>` keeps the lowest index on ties
    let mut best = 0;
    for (c, cand) in cands.iter().enumerate().skip(1) {
        if cand.reward > cands[best].reward {
            best = c;
        }
    }
    let win = &cands[best];
    let (evaluation, exact) = final_score(inst, &win.plan, cfg.scoring, caps)?;
    Ok(InferResult { plan: win.plan.clone(), evaluation, exact, reward: win.reward, candidates: cands.len() })
}

/// Both policies decoded greedily.
pub fn greedy_infer(
    inst: &Instance,
    lp: &PolicyParams,
    ip: &PolicyParams,
    scoring: FinalScoring,
    caps: &ExactCaps,
) -> Result<InferResult> {
    check_pair(lp, ip)?;
    let geom = SiteGeometry::new(inst);
    let (plan, e) = crate::trainer::greedy_episode(lp, ip, inst, &geom)?;
    let (evaluation, exact) = final_score(inst, &plan, scoring, caps)?;
    Ok(InferResult { plan, evaluation, exact, reward: e.obj as f64, candidates: 1 })
}
