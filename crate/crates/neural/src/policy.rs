//! Autoregressive rollouts, teacher-forced log-probabilities and their gradients.

use mclip_core::{Instance, InterdictionPlan, LocationPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{self, DecoderPrep, PrepGrad, StepCache};
use crate::encoder::{encode, encode_backward, Encoding};
use crate::error::{Error, Result};
use crate::features::{EpisodeState, SiteGeometry};
use crate::params::{PolicyParams, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sampled,
}

/// One constructed action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub role: Role,
    pub mode: DecodeMode,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
}

impl Rollout {
    pub fn log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }

    pub fn location_plan(&self, inst: &Instance) -> Result<LocationPlan> {
        if self.role != Role::Location {
            return Err(Error::Role("not a location rollout".into()));
        }
        Ok(LocationPlan::new(inst, self.actions.clone())?)
    }

    pub fn interdiction_plan(&self, inst: &Instance, loc: &LocationPlan) -> Result<InterdictionPlan> {
        if self.role != Role::Interdiction {
            return Err(Error::Role("not an interdiction rollout".into()));
        }
        Ok(InterdictionPlan::new(inst, loc, self.actions.clone())?)
    }
}

/// Argmax with ties to the lowest index.
pub fn argmax(probs: &[f64], feasible: &[usize]) -> usize {
    let mut best = feasible[0];
    for &i in &feasible[1..] {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw over the feasible nodes.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], feasible: &[usize], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &i in feasible {
        acc += probs[i];
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the total; take the last positive entry
    *feasible.iter().rev().find(|&&i| probs[i] > 0.0).unwrap_or(&feasible[feasible.len() - 1])
}

/// A policy bound to one instance (and, for interdiction, one location plan).
/// The encoding is computed once and reused by every rollout.
#[derive(Debug, Clone)]
pub struct PolicyContext<'a> {
    params: &'a PolicyParams,
    inst: &'a Instance,
    geom: &'a SiteGeometry,
    start: EpisodeState,
    enc: Encoding,
    prep: DecoderPrep,
}

impl<'a> PolicyContext<'a> {
    pub fn new(
        params: &'a PolicyParams,
        inst: &'a Instance,
        geom: &'a SiteGeometry,
        conditioning: Option<&LocationPlan>,
    ) -> Result<Self> {
        let start = match (params.role, conditioning) {
            (Role::Location, None) => EpisodeState::location(inst),
            (Role::Interdiction, Some(loc)) => EpisodeState::interdiction(inst, geom, loc),
            (Role::Location, Some(_)) => {
                return Err(Error::Role("location policy takes no conditioning plan".into()))
            }
            (Role::Interdiction, None) => {
                return Err(Error::Role("interdiction policy needs a location plan".into()))
            }
        };
        let enc = encode(params, &start.node_features(inst), inst.num_sites())?;
        let prep = decoder::prepare(params, &enc);
        Ok(PolicyContext { params, inst, geom, start, enc, prep })
    }

    pub fn encoding(&self) -> &Encoding {
        &self.enc
    }

    pub fn budget(&self) -> usize {
        self.start.budget()
    }

    /// Distribution at the first step.
    pub fn first_step(&self) -> Result<StepCache> {
        self.decode(&self.start)
    }

    fn decode(&self, s: &EpisodeState) -> Result<StepCache> {
        decoder::step(self.params, &self.enc, &self.prep, &s.flags(self.inst), &s.globals(self.inst), s.mask())
    }

    fn run<F>(&self, mut choose: F, keep: bool) -> Result<(Vec<usize>, Vec<f64>, Vec<StepCache>)>
    where
        F: FnMut(usize, &StepCache) -> Result<usize>,
    {
        let mut s = self.start.clone();
        let budget = s.budget();
        let mut actions = Vec::with_capacity(budget);
        let mut lps = Vec::with_capacity(budget);
        let mut caches = Vec::new();
        for t in 0..budget {
            let c = self.decode(&s)?;
            let a = choose(t, &c)?;
            s.apply(self.inst, self.geom, a)?;
            lps.push(c.probs[a].ln());
            actions.push(a);
            if keep {
                caches.push(c);
            }
        }
        Ok((actions, lps, caches))
    }

    pub fn greedy(&self) -> Result<Rollout> {
        let (actions, log_probs, _) = self.run(|_, c| Ok(argmax(&c.probs, &c.feasible)), false)?;
        Ok(Rollout { role: self.params.role, mode: DecodeMode::Greedy, actions, log_probs })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Rollout> {
        let (actions, log_probs, _) = self.run(|_, c| Ok(sample_index(&c.probs, &c.feasible, rng)), false)?;
        Ok(Rollout { role: self.params.role, mode: DecodeMode::Sampled, actions, log_probs })
    }

    pub fn rollout<R: Rng + ?Sized>(&self, mode: DecodeMode, rng: &mut R) -> Result<Rollout> {
        match mode {
            DecodeMode::Greedy => self.greedy(),
            DecodeMode::Sampled => self.sample(rng),
        }
    }

    fn check_len(&self, seq: &[usize]) -> Result<()> {
        if seq.len() != self.budget() {
            return Err(Error::InfeasibleStep { step: seq.len().min(self.budget()), action: usize::MAX });
        }
        Ok(())
    }

    /// Teacher-forced log-probability of `seq`.
    pub fn log_prob_of(&self, seq: &[usize]) -> Result<f64> {
        self.check_len(seq)?;
        let (_, lps, _) = self.run(|t, _| Ok(seq[t]), false)?;
        Ok(lps.iter().sum())
    }

    /// Teacher-forced action distributions over all nodes, one per step of
    /// `seq`, together with each step's feasibility mask.
    pub fn step_distributions(&self, seq: &[usize]) -> Result<Vec<(Vec<f64>, Vec<bool>)>> {
        self.check_len(seq)?;
        let mut s = self.start.clone();
        let mut out = Vec::with_capacity(seq.len());
        for &a in seq {
            let c = self.decode(&s)?;
            out.push((c.probs, s.mask().to_vec()));
            s.apply(self.inst, self.geom, a)?;
        }
        Ok(out)
    }

    /// Adds `scale · ∇ log π(seq)` to `grad` and returns `log π(seq)`.
    pub fn log_prob_grad(&self, seq: &[usize], scale: f64, grad: &mut [f64]) -> Result<f64> {
        self.check_len(seq)?;
        if grad.len() != self.params.param_count() {
            return Err(Error::Dims("gradient buffer does not match parameters".into()));
        }
        let (_, lps, caches) = self.run(|t, _| Ok(seq[t]), true)?;
        let (n, d) = (self.enc.n, self.enc.d);
        let mut pg = PrepGrad::zeros(n, d);
        let mut dgraph = vec![0.0; d];
        let mut touched = false;
        for (c, &a) in caches.iter().zip(seq) {
            if c.feasible.len() < 2 || scale == 0.0 {
                continue;
            }
            touched = true;
            let dl: Vec<f64> = c
                .feasible
                .iter()
                .map(|&i| scale * ((i == a) as u8 as f64 - c.probs[i]))
                .collect();
            decoder::step_backward(self.params, c, &dl, grad, &mut pg, &mut dgraph);
        }
        if touched {
            let mut dnodes = vec![0.0; n * d];
            decoder::prepare_backward(self.params, &self.enc, &pg, grad, &mut dnodes);
            encode_backward(self.params, &self.enc, &dnodes, &dgraph, grad);
        }
        Ok(lps.iter().sum())
    }
}

/// One-shot rollout; `seed` drives the sampler (ignored in greedy mode).
pub fn rollout(
    params: &PolicyParams,
    inst: &Instance,
    conditioning: Option<&LocationPlan>,
    mode: DecodeMode,
    seed: u64,
) -> Result<Rollout> {
    let geom = SiteGeometry::new(inst);
    let ctx = PolicyContext::new(params, inst, &geom, conditioning)?;
    ctx.rollout(mode, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn log_prob_of(
    params: &PolicyParams,
    inst: &Instance,
    conditioning: Option<&LocationPlan>,
    seq: &[usize],
) -> Result<f64> {
    let geom = SiteGeometry::new(inst);
    PolicyContext::new(params, inst, &geom, conditioning)?.log_prob_of(seq)
}

/// `∇ log π(seq)` as a fresh vector, plus the log-probability.
pub fn log_prob_gradient(
    params: &PolicyParams,
    inst: &Instance,
    conditioning: Option<&LocationPlan>,
    seq: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let geom = SiteGeometry::new(inst);
    let ctx = PolicyContext::new(params, inst, &geom, conditioning)?;
    let mut grad = vec![0.0; params.param_count()];
    let lp = ctx.log_prob_grad(seq, 1.0, &mut grad)?;
    Ok((lp, grad))
}
