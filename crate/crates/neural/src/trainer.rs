//! Alternating REINFORCE training of the location and interdiction agents.
//!
//! Each epoch draws fresh instances, runs the location phase over all batches,
//! validates and possibly promotes the location baseline, then does the same
//! for the interdiction agent. Advantages are measured against greedy
//! rollouts of the frozen baseline pair. Per-instance gradients are summed in
//! instance order, so results do not depend on the worker count.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use mclip_core::baselines::final_evaluate;
use mclip_core::{evaluate, Evaluation, ExactCaps, Execution, GenSpec, Instance, LocationPlan};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_adam, load_params, save_adam, save_params, Lineage};
use crate::error::{Error, Result};
use crate::features::SiteGeometry;
use crate::optim::{Adam, AdamConfig};
use crate::params::{init_params, PolicyDims, PolicyParams, Role};
use crate::policy::PolicyContext;

/// SplitMix64 finalizer used to derive independent seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub preset: String,
    /// Instance family; `seed` is the training-data base seed, `count` unused.
    pub data: GenSpec,
    pub epochs: usize,
    pub instances_per_epoch: usize,
    pub batch_size: usize,
    pub val_size: usize,
    pub val_seed: u64,
    pub dims: PolicyDims,
    pub lr: f64,
    /// Multiplicative decay applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub adam: AdamConfig,
    /// Seed for initialization and sampling.
    pub seed: u64,
    /// Rescale gradients whose global norm exceeds this value.
    pub clip_grad_norm: Option<f64>,
}

impl TrainConfig {
    /// Desk-scale preset on 20-node instances.
    pub fn toy() -> Self {
        TrainConfig {
            preset: "toy".into(),
            data: GenSpec::mclip20(1, 0),
            epochs: 50,
            instances_per_epoch: 10_000,
            batch_size: 256,
            val_size: 1_280,
            val_seed: 77,
            dims: PolicyDims::toy(),
            lr: 1e-3,
            lr_decay: 0.1,
            decay_every: 200,
            adam: AdamConfig::default(),
            seed: 2024,
            clip_grad_norm: None,
        }
    }

    /// Full-scale settings. Not runnable on a desk machine.
    pub fn full() -> Self {
        TrainConfig {
            preset: "full".into(),
            data: GenSpec::mclip20(1, 0),
            epochs: 1_000,
            instances_per_epoch: 512_000,
            batch_size: 512,
            val_size: 1_280,
            val_seed: 77,
            dims: PolicyDims::full(),
            lr: 1e-4,
            lr_decay: 0.1,
            decay_every: 200,
            adam: AdamConfig::default(),
            seed: 2024,
            clip_grad_norm: None,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy()),
            "full" => Ok(Self::full()),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }

    pub fn desk_runnable(&self) -> bool {
        self.preset != "full"
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.instances_per_epoch == 0 || self.batch_size == 0 || self.val_size == 0 {
            return bad("counts must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.decay_every == 0 {
            return bad("decay factor must lie in (0, 1] with a positive period");
        }
        if let Some(c) = self.clip_grad_norm {
            if !(c > 0.0) {
                return bad("clip norm must be positive");
            }
        }
        self.adam.validate()?;
        self.dims.validate()?;
        GenSpec { count: 1, ..self.data }.validate()?;
        Ok(())
    }

    /// Learning rate used during 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }

    pub fn epoch_data(&self, epoch: usize) -> GenSpec {
        GenSpec {
            seed: mix_seed(&[self.data.seed, 0xDA7A, epoch as u64]),
            count: self.instances_per_epoch,
            ..self.data
        }
    }

    pub fn validation_data(&self) -> GenSpec {
        GenSpec { seed: self.val_seed, count: self.val_size, ..self.data }
    }

    fn same_run(&self, other: &TrainConfig) -> bool {
        TrainConfig { epochs: 0, ..self.clone() } == TrainConfig { epochs: 0, ..other.clone() }
    }
}

/// Current and baseline policies with their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPair {
    pub location: PolicyParams,
    pub interdiction: PolicyParams,
    pub location_baseline: PolicyParams,
    pub interdiction_baseline: PolicyParams,
    pub adam_location: Adam,
    pub adam_interdiction: Adam,
}

impl AgentPair {
    pub fn new(dims: PolicyDims, seed: u64, adam: AdamConfig) -> Result<Self> {
        let location = init_params(Role::Location, dims, mix_seed(&[seed, 1]))?;
        let interdiction = init_params(Role::Interdiction, dims, mix_seed(&[seed, 2]))?;
        Self::from_params(location, interdiction, adam)
    }

    pub fn from_params(location: PolicyParams, interdiction: PolicyParams, adam: AdamConfig) -> Result<Self> {
        if location.role != Role::Location || interdiction.role != Role::Interdiction {
            return Err(Error::Role("expected a location and an interdiction policy".into()));
        }
        Ok(AgentPair {
            adam_location: Adam::new(location.param_count(), adam),
            adam_interdiction: Adam::new(interdiction.param_count(), adam),
            location_baseline: location.clone(),
            interdiction_baseline: interdiction.clone(),
            location,
            interdiction,
        })
    }
}

/// Both policies greedy on one instance.
pub fn greedy_episode(
    lp: &PolicyParams,
    ip: &PolicyParams,
    inst: &Instance,
    geom: &SiteGeometry,
) -> Result<(LocationPlan, Evaluation)> {
    let loc = PolicyContext::new(lp, inst, geom, None)?.greedy()?.location_plan(inst)?;
    let hits = PolicyContext::new(ip, inst, geom, Some(&loc))?.greedy()?.interdiction_plan(inst, &loc)?;
    let e = evaluate(inst, &loc, &hits)?;
    Ok((loc, e))
}

/// One REINFORCE sample. `grad` holds `advantage · ∇ log π(τ)` of the
/// updated agent, or `None` when the advantage is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub reward: f64,
    pub baseline: f64,
    pub advantage: f64,
    pub actions: Vec<usize>,
    pub grad: Option<Vec<f64>>,
}

/// Location side: sampled `τ_L`, greedy `τ_I | τ_L`, reward `z`.
pub fn location_sample(pair: &AgentPair, inst: &Instance, geom: &SiteGeometry, rng: &mut ChaCha8Rng) -> Result<Sample> {
    let ctx = PolicyContext::new(&pair.location, inst, geom, None)?;
    let ro = ctx.sample(rng)?;
    let loc = ro.location_plan(inst)?;
    let hits = PolicyContext::new(&pair.interdiction, inst, geom, Some(&loc))?
        .greedy()?
        .interdiction_plan(inst, &loc)?;
    let reward = evaluate(inst, &loc, &hits)?.obj as f64;
    let (_, b) = greedy_episode(&pair.location_baseline, &pair.interdiction_baseline, inst, geom)?;
    let baseline = b.obj as f64;
    let advantage = reward - baseline;
    let grad = if advantage != 0.0 {
        let mut g = vec![0.0; pair.location.param_count()];
        ctx.log_prob_grad(&ro.actions, advantage, &mut g)?;
        Some(g)
    } else {
        None
    };
    Ok(Sample { reward, baseline, advantage, actions: ro.actions, grad })
}

/// Interdiction side: greedy `τ_L`, sampled `τ_I | τ_L`, reward `-z'`.
pub fn interdiction_sample(
    pair: &AgentPair,
    inst: &Instance,
    geom: &SiteGeometry,
    rng: &mut ChaCha8Rng,
) -> Result<Sample> {
    let loc = PolicyContext::new(&pair.location, inst, geom, None)?.greedy()?.location_plan(inst)?;
    let ctx = PolicyContext::new(&pair.interdiction, inst, geom, Some(&loc))?;
    let ro = ctx.sample(rng)?;
    let hits = ro.interdiction_plan(inst, &loc)?;
    let reward = -(evaluate(inst, &loc, &hits)?.post as f64);
    let (_, b) = greedy_episode(&pair.location_baseline, &pair.interdiction_baseline, inst, geom)?;
    let baseline = -(b.post as f64);
    let advantage = reward - baseline;
    let grad = if advantage != 0.0 {
        let mut g = vec![0.0; pair.interdiction.param_count()];
        ctx.log_prob_grad(&ro.actions, advantage, &mut g)?;
        Some(g)
    } else {
        None
    };
    Ok(Sample { reward, baseline, advantage, actions: ro.actions, grad })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Location,
    Interdiction,
}

impl Phase {
    pub fn role(self) -> Role {
        match self {
            Phase::Location => Role::Location,
            Phase::Interdiction => Role::Interdiction,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Phase::Location => 0x10C,
            Phase::Interdiction => 0x1D7,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.role().as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "location" => Ok(Phase::Location),
            "interdiction" => Ok(Phase::Interdiction),
            other => Err(Error::Config(format!("unknown phase `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub size: usize,
    pub mean_reward: f64,
    pub mean_baseline: f64,
    pub mean_advantage: f64,
    pub grad_norm: f64,
}

/// Where the sampling stream of a batch comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    /// Stream id of the first instance; instance `k` uses `first + k`.
    pub first: u64,
}

/// One REINFORCE step on the agent of `phase` over `batch`.
pub fn reinforce_update(
    pair: &mut AgentPair,
    phase: Phase,
    batch: &[Instance],
    lr: f64,
    clip: Option<f64>,
    key: StreamKey,
    exec: Execution,
) -> Result<BatchStats> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let samples: Vec<Result<Sample>> = {
        let pair_ref: &AgentPair = pair;
        exec.map_range(batch.len(), |k| {
            let inst = &batch[k];
            let geom = SiteGeometry::new(inst);
            let mut rng = ChaCha8Rng::seed_from_u64(key.seed);
            rng.set_stream(key.first + k as u64);
            match phase {
                Phase::Location => location_sample(pair_ref, inst, &geom, &mut rng),
                Phase::Interdiction => interdiction_sample(pair_ref, inst, &geom, &mut rng),
            }
        })
    };
    let (params, opt) = match phase {
        Phase::Location => (&mut pair.location, &mut pair.adam_location),
        Phase::Interdiction => (&mut pair.interdiction, &mut pair.adam_interdiction),
    };
    let b = batch.len() as f64;
    let mut grad = vec![0.0; params.param_count()];
    let (mut rs, mut bs, mut adv) = (0.0, 0.0, 0.0);
    for s in samples {
        let s = s?;
        rs += s.reward;
        bs += s.baseline;
        adv += s.advantage;
        if let Some(g) = s.grad {
            crate::linalg::add_assign(&mut grad, &g);
        }
    }
    // descend on the negated objective
    for g in &mut grad {
        *g *= -1.0 / b;
    }
    if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
        let name = params
            .layout
            .tensors
            .iter()
            .find(|t| t.range.contains(&bad))
            .map(|t| t.name.clone())
            .unwrap_or_default();
        return Err(Error::NonFiniteGradient(format!("{} policy, tensor {name}", phase)));
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if let Some(c) = clip {
        if norm > c {
            let s = c / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    opt.step(params, &grad, lr)?;
    Ok(BatchStats {
        size: batch.len(),
        mean_reward: rs / b,
        mean_baseline: bs / b,
        mean_advantage: adv / b,
        grad_norm: norm,
    })
}

/// Mean validation scores with every policy decoded greedily.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValScores {
    /// Mean `z` of current `θ_L` against `θ_I*`.
    pub location_current: f64,
    /// Mean `-z'` of current `θ_I` against `θ_L*`.
    pub interdiction_current: f64,
    /// Mean `z` of `θ_L*` against `θ_I*`.
    pub location_baseline: f64,
    /// Mean `-z'` of `θ_I*` against `θ_L*`.
    pub interdiction_baseline: f64,
}

fn mean_pair_scores(
    lp: &PolicyParams,
    ip: &PolicyParams,
    val: &[Instance],
    exec: Execution,
) -> Result<(f64, f64, Vec<LocationPlan>)> {
    let res = exec.map(val, |inst| greedy_episode(lp, ip, inst, &SiteGeometry::new(inst)));
    let (mut z, mut post) = (0.0, 0.0);
    let mut plans = Vec::with_capacity(val.len());
    for r in res {
        let (loc, e) = r?;
        z += e.obj as f64;
        post += e.post as f64;
        plans.push(loc);
    }
    let n = val.len() as f64;
    Ok((z / n, -post / n, plans))
}

pub fn evaluate_on_validation(pair: &AgentPair, val: &[Instance], exec: Execution) -> Result<ValScores> {
    let (lb, ib, _) = mean_pair_scores(&pair.location_baseline, &pair.interdiction_baseline, val, exec)?;
    let (lc, _, _) = mean_pair_scores(&pair.location, &pair.interdiction_baseline, val, exec)?;
    let (_, ic, _) = mean_pair_scores(&pair.location_baseline, &pair.interdiction, val, exec)?;
    Ok(ValScores {
        location_current: lc,
        interdiction_current: ic,
        location_baseline: lb,
        interdiction_baseline: ib,
    })
}

/// Mean objective of greedy location plans, rescored exactly when enumerable.
pub fn mean_exact_objective(lp: &PolicyParams, insts: &[Instance], caps: &ExactCaps, exec: Execution) -> Result<f64> {
    let res = exec.map(insts, |inst| -> Result<f64> {
        let geom = SiteGeometry::new(inst);
        let loc = PolicyContext::new(lp, inst, &geom, None)?.greedy()?.location_plan(inst)?;
        Ok(final_evaluate(inst, &loc, caps)?.obj as f64)
    });
    let mut s = 0.0;
    for r in res {
        s += r?;
    }
    Ok(s / insts.len() as f64)
}

/// One row of the training-curve file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    /// 1-based epoch.
    pub epoch: usize,
    pub phase: Phase,
    pub mean_sampled_reward: f64,
    pub val_current: f64,
    pub val_baseline: f64,
    pub promoted: bool,
    pub lr: f64,
    pub wall_seconds: f64,
    /// Mean exactly rescored objective of greedy `θ_L` on the validation set.
    pub val_exact_obj: f64,
}

pub const CURVE_HEADER: &str =
    "epoch,phase,mean_sampled_reward,val_current,val_baseline,promoted,lr,wall_seconds,val_exact_obj";

impl CurveRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{},{:e},{:.3},{:.6}",
            self.epoch,
            self.phase,
            self.mean_sampled_reward,
            self.val_current,
            self.val_baseline,
            self.promoted as u8,
            self.lr,
            self.wall_seconds,
            self.val_exact_obj
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            return Err(Error::Config(format!("curve row has {} fields, expected 9", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("bad number `{s}`: {e}")));
        Ok(CurveRecord {
            epoch: f[0].parse().map_err(|_| Error::Config(format!("bad epoch `{}`", f[0])))?,
            phase: f[1].parse()?,
            mean_sampled_reward: num(f[2])?,
            val_current: num(f[3])?,
            val_baseline: num(f[4])?,
            promoted: match f[5] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Config(format!("bad promoted flag `{other}`"))),
            },
            lr: num(f[6])?,
            wall_seconds: num(f[7])?,
            val_exact_obj: num(f[8])?,
        })
    }
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CURVE_HEADER => {}
        _ => return Err(Error::Config("curve file lacks the expected header".into())),
    }
    lines.filter(|l| !l.trim().is_empty()).map(CurveRecord::from_csv_row).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunState {
    epoch: usize,
    config: TrainConfig,
    promotions_location: usize,
    promotions_interdiction: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Checkpoints and the curve file go here when set.
    pub out_dir: Option<PathBuf>,
    /// Continue from the last complete epoch found in `out_dir`.
    pub resume: bool,
    pub exec: Execution,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub pair: AgentPair,
    pub curve: Vec<CurveRecord>,
    pub promotions_location: usize,
    pub promotions_interdiction: usize,
}

const FILES: [&str; 6] = [
    "location.ckpt",
    "interdiction.ckpt",
    "location_baseline.ckpt",
    "interdiction_baseline.ckpt",
    "adam_location.ckpt",
    "adam_interdiction.ckpt",
];

pub fn epoch_dir(out: &Path, epoch: usize) -> PathBuf {
    out.join(format!("epoch_{epoch:04}"))
}

fn save_epoch(out: &Path, cfg: &TrainConfig, pair: &AgentPair, state: &RunState) -> Result<()> {
    let dir = epoch_dir(out, state.epoch);
    fs::create_dir_all(&dir)?;
    let lin = |tag: &str| Lineage { seed: cfg.seed, lineage: format!("train:{}:{tag}", cfg.preset), epoch: state.epoch as u64 };
    save_params(&dir.join(FILES[0]), &pair.location, &lin("current"))?;
    save_params(&dir.join(FILES[1]), &pair.interdiction, &lin("current"))?;
    save_params(&dir.join(FILES[2]), &pair.location_baseline, &lin("baseline"))?;
    save_params(&dir.join(FILES[3]), &pair.interdiction_baseline, &lin("baseline"))?;
    save_adam(&dir.join(FILES[4]), &pair.adam_location, &pair.location, &lin("adam"))?;
    save_adam(&dir.join(FILES[5]), &pair.adam_interdiction, &pair.interdiction, &lin("adam"))?;
    let json = serde_json::to_string_pretty(state).map_err(|e| Error::Checkpoint(e.to_string()))?;
    // written last: its presence marks the epoch complete
    fs::write(dir.join("state.json"), json)?;
    Ok(())
}

fn load_epoch(out: &Path, epoch: usize) -> Result<(AgentPair, RunState)> {
    let dir = epoch_dir(out, epoch);
    let text = fs::read_to_string(dir.join("state.json"))?;
    let state: RunState = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let p = |i: usize| load_params(&dir.join(FILES[i])).map(|(p, _)| p);
    let a = |i: usize| load_adam(&dir.join(FILES[i])).map(|(a, _)| a);
    let pair = AgentPair {
        location: p(0)?,
        interdiction: p(1)?,
        location_baseline: p(2)?,
        interdiction_baseline: p(3)?,
        adam_location: a(4)?,
        adam_interdiction: a(5)?,
    };
    if pair.location.role != Role::Location || pair.interdiction.role != Role::Interdiction {
        return Err(Error::Checkpoint("role mismatch in saved pair".into()));
    }
    Ok((pair, state))
}

/// Latest epoch in `out` whose state file exists.
pub fn latest_complete_epoch(out: &Path) -> Option<usize> {
    let mut best = None;
    for e in fs::read_dir(out).ok()?.flatten() {
        let name = e.file_name().to_string_lossy().to_string();
        if let Some(num) = name.strip_prefix("epoch_").and_then(|s| s.parse::<usize>().ok()) {
            if e.path().join("state.json").is_file() {
                best = best.max(Some(num));
            }
        }
    }
    best
}

/// Load the current pair saved at `epoch` (or the latest one).
pub fn load_trained_pair(out: &Path, epoch: Option<usize>) -> Result<AgentPair> {
    let e = match epoch.or_else(|| latest_complete_epoch(out)) {
        Some(e) => e,
        None => return Err(Error::Checkpoint(format!("no checkpoints under {}", out.display()))),
    };
    Ok(load_epoch(out, e)?.0)
}

fn write_curve(path: &Path, rows: &[CurveRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(f, "{}", r.to_csv_row())?;
    }
    Ok(())
}

fn append_curve(path: &Path, row: &CurveRecord) -> Result<()> {
    let mut f = fs::OpenOptions::new().append(true).open(path)?;
    writeln!(f, "{}", row.to_csv_row())?;
    Ok(())
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(cfg, &TrainOptions::default())
}

pub fn train_with(cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !cfg.desk_runnable() {
        log::warn!("preset `{}` is far beyond desk-scale compute", cfg.preset);
    }
    let exec = opts.exec;
    let mut pair = AgentPair::new(cfg.dims, cfg.seed, cfg.adam)?;
    let mut curve = Vec::new();
    let mut start = 0usize;
    let (mut prom_l, mut prom_i) = (0usize, 0usize);
    let curve_path = opts.out_dir.as_ref().map(|d| d.join("curve.csv"));

    if let Some(out) = &opts.out_dir {
        fs::create_dir_all(out)?;
        let resumed = if opts.resume { latest_complete_epoch(out) } else { None };
        if let Some(e) = resumed {
            let (p, state) = load_epoch(out, e)?;
            if !state.config.same_run(cfg) {
                return Err(Error::Config("checkpoint was written by a different configuration".into()));
            }
            pair = p;
            start = state.epoch;
            prom_l = state.promotions_location;
            prom_i = state.promotions_interdiction;
            let path = curve_path.as_ref().unwrap();
            curve = read_curve(path)?.into_iter().filter(|r| r.epoch <= start).collect();
            write_curve(path, &curve)?;
            log::info!("resuming after epoch {start}");
        } else {
            write_curve(curve_path.as_ref().unwrap(), &[])?;
        }
    }
    if start >= cfg.epochs {
        return Ok(TrainOutcome { pair, curve, promotions_location: prom_l, promotions_interdiction: prom_i });
    }

    let val = cfg.validation_data().generate_all()?;
    let caps = ExactCaps::default();
    let clock = Instant::now();
    let (mut base_z, mut base_neg_post, _) =
        mean_pair_scores(&pair.location_baseline, &pair.interdiction_baseline, &val, exec)?;

    for epoch in start..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let data = cfg.epoch_data(epoch).generate_all()?;
        for phase in [Phase::Location, Phase::Interdiction] {
            let seed = mix_seed(&[cfg.seed, phase.tag(), epoch as u64]);
            let mut reward_sum = 0.0;
            for (bi, batch) in data.chunks(cfg.batch_size).enumerate() {
                let key = StreamKey { seed, first: (bi * cfg.batch_size) as u64 };
                let stats = reinforce_update(&mut pair, phase, batch, lr, cfg.clip_grad_norm, key, exec)
                    .map_err(|e| match e {
                        Error::NonFiniteGradient(m) => {
                            Error::NonFiniteGradient(format!("{m} (epoch {}, batch {bi})", epoch + 1))
                        }
                        other => other,
                    })?;
                reward_sum += stats.mean_reward * stats.size as f64;
            }
            let mean_reward = reward_sum / data.len() as f64;

            let (current, baseline, promoted, exact) = match phase {
                Phase::Location => {
                    let (z, _, _) = mean_pair_scores(&pair.location, &pair.interdiction_baseline, &val, exec)?;
                    let before = base_z;
                    let promoted = z > base_z;
                    if promoted {
                        pair.location_baseline = pair.location.clone();
                        prom_l += 1;
                        (base_z, base_neg_post, _) =
                            mean_pair_scores(&pair.location_baseline, &pair.interdiction_baseline, &val, exec)?;
                    }
                    let exact = mean_exact_objective(&pair.location, &val, &caps, exec)?;
                    (z, before, promoted, exact)
                }
                Phase::Interdiction => {
                    let (_, s, _) = mean_pair_scores(&pair.location_baseline, &pair.interdiction, &val, exec)?;
                    let before = base_neg_post;
                    let promoted = s > base_neg_post;
                    if promoted {
                        pair.interdiction_baseline = pair.interdiction.clone();
                        prom_i += 1;
                        (base_z, base_neg_post, _) =
                            mean_pair_scores(&pair.location_baseline, &pair.interdiction_baseline, &val, exec)?;
                    }
                    let exact = curve.last().map(|r: &CurveRecord| r.val_exact_obj).unwrap_or(f64::NAN);
                    (s, before, promoted, exact)
                }
            };
            let rec = CurveRecord {
                epoch: epoch + 1,
                phase,
                mean_sampled_reward: mean_reward,
                val_current: current,
                val_baseline: baseline,
                promoted,
                lr,
                wall_seconds: clock.elapsed().as_secs_f64(),
                val_exact_obj: exact,
            };
            log::info!(
                "epoch {} {}: reward {:.3} val {:.3} vs {:.3}{}",
                rec.epoch,
                phase,
                rec.mean_sampled_reward,
                rec.val_current,
                rec.val_baseline,
                if promoted { " (promoted)" } else { "" }
            );
            if let Some(p) = &curve_path {
                append_curve(p, &rec)?;
            }
            curve.push(rec);
        }
        if let Some(out) = &opts.out_dir {
            let state = RunState {
                epoch: epoch + 1,
                config: cfg.clone(),
                promotions_location: prom_l,
                promotions_interdiction: prom_i,
            };
            save_epoch(out, cfg, &pair, &state)?;
        }
    }
    Ok(TrainOutcome { pair, curve, promotions_location: prom_l, promotions_interdiction: prom_i })
}

/// Ordered selections of `k` distinct items from `pool`.
fn sequences(pool: &[usize], k: usize, limit: u128) -> Result<Vec<Vec<usize>>> {
    let mut count: u128 = 1;
    for i in 0..k {
        count = count.saturating_mul((pool.len() - i) as u128);
    }
    if count > limit {
        return Err(Error::Core(mclip_core::Error::ScaleTooLarge { needed: count, cap: limit }));
    }
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for prefix in &out {
            for &a in pool {
                if !prefix.contains(&a) {
                    let mut s = prefix.clone();
                    s.push(a);
                    next.push(s);
                }
            }
        }
        out = next;
    }
    Ok(out)
}

/// Expected REINFORCE direction `E[(R - b) ∇ log π(τ)]` for the agent of
/// `phase`, by enumerating every feasible action sequence. Only for tiny
/// instances; errors past one million sequences.
pub fn exact_policy_gradient(pair: &AgentPair, phase: Phase, inst: &Instance) -> Result<Vec<f64>> {
    let geom = SiteGeometry::new(inst);
    let (_, b) = greedy_episode(&pair.location_baseline, &pair.interdiction_baseline, inst, &geom)?;
    let limit = 1_000_000;
    match phase {
        Phase::Location => {
            let ctx = PolicyContext::new(&pair.location, inst, &geom, None)?;
            let pool: Vec<usize> = (0..inst.num_sites()).collect();
            let mut grad = vec![0.0; pair.location.param_count()];
            for seq in sequences(&pool, inst.p(), limit)? {
                let loc = LocationPlan::new(inst, seq.clone())?;
                let hits = PolicyContext::new(&pair.interdiction, inst, &geom, Some(&loc))?
                    .greedy()?
                    .interdiction_plan(inst, &loc)?;
                let adv = evaluate(inst, &loc, &hits)?.obj as f64 - b.obj as f64;
                let prob = ctx.log_prob_of(&seq)?.exp();
                ctx.log_prob_grad(&seq, prob * adv, &mut grad)?;
            }
            Ok(grad)
        }
        Phase::Interdiction => {
            let loc = PolicyContext::new(&pair.location, inst, &geom, None)?.greedy()?.location_plan(inst)?;
            let ctx = PolicyContext::new(&pair.interdiction, inst, &geom, Some(&loc))?;
            let mut grad = vec![0.0; pair.interdiction.param_count()];
            for seq in sequences(loc.open_sites(), inst.r(), limit)? {
                let hits = mclip_core::InterdictionPlan::new(inst, &loc, seq.clone())?;
                let adv = -(evaluate(inst, &loc, &hits)?.post as f64) + b.post as f64;
                let prob = ctx.log_prob_of(&seq)?.exp();
                ctx.log_prob_grad(&seq, prob * adv, &mut grad)?;
            }
            Ok(grad)
        }
    }
}
