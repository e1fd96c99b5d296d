use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coverage::{Evaluation, LocationPlan};
use crate::error::{Error, Result};
use crate::exact::ExactCaps;
use crate::instance::Instance;

use super::constructive::greedy_myopic;
use super::improvement::first_swap;
use super::{final_evaluate, robust_estimate, Scratch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetaMethod {
    Annealing,
    Tabu,
    Genetic,
    Vns,
}

/// Method-specific settings. Only the fields of the chosen method are read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaKnobs {
    /// `None` calibrates so the median worsening first move is accepted with probability 0.5.
    pub sa_initial_temperature: Option<f64>,
    pub sa_cooling: f64,
    pub sa_moves_per_temperature: usize,
    /// `None` means ceil(sqrt(p)).
    pub ts_tenure: Option<usize>,
    pub ga_population: usize,
    pub ga_tournament: usize,
    pub ga_crossover_rate: f64,
    pub ga_mutation_rate: f64,
    pub vns_max_shake: usize,
}

impl Default for MetaKnobs {
    fn default() -> Self {
        MetaKnobs {
            sa_initial_temperature: None,
            sa_cooling: 0.95,
            sa_moves_per_temperature: 50,
            ts_tenure: None,
            ga_population: 50,
            ga_tournament: 2,
            ga_crossover_rate: 0.9,
            ga_mutation_rate: 0.1,
            vns_max_shake: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub method: MetaMethod,
    /// SA: moves; TS and VNS: iterations; GA: generations.
    pub iterations: usize,
    pub knobs: MetaKnobs,
    pub seed: u64,
    pub time_limit_s: Option<f64>,
}

impl MetaConfig {
    pub fn new(method: MetaMethod, seed: u64) -> Self {
        let iterations = match method {
            MetaMethod::Annealing => 5000,
            MetaMethod::Tabu => 100,
            MetaMethod::Genetic => 100,
            MetaMethod::Vns => 200,
        };
        MetaConfig { method, iterations, knobs: MetaKnobs::default(), seed, time_limit_s: None }
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.knobs;
        let rate_ok = |x: f64| (0.0..=1.0).contains(&x);
        if !rate_ok(k.sa_cooling) || !rate_ok(k.ga_crossover_rate) || !rate_ok(k.ga_mutation_rate) {
            return Err(Error::InvalidArgument("rates must lie in [0, 1]".into()));
        }
        if k.sa_moves_per_temperature == 0 || k.ga_population == 0 || k.ga_tournament == 0 || k.vns_max_shake == 0 {
            return Err(Error::InvalidArgument("metaheuristic sizes must be positive".into()));
        }
        if k.sa_initial_temperature.is_some_and(|t| !(t > 0.0)) || k.ts_tenure == Some(0) {
            return Err(Error::InvalidArgument("temperature and tenure must be positive".into()));
        }
        if self.time_limit_s.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::InvalidArgument("time limit must be nonnegative".into()));
        }
        Ok(())
    }
}

struct Clock {
    start: Instant,
    limit: Option<f64>,
}

impl Clock {
    fn expired(&self) -> bool {
        self.limit.is_some_and(|l| self.start.elapsed().as_secs_f64() >= l)
    }
}

/// Search over p-subsets with the swap neighborhood and the robust estimate as
/// fitness. Deterministic for a given seed unless the time limit is hit, in
/// which case the incumbent is returned.
pub fn metaheuristic_locate(inst: &Instance, cfg: &MetaConfig, caps: &ExactCaps) -> Result<(LocationPlan, Evaluation)> {
    cfg.validate()?;
    let mut s = Scratch::new(inst);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clock = Clock { start: Instant::now(), limit: cfg.time_limit_s };
    let init = greedy_myopic(inst, &mut s);
    let open = if cfg.iterations == 0 {
        log::warn!("zero iteration budget; returning the initial solution");
        init
    } else if inst.p() == inst.num_sites() || inst.p() == 0 {
        init
    } else {
        match cfg.method {
            MetaMethod::Annealing => annealing(inst, cfg, init, &mut rng, &mut s, &clock),
            MetaMethod::Tabu => tabu(inst, cfg, init, &mut s, &clock),
            MetaMethod::Genetic => genetic(inst, cfg, init, &mut rng, &mut s, &clock),
            MetaMethod::Vns => vns(inst, cfg, init, &mut rng, &mut s, &clock),
        }
    };
    let loc = LocationPlan::new(inst, open)?;
    let eval = final_evaluate(inst, &loc, caps)?;
    Ok((loc, eval))
}

fn random_closed(inst: &Instance, open: &[usize], rng: &mut ChaCha8Rng) -> usize {
    loop {
        let j = rng.random_range(0..inst.num_sites());
        if !open.contains(&j) {
            return j;
        }
    }
}

fn annealing(
    inst: &Instance,
    cfg: &MetaConfig,
    init: Vec<usize>,
    rng: &mut ChaCha8Rng,
    s: &mut Scratch,
    clock: &Clock,
) -> Vec<usize> {
    let k = &cfg.knobs;
    let mut cur = init;
    let mut f_cur = robust_estimate(inst, &cur, s) as f64;
    let mut best = (cur.clone(), f_cur);
    let mut temp = match k.sa_initial_temperature {
        Some(t) => t,
        None => {
            let mut worse: Vec<f64> = Vec::new();
            let mut cand = cur.clone();
            for _ in 0..50 {
                let pos = rng.random_range(0..cur.len());
                cand[pos] = random_closed(inst, &cur, rng);
                let d = robust_estimate(inst, &cand, s) as f64 - f_cur;
                if d < 0.0 {
                    worse.push(-d);
                }
                cand[pos] = cur[pos];
            }
            worse.sort_by(f64::total_cmp);
            match worse.get(worse.len() / 2) {
                Some(&median) => median / std::f64::consts::LN_2,
                None => 1.0,
            }
        }
    };
    for it in 0..cfg.iterations {
        if it % 64 == 0 && clock.expired() {
            break;
        }
        let pos = rng.random_range(0..cur.len());
        let j = random_closed(inst, &cur, rng);
        let old = cur[pos];
        cur[pos] = j;
        let f = robust_estimate(inst, &cur, s) as f64;
        let delta = f - f_cur;
        let u: f64 = rng.random();
        if delta >= 0.0 || u < (delta / temp).exp() {
            f_cur = f;
            if f > best.1 {
                best = (cur.clone(), f);
            }
        } else {
            cur[pos] = old;
        }
        if (it + 1) % k.sa_moves_per_temperature == 0 {
            temp *= k.sa_cooling;
        }
    }
    best.0
}

fn tabu(inst: &Instance, cfg: &MetaConfig, init: Vec<usize>, s: &mut Scratch, clock: &Clock) -> Vec<usize> {
    let tenure = cfg.knobs.ts_tenure.unwrap_or_else(|| (inst.p() as f64).sqrt().ceil() as usize);
    let m = inst.num_sites();
    // iteration index until which a site may not enter / leave the plan
    let mut no_add = vec![0usize; m];
    let mut no_drop = vec![0usize; m];
    let mut cur = init;
    let mut best_f = robust_estimate(inst, &cur, s);
    let mut best = cur.clone();
    let mut cand = cur.clone();
    for it in 1..=cfg.iterations {
        if clock.expired() {
            break;
        }
        let mut chosen: Option<(usize, usize, usize)> = None;
        for pos in 0..cur.len() {
            for j in 0..m {
                if cur.contains(&j) {
                    continue;
                }
                cand[pos] = j;
                let f = robust_estimate(inst, &cand, s);
                let is_tabu = no_add[j] >= it || no_drop[cur[pos]] >= it;
                if (!is_tabu || f > best_f) && chosen.is_none_or(|c| f > c.2) {
                    chosen = Some((pos, j, f));
                }
            }
            cand[pos] = cur[pos];
        }
        let Some((pos, j, f)) = chosen else { break };
        no_add[cur[pos]] = it + tenure;
        no_drop[j] = it + tenure;
        cur[pos] = j;
        cand[pos] = j;
        if f > best_f {
            best_f = f;
            best = cur.clone();
        }
    }
    best
}

fn genetic(
    inst: &Instance,
    cfg: &MetaConfig,
    init: Vec<usize>,
    rng: &mut ChaCha8Rng,
    s: &mut Scratch,
    clock: &Clock,
) -> Vec<usize> {
    let k = &cfg.knobs;
    let (m, p) = (inst.num_sites(), inst.p());
    let all: Vec<usize> = (0..m).collect();
    let mut pop: Vec<(Vec<usize>, usize)> = Vec::with_capacity(k.ga_population);
    let f0 = robust_estimate(inst, &init, s);
    pop.push((init, f0));
    while pop.len() < k.ga_population {
        let mut ind: Vec<usize> = all.choose_multiple(rng, p).copied().collect();
        ind.sort_unstable();
        let f = robust_estimate(inst, &ind, s);
        pop.push((ind, f));
    }
    let fittest = |pop: &[(Vec<usize>, usize)]| {
        let mut b = 0;
        for (i, ind) in pop.iter().enumerate() {
            if ind.1 > pop[b].1 {
                b = i;
            }
        }
        b
    };
    let tournament = |pop: &[(Vec<usize>, usize)], rng: &mut ChaCha8Rng| {
        let mut b = rng.random_range(0..pop.len());
        for _ in 1..k.ga_tournament {
            let c = rng.random_range(0..pop.len());
            if pop[c].1 > pop[b].1 {
                b = c;
            }
        }
        b
    };
    for _ in 0..cfg.iterations {
        if clock.expired() {
            break;
        }
        let elite = pop[fittest(&pop)].clone();
        let mut next = Vec::with_capacity(pop.len());
        next.push(elite);
        while next.len() < pop.len() {
            let a = tournament(&pop, rng);
            let b = tournament(&pop, rng);
            let mut child = if rng.random::<f64>() < k.ga_crossover_rate {
                set_crossover(inst, &pop[a].0, &pop[b].0, rng)
            } else {
                pop[a].0.clone()
            };
            if rng.random::<f64>() < k.ga_mutation_rate {
                let pos = rng.random_range(0..p);
                child[pos] = random_closed(inst, &child, rng);
            }
            child.sort_unstable();
            let f = robust_estimate(inst, &child, s);
            next.push((child, f));
        }
        pop = next;
    }
    let b = fittest(&pop);
    pop.swap_remove(b).0
}

/// Keep shared sites, take each non-shared site with probability 1/2, then
/// repair the cardinality back to p.
fn set_crossover(inst: &Instance, a: &[usize], b: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let p = inst.p();
    let mut child: Vec<usize> = a.iter().copied().filter(|j| b.contains(j)).collect();
    let shared = child.len();
    let mut pool: Vec<usize> = a.iter().chain(b).copied().filter(|j| !child.contains(j)).collect();
    pool.sort_unstable();
    pool.dedup();
    let mut left = Vec::new();
    for j in pool {
        if rng.random::<bool>() {
            child.push(j);
        } else {
            left.push(j);
        }
    }
    while child.len() > p {
        let pos = rng.random_range(shared..child.len());
        child.swap_remove(pos);
    }
    while child.len() < p {
        if left.is_empty() {
            let j = random_closed(inst, &child, rng);
            child.push(j);
        } else {
            let pos = rng.random_range(0..left.len());
            child.push(left.swap_remove(pos));
        }
    }
    child
}

fn vns(
    inst: &Instance,
    cfg: &MetaConfig,
    init: Vec<usize>,
    rng: &mut ChaCha8Rng,
    s: &mut Scratch,
    clock: &Clock,
) -> Vec<usize> {
    let k_max = cfg.knobs.vns_max_shake.min(inst.p()).min(inst.num_sites() - inst.p()).max(1);
    let mut cur = init;
    let mut f_cur = robust_estimate(inst, &cur, s);
    let mut k = 1;
    for _ in 0..cfg.iterations {
        if clock.expired() {
            break;
        }
        let mut x = cur.clone();
        let mut positions: Vec<usize> = (0..x.len()).collect();
        positions.shuffle(rng);
        for &pos in positions.iter().take(k) {
            x[pos] = random_closed(inst, &x, rng);
        }
        let mut f = robust_estimate(inst, &x, s);
        while let Some((pos, j, g)) = first_swap(inst, &x, f, s) {
            x[pos] = j;
            f = g;
        }
        if f > f_cur {
            cur = x;
            f_cur = f;
            k = 1;
        } else {
            k = if k >= k_max { 1 } else { k + 1 };
        }
    }
    cur
}
