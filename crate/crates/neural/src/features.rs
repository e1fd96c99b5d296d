//! Node features, episode state and action masks.
//!
//! Every candidate site is a node. Per node the policy sees its coordinates,
//! four 0/1 flags (located, covered before the attack, interdicted, covered
//! now) and two coverage fractions. "Covered" in the flags is measured on
//! site geometry: node `i` is covered when an open facility lies within the
//! radius of site `i`. Marginal coverage is the fraction of customers whose
//! coverage would change if the node were toggled now: customers it alone
//! covers when it is an open, unattacked facility, otherwise uncovered
//! customers it would reach. Exposed coverage is the fraction of customers in
//! its reach that exactly one surviving facility covers. Two global scalars
//! complete the state: steps remaining over the budget and the fraction of
//! customers covered now.

use mclip_core::{Instance, LocationPlan};

use crate::error::{Error, Result};
use crate::params::{Role, DYN_FEATURES, GLOBAL_FEATURES, NODE_FEATURES};

/// For each site, the sites whose points lie within the coverage radius.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteGeometry {
    reach: Vec<Vec<usize>>,
}

impl SiteGeometry {
    pub fn new(inst: &Instance) -> Self {
        let sites = inst.sites();
        let reach = sites
            .iter()
            .map(|a| {
                sites
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| a.dist(b) <= inst.radius())
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        SiteGeometry { reach }
    }

    pub fn reach(&self, j: usize) -> &[usize] {
        &self.reach[j]
    }
}

/// Mutable state of one construction episode.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub role: Role,
    budget: usize,
    steps: usize,
    located: Vec<bool>,
    covered_before: Vec<u32>,
    interdicted: Vec<bool>,
    covered_now: Vec<u32>,
    // per customer: number of surviving open facilities covering it
    customer_cover: Vec<u32>,
    customers_covered: usize,
    mask: Vec<bool>,
}

impl EpisodeState {
    /// Empty location episode with budget `p`.
    pub fn location(inst: &Instance) -> Self {
        let n = inst.num_sites();
        EpisodeState {
            role: Role::Location,
            budget: inst.p(),
            steps: 0,
            located: vec![false; n],
            covered_before: vec![0; n],
            interdicted: vec![false; n],
            covered_now: vec![0; n],
            customer_cover: vec![0; inst.num_customers()],
            customers_covered: 0,
            mask: vec![true; n],
        }
    }

    /// Interdiction episode against `loc` with budget `r`.
    pub fn interdiction(inst: &Instance, geom: &SiteGeometry, loc: &LocationPlan) -> Self {
        let n = inst.num_sites();
        let mut s = EpisodeState {
            role: Role::Interdiction,
            budget: inst.r(),
            steps: 0,
            located: vec![false; n],
            covered_before: vec![0; n],
            interdicted: vec![false; n],
            covered_now: vec![0; n],
            customer_cover: vec![0; inst.num_customers()],
            customers_covered: 0,
            mask: vec![false; n],
        };
        for &j in loc.open_sites() {
            s.open(inst, geom, j);
            s.mask[j] = true;
        }
        s.covered_before.clone_from(&s.covered_now);
        s
    }

    fn open(&mut self, inst: &Instance, geom: &SiteGeometry, j: usize) {
        self.located[j] = true;
        for &i in geom.reach(j) {
            self.covered_now[i] += 1;
        }
        for &c in inst.site_customers(j) {
            if self.customer_cover[c] == 0 {
                self.customers_covered += 1;
            }
            self.customer_cover[c] += 1;
        }
    }

    fn close(&mut self, inst: &Instance, geom: &SiteGeometry, j: usize) {
        self.interdicted[j] = true;
        for &i in geom.reach(j) {
            self.covered_now[i] -= 1;
        }
        for &c in inst.site_customers(j) {
            self.customer_cover[c] -= 1;
            if self.customer_cover[c] == 0 {
                self.customers_covered -= 1;
            }
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.mask.len()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn done(&self) -> bool {
        self.steps >= self.budget
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn feasible_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Apply action `a`; errors if it is masked or the budget is spent.
    pub fn apply(&mut self, inst: &Instance, geom: &SiteGeometry, a: usize) -> Result<()> {
        if self.done() || a >= self.mask.len() || !self.mask[a] {
            return Err(Error::InfeasibleStep { step: self.steps, action: a });
        }
        match self.role {
            Role::Location => {
                self.open(inst, geom, a);
                self.covered_before.clone_from(&self.covered_now);
            }
            Role::Interdiction => self.close(inst, geom, a),
        }
        self.mask[a] = false;
        self.steps += 1;
        Ok(())
    }

    /// Row-major `n × 6` dynamic feature matrix: four flags, then marginal
    /// and exposed coverage.
    pub fn flags(&self, inst: &Instance) -> Vec<f64> {
        let n = self.num_nodes();
        let m = inst.num_customers().max(1) as f64;
        let mut out = Vec::with_capacity(n * DYN_FEATURES);
        for i in 0..n {
            out.push(self.located[i] as u8 as f64);
            out.push((self.covered_before[i] > 0) as u8 as f64);
            out.push(self.interdicted[i] as u8 as f64);
            out.push((self.covered_now[i] > 0) as u8 as f64);
            let target = if self.located[i] && !self.interdicted[i] { 1 } else { 0 };
            let marginal = inst.site_customers(i).iter().filter(|&&c| self.customer_cover[c] == target).count();
            out.push(marginal as f64 / m);
            let exposed = inst.site_customers(i).iter().filter(|&&c| self.customer_cover[c] == 1).count();
            out.push(exposed as f64 / m);
        }
        out
    }

    pub fn globals(&self, inst: &Instance) -> [f64; GLOBAL_FEATURES] {
        let remaining = if self.budget == 0 {
            0.0
        } else {
            (self.budget - self.steps) as f64 / self.budget as f64
        };
        let frac = if inst.num_customers() == 0 {
            0.0
        } else {
            self.customers_covered as f64 / inst.num_customers() as f64
        };
        [remaining, frac]
    }

    /// Row-major `n × 8` encoder input: coordinates then dynamic features.
    pub fn node_features(&self, inst: &Instance) -> Vec<f64> {
        let flags = self.flags(inst);
        let mut out = Vec::with_capacity(self.num_nodes() * NODE_FEATURES);
        for (i, s) in inst.sites().iter().enumerate() {
            out.push(s.x);
            out.push(s.y);
            out.extend_from_slice(&flags[i * DYN_FEATURES..(i + 1) * DYN_FEATURES]);
        }
        out
    }
}
