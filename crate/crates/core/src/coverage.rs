//! Plans and their evaluation under the bi-level objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;

/// The defender's decision: exactly `p` distinct open sites, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocationPlan {
    open_sites: Vec<usize>,
}

impl LocationPlan {
    pub fn new(inst: &Instance, mut sites: Vec<usize>) -> Result<Self> {
        sites.sort_unstable();
        check_sites(&sites, inst.num_sites())?;
        if sites.len() != inst.p() {
            return Err(Error::InfeasiblePlan(format!(
                "location plan opens {} sites, expected p={}",
                sites.len(),
                inst.p()
            )));
        }
        Ok(LocationPlan { open_sites: sites })
    }

    pub fn open_sites(&self) -> &[usize] {
        &self.open_sites
    }

    pub fn contains(&self, j: usize) -> bool {
        self.open_sites.binary_search(&j).is_ok()
    }

    fn check(&self, inst: &Instance) -> Result<()> {
        if self.open_sites.len() != inst.p() {
            return Err(Error::InfeasiblePlan(format!(
                "location plan opens {} sites, expected p={}",
                self.open_sites.len(),
                inst.p()
            )));
        }
        check_sites(&self.open_sites, inst.num_sites())
    }
}

/// The attacker's decision: exactly `r` distinct open sites to remove, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InterdictionPlan {
    hit_sites: Vec<usize>,
}

impl InterdictionPlan {
    pub fn new(inst: &Instance, loc: &LocationPlan, mut hits: Vec<usize>) -> Result<Self> {
        hits.sort_unstable();
        let plan = InterdictionPlan { hit_sites: hits };
        plan.check(inst, loc)?;
        Ok(plan)
    }

    pub fn empty() -> Self {
        InterdictionPlan { hit_sites: Vec::new() }
    }

    pub fn hit_sites(&self) -> &[usize] {
        &self.hit_sites
    }

    pub fn contains(&self, j: usize) -> bool {
        self.hit_sites.binary_search(&j).is_ok()
    }

    fn check(&self, inst: &Instance, loc: &LocationPlan) -> Result<()> {
        check_sites(&self.hit_sites, inst.num_sites())?;
        if self.hit_sites.len() != inst.r() {
            return Err(Error::InfeasiblePlan(format!(
                "interdiction plan hits {} sites, expected r={}",
                self.hit_sites.len(),
                inst.r()
            )));
        }
        if let Some(j) = self.hit_sites.iter().find(|&&j| !loc.contains(j)) {
            return Err(Error::InfeasiblePlan(format!(
                "site {j} is interdicted but not open"
            )));
        }
        Ok(())
    }
}

fn check_sites(sorted: &[usize], num_sites: usize) -> Result<()> {
    if let Some(&j) = sorted.iter().find(|&&j| j >= num_sites) {
        return Err(Error::InfeasiblePlan(format!(
            "site index {j} out of range ({num_sites} sites)"
        )));
    }
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InfeasiblePlan("duplicate site index".into()));
    }
    Ok(())
}

/// Coverage before and after interdiction and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub pre: usize,
    pub post: usize,
    pub obj: usize,
}

impl Evaluation {
    pub fn new(pre: usize, post: usize) -> Self {
        Evaluation { pre, post, obj: pre + post }
    }
}

impl std::fmt::Display for Evaluation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "pre={} post={} obj={}", self.pre, self.post, self.obj)
    }
}

pub fn pre_interdiction_coverage(inst: &Instance, loc: &LocationPlan) -> Result<usize> {
    loc.check(inst)?;
    let mut buf = Vec::new();
    Ok(inst.covered_count(loc.open_sites.iter().copied(), &mut buf))
}

pub fn post_interdiction_coverage(
    inst: &Instance,
    loc: &LocationPlan,
    hit: &InterdictionPlan,
) -> Result<usize> {
    loc.check(inst)?;
    hit.check(inst, loc)?;
    let mut buf = Vec::new();
    Ok(surviving_coverage(inst, loc.open_sites(), hit.hit_sites(), &mut buf))
}

pub fn evaluate(inst: &Instance, loc: &LocationPlan, hit: &InterdictionPlan) -> Result<Evaluation> {
    let pre = pre_interdiction_coverage(inst, loc)?;
    let post = post_interdiction_coverage(inst, loc, hit)?;
    Ok(Evaluation::new(pre, post))
}

/// Coverage of `open \ hits` without validation. `hits` must be sorted.
pub(crate) fn surviving_coverage(inst: &Instance, open: &[usize], hits: &[usize], buf: &mut Vec<u64>) -> usize {
    inst.covered_count(
        open.iter().copied().filter(|j| hits.binary_search(j).is_err()),
        buf,
    )
}

/// Relative gap `(best - obj) / best` as a fraction.
///
/// A method that beats the reference gets gap 0 and a logged warning.
pub fn optimality_gap(obj: f64, best_obj: f64) -> Result<f64> {
    if !(best_obj > 0.0) || !best_obj.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "reference objective must be positive, got {best_obj}"
        )));
    }
    if obj > best_obj {
        log::warn!("objective {obj} exceeds reference best {best_obj}; gap clamped to 0");
        return Ok(0.0);
    }
    Ok((best_obj - obj) / best_obj)
}
