//! Every solver the harness can run, classical or learned, behind one tag.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mclip_core::baselines::{solve_baseline, BaselineMethod};
use mclip_core::{Evaluation, ExactCaps, Execution, Instance, LocationPlan};
use mclip_neural::ensemble::{ensemble_infer, greedy_infer, FinalScoring, InferConfig};
use mclip_neural::trainer::load_trained_pair;
use mclip_neural::{PolicyParams, Role};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Baseline(BaselineMethod),
    /// Both trained policies decoded greedily.
    NeuralGreedy,
    /// Surrogate-ensemble inference with the trained pair.
    NeuralEnsemble,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Baseline(b) => b.tag(),
            Method::NeuralGreedy => "neural-greedy",
            Method::NeuralEnsemble => "neural-ensemble",
        }
    }

    pub fn needs_model(&self) -> bool {
        !matches!(self, Method::Baseline(_))
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "neural-greedy" => Ok(Method::NeuralGreedy),
            "neural-ensemble" => Ok(Method::NeuralEnsemble),
            other => other
                .parse::<BaselineMethod>()
                .map(Method::Baseline)
                .map_err(|_| Error::Usage(format!("unknown method tag `{s}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A trained policy pair ready for inference.
#[derive(Debug, Clone)]
pub struct NeuralModel {
    pub location: PolicyParams,
    pub interdiction: PolicyParams,
    /// Ensemble sizes.
    pub k: usize,
    pub e: usize,
}

impl NeuralModel {
    /// Load the promoted (validation-best) policies of a training run.
    pub fn load(run_dir: &Path, epoch: Option<usize>, k: usize, e: usize) -> Result<Self> {
        let pair = load_trained_pair(run_dir, epoch)?;
        debug_assert_eq!(pair.location_baseline.role, Role::Location);
        Ok(NeuralModel { location: pair.location_baseline, interdiction: pair.interdiction_baseline, k, e })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub plan: LocationPlan,
    pub evaluation: Evaluation,
}

/// Solve one instance. Learned methods need `model`; `seed` feeds every
/// randomized method.
pub fn solve_with(
    inst: &Instance,
    method: Method,
    seed: u64,
    time_limit_s: Option<f64>,
    caps: &ExactCaps,
    model: Option<&NeuralModel>,
) -> Result<SolveOutput> {
    let need = || model.ok_or_else(|| Error::Usage(format!("method `{method}` needs a checkpoint")));
    match method {
        Method::Baseline(b) => {
            let (plan, evaluation) = solve_baseline(inst, b, seed, time_limit_s, caps)?;
            Ok(SolveOutput { plan, evaluation })
        }
        Method::NeuralGreedy => {
            let m = need()?;
            let r = greedy_infer(inst, &m.location, &m.interdiction, FinalScoring::ExactWhenEnumerable, caps)?;
            Ok(SolveOutput { plan: r.plan, evaluation: r.evaluation })
        }
        Method::NeuralEnsemble => {
            let m = need()?;
            let cfg = InferConfig::new(m.k, m.e, seed);
            let r = ensemble_infer(inst, &m.location, &m.interdiction, &cfg, caps, Execution::Sequential)?;
            Ok(SolveOutput { plan: r.plan, evaluation: r.evaluation })
        }
    }
}
