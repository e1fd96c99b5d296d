//! Suite runner: generate instances, time every (method, instance) cell on
//! its own, score against a reference and summarize per method.
//!
//! Reference best: the exact bi-level optimum when every instance of the
//! suite is enumerable under the caps, otherwise the method with the best
//! mean objective. A summary gap is computed on means,
//! `(ref_mean_obj - mean_obj) / ref_mean_obj`; the arithmetic mean of the
//! per-instance gaps is reported next to it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mclip_core::exact::exact_solve_with;
use mclip_core::{optimality_gap, ExactCaps, Execution, GenSpec, Instance};
use mclip_neural::trainer::mix_seed;
use serde::{Deserialize, Serialize};

use crate::method::{solve_with, Method, NeuralModel};
use crate::{digest, Error, Result};

/// Instance family of a suite: a named preset or explicit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleSpec {
    Preset(String),
    Custom { n: usize, p: usize, r: usize, radius: f64 },
}

impl ScaleSpec {
    pub fn gen_spec(&self, seed: u64, count: usize) -> Result<GenSpec> {
        let spec = match self {
            ScaleSpec::Preset(name) => GenSpec::preset(name, seed, count)
                .ok_or_else(|| Error::Usage(format!("unknown scale `{name}`")))?,
            &ScaleSpec::Custom { n, p, r, radius } => GenSpec { n, p, r, radius, seed, count },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn label(&self) -> String {
        match self {
            ScaleSpec::Preset(name) => name.to_ascii_lowercase(),
            ScaleSpec::Custom { n, p, r, radius } => format!("n{n}p{p}r{r}d{radius}"),
        }
    }
}

fn default_k() -> usize {
    128
}

fn default_e() -> usize {
    10
}

/// Suite description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub methods: Vec<String>,
    pub scale: ScaleSpec,
    /// Instances per seed.
    pub count: usize,
    /// One instance batch per generation seed.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub time_limit_s: Option<f64>,
    #[serde(default)]
    pub caps: ExactCaps,
    /// Seed for randomized methods; each cell derives its own stream.
    #[serde(default)]
    pub method_seed: u64,
    /// Training run directory for learned methods.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub epoch: Option<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_e")]
    pub e: usize,
}

impl Suite {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Suite = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Usage("suite names no methods".into()));
        }
        if self.count == 0 || self.seeds.is_empty() {
            return Err(Error::Usage("suite needs a positive count and at least one seed".into()));
        }
        if let Some(t) = self.time_limit_s {
            if !(t > 0.0) {
                return Err(Error::Usage("time_limit_s must be positive".into()));
            }
        }
        for m in &self.methods {
            m.parse::<Method>()?;
        }
        self.scale.gen_spec(self.seeds[0], self.count)?;
        Ok(())
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    /// Finished past the time limit; the returned incumbent is kept.
    TimedOut,
    /// No solution (e.g. exact solve beyond the caps).
    Failed,
}

/// One (method, instance) cell. Failed cells carry NaN numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub instance: String,
    pub method: String,
    pub seed: u64,
    pub pre: f64,
    pub post: f64,
    pub obj: f64,
    pub gap: f64,
    pub wall_seconds: f64,
    pub status: RecordStatus,
    pub config_digest: String,
}

/// Per-method means over non-failed records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub instances: usize,
    pub timed_out: usize,
    pub failed: usize,
    pub pre: f64,
    pub post: f64,
    pub obj: f64,
    pub gap: f64,
    pub mean_instance_gap: f64,
    pub wall_seconds: f64,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    ExactOracle,
    BestMethod(String),
}

impl Reference {
    pub fn describe(&self) -> String {
        match self {
            Reference::ExactOracle => "exact oracle".into(),
            Reference::BestMethod(m) => format!("best mean method ({m})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    pub records: Vec<BenchRecord>,
    pub summary: Vec<SummaryRow>,
    pub reference: Reference,
}

struct Cell {
    pre: f64,
    post: f64,
    obj: f64,
    wall: f64,
    status: RecordStatus,
}

fn run_cell(
    inst: &Instance,
    method: Method,
    seed: u64,
    suite: &Suite,
    model: Option<&NeuralModel>,
) -> Result<Cell> {
    // the timer brackets only the solve call
    let start = Instant::now();
    let out = solve_with(inst, method, seed, suite.time_limit_s, &suite.caps, model);
    let wall = start.elapsed().as_secs_f64();
    match out {
        Ok(o) => {
            let late = suite.time_limit_s.is_some_and(|t| wall > t);
            let e = o.evaluation;
            Ok(Cell {
                pre: e.pre as f64,
                post: e.post as f64,
                obj: e.obj as f64,
                wall,
                status: if late { RecordStatus::TimedOut } else { RecordStatus::Ok },
            })
        }
        Err(Error::Core(err @ mclip_core::Error::ScaleTooLarge { .. })) => {
            log::warn!("{method} skipped: {err}");
            Ok(Cell { pre: f64::NAN, post: f64::NAN, obj: f64::NAN, wall, status: RecordStatus::Failed })
        }
        Err(e) => Err(e),
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Run the whole suite. Cells run one after another so each is timed alone.
pub fn run_benchmark(suite: &Suite) -> Result<BenchOutcome> {
    suite.validate()?;
    let methods = suite.parsed_methods()?;
    let model = if methods.iter().any(Method::needs_model) {
        let dir = suite
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::Usage("learned methods need `checkpoint` in the suite".into()))?;
        Some(NeuralModel::load(dir, suite.epoch, suite.k, suite.e)?)
    } else {
        None
    };

    let mut instances: Vec<(String, u64, usize, Instance)> = Vec::new();
    for &seed in &suite.seeds {
        let spec = suite.scale.gen_spec(seed, suite.count)?;
        for (i, inst) in spec.generate_all()?.into_iter().enumerate() {
            instances.push((format!("{}-s{seed}-{i:04}", suite.scale.label()), seed, i, inst));
        }
    }
    let exact_ref = instances.iter().all(|(_, _, _, inst)| suite.caps.bilevel_enumerable(inst));

    // cells[m][i]
    let mut cells: Vec<Vec<Cell>> = Vec::with_capacity(methods.len());
    for &m in &methods {
        let mut row = Vec::with_capacity(instances.len());
        for (id, seed, i, inst) in &instances {
            let cell_seed = mix_seed(&[suite.method_seed, *seed, *i as u64]);
            let c = run_cell(inst, m, cell_seed, suite, model.as_ref())?;
            log::debug!("{id} {m}: obj {} in {:.4}s", c.obj, c.wall);
            row.push(c);
        }
        cells.push(row);
    }

    let (reference, ref_objs): (Reference, Vec<f64>) = if exact_ref {
        let objs = match methods.iter().position(|m| *m == Method::Baseline(mclip_core::baselines::BaselineMethod::Exact)) {
            Some(mi) => cells[mi].iter().map(|c| c.obj).collect(),
            None => instances
                .iter()
                .map(|(_, _, _, inst)| Ok(exact_solve_with(inst, &suite.caps, Execution::default())?.1.obj as f64))
                .collect::<Result<Vec<f64>>>()?,
        };
        (Reference::ExactOracle, objs)
    } else {
        let mut best: Option<(usize, f64)> = None;
        for (mi, row) in cells.iter().enumerate() {
            if row.iter().any(|c| c.status == RecordStatus::Failed) {
                continue;
            }
            let m = mean(row.iter().map(|c| c.obj));
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((mi, m));
            }
        }
        let (mi, _) = best.ok_or_else(|| Error::Usage("no method solved every instance".into()))?;
        (Reference::BestMethod(methods[mi].tag().into()), cells[mi].iter().map(|c| c.obj).collect())
    };

    let mut records = Vec::new();
    let mut summary = Vec::new();
    let ref_mean = mean(ref_objs.iter().copied());
    for (mi, m) in methods.iter().enumerate() {
        let cfg_digest = digest(&format!(
            "{}|{}|{:?}|{:?}|{}|{}|{}",
            m.tag(),
            serde_json::to_string(&suite.scale)?,
            suite.time_limit_s,
            suite.caps,
            suite.method_seed,
            if m.needs_model() { suite.k } else { 0 },
            if m.needs_model() { suite.e } else { 0 },
        ));
        let mut gaps = Vec::new();
        for ((id, seed, _, _), (c, &r)) in instances.iter().zip(cells[mi].iter().zip(&ref_objs)) {
            let gap = if c.status == RecordStatus::Failed { f64::NAN } else { optimality_gap(c.obj, r)? };
            if c.status != RecordStatus::Failed {
                gaps.push(gap);
            }
            records.push(BenchRecord {
                instance: id.clone(),
                method: m.tag().into(),
                seed: *seed,
                pre: c.pre,
                post: c.post,
                obj: c.obj,
                gap,
                wall_seconds: c.wall,
                status: c.status,
                config_digest: cfg_digest.clone(),
            });
        }
        let ok = || cells[mi].iter().filter(|c| c.status != RecordStatus::Failed);
        let obj = mean(ok().map(|c| c.obj));
        let failed = cells[mi].len() - ok().count();
        summary.push(SummaryRow {
            method: m.tag().into(),
            instances: ok().count(),
            timed_out: ok().filter(|c| c.status == RecordStatus::TimedOut).count(),
            failed,
            pre: mean(ok().map(|c| c.pre)),
            post: mean(ok().map(|c| c.post)),
            obj,
            gap: if failed > 0 { f64::NAN } else { optimality_gap(obj, ref_mean)? },
            mean_instance_gap: mean(gaps.into_iter()),
            wall_seconds: mean(ok().map(|c| c.wall)),
            reference: reference.describe(),
        });
    }
    Ok(BenchOutcome { records, summary, reference })
}

pub const RECORD_HEADER: [&str; 10] =
    ["instance", "method", "seed", "pre", "post", "obj", "gap", "wall_seconds", "status", "config_digest"];

pub const SUMMARY_HEADER: [&str; 11] = [
    "method",
    "instances",
    "timed_out",
    "failed",
    "pre",
    "post",
    "obj",
    "gap",
    "mean_instance_gap",
    "wall_seconds",
    "reference",
];

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn status_str(s: RecordStatus) -> &'static str {
    match s {
        RecordStatus::Ok => "ok",
        RecordStatus::TimedOut => "timed_out",
        RecordStatus::Failed => "failed",
    }
}

pub fn write_records<W: Write>(w: W, records: &[BenchRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_HEADER)?;
    for r in records {
        out.write_record([
            r.instance.clone(),
            r.method.clone(),
            r.seed.to_string(),
            f4(r.pre),
            f4(r.post),
            f4(r.obj),
            f4(r.gap),
            f4(r.wall_seconds),
            status_str(r.status).into(),
            r.config_digest.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in rows {
        out.write_record([
            r.method.clone(),
            r.instances.to_string(),
            r.timed_out.to_string(),
            r.failed.to_string(),
            f4(r.pre),
            f4(r.post),
            f4(r.obj),
            f4(r.gap),
            f4(r.mean_instance_gap),
            f4(r.wall_seconds),
            r.reference.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn parse_status(s: &str) -> Result<RecordStatus> {
    match s {
        "ok" => Ok(RecordStatus::Ok),
        "timed_out" => Ok(RecordStatus::TimedOut),
        "failed" => Ok(RecordStatus::Failed),
        _ => Err(Error::Usage(format!("bad status `{s}`"))),
    }
}

fn num(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Usage(format!("bad number `{s}`")))
}

pub fn read_records(path: &Path) -> Result<Vec<BenchRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or_default();
        out.push(BenchRecord {
            instance: f(0).into(),
            method: f(1).into(),
            seed: f(2).parse().map_err(|_| Error::Usage(format!("bad seed `{}`", f(2))))?,
            pre: num(f(3))?,
            post: num(f(4))?,
            obj: num(f(5))?,
            gap: num(f(6))?,
            wall_seconds: num(f(7))?,
            status: parse_status(f(8))?,
            config_digest: f(9).into(),
        });
    }
    Ok(out)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or_default();
        let int = |i: usize| f(i).parse::<usize>().map_err(|_| Error::Usage(format!("bad count `{}`", f(i))));
        out.push(SummaryRow {
            method: f(0).into(),
            instances: int(1)?,
            timed_out: int(2)?,
            failed: int(3)?,
            pre: num(f(4))?,
            post: num(f(5))?,
            obj: num(f(6))?,
            gap: num(f(7))?,
            mean_instance_gap: num(f(8))?,
            wall_seconds: num(f(9))?,
            reference: f(10).into(),
        });
    }
    Ok(out)
}
