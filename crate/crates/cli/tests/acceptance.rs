//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness. Set `MCLIP_ACCEPTANCE=1,4,9` to run a
//! subset; criteria 6 and 7 train the toy preset from scratch and dominate the
//! run time.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use mclip_cli::{run_benchmark, write_records, ScaleSpec, Suite, SummaryRow};
use mclip_core::baselines::{greedy_evaluate, greedy_interdiction, solve_baseline, BaselineMethod};
use mclip_core::exact::{exact_evaluate, exact_solve_with};
use mclip_core::lp::{brute_force_optimum, export_single_level_lp, parse_lp, RowCounts};
use mclip_core::{evaluate, ExactCaps, Execution, GenSpec, Instance, InterdictionPlan, LocationPlan, Point};
use mclip_neural::ensemble::{ensemble_infer, greedy_infer, FinalScoring, InferConfig};
use mclip_neural::features::SiteGeometry;
use mclip_neural::params::PolicyDims;
use mclip_neural::policy::{log_prob_gradient, log_prob_of, PolicyContext};
use mclip_neural::trainer::{
    exact_policy_gradient, interdiction_sample, location_sample, mean_exact_objective, train_with, AgentPair, Phase,
    TrainConfig, TrainOptions,
};
use mclip_neural::{init_params, PolicyParams, Role};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn t1() -> Instance {
    let pts: Vec<Point> = [(0.0, 0.0), (0.1, 0.0), (0.9, 0.0), (1.0, 0.0)].iter().map(|&(x, y)| Point::new(x, y)).collect();
    Instance::new(pts.clone(), pts, 0.15, 2, 1).unwrap()
}

fn caps() -> ExactCaps {
    ExactCaps::default()
}

fn suite(methods: &[&str], seed: u64, count: usize) -> Suite {
    Suite {
        methods: methods.iter().map(|s| s.to_string()).collect(),
        scale: ScaleSpec::Preset("mclip20".into()),
        count,
        seeds: vec![seed],
        time_limit_s: None,
        caps: caps(),
        method_seed: 5,
        checkpoint: None,
        epoch: None,
        k: 128,
        e: 10,
    }
}

fn row<'a>(rows: &'a [SummaryRow], method: &str) -> &'a SummaryRow {
    rows.iter().find(|r| r.method == method).expect("method in summary")
}

fn criterion_1() -> Check {
    let insts = GenSpec::mclip20(101, 100).generate_all().unwrap();
    let start = Instant::now();
    let mut slowest: f64 = 0.0;
    for inst in &insts {
        let t = Instant::now();
        exact_solve_with(inst, &caps(), Execution::Sequential).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed().as_secs_f64());
    }
    let total = start.elapsed().as_secs_f64();
    ensure(
        slowest < 1.0 && total < 120.0,
        format!("100 exact solves in {total:.3} s, slowest {slowest:.4} s"),
    )
}

fn criterion_2() -> Check {
    let res = run_benchmark(&suite(&["exact", "sequential"], 202, 100)).map_err(|e| e.to_string())?;
    let gap = 100.0 * row(&res.summary, "sequential").gap;
    ensure((gap - 3.97).abs() <= 1.5, format!("sequential gap {gap:.2}% (target 3.97 +/- 1.5)"))
}

fn criterion_3() -> Check {
    let res = run_benchmark(&suite(&["exact", "gm", "ge", "sa", "ts"], 303, 100)).map_err(|e| e.to_string())?;
    let g = |m| 100.0 * row(&res.summary, m).gap;
    let (gm, ge, sa, ts) = (g("gm"), g("ge"), g("sa"), g("ts"));
    let soft = [("gm", gm, 2.62, 1.5), ("ge", ge, 1.41, 1.0), ("sa", sa, 0.59, 0.75), ("ts", ts, 0.48, 0.75)];
    let soft: Vec<String> = soft
        .iter()
        .map(|&(m, v, t, tol)| format!("{m} {v:.2}% ({})", if (v - t).abs() <= tol { "on target" } else { "off target" }))
        .collect();
    // "approximately equal" is read as within the shared 0.75 pp tolerance
    let ordered = gm >= ge && ge >= sa.max(ts) && (sa - ts).abs() <= 0.75;
    let nonneg = res.records.iter().all(|r| r.gap >= 0.0);
    ensure(ordered && nonneg, format!("{}; ordering {}", soft.join(", "), if ordered { "holds" } else { "violated" }))
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0;
    for k in 0..1_000u64 {
        let p = rng.random_range(1..=6);
        let n = rng.random_range(p..=16);
        let r = rng.random_range(0..=p.min(3));
        let radius = rng.random_range(0.1..0.5);
        let inst = GenSpec { n, p, r, radius, seed: k, count: 1 }.generate(0).unwrap();
        let mut sites: Vec<usize> = (0..n).collect();
        for i in 0..p {
            let j = rng.random_range(i..n);
            sites.swap(i, j);
        }
        let loc = LocationPlan::new(&inst, sites[..p].to_vec()).unwrap();
        let exact = exact_evaluate(&inst, &loc, &caps()).unwrap();
        let greedy = greedy_evaluate(&inst, &loc).unwrap();
        violations += (exact.post > greedy.post) as usize;
    }
    ensure(violations == 0, format!("{violations} violations in 1000 pairs"))
}

/// Components beyond 3 standard errors, and the largest z-score.
fn z_scores(sum: &[f64], sq: &[f64], n: f64, exact: &[f64]) -> (usize, usize, f64) {
    let (mut informative, mut beyond, mut worst) = (0, 0, 0.0f64);
    for i in 0..sum.len() {
        let mean = sum[i] / n;
        let diff = (mean - exact[i]).abs();
        let se = ((sq[i] / n - mean * mean).max(0.0) / n).sqrt();
        // both sides zero up to round-off: nothing to test
        if diff < 1e-9 && exact[i].abs() < 1e-9 {
            continue;
        }
        informative += 1;
        let z = if diff < 1e-9 { 0.0 } else { diff / se };
        beyond += (z > 3.0) as usize;
        worst = worst.max(z);
    }
    (informative, beyond, worst)
}

fn fd_error(params: &PolicyParams, inst: &Instance, cond: Option<&LocationPlan>, seq: &[usize]) -> f64 {
    let (_, grad) = log_prob_gradient(params, inst, cond, seq).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for idx in 0..params.param_count() {
        let mut p = params.clone();
        p.values[idx] += h;
        let up = log_prob_of(&p, inst, cond, seq).unwrap();
        p.values[idx] -= 2.0 * h;
        let down = log_prob_of(&p, inst, cond, seq).unwrap();
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grad[idx]).abs() / fd.abs().max(grad[idx].abs()).max(1e-5);
        worst = worst.max(rel);
    }
    worst
}

fn criterion_5() -> Check {
    let dims = PolicyDims::new(8, 2, 1, 8).unwrap();
    let mut pair = AgentPair::new(dims, 8, Default::default()).unwrap();
    pair.location_baseline.values.iter_mut().for_each(|v| *v *= 0.3);
    let mut notes = Vec::new();
    let mut ok = true;
    for phase in [Phase::Location, Phase::Interdiction] {
        let (inst, exact) = (0..50)
            .map(|seed| {
                let inst = GenSpec { n: 6, p: 2, r: 1, radius: 0.3, seed, count: 1 }.generate(0).unwrap();
                let g = exact_policy_gradient(&pair, phase, &inst).unwrap();
                (inst, g)
            })
            .find(|(_, g)| g.iter().any(|&v| v.abs() > 1e-6))
            .ok_or("no informative instance")?;
        let geom = SiteGeometry::new(&inst);
        let n = 100_000;
        let mut sum = vec![0.0; exact.len()];
        let mut sq = vec![0.0; exact.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for _ in 0..n {
            let s = match phase {
                Phase::Location => location_sample(&pair, &inst, &geom, &mut rng),
                Phase::Interdiction => interdiction_sample(&pair, &inst, &geom, &mut rng),
            }
            .map_err(|e| e.to_string())?;
            if let Some(g) = s.grad {
                for (i, v) in g.iter().enumerate() {
                    sum[i] += v;
                    sq[i] += v * v;
                }
            }
        }
        let (m, beyond, worst) = z_scores(&sum, &sq, n as f64, &exact);
        // a correct estimator still leaves about 0.27% of components past 3 SE
        let allowed = (0.0027 * m as f64 + 3.0 * (0.0027 * m as f64).sqrt()).ceil() as usize;
        ok &= beyond <= allowed && worst < 5.0;
        notes.push(format!("{phase}: {beyond}/{m} beyond 3 SE (chance allows {allowed}), max z {worst:.2}"));
    }
    let inst = GenSpec { n: 6, p: 2, r: 1, radius: 0.3, seed: 5, count: 1 }.generate(0).unwrap();
    let lp = init_params(Role::Location, dims, 11).unwrap();
    let ip = init_params(Role::Interdiction, dims, 12).unwrap();
    let loc = LocationPlan::new(&inst, vec![1, 4]).unwrap();
    let fd = fd_error(&lp, &inst, None, &[4, 1]).max(fd_error(&ip, &inst, Some(&loc), &[1]));
    ok &= fd <= 1e-3;
    notes.push(format!("finite differences max relative error {fd:.2e}"));
    ensure(ok, notes.join("; "))
}

fn toy_held_out() -> Vec<Instance> {
    GenSpec::mclip20(606, 100).generate_all().unwrap()
}

fn mean_optimum(insts: &[Instance]) -> f64 {
    let objs = Execution::Parallel.map(insts, |inst| exact_solve_with(inst, &caps(), Execution::Sequential).unwrap().1.obj);
    objs.iter().sum::<usize>() as f64 / insts.len() as f64
}

fn criterion_6(run: &Path) -> Check {
    let cfg = TrainConfig::toy();
    let start = Instant::now();
    let opts = TrainOptions { out_dir: Some(run.to_path_buf()), resume: false, exec: Execution::Parallel };
    let out = train_with(&cfg, &opts).map_err(|e| e.to_string())?;
    let hours = start.elapsed().as_secs_f64() / 3600.0;
    let val: Vec<f64> = out.curve.iter().filter(|r| r.phase == Phase::Location).map(|r| r.val_exact_obj).collect();
    let first = val[0];
    let best = val.iter().cloned().fold(f64::MIN, f64::max);
    let insts = toy_held_out();
    let got = mean_exact_objective(&out.pair.location_baseline, &insts, &caps(), Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let opt = mean_optimum(&insts);
    let gap = 100.0 * (opt - got) / opt;
    ensure(
        hours <= 2.0 && best > first && gap <= 6.0,
        format!(
            "trained in {:.1} min; validation objective epoch 1 {first:.3}, best {best:.3}; held-out gap {gap:.2}% ({got:.3} vs {opt:.3})",
            hours * 60.0
        ),
    )
}

fn criterion_7(run: &Path) -> Check {
    let pair = mclip_neural::trainer::load_trained_pair(run, None).map_err(|e| e.to_string())?;
    let (lp, ip) = (&pair.location_baseline, &pair.interdiction_baseline);
    let insts = toy_held_out();
    let (mut greedy, mut ensemble, mut greedy_s, mut ensemble_s) = (0.0, 0.0, 0.0, 0.0);
    for (i, inst) in insts.iter().enumerate() {
        let t = Instant::now();
        let g = greedy_infer(inst, lp, ip, FinalScoring::ExactWhenEnumerable, &caps()).map_err(|e| e.to_string())?;
        greedy_s += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let cfg = InferConfig::new(128, 10, i as u64);
        let e = ensemble_infer(inst, lp, ip, &cfg, &caps(), Execution::Sequential).map_err(|e| e.to_string())?;
        ensemble_s += t.elapsed().as_secs_f64();
        greedy += g.evaluation.obj as f64;
        ensemble += e.evaluation.obj as f64;
    }
    let n = insts.len() as f64;
    let overhead = (ensemble_s - greedy_s) / n;
    ensure(
        ensemble >= greedy && overhead < 0.5,
        format!("mean objective greedy {:.3}, ensemble {:.3}; overhead {overhead:.4} s per instance", greedy / n, ensemble / n),
    )
}

fn small_case() -> impl Strategy<Value = (Instance, Vec<usize>, Vec<usize>, u64)> {
    (2usize..14, any::<u64>(), 0.05f64..0.6)
        .prop_flat_map(|(n, seed, radius)| (Just(n), Just(seed), Just(radius), 1..=n.min(6)))
        .prop_flat_map(|(n, seed, radius, p)| (Just(n), Just(seed), Just(radius), Just(p), 0..=p.min(3)))
        .prop_flat_map(|(n, seed, radius, p, r)| {
            let inst = GenSpec { n, p, r, radius, seed, count: 1 }.generate(0).unwrap();
            let open = proptest::sample::subsequence((0..n).collect::<Vec<_>>(), p);
            (Just(inst), open, proptest::collection::vec(any::<proptest::sample::Index>(), r), Just(seed))
        })
        .prop_map(|(inst, open, picks, seed)| {
            let mut pool = open.clone();
            let hits = picks.into_iter().map(|ix| pool.remove(ix.index(pool.len()))).collect();
            (inst, open, hits, seed)
        })
}

fn distributions_are_normalized(ctx: &PolicyContext, seq: &[usize]) -> std::result::Result<(), TestCaseError> {
    for (probs, feasible) in ctx.step_distributions(seq).unwrap() {
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "mass {total}");
        for (p, &ok) in probs.iter().zip(&feasible) {
            if !ok {
                prop_assert!(*p == 0.0, "masked node carries mass {p}");
            }
        }
    }
    Ok(())
}

fn distinct(v: &[usize]) -> bool {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.windows(2).all(|w| w[0] != w[1])
}

fn criterion_8() -> Check {
    let dims = PolicyDims::new(8, 2, 1, 8).unwrap();
    let cfg = PropConfig { cases: 10_000, failure_persistence: None, ..PropConfig::default() };
    let mut runner = TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let res = runner.run(&small_case(), |(inst, open, hits, seed)| {
        let loc = LocationPlan::new(&inst, open).unwrap();
        let att = InterdictionPlan::new(&inst, &loc, hits).unwrap();
        let e = evaluate(&inst, &loc, &att).unwrap();
        prop_assert!(e.post <= e.pre && e.pre <= inst.num_customers());
        prop_assert_eq!(e.obj, e.pre + e.post);

        let none = inst.with_budgets(inst.p(), 0).unwrap();
        let e0 = exact_evaluate(&none, &loc, &caps()).unwrap();
        prop_assert_eq!(e0.post, e0.pre);
        let all = inst.with_budgets(inst.p(), inst.p()).unwrap();
        prop_assert_eq!(exact_evaluate(&all, &loc, &caps()).unwrap().post, 0);

        for m in [BaselineMethod::Gm, BaselineMethod::Ge, BaselineMethod::Sequential] {
            let (plan, _) = solve_baseline(&inst, m, seed, None, &caps()).unwrap();
            prop_assert_eq!(plan.open_sites().len(), inst.p());
            prop_assert!(distinct(plan.open_sites()));
        }
        let g = greedy_interdiction(&inst, &loc).unwrap();
        prop_assert_eq!(g.hit_sites().len(), inst.r());
        prop_assert!(distinct(g.hit_sites()) && g.hit_sites().iter().all(|s| loc.contains(*s)));

        let geom = SiteGeometry::new(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = init_params(Role::Location, dims, seed).unwrap();
        let ip = init_params(Role::Interdiction, dims, seed ^ 1).unwrap();
        let lctx = PolicyContext::new(&lp, &inst, &geom, None).unwrap();
        let ro = lctx.sample(&mut rng).unwrap();
        prop_assert_eq!(ro.actions.len(), inst.p());
        prop_assert!(distinct(&ro.actions));
        distributions_are_normalized(&lctx, &ro.actions)?;
        let sampled = ro.location_plan(&inst).unwrap();
        let ictx = PolicyContext::new(&ip, &inst, &geom, Some(&sampled)).unwrap();
        let hit = ictx.sample(&mut rng).unwrap();
        prop_assert_eq!(hit.actions.len(), inst.r());
        prop_assert!(distinct(&hit.actions) && hit.actions.iter().all(|s| sampled.contains(*s)));
        distributions_are_normalized(&ictx, &hit.actions)?;
        Ok(())
    });
    match res {
        Ok(()) => Ok("10000 random cases, no counterexample".into()),
        Err(e) => Err(format!("counterexample: {e}")),
    }
}

fn external_solver() -> Option<&'static str> {
    ["highs", "cbc", "glpsol"].into_iter().find(|bin| {
        std::process::Command::new(bin).arg("--version").output().is_ok()
    })
}

fn criterion_9() -> Check {
    let mut insts = vec![t1()];
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for k in 0..20 {
        let n = rng.random_range(4..=10);
        let p = rng.random_range(1..=4.min(n));
        let r = rng.random_range(0..=2.min(p));
        insts.push(GenSpec { n, p, r, radius: rng.random_range(0.15..0.45), seed: k, count: 1 }.generate(0).unwrap());
    }
    let mut bad = Vec::new();
    for (i, inst) in insts.iter().enumerate() {
        let (_, best) = exact_solve_with(inst, &caps(), Execution::Sequential).unwrap();
        let model = export_single_level_lp(inst, true, &caps()).map_err(|e| e.to_string())?;
        let parsed = parse_lp(&model.to_lp_string()).map_err(|e| e.to_string())?;
        let opt = brute_force_optimum(&parsed).map_err(|e| e.to_string())?;
        if opt != best.obj as f64 || RowCounts::of(&parsed) != RowCounts::expected(inst, true) {
            bad.push(i);
        }
    }
    let solver = match external_solver() {
        Some(s) => format!("{s} present but not wired in"),
        None => "no external MIP solver found, optional cross-check skipped".into(),
    };
    ensure(bad.is_empty(), format!("{} instances, mismatches {bad:?}; {solver}", insts.len()))
}

fn strip_wall(text: &str) -> String {
    text.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f[7] = "";
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion_10() -> Check {
    let mut failures = Vec::new();
    let insts = GenSpec::mclip20(1010, 4).generate_all().unwrap();
    for m in BaselineMethod::ALL {
        for inst in &insts {
            if solve_baseline(inst, m, 7, None, &caps()).unwrap() != solve_baseline(inst, m, 7, None, &caps()).unwrap() {
                failures.push(m.tag().to_string());
            }
        }
    }
    for inst in &insts {
        let a = exact_solve_with(inst, &caps(), Execution::Sequential).unwrap();
        if a != exact_solve_with(inst, &caps(), Execution::Parallel).unwrap() {
            failures.push("exact across modes".into());
        }
    }

    let cfg = TrainConfig {
        data: GenSpec { n: 10, p: 3, r: 1, radius: 0.3, seed: 4, count: 0 },
        epochs: 2,
        instances_per_epoch: 64,
        batch_size: 16,
        val_size: 16,
        dims: PolicyDims::new(8, 2, 1, 8).unwrap(),
        ..TrainConfig::toy()
    };
    let run = |exec| train_with(&cfg, &TrainOptions { out_dir: None, resume: false, exec }).unwrap();
    let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
    if a.pair != b.pair || a.pair != run(Execution::Sequential).pair {
        failures.push("trainer".into());
    }

    let (lp, ip) = (&a.pair.location, &a.pair.interdiction);
    for (i, inst) in insts.iter().enumerate() {
        let cfg = InferConfig::new(16, 4, i as u64);
        let x = ensemble_infer(inst, lp, ip, &cfg, &caps(), Execution::Sequential).unwrap();
        let y = ensemble_infer(inst, lp, ip, &cfg, &caps(), Execution::Parallel).unwrap();
        if x != y {
            failures.push("ensemble inference".into());
        }
    }

    let s = suite(&["sequential", "gm", "sa", "ts", "ga", "vns"], 1011, 4);
    let csv = || {
        let mut buf = Vec::new();
        write_records(&mut buf, &run_benchmark(&s).unwrap().records).unwrap();
        strip_wall(&String::from_utf8(buf).unwrap())
    };
    if csv() != csv() {
        failures.push("bench csv".into());
    }
    failures.dedup();
    ensure(
        failures.is_empty(),
        if failures.is_empty() {
            "solvers, trainer, inference and bench CSV repeat bit for bit".into()
        } else {
            format!("not reproducible: {}", failures.join(", "))
        },
    )
}

fn main() -> ExitCode {
    // libtest flags such as `--nocapture` are accepted and ignored
    let selected: Option<Vec<usize>> = std::env::var("MCLIP_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let want = |k: usize| selected.as_ref().is_none_or(|s| s.contains(&k));
    let run_dir = tempfile::tempdir().unwrap();
    let run = run_dir.path().join("toy");
    let mut failed = 0;
    for k in 1..=10 {
        if !want(k) {
            continue;
        }
        let t = Instant::now();
        let res = match k {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(&run),
            7 => {
                if !run.join("curve.csv").is_file() {
                    // criterion 7 needs the toy run; train it if 6 was skipped
                    let _ = criterion_6(&run);
                }
                criterion_7(&run)
            }
            8 => criterion_8(),
            9 => criterion_9(),
            _ => criterion_10(),
        };
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("criterion {k:>2} PASS ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {k:>2} FAIL ({secs:.1} s): {d}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
