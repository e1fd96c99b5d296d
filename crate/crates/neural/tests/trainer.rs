use mclip_core::{Execution, GenSpec};
use mclip_neural::features::SiteGeometry;
use mclip_neural::params::PolicyDims;
use mclip_neural::trainer::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        preset: "tiny".into(),
        data: GenSpec { n: 8, p: 3, r: 1, radius: 0.3, seed: 4, count: 0 },
        epochs,
        instances_per_epoch: 48,
        batch_size: 16,
        val_size: 24,
        val_seed: 9,
        dims: PolicyDims::new(8, 2, 1, 8).unwrap(),
        lr: 1e-2,
        ..TrainConfig::toy()
    }
}

#[test]
fn zero_epochs_returns_initial_pair() {
    let cfg = tiny_config(0);
    let out = train(&cfg).unwrap();
    assert_eq!(out.pair, AgentPair::new(cfg.dims, cfg.seed, cfg.adam).unwrap());
    assert!(out.curve.is_empty());
}

#[test]
fn centered_advantage_gives_exactly_zero_update() {
    // p = n: every location sequence opens the same plan as the baseline
    let cfg = tiny_config(1);
    let batch = GenSpec { n: 4, p: 4, r: 1, radius: 0.3, seed: 1, count: 8 }.generate_all().unwrap();
    let mut pair = AgentPair::new(cfg.dims, 3, cfg.adam).unwrap();
    let before = pair.clone();
    let key = StreamKey { seed: 5, first: 0 };
    let st = reinforce_update(&mut pair, Phase::Location, &batch, 1e-2, None, key, Execution::Sequential).unwrap();
    assert_eq!(st.mean_advantage, 0.0);
    assert_eq!(st.grad_norm, 0.0);
    assert_eq!(pair.location.values, before.location.values);
}

#[test]
fn zero_interdiction_budget_never_moves_parameters() {
    let cfg = tiny_config(1);
    let batch = GenSpec { n: 8, p: 3, r: 0, radius: 0.3, seed: 1, count: 8 }.generate_all().unwrap();
    let mut pair = AgentPair::new(cfg.dims, 3, cfg.adam).unwrap();
    let before = pair.clone();
    for i in 0..3 {
        let key = StreamKey { seed: i, first: 0 };
        reinforce_update(&mut pair, Phase::Interdiction, &batch, 1e-2, None, key, Execution::Sequential).unwrap();
    }
    assert_eq!(pair.interdiction.values, before.interdiction.values);
}

#[test]
fn only_the_active_agent_moves() {
    let cfg = tiny_config(1);
    let batch = cfg.epoch_data(0).generate_all().unwrap();
    let mut pair = AgentPair::new(cfg.dims, 3, cfg.adam).unwrap();
    // make the baseline differ from the current policies
    pair.location_baseline.values.iter_mut().for_each(|v| *v *= 0.5);
    pair.interdiction_baseline.values.iter_mut().for_each(|v| *v *= 0.5);
    let before = pair.clone();
    let key = StreamKey { seed: 5, first: 0 };
    reinforce_update(&mut pair, Phase::Location, &batch, 1e-2, None, key, Execution::Sequential).unwrap();
    assert_ne!(pair.location.values, before.location.values);
    assert_eq!(pair.interdiction, before.interdiction);
    assert_eq!(pair.location_baseline, before.location_baseline);
    assert_eq!(pair.interdiction_baseline, before.interdiction_baseline);

    let before = pair.clone();
    reinforce_update(&mut pair, Phase::Interdiction, &batch, 1e-2, None, key, Execution::Sequential).unwrap();
    assert_ne!(pair.interdiction.values, before.interdiction.values);
    assert_eq!(pair.location, before.location);
}

#[test]
fn updates_are_bit_reproducible_across_execution_modes() {
    let cfg = tiny_config(1);
    let batch = cfg.epoch_data(0).generate_all().unwrap();
    let mut a = AgentPair::new(cfg.dims, 3, cfg.adam).unwrap();
    a.location_baseline.values.iter_mut().for_each(|v| *v *= -1.0);
    let mut b = a.clone();
    let mut c = a.clone();
    let key = StreamKey { seed: 11, first: 32 };
    let sa = reinforce_update(&mut a, Phase::Location, &batch, 1e-2, None, key, Execution::Sequential).unwrap();
    let sb = reinforce_update(&mut b, Phase::Location, &batch, 1e-2, None, key, Execution::Parallel).unwrap();
    let sc = reinforce_update(&mut c, Phase::Location, &batch, 1e-2, None, key, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(sa, sb);
    assert_eq!(sa, sc);
}

#[test]
fn clipping_bounds_the_step_direction() {
    let cfg = tiny_config(1);
    let batch = cfg.epoch_data(0).generate_all().unwrap();
    let mut pair = AgentPair::new(cfg.dims, 3, cfg.adam).unwrap();
    pair.location_baseline.values.iter_mut().for_each(|v| *v *= 0.5);
    let key = StreamKey { seed: 5, first: 0 };
    let st = reinforce_update(&mut pair, Phase::Location, &batch, 1e-2, Some(1e-3), key, Execution::Sequential).unwrap();
    assert!(st.grad_norm > 1e-3, "raw norm is reported before clipping");
}

fn max_z(mean: &[f64], second: &[f64], n: f64, exact: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..mean.len() {
        let var = (second[i] / n - mean[i] * mean[i]).max(0.0);
        let se = (var / n).sqrt();
        let diff = (mean[i] - exact[i]).abs();
        // components that are zero up to round-off carry no information
        let z = if diff < 1e-9 { 0.0 } else { diff / se };
        worst = worst.max(z);
    }
    worst
}

#[test]
fn reinforce_estimator_is_unbiased_on_small_instance() {
    let mut pair = AgentPair::new(PolicyDims::new(8, 2, 1, 8).unwrap(), 8, Default::default()).unwrap();
    pair.location_baseline.values.iter_mut().for_each(|v| *v *= 0.3);
    for phase in [Phase::Location, Phase::Interdiction] {
        // first small instance on which the expected gradient is not trivially zero
        let (inst, exact) = (0..50)
            .map(|seed| {
                let inst = GenSpec { n: 6, p: 2, r: 1, radius: 0.3, seed, count: 1 }.generate(0).unwrap();
                let g = exact_policy_gradient(&pair, phase, &inst).unwrap();
                (inst, g)
            })
            .find(|(_, g)| g.iter().any(|&v| v.abs() > 1e-6))
            .unwrap();
        let geom = SiteGeometry::new(&inst);
        let n = 20_000;
        let mut sum = vec![0.0; exact.len()];
        let mut sq = vec![0.0; exact.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..n {
            let s = match phase {
                Phase::Location => location_sample(&pair, &inst, &geom, &mut rng).unwrap(),
                Phase::Interdiction => interdiction_sample(&pair, &inst, &geom, &mut rng).unwrap(),
            };
            if let Some(g) = s.grad {
                for (i, v) in g.iter().enumerate() {
                    sum[i] += v;
                    sq[i] += v * v;
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let z = max_z(&mean, &sq, n as f64, &exact);
        // maximum over all components, so allow the Bonferroni-scale tail
        assert!(z < 5.0, "{phase}: max z-score {z}");
    }
}

#[test]
fn resume_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let straight = dir.path().join("straight");
    let split = dir.path().join("split");
    let opts = |p: &std::path::Path, resume| TrainOptions { out_dir: Some(p.to_path_buf()), resume, exec: Execution::Sequential };
    let full = train_with(&tiny_config(3), &opts(&straight, false)).unwrap();
    train_with(&tiny_config(2), &opts(&split, false)).unwrap();
    let resumed = train_with(&tiny_config(3), &opts(&split, true)).unwrap();
    assert_eq!(full.pair, resumed.pair);
    assert_eq!(full.promotions_location, resumed.promotions_location);
    let strip = |v: &[CurveRecord]| {
        v.iter().map(|r| CurveRecord { wall_seconds: 0.0, ..r.clone() }).collect::<Vec<_>>()
    };
    let a = read_curve(&straight.join("curve.csv")).unwrap();
    let b = read_curve(&split.join("curve.csv")).unwrap();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.len(), 6);
    assert_eq!(load_trained_pair(&split, None).unwrap(), resumed.pair);
    assert_eq!(latest_complete_epoch(&split), Some(3));

    // a different configuration must not silently resume
    let mut other = tiny_config(4);
    other.lr = 0.5;
    assert!(train_with(&other, &opts(&split, true)).is_err());
}

#[test]
fn curve_file_matches_returned_records_and_promotion_rule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(4);
    let out = train_with(&cfg, &TrainOptions { out_dir: Some(dir.path().to_path_buf()), resume: false, exec: Execution::Parallel })
        .unwrap();
    let file = read_curve(&dir.path().join("curve.csv")).unwrap();
    assert_eq!(file.len(), out.curve.len());
    for (a, b) in file.iter().zip(&out.curve) {
        assert_eq!((a.epoch, a.phase, a.promoted), (b.epoch, b.phase, b.promoted));
        assert!((a.val_current - b.val_current).abs() < 1e-6);
        assert!((a.val_baseline - b.val_baseline).abs() < 1e-6);
        assert!((a.mean_sampled_reward - b.mean_sampled_reward).abs() < 1e-6);
    }
    let mut promoted = 0;
    for r in &out.curve {
        assert_eq!(r.promoted, r.val_current > r.val_baseline);
        promoted += r.promoted as usize;
    }
    assert_eq!(promoted, out.promotions_location + out.promotions_interdiction);
    assert!(out.promotions_location <= cfg.epochs && out.promotions_interdiction <= cfg.epochs);

    // rerunning reproduces everything except the clock
    let again = train(&cfg).unwrap();
    assert_eq!(again.pair, out.pair);
}

#[test]
fn validation_scores_are_deterministic_and_symmetric_at_start() {
    let cfg = tiny_config(1);
    let val = cfg.validation_data().generate_all().unwrap();
    let pair = AgentPair::new(cfg.dims, 1, cfg.adam).unwrap();
    let a = evaluate_on_validation(&pair, &val, Execution::Parallel).unwrap();
    let b = evaluate_on_validation(&pair, &val, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.location_current, a.location_baseline);
    assert_eq!(a.interdiction_current, a.interdiction_baseline);
}

#[test]
fn presets_validate() {
    TrainConfig::toy().validate().unwrap();
    TrainConfig::full().validate().unwrap();
    assert!(!TrainConfig::full().desk_runnable());
    assert!(TrainConfig::preset("huge").is_err());
    let mut bad = TrainConfig::toy();
    bad.lr = 0.0;
    assert!(bad.validate().is_err());
}
