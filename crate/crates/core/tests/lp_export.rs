use mclip_core::exact::exact_solve_with;
use mclip_core::lp::{brute_force_optimum, export_single_level_lp, parse_lp, RowCounts};
use mclip_core::{ExactCaps, Execution, GenSpec};

#[test]
fn exported_model_optimum_equals_bilevel_optimum() {
    let caps = ExactCaps::default();
    for seed in 0..8u64 {
        let n = 5 + seed as usize % 4;
        let p = 1 + seed as usize % 3;
        let r = seed as usize % (p.min(2) + 1);
        let inst = GenSpec { n, p, r, radius: 0.35, seed, count: 1 }.generate(0).unwrap();
        let (_, best) = exact_solve_with(&inst, &caps, Execution::Sequential).unwrap();
        for sym in [true, false] {
            let model = export_single_level_lp(&inst, sym, &caps).unwrap();
            assert_eq!(model.row_counts(), RowCounts::expected(&inst, sym));
            // through the text format and back
            let parsed = parse_lp(&model.to_lp_string()).unwrap();
            assert_eq!(RowCounts::of(&parsed), model.row_counts());
            assert_eq!(brute_force_optimum(&parsed).unwrap(), best.obj as f64, "seed {seed} sym {sym}");
        }
    }
}

#[test]
fn pattern_cap_is_an_error() {
    let inst = GenSpec::mclip100(1, 1).generate(0).unwrap();
    let caps = ExactCaps { patterns: 10, ..ExactCaps::default() };
    assert!(export_single_level_lp(&inst, true, &caps).is_err());
}
