use dlm_core::{DenseMatrix, Observations, ObservedMatrix};
use dlm_harness::config::{ExperimentConfig, ExperimentKind, SpecTemplate};
use dlm_harness::csv_io::{fmt_f64, parse_matrix_csv, read_matrix_csv, write_matrix_csv, write_observed_csv};
use dlm_harness::experiments::{incremental_compare, k_sweep_experiment, multi_init_experiment};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn small_multi_init() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::MultiInit);
    cfg.specs = vec![SpecTemplate::preset("subspace").unwrap(), SpecTemplate::preset("coupled_l2").unwrap()];
    cfg.alphas = vec![0.05, 0.5];
    cfg.dims = vec![4, 6];
    cfg.ks = vec![2, 3];
    cfg.samples = 20;
    cfg.n_inits = 3;
    cfg.init_means = vec![0.0, 5.0, 10.0];
    cfg.seed = 21;
    cfg
}

#[test]
fn single_cell_reproduces_its_grid_row() {
    let full = multi_init_experiment(&small_multi_init(), 2).unwrap();
    assert_eq!(full.cells.len(), 2 * 2 * 2 * 2);
    let mut one = small_multi_init();
    one.specs.remove(0);
    one.alphas = vec![0.5];
    one.dims = vec![6];
    one.ks = vec![3];
    let cell = &multi_init_experiment(&one, 1).unwrap().cells[0];
    let row = full.cells.iter().find(|c| c.spec == "coupled_l2" && c.alpha == 0.5 && c.d == 6 && c.k == 3).unwrap();
    assert_eq!(cell.objectives, row.objectives);
    assert_eq!(cell.iterations, row.iterations);
    assert_eq!(cell.rel_obj_diff_max, row.rel_obj_diff_max);
    assert_eq!(cell.sol_diff_max, row.sol_diff_max);
}

#[test]
fn identical_init_seeds_give_zero_differences() {
    let mut cfg = small_multi_init();
    cfg.specs.truncate(1);
    cfg.alphas = vec![0.05];
    cfg.dims = vec![5];
    cfg.ks = vec![3];
    cfg.n_inits = 2;
    cfg.init_means = Vec::new();
    cfg.init_seeds = Some(vec![99, 99]);
    let cell = &multi_init_experiment(&cfg, 2).unwrap().cells[0];
    assert_eq!(cell.objectives[0], cell.objectives[1]);
    assert_eq!(cell.rel_obj_diff_max, 0.0);
    assert_eq!(cell.sol_diff_max, 0.0);
}

#[test]
fn subspace_cells_agree_across_inits() {
    let rep = multi_init_experiment(&small_multi_init(), 2).unwrap();
    for c in rep.cells.iter().filter(|c| c.spec == "subspace") {
        assert!(c.failure.is_none());
        assert!(c.rel_obj_diff_max < 1e-5, "{c:?}");
        assert!(c.rel_obj_diff_min <= c.rel_obj_diff_max);
    }
}

#[test]
fn k_sweep_gap_vanishes_at_t() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::KSweep);
    cfg.dims = vec![6];
    cfg.samples = 12;
    cfg.ks = vec![2, 4];
    cfg.nus = vec![0.5];
    cfg.n_inits = 3;
    cfg.seed = 8;
    let rep = k_sweep_experiment(&cfg, 2).unwrap();
    let ks: Vec<usize> = rep.sweep.iter().map(|r| r.k).collect();
    assert_eq!(ks, vec![2, 4, 12]);
    let last = rep.sweep.last().unwrap();
    assert_eq!(last.gap, 0.0);
    assert!(rep.sweep.iter().all(|r| r.mean_objective > 0.0 && r.rel_std >= 0.0 && r.rel_std <= r.rel_std_max));
}

#[test]
fn incremental_report_has_every_arm() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::IncrementalCompare);
    cfg.dims = vec![8];
    cfg.ks = vec![8];
    cfg.samples = 30;
    cfg.incremental.epochs = 5;
    cfg.seed = 2;
    let rep = incremental_compare(&cfg).unwrap();
    let inc = rep.incremental.as_ref().unwrap();
    assert_eq!(inc.arms.len(), cfg.incremental.arms.len());
    for arm in &inc.arms {
        assert!(arm.failure.is_none(), "{arm:?}");
        assert!(arm.final_objective.is_finite());
        if let Some(step) = arm.hit_step {
            assert_eq!(arm.hit_epoch, Some(step.div_ceil(30)));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let files = rep.write_csv(dir.path()).unwrap();
    assert_eq!(files, vec!["incremental_summary.csv".to_string(), "incremental_trace.csv".to_string()]);
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(prop_oneof![-1e6..1e6f64, -1.0..1.0f64, Just(0.0)], rows * cols)
        .prop_map(move |v| DenseMatrix::new(DMatrix::from_row_slice(rows, cols, &v)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_csv_round_trips_exactly(m in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix_csv(&m, &path).unwrap();
        match read_matrix_csv(&path).unwrap() {
            Observations::Full(back) => prop_assert_eq!(back.as_matrix(), m.as_matrix()),
            Observations::Masked(_) => prop_assert!(false, "full matrix read back as masked"),
        }
    }

    #[test]
    fn masked_csv_round_trips(
        (m, mask) in (1usize..5, 2usize..5).prop_flat_map(|(r, c)| (matrix(r, c), prop::collection::vec(any::<bool>(), r * c)))
    ) {
        let mut mask = mask;
        mask[0] = true;
        mask[1] = false;
        let obs = ObservedMatrix::new(m, mask.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_observed_csv(&obs, &path).unwrap();
        match read_matrix_csv(&path).unwrap() {
            Observations::Masked(back) => {
                let (rows, cols) = obs.shape();
                for r in 0..rows {
                    for c in 0..cols {
                        prop_assert_eq!(back.is_observed(r, c), mask[r * cols + c]);
                        if mask[r * cols + c] {
                            prop_assert_eq!(back.values().get(r, c), obs.values().get(r, c));
                        }
                    }
                }
            }
            Observations::Full(_) => prop_assert!(false, "masked matrix read back as full"),
        }
    }

    #[test]
    fn formatted_floats_parse_back(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        let parsed = parse_matrix_csv(fmt_f64(x).as_bytes()).unwrap();
        prop_assert_eq!(parsed.values().get(0, 0), x);
    }
}
