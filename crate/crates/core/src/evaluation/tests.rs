use super::*;
use crate::graph::build_graph;
use crate::model::ModelConfig;
use crate::solvers::{generate_sample_on, SampleGrid};
use crate::datasets::generate_experiment_on;
use crate::{Experiment, Split, SplitSizes};

fn small_traj(exp: Experiment, idx: usize) -> Trajectory {
    let grid = SampleGrid {
        n_t: 50,
        n_x: 40,
        ..SampleGrid::default()
    };
    generate_sample_on(exp, Split::Test, idx, 3, grid).unwrap()
}

#[test]
fn paper_grid_needs_nine_calls() {
    assert_eq!(rollout_calls(250, 25), 9);
    assert_eq!(rollout_calls(25, 25), 0);
    assert_eq!(rollout_calls(60, 25), 2);
}

#[test]
fn zero_decoder_rollout_is_persistence() {
    let model = Model::new(ModelConfig::tiny(ModelKind::MsmpPde, Experiment::MsWave)).unwrap();
    let mut params: ParamStore<f64> = model.init_params(5);
    let last = model.decoder.last_conv().clone();
    params.get_mut(last.w).fill(0.0);
    params.get_mut(last.b).fill(0.0);
    let traj = small_traj(Experiment::MsWave, 0);
    let graph = build_graph(traj.n_x, traj.length, 3).unwrap();
    let r = unroll(&model, &params, &traj, &graph).unwrap();
    assert_eq!(r.calls, 12);
    assert!(!r.diverged);
    let frame = traj.n_x * traj.n_ch;
    let seed = traj.steps(3, 1);
    for k in 4..traj.n_t {
        assert_eq!(&r.trajectory.u[k * frame..(k + 1) * frame], seed);
    }
    assert_eq!(r.trajectory.steps(0, 4), traj.steps(0, 4));
}

#[test]
fn oracle_rollout_has_zero_error() {
    let traj = small_traj(Experiment::E1, 1);
    let k = 5;
    let mut call = 0;
    let r = unroll_with(&traj, k, |_| {
        call += 1;
        let start = call * k;
        let frame = traj.n_x;
        let mut v = vec![0.0; k * frame];
        let avail = (traj.n_t - start).min(k) * frame;
        v[..avail].copy_from_slice(&traj.u[start * frame..start * frame + avail]);
        Ok(v)
    })
    .unwrap();
    assert_eq!(r.calls, 9);
    let re = relative_error(&[r.trajectory], std::slice::from_ref(&traj), k).unwrap();
    assert_eq!(re, 0.0);
}

#[test]
fn non_finite_prediction_is_flagged() {
    let traj = small_traj(Experiment::E1, 2);
    let r = unroll_with(&traj, 10, |_| Ok(vec![f64::NAN; 10 * traj.n_x])).unwrap();
    assert!(r.diverged);
    assert!(r.trajectory.u[10 * traj.n_x..].iter().all(|v| v.is_nan()));
    let re = relative_error(&[r.trajectory], std::slice::from_ref(&traj), 10).unwrap();
    assert!(re.is_nan());
}

#[test]
fn relative_error_examples() {
    let truth = small_traj(Experiment::E2, 0);
    assert_eq!(relative_error(std::slice::from_ref(&truth), std::slice::from_ref(&truth), 25).unwrap(), 0.0);
    let mut doubled = truth.clone();
    doubled.u.iter_mut().for_each(|v| *v *= 2.0);
    assert_eq!(relative_error(&[doubled], std::slice::from_ref(&truth), 25).unwrap(), 1.0);
    assert_eq!(relative_error_from_norms(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
    assert!(relative_error_from_norms(&[1.0], &[0.0]).is_err());
    assert!(relative_error(&[], &[], 0).is_err());
}

#[test]
fn norm_excludes_seed_window() {
    let mut t = Trajectory::zeros(4, 2, 1, 2.0, 3.0, vec![]);
    t.u = vec![100.0, 100.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    // dt = 1, dx = 1, six unit entries after step 0
    assert_eq!(l2_norm(&t, &t.u, 1), 6f64.sqrt());
}

#[test]
fn statistics_use_sample_convention() {
    let r = RunResult::from_folds(Experiment::E1, ModelKind::Lem, vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(r.mean, 2.5);
    assert!((r.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert_eq!(r.median(), 2.5);
    assert_eq!(median(&[3.0, f64::NAN, 1.0]), 3.0);
    let single = RunResult::from_folds(Experiment::E1, ModelKind::Lem, vec![0.2]);
    assert_eq!(single.std, 0.0);
}

#[test]
fn results_files_layout() {
    let results = vec![
        RunResult::from_folds(Experiment::MsWave, ModelKind::MpPde, vec![0.2, 0.22]),
        RunResult::from_folds(Experiment::MsWave, ModelKind::MsmpPde, vec![0.1]),
    ];
    let csv = results_csv(&results);
    assert_eq!(
        csv,
        "experiment,model,fold,re\nms-wave,mp-pde,0,0.2\nms-wave,mp-pde,1,0.22\nms-wave,msmp-pde,0,0.1\n"
    );
    let table = summary_table(&results);
    assert!(table.starts_with("model,ms-wave\nmp-pde,21.00% ± 1.41%\n"));
}

#[test]
fn heatmaps_round_trip() {
    let truth = small_traj(Experiment::E1, 0);
    let mut pred = truth.clone();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_heatmaps(&pred, &truth, dir.path(), "same", 0.0).unwrap();
    assert_eq!(files.len(), 4);
    assert_eq!(files.iter().filter(|p| p.extension().unwrap() == "png").count(), 3);
    let csv = files.iter().find(|p| p.extension().unwrap() == "csv").unwrap();
    assert!(csv.file_name().unwrap().to_str().unwrap().contains("re0.00pct"));
    let rows = read_grid_csv(csv).unwrap();
    assert_eq!(rows.len(), truth.u.len());
    assert!(rows.iter().all(|r| r.error == 0.0));
    for r in &rows {
        assert_eq!(r.truth, truth.get(r.t_index, r.x_index, r.channel));
    }

    pred.u.iter_mut().for_each(|v| *v += 0.123456789);
    let files = emit_heatmaps(&pred, &truth, dir.path(), "shifted", 0.05).unwrap();
    let rows = read_grid_csv(files.last().unwrap()).unwrap();
    for r in &rows {
        assert_eq!(r.pred, pred.get(r.t_index, r.x_index, r.channel));
    }
    let img = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&files[0]).unwrap()));
    let info = img.read_info().unwrap();
    assert_eq!((info.info().width, info.info().height), (80, 100));
}

#[test]
fn system_heatmaps_cover_both_channels() {
    let truth = small_traj(Experiment::MsWave, 0);
    let dir = tempfile::tempdir().unwrap();
    let files = emit_heatmaps(&truth, &truth, dir.path(), "w", 0.0).unwrap();
    assert_eq!(files.len(), 7);
}

#[test]
fn run_matrix_small() {
    let grid = SampleGrid {
        n_t: 12,
        n_x: 24,
        final_time: 4.0 * 11.0 / 249.0,
    };
    let sizes = SplitSizes {
        train: 2,
        valid: 1,
        test: 2,
    };
    let data = generate_experiment_on(Experiment::E1, 0, sizes, grid).unwrap();
    let spec = MatrixSpec {
        models: vec![ModelKind::MpPde, ModelKind::Lem],
        folds: 2,
        n_hid: 8,
        n_layers: 1,
        window: 4,
        train: TrainConfig {
            epochs: 1,
            batch_size: 2,
            ..TrainConfig::default()
        },
        data_seed: Some(0),
    };
    let mut lines = Vec::new();
    let results = run_matrix::<f64>(&[data], &spec, |l| lines.push(l.to_string())).unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(lines.len(), 4);
    for r in &results {
        assert_eq!(r.folds.len(), 2);
        assert!(r.folds.iter().all(|v| v.is_finite() && *v > 0.0));
        let (m, s) = mean_std(&r.folds);
        assert!((m - r.mean).abs() < 1e-12 && (s - r.std).abs() < 1e-12);
    }
}

#[test]
fn fold_splits_reproduce_the_grid_and_change_with_seed() {
    let grid = SampleGrid {
        n_t: 12,
        n_x: 24,
        final_time: 4.0 * 11.0 / 249.0,
    };
    let sizes = SplitSizes {
        train: 2,
        valid: 1,
        test: 1,
    };
    let data = generate_experiment_on(Experiment::MsWave, 3, sizes, grid).unwrap();
    let (train, valid) = fold_splits(&data, 3).unwrap();
    assert_eq!(train, data.train);
    assert_eq!(valid, data.valid);
    let (other, _) = fold_splits(&data, 4).unwrap();
    assert_eq!(other.len(), 2);
    assert_ne!(other, data.train);
}
