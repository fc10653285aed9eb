use super::*;
use crate::graph::build_graph;
use crate::model::{ModelConfig, ModelKind};
use crate::nn::ParamLayout;
use crate::solvers::{generate_sample_on, SampleGrid};
use crate::{Experiment, Split};

fn trajs(exp: Experiment, n: usize, n_t: usize) -> Vec<Trajectory> {
    let grid = SampleGrid {
        n_t,
        n_x: 24,
        final_time: 4.0 * (n_t - 1) as f64 / 249.0,
    };
    (0..n).map(|i| generate_sample_on(exp, Split::Train, i, 1, grid).unwrap()).collect()
}

#[test]
fn learning_rate_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr_at(0), 1e-4);
    assert_eq!(cfg.lr_at(4), 1e-4);
    assert!((cfg.lr_at(7) - 4e-5).abs() < 1e-18);
    assert!((cfg.lr_at(19) - 6.4e-6).abs() < 1e-18);
}

fn scalar_store(value: f64) -> ParamStore<f64> {
    let mut layout = ParamLayout::new();
    layout.add("theta", &[1, 1], 1);
    ParamStore::from_flat(&layout, &[value]).unwrap()
}

#[test]
fn adamw_pure_decay() {
    let mut p = scalar_store(1.0);
    let g = Gradients::zeros_like(&p);
    let mut st = OptState::new(&p);
    let cfg = TrainConfig {
        weight_decay: 0.01,
        ..TrainConfig::default()
    };
    adamw_step(&mut p, &g, &mut st, 0.1, &cfg);
    assert!((p.to_flat()[0] - 0.999).abs() < 1e-15);
}

#[test]
fn adamw_first_step_with_unit_gradient() {
    let mut p = scalar_store(1.0);
    let g = Gradients {
        tensors: vec![vec![1.0]],
    };
    let mut st = OptState::new(&p);
    let cfg = TrainConfig::default();
    let lr = 1e-3;
    adamw_step(&mut p, &g, &mut st, lr, &cfg);
    let expected = 1.0 - lr / (1.0 + cfg.eps) - lr * cfg.weight_decay;
    assert!((p.to_flat()[0] - expected).abs() < 1e-15);

    let mut q = scalar_store(1.0);
    let mut st2 = OptState::new(&q);
    adamw_step(&mut q, &g, &mut st2, lr, &cfg);
    assert_eq!(p, q);
    assert_eq!(st, st2);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let model = Model::new(ModelConfig::tiny(ModelKind::MsmpPde, Experiment::MsWave)).unwrap();
    let params: ParamStore<f64> = model.init_params(3);
    let data = trajs(Experiment::MsWave, 2, 12);
    let graphs: Vec<_> = data.iter().map(|t| graph_for(t).unwrap()).collect();
    let mut trainer = Trainer::new(&model, params.clone(), TrainConfig::default()).unwrap();
    let batch = [Sample {
        trajectory: 1,
        block: 0,
        unroll: 2,
    }];
    trainer.step(&data, &graphs, &batch, 0.0).unwrap();
    assert_eq!(trainer.params, params);
    assert_eq!(trainer.opt.step, 1);
}

#[test]
fn rmse_examples() {
    let store = ParamStore::<f64>::zeros(&ParamLayout::new());
    let mut tape = Tape::new(&store);
    let a = tape.constant(1, 2, vec![1.0, 2.0]).unwrap();
    let b = tape.constant(1, 2, vec![1.0, 2.0]).unwrap();
    let c = tape.constant(1, 2, vec![2.0, 3.0]).unwrap();
    let d = tape.constant(1, 2, vec![4.0, 6.0]).unwrap();
    let zero = rmse_loss(&mut tape, a, b).unwrap();
    let one = rmse_loss(&mut tape, c, a).unwrap();
    let mixed = rmse_loss(&mut tape, d, a).unwrap();
    assert_eq!(tape.scalar(zero), 0.0);
    assert_eq!(tape.scalar(one), 1.0);
    assert!((tape.scalar(mixed) - 12.5f64.sqrt()).abs() < 1e-15);
    let e = tape.constant(1, 3, vec![0.0; 3]).unwrap();
    assert!(rmse_loss(&mut tape, a, e).is_err());
}

#[test]
fn pushforward_only_differentiates_last_call() {
    let model = Model::new(ModelConfig::tiny(ModelKind::Lem, Experiment::E2)).unwrap();
    let params: ParamStore<f64> = model.init_params(9);
    let traj = &trajs(Experiment::E2, 1, 12)[0];
    let graph = build_graph(traj.n_x, traj.length, 3).unwrap();
    let sample = Sample {
        trajectory: 0,
        block: 0,
        unroll: 2,
    };
    let (loss, grads) = sample_gradient(&model, &params, &graph, traj, sample).unwrap();

    // the same loss with the first call's output frozen as a constant input
    let times: Vec<f64> = (0..4).map(|s| traj.t(s)).collect();
    let pushed = model
        .predict(
            &params,
            &graph,
            &ModelInput {
                window: traj.steps(0, 4),
                times: &times,
                dt: traj.dt(),
                eta: &traj.eta,
                final_time: traj.final_time,
            },
        )
        .unwrap();
    let times: Vec<f64> = (4..8).map(|s| traj.t(s)).collect();
    let mut tape = Tape::new(&params);
    let pred = model
        .forward(
            &mut tape,
            &graph,
            &ModelInput {
                window: &pushed,
                times: &times,
                dt: traj.dt(),
                eta: &traj.eta,
                final_time: traj.final_time,
            },
        )
        .unwrap();
    let target = model.to_node_major(traj.steps(8, 4), traj.n_x);
    let target = tape.constant(traj.n_x, 4, target).unwrap();
    let l = rmse_loss(&mut tape, pred, target).unwrap();
    assert_eq!(tape.scalar(l), loss);
    assert_eq!(tape.backward(l).unwrap(), grads);

    // a first-call-only loss would have produced different, non-zero gradients
    let (_, single) = sample_gradient(
        &model,
        &params,
        &graph,
        traj,
        Sample {
            unroll: 1,
            ..sample
        },
    )
    .unwrap();
    assert_ne!(single, grads);
}

#[test]
fn samples_stay_inside_trajectory() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..2000 {
        let s = draw_sample(&mut rng, 0, 10, 2);
        assert!((1..=2).contains(&s.unroll));
        assert!((s.block + s.unroll) * 25 <= 250 - 25);
    }
    // a two-block trajectory caps the unroll depth at one
    for _ in 0..50 {
        let s = draw_sample(&mut rng, 0, 2, 3);
        assert_eq!((s.block, s.unroll), (0, 1));
    }
}

#[test]
fn epoch_plan_covers_each_trajectory_equally() {
    let cfg = TrainConfig::default();
    let plan = epoch_plan(&cfg, 3, 5, 10);
    assert_eq!(plan.len(), 45);
    for i in 0..5 {
        assert_eq!(plan.iter().filter(|s| s.trajectory == i).count(), 9);
    }
    assert_eq!(plan, epoch_plan(&cfg, 3, 5, 10));
    assert_ne!(plan, epoch_plan(&cfg, 4, 5, 10));
}

fn short_run(seed: u64) -> TrainOutcome<f64> {
    let model = Model::new(ModelConfig::tiny(ModelKind::Gated, Experiment::E1)).unwrap();
    let data = trajs(Experiment::E1, 3, 12);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 2,
        lr0: 1e-3,
        seed,
        ..TrainConfig::default()
    };
    train(&model, model.init_params(seed), &data[..2], &data[2..], &cfg, |_| {}).unwrap()
}

#[test]
fn training_is_reproducible() {
    let a = short_run(4);
    let b = short_run(4);
    assert_eq!(a.best_params, b.best_params);
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 2);
    let log = metrics_log(&a.history);
    assert_eq!(log.lines().count(), 3);
    assert!(log.starts_with("epoch\tlr\ttrain_loss\tvalid_re\n0\t1e-3\t"));
}

#[test]
fn non_finite_loss_aborts_with_context() {
    let model = Model::new(ModelConfig::tiny(ModelKind::MpPde, Experiment::E1)).unwrap();
    let mut params: ParamStore<f64> = model.init_params(0);
    let last = model.decoder.last_conv().b;
    params.get_mut(last)[0] = f64::NAN;
    let data = trajs(Experiment::E1, 2, 12);
    let err = train(&model, params, &data[..1], &data[1..], &TrainConfig::default(), |_| {}).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)));
    assert!(err.to_string().contains("epoch 0, batch 0"), "{err}");
}

#[test]
fn rejects_invalid_config() {
    let cfg = TrainConfig {
        max_unroll: 0,
        ..TrainConfig::default()
    };
    assert!(cfg.validate().is_err());
}
