use std::path::Path;

use msmp_core::datasets::{decode_dataset, encode_dataset, make_windows};
use msmp_core::evaluation::{median, relative_error};
use msmp_core::graph::build_graph;
use msmp_core::model::layers::{gate_combine, LemCell, LemState};
use msmp_core::nn::{ParamLayout, ParamStore, Tape};
use msmp_core::solvers::{downsample, Trajectory};
use msmp_core::training::{draw_sample, epoch_plan, TrainConfig};
use msmp_core::Experiment;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn trajectory(n_t: usize, n_x: usize, n_ch: usize, values: &[f64], eta: Vec<f64>) -> Trajectory {
    let mut t = Trajectory::zeros(n_t, n_x, n_ch, 16.0, 4.0, eta);
    for (i, v) in t.u.iter_mut().enumerate() {
        *v = values[i % values.len()] + 0.01 * i as f64;
    }
    t
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relative_error_is_scale_invariant(a in values(), b in values(), scale in 0.01f64..100.0) {
        let truth = trajectory(30, 6, 2, &a, vec![]);
        let pred = trajectory(30, 6, 2, &b, vec![]);
        let re = relative_error(std::slice::from_ref(&pred), std::slice::from_ref(&truth), 5).unwrap();
        let mut ps = pred;
        let mut ts = truth.clone();
        ps.u.iter_mut().for_each(|v| *v *= scale);
        ts.u.iter_mut().for_each(|v| *v *= scale);
        let scaled = relative_error(&[ps], &[ts], 5).unwrap();
        prop_assert!(re >= 0.0);
        prop_assert!((re - scaled).abs() <= 1e-12 * re.max(1.0));
        prop_assert_eq!(relative_error(&[truth.clone()], std::slice::from_ref(&truth), 5).unwrap(), 0.0);
    }

    #[test]
    fn lem_state_stays_bounded(seed in any::<u64>(), dt in 0.01f64..=1.0, y0 in prop::collection::vec(-2.0f64..2.0, 4)) {
        let mut layout = ParamLayout::new();
        let cell = LemCell::register(&mut layout, "lem", 2, 4, dt);
        let flat: Vec<f64> = {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..layout.total_count()).map(|_| rng.gen_range(-3.0..3.0)).collect()
        };
        let params = ParamStore::from_flat(&layout, &flat).unwrap();
        let bound = y0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut tape = Tape::new(&params);
        let mut state = LemState {
            z: tape.constant(1, 4, vec![0.5; 4]).unwrap(),
            y: tape.constant(1, 4, y0).unwrap(),
        };
        for s in 0..50 {
            let u = tape.constant(1, 2, vec![(s as f64).sin() * 5.0, 1.0]).unwrap();
            state = cell.step(&mut tape, state, u).unwrap();
            prop_assert!(tape.value(state.y).iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn gate_output_lies_between_inputs(
        prev in prop::collection::vec(-5.0f64..5.0, 6),
        gate in prop::collection::vec(-50.0f64..50.0, 6),
        cand in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let store = ParamStore::<f64>::zeros(&ParamLayout::new());
        let mut tape = Tape::new(&store);
        let p = tape.constant(2, 3, prev.clone()).unwrap();
        let g = tape.constant(2, 3, gate).unwrap();
        let c = tape.constant(2, 3, cand.clone()).unwrap();
        let out = gate_combine(&mut tape, p, g, c).unwrap();
        for (i, v) in tape.value(out).iter().enumerate() {
            let t = cand[i].tanh();
            prop_assert!(*v >= prev[i].min(t) - 1e-15 && *v <= prev[i].max(t) + 1e-15);
        }
    }

    #[test]
    fn drawn_samples_have_targets(seed in any::<u64>(), n_blocks in 2usize..20, max_unroll in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let s = draw_sample(&mut rng, 0, n_blocks, max_unroll);
            prop_assert!(s.unroll >= 1 && s.unroll <= max_unroll);
            prop_assert!(s.block + s.unroll < n_blocks);
        }
    }

    #[test]
    fn epoch_plan_is_a_fixed_size_shuffle(seed in any::<u64>(), epoch in 0usize..50, n in 1usize..6) {
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let plan = epoch_plan(&cfg, epoch, n, 10);
        prop_assert_eq!(plan.len(), 9 * n);
        prop_assert_eq!(&plan, &epoch_plan(&cfg, epoch, n, 10));
    }

    #[test]
    fn dataset_round_trip(a in values(), n in 1usize..4, eta in prop::collection::vec(0.0f64..10.0, 2)) {
        let trajs: Vec<Trajectory> = (0..n)
            .map(|i| {
                let mut t = trajectory(7, 5, 2, &a, eta.clone());
                t.u.iter_mut().for_each(|v| *v += i as f64);
                t
            })
            .collect();
        let bytes = encode_dataset(Experiment::MsWave, &trajs).unwrap();
        let back = decode_dataset(&bytes, Path::new("mem")).unwrap();
        prop_assert_eq!(back.experiment, Experiment::MsWave);
        prop_assert_eq!(back.trajectories.len(), n);
        for (t, b) in trajs.iter().zip(&back.trajectories) {
            prop_assert_eq!(&t.eta, &b.eta);
            for (x, y) in t.u.iter().zip(&b.u) {
                prop_assert_eq!(*x as f32 as f64, *y);
            }
        }
        // a truncated file never decodes
        prop_assert!(decode_dataset(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
    }

    #[test]
    fn windows_tile_the_trajectory(n_blocks in 2usize..8, k in 1usize..6) {
        let t = trajectory(n_blocks * k, 4, 1, &[0.5], vec![]);
        let windows = make_windows(&t, k);
        prop_assert_eq!(windows.len(), n_blocks - 1);
        let targets: Vec<f64> = windows.iter().flat_map(|w| w.target.iter().copied()).collect();
        prop_assert_eq!(targets.as_slice(), t.steps(k, (n_blocks - 1) * k));
        for (i, w) in windows.iter().enumerate() {
            prop_assert_eq!(w.k_index, (i + 1) * k);
        }
    }

    #[test]
    fn ring_graph_is_regular(n in 7usize..60, k in 1usize..4) {
        prop_assume!(n > 2 * k);
        let g = build_graph(n, 16.0, k).unwrap();
        prop_assert_eq!(g.n_edges(), 2 * k * n);
        prop_assert!(g.in_degrees().iter().all(|&d| d == 2 * k));
        prop_assert!(g.out_degrees().iter().all(|&d| d == 2 * k));
        for e in 0..g.n_edges() {
            let r = g.relative_position(e).abs();
            prop_assert!(r > 0.0 && r <= k as f64 * 16.0 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn downsampling_keeps_the_spatial_mean(a in values(), half in 2usize..20) {
        let t = trajectory(3, 2 * half, 2, &a, vec![]);
        let d = downsample(&t).unwrap();
        for k in 0..3 {
            for c in 0..2 {
                let fine: f64 = (0..t.n_x).map(|j| t.get(k, j, c)).sum::<f64>() / t.n_x as f64;
                let coarse: f64 = (0..d.n_x).map(|j| d.get(k, j, c)).sum::<f64>() / d.n_x as f64;
                prop_assert!((fine - coarse).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn median_ignores_order(mut v in prop::collection::vec(-1.0f64..1.0, 1..20), seed in any::<u64>()) {
        let m = median(&v);
        use rand::seq::SliceRandom;
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(m, median(&v));
        let below = v.iter().filter(|&&x| x < m).count();
        prop_assert!(below <= v.len() / 2);
    }
}
