use std::collections::BTreeSet;

use fragaudit::datakit::{
    corrupt_labels, corrupted_count, make_permutation, permute_pixels, subsample, synth_blobs, Dataset,
};
use fragaudit::fragility::{close_error_pairs, split_pairs, Run};
use fragaudit::linalg::Matrix;
use fragaudit::measures::{
    compute_all, permute_cols, permute_rows, sigma_search, DropCurve, MeasureConfig, Perturbation, SigmaConfig,
};
use fragaudit::netcore::{forward, Checkpoint, NetSpec};
use fragaudit::optimkit::{train, Hyperparams, Optimizer, StopRule};
use proptest::prelude::*;

fn trained_blobs_net() -> (NetSpec, Checkpoint, Dataset) {
    let all = synth_blobs(260, 5, 3, 4.0, 12).unwrap();
    let (train_ds, test) = all.split(200).unwrap();
    let spec = NetSpec::relu(&[5, 12, 8, 3], true);
    let mut h = Hyperparams::new("blobs", "fcn", Optimizer::Sgdm, 0.05, StopRule::TrainAcc100, train_ds.len());
    h.batch_size = Some(25);
    let out = train(&spec, &train_ds, &test, &h, 1).unwrap();
    (spec, out.checkpoint, train_ds)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_nets_ignore_parameter_scale(
        dims in prop::collection::vec(8usize..24, 2..5),
        seed in 0u64..1000,
    ) {
        let spec = NetSpec::scale_invariant(&dims);
        let ck = Checkpoint::init(&spec, seed).unwrap();
        let data = synth_blobs(8, dims[0], 2, 2.0, seed).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let scaled = ck.scaled_trainable(&spec, c).unwrap();
            for i in 0..data.len() {
                // an all-dead normalized layer is singular at every scale
                match (forward(&spec, &ck, data.input(i)), forward(&spec, &scaled, data.input(i))) {
                    (Ok(a), Ok(b)) => {
                        for (x, y) in a.iter().zip(&b) {
                            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
                        }
                    }
                    (a, b) => prop_assert_eq!(format!("{:?}", a.err()), format!("{:?}", b.err())),
                }
            }
        }
    }

    #[test]
    fn corruption_changes_exactly_the_rounded_count(
        n in 3usize..120,
        classes in 2usize..6,
        fraction in 0.0f64..=1.0,
        seed in 0u64..1000,
    ) {
        let ds = synth_blobs(n.max(classes), 3, classes, 1.0, seed).unwrap();
        let noisy = corrupt_labels(&ds, fraction, seed).unwrap();
        let changed = ds.labels.iter().zip(&noisy.labels).filter(|(a, b)| a != b).count();
        prop_assert_eq!(changed, corrupted_count(fraction, ds.len()));
        prop_assert_eq!(&noisy.provenance.replay().unwrap(), &noisy);
    }

    #[test]
    fn pixel_permutation_keeps_row_multisets(dim in 1usize..40, seed in 0u64..1000) {
        let ds = synth_blobs(6, dim, 2, 1.0, seed).unwrap();
        let p = permute_pixels(&ds, &make_permutation(dim, seed)).unwrap();
        for i in 0..ds.len() {
            let mut a = ds.input(i).to_vec();
            let mut b = p.input(i).to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
        prop_assert_eq!(&p.labels, &ds.labels);
    }

    #[test]
    fn subsample_keeps_original_order(n in 1usize..80, frac in 0.01f64..=1.0, seed in 0u64..1000) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let ds = Dataset::inline(&rows, vec![0; n], 1).unwrap();
        let m = ((n as f64 * frac).ceil() as usize).clamp(1, n);
        let s = subsample(&ds, m, seed).unwrap();
        let picked: Vec<f64> = (0..m).map(|i| s.input(i)[0]).collect();
        prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(s, subsample(&ds, m, seed).unwrap());
    }

    #[test]
    fn close_pairs_grow_with_delta_and_partition(
        errors in prop::collection::vec(0u8..30, 0..30),
        configs in prop::collection::vec((0u8..3, 0u8..3), 30),
        d1 in 0u8..10,
        extra in 0u8..10,
    ) {
        let errors: Vec<f64> = errors.iter().map(|&e| f64::from(e) / 100.0).collect();
        let (small, large) = (f64::from(d1) / 100.0, f64::from(d1 + extra) / 100.0);
        let a: BTreeSet<_> = close_error_pairs(&errors, small).into_iter().collect();
        let b: BTreeSet<_> = close_error_pairs(&errors, large).into_iter().collect();
        prop_assert!(a.is_subset(&b));

        let runs: Vec<Run> = errors
            .iter()
            .zip(&configs)
            .map(|(&error, &(h, seed))| Run { error, h: h.to_string(), seed: u64::from(seed), value: 1.0 })
            .collect();
        let pairs: Vec<_> = b.iter().copied().collect();
        let (seed_pairs, inter_pairs) = split_pairs(&runs, &pairs);
        let duplicates = pairs
            .iter()
            .filter(|&&(r, s)| runs[r].h == runs[s].h && runs[r].seed == runs[s].seed)
            .count();
        prop_assert_eq!(seed_pairs.len() + inter_pairs.len() + duplicates, pairs.len());
    }
}

#[test]
fn perceptron_separates_wide_blobs() {
    let ds = synth_blobs(100, 2, 2, 6.0, 4).unwrap();
    // perceptron with a bias coordinate; it terminates only on separable data
    let mut w = [0.0f64; 3];
    let mut clean_pass = false;
    for _ in 0..10_000 {
        clean_pass = true;
        for i in 0..ds.len() {
            let x = ds.input(i);
            let y = if ds.labels[i] == 1 { 1.0 } else { -1.0 };
            if y * (w[0] * x[0] + w[1] * x[1] + w[2]) <= 0.0 {
                w[0] += y * x[0];
                w[1] += y * x[1];
                w[2] += y;
                clean_pass = false;
            }
        }
        if clean_pass {
            break;
        }
    }
    assert!(clean_pass, "no separating line found");
}

#[test]
fn uninformative_blobs_give_chance_error() {
    let all = synth_blobs(1200, 4, 3, 0.0, 9).unwrap();
    let (train_ds, test) = all.split(600).unwrap();
    let spec = NetSpec::relu(&[4, 16, 3], true);
    let mut h = Hyperparams::new("null", "fcn", Optimizer::Sgdm, 0.05, StopRule::MaxEpochs, train_ds.len());
    h.max_epochs = 30;
    h.batch_size = Some(50);
    let err = train(&spec, &train_ds, &test, &h, 2).unwrap().record.test_error.unwrap();
    assert!((err - 2.0 / 3.0).abs() < 0.06, "error {err}");
}

#[test]
fn training_on_blobs_interpolates() {
    let all = synth_blobs(300, 8, 4, 4.0, 3).unwrap();
    let (train_ds, test) = all.split(200).unwrap();
    let spec = NetSpec::relu(&[8, 32, 4], true);
    for opt in [Optimizer::Sgdm, Optimizer::Adam] {
        let lr = if opt == Optimizer::Adam { 0.01 } else { 0.05 };
        let h = Hyperparams::new("blobs", "fcn32", opt, lr, StopRule::TrainAcc100, train_ds.len());
        let a = train(&spec, &train_ds, &test, &h, 0).unwrap();
        let b = train(&spec, &train_ds, &test, &h, 1).unwrap();
        let t_int = a.record.t_int.expect("no interpolation");
        assert!(t_int <= 200, "{opt:?}: T_int {t_int}");
        assert!(a.trace.records.windows(2).all(|w| w[0].epoch < w[1].epoch));
        // seeds change the initialization but not H
        assert_eq!(a.record.h.hash(), b.record.h.hash());
        assert_ne!(a.checkpoint.init_weights, b.checkpoint.init_weights);
    }
}

#[test]
fn measures_ignore_hidden_unit_labels() {
    let (spec, ck, data) = trained_blobs_net();
    let mut shuffled = ck.clone();
    for (layer, order) in [(0usize, vec![3, 0, 11, 5, 1, 9, 2, 7, 4, 10, 6, 8]), (1, vec![7, 6, 5, 4, 0, 1, 2, 3])] {
        for (ws, bs) in [
            (&mut shuffled.weights, &mut shuffled.biases),
            (&mut shuffled.init_weights, &mut shuffled.init_biases),
        ] {
            ws[layer] = permute_rows(&ws[layer], &order);
            ws[layer + 1] = permute_cols(&ws[layer + 1], &order);
            bs[layer] = order.iter().map(|&u| bs[layer][u]).collect();
        }
    }
    assert_ne!(shuffled.weights, ck.weights);
    let cfg = MeasureConfig::default();
    let a = compute_all(&spec, &ck, &data, &cfg, 5).unwrap();
    let b = compute_all(&spec, &shuffled, &data, &cfg, 5).unwrap();
    assert_eq!(a.values.keys().collect::<Vec<_>>(), b.values.keys().collect::<Vec<_>>());
    for (name, x) in &a.values {
        match (x.value(), b.values[name].value()) {
            (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{name}: {x} vs {y}"),
            (x, y) => assert_eq!(x, y, "{name}"),
        }
    }
}

#[test]
fn sigma_search_saturates_on_huge_margins() {
    let spec = NetSpec::relu(&[2, 2], false);
    let w = Matrix::from_rows(&[vec![1e6, 0.0], vec![-1e6, 0.0]]);
    let ck = Checkpoint::from_parts(&spec, vec![w], vec![]).unwrap();
    let data = Dataset::inline(&[vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0, 1], 2).unwrap();
    let r = sigma_search(&spec, &ck, &data, Perturbation::Isotropic, &SigmaConfig::default(), 0).unwrap();
    assert_eq!(r.sigma, 10.0);
    assert!(r.converged);
}

#[test]
fn sigma_search_agrees_with_grid_scan() {
    let (spec, ck, data) = trained_blobs_net();
    let cfg = SigmaConfig::default();
    for mode in [Perturbation::Isotropic, Perturbation::Magnitude] {
        let r = sigma_search(&spec, &ck, &data, mode, &cfg, 11).unwrap();
        assert_eq!(r, sigma_search(&spec, &ck, &data, mode, &cfg, 11).unwrap());
        assert!(r.converged);
        assert!(r.drop <= cfg.target_dev && r.drop >= 0.8 * cfg.target_dev, "{mode:?}: drop {}", r.drop);

        // the same noise draws on a log grid: the first grid crossing of the
        // target must sit next to the bisection result
        let curve = DropCurve::new(&spec, &ck, &data, mode, &cfg, 11).unwrap();
        let steps = 400;
        let grid: Vec<f64> = (0..=steps)
            .map(|k| (cfg.lo.ln() + (cfg.hi / cfg.lo).ln() * k as f64 / steps as f64).exp())
            .collect();
        let ratio = grid[1] / grid[0];
        let first_over = grid.iter().position(|&s| curve.drop(s).unwrap() > cfg.target_dev).unwrap();
        let crossing = grid[first_over];
        assert!(
            r.sigma <= crossing * ratio && r.sigma >= crossing / ratio.powi(2),
            "{mode:?}: σ {} vs grid crossing {crossing}",
            r.sigma
        );
    }
}
