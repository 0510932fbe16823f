mod common;

use common::{corr, random_matrix};
use cvep::codes::default_code_pair;
use cvep::decoder::*;
use cvep::simulator::{default_forward_model, simulate_trial, trial_rng};
use cvep::stimulus::{make_trial_spec, Condition, Side};
use cvep::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const L: usize = 36;

fn structures(l: usize) -> StructurePair {
    StructurePair::new(&default_code_pair().unwrap(), 20.0, 120.0, l).unwrap()
}

/// Trials `a (r^T M_y) + noise * N(0, 1)` with alternating labels.
fn synthetic(
    rng: &mut ChaCha8Rng,
    a: &DVector<f64>,
    r: &DVector<f64>,
    n_trials: usize,
    noise: f64,
) -> TrialSet {
    let sp = structures(r.len() / 3);
    let c = a.len();
    let mut trials = Vec::new();
    let mut labels = Vec::new();
    for j in 0..n_trials {
        let y = (j % 2) as u8;
        let s = sp.structure(y).template(r).unwrap();
        let mut x = a * s.transpose();
        if noise > 0.0 {
            x += DMatrix::from_fn(c, s.len(), |_, _| noise * rng.sample::<f64, _>(StandardNormal));
        }
        trials.push(x);
        labels.push(y);
    }
    TrialSet::new(
        trials,
        labels,
        vec![Condition::Overt; n_trials],
        (0..c).map(|i| format!("ch{i}")).collect(),
        120.0,
    )
    .unwrap()
}

fn random_truth(rng: &mut ChaCha8Rng, c: usize) -> (DVector<f64>, DVector<f64>) {
    let a = DVector::from_fn(c, |_, _| rng.random_range(-1.0..1.0));
    let r = DVector::from_fn(3 * L, |_, _| rng.random_range(-1.0..1.0));
    (a, r)
}

fn labels(model: &DecoderModel, set: &TrialSet) -> Vec<u8> {
    set.trials.iter().map(|x| predict_side(model, x).unwrap().label).collect()
}

#[test]
fn noise_free_recovery_of_filter_response_and_pattern() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, r) = random_truth(&mut rng, 8);
    let train = synthetic(&mut rng, &a, &r, 10, 0.0);
    let model = fit_reconvolution_cca(&train, &structures(L), 1e-9).unwrap();
    assert!(corr(model.r.as_slice(), r.as_slice()).abs() >= 0.99);
    assert!(model.rho_train >= 0.999, "rho {}", model.rho_train);
    let pattern = spatial_pattern(&model, &train).unwrap();
    assert!(corr(pattern.a.as_slice(), a.as_slice()).abs() >= 0.99);
}

#[test]
fn sign_convention_and_correlation_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (a, r) = random_truth(&mut rng, 5);
    let train = synthetic(&mut rng, &a, &r, 8, 5.0);
    let model = fit_reconvolution_cca(&train, &structures(L), 1e-9).unwrap();
    let peak = model.r.iter().fold(0.0f64, |m, &v| if v.abs() > m.abs() { v } else { m });
    assert!(peak > 0.0);
    assert!((0.0..=1.0).contains(&model.rho_train));
    assert!(model.w.norm() > 0.0 && model.r.norm() > 0.0);
}

#[test]
fn channel_mixing_leaves_fit_and_predictions_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a, r) = random_truth(&mut rng, 6);
    let train = synthetic(&mut rng, &a, &r, 12, 3.0);
    let test = synthetic(&mut rng, &a, &r, 10, 3.0);
    let g = random_matrix(&mut rng, 6, 6) + DMatrix::identity(6, 6) * 2.0;
    let mix = |set: &TrialSet| {
        let mut out = set.clone();
        for t in &mut out.trials {
            *t = &g * &*t;
        }
        out
    };
    let sp = structures(L);
    let base = fit_reconvolution_cca(&train, &sp, 1e-9).unwrap();
    let mixed = fit_reconvolution_cca(&mix(&train), &sp, 1e-9).unwrap();
    assert!(
        (base.rho_train - mixed.rho_train).abs() < 1e-9,
        "{} vs {}",
        base.rho_train,
        mixed.rho_train
    );
    assert_eq!(labels(&base, &test), labels(&mixed, &mix(&test)));
}

#[test]
fn swapping_templates_flips_every_prediction() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (a, r) = random_truth(&mut rng, 4);
    let train = synthetic(&mut rng, &a, &r, 10, 20.0);
    let test = synthetic(&mut rng, &a, &r, 20, 20.0);
    let model = fit_reconvolution_cca(&train, &structures(L), 1e-9).unwrap();
    let swapped = model.with_swapped_classes().unwrap();
    for x in &test.trials {
        let p = predict_side(&model, x).unwrap();
        let q = predict_side(&swapped, x).unwrap();
        assert_eq!(q.scores, [p.scores[1], p.scores[0]]);
        if p.scores[0] != p.scores[1] {
            assert_eq!(q.label, 1 - p.label);
        }
    }
}

#[test]
fn positive_rescaling_keeps_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (a, r) = random_truth(&mut rng, 4);
    let train = synthetic(&mut rng, &a, &r, 10, 30.0);
    let test = synthetic(&mut rng, &a, &r, 20, 30.0);
    let model = fit_reconvolution_cca(&train, &structures(L), 1e-9).unwrap();
    let expected = labels(&model, &test);

    assert_eq!(labels(&model, &test.scaled(3.5)), expected);
    let rescaled = DecoderModel::from_parts(
        &model.w * 2.0,
        &model.r * 0.25,
        model.structures().clone(),
        model.ridge,
        model.rho_train,
        model.channel_names.clone(),
    )
    .unwrap();
    assert_eq!(labels(&rescaled, &test), expected);
}

#[test]
fn doubling_data_quadruples_pattern_and_keeps_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (a, r) = random_truth(&mut rng, 5);
    let train = synthetic(&mut rng, &a, &r, 10, 10.0);
    let test = synthetic(&mut rng, &a, &r, 10, 10.0);
    let sp = structures(L);
    let model = fit_reconvolution_cca(&train, &sp, 1e-9).unwrap();
    let p1 = spatial_pattern(&model, &train).unwrap();
    let p2 = spatial_pattern(&model, &train.scaled(2.0)).unwrap();
    assert!((&p2.a - &p1.a * 4.0).norm() <= 1e-9 * p2.a.norm());

    let refit = fit_reconvolution_cca(&train.scaled(2.0), &sp, 1e-9).unwrap();
    assert_eq!(labels(&refit, &test.scaled(2.0)), labels(&model, &test));
}

#[test]
fn exact_template_match_scores_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (a, r) = random_truth(&mut rng, 4);
    let train = synthetic(&mut rng, &a, &r, 6, 1.0);
    let model = fit_reconvolution_cca(&train, &structures(L), 1e-9).unwrap();
    let w = &model.w;
    let x = w / w.norm_squared() * model.template(1).transpose();
    let p = predict_side(&model, &x).unwrap();
    assert_eq!(p.label, 1);
    assert!((p.scores[1] - 1.0).abs() < 1e-12);

    let noise = DMatrix::from_fn(4, 2400, |_, _| rng.sample::<f64, _>(StandardNormal));
    let p = predict_side(&model, &noise).unwrap();
    assert!(p.scores.iter().all(|s| s.abs() < 0.2));
    assert!(matches!(predict_side(&model, &DMatrix::zeros(3, 2400)), Err(Error::Dimension(_))));
}

#[test]
fn fit_is_deterministic_and_serialises_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (a, r) = random_truth(&mut rng, 4);
    let train = synthetic(&mut rng, &a, &r, 8, 2.0);
    let sp = structures(L);
    let m1 = fit_reconvolution_cca(&train, &sp, 1e-9).unwrap();
    let m2 = fit_reconvolution_cca(&train, &sp, 1e-9).unwrap();
    assert_eq!(m1.w, m2.w);
    assert_eq!(m1.r, m2.r);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    m1.save(&path).unwrap();
    let back = DecoderModel::load(&path).unwrap();
    assert_eq!(back.w, m1.w);
    assert_eq!(back.r, m1.r);
    assert_eq!(back.rho_train, m1.rho_train);
    assert_eq!(back.template(0), m1.template(0));
    assert_eq!(back.template(1), m1.template(1));
}

#[test]
fn rank_deficient_data_without_ridge_is_singular() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (a, r) = random_truth(&mut rng, 3);
    let mut train = synthetic(&mut rng, &a, &r, 6, 1.0);
    for t in &mut train.trials {
        let row = t.row(0).into_owned();
        t.set_row(2, &row);
    }
    let err = fit_reconvolution_cca(&train, &structures(L), 0.0).unwrap_err();
    assert!(matches!(err, Error::Singular(_)), "{err}");
}

#[test]
fn mismatched_lengths_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (a, r) = random_truth(&mut rng, 3);
    let train = synthetic(&mut rng, &a, &r, 4, 1.0);
    let short = StructurePair::new(&default_code_pair().unwrap(), 10.0, 120.0, L).unwrap();
    assert!(fit_reconvolution_cca(&train, &short, 1e-9).is_err());
}

#[test]
fn simulated_overt_pattern_matches_ground_truth() {
    let pair = default_code_pair().unwrap();
    let fm = default_forward_model(16, 0.3, 11).unwrap().with_snr(0.5);
    let mut trials = Vec::new();
    let mut labels = Vec::new();
    for j in 0..20 {
        let side = if j % 2 == 0 { Side::Left } else { Side::Right };
        let spec = make_trial_spec(j as u64, side, Condition::Overt).unwrap();
        trials.push(simulate_trial(&fm, &spec, &pair, &mut trial_rng(12, j)).unwrap());
        labels.push(side.label());
    }
    let train = TrialSet::new(trials, labels, vec![Condition::Overt; 20], fm.channel_names.clone(), 120.0).unwrap();
    let sp = StructurePair::new(&pair, 20.0, 120.0, L).unwrap();
    let model = fit_reconvolution_cca(&train, &sp, 1e-9).unwrap();
    let pattern = spatial_pattern(&model, &train).unwrap();
    let ca = corr(pattern.a.as_slice(), &fm.a_true);
    let cr = corr(model.r.as_slice(), fm.r_true(120.0).as_slice());
    // canonical weights are defined up to a joint sign
    assert!(ca.abs() >= 0.95, "corr(a, a_true) {ca}");
    assert!(ca * cr > 0.0);
}
