//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use std::f64::consts::PI;

use cvep::codes::BitSequence;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Whether each EEG sample falls in a lit frame, by direct lookup.
pub fn lit_samples(code: &BitSequence, n_samples: usize, samples_per_bit: usize) -> Vec<bool> {
    (0..n_samples)
        .map(|t| code.bits()[(t / samples_per_bit) % code.len()] == 1)
        .collect()
}

/// Sum of one transient per event, written sample by sample: the trial
/// response at 0 and a short or long flash response at the start of every
/// lit stretch, classified by how many lit samples it spans inside the trial.
pub fn direct_convolution(code: &BitSequence, n_samples: usize, samples_per_bit: usize, r: &[f64], l: usize) -> Vec<f64> {
    let lit = lit_samples(code, n_samples, samples_per_bit);
    let mut out = vec![0.0; n_samples];
    let mut add = |start: usize, event: usize| {
        for k in 0..l {
            if start + k < n_samples {
                out[start + k] += r[event * l + k];
            }
        }
    };
    add(0, 0);
    let mut t = 0;
    while t < n_samples {
        if lit[t] && (t == 0 || !lit[t - 1]) {
            let span = lit[t..].iter().take_while(|&&v| v).count();
            add(t, if span <= samples_per_bit { 1 } else { 2 });
            t += span;
        } else {
            t += 1;
        }
    }
    out
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn centred(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    c
}

/// Largest correlation between `x^T (cos θ, sin θ)` and any linear
/// combination of the rows of `y`, over `steps` angles in `[0, π)`. The inner
/// maximum is the multiple correlation of a least-squares regression.
pub fn grid_search_cca_c2(x: &DMatrix<f64>, y: &DMatrix<f64>, steps: usize) -> f64 {
    assert_eq!(x.nrows(), 2);
    let xc = centred(x);
    let yc = centred(y);
    let yyt = &yc * yc.transpose();
    let proj_x = {
        // x P x^T with P the projector onto the row space of y.
        let xyt = &xc * yc.transpose();
        let solve = yyt.clone().lu().solve(&xyt.transpose()).expect("y rows independent");
        &xyt * solve
    };
    let xxt = &xc * xc.transpose();
    let mut best = 0.0f64;
    for i in 0..steps {
        let theta = PI * i as f64 / steps as f64;
        let w = DVector::from_vec(vec![theta.cos(), theta.sin()]);
        let num = (w.transpose() * &proj_x * &w)[(0, 0)];
        let den = (w.transpose() * &xxt * &w)[(0, 0)];
        best = best.max((num / den).max(0.0).sqrt());
    }
    best
}

/// First canonical correlation by alternating least squares.
pub fn als_cca(x: &DMatrix<f64>, y: &DMatrix<f64>, iterations: usize, rng: &mut impl Rng) -> f64 {
    let xc = centred(x);
    let yc = centred(y);
    let xxt = (&xc * xc.transpose()).lu();
    let yyt = (&yc * yc.transpose()).lu();
    let mut wy = DVector::from_fn(y.nrows(), |_, _| rng.random_range(-1.0..1.0));
    let mut rho = 0.0;
    for _ in 0..iterations {
        let v = yc.transpose() * &wy;
        let wx = xxt.solve(&(&xc * &v)).expect("x rows independent");
        let u = xc.transpose() * &wx;
        wy = yyt.solve(&(&yc * &u)).expect("y rows independent");
        wy /= wy.norm();
        let v = yc.transpose() * &wy;
        rho = u.dot(&v) / (u.norm() * v.norm());
    }
    rho.abs()
}

/// Plain Pearson correlation.
pub fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Two-sided 95% binomial acceptance region for `n` fair trials, as
/// accuracies: the largest symmetric band whose tails each hold at most
/// 2.5% of the mass.
pub fn binomial_interval_95(n: usize) -> (f64, f64) {
    let pmf: Vec<f64> = (0..=n)
        .map(|k| {
            let ln = ln_choose(n, k) - n as f64 * 2f64.ln();
            ln.exp()
        })
        .collect();
    let mut lower = 0;
    let mut tail = 0.0;
    while tail + pmf[lower] <= 0.025 {
        tail += pmf[lower];
        lower += 1;
    }
    let upper = n - lower;
    (lower as f64 / n as f64, upper as f64 / n as f64)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Amplitude in dB of `y` relative to `x` from RMS over `range`.
pub fn gain_db(x: &[f64], y: &[f64], range: std::ops::Range<usize>) -> f64 {
    let rms = |v: &[f64]| (v[range.clone()].iter().map(|s| s * s).sum::<f64>() / range.len() as f64).sqrt();
    20.0 * (rms(y) / rms(x)).log10()
}
