//! Synthetic EEG from a known linear forward model.
//!
//! Each trial is `gain * scale * a(condition, side) s^T + noise`, where
//! `s = r_true^T M_cued` is the superposition of per-event transient
//! responses for the cued side's code. Only the cued side contributes
//! signal. Patterns are normalised to unit peak magnitude, and `scale` is
//! set so that on the overt peak channel the signal RMS equals
//! `snr * noise_std`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{BitSequence, CodePair};
use crate::dataset::{Dataset, Provenance, RawRecording};
use crate::decoder::TrialSet;
use crate::error::{Error, Result};
use crate::reconvolution::{derive_events, structure_for_code, N_EVENTS};
use crate::stimulus::{Condition, SessionPlan, Side, TrialSpec, TRIAL_DURATION_S};

pub const EEG_RATE_HZ: f64 = 120.0;
pub const RAW_RATE_HZ: f64 = 512.0;
pub const DEFAULT_NOISE_STD: f64 = 1e-5;
pub const DEFAULT_COVERT_GAIN: f64 = 0.4;
pub const DEFAULT_LATERALIZATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    White,
    Pink,
}

/// `amplitude * exp(-t / decay_s) * sin(2 pi freq_hz t + phase_rad)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedSinusoid {
    pub amplitude: f64,
    pub freq_hz: f64,
    pub decay_s: f64,
    pub phase_rad: f64,
}

impl DampedSinusoid {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (-t / self.decay_s).exp() * (2.0 * PI * self.freq_hz * t + self.phase_rad).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardModel {
    pub seed: u64,
    pub channel_names: Vec<String>,
    /// Overt spatial pattern (focal, occipital).
    pub a_true: Vec<f64>,
    /// Covert pattern shared by both sides.
    pub a_covert: Vec<f64>,
    /// Antisymmetric lateral component added with sign +1 for left cues and
    /// -1 for right cues, weighted by `lateralization`.
    pub a_lateral: Vec<f64>,
    /// Transient response of each event (onset, short, long).
    pub responses: [Vec<DampedSinusoid>; N_EVENTS],
    /// Modelled response duration in seconds.
    pub response_s: f64,
    pub snr: f64,
    pub noise_std: f64,
    pub noise_model: NoiseModel,
    #[serde(default = "unit_gain")]
    pub overt_gain: f64,
    pub covert_gain: f64,
    pub lateralization: Option<f64>,
}

fn unit_gain() -> f64 {
    1.0
}

fn channel_layout(c: usize) -> Vec<(f64, f64)> {
    let rows = (c as f64).sqrt().ceil() as usize;
    let cols = c.div_ceil(rows);
    let coord = |k: usize, n: usize| if n <= 1 { 0.0 } else { 2.0 * k as f64 / (n - 1) as f64 - 1.0 };
    (0..c)
        .map(|i| (coord(i % cols, cols), -coord(i / cols, rows)))
        .collect()
}

fn gaussian_bump(layout: &[(f64, f64)], cx: f64, cy: f64, width: f64) -> Vec<f64> {
    layout
        .iter()
        .map(|&(x, y)| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * width * width)).exp())
        .collect()
}

fn unit_peak(v: Vec<f64>) -> Vec<f64> {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x / peak).collect()
}

/// A seeded model with `n_channels` channels and responses of
/// `response_s` seconds.
pub fn default_forward_model(n_channels: usize, response_s: f64, rng_seed: u64) -> Result<ForwardModel> {
    if n_channels < 2 {
        return Err(Error::invalid(format!("need at least 2 channels, got {n_channels}")));
    }
    if !(response_s > 0.0) {
        return Err(Error::invalid(format!("response length {response_s} s must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let layout = channel_layout(n_channels);
    let jitter = |v: Vec<f64>, rng: &mut ChaCha8Rng| -> Vec<f64> {
        v.into_iter()
            .map(|x| x + 0.05 * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    // Overt: focal over the occipital pole (y = -1 is posterior).
    let a_true = unit_peak(jitter(gaussian_bump(&layout, 0.0, -0.9, 0.35), &mut rng));
    // Covert: broader and displaced; the lateral part flips with the cue.
    let a_covert = unit_peak(jitter(gaussian_bump(&layout, 0.0, -0.7, 0.6), &mut rng));
    let right = gaussian_bump(&layout, 0.55, -0.7, 0.3);
    let left = gaussian_bump(&layout, -0.55, -0.7, 0.3);
    let a_lateral = right.iter().zip(&left).map(|(r, l)| r - l).collect();

    let responses = std::array::from_fn(|_| {
        let n = rng.random_range(2..=3);
        (0..n)
            .map(|_| DampedSinusoid {
                amplitude: rng.random_range(0.5..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 },
                freq_hz: rng.random_range(5.0..15.0),
                decay_s: rng.random_range(0.05..0.15),
                phase_rad: rng.random_range(0.0..2.0 * PI),
            })
            .collect()
    });

    let channel_names = (1..=n_channels).map(|i| format!("E{i:02}")).collect();
    Ok(ForwardModel {
        seed: rng_seed,
        channel_names,
        a_true,
        a_covert,
        a_lateral,
        responses,
        response_s,
        snr: 1.0,
        noise_std: DEFAULT_NOISE_STD,
        noise_model: NoiseModel::White,
        overt_gain: 1.0,
        covert_gain: DEFAULT_COVERT_GAIN,
        lateralization: Some(DEFAULT_LATERALIZATION),
    })
}

impl ForwardModel {
    pub fn n_channels(&self) -> usize {
        self.a_true.len()
    }

    pub fn with_snr(mut self, snr: f64) -> Self {
        self.snr = snr;
        self
    }

    /// Response length in samples at `rate_hz`.
    pub fn response_len(&self, rate_hz: f64) -> usize {
        ((self.response_s * rate_hz).round() as usize).max(1)
    }

    /// Sampled responses stacked as `[onset; short; long]`, length `3 L`.
    pub fn r_true(&self, rate_hz: f64) -> DVector<f64> {
        let l = self.response_len(rate_hz);
        DVector::from_fn(N_EVENTS * l, |i, _| {
            let (e, k) = (i / l, i % l);
            let t = k as f64 / rate_hz;
            self.responses[e].iter().map(|d| d.eval(t)).sum()
        })
    }

    pub fn gain(&self, condition: Condition) -> f64 {
        match condition {
            Condition::Overt => self.overt_gain,
            Condition::Covert => self.covert_gain,
        }
    }

    /// Unit-peak spatial pattern for a cued side under a condition.
    pub fn pattern(&self, condition: Condition, side: Side) -> Vec<f64> {
        match condition {
            Condition::Overt => self.a_true.clone(),
            Condition::Covert => {
                let lat = self.lateralization.unwrap_or(0.0);
                let sign = if side == Side::Left { 1.0 } else { -1.0 };
                unit_peak(
                    self.a_covert
                        .iter()
                        .zip(&self.a_lateral)
                        .map(|(b, l)| b + sign * lat * l)
                        .collect(),
                )
            }
        }
    }

    pub fn peak_channel(&self) -> usize {
        self.a_true
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
            .0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr >= 0.0) {
            return Err(Error::invalid(format!("snr {} must be non-negative", self.snr)));
        }
        if !(self.overt_gain >= 0.0) || !(self.covert_gain >= 0.0) {
            return Err(Error::invalid("condition gains must be non-negative"));
        }
        if !(self.noise_std > 0.0) {
            return Err(Error::invalid("noise_std must be positive"));
        }
        if self.a_true.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("spatial pattern must be non-zero"));
        }
        let c = self.n_channels();
        if self.a_covert.len() != c || self.a_lateral.len() != c || self.channel_names.len() != c {
            return Err(Error::dim("forward model patterns disagree on the channel count"));
        }
        Ok(())
    }

    /// Signal scale and noise level. Infinite SNR switches the noise off and
    /// keeps the signal at unit-SNR amplitude.
    fn amplitudes(&self, reference: &DVector<f64>) -> (f64, f64) {
        let rms = (reference.norm_squared() / reference.len() as f64).sqrt();
        let peak = self.a_true[self.peak_channel()].abs();
        let unit = self.noise_std / (peak * rms);
        if self.snr.is_infinite() {
            (unit, 0.0)
        } else {
            (self.snr * unit, self.noise_std)
        }
    }
}

/// Draws a `channels × n` noise block with unit variance per sample.
fn noise_block(model: NoiseModel, channels: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(channels, n);
    match model {
        NoiseModel::White => {
            for j in 0..n {
                for i in 0..channels {
                    out[(i, j)] = rng.sample(StandardNormal);
                }
            }
        }
        NoiseModel::Pink => {
            // Parallel first-order low-pass stages approximate a 1/f slope.
            const POLES: [f64; 3] = [0.99, 0.9, 0.5];
            const GAINS: [f64; 3] = [0.05, 0.25, 0.7];
            let mut var = 0.0;
            for (gk, pk) in GAINS.iter().zip(POLES) {
                for (gl, pl) in GAINS.iter().zip(POLES) {
                    var += gk * gl / (1.0 - pk * pl);
                }
            }
            let norm = var.sqrt();
            let burn_in = 500;
            for i in 0..channels {
                let mut state = [0.0; 3];
                for j in 0..burn_in + n {
                    let e: f64 = rng.sample(StandardNormal);
                    let mut y = 0.0;
                    for k in 0..3 {
                        state[k] = POLES[k] * state[k] + e;
                        y += GAINS[k] * state[k];
                    }
                    if j >= burn_in {
                        out[(i, j - burn_in)] = y / norm;
                    }
                }
            }
        }
    }
    out
}

/// Signal templates `r_true^T M` of both codes at `rate_hz`.
struct SignalTemplates {
    signals: [DVector<f64>; 2],
    scale: f64,
    noise_std: f64,
}

impl SignalTemplates {
    fn new(fm: &ForwardModel, pair: &CodePair) -> Result<Self> {
        let l = fm.response_len(EEG_RATE_HZ);
        let r = fm.r_true(EEG_RATE_HZ);
        let duration = TRIAL_DURATION_S as f64;
        let left = structure_for_code(&pair.left, duration, EEG_RATE_HZ, l)?.template(&r)?;
        let right = structure_for_code(&pair.right, duration, EEG_RATE_HZ, l)?.template(&r)?;
        let (scale, noise_std) = fm.amplitudes(&left);
        Ok(Self {
            signals: [left, right],
            scale,
            noise_std,
        })
    }

    fn trial(&self, fm: &ForwardModel, trial: &TrialSpec, rng: &mut impl Rng) -> DMatrix<f64> {
        let side = trial.cued_side;
        let s = &self.signals[side.label() as usize];
        let a = DVector::from_vec(fm.pattern(trial.condition, side));
        let gain = fm.gain(trial.condition) * self.scale;
        let mut x = a * s.transpose() * gain;
        // Noise is drawn even when off so seeded streams stay aligned.
        let noise = noise_block(fm.noise_model, fm.n_channels(), s.len(), rng);
        x += noise * self.noise_std;
        x
    }
}

/// One `C × 2400` trial at 120 Hz.
pub fn simulate_trial(fm: &ForwardModel, trial: &TrialSpec, pair: &CodePair, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    fm.validate()?;
    Ok(SignalTemplates::new(fm, pair)?.trial(fm, trial, rng))
}

/// Per-trial stream so trials can be simulated independently.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn quantise(mut x: DMatrix<f64>) -> DMatrix<f64> {
    x.apply(|v| *v = *v as f32 as f64);
    x
}

/// Simulates every trial of `plan` in chronological order. Values are
/// rounded to `f32` so the dataset round-trips through its binary file.
pub fn simulate_dataset(plan: &SessionPlan, fm: &ForwardModel, pair: &CodePair, seed: u64) -> Result<Dataset> {
    fm.validate()?;
    plan.validate()?;
    let templates = SignalTemplates::new(fm, pair)?;
    let specs: Vec<&TrialSpec> = plan.trials().collect();
    let trials: Vec<DMatrix<f64>> = specs
        .par_iter()
        .enumerate()
        .map(|(j, spec)| quantise(templates.trial(fm, spec, &mut trial_rng(seed, j))))
        .collect();
    let trial_set = TrialSet::new(
        trials,
        specs.iter().map(|t| t.label()).collect(),
        specs.iter().map(|t| t.condition).collect(),
        fm.channel_names.clone(),
        EEG_RATE_HZ,
    )?;
    Ok(Dataset {
        trials: trial_set,
        provenance: Provenance {
            codes: pair.clone(),
            duration_s: TRIAL_DURATION_S as f64,
            simulation_seed: seed,
            plan_seed: Some(plan.rng_seed),
            forward_model: Some(fm.clone()),
        },
    })
}

/// Continuous 512 Hz recording of the given trials for exercising the
/// preprocessing chain: trials are separated by `gap_s` seconds, responses
/// are evaluated in continuous time at each flash onset and a 50 Hz line
/// component of amplitude `line_noise` (relative to `noise_std`) is added.
pub fn simulate_raw(
    fm: &ForwardModel,
    trials: &[TrialSpec],
    pair: &CodePair,
    gap_s: f64,
    line_noise: f64,
    seed: u64,
) -> Result<RawRecording> {
    fm.validate()?;
    let rate = RAW_RATE_HZ;
    let duration = TRIAL_DURATION_S as f64;
    let trial_n = (duration * rate) as usize;
    let gap_n = (gap_s * rate).round() as usize;
    let n = gap_n + trials.len() * (trial_n + gap_n);
    let c = fm.n_channels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Same amplitude calibration as the 120 Hz path.
    let templates = SignalTemplates::new(fm, pair)?;
    let resp_n = (fm.response_s * rate).ceil() as usize;

    let onset_times = |code: &BitSequence| -> Result<[Vec<f64>; N_EVENTS]> {
        let ev = derive_events(code, duration, code.rate_hz())?;
        Ok(std::array::from_fn(|e| {
            ev.row(e)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1)
                .map(|(i, _)| i as f64 / code.rate_hz())
                .collect()
        }))
    };
    let events = [onset_times(&pair.left)?, onset_times(&pair.right)?];

    let mut data = noise_block(fm.noise_model, c, n, &mut rng) * templates.noise_std;
    let line_amp = line_noise * fm.noise_std;
    let phases: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    for j in 0..n {
        let t = j as f64 / rate;
        for (i, ph) in phases.iter().enumerate() {
            data[(i, j)] += line_amp * (2.0 * PI * 50.0 * t + ph).sin();
        }
    }

    let mut onsets = Vec::with_capacity(trials.len());
    for (k, trial) in trials.iter().enumerate() {
        let onset = gap_n + k * (trial_n + gap_n);
        onsets.push(onset);
        let side = trial.cued_side;
        let mut s = vec![0.0; trial_n + resp_n];
        for (e, times) in events[side.label() as usize].iter().enumerate() {
            for &te in times {
                let first = (te * rate).ceil() as usize;
                for idx in first..(first + resp_n).min(s.len()) {
                    let lag = idx as f64 / rate - te;
                    if lag < fm.response_s {
                        s[idx] += fm.responses[e].iter().map(|d| d.eval(lag)).sum::<f64>();
                    }
                }
            }
        }
        let a = fm.pattern(trial.condition, side);
        let gain = fm.gain(trial.condition) * templates.scale;
        for (idx, v) in s.iter().enumerate() {
            let col = onset + idx;
            if col >= n {
                break;
            }
            for (i, ai) in a.iter().enumerate() {
                data[(i, col)] += gain * ai * v;
            }
        }
    }
    let data = quantise(data);
    let mut raw = RawRecording::new(
        data,
        rate,
        onsets,
        trials.iter().map(|t| t.label()).collect(),
        trials.iter().map(|t| t.condition).collect(),
        fm.channel_names.clone(),
    )?;
    raw.provenance = Some(Provenance {
        codes: pair.clone(),
        duration_s: duration,
        simulation_seed: seed,
        plan_seed: None,
        forward_model: Some(fm.clone()),
    });
    Ok(raw)
}
