//! EEG conditioning: 50 Hz notch, 1-40 Hz band-pass, epoching from 0.5 s
//! before to 20 s after each onset, resampling to 120 Hz and removal of the
//! pre-stimulus segment.

pub mod filter;
pub mod resample;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RawRecording};
use crate::decoder::TrialSet;
use crate::error::{Error, Result};

pub use filter::{filtfilt, Biquad, FilterSpec};
pub use resample::{design_prototype, rate_factors, resample_poly};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub notch: FilterSpec,
    pub bandpass: FilterSpec,
    pub pre_s: f64,
    pub post_s: f64,
    pub target_rate_hz: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            notch: FilterSpec::Notch {
                freq_hz: 50.0,
                quality: 30.0,
            },
            bandpass: FilterSpec::Bandpass {
                low_hz: 1.0,
                high_hz: 40.0,
                order: 4,
            },
            pre_s: 0.5,
            post_s: 20.0,
            target_rate_hz: 120.0,
        }
    }
}

impl PreprocessConfig {
    pub fn pre_samples(&self, rate_hz: f64) -> usize {
        (self.pre_s * rate_hz).round() as usize
    }

    pub fn post_samples(&self, rate_hz: f64) -> usize {
        (self.post_s * rate_hz).round() as usize
    }
}

fn map_rows(data: &DMatrix<f64>, n_out: usize, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..data.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = data.row(i).iter().copied().collect();
            f(&row)
        })
        .collect();
    DMatrix::from_fn(data.nrows(), n_out, |i, j| rows[i][j])
}

/// Zero-phase filtering of every channel.
pub fn apply_filter(x: &RawRecording, spec: &FilterSpec) -> Result<RawRecording> {
    let sos = spec.design(x.rate_hz)?;
    let data = map_rows(&x.data, x.n_samples(), |row| filtfilt(&sos, row));
    Ok(x.with_data(data))
}

/// Cuts `[-pre, +post)` around every onset.
pub fn epoch_trials(x: &RawRecording, config: &PreprocessConfig) -> Result<Vec<DMatrix<f64>>> {
    let pre = config.pre_samples(x.rate_hz);
    let post = config.post_samples(x.rate_hz);
    x.onsets
        .iter()
        .map(|&onset| {
            if onset < pre || onset + post > x.n_samples() {
                return Err(Error::invalid(format!(
                    "onset {onset} leaves no room for {pre} pre- and {post} post-stimulus samples in {}",
                    x.n_samples()
                )));
            }
            Ok(x.data.columns(onset - pre, pre + post).into_owned())
        })
        .collect()
}

/// Resamples one epoch to the target rate and drops the pre-stimulus part.
pub fn resample_and_trim(epoch: &DMatrix<f64>, rate_hz: f64, config: &PreprocessConfig) -> Result<DMatrix<f64>> {
    let expected = config.pre_samples(rate_hz) + config.post_samples(rate_hz);
    if epoch.ncols() != expected {
        return Err(Error::dim(format!(
            "epoch has {} samples, expected {expected} at {rate_hz} Hz",
            epoch.ncols()
        )));
    }
    let (up, down) = rate_factors(rate_hz, config.target_rate_hz)?;
    let h = design_prototype(up, down);
    let n_out = (epoch.ncols() * up).div_ceil(down);
    let resampled = map_rows(epoch, n_out, |row| resample_poly(row, up, down, &h));
    let drop = config.pre_samples(config.target_rate_hz);
    let keep = config.post_samples(config.target_rate_hz);
    if drop + keep > resampled.ncols() {
        return Err(Error::dim(format!(
            "resampled epoch has {} samples, cannot keep {keep} after dropping {drop}",
            resampled.ncols()
        )));
    }
    Ok(resampled.columns(drop, keep).into_owned())
}

/// Full chain from a continuous recording to trials at the target rate.
pub fn preprocess_recording(raw: &RawRecording, config: &PreprocessConfig) -> Result<TrialSet> {
    raw.validate()?;
    let filtered = apply_filter(&apply_filter(raw, &config.notch)?, &config.bandpass)?;
    let trials = epoch_trials(&filtered, config)?
        .iter()
        .map(|e| resample_and_trim(e, raw.rate_hz, config))
        .collect::<Result<Vec<_>>>()?;
    TrialSet::new(
        trials,
        raw.labels.clone(),
        raw.conditions.clone(),
        raw.channel_names.clone(),
        config.target_rate_hz,
    )
}

/// As [`preprocess_recording`], keeping the recording's provenance.
pub fn preprocess_to_dataset(raw: &RawRecording, config: &PreprocessConfig) -> Result<Dataset> {
    let provenance = raw
        .provenance
        .clone()
        .ok_or_else(|| Error::invalid("recording carries no stimulus provenance"))?;
    Ok(Dataset {
        trials: preprocess_recording(raw, config)?,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::Condition;
    use std::f64::consts::PI;

    fn recording(data: DMatrix<f64>, onsets: Vec<usize>) -> RawRecording {
        let c = data.nrows();
        let n = onsets.len();
        RawRecording::new(
            data,
            512.0,
            onsets,
            vec![0; n],
            vec![Condition::Overt; n],
            (0..c).map(|i| format!("c{i}")).collect(),
        )
        .unwrap()
    }

    fn sine(freq: f64, n: usize, rate: f64) -> DMatrix<f64> {
        DMatrix::from_fn(1, n, |_, j| (2.0 * PI * freq * j as f64 / rate).sin())
    }

    #[test]
    fn epoch_bounds() {
        let cfg = PreprocessConfig::default();
        let raw = recording(DMatrix::from_fn(1, 20000, |_, j| j as f64), vec![5120]);
        let epochs = epoch_trials(&raw, &cfg).unwrap();
        assert_eq!(epochs.len(), 1);
        assert_eq!(epochs[0].ncols(), 10496);
        assert_eq!(epochs[0][(0, 0)], 4864.0);
        assert_eq!(epochs[0][(0, 10495)], 15359.0);

        let early = recording(DMatrix::zeros(1, 20000), vec![100]);
        assert!(epoch_trials(&early, &cfg).is_err());
        let late = recording(DMatrix::zeros(1, 12000), vec![5120]);
        assert!(epoch_trials(&late, &cfg).is_err());
        let none = recording(DMatrix::zeros(1, 100), vec![]);
        assert!(epoch_trials(&none, &cfg).unwrap().is_empty());
    }

    #[test]
    fn zero_in_zero_out() {
        let raw = recording(DMatrix::zeros(2, 4000), vec![]);
        for spec in [PreprocessConfig::default().notch, PreprocessConfig::default().bandpass] {
            let y = apply_filter(&raw, &spec).unwrap();
            assert!(y.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn trim_to_2400() {
        let cfg = PreprocessConfig::default();
        let epoch = DMatrix::from_element(3, 10496, 1.5);
        let out = resample_and_trim(&epoch, 512.0, &cfg).unwrap();
        assert_eq!(out.shape(), (3, 2400));
        assert!(out.iter().all(|v| (v - 1.5).abs() < 1e-12));
        assert!(resample_and_trim(&DMatrix::zeros(1, 10000), 512.0, &cfg).is_err());
    }

    #[test]
    fn thirty_hertz_survives_resampling() {
        let cfg = PreprocessConfig::default();
        let out = resample_and_trim(&sine(30.0, 10496, 512.0), 512.0, &cfg).unwrap();
        let mid: Vec<f64> = out.row(0).iter().skip(200).take(2000).copied().collect();
        let rms = (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt();
        let db = 20.0 * (rms * 2f64.sqrt()).log10();
        assert!(db.abs() < 1.0, "{db} dB");
    }

    #[test]
    fn output_has_target_rate() {
        let cfg = PreprocessConfig::default();
        let raw = recording(DMatrix::from_fn(2, 12000, |i, j| ((i + j) % 7) as f64), vec![300]);
        let ts = preprocess_recording(&raw, &cfg).unwrap();
        assert_eq!(ts.n_samples(), 2400);
        assert_eq!(ts.rate_hz, 120.0);
    }
}
