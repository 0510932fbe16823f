//! IIR design as second-order sections and zero-phase application.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One biquad, `a0` normalised to 1, run in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Poles inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        let [a1, a2] = self.a;
        a2.abs() < 1.0 && a1.abs() < 1.0 + a2
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes the section's output constant for a unit step.
    fn step_state(&self) -> [f64; 2] {
        let [_, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let k = self.dc_gain();
        [b1 + b2 - (a1 + a2) * k, b2 - a2 * k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    /// Second-order notch (RBJ cookbook) with quality factor `quality`.
    Notch { freq_hz: f64, quality: f64 },
    /// Butterworth high-pass at `low_hz` cascaded with a Butterworth
    /// low-pass at `high_hz`, each of `order`.
    Bandpass { low_hz: f64, high_hz: f64, order: usize },
}

pub const NOTCH_DESIGN: &str = "rbj-biquad-notch";
pub const BANDPASS_DESIGN: &str = "butterworth-bilinear";

impl FilterSpec {
    pub fn family(&self) -> &'static str {
        match self {
            FilterSpec::Notch { .. } => NOTCH_DESIGN,
            FilterSpec::Bandpass { .. } => BANDPASS_DESIGN,
        }
    }

    pub fn validate(&self, rate_hz: f64) -> Result<()> {
        let nyquist = rate_hz / 2.0;
        let in_band = |f: f64| f > 0.0 && f < nyquist;
        match *self {
            FilterSpec::Notch { freq_hz, quality } => {
                if !in_band(freq_hz) {
                    return Err(Error::invalid(format!("notch at {freq_hz} Hz outside (0, {nyquist})")));
                }
                if !(quality > 0.0) {
                    return Err(Error::invalid(format!("notch quality {quality} must be positive")));
                }
            }
            FilterSpec::Bandpass { low_hz, high_hz, order } => {
                if !in_band(low_hz) || !in_band(high_hz) || low_hz >= high_hz {
                    return Err(Error::invalid(format!(
                        "passband {low_hz}-{high_hz} Hz invalid below Nyquist {nyquist}"
                    )));
                }
                if order == 0 {
                    return Err(Error::invalid("filter order must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// Second-order sections at `rate_hz`.
    pub fn design(&self, rate_hz: f64) -> Result<Vec<Biquad>> {
        self.validate(rate_hz)?;
        let sos = match *self {
            FilterSpec::Notch { freq_hz, quality } => vec![notch(freq_hz, quality, rate_hz)],
            FilterSpec::Bandpass { low_hz, high_hz, order } => {
                let mut sos = butterworth(order, low_hz, rate_hz, Band::High);
                sos.extend(butterworth(order, high_hz, rate_hz, Band::Low));
                sos
            }
        };
        if let Some(s) = sos.iter().find(|s| !s.is_stable()) {
            return Err(Error::UnstableFilter(format!("section {s:?} has poles outside the unit circle")));
        }
        Ok(sos)
    }
}

fn notch(freq_hz: f64, quality: f64, rate_hz: f64) -> Biquad {
    let w0 = 2.0 * PI * freq_hz / rate_hz;
    let alpha = w0.sin() / (2.0 * quality);
    let a0 = 1.0 + alpha;
    let c = -2.0 * w0.cos();
    Biquad {
        b: [1.0 / a0, c / a0, 1.0 / a0],
        a: [c / a0, (1.0 - alpha) / a0],
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Band {
    Low,
    High,
}

/// Butterworth sections via the bilinear transform with pre-warping.
fn butterworth(order: usize, cutoff_hz: f64, rate_hz: f64, band: Band) -> Vec<Biquad> {
    let k = (PI * cutoff_hz / rate_hz).tan();
    let mut sos = Vec::with_capacity(order.div_ceil(2));
    for i in 0..order / 2 {
        let q = 1.0 / (2.0 * ((2 * i + 1) as f64 * PI / (2 * order) as f64).sin());
        let norm = 1.0 / (1.0 + k / q + k * k);
        let a = [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm];
        let b = match band {
            Band::Low => {
                let b0 = k * k * norm;
                [b0, 2.0 * b0, b0]
            }
            Band::High => [norm, -2.0 * norm, norm],
        };
        sos.push(Biquad { b, a });
    }
    if order % 2 == 1 {
        let a1 = (k - 1.0) / (k + 1.0);
        let b = match band {
            Band::Low => [k / (1.0 + k), k / (1.0 + k), 0.0],
            Band::High => [1.0 / (1.0 + k), -1.0 / (1.0 + k), 0.0],
        };
        sos.push(Biquad { b, a: [a1, 0.0] });
    }
    sos
}

/// Runs the cascade over `x` starting from per-section states `zi`.
fn sosfilt(sos: &[Biquad], x: &mut [f64], mut zi: Vec<[f64; 2]>) {
    for (s, z) in sos.iter().zip(zi.iter_mut()) {
        let [b0, b1, b2] = s.b;
        let [a1, a2] = s.a;
        for v in x.iter_mut() {
            let y = b0 * *v + z[0];
            z[0] = b1 * *v - a1 * y + z[1];
            z[1] = b2 * *v - a2 * y;
            *v = y;
        }
    }
}

/// Initial states for a cascade at steady state under a unit step.
fn sosfilt_zi(sos: &[Biquad]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sos.iter()
        .map(|s| {
            let z = s.step_state();
            let out = [z[0] * scale, z[1] * scale];
            scale *= s.dc_gain();
            out
        })
        .collect()
}

/// Forward-backward filtering with odd extension at both ends and
/// steady-state initial conditions. Output length equals input length.
pub fn filtfilt(sos: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 || sos.is_empty() {
        return x.to_vec();
    }
    let pad = (3 * (2 * sos.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = sosfilt_zi(sos);
    let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();

    let first = ext[0];
    sosfilt(sos, &mut ext, scaled(first));
    ext.reverse();
    let first = ext[0];
    sosfilt(sos, &mut ext, scaled(first));
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Magnitude response of a cascade at `freq_hz`.
pub fn magnitude_response(sos: &[Biquad], freq_hz: f64, rate_hz: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / rate_hz;
    let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
    sos.iter()
        .map(|s| {
            let num_re = s.b[0] + s.b[1] * c1 + s.b[2] * c2;
            let num_im = -(s.b[1] * s1 + s.b[2] * s2);
            let den_re = 1.0 + s.a[0] * c1 + s.a[1] * c2;
            let den_im = -(s.a[0] * s1 + s.a[1] * s2);
            (num_re.hypot(num_im)) / (den_re.hypot(den_im))
        })
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn butterworth_half_power_at_cutoff() {
        let lp = butterworth(4, 40.0, 512.0, Band::Low);
        assert!((magnitude_response(&lp, 40.0, 512.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((magnitude_response(&lp, 0.0, 512.0) - 1.0).abs() < 1e-12);
        let hp = butterworth(3, 1.0, 512.0, Band::High);
        assert!((magnitude_response(&hp, 1.0, 512.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!(magnitude_response(&hp, 0.0, 512.0) < 1e-12);
    }

    #[test]
    fn notch_zero_at_centre() {
        let n = notch(50.0, 30.0, 512.0);
        assert!(magnitude_response(&[n], 50.0, 512.0) < 1e-12);
        assert!((magnitude_response(&[n], 10.0, 512.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cutoffs_above_nyquist_rejected() {
        let spec = FilterSpec::Bandpass { low_hz: 1.0, high_hz: 300.0, order: 4 };
        assert!(spec.design(512.0).is_err());
        let spec = FilterSpec::Notch { freq_hz: 50.0, quality: 0.0 };
        assert!(spec.design(512.0).is_err());
    }

    #[test]
    fn unstable_section_detected() {
        assert!(!Biquad { b: [1.0, 0.0, 0.0], a: [0.0, 1.5] }.is_stable());
        assert!(Biquad { b: [1.0, 0.0, 0.0], a: [-1.2, 0.5] }.is_stable());
    }

    #[test]
    fn steady_state_start_has_no_step_transient() {
        let sos = FilterSpec::Bandpass { low_hz: 1.0, high_hz: 40.0, order: 4 }.design(512.0).unwrap();
        let mut x = vec![3.0; 200];
        sosfilt(&sos, &mut x, sosfilt_zi(&sos).iter().map(|z| [z[0] * 3.0, z[1] * 3.0]).collect());
        assert!(x.iter().all(|v| v.abs() < 1e-9));
    }
}
