//! Polyphase rational resampling with a Kaiser-windowed sinc prototype.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const KAISER_BETA: f64 = 5.0;
/// Prototype half-length in units of the larger rate factor.
const HALF_LEN_FACTOR: usize = 10;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reduced `(up, down)` factors for a rate change, which must be rational
/// in whole Hz.
pub fn rate_factors(from_hz: f64, to_hz: f64) -> Result<(usize, usize)> {
    let (f, t) = (from_hz.round(), to_hz.round());
    if f <= 0.0 || t <= 0.0 || (f - from_hz).abs() > 1e-9 || (t - to_hz).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "resampling {from_hz} Hz -> {to_hz} Hz needs positive integer rates"
        )));
    }
    let (f, t) = (f as usize, t as usize);
    let g = gcd(f, t);
    Ok((t / g, f / g))
}

/// Anti-alias prototype at the upsampled rate. Each polyphase branch is
/// normalised to unit sum, so constants pass through unchanged.
pub fn design_prototype(up: usize, down: usize) -> Vec<f64> {
    let max_rate = up.max(down);
    let half = HALF_LEN_FACTOR * max_rate;
    let n = 2 * half + 1;
    let cutoff = 1.0 / max_rate as f64; // fraction of the upsampled Nyquist
    let i0_beta = bessel_i0(KAISER_BETA);
    let mut h: Vec<f64> = (0..n)
        .map(|k| {
            let m = k as f64 - half as f64;
            let sinc = if m == 0.0 {
                cutoff
            } else {
                (PI * cutoff * m).sin() / (PI * m)
            };
            let r = 2.0 * k as f64 / (n - 1) as f64 - 1.0;
            let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            sinc * window
        })
        .collect();
    for phase in 0..up {
        let sum: f64 = h.iter().skip(phase).step_by(up).sum();
        for v in h.iter_mut().skip(phase).step_by(up) {
            *v /= sum;
        }
    }
    h
}

/// Resamples `x` by `up / down`. Output sample `m` is aligned with input
/// time `m * down / up`; the input is extended with its edge values.
/// Returns `ceil(len * up / down)` samples.
pub fn resample_poly(x: &[f64], up: usize, down: usize, h: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let half = (h.len() - 1) / 2;
    let n_in = x.len() as i64;
    let n_out = (x.len() * up).div_ceil(down);
    (0..n_out)
        .map(|m| {
            // Upsampled index of the output sample, shifted to the filter centre.
            let pos = (m * down + half) as i64;
            let first = (pos as usize) % up;
            let mut acc = 0.0;
            for k in (first..h.len()).step_by(up) {
                let n = (pos - k as i64) / up as i64;
                acc += h[k] * x[n.clamp(0, n_in - 1) as usize];
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_reduce() {
        assert_eq!(rate_factors(512.0, 120.0).unwrap(), (15, 64));
        assert_eq!(rate_factors(120.0, 120.0).unwrap(), (1, 1));
        assert!(rate_factors(512.5, 120.0).is_err());
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        // I0(1) = 1.2660658777520082
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-14);
    }

    #[test]
    fn output_length_is_ceiling() {
        let h = design_prototype(15, 64);
        assert_eq!(resample_poly(&vec![0.0; 10496], 15, 64, &h).len(), 2460);
        assert_eq!(resample_poly(&vec![0.0; 100], 15, 64, &h).len(), 24);
    }

    #[test]
    fn constant_is_preserved_exactly() {
        let h = design_prototype(15, 64);
        let y = resample_poly(&vec![2.5; 3000], 15, 64, &h);
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }
}
