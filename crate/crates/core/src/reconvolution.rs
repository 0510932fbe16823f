//! Event time-series and lag-expanded structure matrices.
//!
//! A trial is modelled as a superposition of transient responses to three
//! events: the trial onset, short flashes (a single lit frame) and long
//! flashes (two lit frames). Each event is stamped at the first EEG sample
//! of its flash.

use nalgebra::{DMatrix, DVector};

use crate::codes::BitSequence;
use crate::error::{Error, Result};

pub const N_EVENTS: usize = 3;
pub const EVENT_NAMES: [&str; N_EVENTS] = ["trial_onset", "short_flash", "long_flash"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    TrialOnset = 0,
    ShortFlash = 1,
    LongFlash = 2,
}

/// Binary onset series, one row per event type.
#[derive(Debug, Clone, PartialEq)]
pub struct EventMatrix {
    rows: [Vec<u8>; N_EVENTS],
    rate_hz: f64,
    code_name: String,
}

impl EventMatrix {
    pub fn row(&self, event: usize) -> &[u8] {
        &self.rows[event]
    }

    pub fn n_samples(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn code_name(&self) -> &str {
        &self.code_name
    }

    /// Onset columns of `event`.
    pub fn onsets(&self, event: Event) -> Vec<usize> {
        self.rows[event as usize]
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Tiles `code` cyclically over `duration_s` and stamps short/long flash
/// onsets at `eeg_rate_hz`.
pub fn derive_events(code: &BitSequence, duration_s: f64, eeg_rate_hz: f64) -> Result<EventMatrix> {
    let ratio = eeg_rate_hz / code.rate_hz();
    let samples_per_bit = ratio.round() as usize;
    if samples_per_bit == 0 || (ratio - samples_per_bit as f64).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "EEG rate {eeg_rate_hz} Hz is not an integer multiple of the code rate {} Hz",
            code.rate_hz()
        )));
    }
    let n_samples = (duration_s * eeg_rate_hz).round() as usize;
    if !(duration_s > 0.0) || n_samples == 0 {
        return Err(Error::invalid(format!("trial duration {duration_s} s is empty")));
    }
    if code.max_cyclic_run_of_ones() > 2 {
        return Err(Error::invalid(format!(
            "code {} contains a flash longer than two frames",
            code.name()
        )));
    }

    let n_bits = n_samples.div_ceil(samples_per_bit);
    let period = code.len();
    let stream: Vec<u8> = (0..n_bits).map(|i| code.bits()[i % period]).collect();

    let mut rows = [vec![0u8; n_samples], vec![0u8; n_samples], vec![0u8; n_samples]];
    rows[Event::TrialOnset as usize][0] = 1;
    let mut i = 0;
    while i < n_bits {
        if stream[i] == 0 {
            i += 1;
            continue;
        }
        let run = stream[i..].iter().take_while(|&&b| b == 1).count();
        let event = match run {
            1 => Event::ShortFlash,
            2 => Event::LongFlash,
            _ => unreachable!("runs are bounded by the cyclic check"),
        };
        rows[event as usize][i * samples_per_bit] = 1;
        i += run;
    }
    Ok(EventMatrix {
        rows,
        rate_hz: eeg_rate_hz,
        code_name: code.name().to_string(),
    })
}

/// Lag-expanded event matrix: row `e * L + l` is event row `e` delayed by
/// `l` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMatrix {
    data: DMatrix<f64>,
    response_len: usize,
    rate_hz: f64,
    code_name: String,
}

impl StructureMatrix {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Modelled response length `L` in samples.
    pub fn response_len(&self) -> usize {
        self.response_len
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn code_name(&self) -> &str {
        &self.code_name
    }

    /// Predicted response `r^T M` for a response vector of length `3 L`.
    pub fn template(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        if r.len() != self.n_rows() {
            return Err(Error::dim(format!(
                "response vector has {} entries, structure matrix {} rows",
                r.len(),
                self.n_rows()
            )));
        }
        Ok(self.data.tr_mul(r))
    }

    /// Renders the matrix as CSV, one row per lagged event.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (e, name) in EVENT_NAMES.iter().enumerate() {
            for lag in 0..self.response_len {
                let row = self.data.row(e * self.response_len + lag);
                out.push_str(&format!("{name}_lag{lag}"));
                for v in row.iter() {
                    out.push(',');
                    out.push(if *v != 0.0 { '1' } else { '0' });
                }
                out.push('\n');
            }
        }
        out
    }
}

pub fn build_structure_matrix(events: &EventMatrix, response_len: usize) -> Result<StructureMatrix> {
    let t = events.n_samples();
    if response_len == 0 || response_len > t {
        return Err(Error::invalid(format!(
            "response length {response_len} outside 1..={t} samples"
        )));
    }
    let mut data = DMatrix::zeros(N_EVENTS * response_len, t);
    for e in 0..N_EVENTS {
        for onset in events.row(e).iter().enumerate().filter(|(_, &v)| v == 1).map(|(i, _)| i) {
            for lag in 0..response_len.min(t - onset) {
                data[(e * response_len + lag, onset + lag)] = 1.0;
            }
        }
    }
    Ok(StructureMatrix {
        data,
        response_len,
        rate_hz: events.rate_hz(),
        code_name: events.code_name().to_string(),
    })
}

/// Convenience: events and structure matrix for one code.
pub fn structure_for_code(
    code: &BitSequence,
    duration_s: f64,
    eeg_rate_hz: f64,
    response_len: usize,
) -> Result<StructureMatrix> {
    build_structure_matrix(&derive_events(code, duration_s, eeg_rate_hz)?, response_len)
}

/// Events rendered as CSV with one row per event type.
pub fn events_to_csv(events: &EventMatrix) -> String {
    let mut out = String::new();
    for (e, name) in EVENT_NAMES.iter().enumerate() {
        out.push_str(name);
        for v in events.row(e) {
            out.push(',');
            out.push(if *v == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}
