//! Reconvolution CCA decoder.
//!
//! Training concatenates the trials into `S` (C × JT) and the structure
//! matrices of their labels into `D` (3L × JT), centres every row and takes
//! the first canonical pair: a spatial filter `w` and a response vector
//! `r`. A trial is classified by correlating `w^T X` with each template
//! `r^T M_i`.
//!
//! The scatter matrices are accumulated per class instead of materialising
//! `S` and `D`: `S D^T = sum_c (sum_{j in c} X_j) M_c^T`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cca::{cca_from_covariances, Covariances};
use crate::codes::{BitSequence, CodePair};
use crate::error::{Error, Result};
use crate::reconvolution::{structure_for_code, StructureMatrix, N_EVENTS};
use crate::stimulus::Condition;

/// Labelled single-trial recordings, each `C × T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub trials: Vec<DMatrix<f64>>,
    pub labels: Vec<u8>,
    pub conditions: Vec<Condition>,
    pub channel_names: Vec<String>,
    pub rate_hz: f64,
}

impl TrialSet {
    pub fn new(
        trials: Vec<DMatrix<f64>>,
        labels: Vec<u8>,
        conditions: Vec<Condition>,
        channel_names: Vec<String>,
        rate_hz: f64,
    ) -> Result<Self> {
        let set = Self {
            trials,
            labels,
            conditions,
            channel_names,
            rate_hz,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.trials.len() || self.conditions.len() != self.trials.len() {
            return Err(Error::dim(format!(
                "{} trials, {} labels, {} conditions",
                self.trials.len(),
                self.labels.len(),
                self.conditions.len()
            )));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("label {l} is not 0 or 1")));
        }
        if let Some(first) = self.trials.first() {
            if first.nrows() != self.channel_names.len() {
                return Err(Error::dim(format!(
                    "{} channel names for {} channels",
                    self.channel_names.len(),
                    first.nrows()
                )));
            }
            if let Some((j, t)) = self.trials.iter().enumerate().find(|(_, t)| t.shape() != first.shape()) {
                return Err(Error::dim(format!(
                    "trial {j} is {:?}, trial 0 is {:?}",
                    t.shape(),
                    first.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.trials.first().map_or(0, |t| t.ncols())
    }

    /// Trials at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> TrialSet {
        TrialSet {
            trials: indices.iter().map(|&i| self.trials[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            conditions: indices.iter().map(|&i| self.conditions[i]).collect(),
            channel_names: self.channel_names.clone(),
            rate_hz: self.rate_hz,
        }
    }

    /// Trials of one condition, chronological order kept.
    pub fn condition(&self, condition: Condition) -> TrialSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.conditions[i] == condition).collect();
        self.subset(&idx)
    }

    /// Scales every trial by `factor`.
    pub fn scaled(&self, factor: f64) -> TrialSet {
        let mut out = self.clone();
        for t in &mut out.trials {
            *t *= factor;
        }
        out
    }
}

/// Structure matrices for the two class codes at a given response length,
/// with their scatter statistics cached.
#[derive(Debug, Clone)]
pub struct StructurePair {
    codes: [BitSequence; 2],
    structures: [StructureMatrix; 2],
    grams: [DMatrix<f64>; 2],
    row_sums: [DVector<f64>; 2],
    duration_s: f64,
}

impl StructurePair {
    pub fn new(codes: &CodePair, duration_s: f64, rate_hz: f64, response_len: usize) -> Result<Self> {
        Self::from_codes([codes.left.clone(), codes.right.clone()], duration_s, rate_hz, response_len)
    }

    pub fn from_codes(codes: [BitSequence; 2], duration_s: f64, rate_hz: f64, response_len: usize) -> Result<Self> {
        let m0 = structure_for_code(&codes[0], duration_s, rate_hz, response_len)?;
        let m1 = structure_for_code(&codes[1], duration_s, rate_hz, response_len)?;
        Ok(Self::assemble(codes, [m0, m1], duration_s))
    }

    fn assemble(codes: [BitSequence; 2], structures: [StructureMatrix; 2], duration_s: f64) -> Self {
        let grams = [0, 1].map(|c| {
            let m = structures[c].data();
            m * m.transpose()
        });
        let row_sums = [0, 1].map(|c| structures[c].data().column_sum());
        Self {
            codes,
            structures,
            grams,
            row_sums,
            duration_s,
        }
    }

    /// The same pair with class 0 and class 1 exchanged.
    pub fn swapped(&self) -> Self {
        let [c0, c1] = self.codes.clone();
        let [m0, m1] = self.structures.clone();
        Self::assemble([c1, c0], [m1, m0], self.duration_s)
    }

    pub fn structure(&self, label: u8) -> &StructureMatrix {
        &self.structures[label as usize]
    }

    pub fn code(&self, label: u8) -> &BitSequence {
        &self.codes[label as usize]
    }

    pub fn response_len(&self) -> usize {
        self.structures[0].response_len()
    }

    pub fn n_rows(&self) -> usize {
        self.structures[0].n_rows()
    }

    pub fn n_samples(&self) -> usize {
        self.structures[0].n_samples()
    }

    pub fn rate_hz(&self) -> f64 {
        self.structures[0].rate_hz()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }
}

/// Per-trial statistics that do not depend on the response length.
#[derive(Debug, Clone)]
pub(crate) struct TrialStats {
    gram: DMatrix<f64>,
    row_sum: DVector<f64>,
}

impl TrialStats {
    pub(crate) fn of(x: &DMatrix<f64>) -> Self {
        Self {
            gram: x * x.transpose(),
            row_sum: x.column_sum(),
        }
    }
}

/// Row-centred scatter matrices of `S` and `D` for the given trials.
pub(crate) fn training_covariances(
    trials: &[&DMatrix<f64>],
    stats: &[&TrialStats],
    labels: &[u8],
    structures: &StructurePair,
) -> Covariances {
    let c = trials[0].nrows();
    let t = trials[0].ncols();
    let q = structures.n_rows();
    let n_obs = (trials.len() * t) as f64;

    let mut class_sum = [DMatrix::zeros(c, t), DMatrix::zeros(c, t)];
    let mut counts = [0usize; 2];
    let mut xx = DMatrix::zeros(c, c);
    let mut sx = DVector::zeros(c);
    for ((x, s), &y) in trials.iter().zip(stats).zip(labels) {
        class_sum[y as usize] += *x;
        counts[y as usize] += 1;
        xx += &s.gram;
        sx += &s.row_sum;
    }

    let mut yy = DMatrix::zeros(q, q);
    let mut sd = DVector::zeros(q);
    let mut xy = DMatrix::zeros(c, q);
    for k in 0..2 {
        if counts[k] == 0 {
            continue;
        }
        yy += &structures.grams[k] * counts[k] as f64;
        sd += &structures.row_sums[k] * counts[k] as f64;
        xy += &class_sum[k] * structures.structures[k].data().transpose();
    }

    xx -= &sx * sx.transpose() / n_obs;
    yy -= &sd * sd.transpose() / n_obs;
    xy -= &sx * sd.transpose() / n_obs;
    Covariances { xx, yy, xy }
}

/// Fitted spatial filter, response vector and class templates.
#[derive(Debug, Clone)]
pub struct DecoderModel {
    pub w: DVector<f64>,
    pub r: DVector<f64>,
    pub rho_train: f64,
    pub ridge: f64,
    pub channel_names: Vec<String>,
    structures: StructurePair,
    templates: [DVector<f64>; 2],
}

/// Label and per-class template correlations of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub scores: [f64; 2],
}

impl DecoderModel {
    pub fn from_parts(
        w: DVector<f64>,
        r: DVector<f64>,
        structures: StructurePair,
        ridge: f64,
        rho_train: f64,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        if w.len() != channel_names.len() {
            return Err(Error::dim(format!(
                "spatial filter has {} weights for {} channels",
                w.len(),
                channel_names.len()
            )));
        }
        let templates = [
            structures.structure(0).template(&r)?,
            structures.structure(1).template(&r)?,
        ];
        Ok(Self {
            w,
            r,
            rho_train,
            ridge,
            channel_names,
            structures,
            templates,
        })
    }

    pub fn response_len(&self) -> usize {
        self.structures.response_len()
    }

    pub fn structures(&self) -> &StructurePair {
        &self.structures
    }

    pub fn template(&self, label: u8) -> &DVector<f64> {
        &self.templates[label as usize]
    }

    /// The per-event segments of `r`, each of length `L`.
    pub fn event_responses(&self) -> Vec<&[f64]> {
        let l = self.response_len();
        (0..N_EVENTS).map(|e| &self.r.as_slice()[e * l..(e + 1) * l]).collect()
    }

    /// The same model with the class templates exchanged.
    pub fn with_swapped_classes(&self) -> Result<Self> {
        Self::from_parts(
            self.w.clone(),
            self.r.clone(),
            self.structures.swapped(),
            self.ridge,
            self.rho_train,
            self.channel_names.clone(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            w: self.w.iter().copied().collect(),
            r: self.r.iter().copied().collect(),
            response_len: self.response_len(),
            codes: [self.structures.code(0).clone(), self.structures.code(1).clone()],
            duration_s: self.structures.duration_s(),
            rate_hz: self.structures.rate_hz(),
            ridge: self.ridge,
            rho_train: self.rho_train,
            channel_names: self.channel_names.clone(),
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| Error::json(path, e))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let structures = StructurePair::from_codes(file.codes, file.duration_s, file.rate_hz, file.response_len)?;
        Self::from_parts(
            DVector::from_vec(file.w),
            DVector::from_vec(file.r),
            structures,
            file.ridge,
            file.rho_train,
            file.channel_names,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    w: Vec<f64>,
    r: Vec<f64>,
    response_len: usize,
    codes: [BitSequence; 2],
    duration_s: f64,
    rate_hz: f64,
    ridge: f64,
    rho_train: f64,
    channel_names: Vec<String>,
}

fn check_training(train: &TrialSet, structures: &StructurePair) -> Result<()> {
    train.validate()?;
    if train.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 training trials, got {}", train.len())));
    }
    for class in 0..2u8 {
        if !train.labels.contains(&class) {
            return Err(Error::invalid(format!("training data has no trials of class {class}")));
        }
    }
    if train.n_samples() != structures.n_samples() {
        return Err(Error::dim(format!(
            "trials have {} samples, structure matrices {}",
            train.n_samples(),
            structures.n_samples()
        )));
    }
    Ok(())
}

pub(crate) fn fit_with_stats(
    train: &TrialSet,
    stats: &[&TrialStats],
    structures: &StructurePair,
    ridge: f64,
) -> Result<DecoderModel> {
    check_training(train, structures)?;
    let trials: Vec<&DMatrix<f64>> = train.trials.iter().collect();
    let cov = training_covariances(&trials, stats, &train.labels, structures);
    let pair = cca_from_covariances(&cov, ridge)?;
    let (mut w, mut r) = (pair.x_weights, pair.y_weights);
    let peak = r.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if peak < 0.0 {
        w.neg_mut();
        r.neg_mut();
    }
    let rho_train = cov.correlation(&w, &r);
    DecoderModel::from_parts(w, r, structures.clone(), ridge, rho_train, train.channel_names.clone())
}

/// Fits the spatial filter and response vector on `train`.
pub fn fit_reconvolution_cca(train: &TrialSet, structures: &StructurePair, ridge: f64) -> Result<DecoderModel> {
    let stats: Vec<TrialStats> = train.trials.iter().map(TrialStats::of).collect();
    let refs: Vec<&TrialStats> = stats.iter().collect();
    fit_with_stats(train, &refs, structures, ridge)
}

/// Pearson correlation; zero when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Classifies one trial. Exact ties go to label 0.
pub fn predict_side(model: &DecoderModel, x: &DMatrix<f64>) -> Result<Prediction> {
    if x.nrows() != model.w.len() || x.ncols() != model.templates[0].len() {
        return Err(Error::dim(format!(
            "trial is {:?}, model expects ({}, {})",
            x.shape(),
            model.w.len(),
            model.templates[0].len()
        )));
    }
    let filtered = x.tr_mul(&model.w);
    let scores = [0, 1].map(|i| pearson(filtered.as_slice(), model.templates[i].as_slice()));
    let label = if scores[1] > scores[0] { 1 } else { 0 };
    Ok(Prediction { label, scores })
}

/// Forward-model pattern `a = Σ w` with its spatial covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialPattern {
    pub a: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

pub fn spatial_pattern_from_covariance(w: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<SpatialPattern> {
    if covariance.shape() != (w.len(), w.len()) {
        return Err(Error::dim(format!(
            "covariance {:?} does not match {} weights",
            covariance.shape(),
            w.len()
        )));
    }
    Ok(SpatialPattern {
        a: covariance.transpose() * w,
        covariance: covariance.clone(),
    })
}

/// Spatial covariance of the row-centred concatenated training trials and
/// the pattern of the model's spatial filter.
pub fn spatial_pattern(model: &DecoderModel, train: &TrialSet) -> Result<SpatialPattern> {
    let c = train.n_channels();
    if c != model.w.len() {
        return Err(Error::dim(format!("{c} channels, model has {}", model.w.len())));
    }
    let n_obs = (train.len() * train.n_samples()) as f64;
    let mut gram = DMatrix::zeros(c, c);
    let mut sum = DVector::zeros(c);
    for x in &train.trials {
        gram += x * x.transpose();
        sum += x.column_sum();
    }
    let covariance = (gram - &sum * sum.transpose() / n_obs) / (n_obs - 1.0);
    spatial_pattern_from_covariance(&model.w, &covariance)
}
