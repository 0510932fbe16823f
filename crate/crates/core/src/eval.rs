//! Offline evaluation: chronological k-fold cross-validation, label
//! permutation tests and the sweep over transient response lengths.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::DEFAULT_RIDGE;
use crate::dataset::Dataset;
use crate::decoder::{fit_with_stats, predict_side, Prediction, StructurePair, TrialSet, TrialStats};
use crate::error::{Error, Result};
use crate::stimulus::Condition;

pub const DEFAULT_FOLDS: usize = 4;
pub const DEFAULT_PERMUTATIONS: usize = 1000;
pub const OPERATING_LENGTH_S: f64 = 0.3;
pub const SWEEP_LENGTHS_S: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of_trial: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_trial.len())
            .filter(|&i| self.fold_of_trial[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_trial.len())
            .filter(|&i| self.fold_of_trial[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of_trial {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Contiguous blocks in trial order; the first `n % k` blocks hold one
/// extra trial.
pub fn chronological_folds(n_trials: usize, k: usize) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if n_trials < k {
        return Err(Error::invalid(format!("cannot split {n_trials} trials into {k} folds")));
    }
    let (base, extra) = (n_trials / k, n_trials % k);
    let mut fold_of_trial = Vec::with_capacity(n_trials);
    for f in 0..k {
        let size = base + usize::from(f < extra);
        fold_of_trial.extend(std::iter::repeat_n(f, size));
    }
    Ok(FoldAssignment { k, fold_of_trial })
}

/// Converts a length in seconds to whole samples.
pub fn length_samples(length_s: f64, rate_hz: f64) -> Result<usize> {
    let exact = length_s * rate_hz;
    let n = exact.round();
    if !(n >= 1.0) || (exact - n).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "response length {length_s} s is not a positive whole number of samples at {rate_hz} Hz"
        )));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub k: usize,
    pub ridge: f64,
    pub n_perm: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_FOLDS,
            ridge: DEFAULT_RIDGE,
            n_perm: DEFAULT_PERMUTATIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub response_len: usize,
    pub length_s: f64,
    pub condition: Option<Condition>,
    pub options: EvalOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub config: EvalConfig,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub labels: Vec<u8>,
    pub predictions: Vec<Prediction>,
    pub p_value: f64,
}

impl EvalResult {
    pub fn accuracy(&self) -> f64 {
        accuracy(
            &self.predictions.iter().map(|p| p.label).collect::<Vec<_>>(),
            &self.labels,
        )
    }
}

fn accuracy(predicted: &[u8], labels: &[u8]) -> f64 {
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Add-one permutation p-value of the accuracy of `predicted` against
/// `labels`, shuffling the labels `n_perm` times. `n_perm = 0` gives 1.
pub fn permutation_pvalue(predicted: &[u8], labels: &[u8], n_perm: usize, rng: &mut impl Rng) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("permutation test needs at least one trial"));
    }
    if predicted.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let observed = accuracy(predicted, labels);
    let mut shuffled = labels.to_vec();
    let mut at_least = 0usize;
    for _ in 0..n_perm {
        shuffled.shuffle(rng);
        if accuracy(predicted, &shuffled) >= observed {
            at_least += 1;
        }
    }
    Ok((1 + at_least) as f64 / (1 + n_perm) as f64)
}

fn homogeneous_condition(trials: &TrialSet) -> Result<Option<Condition>> {
    match trials.conditions.first() {
        None => Ok(None),
        Some(&c) if trials.conditions.iter().all(|&x| x == c) => Ok(Some(c)),
        Some(_) => Err(Error::invalid(
            "dataset mixes overt and covert trials; evaluate each condition separately",
        )),
    }
}

/// Dataset with per-trial statistics shared by every fold and length.
struct Prepared<'a> {
    dataset: &'a Dataset,
    stats: Vec<TrialStats>,
    condition: Option<Condition>,
}

impl<'a> Prepared<'a> {
    fn new(dataset: &'a Dataset) -> Result<Self> {
        let trials = &dataset.trials;
        trials.validate()?;
        let condition = homogeneous_condition(trials)?;
        let stats = trials.trials.par_iter().map(TrialStats::of).collect();
        Ok(Self {
            dataset,
            stats,
            condition,
        })
    }

    fn run(&self, response_len: usize, options: &EvalOptions) -> Result<EvalResult> {
        let trials = &self.dataset.trials;
        let prov = &self.dataset.provenance;
        let folds = chronological_folds(trials.len(), options.k)?;
        let structures = StructurePair::new(&prov.codes, prov.duration_s, trials.rate_hz, response_len)?;

        let per_fold: Vec<Vec<(usize, Prediction)>> = (0..folds.k)
            .into_par_iter()
            .map(|f| {
                let train_idx = folds.train_indices(f);
                let train = trials.subset(&train_idx);
                for class in 0..2u8 {
                    if !train.labels.contains(&class) {
                        return Err(Error::invalid(format!(
                            "training data for fold {f} has no trials of class {class}"
                        )));
                    }
                }
                let stats: Vec<&TrialStats> = train_idx.iter().map(|&i| &self.stats[i]).collect();
                let model = fit_with_stats(&train, &stats, &structures, options.ridge)?;
                folds
                    .test_indices(f)
                    .into_iter()
                    .map(|i| predict_side(&model, &trials.trials[i]).map(|p| (i, p)))
                    .collect()
            })
            .collect::<Result<_>>()?;

        let mut predictions = vec![Prediction { label: 0, scores: [0.0; 2] }; trials.len()];
        let mut fold_accuracies = Vec::with_capacity(folds.k);
        for fold in &per_fold {
            let hits = fold.iter().filter(|(i, p)| p.label == trials.labels[*i]).count();
            fold_accuracies.push(hits as f64 / fold.len() as f64);
            for &(i, p) in fold {
                predictions[i] = p;
            }
        }
        let mean_accuracy = fold_accuracies.iter().sum::<f64>() / folds.k as f64;
        let predicted: Vec<u8> = predictions.iter().map(|p| p.label).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let p_value = permutation_pvalue(&predicted, &trials.labels, options.n_perm, &mut rng)?;

        Ok(EvalResult {
            config: EvalConfig {
                response_len,
                length_s: response_len as f64 / trials.rate_hz,
                condition: self.condition,
                options: *options,
            },
            fold_accuracies,
            mean_accuracy,
            labels: trials.labels.clone(),
            predictions,
            p_value,
        })
    }
}

/// Chronological k-fold evaluation at one response length (in samples).
pub fn cross_validate(dataset: &Dataset, response_len: usize, options: &EvalOptions) -> Result<EvalResult> {
    Prepared::new(dataset)?.run(response_len, options)
}

/// One cross-validation per entry of `lengths_s`, in the given order.
pub fn sweep_response_length(dataset: &Dataset, lengths_s: &[f64], options: &EvalOptions) -> Result<Vec<EvalResult>> {
    if lengths_s.is_empty() {
        return Err(Error::invalid("response length grid is empty"));
    }
    let rate = dataset.trials.rate_hz;
    let lengths = lengths_s
        .iter()
        .map(|&s| length_samples(s, rate))
        .collect::<Result<Vec<_>>>()?;
    let prepared = Prepared::new(dataset)?;
    lengths
        .par_iter()
        .map(|&l| prepared.run(l, options))
        .collect()
}
