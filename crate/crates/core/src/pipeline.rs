//! End-to-end experiment: codes, session plan, simulation, evaluation,
//! response-length sweep and report, with a manifest that pins every input
//! and hashes every output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cca::DEFAULT_RIDGE;
use crate::codes::{
    circular_correlation, default_preferred_pair, gold_code_set, modulate, select_code_pair, BitSequence, CodePair,
    DEFAULT_SHIFT_BITS,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{
    cross_validate, length_samples, sweep_response_length, EvalOptions, EvalResult, DEFAULT_FOLDS,
    DEFAULT_PERMUTATIONS, OPERATING_LENGTH_S, SWEEP_LENGTHS_S,
};
use crate::report::{curve_rows, write_curve_csv, write_curve_svg};
use crate::simulator::{
    default_forward_model, simulate_dataset, NoiseModel, DEFAULT_COVERT_GAIN, DEFAULT_LATERALIZATION, EEG_RATE_HZ,
};
use crate::stimulus::{make_session_plan, Condition};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CODES_FILE: &str = "codes.json";
pub const PLAN_FILE: &str = "plan.json";
pub const DATASET_DIR: &str = "dataset";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const OVERT_CURVE_FILE: &str = "curve_overt.csv";
pub const REPORT_FILE: &str = "report.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n_channels: usize,
    pub snr: f64,
    pub overt_gain: f64,
    pub covert_gain: f64,
    pub lateralization: Option<f64>,
    pub noise_model: NoiseModel,
    /// Length of the simulated transient responses.
    pub generation_length_s: f64,
    /// Length used for the single-point evaluation.
    pub eval_length_s: f64,
    pub lengths_s: Vec<f64>,
    pub ridge: f64,
    pub k: usize,
    pub n_perm: usize,
    /// Output directory; not part of the configuration hash.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_channels: 64,
            snr: 0.06,
            overt_gain: 1.0,
            covert_gain: DEFAULT_COVERT_GAIN,
            lateralization: Some(DEFAULT_LATERALIZATION),
            noise_model: NoiseModel::White,
            generation_length_s: OPERATING_LENGTH_S,
            eval_length_s: OPERATING_LENGTH_S,
            lengths_s: SWEEP_LENGTHS_S.to_vec(),
            ridge: DEFAULT_RIDGE,
            k: DEFAULT_FOLDS,
            n_perm: DEFAULT_PERMUTATIONS,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Checks everything that can be checked before any work is done.
    pub fn validate(&self) -> Result<()> {
        if self.lengths_s.is_empty() {
            return Err(Error::invalid("response length grid is empty"));
        }
        for &l in self.lengths_s.iter().chain([&self.eval_length_s, &self.generation_length_s]) {
            length_samples(l, EEG_RATE_HZ)?;
        }
        if self.n_channels < 2 {
            return Err(Error::invalid(format!("need at least 2 channels, got {}", self.n_channels)));
        }
        if !(self.snr >= 0.0) {
            return Err(Error::invalid(format!("snr {} must be non-negative", self.snr)));
        }
        if !(self.overt_gain >= 0.0) || !(self.covert_gain >= 0.0) {
            return Err(Error::invalid("condition gains must be non-negative"));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::invalid(format!("ridge {} must be non-negative", self.ridge)));
        }
        if self.k < 2 {
            return Err(Error::invalid(format!("need at least 2 folds, got {}", self.k)));
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON form with the output directory removed.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            out_dir: None,
            ..self.clone()
        };
        sha256_hex(serde_json::to_string(&canonical).expect("config serialises").as_bytes())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            plan: self.seed,
            forward_model: self.seed.wrapping_add(1),
            simulation: self.seed.wrapping_add(2),
            permutation: self.seed.wrapping_add(3),
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            k: self.k,
            ridge: self.ridge,
            n_perm: self.n_perm,
            seed: self.seeds().permutation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub plan: u64,
    pub forward_model: u64,
    pub simulation: u64,
    pub permutation: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if m.config.hash() != m.config_sha256 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "configuration does not match its recorded hash".into(),
            });
        }
        Ok(m)
    }

    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

/// Codes file: the full modulated Gold set and the selected pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeBook {
    pub codes: Vec<BitSequence>,
    pub pair: CodePair,
}

pub fn default_code_book() -> Result<CodeBook> {
    let (a, b) = default_preferred_pair();
    let codes = gold_code_set(&a, &b)?
        .iter()
        .map(modulate)
        .collect::<Result<Vec<_>>>()?;
    let pair = select_code_pair(&codes, DEFAULT_SHIFT_BITS)?;
    Ok(CodeBook { codes, pair })
}

/// What [`CodeBook::verify`] measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeReport {
    pub n_codes: usize,
    pub code_len: usize,
    pub max_run_of_ones: usize,
    /// Distinct unnormalised cross-correlation values of the demodulated
    /// codes over all distinct pairs and lags.
    pub cross_correlation_values: Vec<i64>,
    pub pair_correlation: f64,
}

impl CodeBook {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Checks the modulated set against the Gold-family properties and the
    /// pair against its shift.
    pub fn verify(&self) -> Result<CodeReport> {
        let n_codes = self.codes.len();
        let code_len = self.codes.first().map_or(0, BitSequence::len);
        if self.codes.iter().any(|c| c.len() != code_len || !code_len.is_multiple_of(2)) {
            return Err(Error::invalid("modulated codes must share one even length"));
        }
        let max_run_of_ones = self.codes.iter().map(BitSequence::max_cyclic_run_of_ones).max().unwrap_or(0);
        if max_run_of_ones > 2 {
            return Err(Error::invalid(format!("a code contains a run of {max_run_of_ones} ones")));
        }
        let base: Vec<Vec<f64>> = self
            .codes
            .iter()
            .map(|c| c.bits().iter().step_by(2).map(|&b| if b == 1 { 1.0 } else { -1.0 }).collect())
            .collect();
        let n = code_len / 2;
        let mut values = std::collections::BTreeSet::new();
        for i in 0..base.len() {
            for j in i + 1..base.len() {
                for lag in 0..n {
                    let sum: f64 = (0..n).map(|t| base[i][t] * base[j][(t + lag) % n]).sum();
                    values.insert(sum.round() as i64);
                }
            }
        }
        let pair = &self.pair;
        if pair.right != pair.left.rotated(pair.shift_bits).with_name(pair.right.name()) {
            return Err(Error::invalid(format!(
                "right code is not the left code shifted by {} bits",
                pair.shift_bits
            )));
        }
        let pair_correlation = circular_correlation(&pair.left, &pair.right, 0)?;
        Ok(CodeReport {
            n_codes,
            code_len,
            max_run_of_ones,
            cross_correlation_values: values.into_iter().collect(),
            pair_correlation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub evaluation: EvalResult,
    pub sweep: Vec<EvalResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub conditions: Vec<ConditionSummary>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn artifact(root: &Path, rel: &str) -> Result<Artifact> {
    let path = root.join(rel);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Artifact {
        path: rel.to_string(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

fn simulate(config: &RunConfig, pair: &CodePair, plan_path: &Path) -> Result<Dataset> {
    let seeds = config.seeds();
    let plan = make_session_plan(seeds.plan).map_err(|e| e.at("plan"))?;
    plan.save(plan_path).map_err(|e| e.at("plan"))?;
    let mut fm = default_forward_model(config.n_channels, config.generation_length_s, seeds.forward_model)
        .map_err(|e| e.at("simulate"))?
        .with_snr(config.snr);
    fm.overt_gain = config.overt_gain;
    fm.covert_gain = config.covert_gain;
    fm.lateralization = config.lateralization;
    fm.noise_model = config.noise_model;
    simulate_dataset(&plan, &fm, pair, seeds.simulation).map_err(|e| e.at("simulate"))
}

/// Runs every stage and writes artifacts plus `manifest.json` into `out_dir`
/// (or the configured directory).
pub fn run_experiment(config: &RunConfig, out_dir: Option<&Path>) -> Result<RunSummary> {
    config.validate().map_err(|e| e.at("config"))?;
    let out = out_dir
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| Error::invalid("no output directory given").at("config"))?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e).at("config"))?;

    let book = default_code_book().map_err(|e| e.at("codes"))?;
    write_json(&out.join(CODES_FILE), &book).map_err(|e| e.at("codes"))?;

    let dataset = simulate(config, &book.pair, &out.join(PLAN_FILE))?;
    dataset.save(&out.join(DATASET_DIR)).map_err(|e| e.at("simulate"))?;

    let options = config.eval_options();
    let eval_len = length_samples(config.eval_length_s, EEG_RATE_HZ).map_err(|e| e.at("evaluate"))?;
    let mut conditions = Vec::new();
    for condition in [Condition::Overt, Condition::Covert] {
        let subset = dataset.condition(condition);
        let evaluation = cross_validate(&subset, eval_len, &options).map_err(|e| e.at("evaluate"))?;
        let sweep = sweep_response_length(&subset, &config.lengths_s, &options).map_err(|e| e.at("sweep"))?;
        conditions.push(ConditionSummary {
            condition,
            evaluation,
            sweep,
        });
    }
    write_json(&out.join(EVALUATION_FILE), &conditions).map_err(|e| e.at("evaluate"))?;

    let overt = &conditions[0];
    let covert = &conditions[1];
    write_curve_csv(&out.join(CURVE_FILE), &covert.sweep).map_err(|e| e.at("sweep"))?;
    write_curve_csv(&out.join(OVERT_CURVE_FILE), &overt.sweep).map_err(|e| e.at("sweep"))?;
    let series = vec![
        ("overt".to_string(), curve_rows(&overt.sweep)),
        ("covert".to_string(), curve_rows(&covert.sweep)),
    ];
    write_curve_svg(&out.join(REPORT_FILE), &series).map_err(|e| e.at("report"))?;

    let rels = [
        CODES_FILE.to_string(),
        PLAN_FILE.to_string(),
        format!("{DATASET_DIR}/{}", crate::dataset::METADATA_FILE),
        format!("{DATASET_DIR}/{}", crate::dataset::TRIALS_FILE),
        EVALUATION_FILE.to_string(),
        CURVE_FILE.to_string(),
        OVERT_CURVE_FILE.to_string(),
        REPORT_FILE.to_string(),
    ];
    let artifacts = rels
        .iter()
        .map(|r| artifact(&out, r))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at("manifest"))?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config.hash(),
        config: config.clone(),
        seeds: config.seeds(),
        artifacts,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest).map_err(|e| e.at("manifest"))?;
    Ok(RunSummary {
        out_dir: out,
        manifest,
        conditions,
    })
}

/// Re-runs the configuration recorded in a manifest and lists every
/// artifact whose hash differs from the recorded one.
pub fn rerun_manifest(manifest_path: &Path, out_dir: Option<&Path>) -> Result<(RunSummary, Vec<String>)> {
    let recorded = Manifest::load(manifest_path).map_err(|e| e.at("manifest"))?;
    let default_out = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = out_dir.map(Path::to_path_buf).unwrap_or(default_out);
    let summary = run_experiment(&recorded.config, Some(&out))?;
    let mismatches = recorded
        .artifacts
        .iter()
        .filter(|a| summary.manifest.artifact(&a.path) != Some(a))
        .map(|a| a.path.clone())
        .collect();
    Ok((summary, mismatches))
}
