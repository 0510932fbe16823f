//! Shape timelines and the run/trial schedule of a session.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SLOT_RATE_HZ: usize = 4;
pub const TRIAL_DURATION_S: usize = 20;
pub const SLOTS_PER_TRIAL: usize = SLOT_RATE_HZ * TRIAL_DURATION_S;
/// Minimum distance between two targets, in slots (1 s).
pub const MIN_TARGET_GAP: usize = SLOT_RATE_HZ;
pub const MAX_TARGETS: usize = (SLOTS_PER_TRIAL - 1) / MIN_TARGET_GAP + 1;
/// Per-side target counts are drawn from this inclusive range.
pub const TARGET_COUNT_RANGE: (usize, usize) = (2, 5);

pub const RUNS_PER_SESSION: usize = 5;
pub const TRIALS_PER_RUN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    GreenCircle,
    MagentaHourglass,
    CyanTriangle,
    RedRectangle,
    YellowTriangle,
}

impl Shape {
    pub const TARGET: Shape = Shape::MagentaHourglass;
    pub const NON_TARGETS: [Shape; 4] = [
        Shape::GreenCircle,
        Shape::CyanTriangle,
        Shape::RedRectangle,
        Shape::YellowTriangle,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Class label: 0 for left, 1 for right.
    pub fn label(self) -> u8 {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn from_label(label: u8) -> Result<Side> {
        match label {
            0 => Ok(Side::Left),
            1 => Ok(Side::Right),
            other => Err(Error::invalid(format!("label {other} is not 0 or 1"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Overt,
    Covert,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Overt => "overt",
            Condition::Covert => "covert",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeTimeline {
    pub slots: Vec<Shape>,
    pub slot_rate_hz: usize,
    pub duration_s: usize,
}

impl ShapeTimeline {
    pub fn target_slots(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == Shape::TARGET)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn target_count(&self) -> usize {
        self.slots.iter().filter(|&&s| s == Shape::TARGET).count()
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.slot_rate_hz * self.duration_s;
        if self.slots.len() != expected {
            return Err(Error::invalid(format!(
                "timeline has {} slots, expected {expected}",
                self.slots.len()
            )));
        }
        let targets = self.target_slots();
        if let Some(w) = targets.windows(2).find(|w| w[1] - w[0] < self.slot_rate_hz) {
            return Err(Error::invalid(format!(
                "targets at slots {} and {} are closer than 1 s",
                w[0], w[1]
            )));
        }
        Ok(())
    }
}

/// Draws `n` slot indices in `0..SLOTS_PER_TRIAL`, pairwise at least
/// `MIN_TARGET_GAP` apart, uniformly over all such placements.
fn spaced_positions(rng: &mut impl Rng, n: usize) -> Result<Vec<usize>> {
    if n > MAX_TARGETS {
        return Err(Error::Infeasible(format!(
            "{n} targets cannot be placed {MIN_TARGET_GAP} slots apart in {SLOTS_PER_TRIAL} slots (max {MAX_TARGETS})"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // Choose n of the compressed slots, then re-expand the gaps.
    let free = SLOTS_PER_TRIAL - (MIN_TARGET_GAP - 1) * (n - 1);
    let mut picks = rand::seq::index::sample(rng, free, n).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(i, p)| p + i * (MIN_TARGET_GAP - 1))
        .collect())
}

fn fill_timeline(rng: &mut impl Rng, targets: &[usize]) -> ShapeTimeline {
    let mut slots = Vec::with_capacity(SLOTS_PER_TRIAL);
    let mut prev: Option<Shape> = None;
    for i in 0..SLOTS_PER_TRIAL {
        let shape = if targets.contains(&i) {
            Shape::TARGET
        } else {
            loop {
                let s = Shape::NON_TARGETS[rng.random_range(0..Shape::NON_TARGETS.len())];
                if Some(s) != prev {
                    break s;
                }
            }
        };
        slots.push(shape);
        prev = Some(shape);
    }
    ShapeTimeline {
        slots,
        slot_rate_hz: SLOT_RATE_HZ,
        duration_s: TRIAL_DURATION_S,
    }
}

pub fn make_shape_timeline(rng_seed: u64, n_targets: usize) -> Result<ShapeTimeline> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let targets = spaced_positions(&mut rng, n_targets)?;
    Ok(fill_timeline(&mut rng, &targets))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub cued_side: Side,
    pub condition: Condition,
    /// Identifier of the flashing code: the cued side's code slot.
    pub code_name: String,
    pub left_timeline: ShapeTimeline,
    pub right_timeline: ShapeTimeline,
}

impl TrialSpec {
    pub fn label(&self) -> u8 {
        self.cued_side.label()
    }

    pub fn validate(&self) -> Result<()> {
        self.left_timeline.validate()?;
        self.right_timeline.validate()?;
        let left = self.left_timeline.target_slots();
        if let Some(s) = self.right_timeline.target_slots().iter().find(|s| left.contains(s)) {
            return Err(Error::invalid(format!("target shown on both sides at slot {s}")));
        }
        if self.left_timeline.target_count() == self.right_timeline.target_count() {
            return Err(Error::invalid("left and right target counts must differ"));
        }
        Ok(())
    }
}

pub fn make_trial_spec(rng_seed: u64, cued_side: Side, condition: Condition) -> Result<TrialSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (lo, hi) = TARGET_COUNT_RANGE;
    let n_left = rng.random_range(lo..=hi);
    let n_right = loop {
        let n = rng.random_range(lo..=hi);
        if n != n_left {
            break n;
        }
    };
    let left_targets = spaced_positions(&mut rng, n_left)?;
    let right_targets = loop {
        let cand = spaced_positions(&mut rng, n_right)?;
        if cand.iter().all(|s| !left_targets.contains(s)) {
            break cand;
        }
    };
    let left_timeline = fill_timeline(&mut rng, &left_targets);
    let right_timeline = fill_timeline(&mut rng, &right_targets);
    let code_name = match cued_side {
        Side::Left => "left",
        Side::Right => "right",
    };
    Ok(TrialSpec {
        cued_side,
        condition,
        code_name: code_name.to_string(),
        left_timeline,
        right_timeline,
    })
}

/// Non-EEG intervals of the protocol, kept as metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub run_preparation_s: f64,
    pub cue_s: f64,
    pub stimulation_s: f64,
    pub response_max_s: f64,
    pub feedback_s: f64,
    pub inter_trial_s: f64,
}

impl Default for TrialTiming {
    fn default() -> Self {
        Self {
            run_preparation_s: 5.0,
            cue_s: 1.0,
            stimulation_s: TRIAL_DURATION_S as f64,
            response_max_s: 5.0,
            feedback_s: 1.0,
            inter_trial_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub condition: Condition,
    pub trials: Vec<TrialSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub rng_seed: u64,
    pub timing: TrialTiming,
    pub runs: Vec<Run>,
}

impl SessionPlan {
    /// All trials in chronological order.
    pub fn trials(&self) -> impl Iterator<Item = &TrialSpec> {
        self.runs.iter().flat_map(|r| r.trials.iter())
    }

    pub fn n_trials(&self) -> usize {
        self.runs.iter().map(|r| r.trials.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, run) in self.runs.iter().enumerate() {
            let left = run.trials.iter().filter(|t| t.cued_side == Side::Left).count();
            if 2 * left != run.trials.len() {
                return Err(Error::invalid(format!("run {i} is not label balanced")));
            }
            for t in &run.trials {
                if t.condition != run.condition {
                    return Err(Error::invalid(format!("run {i} mixes conditions")));
                }
                t.validate()?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: SessionPlan = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        plan.validate()?;
        Ok(plan)
    }
}

/// One overt and four covert runs in seeded order, each with ten left- and
/// ten right-cued trials shuffled.
pub fn make_session_plan(rng_seed: u64) -> Result<SessionPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut conditions = vec![Condition::Covert; RUNS_PER_SESSION];
    conditions[0] = Condition::Overt;
    conditions.shuffle(&mut rng);

    let mut runs = Vec::with_capacity(RUNS_PER_SESSION);
    for condition in conditions {
        let mut sides: Vec<Side> = (0..TRIALS_PER_RUN)
            .map(|i| if i < TRIALS_PER_RUN / 2 { Side::Left } else { Side::Right })
            .collect();
        sides.shuffle(&mut rng);
        let trials = sides
            .into_iter()
            .map(|side| make_trial_spec(rng.random(), side, condition))
            .collect::<Result<Vec<_>>>()?;
        runs.push(Run { condition, trials });
    }
    Ok(SessionPlan {
        rng_seed,
        timing: TrialTiming::default(),
        runs,
    })
}
