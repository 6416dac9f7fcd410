//! Association training data built from ground-truth trajectories.
//!
//! Positive examples pair a run of a target's states with a later state of
//! the same target (label -1); negatives pair it with a state of another
//! target at a nearby frame (label +1).

mod synth;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::window_features;
use crate::geometry::{BoundingBox, FrameDimensions};
use crate::mlp::LabeledExample;
use crate::track::{Descriptor, TargetState, Track};

pub use synth::{generate_synthetic_sequence, OracleEstimator, SynthConfig, SyntheticSequence};

pub const POSITIVE_LABEL: f64 = -1.0;
pub const NEGATIVE_LABEL: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthState {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub appearance: Option<Descriptor>,
}

impl GroundTruthState {
    fn to_target_state(&self) -> Result<TargetState> {
        Ok(TargetState {
            bbox: self.bbox,
            appearance: self
                .appearance
                .clone()
                .ok_or(Error::MissingAppearance { frame: self.frame })?,
            frame: self.frame,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrack {
    pub id: u64,
    states: Vec<GroundTruthState>,
}

impl GroundTruthTrack {
    pub fn new(id: u64, states: Vec<GroundTruthState>) -> Result<Self> {
        if let Some(w) = states.windows(2).find(|w| w[1].frame <= w[0].frame) {
            return Err(Error::Input(format!(
                "ground-truth track {id}: frame {} follows frame {}",
                w[1].frame, w[0].frame
            )));
        }
        Ok(Self { id, states })
    }

    pub fn states(&self) -> &[GroundTruthState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationExample {
    pub anchor_id: u64,
    /// Index of the anchor's newest state within its track.
    pub anchor_index: usize,
    /// Contiguous run of the anchor track's states, oldest first.
    pub anchor: Vec<TargetState>,
    pub candidate_id: u64,
    pub candidate: TargetState,
    /// Positives: index displacement within the anchor track. Negatives:
    /// frame gap to the candidate (at least 1).
    pub n: u32,
    pub label: f64,
}

impl AssociationExample {
    pub fn is_positive(&self) -> bool {
        self.label == POSITIVE_LABEL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub window: usize,
    pub count: usize,
    pub positive_fraction: f64,
    pub seed: u64,
    /// Negatives prefer candidates within `l_max + 1` frames of the anchor.
    pub l_max: u32,
    /// Upper bound on the positive displacement; `None` samples the whole
    /// remaining track.
    pub max_displacement: Option<u32>,
}

impl SamplingConfig {
    pub fn new(window: usize, count: usize, positive_fraction: f64, seed: u64) -> Self {
        Self {
            window,
            count,
            positive_fraction,
            seed,
            l_max: 3,
            max_displacement: Some(4),
        }
    }
}

fn to_states(track: &GroundTruthTrack, range: std::ops::RangeInclusive<usize>) -> Result<Vec<TargetState>> {
    track.states[range].iter().map(GroundTruthState::to_target_state).collect()
}

/// Samples a class-balanced, seeded set of association examples.
pub fn sample_examples(tracks: &[GroundTruthTrack], cfg: &SamplingConfig) -> Result<Vec<AssociationExample>> {
    if cfg.window < 2 {
        return Err(Error::Config(format!("window must be at least 2, got {}", cfg.window)));
    }
    if !(cfg.positive_fraction > 0.0 && cfg.positive_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "positive fraction must be in (0, 1], got {}",
            cfg.positive_fraction
        )));
    }
    let run = cfg.window - 1;
    // anchor positions (track index, newest anchor state index) with room for a candidate
    let anchors: Vec<(usize, usize)> = tracks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.len() > run)
        .flat_map(|(i, t)| (run - 1..t.len() - 1).map(move |f| (i, f)))
        .collect();
    if anchors.is_empty() {
        return Err(Error::Input(format!(
            "no ground-truth track has the {} states needed for window {}",
            run + 1,
            cfg.window
        )));
    }
    let positives = (cfg.count as f64 * cfg.positive_fraction).round() as usize;
    let negatives = cfg.count - positives;
    if negatives > 0 && tracks.iter().filter(|t| !t.is_empty()).count() < 2 {
        return Err(Error::Input("negative examples need at least two tracks".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.count);
    for k in 0..cfg.count {
        let (ti, f) = anchors[rng.random_range(0..anchors.len())];
        let track = &tracks[ti];
        let anchor = to_states(track, f + 1 - run..=f)?;
        if k < positives {
            let room = (track.len() - 1 - f) as u32;
            let hi = cfg.max_displacement.map_or(room, |m| m.clamp(1, room));
            let n = rng.random_range(1..=hi);
            out.push(AssociationExample {
                anchor_id: track.id,
                anchor_index: f,
                anchor,
                candidate_id: track.id,
                candidate: track.states[f + n as usize].to_target_state()?,
                n,
                label: POSITIVE_LABEL,
            });
        } else {
            let (oi, si) = pick_negative(tracks, ti, track.states[f].frame, cfg.l_max, &mut rng);
            let other = &tracks[oi];
            let cand = other.states[si].to_target_state()?;
            let n = cand.frame.saturating_sub(track.states[f].frame).max(1);
            out.push(AssociationExample {
                anchor_id: track.id,
                anchor_index: f,
                anchor,
                candidate_id: other.id,
                candidate: cand,
                n,
                label: NEGATIVE_LABEL,
            });
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// A state of another track, preferably within `[frame + 1, frame + l_max + 1]`.
fn pick_negative(
    tracks: &[GroundTruthTrack],
    anchor_track: usize,
    frame: u32,
    l_max: u32,
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    let lo = frame + 1;
    let hi = frame + l_max + 1;
    let mut near = Vec::new();
    let mut later = Vec::new();
    for (i, t) in tracks.iter().enumerate() {
        if i == anchor_track || t.id == tracks[anchor_track].id {
            continue;
        }
        let start = t.states.partition_point(|s| s.frame < lo);
        for j in start..t.states.len() {
            if t.states[j].frame <= hi {
                near.push((i, j));
            } else {
                if near.is_empty() {
                    later.push((i, j));
                }
                break;
            }
        }
    }
    if !near.is_empty() {
        return near[rng.random_range(0..near.len())];
    }
    if !later.is_empty() {
        return later[rng.random_range(0..later.len())];
    }
    let others: Vec<usize> = (0..tracks.len())
        .filter(|&i| i != anchor_track && !tracks[i].is_empty())
        .collect();
    let oi = others[rng.random_range(0..others.len())];
    (oi, rng.random_range(0..tracks[oi].len()))
}

/// Turns examples into window feature vectors. The candidate plays the
/// detection; the head staleness is the number of skipped frames.
pub fn featurize_examples(
    examples: &[AssociationExample],
    window: usize,
    frame: &FrameDimensions,
) -> Result<Vec<LabeledExample>> {
    examples
        .par_iter()
        .map(|e| {
            let mut track = Track::from_history(e.anchor_id, e.anchor.clone(), window)?;
            let last = track.newest().frame;
            track.loss_counter = e.candidate.frame.saturating_sub(last).saturating_sub(1);
            let g = window_features(&track, &e.candidate, window, frame)?;
            Ok(LabeledExample { features: g, label: e.label })
        })
        .collect()
}

/// Label-stratified train/validation split.
pub fn stratified_split(
    data: &[LabeledExample],
    validation_fraction: f64,
    seed: u64,
) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut labels: Vec<f64> = data.iter().map(|e| e.label).collect();
    labels.sort_by(f64::total_cmp);
    labels.dedup();
    for label in labels {
        let mut group: Vec<&LabeledExample> = data.iter().filter(|e| e.label == label).collect();
        group.shuffle(&mut rng);
        let n_val = (group.len() as f64 * validation_fraction).round() as usize;
        val.extend(group[..n_val].iter().map(|&e| e.clone()));
        train.extend(group[n_val..].iter().map(|&e| e.clone()));
    }
    (train, val)
}

/// Dataset CSV: a header `f0,...,f{d-1},label`, then one example per row.
pub fn write_dataset_csv(path: &Path, data: &[LabeledExample]) -> Result<()> {
    let dim = data.first().map_or(0, |e| e.features.len());
    let mut out = String::with_capacity(data.len() * dim * 12);
    for i in 0..dim {
        out.push_str(&format!("f{i},"));
    }
    out.push_str("label\n");
    for e in data {
        if e.features.len() != dim {
            return Err(Error::Shape("examples have differing dimensions".into()));
        }
        for x in e.features.as_slice() {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{}\n", e.label));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn read_dataset_csv(path: &Path) -> Result<Vec<LabeledExample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.last() != Some(&"label") || cols.len() < 2 {
        return Err(parse_err(1, "header must end with 'label'".into()));
    }
    let dim = cols.len() - 1;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .trim_end()
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        if values.len() != dim + 1 {
            return Err(parse_err(lineno, format!("expected {} columns, got {}", dim + 1, values.len())));
        }
        let label = values[dim];
        out.push(LabeledExample::new(values[..dim].to_vec(), label));
    }
    Ok(out)
}
