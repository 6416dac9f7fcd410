//! Per-frame tracking update: cost estimation, assignment, target update,
//! loss-counter bookkeeping, deletion and track creation. No motion model is
//! run; a track's dynamics live only in its state history.

use crate::assign::{build_cost_matrix, gate_and_assign, CostMatrix, GATED};
use crate::error::{Error, Result};
use crate::features::window_dim;
use crate::geometry::{BoundingBox, FrameDimensions};
use crate::mlp::MlpModel;
use crate::track::{Detection, Track};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Tracks whose loss counter exceeds this are deleted.
    pub l_max: u32,
    /// Pairs costing more than this are never associated.
    pub c_max: f64,
    /// Window entity count (candidate plus `window - 1` states).
    pub window: usize,
    pub min_confidence: f64,
    pub frame: FrameDimensions,
}

impl TrackerConfig {
    pub fn new(frame: FrameDimensions) -> Self {
        Self {
            l_max: 3,
            c_max: 0.0,
            window: 5,
            min_confidence: 0.3,
            frame,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_max < 1 {
            return Err(Error::Config("lmax must be at least 1".into()));
        }
        if self.window < 2 {
            return Err(Error::Config(format!("window must be at least 2, got {}", self.window)));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!(
                "min-conf must be in [0, 1], got {}",
                self.min_confidence
            )));
        }
        if !self.c_max.is_finite() {
            return Err(Error::Config("cmax must be finite".into()));
        }
        Ok(())
    }
}

/// Produces the (gated) association cost of every track/detection pair.
pub trait CostEstimator: Send + Sync {
    fn estimate(
        &self,
        tracks: &[Track],
        detections: &[Detection],
        window: usize,
        frame: &FrameDimensions,
        c_max: f64,
    ) -> Result<CostMatrix>;
}

/// The learned estimator: one batched forward pass per frame.
#[derive(Debug, Clone)]
pub struct MlpEstimator {
    pub model: MlpModel,
}

impl MlpEstimator {
    pub fn new(model: MlpModel) -> Self {
        Self { model }
    }
}

impl CostEstimator for MlpEstimator {
    fn estimate(
        &self,
        tracks: &[Track],
        detections: &[Detection],
        window: usize,
        frame: &FrameDimensions,
        c_max: f64,
    ) -> Result<CostMatrix> {
        build_cost_matrix(tracks, detections, &self.model, window, frame, c_max)
    }
}

/// Wraps a per-pair cost function, e.g. a ground-truth oracle in tests.
pub struct FnEstimator<F>(pub F);

impl<F> CostEstimator for FnEstimator<F>
where
    F: Fn(&Track, &Detection) -> f64 + Send + Sync,
{
    fn estimate(
        &self,
        tracks: &[Track],
        detections: &[Detection],
        _window: usize,
        _frame: &FrameDimensions,
        c_max: f64,
    ) -> Result<CostMatrix> {
        let mut data = Vec::with_capacity(tracks.len() * detections.len());
        for t in tracks {
            for d in detections {
                let c = (self.0)(t, d);
                data.push(if c > c_max { GATED } else { c });
            }
        }
        CostMatrix::new(tracks.len(), detections.len(), data)
    }
}

/// One output row: a confirmed track's box at a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    pub tracks: Vec<Track>,
    /// Next id to issue; ids start at 1.
    pub next_id: u64,
    /// Number of steps taken.
    pub iteration: u64,
    pub last_frame: Option<u32>,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            tracks: Vec::new(),
            next_id: 1,
            iteration: 0,
            last_frame: None,
        }
    }
}

impl TrackerState {
    pub fn ids_issued(&self) -> u64 {
        self.next_id - 1
    }
}

/// Per-step bookkeeping, mostly for invariant checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepSummary {
    pub matched: usize,
    pub deleted: usize,
    pub created: usize,
}

/// Advances `state` by one frame and returns the confirmed tracks' records.
pub fn step(
    state: &mut TrackerState,
    frame: u32,
    detections: &[Detection],
    estimator: &dyn CostEstimator,
    cfg: &TrackerConfig,
) -> Result<Vec<TrackRecord>> {
    step_with_summary(state, frame, detections, estimator, cfg).map(|(records, _)| records)
}

pub fn step_with_summary(
    state: &mut TrackerState,
    frame: u32,
    detections: &[Detection],
    estimator: &dyn CostEstimator,
    cfg: &TrackerConfig,
) -> Result<(Vec<TrackRecord>, StepSummary)> {
    if let Some(last) = state.last_frame {
        if frame <= last {
            return Err(Error::Input(format!(
                "frame {frame} does not come after frame {last}"
            )));
        }
    }
    let mut retained = Vec::with_capacity(detections.len());
    for d in detections {
        if d.frame != frame {
            return Err(Error::Input(format!(
                "detection from frame {} passed to frame {frame}",
                d.frame
            )));
        }
        if d.confidence >= cfg.min_confidence {
            d.appearance()?;
            retained.push(d.clone());
        }
    }

    for t in &mut state.tracks {
        t.age += 1;
    }

    let costs = estimator.estimate(&state.tracks, &retained, cfg.window, &cfg.frame, cfg.c_max)?;
    if costs.rows() != state.tracks.len() || costs.cols() != retained.len() {
        return Err(Error::Shape(format!(
            "estimator returned a {}x{} matrix for {} tracks and {} detections",
            costs.rows(),
            costs.cols(),
            state.tracks.len(),
            retained.len()
        )));
    }
    let assignment = gate_and_assign(&costs, cfg.c_max);
    let mut summary = StepSummary {
        matched: assignment.matches.len(),
        ..Default::default()
    };

    for m in &assignment.matches {
        state.tracks[m.track].update(retained[m.detection].to_state()?);
    }
    let mut keep = vec![true; state.tracks.len()];
    for &i in &assignment.unmatched_tracks {
        let t = &mut state.tracks[i];
        t.mark_missed();
        if t.tentative || t.loss_counter > cfg.l_max {
            keep[i] = false;
        }
    }
    let before = state.tracks.len();
    let mut flags = keep.into_iter();
    state.tracks.retain(|_| flags.next().unwrap_or(true));
    summary.deleted = before - state.tracks.len();

    for &j in &assignment.unmatched_detections {
        let id = state.next_id;
        state.next_id += 1;
        state
            .tracks
            .push(Track::new(id, retained[j].to_state()?, cfg.window));
        summary.created += 1;
    }

    state.iteration += 1;
    state.last_frame = Some(frame);

    let records = state
        .tracks
        .iter()
        .filter(|t| !t.tentative)
        .map(|t| TrackRecord {
            frame,
            id: t.id,
            bbox: t.newest().bbox,
        })
        .collect();
    Ok((records, summary))
}

/// Runs the tracker over frames given in strictly increasing order; frames
/// missing between two entries are stepped with no detections.
pub fn run_sequence(
    frames: &[(u32, Vec<Detection>)],
    estimator: &dyn CostEstimator,
    cfg: &TrackerConfig,
) -> Result<Vec<TrackRecord>> {
    cfg.validate()?;
    for w in frames.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Input(format!(
                "frames out of order: {} follows {}",
                w[1].0, w[0].0
            )));
        }
    }
    let mut state = TrackerState::default();
    let mut out = Vec::new();
    let mut next = frames.first().map_or(1, |f| f.0);
    for (frame, dets) in frames {
        while next < *frame {
            out.extend(step(&mut state, next, &[], estimator, cfg)?);
            next += 1;
        }
        out.extend(step(&mut state, *frame, dets, estimator, cfg)?);
        next = frame + 1;
    }
    Ok(out)
}

/// Checks the model's input width against the configured window.
pub fn check_model_window(model: &MlpModel, window: usize) -> Result<()> {
    if model.input_dim() != window_dim(window) {
        return Err(Error::Config(format!(
            "model input dimension {} does not match window {window} (needs {})",
            model.input_dim(),
            window_dim(window)
        )));
    }
    Ok(())
}
