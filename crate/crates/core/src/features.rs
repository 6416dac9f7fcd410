//! Pairwise and sliding-window association features.
//!
//! A pair block is `[u, v, h, r, du, dv, dh, dr, da, dt]`: the older
//! element's frame-normalized geometry, height-normalized box deltas, the
//! appearance cosine distance and the staleness in iterations. A window
//! stacks the candidate/newest-state block with the blocks between
//! consecutive history states, newest first.

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, FrameDimensions};
use crate::track::{Descriptor, Detection, TargetState, Track};

pub const PAIR_DIM: usize = 10;

/// Anything with a box and (possibly) an appearance descriptor.
pub trait Observation {
    fn bbox(&self) -> &BoundingBox;
    fn appearance(&self) -> Result<&Descriptor>;
}

impl Observation for TargetState {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
    fn appearance(&self) -> Result<&Descriptor> {
        Ok(&self.appearance)
    }
}

impl Observation for Detection {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
    fn appearance(&self) -> Result<&Descriptor> {
        Detection::appearance(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFeatures(pub [f64; PAIR_DIM]);

impl PairFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn deltas(&self) -> &[f64] {
        &self.0[4..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures(pub Vec<f64>);

impl WindowFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn block(&self, k: usize) -> &[f64] {
        &self.0[k * PAIR_DIM..(k + 1) * PAIR_DIM]
    }
}

/// Feature dimension for a window of `window` entities.
pub fn window_dim(window: usize) -> usize {
    PAIR_DIM * window.saturating_sub(1)
}

pub fn cosine_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    Descriptor::new(a.to_vec()).cosine_distance(&Descriptor::new(b.to_vec()))
}

fn write_pair(
    newer: &BoundingBox,
    newer_app: &Descriptor,
    older: &BoundingBox,
    older_app: &Descriptor,
    staleness: u32,
    frame: &FrameDimensions,
    out: &mut [f64],
) -> Result<()> {
    out[0] = older.u / frame.width;
    out[1] = older.v / frame.height;
    out[2] = older.h / frame.height;
    out[3] = older.r;
    out[4] = (newer.u - older.u) / older.h;
    out[5] = (newer.v - older.v) / older.h;
    out[6] = (newer.h - older.h) / older.h;
    out[7] = newer.r - older.r;
    out[8] = newer_app.cosine_distance(older_app)?;
    out[9] = f64::from(staleness);
    Ok(())
}

pub fn pair_features<N: Observation + ?Sized>(
    newer: &N,
    older: &TargetState,
    staleness: u32,
    frame: &FrameDimensions,
) -> Result<PairFeatures> {
    let mut out = [0.0; PAIR_DIM];
    write_pair(
        newer.bbox(),
        newer.appearance()?,
        &older.bbox,
        &older.appearance,
        staleness,
        frame,
        &mut out,
    )?;
    Ok(PairFeatures(out))
}

fn check_window(track: &Track, window: usize) -> Result<()> {
    if window < 2 {
        return Err(Error::Config(format!("window must be at least 2, got {window}")));
    }
    if track.history().is_empty() {
        return Err(Error::InvalidTrack(format!("track {} has empty history", track.id)));
    }
    Ok(())
}

/// Writes blocks `1..window-1` (the candidate-independent part) into `out`,
/// which must hold `10 * (window - 2)` values.
pub fn write_history_blocks(
    track: &Track,
    window: usize,
    frame: &FrameDimensions,
    out: &mut [f64],
) -> Result<()> {
    check_window(track, window)?;
    let hist = track.history();
    let n = hist.len();
    let oldest = &hist[0];
    for (k, block) in out.chunks_exact_mut(PAIR_DIM).take(window - 2).enumerate() {
        // block k+1 pairs state (n-1-k) with its predecessor (n-2-k)
        if k + 2 <= n {
            let newer = &hist[n - 1 - k];
            let older = &hist[n - 2 - k];
            let gap = newer.frame.saturating_sub(older.frame).saturating_sub(1);
            write_pair(
                &newer.bbox,
                &newer.appearance,
                &older.bbox,
                &older.appearance,
                gap,
                frame,
                block,
            )?;
        } else {
            write_pair(
                &oldest.bbox,
                &oldest.appearance,
                &oldest.bbox,
                &oldest.appearance,
                0,
                frame,
                block,
            )?;
        }
    }
    Ok(())
}

/// Writes the head block (candidate against the newest state, staleness =
/// the track's loss counter).
pub fn write_head_block<N: Observation + ?Sized>(
    track: &Track,
    candidate: &N,
    frame: &FrameDimensions,
    out: &mut [f64],
) -> Result<()> {
    let newest = track.newest();
    write_pair(
        candidate.bbox(),
        candidate.appearance()?,
        &newest.bbox,
        &newest.appearance,
        track.loss_counter,
        frame,
        &mut out[..PAIR_DIM],
    )
}

pub fn window_features<N: Observation + ?Sized>(
    track: &Track,
    candidate: &N,
    window: usize,
    frame: &FrameDimensions,
) -> Result<WindowFeatures> {
    check_window(track, window)?;
    let mut out = vec![0.0; window_dim(window)];
    write_head_block(track, candidate, frame, &mut out)?;
    write_history_blocks(track, window, frame, &mut out[PAIR_DIM..])?;
    Ok(WindowFeatures(out))
}
