//! Detection, target-state and track data model.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Tracks stay tentative until they have been associated this many times
/// (creation counts as the first association).
pub const TENTATIVE_AGE: u32 = 3;

/// Appearance descriptor. Cheap to clone; the values are shared.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Arc<[f32]>,
    norm: f64,
}

impl Descriptor {
    pub fn new(values: impl Into<Arc<[f32]>>) -> Self {
        let values = values.into();
        let norm = values
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt();
        Self { values, norm }
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// `1 - cos(angle)` between two descriptors, in `[0, 2]`.
    pub fn cosine_distance(&self, other: &Descriptor) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DescriptorDimension {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        if self.norm == 0.0 || other.norm == 0.0 {
            return Err(Error::DegenerateDescriptor);
        }
        let dot: f64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        Ok((1.0 - dot / (self.norm * other.norm)).clamp(0.0, 2.0))
    }
}

impl From<Vec<f32>> for Descriptor {
    fn from(v: Vec<f32>) -> Self {
        Descriptor::new(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// 1-based frame index.
    pub frame: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub appearance: Option<Descriptor>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BoundingBox, confidence: f64) -> Self {
        Self {
            frame,
            bbox,
            confidence,
            appearance: None,
        }
    }

    pub fn with_appearance(mut self, appearance: Descriptor) -> Self {
        self.appearance = Some(appearance);
        self
    }

    pub fn appearance(&self) -> Result<&Descriptor> {
        self.appearance
            .as_ref()
            .ok_or(Error::MissingAppearance { frame: self.frame })
    }

    pub fn to_state(&self) -> Result<TargetState> {
        Ok(TargetState {
            bbox: self.bbox,
            appearance: self.appearance()?.clone(),
            frame: self.frame,
        })
    }
}

/// A target's observed state: box, appearance and the frame it was seen in.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub bbox: BoundingBox,
    pub appearance: Descriptor,
    pub frame: u32,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    history: VecDeque<TargetState>,
    capacity: usize,
    /// Consecutive iterations without an association.
    pub loss_counter: u32,
    /// Successful associations, creation included.
    pub hits: u32,
    /// Tracking iterations since creation.
    pub age: u32,
    pub tentative: bool,
}

impl Track {
    /// Starts a new tentative track. `capacity` bounds the history ring.
    pub fn new(id: u64, initial: TargetState, capacity: usize) -> Self {
        let capacity = capacity.max(1);
        let mut history = VecDeque::with_capacity(capacity);
        history.push_back(initial);
        Self {
            id,
            history,
            capacity,
            loss_counter: 0,
            hits: 1,
            age: 0,
            tentative: TENTATIVE_AGE > 1,
        }
    }

    /// Builds a confirmed track from an explicit history (oldest first).
    pub fn from_history(id: u64, states: Vec<TargetState>, capacity: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidTrack("empty history".into()));
        }
        let capacity = capacity.max(1);
        let skip = states.len().saturating_sub(capacity);
        let history: VecDeque<_> = states.into_iter().skip(skip).collect();
        let hits = history.len() as u32;
        Ok(Self {
            id,
            history,
            capacity,
            loss_counter: 0,
            hits,
            age: hits.saturating_sub(1),
            tentative: hits < TENTATIVE_AGE,
        })
    }

    /// States oldest first, newest last.
    pub fn history(&self) -> &VecDeque<TargetState> {
        &self.history
    }

    pub fn newest(&self) -> &TargetState {
        self.history.back().expect("track history is never empty")
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Absorbs a matched observation.
    pub fn update(&mut self, state: TargetState) {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(state);
        self.loss_counter = 0;
        self.hits += 1;
        if self.tentative && self.hits >= TENTATIVE_AGE {
            self.tentative = false;
        }
    }

    pub fn mark_missed(&mut self) {
        self.loss_counter += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(frame: u32, u: f64) -> TargetState {
        TargetState {
            bbox: BoundingBox::new(u, 10.0, 20.0, 0.5).unwrap(),
            appearance: Descriptor::new(vec![1.0, 0.0]),
            frame,
        }
    }

    #[test]
    fn cosine_distance_examples() {
        let a = Descriptor::new(vec![1.0, 0.0]);
        let b = Descriptor::new(vec![0.0, 1.0]);
        let c = Descriptor::new(vec![-1.0, 0.0]);
        let d = Descriptor::new(vec![3.0, 4.0]);
        assert_eq!(a.cosine_distance(&a).unwrap(), 0.0);
        assert!(d.cosine_distance(&d).unwrap().abs() < 1e-12);
        assert!((a.cosine_distance(&b).unwrap() - 1.0).abs() < 1e-12);
        assert!((a.cosine_distance(&c).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_distance_errors() {
        let a = Descriptor::new(vec![1.0, 0.0]);
        let z = Descriptor::new(vec![0.0, 0.0]);
        let long = Descriptor::new(vec![1.0, 0.0, 0.0]);
        assert!(matches!(a.cosine_distance(&z), Err(Error::DegenerateDescriptor)));
        assert!(matches!(
            a.cosine_distance(&long),
            Err(Error::DescriptorDimension { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn history_ring_evicts_oldest() {
        let mut t = Track::new(1, state(1, 0.0), 3);
        for f in 2..=5 {
            t.update(state(f, f as f64));
        }
        let frames: Vec<u32> = t.history().iter().map(|s| s.frame).collect();
        assert_eq!(frames, vec![3, 4, 5]);
        assert_eq!(t.newest().frame, 5);
    }

    #[test]
    fn confirms_on_third_association() {
        let mut t = Track::new(7, state(1, 0.0), 5);
        assert!(t.tentative);
        t.update(state(2, 0.0));
        assert!(t.tentative);
        t.update(state(3, 0.0));
        assert!(!t.tentative);
        t.mark_missed();
        assert_eq!(t.loss_counter, 1);
        t.update(state(5, 0.0));
        assert_eq!(t.loss_counter, 0);
    }

    #[test]
    fn missing_appearance_is_reported() {
        let d = Detection::new(4, BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), 0.9);
        assert!(matches!(d.to_state(), Err(Error::MissingAppearance { frame: 4 })));
    }
}
