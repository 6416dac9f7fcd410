//! Synthetic multi-target sequences: constant-velocity targets with bounded
//! Gaussian jitter, per-target appearance descriptors, missed detections and
//! clutter.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{GroundTruthState, GroundTruthTrack};
use crate::assign::{CostMatrix, GATED};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, FrameDimensions};
use crate::tracker::CostEstimator;
use crate::track::{Descriptor, Detection, Track};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub targets: usize,
    pub frames: u32,
    /// Standard deviation (pixels) of motion and detection jitter.
    pub motion_noise: f64,
    pub drop_rate: f64,
    /// Expected clutter detections per target per frame.
    pub fp_rate: f64,
    /// 0 gives every target the same base descriptor, 1 independent ones.
    pub descriptor_separation: f64,
    pub descriptor_dim: usize,
    /// Standard deviation (radians) of the per-frame descriptor rotation.
    pub descriptor_noise: f64,
    pub frame: FrameDimensions,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            targets: 10,
            frames: 600,
            motion_noise: 1.0,
            drop_rate: 0.05,
            fp_rate: 0.05,
            descriptor_separation: 0.9,
            descriptor_dim: 32,
            descriptor_noise: 0.1,
            frame: FrameDimensions { width: 1920.0, height: 1080.0 },
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.targets == 0 || self.frames == 0 {
            return Err(Error::Config(format!(
                "need at least one target and one frame, got {} targets and {} frames",
                self.targets, self.frames
            )));
        }
        for (name, v) in [("drop rate", self.drop_rate), ("fp rate", self.fp_rate), ("descriptor separation", self.descriptor_separation)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.motion_noise.is_nan() || self.motion_noise < 0.0 || self.descriptor_noise.is_nan() || self.descriptor_noise < 0.0 {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if self.descriptor_dim < 2 {
            return Err(Error::Config("descriptor dimension must be at least 2".into()));
        }
        if self.frame.height < 4.0 * self.max_height() || self.frame.width < 4.0 * self.max_height() {
            return Err(Error::Config("frame too small for the synthetic targets".into()));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.frame.height / 1080.0
    }

    fn max_height(&self) -> f64 {
        200.0 * self.scale()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub ground_truth: Vec<GroundTruthTrack>,
    /// One entry per frame `1..=frames`, possibly empty.
    pub detections: Vec<(u32, Vec<Detection>)>,
    /// Ground-truth id behind each detection, `None` for clutter.
    pub sources: Vec<Vec<Option<u64>>>,
    /// Per-target maximum speed (pixels per frame, per axis).
    pub speeds: Vec<f64>,
}

impl SyntheticSequence {
    pub fn true_detection_count(&self) -> usize {
        self.sources.iter().flatten().filter(|s| s.is_some()).count()
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    unit((0..dim).map(|_| StandardNormal.sample(rng)).collect())
}

/// Rotates `base` by a Gaussian angle towards a random orthogonal direction.
fn perturb(base: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Descriptor {
    let values: Vec<f32> = if sigma == 0.0 {
        base.iter().map(|&x| x as f32).collect()
    } else {
        let g = random_unit(base.len(), rng);
        let dot: f64 = g.iter().zip(base).map(|(a, b)| a * b).sum();
        let e = unit(g.iter().zip(base).map(|(a, b)| a - dot * b).collect());
        let theta: f64 = Normal::new(0.0, sigma).unwrap().sample(rng);
        base.iter()
            .zip(&e)
            .map(|(b, o)| (theta.cos() * b + theta.sin() * o) as f32)
            .collect()
    };
    Descriptor::new(values)
}

fn jitter(sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let x: f64 = StandardNormal.sample(rng);
    (x * sigma).clamp(-3.0 * sigma, 3.0 * sigma)
}

fn reflect(x: f64, vel: &mut f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        *vel = -*vel;
        (2.0 * lo - x).min(hi)
    } else if x > hi {
        *vel = -*vel;
        (2.0 * hi - x).max(lo)
    } else {
        x
    }
}

pub fn generate_synthetic_sequence(cfg: &SynthConfig) -> Result<SyntheticSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.scale();
    let (fw, fh) = (cfg.frame.width, cfg.frame.height);
    let common = random_unit(cfg.descriptor_dim, &mut rng);

    struct Target {
        u: f64,
        v: f64,
        h: f64,
        r: f64,
        vu: f64,
        vv: f64,
        base: Vec<f64>,
    }
    let mut targets: Vec<Target> = (0..cfg.targets)
        .map(|_| {
            let h = rng.random_range(80.0..200.0) * s;
            let r = rng.random_range(0.35..0.5);
            let speed = rng.random_range(0.5..3.0) * s;
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let own = random_unit(cfg.descriptor_dim, &mut rng);
            let base = unit(
                common
                    .iter()
                    .zip(&own)
                    .map(|(c, o)| (1.0 - cfg.descriptor_separation) * c + cfg.descriptor_separation * o)
                    .collect(),
            );
            Target {
                u: rng.random_range(h..fw - h),
                v: rng.random_range(h..fh - h),
                h,
                r,
                vu: speed * angle.cos(),
                vv: speed * angle.sin(),
                base,
            }
        })
        .collect();
    let speeds = targets.iter().map(|t| t.vu.abs().max(t.vv.abs())).collect();

    let mut gt_states: Vec<Vec<GroundTruthState>> = vec![Vec::with_capacity(cfg.frames as usize); cfg.targets];
    let mut detections = Vec::with_capacity(cfg.frames as usize);
    let mut sources = Vec::with_capacity(cfg.frames as usize);
    for frame in 1..=cfg.frames {
        let mut dets: Vec<(Detection, Option<u64>)> = Vec::new();
        for (k, t) in targets.iter_mut().enumerate() {
            if frame > 1 {
                let half_w = t.r * t.h / 2.0;
                t.u = reflect(t.u + t.vu + jitter(cfg.motion_noise, &mut rng), &mut t.vu, half_w, fw - half_w);
                t.v = reflect(t.v + t.vv + jitter(cfg.motion_noise, &mut rng), &mut t.vv, t.h / 2.0, fh - t.h / 2.0);
            }
            let bbox = BoundingBox::new(t.u, t.v, t.h, t.r)?;
            let appearance = perturb(&t.base, cfg.descriptor_noise, &mut rng);
            gt_states[k].push(GroundTruthState { frame, bbox, appearance: Some(appearance.clone()) });
            if rng.random::<f64>() < cfg.drop_rate {
                continue;
            }
            let observed = BoundingBox::new(
                t.u + jitter(cfg.motion_noise, &mut rng),
                t.v + jitter(cfg.motion_noise, &mut rng),
                (t.h + jitter(cfg.motion_noise / 2.0, &mut rng)).max(1.0),
                t.r,
            )?;
            let conf = rng.random_range(0.5..1.0);
            dets.push((Detection::new(frame, observed, conf).with_appearance(appearance), Some(k as u64 + 1)));
        }
        for _ in 0..cfg.targets {
            if rng.random::<f64>() < cfg.fp_rate {
                let h = rng.random_range(80.0..200.0) * s;
                let r = rng.random_range(0.35..0.5);
                let bbox = BoundingBox::new(rng.random_range(h..fw - h), rng.random_range(h..fh - h), h, r)?;
                let app = perturb(&random_unit(cfg.descriptor_dim, &mut rng), 0.0, &mut rng);
                dets.push((Detection::new(frame, bbox, rng.random_range(0.3..0.9)).with_appearance(app), None));
            }
        }
        dets.shuffle(&mut rng);
        let (d, src): (Vec<_>, Vec<_>) = dets.into_iter().unzip();
        detections.push((frame, d));
        sources.push(src);
    }
    let ground_truth = gt_states
        .into_iter()
        .enumerate()
        .map(|(k, states)| GroundTruthTrack::new(k as u64 + 1, states))
        .collect::<Result<_>>()?;
    Ok(SyntheticSequence { ground_truth, detections, sources, speeds })
}

/// Ground-truth cost oracle: -1 when a detection comes from the same target
/// as the track's newest state, +1 otherwise.
#[derive(Debug, Clone, Default)]
pub struct OracleEstimator {
    lookup: HashMap<(u32, u64, u64), u64>,
}

impl OracleEstimator {
    pub fn from_sequence(seq: &SyntheticSequence) -> Self {
        let mut lookup = HashMap::new();
        for ((_, dets), src) in seq.detections.iter().zip(&seq.sources) {
            for (d, s) in dets.iter().zip(src) {
                if let Some(id) = s {
                    lookup.insert(Self::key(d.frame, &d.bbox), *id);
                }
            }
        }
        Self { lookup }
    }

    fn key(frame: u32, b: &BoundingBox) -> (u32, u64, u64) {
        (frame, b.u.to_bits(), b.v.to_bits())
    }

    pub fn source_of(&self, frame: u32, b: &BoundingBox) -> Option<u64> {
        self.lookup.get(&Self::key(frame, b)).copied()
    }
}

impl CostEstimator for OracleEstimator {
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
            let n = t.newest();
            let tid = self.source_of(n.frame, &n.bbox);
            for d in detections {
                let did = self.source_of(d.frame, &d.bbox);
                let c = if tid.is_some() && tid == did { -1.0 } else { 1.0 };
                data.push(if c > c_max { GATED } else { c });
            }
        }
        CostMatrix::new(tracks.len(), detections.len(), data)
    }
}
