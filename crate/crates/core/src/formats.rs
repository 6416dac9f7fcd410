//! MOTChallenge-style text files and the binary descriptor sidecar.
//!
//! All CSV output uses `,` separators, `.` decimals and `\n` line endings.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::dataset::{GroundTruthState, GroundTruthTrack};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::track::{Descriptor, Detection};
use crate::tracker::TrackRecord;

/// Detections of one frame. `ordinals[i]` is the position of detection `i`
/// among all rows of its frame in the source file, before confidence filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: u32,
    pub detections: Vec<Detection>,
    pub ordinals: Vec<u32>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

struct Row {
    line: usize,
    frame: u32,
    id: i64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    rest: Vec<f64>,
}

fn parse_rows(path: &Path, min_cols: usize) -> Result<Vec<Row>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() < min_cols {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected at least {min_cols} columns, got {}", fields.len()),
            });
        }
        let nums = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line, message: e.to_string() })?;
        let frame = nums[0];
        if frame < 1.0 || frame.fract() != 0.0 || frame > f64::from(u32::MAX) {
            return Err(Error::Validation {
                path: path.to_path_buf(),
                line,
                message: format!("frame must be a positive integer, got {}", fields[0]),
            });
        }
        if !(nums[4] > 0.0 && nums[5] > 0.0) {
            return Err(Error::Validation {
                path: path.to_path_buf(),
                line,
                message: format!("box width and height must be positive, got {}x{}", fields[4], fields[5]),
            });
        }
        rows.push(Row {
            line,
            frame: frame as u32,
            id: nums[1] as i64,
            x: nums[2],
            y: nums[3],
            w: nums[4],
            h: nums[5],
            rest: nums[6..].to_vec(),
        });
    }
    Ok(rows)
}

/// Reads a detection file (`frame,id,left,top,width,height,conf,...`), drops
/// rows below `min_confidence` and groups the rest by ascending frame.
pub fn parse_detections(path: &Path, min_confidence: f64) -> Result<Vec<FrameDetections>> {
    let rows = parse_rows(path, 7)?;
    let mut frames: BTreeMap<u32, FrameDetections> = BTreeMap::new();
    let mut counters: HashMap<u32, u32> = HashMap::new();
    for r in rows {
        let ordinal = counters.entry(r.frame).or_insert(0);
        let this = *ordinal;
        *ordinal += 1;
        let conf = r.rest[0];
        if conf < min_confidence {
            continue;
        }
        let bbox = BoundingBox::from_corner(r.x, r.y, r.w, r.h).map_err(|e| Error::Validation {
            path: path.to_path_buf(),
            line: r.line,
            message: e.to_string(),
        })?;
        let entry = frames.entry(r.frame).or_insert_with(|| FrameDetections {
            frame: r.frame,
            detections: Vec::new(),
            ordinals: Vec::new(),
        });
        entry.detections.push(Detection::new(r.frame, bbox, conf));
        entry.ordinals.push(this);
    }
    Ok(frames.into_values().collect())
}

pub fn write_detections(path: &Path, frames: &[FrameDetections]) -> Result<()> {
    let mut out = String::new();
    for f in frames {
        for d in &f.detections {
            let (x, y, w, h) = d.bbox.to_corner();
            out.push_str(&format!("{},-1,{},{},{},{},{},-1,-1,-1\n", f.frame, x, y, w, h, d.confidence));
        }
    }
    write_text(path, &out)
}

/// Result file rows `frame,id,left,top,width,height,1,-1,-1,-1`, sorted by frame then id.
pub fn write_results(path: &Path, records: &[TrackRecord]) -> Result<()> {
    let mut sorted: Vec<&TrackRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut out = String::with_capacity(records.len() * 48);
    for r in sorted {
        let (x, y, w, h) = r.bbox.to_corner();
        out.push_str(&format!("{},{},{},{},{},{},1,-1,-1,-1\n", r.frame, r.id, x, y, w, h));
    }
    write_text(path, &out)
}

pub fn parse_results(path: &Path) -> Result<Vec<TrackRecord>> {
    parse_rows(path, 6)?
        .into_iter()
        .map(|r| {
            if r.id < 0 {
                return Err(Error::Validation {
                    path: path.to_path_buf(),
                    line: r.line,
                    message: format!("track id must be non-negative, got {}", r.id),
                });
            }
            Ok(TrackRecord {
                frame: r.frame,
                id: r.id as u64,
                bbox: BoundingBox::from_corner(r.x, r.y, r.w, r.h)?,
            })
        })
        .collect()
}

/// Ground truth in MOT16 layout `frame,id,left,top,width,height[,consider,class,visibility]`.
/// Rows with `consider == 0` or a class other than 1 (pedestrian) are skipped.
/// Returned states carry no descriptors; see [`attach_ground_truth_descriptors`].
pub fn parse_ground_truth(path: &Path) -> Result<Vec<GroundTruthTrack>> {
    let mut tracks: BTreeMap<u64, Vec<GroundTruthState>> = BTreeMap::new();
    for r in parse_rows(path, 6)? {
        if r.rest.first() == Some(&0.0) {
            continue;
        }
        if r.rest.get(1).is_some_and(|&c| c != 1.0 && c != -1.0) {
            continue;
        }
        if r.id < 0 {
            return Err(Error::Validation {
                path: path.to_path_buf(),
                line: r.line,
                message: "ground-truth rows need a non-negative id".into(),
            });
        }
        tracks.entry(r.id as u64).or_default().push(GroundTruthState {
            frame: r.frame,
            bbox: BoundingBox::from_corner(r.x, r.y, r.w, r.h)?,
            appearance: None,
        });
    }
    tracks
        .into_iter()
        .map(|(id, mut states)| {
            states.sort_by_key(|s| s.frame);
            GroundTruthTrack::new(id, states)
        })
        .collect()
}

/// Writes ground truth as `frame,id,left,top,width,height,1,1,1`, rows ordered
/// by frame then id. Ordinals for a ground-truth descriptor sidecar follow
/// this order.
pub fn write_ground_truth(path: &Path, tracks: &[GroundTruthTrack]) -> Result<()> {
    let mut rows: Vec<(u32, u64, &BoundingBox)> = tracks
        .iter()
        .flat_map(|t| t.states().iter().map(move |s| (s.frame, t.id, &s.bbox)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::new();
    for (frame, id, b) in rows {
        let (x, y, w, h) = b.to_corner();
        out.push_str(&format!("{frame},{id},{x},{y},{w},{h},1,1,1\n"));
    }
    write_text(path, &out)
}

pub const SIDECAR_MAGIC: &[u8; 4] = b"ADSC";
pub const SIDECAR_VERSION: u32 = 1;

/// Descriptor sidecar, little-endian:
///
/// ```text
/// magic    4 bytes "ADSC"
/// version  u32     1
/// dim      u32
/// rows     u64
/// rows x { frame u32, ordinal u32, dim x f32 }
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescriptorSidecar {
    pub dim: usize,
    records: HashMap<(u32, u32), Descriptor>,
    order: Vec<(u32, u32)>,
}

impl DescriptorSidecar {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Default::default() }
    }

    pub fn insert(&mut self, frame: u32, ordinal: u32, d: Descriptor) -> Result<()> {
        if d.dim() != self.dim {
            return Err(Error::DescriptorDimension { expected: self.dim, actual: d.dim() });
        }
        if self.records.insert((frame, ordinal), d).is_some() {
            return Err(Error::Input(format!("duplicate descriptor for frame {frame}, detection {ordinal}")));
        }
        self.order.push((frame, ordinal));
        Ok(())
    }

    pub fn get(&self, frame: u32, ordinal: u32) -> Option<&Descriptor> {
        self.records.get(&(frame, ordinal))
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.len() * (8 + 4 * self.dim));
        out.extend_from_slice(SIDECAR_MAGIC);
        out.extend_from_slice(&SIDECAR_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for key in &self.order {
            out.extend_from_slice(&key.0.to_le_bytes());
            out.extend_from_slice(&key.1.to_le_bytes());
            for v in self.records[key].as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Parse { path: path.to_path_buf(), line: 0, message };
        if buf.len() < 20 || &buf[..4] != SIDECAR_MAGIC {
            return Err(bad("not a descriptor sidecar (bad magic or short header)".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != SIDECAR_VERSION {
            return Err(bad(format!("unsupported sidecar version {version}")));
        }
        let dim = u32_at(8) as usize;
        let rows = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
        let rec = 8 + 4 * dim;
        if dim == 0 || !(buf.len() - 20).is_multiple_of(rec) || (buf.len() - 20) / rec != rows {
            return Err(bad(format!(
                "header announces {rows} rows of dimension {dim}, but the body holds {} bytes",
                buf.len() - 20
            )));
        }
        let mut out = Self::new(dim);
        for chunk in buf[20..].chunks_exact(rec) {
            let frame = u32::from_le_bytes(chunk[0..4].try_into().unwrap());
            let ordinal = u32::from_le_bytes(chunk[4..8].try_into().unwrap());
            let values: Vec<f32> = chunk[8..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            out.insert(frame, ordinal, Descriptor::new(values))?;
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Scales a descriptor to unit L2 norm.
pub fn unit_normalize(d: &Descriptor) -> Result<Descriptor> {
    if d.norm() == 0.0 || !d.norm().is_finite() {
        return Err(Error::DegenerateDescriptor);
    }
    let n = d.norm();
    Ok(Descriptor::new(
        d.as_slice().iter().map(|&x| (f64::from(x) / n) as f32).collect::<Vec<_>>(),
    ))
}

pub const HISTOGRAM_BINS: usize = 8;
pub const HISTOGRAM_DIM: usize = HISTOGRAM_BINS * HISTOGRAM_BINS * HISTOGRAM_BINS;

/// 8x8x8 RGB histogram over the box crop (clipped to the image), L2-normalized.
pub fn histogram_descriptor(img: &RgbImage, bbox: &BoundingBox) -> Result<Descriptor> {
    let (x, y, w, h) = bbox.to_corner();
    let x0 = x.floor().max(0.0) as u32;
    let y0 = y.floor().max(0.0) as u32;
    let x1 = ((x + w).ceil().max(0.0) as u32).min(img.width());
    let y1 = ((y + h).ceil().max(0.0) as u32).min(img.height());
    if x0 >= x1 || y0 >= y1 {
        return Err(Error::Input(format!(
            "box ({x:.1}, {y:.1}, {w:.1}, {h:.1}) lies outside the {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let shift = 8 - HISTOGRAM_BINS.trailing_zeros();
    let mut hist = vec![0f32; HISTOGRAM_DIM];
    for py in y0..y1 {
        for px in x0..x1 {
            let [r, g, b] = img.get_pixel(px, py).0;
            let idx = ((r >> shift) as usize * HISTOGRAM_BINS + (g >> shift) as usize) * HISTOGRAM_BINS
                + (b >> shift) as usize;
            hist[idx] += 1.0;
        }
    }
    unit_normalize(&Descriptor::new(hist))
}

/// Where detection descriptors come from.
pub enum DescriptorSource<'a> {
    Sidecar(&'a DescriptorSidecar),
    /// Directory of frame images named `{frame:06}.jpg` or `{frame:06}.png`.
    Images(&'a Path),
}

pub fn frame_image_path(dir: &Path, frame: u32) -> Result<PathBuf> {
    for ext in ["jpg", "jpeg", "png"] {
        let p = dir.join(format!("{frame:06}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Input(format!("no image for frame {frame} in {}", dir.display())))
}

/// Gives every detection a unit-norm descriptor, failing on the first gap.
pub fn attach_descriptors(frames: &mut [FrameDetections], source: &DescriptorSource) -> Result<()> {
    let mut dim = None;
    for f in frames.iter_mut() {
        let img = match source {
            DescriptorSource::Images(dir) if !f.detections.is_empty() => {
                Some(image::open(frame_image_path(dir, f.frame)?)?.to_rgb8())
            }
            _ => None,
        };
        for (d, &ordinal) in f.detections.iter_mut().zip(&f.ordinals) {
            let desc = match source {
                DescriptorSource::Sidecar(s) => unit_normalize(
                    s.get(f.frame, ordinal)
                        .ok_or(Error::MissingDescriptor { frame: f.frame, ordinal })?,
                )?,
                DescriptorSource::Images(_) => histogram_descriptor(img.as_ref().unwrap(), &d.bbox)?,
            };
            match dim {
                None => dim = Some(desc.dim()),
                Some(k) if k != desc.dim() => {
                    return Err(Error::DescriptorDimension { expected: k, actual: desc.dim() })
                }
                _ => {}
            }
            d.appearance = Some(desc);
        }
    }
    Ok(())
}

/// Attaches descriptors to ground-truth states. Ordinals follow the
/// frame-then-id row order of [`write_ground_truth`].
pub fn attach_ground_truth_descriptors(tracks: &mut [GroundTruthTrack], sidecar: &DescriptorSidecar) -> Result<()> {
    let mut keys: Vec<(u32, u64, usize, usize)> = tracks
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| t.states().iter().enumerate().map(move |(si, s)| (s.frame, t.id, ti, si)))
        .collect();
    keys.sort_unstable();
    let mut updated: Vec<Vec<GroundTruthState>> = tracks.iter().map(|t| t.states().to_vec()).collect();
    let mut ordinal = 0u32;
    let mut current = None;
    for (frame, _, ti, si) in keys {
        if current != Some(frame) {
            current = Some(frame);
            ordinal = 0;
        }
        let d = sidecar
            .get(frame, ordinal)
            .ok_or(Error::MissingDescriptor { frame, ordinal })?;
        updated[ti][si].appearance = Some(unit_normalize(d)?);
        ordinal += 1;
    }
    for (t, states) in tracks.iter_mut().zip(updated) {
        *t = GroundTruthTrack::new(t.id, states)?;
    }
    Ok(())
}
