//! CLEAR-MOT evaluation (MOTA, MOTP, MT, ML, ID switches, fragmentations)
//! and tracking throughput measurement.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::time::Instant;

use crate::assign::{gate_and_assign, CostMatrix, GATED};
use crate::dataset::GroundTruthTrack;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::tracker::TrackRecord;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
const MOSTLY_TRACKED: f64 = 0.8;
const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatch {
    /// `(gt id, hypothesis id, iou)`, sorted by gt id.
    pub pairs: Vec<(u64, u64, f64)>,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
}

/// Matches one frame. `prior` maps each gt id to the hypothesis it was last
/// matched with; such pairs are kept while their IoU clears the threshold,
/// and the rest are matched by Hungarian on `1 - IoU`.
pub fn match_frame(
    gt: &[(u64, BoundingBox)],
    hyp: &[(u64, BoundingBox)],
    prior: &HashMap<u64, u64>,
    iou_threshold: f64,
) -> FrameMatch {
    let mut gt: Vec<_> = gt.to_vec();
    let mut hyp: Vec<_> = hyp.to_vec();
    gt.sort_by_key(|g| g.0);
    hyp.sort_by_key(|h| h.0);

    let mut gt_done = vec![false; gt.len()];
    let mut hyp_done = vec![false; hyp.len()];
    let mut pairs = Vec::new();
    let mut id_switches = 0;

    for (gi, (gid, gbox)) in gt.iter().enumerate() {
        let Some(&hid) = prior.get(gid) else { continue };
        let Ok(hi) = hyp.binary_search_by_key(&hid, |h| h.0) else { continue };
        if hyp_done[hi] {
            continue;
        }
        let iou = gbox.iou(&hyp[hi].1);
        if iou >= iou_threshold {
            gt_done[gi] = true;
            hyp_done[hi] = true;
            pairs.push((*gid, hid, iou));
        }
    }

    let free_gt: Vec<usize> = (0..gt.len()).filter(|&i| !gt_done[i]).collect();
    let free_hyp: Vec<usize> = (0..hyp.len()).filter(|&j| !hyp_done[j]).collect();
    let mut costs = CostMatrix::filled(free_gt.len(), free_hyp.len(), GATED);
    for (r, &gi) in free_gt.iter().enumerate() {
        for (c, &hj) in free_hyp.iter().enumerate() {
            let iou = gt[gi].1.iou(&hyp[hj].1);
            if iou >= iou_threshold {
                costs.set(r, c, 1.0 - iou);
            }
        }
    }
    for m in gate_and_assign(&costs, 1.0).matches {
        let (gid, gbox) = &gt[free_gt[m.track]];
        let (hid, hbox) = &hyp[free_hyp[m.detection]];
        if prior.get(gid).is_some_and(|prev| prev != hid) {
            id_switches += 1;
        }
        pairs.push((*gid, *hid, gbox.iou(hbox)));
    }
    pairs.sort_by_key(|p| p.0);

    FrameMatch {
        false_positives: hyp.len() - pairs.len(),
        false_negatives: gt.len() - pairs.len(),
        id_switches,
        pairs,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub mota: f64,
    /// Mean IoU of matched pairs.
    pub motp: f64,
    /// Fraction of gt trajectories covered for at least 80% of their life.
    pub mt: f64,
    /// Fraction of gt trajectories covered for at most 20% of their life.
    pub ml: f64,
    pub id_switches: usize,
    pub fragmentations: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Total ground-truth boxes.
    pub gt: usize,
    /// Tracking-only throughput, when measured.
    pub hz: Option<f64>,
    pub matches: usize,
    pub iou_sum: f64,
    pub gt_trajectories: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
}

impl EvalReport {
    fn finish(mut self) -> Self {
        let errors = (self.false_negatives + self.false_positives + self.id_switches) as f64;
        self.mota = 1.0 - errors / self.gt.max(1) as f64;
        self.motp = if self.matches == 0 { 0.0 } else { self.iou_sum / self.matches as f64 };
        let n = self.gt_trajectories.max(1) as f64;
        self.mt = self.mostly_tracked as f64 / n;
        self.ml = self.mostly_lost as f64 / n;
        self
    }

    /// Pools the counts of several sequences.
    pub fn aggregate(reports: &[EvalReport]) -> EvalReport {
        let mut total = EvalReport::default();
        for r in reports {
            total.id_switches += r.id_switches;
            total.fragmentations += r.fragmentations;
            total.false_positives += r.false_positives;
            total.false_negatives += r.false_negatives;
            total.gt += r.gt;
            total.matches += r.matches;
            total.iou_sum += r.iou_sum;
            total.gt_trajectories += r.gt_trajectories;
            total.mostly_tracked += r.mostly_tracked;
            total.mostly_lost += r.mostly_lost;
        }
        // frames-weighted mean of the per-sequence rates is not meaningful, so
        // the pooled Hz is left to the caller
        total.finish()
    }

    pub const CSV_HEADER: &'static str = "sequence,mota,motp,mt,ml,idsw,fm,fp,fn,gt,hz";

    pub fn csv_row(&self, sequence: &str) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            sequence,
            self.mota,
            self.motp,
            self.mt,
            self.ml,
            self.id_switches,
            self.fragmentations,
            self.false_positives,
            self.false_negatives,
            self.gt,
            self.hz.map_or(String::new(), |h| h.to_string())
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>8} {:>7} {:>7} {:>6} {:>6} {:>7} {:>7} {:>7} {:>9}", "MOTA", "MOTP", "MT", "ML", "IDSW", "FM", "FP", "FN", "GT", "Hz")?;
        write!(
            f,
            "{:>7.2}% {:>7.2}% {:>6.1}% {:>6.1}% {:>6} {:>6} {:>7} {:>7} {:>7} {:>9}",
            self.mota * 100.0,
            self.motp * 100.0,
            self.mt * 100.0,
            self.ml * 100.0,
            self.id_switches,
            self.fragmentations,
            self.false_positives,
            self.false_negatives,
            self.gt,
            self.hz.map_or("-".to_string(), |h| format!("{h:.1}"))
        )
    }
}

/// Frame-by-frame CLEAR-MOT accumulation.
#[derive(Debug, Default)]
pub struct ClearMotAccumulator {
    iou_threshold: f64,
    last_match: HashMap<u64, u64>,
    report: EvalReport,
    coverage: BTreeMap<u64, Coverage>,
}

#[derive(Debug, Default, Clone)]
struct Coverage {
    present: usize,
    matched: usize,
    fragments: usize,
    last_matched: bool,
    ever_matched: bool,
}

impl ClearMotAccumulator {
    pub fn new(iou_threshold: f64) -> Self {
        Self { iou_threshold, ..Default::default() }
    }

    pub fn update(&mut self, gt: &[(u64, BoundingBox)], hyp: &[(u64, BoundingBox)]) -> FrameMatch {
        let m = match_frame(gt, hyp, &self.last_match, self.iou_threshold);
        let matched: HashSet<u64> = m.pairs.iter().map(|p| p.0).collect();
        for (gid, _) in gt {
            let c = self.coverage.entry(*gid).or_default();
            c.present += 1;
            if matched.contains(gid) {
                c.matched += 1;
                if c.ever_matched && !c.last_matched {
                    c.fragments += 1;
                }
                c.ever_matched = true;
                c.last_matched = true;
            } else {
                c.last_matched = false;
            }
        }
        for &(g, h, iou) in &m.pairs {
            self.last_match.insert(g, h);
            self.report.iou_sum += iou;
        }
        self.report.matches += m.pairs.len();
        self.report.false_positives += m.false_positives;
        self.report.false_negatives += m.false_negatives;
        self.report.id_switches += m.id_switches;
        self.report.gt += gt.len();
        m
    }

    pub fn finish(mut self) -> EvalReport {
        for c in self.coverage.values() {
            let ratio = c.matched as f64 / c.present.max(1) as f64;
            self.report.gt_trajectories += 1;
            if ratio >= MOSTLY_TRACKED {
                self.report.mostly_tracked += 1;
            } else if ratio <= MOSTLY_LOST {
                self.report.mostly_lost += 1;
            }
            self.report.fragmentations += c.fragments;
        }
        self.report.finish()
    }
}

type Boxes = Vec<(u64, BoundingBox)>;

/// Scores tracker output against ground truth.
pub fn evaluate(gt: &[GroundTruthTrack], results: &[TrackRecord], iou_threshold: f64) -> Result<EvalReport> {
    let mut by_frame: BTreeMap<u32, (Boxes, Boxes)> = BTreeMap::new();
    for t in gt {
        for s in t.states() {
            by_frame.entry(s.frame).or_default().0.push((t.id, s.bbox));
        }
    }
    let mut seen = HashSet::with_capacity(results.len());
    for r in results {
        if !seen.insert((r.frame, r.id)) {
            return Err(Error::Input(format!(
                "duplicate result row for frame {} id {}",
                r.frame, r.id
            )));
        }
        by_frame.entry(r.frame).or_default().1.push((r.id, r.bbox));
    }
    let mut acc = ClearMotAccumulator::new(iou_threshold);
    for (g, h) in by_frame.values() {
        acc.update(g, h);
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputStats {
    pub mean_hz: f64,
    /// Sample standard deviation over repetitions.
    pub std_hz: f64,
    pub runs_hz: Vec<f64>,
}

fn summarize(runs_hz: Vec<f64>) -> ThroughputStats {
    let n = runs_hz.len();
    let mean = if n == 0 { 0.0 } else { runs_hz.iter().sum::<f64>() / n as f64 };
    let std = if n < 2 {
        0.0
    } else {
        (runs_hz.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    ThroughputStats { mean_hz: mean, std_hz: std, runs_hz }
}

/// Times `run` (which must process `frames` frames) `repetitions` times.
/// Anything expensive that is not tracking, such as descriptor extraction,
/// belongs outside the closure.
pub fn measure_throughput<E>(
    frames: usize,
    repetitions: usize,
    mut run: impl FnMut() -> std::result::Result<(), E>,
) -> std::result::Result<ThroughputStats, E> {
    if frames == 0 {
        return Ok(summarize(vec![0.0; repetitions]));
    }
    let mut runs = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        run()?;
        let secs = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
        runs.push(frames as f64 / secs);
    }
    Ok(summarize(runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64) -> BoundingBox {
        BoundingBox::from_corner(x, 0.0, 10.0, 20.0).unwrap()
    }

    #[test]
    fn perfect_frame() {
        let gt = vec![(1, b(0.0)), (2, b(100.0))];
        let m = match_frame(&gt, &gt, &HashMap::new(), 0.5);
        assert_eq!((m.false_positives, m.false_negatives, m.id_switches), (0, 0, 0));
        assert_eq!(m.pairs.len(), 2);
    }

    #[test]
    fn empty_hypotheses_are_all_misses() {
        let gt = vec![(1, b(0.0)), (2, b(100.0)), (3, b(200.0))];
        let m = match_frame(&gt, &[], &HashMap::new(), 0.5);
        assert_eq!(m.false_negatives, 3);
        assert_eq!(m.false_positives, 0);
    }

    #[test]
    fn low_overlap_does_not_match() {
        // iou 1/3
        let m = match_frame(&[(1, b(0.0))], &[(9, b(5.0))], &HashMap::new(), 0.5);
        assert_eq!((m.false_positives, m.false_negatives), (1, 1));
    }

    #[test]
    fn hypothesis_handover_is_one_switch() {
        let mut acc = ClearMotAccumulator::new(0.5);
        for f in 1..=10u64 {
            let hid = if f <= 5 { 1 } else { 2 };
            acc.update(&[(7, b(f as f64))], &[(hid, b(f as f64))]);
        }
        let r = acc.finish();
        assert_eq!(r.id_switches, 1);
        assert_eq!(r.false_negatives + r.false_positives, 0);
    }

    #[test]
    fn persistence_beats_better_overlap() {
        let mut prior = HashMap::new();
        prior.insert(1, 10);
        // hyp 11 overlaps perfectly, hyp 10 still clears the threshold
        let m = match_frame(&[(1, b(0.0))], &[(10, b(1.0)), (11, b(0.0))], &prior, 0.5);
        assert_eq!(m.pairs[0].1, 10);
        assert_eq!(m.id_switches, 0);
        assert_eq!(m.false_positives, 1);
    }

    #[test]
    fn duplicate_results_are_rejected() {
        let r = TrackRecord { frame: 1, id: 1, bbox: b(0.0) };
        assert!(matches!(evaluate(&[], &[r, r], 0.5), Err(Error::Input(_))));
    }

    #[test]
    fn throughput_statistics() {
        let s = measure_throughput::<()>(0, 3, || Ok(())).unwrap();
        assert_eq!(s.mean_hz, 0.0);
        assert_eq!(s.runs_hz.len(), 3);
        assert_eq!(summarize(vec![5.0, 5.0, 5.0]).std_hz, 0.0);
        assert!(summarize(vec![4.0, 5.0, 6.0]).std_hz > 0.0);
        let s = measure_throughput::<()>(10, 3, || Ok(())).unwrap();
        assert!(s.mean_hz > 0.0);
    }

    #[test]
    fn csv_row_shape() {
        let r = EvalReport { gt: 10, false_negatives: 2, ..Default::default() }.finish();
        let row = r.csv_row("seq");
        assert_eq!(row.split(',').count(), EvalReport::CSV_HEADER.split(',').count());
        assert!(row.starts_with("seq,0.8,"));
        assert!(row.ends_with(','));
    }
}
