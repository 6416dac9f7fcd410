//! Batched association costs, Hungarian assignment and threshold gating.

use crate::error::{Error, Result};
use crate::features::{window_dim, write_head_block, write_history_blocks, PAIR_DIM};
use crate::geometry::FrameDimensions;
use crate::mlp::MlpModel;
use crate::track::{Detection, Track};

/// Marks a pair that was gated out before assignment.
pub const GATED: f64 = f64::INFINITY;

/// Row-major `tracks x detections` cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Shape(format!("row {i} is not {cols} wide")));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_gated(&self, r: usize, c: usize) -> bool {
        self.get(r, c) == GATED
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Replaces every entry strictly greater than `c_max` with [`GATED`].
    pub fn gate(&mut self, c_max: f64) {
        for v in &mut self.data {
            if *v > c_max {
                *v = GATED;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub track: usize,
    pub detection: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssignmentResult {
    pub matches: Vec<Match>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Evaluates the model on every track/detection pair in a single batched
/// forward pass, then gates entries above `c_max`.
pub fn build_cost_matrix(
    tracks: &[Track],
    detections: &[Detection],
    model: &MlpModel,
    window: usize,
    frame: &FrameDimensions,
    c_max: f64,
) -> Result<CostMatrix> {
    let (rows, cols) = (tracks.len(), detections.len());
    if rows == 0 || cols == 0 {
        return CostMatrix::new(rows, cols, Vec::new());
    }
    let dim = window_dim(window);
    if model.input_dim() != dim {
        return Err(Error::Config(format!(
            "model expects {} inputs but window {window} produces {dim}",
            model.input_dim()
        )));
    }
    let mut batch = vec![0.0; rows * cols * dim];
    let mut hist = vec![0.0; dim - PAIR_DIM];
    for (i, track) in tracks.iter().enumerate() {
        write_history_blocks(track, window, frame, &mut hist)?;
        for (j, det) in detections.iter().enumerate() {
            let row = &mut batch[(i * cols + j) * dim..(i * cols + j + 1) * dim];
            write_head_block(track, det, frame, row)?;
            row[PAIR_DIM..].copy_from_slice(&hist);
        }
    }
    let mut costs = CostMatrix::new(rows, cols, model.forward_flat(&batch)?)?;
    costs.gate(c_max);
    Ok(costs)
}

/// Minimum-cost assignment of `min(rows, cols)` pairs. Entries must be finite.
/// Returns `(row, col)` pairs sorted by row.
pub fn hungarian(costs: &CostMatrix) -> Vec<(usize, usize)> {
    if costs.is_empty() {
        return Vec::new();
    }
    if costs.rows <= costs.cols {
        solve(costs.rows, costs.cols, |r, c| costs.get(r, c))
    } else {
        let mut pairs: Vec<_> = solve(costs.cols, costs.rows, |r, c| costs.get(c, r))
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Shortest augmenting path with potentials, `n <= m`, O(n^2 m).
fn solve(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row (1-based) assigned to column j; 0 = free
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Solves the assignment with gated entries (and anything above `c_max`)
/// replaced by a sentinel larger than any feasible total, then drops the
/// sentinel matches.
pub fn gate_and_assign(costs: &CostMatrix, c_max: f64) -> AssignmentResult {
    let (rows, cols) = (costs.rows, costs.cols);
    let sentinel = (rows + cols) as f64 + 1.0;
    let feasible = |r: usize, c: usize| {
        let x = costs.get(r, c);
        x != GATED && x <= c_max && x.is_finite()
    };
    let mut work = costs.clone();
    for r in 0..rows {
        for c in 0..cols {
            if !feasible(r, c) {
                work.set(r, c, sentinel);
            }
        }
    }
    let mut track_used = vec![false; rows];
    let mut det_used = vec![false; cols];
    let mut matches = Vec::new();
    for (r, c) in hungarian(&work) {
        if feasible(r, c) {
            track_used[r] = true;
            det_used[c] = true;
            matches.push(Match { track: r, detection: c, cost: costs.get(r, c) });
        }
    }
    AssignmentResult {
        matches,
        unmatched_tracks: (0..rows).filter(|&r| !track_used[r]).collect(),
        unmatched_detections: (0..cols).filter(|&c| !det_used[c]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::track::{Descriptor, TargetState};
    use proptest::prelude::*;

    type Lookup<'a> = Box<dyn Fn(usize, usize) -> f64 + 'a>;

    fn brute_force(costs: &CostMatrix) -> f64 {
        // assign every row of the smaller side to a distinct index of the larger side
        let (n, m, get): (usize, usize, Lookup) = if costs.rows() <= costs.cols() {
            (costs.rows(), costs.cols(), Box::new(|a, b| costs.get(a, b)))
        } else {
            (costs.cols(), costs.rows(), Box::new(|a, b| costs.get(b, a)))
        };
        fn rec(k: usize, n: usize, m: usize, used: &mut Vec<bool>, get: &dyn Fn(usize, usize) -> f64) -> f64 {
            if k == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    best = best.min(get(k, j) + rec(k + 1, n, m, used, get));
                    used[j] = false;
                }
            }
            best
        }
        rec(0, n, m, &mut vec![false; m], &*get)
    }

    fn total(costs: &CostMatrix, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(r, c)| costs.get(r, c)).sum()
    }

    #[test]
    fn small_examples() {
        let one = CostMatrix::from_rows(&[vec![5.0]]).unwrap();
        assert_eq!(hungarian(&one), vec![(0, 0)]);
        let m = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let pairs = hungarian(&m);
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(total(&m, &pairs), 4.0);
        assert!(hungarian(&CostMatrix::filled(0, 3, 0.0)).is_empty());
    }

    #[test]
    fn rectangular_matrices() {
        let wide = CostMatrix::from_rows(&[vec![3.0, 1.0, 2.0]]).unwrap();
        assert_eq!(hungarian(&wide), vec![(0, 1)]);
        let tall = CostMatrix::from_rows(&[vec![3.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(hungarian(&tall), vec![(1, 0)]);
    }

    #[test]
    fn gating_examples() {
        let r = gate_and_assign(&CostMatrix::from_rows(&[vec![-1.0]]).unwrap(), 0.0);
        assert_eq!(r.matches, vec![Match { track: 0, detection: 0, cost: -1.0 }]);
        let r = gate_and_assign(&CostMatrix::from_rows(&[vec![0.5]]).unwrap(), 0.0);
        assert!(r.matches.is_empty());
        assert_eq!((r.unmatched_tracks, r.unmatched_detections), (vec![0], vec![0]));
        let m = CostMatrix::from_rows(&[vec![-0.9, 0.8], vec![0.7, -0.2]]).unwrap();
        let r = gate_and_assign(&m, 0.0);
        let pairs: Vec<_> = r.matches.iter().map(|m| (m.track, m.detection)).collect();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn gate_prefers_more_feasible_matches() {
        // cheapest unconstrained solution would use a gated pair
        let mut m = CostMatrix::from_rows(&[vec![-1.0, -0.9], vec![-0.95, 0.5]]).unwrap();
        m.gate(0.0);
        let r = gate_and_assign(&m, 0.0);
        let pairs: Vec<_> = r.matches.iter().map(|m| (m.track, m.detection)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    fn toy_track(id: u64) -> Track {
        let s = TargetState {
            bbox: BoundingBox::new(100.0, 100.0, 50.0, 0.5).unwrap(),
            appearance: Descriptor::new(vec![1.0, 0.0]),
            frame: 1,
        };
        Track::new(id, s, 5)
    }

    fn toy_det() -> Detection {
        Detection::new(2, BoundingBox::new(104.0, 100.0, 50.0, 0.5).unwrap(), 0.9)
            .with_appearance(Descriptor::new(vec![0.9, 0.1]))
    }

    #[test]
    fn cost_matrix_gate_boundaries() {
        let frame = FrameDimensions::new(640.0, 480.0).unwrap();
        let tracks = vec![toy_track(1), toy_track(2)];
        let dets = vec![toy_det(), toy_det(), toy_det()];
        let zero = MlpModel::zeros(40, &[7]);
        let m = build_cost_matrix(&tracks, &dets, &zero, 5, &frame, 0.0).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert!(m.as_slice().iter().all(|&c| c == 0.0));
        let m = build_cost_matrix(&tracks, &dets, &zero, 5, &frame, -0.5).unwrap();
        assert!(m.as_slice().iter().all(|&c| c == GATED));
        let m = build_cost_matrix(&[], &dets, &zero, 5, &frame, 0.0).unwrap();
        assert!(m.is_empty());
        let m = build_cost_matrix(&tracks, &[], &zero, 5, &frame, 0.0).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn cost_matrix_matches_per_pair_forward() {
        let frame = FrameDimensions::new(640.0, 480.0).unwrap();
        let mut t = toy_track(1);
        t.update(TargetState { frame: 2, ..toy_det().to_state().unwrap() });
        let tracks = vec![t, toy_track(2)];
        let dets = vec![toy_det(), toy_det()];
        let model = MlpModel::init(30, &[6], 4);
        let m = build_cost_matrix(&tracks, &dets, &model, 4, &frame, 1.0).unwrap();
        for (i, t) in tracks.iter().enumerate() {
            for (j, d) in dets.iter().enumerate() {
                let g = crate::features::window_features(t, d, 4, &frame).unwrap();
                let y = model.forward(&[g.0]).unwrap()[0];
                assert_eq!(m.get(i, j), y);
            }
        }
    }

    #[test]
    fn descriptor_dimension_mismatch() {
        let frame = FrameDimensions::new(640.0, 480.0).unwrap();
        let det = Detection::new(2, BoundingBox::new(1.0, 1.0, 5.0, 1.0).unwrap(), 1.0)
            .with_appearance(Descriptor::new(vec![1.0, 0.0, 0.0]));
        let err = build_cost_matrix(&[toy_track(1)], &[det], &MlpModel::zeros(40, &[7]), 5, &frame, 0.0);
        assert!(matches!(err, Err(Error::DescriptorDimension { .. })));
    }

    fn arb_matrix() -> impl Strategy<Value = CostMatrix> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-1.0..1.0f64, r * c)
                .prop_map(move |d| CostMatrix::new(r, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(m in arb_matrix()) {
            let pairs = hungarian(&m);
            prop_assert_eq!(pairs.len(), m.rows().min(m.cols()));
            prop_assert!((total(&m, &pairs) - brute_force(&m)).abs() < 1e-9);
        }

        #[test]
        fn uniform_shift_keeps_selection_optimal(m in arb_matrix(), shift in -5.0..5.0f64) {
            let shifted = CostMatrix::new(m.rows(), m.cols(), m.as_slice().iter().map(|x| x + shift).collect()).unwrap();
            let pairs = hungarian(&shifted);
            prop_assert!((total(&m, &pairs) - brute_force(&m)).abs() < 1e-9);
        }

        #[test]
        fn gated_result_is_a_partition(m in arb_matrix(), c_max in -1.0..1.0f64) {
            let r = gate_and_assign(&m, c_max);
            prop_assert!(r.matches.iter().all(|x| x.cost <= c_max));
            prop_assert_eq!(r.matches.len() + r.unmatched_tracks.len(), m.rows());
            prop_assert_eq!(r.matches.len() + r.unmatched_detections.len(), m.cols());
            let mut rows: Vec<_> = r.matches.iter().map(|x| x.track).chain(r.unmatched_tracks.iter().copied()).collect();
            rows.sort_unstable();
            rows.dedup();
            prop_assert_eq!(rows.len(), m.rows());
        }
    }
}
