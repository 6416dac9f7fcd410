use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::MlpModel;
use super::train::{mse, train, LabeledExample, TrainConfig};
use crate::error::{Error, Result};

/// Splits `0..n` into `k` disjoint, seeded folds whose sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!("{n} examples cannot fill {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Mean validation MSE of a freshly initialized `hidden` architecture over `k` folds.
pub fn kfold_score(
    data: &[LabeledExample],
    hidden: &[usize],
    k: usize,
    cfg: &TrainConfig,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let folds = kfold_indices(data.len(), k, cfg.seed)?;
    let input_dim = data[0].features.len();
    let mut total = 0.0;
    for (f, held_out) in folds.iter().enumerate() {
        let train_set: Vec<LabeledExample> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, fold)| fold.iter().map(|&i| data[i].clone()))
            .collect();
        let val: Vec<LabeledExample> = held_out.iter().map(|&i| data[i].clone()).collect();
        let model = MlpModel::init(input_dim, hidden, cfg.seed);
        let (trained, _) = train(&model, &train_set, cfg)?;
        total += mse(&trained, &val)?;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub hidden: Vec<usize>,
    pub num_params: usize,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: Vec<usize>,
    /// One entry per grid cell, in grid order.
    pub cells: Vec<CellScore>,
}

/// k-fold grid search over hidden-layer architectures. The best cell has the
/// lowest mean validation MSE; ties go to fewer parameters, then grid order.
pub fn grid_search_cv(
    data: &[LabeledExample],
    grid: &[Vec<usize>],
    k: usize,
    cfg: &TrainConfig,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyper-parameter grid".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    kfold_indices(data.len(), k, cfg.seed)?;
    let input_dim = data[0].features.len();
    let cells = grid
        .par_iter()
        .map(|hidden| {
            Ok(CellScore {
                hidden: hidden.clone(),
                num_params: MlpModel::zeros(input_dim, hidden).num_params(),
                mean_mse: kfold_score(data, hidden, k, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = cells
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            a.mean_mse
                .total_cmp(&b.mean_mse)
                .then(a.num_params.cmp(&b.num_params))
                .then(i.cmp(j))
        })
        .map(|(_, c)| c.hidden.clone())
        .expect("grid is non-empty");
    Ok(GridSearchResult { best, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn radial(n: usize, dim: usize, seed: u64) -> Vec<LabeledExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let positive = i % 2 == 0;
                let r = if positive { rng.random_range(0.0..0.5) } else { rng.random_range(2.0..3.0) };
                let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                LabeledExample::new(dir.iter().map(|v| v / norm * r).collect(), if positive { -1.0 } else { 1.0 })
            })
            .collect()
    }

    #[test]
    fn folds_partition_the_data() {
        let folds = kfold_indices(10, 3, 1).unwrap();
        let sizes: Vec<_> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(folds, kfold_indices(10, 3, 1).unwrap());
    }

    #[test]
    fn leave_one_out_folds() {
        let folds = kfold_indices(5, 5, 0).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        assert!(kfold_indices(4, 5, 0).is_err());
        assert!(kfold_indices(4, 1, 0).is_err());
    }

    #[test]
    fn singleton_grid_matches_plain_kfold() {
        let data = radial(60, 3, 4);
        let cfg = TrainConfig { epochs: 5, batch_size: 8, learning_rate: 0.05, ..Default::default() };
        let res = grid_search_cv(&data, &[vec![4]], 3, &cfg).unwrap();
        assert_eq!(res.best, vec![4]);
        assert_eq!(res.cells[0].mean_mse, kfold_score(&data, &[4], 3, &cfg).unwrap());
    }

    #[test]
    fn empty_grid_is_an_error() {
        let data = radial(10, 2, 0);
        assert!(grid_search_cv(&data, &[], 3, &TrainConfig::default()).is_err());
    }

    #[test]
    fn hidden_layer_beats_linear_model_on_radial_data() {
        let data = radial(300, 3, 7);
        let cfg = TrainConfig { epochs: 60, batch_size: 16, learning_rate: 0.05, seed: 3, ..Default::default() };
        let res = grid_search_cv(&data, &[vec![], vec![7]], 3, &cfg).unwrap();
        assert!(res.cells[1].mean_mse < res.cells[0].mean_mse, "{:?}", res.cells);
        assert_eq!(res.best, vec![7]);
    }
}
