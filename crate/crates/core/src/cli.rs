//! Command-line surface: `synth`, `build-dataset`, `train`, `track`,
//! `evaluate` and `bench`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{
    featurize_examples, generate_synthetic_sequence, read_dataset_csv, sample_examples, stratified_split,
    write_dataset_csv, SamplingConfig, SynthConfig, SyntheticSequence,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, measure_throughput, EvalReport, ThroughputStats};
use crate::features::window_dim;
use crate::formats::{
    attach_descriptors, attach_ground_truth_descriptors, parse_detections, parse_ground_truth, parse_results,
    write_ground_truth, write_results, DescriptorSidecar, DescriptorSource, FrameDetections,
};
use crate::geometry::FrameDimensions;
use crate::mlp::{grid_search_cv, load_model, mse, save_model, train, write_loss_trace, LabeledExample, MlpModel, TrainConfig};
use crate::track::Detection;
use crate::tracker::{check_model_window, run_sequence, MlpEstimator, TrackerConfig};

#[derive(Debug, Parser)]
#[command(name = "assoctrack", version, about = "Multi-object tracking with a learned association cost")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sequence (detections, ground truth, descriptor sidecars).
    Synth(SynthArgs),
    /// Sample and featurize an association dataset from ground truth.
    BuildDataset(BuildDatasetArgs),
    /// Train the association cost regressor.
    Train(TrainArgs),
    /// Track a detection file.
    Track(TrackArgs),
    /// Score result files against ground truth with CLEAR-MOT.
    Evaluate(EvaluateArgs),
    /// Measure tracking-only throughput on a synthetic workload.
    Bench(BenchArgs),
}

fn parse_frame_size(s: &str) -> std::result::Result<FrameDimensions, String> {
    let (w, h) = s
        .split_once([',', 'x'])
        .ok_or_else(|| format!("expected WIDTH,HEIGHT, got '{s}'"))?;
    let w: f64 = w.trim().parse().map_err(|e| format!("bad width: {e}"))?;
    let h: f64 = h.trim().parse().map_err(|e| format!("bad height: {e}"))?;
    FrameDimensions::new(w, h).map_err(|e| e.to_string())
}

/// Comma-separated list of sizes; an empty string is an empty list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeList(pub Vec<usize>);

fn parse_list(s: &str) -> std::result::Result<SizeList, String> {
    if s.trim().is_empty() {
        return Ok(SizeList(Vec::new()));
    }
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad list entry '{p}': {e}")))
        .collect::<std::result::Result<_, _>>()
        .map(SizeList)
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub targets: usize,
    #[arg(long, default_value_t = 600)]
    pub frames: u32,
    /// Motion and detection jitter, in pixels.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.05)]
    pub drop_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    pub fp_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub separation: f64,
    #[arg(long, default_value_t = 32)]
    pub descriptor_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    pub descriptor_noise: f64,
    #[arg(long, value_parser = parse_frame_size, default_value = "1920,1080")]
    pub frame_size: FrameDimensions,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for det.txt, det_desc.bin, gt.txt and gt_desc.bin.
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            targets: self.targets,
            frames: self.frames,
            motion_noise: self.noise,
            drop_rate: self.drop_rate,
            fp_rate: self.fp_rate,
            descriptor_separation: self.separation,
            descriptor_dim: self.descriptor_dim,
            descriptor_noise: self.descriptor_noise,
            frame: self.frame_size,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Descriptor sidecar for the ground-truth rows.
    #[arg(long)]
    pub gt_descriptors: PathBuf,
    #[arg(long, value_parser = parse_frame_size)]
    pub frame_size: FrameDimensions,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 130_000)]
    pub count: usize,
    #[arg(long, default_value_t = 0.5)]
    pub positive_fraction: f64,
    #[arg(long, default_value_t = 3)]
    pub lmax: u32,
    /// Largest positive displacement in frames; 0 samples the whole track.
    #[arg(long, default_value_t = 4)]
    pub max_displacement: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV; repeat to compare window lengths (requires --grid).
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub loss_trace: Option<PathBuf>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_parser = parse_list, default_value = "7")]
    pub hidden: SizeList,
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Select the architecture by k-fold grid search instead of using --hidden.
    #[arg(long)]
    pub grid: bool,
    #[arg(long, value_parser = parse_list, default_value = "1,2")]
    pub grid_layers: SizeList,
    #[arg(long, value_parser = parse_list, default_value = "4,7,10,16")]
    pub grid_widths: SizeList,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            momentum: self.momentum,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long, conflicts_with = "images", required_unless_present = "images")]
    pub descriptors: Option<PathBuf>,
    /// Frame images for the color-histogram descriptor fallback.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub lmax: u32,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub cmax: f64,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 0.3)]
    pub min_conf: f64,
    #[arg(long, value_parser = parse_frame_size)]
    pub frame_size: FrameDimensions,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth file; repeat once per sequence.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Result file; one per --gt, same order.
    #[arg(long, required = true)]
    pub results: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Report CSV: one row per sequence plus an aggregate row.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Trained model; when omitted a small model is trained on a separate synthetic sequence first.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub targets: usize,
    #[arg(long, default_value_t = 600)]
    pub frames: u32,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::BuildDataset(a) => cmd_build_dataset(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Track(a) => cmd_track(&a).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a).map(|_| ()),
    }
}

/// Writes a synthetic sequence in the on-disk formats used by the other commands.
pub fn write_synthetic(seq: &SyntheticSequence, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dim = seq
        .ground_truth
        .first()
        .and_then(|t| t.states().first())
        .and_then(|s| s.appearance.as_ref())
        .map_or(0, |d| d.dim());

    let frames: Vec<FrameDetections> = seq
        .detections
        .iter()
        .map(|(f, dets)| FrameDetections {
            frame: *f,
            detections: dets.clone(),
            ordinals: (0..dets.len() as u32).collect(),
        })
        .collect();
    crate::formats::write_detections(&dir.join("det.txt"), &frames)?;
    let mut det_side = DescriptorSidecar::new(dim);
    for f in &frames {
        for (d, &o) in f.detections.iter().zip(&f.ordinals) {
            det_side.insert(f.frame, o, d.appearance()?.clone())?;
        }
    }
    det_side.write(&dir.join("det_desc.bin"))?;

    write_ground_truth(&dir.join("gt.txt"), &seq.ground_truth)?;
    let mut rows: Vec<_> = seq
        .ground_truth
        .iter()
        .flat_map(|t| t.states().iter().map(move |s| (s.frame, t.id, s)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut gt_side = DescriptorSidecar::new(dim);
    let mut ordinal = 0;
    let mut current = 0;
    for (frame, _, s) in rows {
        if frame != current {
            current = frame;
            ordinal = 0;
        }
        let d = s.appearance.clone().ok_or(Error::MissingAppearance { frame })?;
        gt_side.insert(frame, ordinal, d)?;
        ordinal += 1;
    }
    gt_side.write(&dir.join("gt_desc.bin"))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let seq = generate_synthetic_sequence(&a.config())?;
    write_synthetic(&seq, &a.out_dir)?;
    println!(
        "wrote {} frames, {} targets, {} detections to {}",
        a.frames,
        a.targets,
        seq.detections.iter().map(|f| f.1.len()).sum::<usize>(),
        a.out_dir.display()
    );
    Ok(())
}

pub fn cmd_build_dataset(a: &BuildDatasetArgs) -> Result<usize> {
    let mut gt = parse_ground_truth(&a.gt)?;
    let side = DescriptorSidecar::read(&a.gt_descriptors)?;
    attach_ground_truth_descriptors(&mut gt, &side)?;
    let mut cfg = SamplingConfig::new(a.window, a.count, a.positive_fraction, a.seed);
    cfg.l_max = a.lmax;
    cfg.max_displacement = (a.max_displacement > 0).then_some(a.max_displacement);
    let examples = sample_examples(&gt, &cfg)?;
    let data = featurize_examples(&examples, a.window, &a.frame_size)?;
    write_dataset_csv(&a.output, &data)?;
    let positives = data.iter().filter(|e| e.label < 0.0).count();
    println!(
        "wrote {} examples ({} positive, {} negative, {} features) to {}",
        data.len(),
        positives,
        data.len() - positives,
        window_dim(a.window),
        a.output.display()
    );
    Ok(data.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub hidden: Vec<usize>,
    pub input_dim: usize,
    pub validation_mse: f64,
    pub trace: Vec<f64>,
}

/// Trains on the training partition of one dataset and scores the validation partition.
fn fit(data: &[LabeledExample], hidden: &[usize], cfg: &TrainConfig, val_fraction: f64) -> Result<(MlpModel, TrainOutcome)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (train_set, val_set) = stratified_split(data, val_fraction, cfg.seed);
    let input_dim = data[0].features.len();
    let init = MlpModel::init(input_dim, hidden, cfg.seed);
    let (model, trace) = train(&init, &train_set, cfg)?;
    let validation_mse = if val_set.is_empty() { mse(&model, &train_set)? } else { mse(&model, &val_set)? };
    Ok((
        model,
        TrainOutcome {
            hidden: hidden.to_vec(),
            input_dim,
            validation_mse,
            trace,
        },
    ))
}

pub fn cmd_train(a: &TrainArgs) -> Result<TrainOutcome> {
    let cfg = a.config();
    cfg.validate()?;
    if !(0.0..1.0).contains(&a.val_fraction) {
        return Err(Error::Config(format!("val-fraction must be in [0, 1), got {}", a.val_fraction)));
    }
    if a.dataset.len() > 1 && !a.grid {
        return Err(Error::Config("several --dataset files need --grid".into()));
    }
    let grid: Vec<Vec<usize>> = a
        .grid_layers
        .0
        .iter()
        .flat_map(|&depth| a.grid_widths.0.iter().map(move |&w| vec![w; depth]))
        .collect();

    let mut best: Option<(MlpModel, TrainOutcome)> = None;
    for path in &a.dataset {
        let data = read_dataset_csv(path)?;
        let hidden = if a.grid {
            let (train_set, _) = stratified_split(&data, a.val_fraction, cfg.seed);
            let res = grid_search_cv(&train_set, &grid, a.folds, &cfg)?;
            for c in &res.cells {
                println!("{}: hidden {:?} -> mean {}-fold MSE {:.5}", path.display(), c.hidden, a.folds, c.mean_mse);
            }
            res.best
        } else {
            a.hidden.0.clone()
        };
        let (model, outcome) = fit(&data, &hidden, &cfg, a.val_fraction)?;
        println!(
            "{}: input {} hidden {:?} validation MSE {:.5}",
            path.display(),
            outcome.input_dim,
            outcome.hidden,
            outcome.validation_mse
        );
        if best.as_ref().is_none_or(|b| outcome.validation_mse < b.1.validation_mse) {
            best = Some((model, outcome));
        }
    }
    let (model, outcome) = best.ok_or(Error::EmptyDataset)?;
    save_model(&model, &a.model)?;
    if let Some(p) = &a.loss_trace {
        write_loss_trace(p, &outcome.trace)?;
    }
    println!("validation MSE {:.5}; model written to {}", outcome.validation_mse, a.model.display());
    Ok(outcome)
}

fn to_sequence(frames: Vec<FrameDetections>) -> Vec<(u32, Vec<Detection>)> {
    frames.into_iter().map(|f| (f.frame, f.detections)).collect()
}

pub fn cmd_track(a: &TrackArgs) -> Result<usize> {
    let cfg = TrackerConfig {
        l_max: a.lmax,
        c_max: a.cmax,
        window: a.window,
        min_confidence: a.min_conf,
        frame: a.frame_size,
    };
    cfg.validate()?;
    let model = load_model(&a.model)?;
    check_model_window(&model, a.window)?;

    let mut frames = parse_detections(&a.detections, a.min_conf)?;
    match (&a.descriptors, &a.images) {
        (Some(p), _) => {
            let side = DescriptorSidecar::read(p)?;
            attach_descriptors(&mut frames, &DescriptorSource::Sidecar(&side))?
        }
        (None, Some(dir)) => attach_descriptors(&mut frames, &DescriptorSource::Images(dir))?,
        (None, None) => return Err(Error::Config("one of --descriptors or --images is required".into())),
    }
    let records = run_sequence(&to_sequence(frames), &MlpEstimator::new(model), &cfg)?;
    write_results(&a.output, &records)?;
    println!("wrote {} records to {}", records.len(), a.output.display());
    Ok(records.len())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<Vec<EvalReport>> {
    if a.gt.len() != a.results.len() {
        return Err(Error::Config(format!(
            "{} --gt files but {} --results files",
            a.gt.len(),
            a.results.len()
        )));
    }
    let mut reports = Vec::new();
    let mut csv = format!("{}\n", EvalReport::CSV_HEADER);
    for (g, r) in a.gt.iter().zip(&a.results) {
        let report = evaluate(&parse_ground_truth(g)?, &parse_results(r)?, a.iou)?;
        let name = r.file_stem().map_or_else(|| r.display().to_string(), |s| s.to_string_lossy().into_owned());
        println!("{name}\n{report}");
        csv.push_str(&report.csv_row(&name));
        csv.push('\n');
        reports.push(report);
    }
    let overall = EvalReport::aggregate(&reports);
    if reports.len() > 1 {
        println!("OVERALL\n{overall}");
    }
    csv.push_str(&overall.csv_row("OVERALL"));
    csv.push('\n');
    if let Some(p) = &a.output {
        std::fs::write(p, csv).map_err(|e| Error::io(p, e))?;
    }
    Ok(reports)
}

/// Trains a model from a synthetic sequence. Used by `bench` when no model
/// file is given.
pub fn train_synthetic_model(window: usize, seed: u64, examples: usize, epochs: usize) -> Result<MlpModel> {
    let seq = generate_synthetic_sequence(&SynthConfig { seed: seed.wrapping_add(1), ..Default::default() })?;
    let sampled = sample_examples(&seq.ground_truth, &SamplingConfig::new(window, examples, 0.5, seed))?;
    let data = featurize_examples(&sampled, window, &SynthConfig::default().frame)?;
    let cfg = TrainConfig { epochs, seed, ..Default::default() };
    Ok(train(&MlpModel::init(window_dim(window), &[7], seed), &data, &cfg)?.0)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<ThroughputStats> {
    let model = match &a.model {
        Some(p) => load_model(p)?,
        None => train_synthetic_model(a.window, a.seed, 5_000, 20)?,
    };
    check_model_window(&model, a.window)?;
    let synth = SynthConfig {
        targets: a.targets,
        frames: a.frames,
        seed: a.seed,
        ..Default::default()
    };
    // descriptors are generated here, outside the timed loop
    let seq = generate_synthetic_sequence(&synth)?;
    let mut cfg = TrackerConfig::new(synth.frame);
    cfg.window = a.window;
    let estimator = MlpEstimator::new(model);
    let stats = measure_throughput(seq.detections.len(), a.repetitions, || {
        run_sequence(&seq.detections, &estimator, &cfg).map(|_| ())
    })?;
    println!(
        "{} targets x {} frames: {:.1} Hz mean, {:.1} Hz std over {} runs",
        a.targets, a.frames, stats.mean_hz, stats.std_hz, a.repetitions
    );
    Ok(stats)
}
