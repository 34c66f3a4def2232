//! Training loop: per-strategy batch execution, Adam updates, early stopping
//! on the validation split and multi-seed runs.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::AdamState;
use crate::batching::{plan_cmb, plan_rmb, plan_smb, plan_ssmb, BatchPlan, HiddenStateRegistry};
use crate::dataset::{
    augment_initial_value, augment_teacher_forcing, fit_norm, apply_norm, segment_inputs, segment_targets,
    slice_segments, split_chrono, Augmentation, NormStats, SegmentIndex, TimeSeriesDataset, Variable,
};
use crate::error::{Error, Result};
use crate::gru::{backward_batch, forward_batch, mse_and_grad, segment_backward, segment_forward, Gradients, GruModel, HiddenState};
use crate::inference::{predict, InferenceMode};
use crate::linalg::Matrix;
use crate::metrics::mse;

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.5, 0.1, 0.4);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Rmb,
    Smb,
    Ssmb,
    Cmb,
    /// Teacher forcing: trained like RMB on previous-day-target inputs.
    Tf,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Rmb, Strategy::Smb, Strategy::Ssmb, Strategy::Cmb, Strategy::Tf];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Rmb => "RMB",
            Strategy::Smb => "SMB",
            Strategy::Ssmb => "SSMB",
            Strategy::Cmb => "CMB",
            Strategy::Tf => "TF",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown strategy '{s}' (expected RMB, SMB, SSMB, CMB or TF)")))
    }

    /// Stateful schemes need non-overlapping windows; the others overlap by half.
    pub fn stride(self, seq_len: usize) -> usize {
        match self {
            Strategy::Smb | Strategy::Ssmb => seq_len,
            _ => seq_len.div_ceil(2),
        }
    }

    pub fn augmentation(self) -> Augmentation {
        match self {
            Strategy::Cmb => Augmentation::InitialValue,
            Strategy::Tf => Augmentation::TeacherForcing,
            _ => Augmentation::None,
        }
    }

    /// Inference scheme used for validation and as the default at test time.
    pub fn paired_inference(self) -> InferenceMode {
        match self {
            Strategy::Rmb => InferenceMode::Iif,
            Strategy::Smb | Strategy::Ssmb => InferenceMode::Ssif,
            Strategy::Cmb => InferenceMode::Scif,
            Strategy::Tf => InferenceMode::Autoregressive,
        }
    }

    fn stateful(self) -> bool {
        matches!(self, Strategy::Smb | Strategy::Ssmb)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub variable: Variable,
    pub seq_len: usize,
    pub hidden_size: usize,
    pub bs: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::Rmb,
            variable: Variable::Sw,
            seq_len: 366,
            hidden_size: 32,
            bs: 64,
            lr: 0.01,
            max_epochs: 500,
            patience: 50,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bs == 0 {
            return Err(Error::config("train.bs must be at least 1"));
        }
        if self.seq_len == 0 || self.hidden_size == 0 {
            return Err(Error::config("segment length and hidden size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("train.lr must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("train.max_epochs must be at least 1"));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::config("train.patience must be smaller than train.max_epochs"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("train.seeds must list at least one seed"));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.strategy.stride(self.seq_len)
    }
}

/// Chronological train/validation/test splits normalized with training
/// statistics.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: TimeSeriesDataset,
    pub valid: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
    pub stats: NormStats,
}

impl Splits {
    pub fn prepare(ds: &TimeSeriesDataset, fracs: (f64, f64, f64)) -> Result<Self> {
        let (train, valid, test) = split_chrono(ds, fracs)?;
        Splits::from_parts(&train, &valid, &test)
    }

    /// Normalize raw splits with statistics of `train`.
    pub fn from_parts(train: &TimeSeriesDataset, valid: &TimeSeriesDataset, test: &TimeSeriesDataset) -> Result<Self> {
        let stats = fit_norm(train)?;
        Ok(Splits {
            train: apply_norm(train, &stats)?,
            valid: apply_norm(valid, &stats)?,
            test: apply_norm(test, &stats)?,
            stats,
        })
    }

    /// Normalized observation on the last training day.
    pub fn valid_predecessor(&self, var: Variable) -> f64 {
        last_target(&self.train, var)
    }

    /// Normalized observation on the last validation day.
    pub fn test_predecessor(&self, var: Variable) -> f64 {
        last_target(&self.valid, var)
    }
}

fn last_target(split: &TimeSeriesDataset, var: Variable) -> f64 {
    split.y.get(split.len() - 1, var.index())
}

/// Training windows of one strategy and target.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub segments: Vec<SegmentIndex>,
    pub inputs: Vec<Matrix>,
    pub targets: Vec<Matrix>,
    pub augmentation: Augmentation,
}

impl TrainingSet {
    pub fn build(train: &TimeSeriesDataset, var: Variable, strategy: Strategy, seq_len: usize) -> Result<Self> {
        let segments = slice_segments(train.len(), seq_len, strategy.stride(seq_len))?;
        let augmentation = strategy.augmentation();
        let inputs = match augmentation {
            Augmentation::None => segment_inputs(train, &segments),
            Augmentation::InitialValue => augment_initial_value(train, var, &segments, None),
            Augmentation::TeacherForcing => augment_teacher_forcing(train, var, &segments, None),
        };
        let targets = segment_targets(train, var, &segments);
        Ok(TrainingSet {
            segments,
            inputs,
            targets,
            augmentation,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs[0].cols()
    }
}

pub fn build_plan(strategy: Strategy, n_segments: usize, bs: usize, aug: Augmentation, rng: &mut ChaCha8Rng) -> Result<BatchPlan> {
    match strategy {
        Strategy::Rmb | Strategy::Tf => plan_rmb(n_segments, bs, rng),
        Strategy::Cmb => plan_cmb(n_segments, bs, aug, rng),
        Strategy::Smb => plan_smb(n_segments, bs),
        Strategy::Ssmb => plan_ssmb(n_segments, bs),
    }
}

/// Batch-mean MSE of equal-length segments run side by side and its gradient.
pub fn batch_gradient(
    model: &GruModel,
    inputs: &[&Matrix],
    targets: &[&Matrix],
    h0: &[HiddenState],
) -> Result<(f64, Gradients, Vec<HiddenState>)> {
    let fwd = forward_batch(model, inputs, h0)?;
    let bs = inputs.len();
    let steps = inputs[0].rows();
    // Interleave targets to the time-major layout of the predictions.
    let v = model.output_size();
    let mut target = Matrix::zeros(steps * bs, v);
    for (b, y) in targets.iter().enumerate() {
        for t in 0..steps {
            target.row_mut(t * bs + b).copy_from_slice(y.row(t));
        }
    }
    let (loss, dy) = mse_and_grad(&fwd.yhat, &target, 1.0);
    let grads = backward_batch(model, &fwd.cache, &dy)?;
    Ok((loss, grads, fwd.h_last))
}

fn diverged(message: impl Into<String>) -> Error {
    Error::Divergence {
        location: String::new(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// Mean per-segment training MSE (normalized units).
    pub train_mse: f64,
    /// Segment ids in the order their forward passes started.
    pub forward_order: Vec<usize>,
    pub updates: usize,
}

/// Run one epoch of `plan`. Stateful strategies read and write `registry`,
/// which is cleared at the start of the epoch.
pub fn train_epoch(
    model: &mut GruModel,
    opt: &mut AdamState,
    plan: &BatchPlan,
    set: &TrainingSet,
    registry: &mut HiddenStateRegistry,
    strategy: Strategy,
    epoch: usize,
) -> Result<EpochStats> {
    registry.reset_all();
    let next = plan.state_targets();
    let mut loss_sum = 0.0;
    let mut count = 0usize;
    let mut forward_order = Vec::with_capacity(plan.segments_used());
    for (k, batch) in plan.batches.iter().enumerate() {
        let here = || format!("{strategy} epoch {epoch} batch {k}");
        let (batch_loss, grads) = if strategy == Strategy::Ssmb {
            let mut acc = model.zeros_like();
            let mut sum = 0.0;
            let w = 1.0 / batch.len() as f64;
            for &id in batch {
                forward_order.push(id);
                let h0 = registry.take(id);
                let fwd = segment_forward(model, &set.inputs[id], &h0).map_err(|e| e.at(here()))?;
                let (loss, dy) = mse_and_grad(&fwd.yhat, &set.targets[id], w);
                let g = segment_backward(model, &fwd.cache, &dy)?;
                acc.add_scaled(&g, 1.0);
                sum += loss;
                if let Some(&to) = next.get(&id) {
                    registry.put(to, &fwd.h_last);
                }
            }
            (sum, acc)
        } else {
            forward_order.extend_from_slice(batch);
            let inputs: Vec<&Matrix> = batch.iter().map(|&i| &set.inputs[i]).collect();
            let targets: Vec<&Matrix> = batch.iter().map(|&i| &set.targets[i]).collect();
            let h0: Vec<HiddenState> = batch.iter().map(|&i| registry.take(i)).collect();
            let (loss, grads, h_last) = batch_gradient(model, &inputs, &targets, &h0).map_err(|e| e.at(here()))?;
            if strategy.stateful() {
                for (&id, h) in batch.iter().zip(&h_last) {
                    if let Some(&to) = next.get(&id) {
                        registry.put(to, h);
                    }
                }
            }
            (loss * batch.len() as f64, grads)
        };
        if !batch_loss.is_finite() || !grads.is_finite() {
            return Err(diverged("non-finite loss or gradient").at(here()));
        }
        opt.step(model, &grads)?;
        if !model.is_finite() {
            return Err(diverged("non-finite parameters after update").at(here()));
        }
        loss_sum += batch_loss;
        count += batch.len();
    }
    Ok(EpochStats {
        train_mse: loss_sum / count.max(1) as f64,
        forward_order,
        updates: plan.batches.len(),
    })
}

/// Patience-based stopping on a loss that should decrease.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Record the loss of `epoch` (1-based).
    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        let improved = loss < self.best;
        if improved {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopDecision {
            improved,
            stop: self.stale >= self.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub valid_mse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub strategy: Strategy,
    pub variable: Variable,
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid_mse: f64,
    /// Parameters from the best validation epoch.
    pub model: GruModel,
}

/// Normalized-space validation MSE under the strategy's paired inference.
pub fn validation_mse(model: &GruModel, strategy: Strategy, var: Variable, seq_len: usize, splits: &Splits) -> Result<f64> {
    let yhat = predict(
        strategy.paired_inference(),
        model,
        &splits.valid.x,
        seq_len,
        splits.valid_predecessor(var),
    )?;
    let y = splits.valid.target(var);
    let loss = mse(&y, &yhat)?;
    if !loss.is_finite() {
        return Err(diverged("non-finite validation loss"));
    }
    Ok(loss)
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn init_model(config: &TrainConfig, seed: u64, set: &TrainingSet) -> Result<GruModel> {
    GruModel::init(seed, set.n_inputs(), config.hidden_size, 1)
}

/// Train one seed with early stopping and return the best-validation model.
pub fn fit(config: &TrainConfig, seed: u64, splits: &Splits) -> Result<TrainRecord> {
    config.validate()?;
    let set = TrainingSet::build(&splits.train, config.variable, config.strategy, config.seq_len)?;
    fit_on(config, seed, &set, splits, |_| {})
}

/// [`fit`] on a prebuilt training set; `on_epoch` sees every epoch log.
pub fn fit_on(
    config: &TrainConfig,
    seed: u64,
    set: &TrainingSet,
    splits: &Splits,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainRecord> {
    let strategy = config.strategy;
    let mut model = init_model(config, seed, set)?;
    let mut opt = AdamState::new(&model, config.lr);
    let mut rng = shuffle_rng(seed);
    let mut registry = HiddenStateRegistry::new(config.hidden_size);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut plan = build_plan(strategy, set.len(), config.bs, set.augmentation, &mut rng)?;
    for epoch in 1..=config.max_epochs {
        if epoch > 1 && plan.reshuffle_each_epoch {
            plan = build_plan(strategy, set.len(), config.bs, set.augmentation, &mut rng)?;
        }
        let start = Instant::now();
        let stats = train_epoch(&mut model, &mut opt, &plan, set, &mut registry, strategy, epoch)?;
        let seconds = start.elapsed().as_secs_f64();
        let valid_mse = validation_mse(&model, strategy, config.variable, config.seq_len, splits)
            .map_err(|e| e.at(format!("{strategy} epoch {epoch} validation")))?;
        let log = EpochLog {
            epoch,
            train_mse: stats.train_mse,
            valid_mse,
            seconds,
        };
        on_epoch(&log);
        epochs.push(log);
        let decision = stopper.observe(epoch, valid_mse);
        if decision.improved {
            best = model.clone();
        }
        if decision.stop {
            break;
        }
    }
    Ok(TrainRecord {
        strategy,
        variable: config.variable,
        seed,
        epochs,
        best_epoch: stopper.best_epoch,
        best_valid_mse: stopper.best,
        model: best,
    })
}

/// One record per seed in `config.seeds`, using up to `jobs` threads.
pub fn run_multi_seed(config: &TrainConfig, splits: &Splits, jobs: usize) -> Result<Vec<TrainRecord>> {
    config.validate()?;
    let set = TrainingSet::build(&splits.train, config.variable, config.strategy, config.seq_len)?;
    let run = |seed: u64| fit_on(config, seed, &set, splits, |_| {}).map_err(|e| e.at(format!("seed {seed}")));
    if jobs <= 1 {
        return config.seeds.iter().map(|&s| run(s)).collect();
    }
    let per_job = config.seeds.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .seeds
            .chunks(per_job)
            .map(|chunk| scope.spawn(move || chunk.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(config.seeds.len());
        for h in handles {
            out.extend(h.join().expect("training thread panicked")?);
        }
        Ok(out)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochTiming {
    pub strategy: Strategy,
    /// Seconds of every epoch, warm-up included.
    pub seconds: Vec<f64>,
    /// Median over all epochs but the first.
    pub median: f64,
}

/// Wall-clock seconds per training epoch (no validation), median after a
/// discarded warm-up epoch.
pub fn time_epochs(config: &TrainConfig, seed: u64, splits: &Splits, n_epochs: usize) -> Result<EpochTiming> {
    config.validate()?;
    if n_epochs < 3 {
        return Err(Error::config("timing needs at least 3 epochs"));
    }
    let strategy = config.strategy;
    let set = TrainingSet::build(&splits.train, config.variable, strategy, config.seq_len)?;
    let mut model = init_model(config, seed, &set)?;
    let mut opt = AdamState::new(&model, config.lr);
    let mut rng = shuffle_rng(seed);
    let mut registry = HiddenStateRegistry::new(config.hidden_size);
    let mut seconds = Vec::with_capacity(n_epochs);
    for epoch in 1..=n_epochs {
        let start = Instant::now();
        let plan = build_plan(strategy, set.len(), config.bs, set.augmentation, &mut rng)?;
        train_epoch(&mut model, &mut opt, &plan, &set, &mut registry, strategy, epoch)?;
        seconds.push(start.elapsed().as_secs_f64());
    }
    let mut rest = seconds[1..].to_vec();
    rest.sort_by(f64::total_cmp);
    let mid = rest.len() / 2;
    let median = if rest.len() % 2 == 1 {
        rest[mid]
    } else {
        0.5 * (rest[mid - 1] + rest[mid])
    };
    Ok(EpochTiming {
        strategy,
        seconds,
        median,
    })
}

pub const TRAINING_LOG_HEADER: &str = "epoch,train_mse,valid_mse,seconds";

pub fn write_training_log(record: &TrainRecord, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{TRAINING_LOG_HEADER}").map_err(io)?;
    for e in &record.epochs {
        writeln!(out, "{},{},{},{}", e.epoch, e.train_mse, e.valid_mse, e.seconds).map_err(io)?;
    }
    out.flush().map_err(io)
}
