//! Experiment pipelines shared by the command line and the acceptance suite:
//! train-and-evaluate tables, training-size sweeps, timing, initial-value
//! sensitivity and the teacher-forcing comparison.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataset::{norm_target, split_chrono, TimeSeriesDataset, Variable};
use crate::error::{Error, Result};
use crate::gru::GruModel;
use crate::inference::{scif_sensitivity, InferenceMode, PredictionSeries, SensitivityReport};
use crate::metrics::{aggregate_seeds, EvalReport, SeedSummary};
use crate::trainer::{run_multi_seed, time_epochs, EpochTiming, Splits, Strategy, TrainConfig, TrainRecord};

pub const SENSITIVITY_TOLERANCE: f64 = 1e-3;

/// Inference schemes reported for models trained with `strategy`.
pub fn eval_modes(strategy: Strategy) -> Vec<InferenceMode> {
    match strategy {
        Strategy::Rmb => vec![InferenceMode::Iif, InferenceMode::Ssif],
        other => vec![other.paired_inference()],
    }
}

/// Row label such as `RMB-IIF`; teacher forcing is just `TF`.
pub fn label(strategy: Strategy, mode: InferenceMode) -> String {
    match strategy {
        Strategy::Tf => "TF".to_string(),
        _ => format!("{strategy}-{mode}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Valid,
    Test,
}

impl EvalSplit {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(EvalSplit::Valid),
            "test" => Ok(EvalSplit::Test),
            other => Err(Error::config(format!("unknown split '{other}' (expected valid or test)"))),
        }
    }
}

/// Predictions and metrics of one trained model on one split.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_model(
    model: &GruModel,
    strategy: Strategy,
    mode: InferenceMode,
    var: Variable,
    seq_len: usize,
    seed: u64,
    splits: &Splits,
    which: EvalSplit,
) -> Result<(EvalReport, PredictionSeries)> {
    let (split, y0) = match which {
        EvalSplit::Valid => (&splits.valid, splits.valid_predecessor(var)),
        EvalSplit::Test => (&splits.test, splits.test_predecessor(var)),
    };
    let series = PredictionSeries::from_split(mode, model, split, var, seq_len, y0, label(strategy, mode), seed)?;
    let report = EvalReport::compute(&series.observed, &series.predicted, &series.doy, seq_len)?;
    Ok((report, series))
}

/// Seed-aggregated results of one strategy/inference pair.
#[derive(Debug, Clone)]
pub struct StrategyResult {
    pub label: String,
    pub strategy: Strategy,
    pub mode: InferenceMode,
    pub variable: Variable,
    pub per_seed: Vec<EvalReport>,
    pub predictions: Vec<PredictionSeries>,
    pub summary: SeedSummary,
}

impl StrategyResult {
    pub fn rmse_values(&self) -> Vec<f64> {
        self.per_seed.iter().map(|r| r.rmse).collect()
    }
}

/// Evaluate `(seed, model)` pairs of one strategy and target under `mode`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_models(
    models: &[(u64, &GruModel)],
    strategy: Strategy,
    variable: Variable,
    mode: InferenceMode,
    seq_len: usize,
    splits: &Splits,
    which: EvalSplit,
) -> Result<StrategyResult> {
    if models.is_empty() {
        return Err(Error::config("no trained models to evaluate"));
    }
    let mut per_seed = Vec::with_capacity(models.len());
    let mut predictions = Vec::with_capacity(models.len());
    for &(seed, model) in models {
        let (report, series) = evaluate_model(model, strategy, mode, variable, seq_len, seed, splits, which)?;
        per_seed.push(report);
        predictions.push(series);
    }
    let summary = aggregate_seeds(&per_seed)?;
    Ok(StrategyResult {
        label: label(strategy, mode),
        strategy,
        mode,
        variable,
        per_seed,
        predictions,
        summary,
    })
}

/// Test-split results of trained records (one per seed) under `mode`.
pub fn evaluate_records(records: &[TrainRecord], mode: InferenceMode, seq_len: usize, splits: &Splits) -> Result<StrategyResult> {
    let first = records
        .first()
        .ok_or_else(|| Error::config("no trained models to evaluate"))?;
    let models: Vec<(u64, &GruModel)> = records.iter().map(|r| (r.seed, &r.model)).collect();
    evaluate_models(&models, first.strategy, first.variable, mode, seq_len, splits, EvalSplit::Test)
}

/// Train every seed of `config` and evaluate under all reported schemes.
pub fn train_and_evaluate(
    config: &TrainConfig,
    splits: &Splits,
    jobs: usize,
) -> Result<(Vec<TrainRecord>, Vec<StrategyResult>)> {
    let records = run_multi_seed(config, splits, jobs)?;
    let results = eval_modes(config.strategy)
        .into_iter()
        .map(|mode| evaluate_records(&records, mode, config.seq_len, splits))
        .collect::<Result<Vec<_>>>()?;
    Ok((records, results))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub const SUMMARY_HEADER: &str = "strategy,variable,rmse_mean,rmse_std,nse_mean,nse_std";

pub fn write_summary(results: &[StrategyResult], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{SUMMARY_HEADER}").map_err(io)?;
    for r in results {
        let s = &r.summary;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.label, r.variable, s.rmse.mean, s.rmse.std, s.nse.mean, s.nse.std
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// `step,rmse` with one row per within-segment position.
pub fn write_step_trace(summary: &SeedSummary, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "step,rmse").map_err(io)?;
    for (t, v) in summary.avg_step_rmse.iter().enumerate() {
        writeln!(out, "{},{v}", t + 1).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// `doy,rmse` with 366 rows; days absent from the split have an empty value.
pub fn write_daily_trace(summary: &SeedSummary, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "doy,rmse").map_err(io)?;
    for (d, v) in summary.avg_daily_rmse.iter().enumerate() {
        match v {
            Some(v) => writeln!(out, "{},{v}", d + 1),
            None => writeln!(out, "{},", d + 1),
        }
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// One row of the training-size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub mode: InferenceMode,
    pub train_years: usize,
    pub seed: u64,
    pub rmse: f64,
    pub nse: f64,
}

/// Train on the last `years` years of the training split for each size while
/// validation and test splits stay fixed. Normalization statistics come from
/// the reduced training data.
pub fn sweep_train_size(
    base: &TrainConfig,
    strategies: &[Strategy],
    dataset: &TimeSeriesDataset,
    fracs: (f64, f64, f64),
    years_list: &[usize],
    days_per_year: usize,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    let (train_all, valid, test) = split_chrono(dataset, fracs)?;
    let available = train_all.len() / days_per_year;
    if let Some(&too_many) = years_list.iter().find(|&&y| y == 0 || y > available) {
        return Err(Error::config(format!(
            "training size {too_many} years is outside 1..={available} available training years"
        )));
    }
    let mut rows = Vec::new();
    for &years in years_list {
        let n = years * days_per_year;
        let train = train_all.slice(train_all.len() - n, train_all.len());
        let splits = Splits::from_parts(&train, &valid, &test)?;
        for &strategy in strategies {
            let config = TrainConfig {
                strategy,
                ..base.clone()
            };
            let (_, results) = train_and_evaluate(&config, &splits, jobs)?;
            let result = &results[0];
            for (rep, series) in result.per_seed.iter().zip(&result.predictions) {
                rows.push(SweepRow {
                    strategy,
                    mode: result.mode,
                    train_years: years,
                    seed: series.seed,
                    rmse: rep.rmse,
                    nse: rep.nse,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "strategy,train_years,seed,rmse,nse").map_err(io)?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", label(r.strategy, r.mode), r.train_years, r.seed, r.rmse, r.nse).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Median seconds per epoch for each strategy.
pub fn timing(base: &TrainConfig, strategies: &[Strategy], splits: &Splits, n_epochs: usize) -> Result<Vec<EpochTiming>> {
    strategies
        .iter()
        .map(|&strategy| {
            let config = TrainConfig {
                strategy,
                ..base.clone()
            };
            time_epochs(&config, base.seeds[0], splits, n_epochs)
        })
        .collect()
}

pub fn write_timing(timings: &[EpochTiming], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "strategy,seconds_per_epoch,ratio_to_rmb").map_err(io)?;
    let rmb = timings.iter().find(|t| t.strategy == Strategy::Rmb).map(|t| t.median);
    for t in timings {
        let ratio = rmb.map(|r| format!("{}", t.median / r)).unwrap_or_default();
        writeln!(out, "{},{},{ratio}", t.strategy, t.median).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Default initial values in physical units: zero, training mean, and the
/// minimum, midpoint and maximum of the training target.
pub fn default_inits(splits: &Splits, var: Variable) -> Vec<f64> {
    let raw: Vec<f64> = splits
        .train
        .target(var)
        .iter()
        .map(|v| v * splits.stats.y_std[var.index()] + splits.stats.y_mean[var.index()])
        .collect();
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    vec![0.0, splits.stats.y_mean[var.index()], min, 0.5 * (min + max), max]
}

/// SCIF on the test split from each physical initial value in `inits`.
/// Trajectories in the report are normalized.
pub fn sensitivity(
    model: &GruModel,
    var: Variable,
    seq_len: usize,
    splits: &Splits,
    inits: &[f64],
) -> Result<SensitivityReport> {
    let normalized: Vec<f64> = inits.iter().map(|&v| norm_target(v, &splits.stats, var)).collect();
    let mut report = scif_sensitivity(model, &splits.test.x, seq_len, &normalized, SENSITIVITY_TOLERANCE)?;
    report.inits = inits.to_vec();
    Ok(report)
}

pub fn write_sensitivity(report: &SensitivityReport, trajectories: &Path, merges: &Path) -> Result<()> {
    let mut out = create(trajectories)?;
    let io = |e| Error::io(trajectories, e);
    let header: Vec<String> = report.inits.iter().map(|v| format!("init_{v}")).collect();
    writeln!(out, "step,{}", header.join(",")).map_err(io)?;
    let n = report.trajectories.first().map_or(0, Vec::len);
    for t in 0..n {
        let vals: Vec<String> = report.trajectories.iter().map(|tr| tr[t].to_string()).collect();
        writeln!(out, "{},{}", t + 1, vals.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)?;

    let mut out = create(merges)?;
    let io = |e| Error::io(merges, e);
    writeln!(out, "init_a,init_b,merge_step").map_err(io)?;
    for &(i, j, m) in &report.merge_steps {
        let m = m.map(|m| m.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{m}", report.inits[i], report.inits[j]).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, WatershedParams};
    use crate::trainer::DEFAULT_SPLIT;

    fn splits() -> Splits {
        let ds = generate_dataset(9, 4, &WatershedParams::default()).unwrap();
        Splits::prepare(&ds, DEFAULT_SPLIT).unwrap()
    }

    fn config(strategy: Strategy) -> TrainConfig {
        TrainConfig {
            strategy,
            seq_len: 30,
            hidden_size: 4,
            bs: 4,
            max_epochs: 2,
            patience: 1,
            seeds: vec![1, 2],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn labels_and_modes() {
        assert_eq!(label(Strategy::Rmb, InferenceMode::Ssif), "RMB-SSIF");
        assert_eq!(label(Strategy::Tf, InferenceMode::Autoregressive), "TF");
        assert_eq!(eval_modes(Strategy::Rmb).len(), 2);
        assert_eq!(eval_modes(Strategy::Cmb), vec![InferenceMode::Scif]);
    }

    #[test]
    fn rmb_results_cover_both_schemes_and_every_day() {
        let s = splits();
        let (records, results) = train_and_evaluate(&config(Strategy::Rmb), &s, 1).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(results.len(), 2);
        for r in &results {
            assert_eq!(r.per_seed.len(), 2);
            assert!(r.predictions.iter().all(|p| p.len() == s.test.len()));
            assert_eq!(r.summary.avg_step_rmse.len(), 30);
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("summary.csv");
        write_summary(&results, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(SUMMARY_HEADER));
        assert_eq!(text.lines().count(), 3);
        let d = dir.path().join("daily.csv");
        write_daily_trace(&results[0].summary, &d).unwrap();
        assert_eq!(std::fs::read_to_string(&d).unwrap().lines().count(), 367);
    }

    #[test]
    fn sweep_rejects_oversized_requests_and_counts_rows() {
        let ds = generate_dataset(9, 4, &WatershedParams::default()).unwrap();
        let base = config(Strategy::Rmb);
        assert!(sweep_train_size(&base, &[Strategy::Rmb], &ds, DEFAULT_SPLIT, &[3], 366, 1).is_err());
        let rows = sweep_train_size(&base, &[Strategy::Rmb, Strategy::Cmb], &ds, DEFAULT_SPLIT, &[1, 2], 366, 1).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
    }

    #[test]
    fn sensitivity_reports_every_pair() {
        let s = splits();
        let (records, _) = train_and_evaluate(&config(Strategy::Cmb), &s, 1).unwrap();
        let inits = default_inits(&s, Variable::Sw);
        assert_eq!(inits.len(), 5);
        let rep = sensitivity(&records[0].model, Variable::Sw, 30, &s, &inits).unwrap();
        assert_eq!(rep.merge_steps.len(), 10);
        assert_eq!(rep.trajectories[0].len(), s.test.len());
    }
}
