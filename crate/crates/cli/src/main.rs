use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seqbatch::config::RunConfig;
use seqbatch::datagen::{export_csv, generate_dataset, DAYS_PER_YEAR};
use seqbatch::dataset::{split_sizes, Variable};
use seqbatch::experiment::{
    default_inits, eval_modes, evaluate_models, label, sensitivity, sweep_train_size, timing, train_and_evaluate,
    write_daily_trace, write_sensitivity, write_step_trace, write_summary, write_sweep, write_timing, EvalSplit,
    StrategyResult,
};
use seqbatch::inference::write_predictions;
use seqbatch::model_io::ModelFile;
use seqbatch::trainer::{write_training_log, Splits, Strategy, TrainConfig, TrainRecord, DEFAULT_SPLIT};
use seqbatch::{Error, GruModel, Result};

/// Mini-batch training and inference strategies for GRU models on synthetic
/// watershed series.
#[derive(Parser)]
#[command(name = "seqbatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// `key = value` run configuration; missing keys use defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds trained concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset as CSV.
    GenData {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        years: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every configured seed, then write models, logs and test metrics.
    Train(ConfigArg),
    /// Re-evaluate the models saved by `train`.
    Evaluate {
        /// Output directory of a `train` run.
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Defaults to `<models>/eval-<split>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test RMSE as a function of training length.
    SweepTrainSize {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,40,80")]
        years_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "RMB,SSMB,CMB")]
        strategies: Vec<String>,
    },
    /// Seconds per training epoch for each strategy.
    Timing {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, default_value_t = 6)]
        epochs: usize,
        #[arg(long, value_delimiter = ',', default_value = "RMB,SMB,SSMB,CMB")]
        strategies: Vec<String>,
    },
    /// Prediction-chained inference from several initial values.
    ScifSensitivity {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Initial values in target units; defaults to zero, the training
        /// mean and the training minimum, midpoint and maximum.
        #[arg(long, value_delimiter = ',')]
        inits: Option<Vec<f64>>,
    },
    /// Teacher forcing against conditional mini-batches.
    CompareTf(ConfigArg),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { seed, years, out } => gen_data(seed, years, &out),
        Command::Train(cfg) => train(&cfg),
        Command::Evaluate { models, split, out } => evaluate(&models, &split, out),
        Command::SweepTrainSize {
            cfg,
            years_list,
            strategies,
        } => sweep(&cfg, &years_list, &strategies),
        Command::Timing { cfg, epochs, strategies } => time_strategies(&cfg, epochs, &strategies),
        Command::ScifSensitivity { cfg, inits } => scif_sensitivity(&cfg, inits),
        Command::CompareTf(cfg) => compare_tf(&cfg),
    }
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig> {
    if arg.jobs == 0 {
        return Err(Error::config("--jobs must be at least 1"));
    }
    match &arg.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn make_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn prepare(cfg: &RunConfig) -> Result<Splits> {
    let ds = generate_dataset(cfg.data.seed, cfg.data.years, &cfg.data.params)?;
    Splits::prepare(&ds, DEFAULT_SPLIT)
}

fn parse_strategies(names: &[String]) -> Result<Vec<Strategy>> {
    names.iter().map(|s| Strategy::parse(s)).collect()
}

fn gen_data(seed: u64, years: usize, out: &Path) -> Result<()> {
    if years == 0 {
        return Err(Error::config("--years must be at least 1"));
    }
    let ds = generate_dataset(seed, years, &Default::default())?;
    export_csv(&ds, out)?;
    println!("wrote {} days ({years} years) to {}", ds.len(), out.display());
    match split_sizes(ds.len(), DEFAULT_SPLIT) {
        Ok((a, b, c)) => println!("split: train {a}, valid {b}, test {c} days"),
        Err(e) => println!("split: {e}"),
    }
    Ok(())
}

fn run_name(strategy: Strategy, var: Variable, seed: u64) -> String {
    format!("{}_{}_seed{seed}", strategy.name().to_lowercase(), var.name())
}

fn print_results(results: &[StrategyResult]) {
    println!("{:<10} {:<4} {:>22} {:>18}", "strategy", "var", "RMSE", "NSE");
    for r in results {
        println!(
            "{:<10} {:<4} {:>22} {:>18}",
            r.label,
            r.variable.to_string(),
            r.summary.rmse.to_string(),
            r.summary.nse.to_string()
        );
    }
}

fn write_result_files(results: &[StrategyResult], out: &Path) -> Result<()> {
    write_summary(results, &out.join("summary.csv"))?;
    for r in results {
        let stem = format!("{}_{}", r.label.to_lowercase(), r.variable.name());
        write_step_trace(&r.summary, &out.join(format!("{stem}_step_rmse.csv")))?;
        write_daily_trace(&r.summary, &out.join(format!("{stem}_daily_rmse.csv")))?;
        write_predictions(&r.predictions, &out.join(format!("{stem}_predictions.csv")))?;
    }
    Ok(())
}

fn save_records(records: &[TrainRecord], seq_len: usize, out: &Path) -> Result<()> {
    let (models, logs) = (out.join("models"), out.join("logs"));
    make_dir(&models)?;
    make_dir(&logs)?;
    for rec in records {
        let name = run_name(rec.strategy, rec.variable, rec.seed);
        ModelFile {
            strategy: rec.strategy,
            variable: rec.variable,
            seed: rec.seed,
            seq_len,
            model: rec.model.clone(),
        }
        .save(&models.join(format!("{name}.model")))?;
        write_training_log(rec, &logs.join(format!("{name}.csv")))?;
    }
    Ok(())
}

fn train(arg: &ConfigArg) -> Result<()> {
    let cfg = load_config(arg)?;
    let t = &cfg.train;
    println!(
        "training {} on {} with bs={}, lr={}, T={}, stride={}, seeds {:?}",
        t.strategy,
        t.variable,
        t.bs,
        t.lr,
        t.seq_len,
        t.stride(),
        t.seeds
    );
    let splits = prepare(&cfg)?;
    make_dir(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.txt"), cfg.to_text()).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let (records, results) = train_and_evaluate(t, &splits, arg.jobs)?;
    for rec in &records {
        println!(
            "seed {}: {} epochs, best epoch {} (valid MSE {:.5})",
            rec.seed,
            rec.epochs.len(),
            rec.best_epoch,
            rec.best_valid_mse
        );
    }
    save_records(&records, t.seq_len, &cfg.out_dir)?;
    write_result_files(&results, &cfg.out_dir)?;
    print_results(&results);
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}

fn evaluate(dir: &Path, split: &str, out: Option<PathBuf>) -> Result<()> {
    let which = EvalSplit::parse(split)?;
    let cfg = RunConfig::load(&dir.join("config.txt"))?;
    let model_dir = dir.join("models");
    let entries = std::fs::read_dir(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
    let mut groups: BTreeMap<(String, String), Vec<ModelFile>> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&model_dir, e))?.path();
        if path.extension().is_some_and(|e| e == "model") {
            let m = ModelFile::load(&path)?;
            groups
                .entry((m.strategy.to_string(), m.variable.to_string()))
                .or_default()
                .push(m);
        }
    }
    if groups.is_empty() {
        return Err(Error::config(format!("no .model files in {}", model_dir.display())));
    }
    let splits = prepare(&cfg)?;
    let mut results = Vec::new();
    for files in groups.values_mut() {
        files.sort_by_key(|m| m.seed);
        let first = &files[0];
        let models: Vec<(u64, &GruModel)> = files.iter().map(|m| (m.seed, &m.model)).collect();
        for mode in eval_modes(first.strategy) {
            results.push(evaluate_models(
                &models,
                first.strategy,
                first.variable,
                mode,
                first.seq_len,
                &splits,
                which,
            )?);
        }
    }
    let out = out.unwrap_or_else(|| dir.join(format!("eval-{split}")));
    make_dir(&out)?;
    write_result_files(&results, &out)?;
    print_results(&results);
    println!("outputs in {}", out.display());
    Ok(())
}

fn sweep(arg: &ConfigArg, years_list: &[usize], names: &[String]) -> Result<()> {
    let cfg = load_config(arg)?;
    let strategies = parse_strategies(names)?;
    let ds = generate_dataset(cfg.data.seed, cfg.data.years, &cfg.data.params)?;
    let rows = sweep_train_size(&cfg.train, &strategies, &ds, DEFAULT_SPLIT, years_list, DAYS_PER_YEAR, arg.jobs)?;
    make_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("sweep_train_size.csv");
    write_sweep(&rows, &path)?;
    for r in &rows {
        println!("{:<10} {:>4} years  seed {}  RMSE {:.3}", label(r.strategy, r.mode), r.train_years, r.seed, r.rmse);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn time_strategies(arg: &ConfigArg, epochs: usize, names: &[String]) -> Result<()> {
    let cfg = load_config(arg)?;
    let strategies = parse_strategies(names)?;
    let splits = prepare(&cfg)?;
    let timings = timing(&cfg.train, &strategies, &splits, epochs)?;
    make_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("timing.csv");
    write_timing(&timings, &path)?;
    let rmb = timings.iter().find(|t| t.strategy == Strategy::Rmb).map(|t| t.median);
    for t in &timings {
        match rmb {
            Some(r) => println!("{:<5} {:.4} s/epoch  ({:.2}x RMB)", t.strategy, t.median, t.median / r),
            None => println!("{:<5} {:.4} s/epoch", t.strategy, t.median),
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn scif_sensitivity(arg: &ConfigArg, inits: Option<Vec<f64>>) -> Result<()> {
    let cfg = load_config(arg)?;
    let splits = prepare(&cfg)?;
    let var = cfg.train.variable;
    let config = TrainConfig {
        strategy: Strategy::Cmb,
        seeds: vec![cfg.train.seeds[0]],
        ..cfg.train.clone()
    };
    let (records, _) = train_and_evaluate(&config, &splits, 1)?;
    let inits = inits.unwrap_or_else(|| default_inits(&splits, var));
    let report = sensitivity(&records[0].model, var, config.seq_len, &splits, &inits)?;
    make_dir(&cfg.out_dir)?;
    let stem = format!("scif_sensitivity_{}", var.name());
    write_sensitivity(
        &report,
        &cfg.out_dir.join(format!("{stem}_trajectories.csv")),
        &cfg.out_dir.join(format!("{stem}_merge.csv")),
    )?;
    for &(i, j, m) in &report.merge_steps {
        let m = m.map_or("never".to_string(), |m| m.to_string());
        println!("init {:.3} vs {:.3}: merged from step {m}", report.inits[i], report.inits[j]);
    }
    match report.worst_merge() {
        Some(m) => println!("all trajectories within tolerance from step {m}"),
        None => println!("some trajectories never merge"),
    }
    Ok(())
}

fn compare_tf(arg: &ConfigArg) -> Result<()> {
    let cfg = load_config(arg)?;
    let splits = prepare(&cfg)?;
    let mut results = Vec::new();
    for strategy in [Strategy::Cmb, Strategy::Tf] {
        let config = TrainConfig {
            strategy,
            ..cfg.train.clone()
        };
        let (_, mut r) = train_and_evaluate(&config, &splits, arg.jobs)?;
        results.append(&mut r);
    }
    make_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("compare_tf.csv");
    write_summary(&results, &path)?;
    print_results(&results);
    println!("wrote {}", path.display());
    Ok(())
}
