//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! The experiment criteria train on the full 200-year synthetic dataset with 5
//! seeds, which takes most of an hour on one core. Run it alone with
//! `cargo test --release -p seqbatch-core --test acceptance`.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqbatch::batching::{plan_cmb, plan_rmb, plan_smb, plan_ssmb, BatchPlan};
use seqbatch::datagen::{generate_dataset, WatershedParams};
use seqbatch::dataset::{Augmentation, Variable};
use seqbatch::experiment::{default_inits, sensitivity, train_and_evaluate, StrategyResult};
use seqbatch::gradcheck::{analytic_gradient, gradcheck};
use seqbatch::gru::segment_forward;
use seqbatch::inference::infer_ssif;
use seqbatch::metrics::{avg_daily_rmse, avg_step_rmse, nse, rmse, MeanStd};
use seqbatch::trainer::{batch_gradient, time_epochs, Splits, Strategy, TrainConfig, DEFAULT_SPLIT};
use seqbatch::{GruModel, HiddenState, Matrix};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const DATA_SEED: u64 = 42;
const DATA_YEARS: usize = 200;
const SEQ_LEN: usize = 366;

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let line = format!("[{tag}] {id:>2} {name}: {detail}");
        println!("{line}");
        self.lines.push((pass, line));
    }
}

fn random_case(rng: &mut ChaCha8Rng, f: usize, h: usize, t: usize) -> (GruModel, Matrix, Matrix, HiddenState) {
    let mut model = GruModel::init(rng.random(), f, h, 1).unwrap();
    for b in model.bias.iter_mut().chain(model.b_out.iter_mut()) {
        *b = rng.random_range(-0.5..0.5);
    }
    let x = Matrix::from_fn(t, f, |_, _| rng.random_range(-1.0..1.0));
    let y = Matrix::from_fn(t, 1, |_, _| rng.random_range(-1.0..1.0));
    let h0 = HiddenState::from_vec((0..h).map(|_| rng.random_range(-0.5..0.5)).collect());
    (model, x, y, h0)
}

fn gradient_fidelity(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f = rng.random_range(1..=4);
        let h = rng.random_range(1..=8);
        let t = rng.random_range(1..=8);
        let (model, x, y, h0) = random_case(&mut rng, f, h, t);
        worst = worst.max(gradcheck(&model, &x, &y, &h0));
    }
    let secs = start.elapsed().as_secs_f64();
    report.record(
        1,
        "gradient fidelity",
        worst < 1e-4 && secs < 10.0,
        format!("max relative error {worst:.2e} over 20 instances in {secs:.2}s"),
    );
}

fn chained_state_oracle(report: &mut Report) {
    let start = Instant::now();
    let ds = generate_dataset(7, 10, &WatershedParams::default()).unwrap();
    let splits = Splits::from_parts(&ds, &ds, &ds).unwrap();
    let model = GruModel::init(3, splits.test.n_inputs(), 32, 1).unwrap();
    let chained = infer_ssif(&model, &splits.test.x, SEQ_LEN).unwrap();
    let whole = segment_forward(&model, &splits.test.x, &HiddenState::zeros(32)).unwrap();
    let identical = chained.len() == whole.yhat.rows()
        && chained.iter().zip(whole.yhat.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
    let secs = start.elapsed().as_secs_f64();
    report.record(
        2,
        "chained-state inference oracle",
        identical && secs < 5.0,
        format!("{} days, bit-identical={identical}, {secs:.2}s", chained.len()),
    );
}

fn assert_covers(plan: &BatchPlan, n: usize) -> bool {
    let mut seen = vec![0u32; n];
    for id in plan.batches.iter().flatten() {
        if *id >= n {
            return false;
        }
        seen[*id] += 1;
    }
    seen.iter().all(|&c| c == 1)
}

fn plan_invariants(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut failures = Vec::new();
    for n in 1..=64usize {
        for bs in 1..=n {
            let rmb = plan_rmb(n, bs, &mut rng).unwrap();
            let cmb = plan_cmb(n, bs, Augmentation::InitialValue, &mut rng).unwrap();
            let ssmb = plan_ssmb(n, bs).unwrap();
            for p in [&rmb, &cmb, &ssmb] {
                if p.validate().is_err() || !assert_covers(p, n) || p.batches.len() != n.div_ceil(bs) {
                    failures.push(format!("{:?} n={n} bs={bs}", p.kind));
                }
            }
            // Sequential batches are contiguous runs in temporal order.
            let flat: Vec<usize> = ssmb.batches.iter().flatten().copied().collect();
            if flat != (0..n).collect::<Vec<_>>() || ssmb.state_edges.len() != n - 1 {
                failures.push(format!("SSMB order n={n} bs={bs}"));
            }
            let smb = plan_smb(n, bs).unwrap();
            let pos: HashMap<usize, (usize, usize)> = smb
                .batches
                .iter()
                .enumerate()
                .flat_map(|(k, b)| b.iter().enumerate().map(move |(j, &id)| (id, (k, j))))
                .collect();
            let aligned = smb.state_edges.iter().all(|&(a, b)| {
                let ((ka, ja), (kb, jb)) = (pos[&a], pos[&b]);
                b == a + 1 && kb == ka + 1 && jb == ja
            });
            if smb.validate().is_err() || !assert_covers(&smb, (n / bs) * bs) || !aligned {
                failures.push(format!("SMB n={n} bs={bs}"));
            }
        }
        let (one_smb, one_ssmb) = (plan_smb(n, 1).unwrap(), plan_ssmb(n, 1).unwrap());
        if one_smb.batches != one_ssmb.batches || one_smb.state_edges != one_ssmb.state_edges {
            failures.push(format!("bs=1 equivalence n={n}"));
        }
    }

    // Batch gradient equals the mean of per-segment gradients.
    let mut worst = 0.0f64;
    let mut grng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (model, _, _, _) = random_case(&mut grng, 3, 6, 5);
        let bs = grng.random_range(2..=8);
        let xs: Vec<Matrix> = (0..bs).map(|_| Matrix::from_fn(5, 3, |_, _| grng.random_range(-1.0..1.0))).collect();
        let ys: Vec<Matrix> = (0..bs).map(|_| Matrix::from_fn(5, 1, |_, _| grng.random_range(-1.0..1.0))).collect();
        let h0 = vec![HiddenState::zeros(6); bs];
        let (_, batched, _) =
            batch_gradient(&model, &xs.iter().collect::<Vec<_>>(), &ys.iter().collect::<Vec<_>>(), &h0).unwrap();
        let mut mean = model.zeros_like();
        for (x, y) in xs.iter().zip(&ys) {
            mean.add_scaled(&analytic_gradient(&model, x, y, &h0[0]), 1.0 / bs as f64);
        }
        worst = worst.max(batched.max_abs_diff(&mean));
    }
    if worst >= 1e-10 {
        failures.push(format!("batch gradient linearity {worst:.2e}"));
    }
    report.record(
        9,
        "batch-plan invariants (N <= 64)",
        failures.is_empty(),
        if failures.is_empty() {
            format!("all plans valid, gradient linearity {worst:.2e}")
        } else {
            format!("{} failures, first: {}", failures.len(), failures[0])
        },
    );
}

fn metric_oracles(report: &mut Report) {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let y = [1.0, 2.0, 3.0];
    let mean_pred = [2.0, 2.0, 2.0];
    let step = avg_step_rmse(&[vec![-1.5; 4], vec![1.5; 4]]).unwrap();
    let daily = avg_daily_rmse(&[3.0, 4.0, 0.0], &[10, 10, 11]).unwrap();
    let seeds = MeanStd::of(&[1.0, 3.0]).unwrap();
    let checks = [
        ("rmse identical", rmse(&y, &y).unwrap() == 0.0),
        ("rmse (0,0)/(3,4)", close(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt())),
        ("nse perfect", nse(&y, &y).unwrap() == 1.0),
        ("nse mean predictor", close(nse(&y, &mean_pred).unwrap(), 0.0)),
        ("nse constant observations", nse(&[4.0, 4.0], &[1.0, 2.0]).is_err()),
        ("rmse empty", rmse(&[], &[]).is_err()),
        ("step trace constant", step.iter().all(|&v| v == 1.5)),
        ("daily two-point", close(daily.values[9].unwrap(), 12.5f64.sqrt()) && daily.values[10] == Some(0.0)),
        ("daily missing", daily.values[0].is_none()),
        ("seed std", seeds.mean == 2.0 && close(seeds.std, 2f64.sqrt())),
        ("single seed std", MeanStd::of(&[5.0]).unwrap().std == 0.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report.record(
        10,
        "metric oracles",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} cases exact", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    );
}

fn timing_ratios(report: &mut Report, splits: &Splits) {
    let median = |strategy| {
        let config = TrainConfig {
            strategy,
            variable: Variable::Sw,
            seeds: vec![1],
            ..TrainConfig::default()
        };
        time_epochs(&config, 1, splits, 6).unwrap().median
    };
    let rmb = median(Strategy::Rmb);
    let ssmb = median(Strategy::Ssmb);
    let cmb = median(Strategy::Cmb);
    let (ssmb_ratio, cmb_ratio) = (ssmb / rmb, cmb / rmb);
    report.record(
        8,
        "epoch timing",
        ssmb_ratio > 5.0 && (0.5..=2.0).contains(&cmb_ratio),
        format!("s/epoch RMB {rmb:.4} SSMB {ssmb:.4} ({ssmb_ratio:.2}x) CMB {cmb:.4} ({cmb_ratio:.2}x)"),
    );
}

struct Runs {
    by_label: HashMap<(Variable, String), StrategyResult>,
    cmb_models: HashMap<Variable, GruModel>,
}

impl Runs {
    fn mean(&self, var: Variable, label: &str) -> f64 {
        self.by_label[&(var, label.to_string())].summary.rmse.mean
    }

    fn std(&self, var: Variable, label: &str) -> f64 {
        self.by_label[&(var, label.to_string())].summary.rmse.std
    }

    fn step_ratio(&self, var: Variable, label: &str) -> f64 {
        let trace = &self.by_label[&(var, label.to_string())].summary.avg_step_rmse;
        trace[0] / trace[SEQ_LEN - 1]
    }
}

fn run_experiments(splits: &Splits) -> Runs {
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let plan = [
        (Variable::Sw, Strategy::Rmb),
        (Variable::Sw, Strategy::Ssmb),
        (Variable::Sw, Strategy::Cmb),
        (Variable::Sw, Strategy::Tf),
        (Variable::Sf, Strategy::Rmb),
        (Variable::Sf, Strategy::Cmb),
        (Variable::Sno, Strategy::Cmb),
    ];
    let mut runs = Runs {
        by_label: HashMap::new(),
        cmb_models: HashMap::new(),
    };
    for (variable, strategy) in plan {
        let start = Instant::now();
        let config = TrainConfig {
            strategy,
            variable,
            seeds: SEEDS.to_vec(),
            ..TrainConfig::default()
        };
        let (records, results) = train_and_evaluate(&config, splits, jobs).unwrap();
        for r in results {
            println!(
                "       {variable} {:<9} rmse {} nse {} ({:.0}s)",
                r.label,
                r.summary.rmse,
                r.summary.nse,
                start.elapsed().as_secs_f64()
            );
            runs.by_label.insert((variable, r.label.clone()), r);
        }
        if strategy == Strategy::Cmb {
            let first = records.into_iter().next().unwrap();
            runs.cmb_models.insert(variable, first.model);
        }
    }
    runs
}

fn strategy_ordering(report: &mut Report, runs: &Runs) {
    let sw = Variable::Sw;
    let (iif, ssif) = (runs.mean(sw, "RMB-IIF"), runs.mean(sw, "RMB-SSIF"));
    let (ssmb, cmb) = (runs.mean(sw, "SSMB-SSIF"), runs.mean(sw, "CMB-SCIF"));
    report.record(
        3,
        "strategy ordering on soil water",
        ssif < iif && ssmb < ssif && cmb < ssif,
        format!("RMB-IIF {iif:.3} RMB-SSIF {ssif:.3} SSMB-SSIF {ssmb:.3} CMB-SCIF {cmb:.3}"),
    );
}

fn flux_null_result(report: &mut Report, runs: &Runs) {
    let sf = Variable::Sf;
    let (iif, cmb) = (runs.mean(sf, "RMB-IIF"), runs.mean(sf, "CMB-SCIF"));
    let rel = (cmb - iif).abs() / iif;
    report.record(
        4,
        "streamflow null result",
        rel < 0.15,
        format!("RMB-IIF {iif:.4} CMB-SCIF {cmb:.4} relative gap {rel:.3}"),
    );
}

fn step_trace_shape(report: &mut Report, runs: &Runs) {
    let sw = Variable::Sw;
    let iif = runs.step_ratio(sw, "RMB-IIF");
    let ssif = runs.step_ratio(sw, "RMB-SSIF");
    let ssmb = runs.step_ratio(sw, "SSMB-SSIF");
    report.record(
        5,
        "per-step error shape",
        iif >= 2.0 && ssif < 1.3 && ssmb < 1.3,
        format!("step1/step366 RMB-IIF {iif:.2} RMB-SSIF {ssif:.2} SSMB-SSIF {ssmb:.2}"),
    );
}

fn scif_convergence(report: &mut Report, runs: &Runs, splits: &Splits) {
    let worst = |var: Variable| {
        let inits = default_inits(splits, var);
        let rep = sensitivity(&runs.cmb_models[&var], var, SEQ_LEN, splits, &inits).unwrap();
        // A pair that never merges counts as slower than any finite merge.
        rep.merge_steps.iter().map(|m| m.2.unwrap_or(usize::MAX)).max().unwrap()
    };
    let (sno, sw) = (worst(Variable::Sno), worst(Variable::Sw));
    let show = |s: usize| if s == usize::MAX { "never".to_string() } else { s.to_string() };
    report.record(
        6,
        "prediction-chained convergence",
        sno <= SEQ_LEN && sw > sno,
        format!("worst merge step snowpack {} soil water {}", show(sno), show(sw)),
    );
}

fn teacher_forcing_ordering(report: &mut Report, runs: &Runs) {
    let sw = Variable::Sw;
    let (cmb, tf) = (runs.mean(sw, "CMB-SCIF"), runs.mean(sw, "TF"));
    let (cmb_sd, tf_sd) = (runs.std(sw, "CMB-SCIF"), runs.std(sw, "TF"));
    report.record(
        7,
        "teacher forcing vs conditional batches",
        cmb < tf && tf_sd > cmb_sd,
        format!("CMB-SCIF {cmb:.3} ± {cmb_sd:.3} TF {tf:.3} ± {tf_sd:.3}"),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut report = Report { lines: Vec::new() };
    gradient_fidelity(&mut report);
    chained_state_oracle(&mut report);
    plan_invariants(&mut report);
    metric_oracles(&mut report);

    let ds = generate_dataset(DATA_SEED, DATA_YEARS, &WatershedParams::default()).unwrap();
    let splits = Splits::prepare(&ds, DEFAULT_SPLIT).unwrap();
    timing_ratios(&mut report, &splits);

    let runs = run_experiments(&splits);
    strategy_ordering(&mut report, &runs);
    flux_null_result(&mut report, &runs);
    step_trace_shape(&mut report, &runs);
    scif_convergence(&mut report, &runs, &splits);
    teacher_forcing_ordering(&mut report, &runs);

    let mut lines = report.lines;
    lines.sort_by_key(|(_, l)| l[7..9].trim().parse::<u32>().unwrap());
    let failed = lines.iter().filter(|(p, _)| !p).count();
    println!("\nsummary ({:.0}s):", start.elapsed().as_secs_f64());
    for (_, line) in &lines {
        println!("{line}");
    }
    println!("{} passed, {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
