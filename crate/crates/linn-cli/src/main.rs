//! `linn` — train and probe neural logic models from the command line.
//!
//! Every run is driven by a flat config file plus optional `LINN_*`
//! environment variables and `--override key=value` pairs (applied in that
//! order). Training copies the config it actually used into the output
//! directory, so any result can be regenerated from that directory alone.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
//! divergence, 4 failed check.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use linn::config::{RecFormat, RunConfig, Task};
use linn::model::LinnModel;
use linn::rec::{
    self, cooccurrence, evaluate_topk, train_rec_with, write_cooccur_csv, write_rec_metrics_csv,
    ItemMap, RecDataset,
};
use linn::sim::{
    eval_sim, solve_variables, sweep_lambda_l, train_sim_with, write_metrics_csv, write_sweep_csv,
    write_variables_tsv, SimDataset, SweepPoint,
};
use linn::{Error, Split};

#[derive(Parser)]
#[command(name = "linn", version, about = "Neural logic reasoning: training and probes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a simulated logical-equation dataset with hidden solution.
    GenSim {
        /// Number of variables.
        #[arg(long)]
        n: usize,
        /// Number of expressions (10% each go to validation and test).
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Output directory for train/valid/test.tsv and assignment.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the model described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. --override lambda_logic=0.1.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint on one dataset split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        split: SplitArg,
        /// Optional directory for eval.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare learned variable embeddings against the hidden solution.
    SolveVars {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional directory for variables.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per logic-regularizer weight and report test metrics.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Comma-separated λ_l values, e.g. 0,0.01,0.1,1.
        #[arg(long)]
        grid: String,
        /// Maximum concurrent training runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Pairwise AND-similarity matrix over a set of items.
    Cooccur {
        #[arg(long)]
        checkpoint: PathBuf,
        /// items.tsv written by `train` for a rec task.
        #[arg(long)]
        item_map: PathBuf,
        /// Comma-separated raw item ids.
        #[arg(long)]
        items: String,
        /// Optional directory for cooccur.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write variable/item embeddings as TSV.
    DumpEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Label rows with raw item ids instead of v0..vN.
        #[arg(long)]
        item_map: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the full training objective.
    GradCheck {
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 usage, 2 data, 3 divergence, 4 failed check.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Divergence(_) | Error::NonFinite(_) | Error::ZeroNorm | Error::LogDomain(_) => 3,
        Error::GradCheck { .. } => 4,
        _ => 2,
    }
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::GenSim { n, m, seed, out } => gen_sim(n, m, seed, &out),
        Cmd::Train { config, overrides } => train(&config, &overrides),
        Cmd::Eval {
            config,
            overrides,
            checkpoint,
            split,
            out,
        } => eval(&config, &overrides, &checkpoint, split.into(), out.as_deref()),
        Cmd::SolveVars {
            config,
            overrides,
            checkpoint,
            out,
        } => solve_vars(&config, &overrides, &checkpoint, out.as_deref()),
        Cmd::Sweep {
            config,
            overrides,
            grid,
            jobs,
        } => sweep(&config, &overrides, &grid, jobs),
        Cmd::Cooccur {
            checkpoint,
            item_map,
            items,
            out,
        } => cooccur(&checkpoint, &item_map, &items, out.as_deref()),
        Cmd::DumpEmbeddings {
            checkpoint,
            item_map,
            out,
        } => dump_embeddings(&checkpoint, item_map.as_deref(), &out),
        Cmd::GradCheck { d, seed, tol } => grad_check(d, seed, tol),
    }
}

/// Config file, then environment, then --override pairs.
fn load_config(path: &Path, overrides: &[String]) -> Result<(String, RunConfig), Error> {
    let raw = fs::read_to_string(path)?;
    let mut cfg = RunConfig::parse(&raw)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.apply_env()?;
    for pair in overrides {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--override needs key=value, got {pair:?}")))?;
        cfg.apply(key.trim(), value.trim())?;
    }
    Ok((raw, cfg))
}

fn require_data(cfg: &RunConfig) -> Result<&Path, Error> {
    if cfg.data_path.is_empty() {
        return Err(Error::Config(
            "data_path is empty; point it at a dataset (see gen-sim)".into(),
        ));
    }
    Ok(Path::new(&cfg.data_path))
}

fn load_rec_dataset(cfg: &RunConfig) -> Result<RecDataset, Error> {
    let path = require_data(cfg)?;
    let log = match cfg.rec_format {
        RecFormat::Ml100k => rec::load_ml100k(path)?,
        RecFormat::AmazonCsv => rec::load_amazon_csv(path)?,
    };
    Ok(RecDataset::build(&log, cfg.history_len, cfg.negative_history))
}

fn gen_sim(n: usize, m: usize, seed: u64, out: &Path) -> Result<(), Error> {
    let ds = SimDataset::generate(n, m, seed)?;
    fs::create_dir_all(out)?;
    ds.save(out)?;
    println!(
        "generated {} expressions over {} variables (train {} / valid {} / test {}) -> {}",
        m,
        n,
        ds.split(Split::Train).len(),
        ds.split(Split::Valid).len(),
        ds.split(Split::Test).len(),
        out.display()
    );
    Ok(())
}

fn train(config: &Path, overrides: &[String]) -> Result<(), Error> {
    let (raw, cfg) = load_config(config, overrides)?;
    let out = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out)?;
    // The file as given, plus the effective config after env/override layers.
    fs::write(out.join("config.txt"), &raw)?;
    fs::write(out.join("config.effective.txt"), cfg.render())?;

    match cfg.task {
        Task::Sim => {
            let ds = SimDataset::load(require_data(&cfg)?)?;
            let run = train_sim_with(&ds, &cfg.sim_config(), |m| {
                println!(
                    "epoch {:>3}  loss {:>10.4}  valid acc {:.4} rmse {:.4}  test acc {:.4} rmse {:.4}",
                    m.epoch, m.loss, m.valid.accuracy, m.valid.rmse, m.test.accuracy, m.test.rmse
                );
            })?;
            write_metrics_csv(&out.join("metrics.csv"), &run.history)?;
            run.model.save(&out.join("model.ckpt"))?;
            let best = &run.history[run.best_epoch];
            println!("stopped: {}", run.stopped);
            println!(
                "best epoch {}  test acc {:.4} rmse {:.4}  -> {}",
                best.epoch,
                best.test.accuracy,
                best.test.rmse,
                out.display()
            );
        }
        Task::Rec => {
            let ds = load_rec_dataset(&cfg)?;
            let run = train_rec_with(&ds, &cfg.rec_config(), |m| {
                println!(
                    "epoch {:>3}  loss {:>10.4}  valid ndcg@10 {:.4} hit@1 {:.4}  test ndcg@10 {:.4} hit@1 {:.4}",
                    m.epoch, m.loss, m.valid.ndcg10, m.valid.hit1, m.test.ndcg10, m.test.hit1
                );
            })?;
            write_rec_metrics_csv(&out.join("rec_metrics.csv"), &run.history)?;
            run.model.save(&out.join("model.ckpt"))?;
            ds.items().save(&out.join("items.tsv"))?;
            let best = &run.history[run.best_epoch];
            println!("stopped: {}", run.stopped);
            println!(
                "best epoch {}  test ndcg@10 {:.4} hit@1 {:.4}  -> {}",
                best.epoch,
                best.test.ndcg10,
                best.test.hit1,
                out.display()
            );
        }
    }
    Ok(())
}

fn eval(
    config: &Path,
    overrides: &[String],
    checkpoint: &Path,
    split: Split,
    out: Option<&Path>,
) -> Result<(), Error> {
    let (_, cfg) = load_config(config, overrides)?;
    let model = LinnModel::load(checkpoint)?;
    let row = match cfg.task {
        Task::Sim => {
            let ds = SimDataset::load(require_data(&cfg)?)?;
            let m = eval_sim(&model, &ds, split)?;
            println!("{}: accuracy {:.6} rmse {:.6}", split.name(), m.accuracy, m.rmse);
            format!("split,accuracy,rmse\n{},{:.6},{:.6}\n", split.name(), m.accuracy, m.rmse)
        }
        Task::Rec => {
            let ds = load_rec_dataset(&cfg)?;
            let m = evaluate_topk(&model, &ds, split, cfg.seed)?;
            println!("{}: ndcg@10 {:.6} hit@1 {:.6}", split.name(), m.ndcg10, m.hit1);
            format!("split,ndcg10,hit1\n{},{:.6},{:.6}\n", split.name(), m.ndcg10, m.hit1)
        }
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("eval.csv"), row)?;
    }
    Ok(())
}

fn solve_vars(
    config: &Path,
    overrides: &[String],
    checkpoint: &Path,
    out: Option<&Path>,
) -> Result<(), Error> {
    let (_, cfg) = load_config(config, overrides)?;
    if cfg.task != Task::Sim {
        return Err(Error::Config("solve-vars applies to task = sim".into()));
    }
    let ds = SimDataset::load(require_data(&cfg)?)?;
    let model = LinnModel::load(checkpoint)?;
    let report = solve_variables(&model, ds.hidden())?;
    println!(
        "solved {}/{} variables ({:.4})",
        report
            .rows
            .iter()
            .filter(|r| r.predicted == r.truth)
            .count(),
        report.rows.len(),
        report.accuracy
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_variables_tsv(&dir.join("variables.tsv"), &report)?;
    }
    Ok(())
}

fn sweep(config: &Path, overrides: &[String], grid: &str, jobs: usize) -> Result<(), Error> {
    let (_, cfg) = load_config(config, overrides)?;
    if cfg.task != Task::Sim {
        return Err(Error::Config("sweep applies to task = sim".into()));
    }
    let values: Vec<f64> = grid
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad grid value {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    let ds = SimDataset::load(require_data(&cfg)?)?;
    let base = cfg.sim_config();

    let points: Vec<SweepPoint> = if jobs <= 1 || values.len() == 1 {
        sweep_lambda_l(&ds, &values, &base)?
    } else {
        // One slice of the grid per worker; results keep grid order.
        let chunk = values.len().div_ceil(jobs);
        let slices: Vec<&[f64]> = values.chunks(chunk).collect();
        let results: Vec<Result<Vec<SweepPoint>, Error>> = std::thread::scope(|scope| {
            let handles: Vec<_> = slices
                .iter()
                .map(|slice| scope.spawn(|| sweep_lambda_l(&ds, slice, &base)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        });
        let mut all = Vec::with_capacity(values.len());
        for r in results {
            all.extend(r?);
        }
        all
    };

    for p in &points {
        println!(
            "lambda_logic {:<10} accuracy {:.4} rmse {:.4}",
            p.lambda_logic, p.accuracy, p.rmse
        );
    }
    let out = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out)?;
    write_sweep_csv(&out.join("sweep.csv"), &points)?;
    Ok(())
}

fn cooccur(
    checkpoint: &Path,
    item_map: &Path,
    items: &str,
    out: Option<&Path>,
) -> Result<(), Error> {
    let model = LinnModel::load(checkpoint)?;
    let map = ItemMap::load(item_map)?;
    let names: Vec<String> = items.split(',').map(|s| s.trim().to_string()).collect();
    let ids: Vec<u32> = names
        .iter()
        .map(|n| map.resolve(n))
        .collect::<Result<_, _>>()?;
    let matrix = cooccurrence(&model, &ids)?;

    let n = matrix.len();
    let mut asym = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                asym += (matrix[i][j] - matrix[j][i]).abs();
            }
        }
    }
    let pairs = (n * n - n).max(1);
    println!(
        "{n}x{n} co-occurrence matrix; mean |M[i,j] - M[j,i]| = {:.6}",
        asym / pairs as f64
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_cooccur_csv(&dir.join("cooccur.csv"), &names, &matrix)?;
    }
    Ok(())
}

fn dump_embeddings(
    checkpoint: &Path,
    item_map: Option<&Path>,
    out: &Path,
) -> Result<(), Error> {
    let model = LinnModel::load(checkpoint)?;
    let map = item_map.map(ItemMap::load).transpose()?;
    let emb = model.store().get(model.embeddings());
    fs::create_dir_all(out)?;
    let mut body = String::new();
    for row in 0..emb.rows() {
        let label = match &map {
            Some(m) => m.name(row as u32).to_string(),
            None => format!("v{row}"),
        };
        body.push_str(&label);
        for c in 0..emb.cols() {
            body.push_str(&format!("\t{}", emb.get(row, c)));
        }
        body.push('\n');
    }
    fs::write(out.join("embeddings.tsv"), body)?;
    println!(
        "wrote {} embeddings of width {} -> {}",
        emb.rows(),
        emb.cols(),
        out.join("embeddings.tsv").display()
    );
    Ok(())
}

fn grad_check(d: usize, seed: u64, tol: f64) -> Result<(), Error> {
    let report = linn::model::gradcheck_full_loss(d, seed)?;
    if report.max_rel >= tol {
        return Err(Error::GradCheck {
            max_rel: report.max_rel,
            tol,
        });
    }
    println!(
        "grad-check passed: max relative error {:.3e} over {} entries (tolerance {:.1e})",
        report.max_rel, report.checked, tol
    );
    Ok(())
}
