//! `cueplan`: generate datasets, train and evaluate predictors, dump
//! imaginations and run the planning benchmark.
//!
//! Exit codes: 1 validation, 2 generation, 3 I/O, 4 numerical.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use cueplan::imagination::{dump_frames, imagine, FrameConfig};
use cueplan::metrics::{evaluate, format_table, ErrorTable};
use cueplan::planner::{hit_accuracy, plan_csv, push_trials, run_trials, Planner, HIT_THRESHOLDS};
use cueplan::predictors::{ConstantVelocity, Model, ModelKind, NetPredictor, Oracle, Predictor};
use cueplan::seed::child_seed;
use cueplan::training::{train_curriculum, train_with, TrainReport};
use cueplan::worldgen::{generate_dataset, sample_world, spec_variant, Dataset};
use cueplan::Error;

use config::RunConfig;

const DOMAIN_INIT: u64 = 40;
const DOMAIN_EVAL: u64 = 41;
const DOMAIN_IMAGINE: u64 = 42;
const DOMAIN_TRIALS: u64 = 43;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::PlacementFailure { .. } => 2,
            Error::Io(_) | Error::Format(_) | Error::CheckpointMissing(_) | Error::Json(_) => 3,
            Error::DivergenceDetected { .. } | Error::EventOverflow { .. } | Error::NonFiniteInput(_) | Error::NotInContact(_) => 4,
            _ => 1,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "cueplan", version, about = "Object-centric billiards prediction, imagination and planning")]
struct Cli {
    /// JSON run configuration; every field is optional except the seed.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides CUEPLAN_SEED and the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Oracle,
    Cv,
    Oc,
    Fc,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Oc,
    Fc,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset directory.
    Gen {
        /// Dataset directory to create.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Built-in distribution instead of the config's world.
        #[arg(long)]
        variant: Option<String>,
        /// Number of sequences.
        #[arg(long)]
        n: Option<usize>,
        /// Balls per world.
        #[arg(long)]
        balls: Option<usize>,
    },
    /// Train a model and write its checkpoint and loss log.
    Train {
        /// Dataset directory (or the parent of the stage directories).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Object-centric or frame-centric network.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Ball slots of the frame-centric network.
        #[arg(long)]
        max_balls: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma-separated stage names, each a subdirectory of --data (e.g. 1b,2b,3b).
        #[arg(long, value_delimiter = ',')]
        curriculum: Option<Vec<String>>,
        /// Start from this checkpoint's weights.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Loss CSV; defaults to `<out>.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Angular and magnitude error tables.
    Eval {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Comma-separated built-in variant names.
        #[arg(long, value_delimiter = ',')]
        datasets: Option<Vec<String>>,
        /// Evaluate a saved dataset instead.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Sequences per generated variant.
        #[arg(long)]
        n: Option<usize>,
        /// CSV of every table cell.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll a predictor forward and dump the frames.
    Imagine {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Directory for the PPM frames and `imagined.blrd`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        balls: Option<usize>,
    },
    /// Push-to-location planning benchmark.
    Plan {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Per-trial CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation(format!("thread pool: {e}")))?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let seed = cfg.resolve_seed(cli.seed)?;
    match cli.command {
        Command::Gen { out, variant, n, balls } => cmd_gen(cfg, seed, out, variant, n, balls),
        Command::Train { data, out, kind, max_balls, epochs, curriculum, init, log } => {
            if let Some(k) = kind {
                cfg.model.kind = match k {
                    KindArg::Oc => ModelKind::Oc,
                    KindArg::Fc => ModelKind::Fc,
                };
            }
            if let Some(m) = max_balls {
                cfg.model.max_balls = m;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cmd_train(cfg, seed, data, out, curriculum, init, log)
        }
        Command::Eval { model, ckpt, datasets, data, n, out } => {
            if let Some(d) = datasets {
                cfg.eval.datasets = d;
            }
            if let Some(n) = n {
                cfg.eval.n_sequences = n;
            }
            cmd_eval(cfg, seed, model, ckpt, data, out)
        }
        Command::Imagine { model, ckpt, steps, out, variant, balls } => {
            if let Some(s) = steps {
                cfg.imagine.steps = s;
            }
            cmd_imagine(cfg, seed, model, ckpt, out, variant, balls)
        }
        Command::Plan { model, ckpt, trials, out } => {
            if let Some(t) = trials {
                cfg.trials = t;
            }
            cmd_plan(cfg, seed, model, ckpt, out)
        }
    }
}

fn header(cmd: &str, cfg: &RunConfig, seed: u64) {
    println!("# cueplan {cmd}");
    println!("# seed {seed}");
    println!("# config {}", cfg.canonical_json());
}

fn required(path: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    path.or_else(|| fallback.clone()).ok_or_else(|| CliError::validation(format!("no {what} given")))
}

fn load_dataset(dir: &Path) -> CliResult<Dataset> {
    if !dir.join("manifest.json").is_file() {
        return Err(CliError::io(format!("no dataset at {}", dir.display())));
    }
    Ok(Dataset::load(dir)?)
}

fn cmd_gen(mut cfg: RunConfig, seed: u64, out: Option<PathBuf>, variant: Option<String>, n: Option<usize>, balls: Option<usize>) -> CliResult {
    if let Some(v) = variant {
        cfg.world = spec_variant(&v)?;
    }
    if let Some(b) = balls {
        cfg.world = cfg.world.with_balls(b);
    }
    if let Some(n) = n {
        cfg.n_sequences = n;
    }
    let out = required(out, &cfg.paths.data, "output directory (--out)")?;
    header("gen", &cfg, seed);
    let ds = generate_dataset(&cfg.world, cfg.n_sequences, seed, &cfg.physics)?;
    ds.save(&out)?;
    let m = &ds.manifest;
    println!("dataset {} sequences, {} frames, {} events, spec {}", m.n_sequences, m.total_frames, m.total_events, m.spec.name);
    Ok(())
}

fn write_log(path: &Path, report: &TrainReport) -> CliResult {
    let f = fs::File::create(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    report.write_csv(std::io::BufWriter::new(f), true)?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_train(
    mut cfg: RunConfig,
    seed: u64,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    curriculum: Option<Vec<String>>,
    init: Option<PathBuf>,
    log: Option<PathBuf>,
) -> CliResult {
    let data = required(data, &cfg.paths.data, "dataset (--data)")?;
    let out = required(out, &cfg.paths.checkpoint, "checkpoint path (--out)")?;
    cfg.train.seed = seed;
    cfg.train.horizon = cfg.model.horizon;
    let tcfg = cfg.train.clone();
    tcfg.validate()?;
    cfg.model.validate()?;
    header("train", &cfg, seed);
    let mut model = Model::new(cfg.model.clone(), child_seed(seed, DOMAIN_INIT, 0))?;
    if let Some(p) = init {
        model.init_from(&Model::load(&p)?)?;
    }
    match curriculum {
        None => {
            let ds = load_dataset(&data)?;
            let report = train_with(&mut model, &ds, &tcfg, tcfg.epochs, |r| {
                eprintln!("epoch {} mean loss {:.6} ({:.1}s)", r.epoch, r.mean_loss, r.wall_seconds);
                println!("epoch {} mean_loss {:.12e}", r.epoch, r.mean_loss);
            })?;
            model.save(&out)?;
            write_log(&log.unwrap_or_else(|| with_suffix(&out, ".log.csv")), &report)?;
            println!("checkpoint {}", out.display());
        }
        Some(stages) => {
            if stages.is_empty() {
                return Err(CliError::validation("empty curriculum"));
            }
            let sets = stages.iter().map(|s| load_dataset(&data.join(s))).collect::<CliResult<Vec<_>>>()?;
            let plan: Vec<(&Dataset, usize)> = stages
                .iter()
                .zip(&sets)
                .map(|(name, ds)| {
                    let epochs = tcfg.curriculum.iter().find(|s| &s.dataset == name).map_or(tcfg.epochs, |s| s.epochs);
                    (ds, epochs)
                })
                .collect();
            let results = train_curriculum(&model, &plan, &tcfg)?;
            for (name, r) in stages.iter().zip(&results) {
                let path = with_suffix(&out, &format!(".{name}"));
                r.model.save(&path)?;
                write_log(&with_suffix(&path, ".log.csv"), &r.report)?;
                for e in &r.report.epochs {
                    println!("stage {name} epoch {} mean_loss {:.12e}", e.epoch, e.mean_loss);
                }
                println!("checkpoint {}", path.display());
            }
            let last = results.last().expect("non-empty curriculum");
            last.model.save(&out)?;
            write_log(&log.unwrap_or_else(|| with_suffix(&out, ".log.csv")), &last.report)?;
            println!("checkpoint {}", out.display());
        }
    }
    Ok(())
}

fn predictor(choice: ModelArg, ckpt: Option<PathBuf>, cfg: &RunConfig) -> CliResult<Box<dyn Predictor>> {
    let h = cfg.model.horizon;
    Ok(match choice {
        ModelArg::Oracle => Box::new(Oracle::new(h, cfg.physics)),
        ModelArg::Cv => Box::new(ConstantVelocity::new(h)),
        ModelArg::Oc | ModelArg::Fc => {
            let path = required(ckpt, &cfg.paths.checkpoint, "checkpoint (--ckpt)")?;
            let model = Model::load(&path)?;
            let want = if choice == ModelArg::Oc { ModelKind::Oc } else { ModelKind::Fc };
            if model.config.kind != want {
                return Err(CliError::validation(format!("{} holds a {:?} model", path.display(), model.config.kind)));
            }
            Box::new(NetPredictor::new(Arc::new(model)))
        }
        ModelArg::Random => return Err(CliError::validation("the random baseline only exists for planning")),
    })
}

fn cmd_eval(cfg: RunConfig, seed: u64, model: ModelArg, ckpt: Option<PathBuf>, data: Option<PathBuf>, out: Option<PathBuf>) -> CliResult {
    let p = predictor(model, ckpt, &cfg)?;
    let h = cfg.eval.horizon.min(p.horizon());
    if h == 0 {
        return Err(CliError::validation("evaluation horizon must be positive"));
    }
    header("eval", &cfg, seed);
    let mut tables: Vec<ErrorTable> = Vec::new();
    match data {
        Some(dir) => {
            let ds = load_dataset(&dir)?;
            let name = ds.manifest.spec.name.clone();
            tables.push(evaluate(p.as_ref(), &ds, &name, h)?);
        }
        None => {
            for (i, name) in cfg.eval.datasets.iter().enumerate() {
                let spec = spec_variant(name)?;
                let ds = generate_dataset(&spec, cfg.eval.n_sequences, child_seed(seed, DOMAIN_EVAL, i as u64), &cfg.physics)?;
                tables.push(evaluate(p.as_ref(), &ds, name, h)?);
            }
        }
    }
    let mut csv = Vec::new();
    for (i, t) in tables.iter().enumerate() {
        t.write_csv(&mut csv, i == 0)?;
    }
    if let Some(path) = out {
        fs::write(&path, &csv).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    }
    let ks: Vec<usize> = cfg.eval.report_ks.iter().copied().filter(|&k| k >= 1 && k <= h).collect();
    for t in &tables {
        println!("dataset {} ({} frames, {} near collisions)", t.dataset, t.frames, t.near_frames);
        print!("{}", format_table(std::slice::from_ref(t), &ks));
    }
    Ok(())
}

fn cmd_imagine(
    mut cfg: RunConfig,
    seed: u64,
    model: ModelArg,
    ckpt: Option<PathBuf>,
    out: Option<PathBuf>,
    variant: Option<String>,
    balls: Option<usize>,
) -> CliResult {
    if let Some(v) = variant {
        cfg.world = spec_variant(&v)?;
    }
    if let Some(b) = balls {
        cfg.world = cfg.world.with_balls(b);
    }
    let out = required(out, &cfg.paths.out, "output directory (--out)")?;
    let mut p = predictor(model, ckpt, &cfg)?;
    header("imagine", &cfg, seed);
    let (state, forces) = sample_world(&cfg.world, child_seed(seed, DOMAIN_IMAGINE, 0))?;
    let frames = FrameConfig { resolution: cfg.imagine.resolution, viewport: None };
    let im = imagine(&state, &forces, p.as_mut(), cfg.imagine.steps, &cfg.physics, Some(&frames))?;
    let dump = dump_frames(&im, &out)?;
    if let Some(w) = &dump.warning {
        eprintln!("warning: {w}");
    }
    fs::write(out.join("imagined.blrd"), im.to_bytes()?).map_err(|e| CliError::io(e.to_string()))?;
    println!("frames {}", dump.count);
    Ok(())
}

fn cmd_plan(cfg: RunConfig, seed: u64, model: ModelArg, ckpt: Option<PathBuf>, out: Option<PathBuf>) -> CliResult {
    let p = if model == ModelArg::Random { None } else { Some(predictor(model, ckpt, &cfg)?) };
    if cfg.trials == 0 {
        return Err(CliError::validation("at least one trial is needed"));
    }
    let mut pcfg = cfg.plan.clone();
    pcfg.cma.seed = seed;
    pcfg.cma.validate()?;
    header("plan", &cfg, seed);
    let trials = push_trials(&cfg.world.clone().with_balls(1), cfg.trials, child_seed(seed, DOMAIN_TRIALS, 0))?;
    let planner = match &p {
        Some(p) => Planner::Model(p.as_ref()),
        None => Planner::Random(&cfg.world),
    };
    let results = run_trials(&trials, planner, &pcfg, &cfg.physics)?;
    let csv = plan_csv(&trials, &results);
    if let Some(path) = out {
        fs::write(&path, &csv).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    }
    for (t, f) in hit_accuracy(&results, &HIT_THRESHOLDS)? {
        println!("hit@{t} {f:.3}");
    }
    Ok(())
}
