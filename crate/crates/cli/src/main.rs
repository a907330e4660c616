use std::error::Error;
use std::fmt::Write as _;
use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use smnist_core::combinatorics::verify_dataset;
use smnist_core::dataset::{load_dataset, load_samples, write_dataset};
use smnist_core::generator::{catalog, generate_pair, DatasetSpec, Histogram, Series, Stamping, Variant};
use smnist_core::sampler::DistributionKind;
use smnist_core::session::eventlog::LogWriter;
use smnist_core::session::simulate::{simulate_many, SimulatedPlayer};
use smnist_core::session::{aggregate, aggregate_csv, AggregateRow, SessionConfig};
use smnist_core::trainer::{
    self, evaluate, export_weight_images, load_checkpoint, save_checkpoint, Budget, Metrics, ModelKind, TrainConfig,
};
use smnist_service::{aggregate_logs, ServiceConfig, SESSIONS_DIR};

type CliResult = Result<(), Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "smnist", version, about = "Numerosity datasets, classifiers and subitizing sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a train/test pair into a directory
    Gen(GenArgs),
    /// Check a generated directory's structure and label supply
    Validate {
        /// Directory written by `gen`
        dir: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Train a classifier and report held-out metrics
    Train(TrainArgs),
    /// Evaluate a checkpoint on a directory's test split
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Feed raw 0..255 pixels instead of [0, 1]
        #[arg(long)]
        no_scale: bool,
        #[arg(long)]
        csv: bool,
    },
    /// Run the HTTP service
    Serve(ServeArgs),
    /// Play synthetic sessions and persist their logs
    Simulate(SimulateArgs),
    /// Aggregate persisted session logs per level label
    Aggregate {
        #[arg(long, env = "SMNIST_DATA_DIR", default_value = "smnist-data")]
        data_dir: PathBuf,
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SeriesArg {
    M1,
    M2,
    A1,
    A2,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Naive,
    NoCentering,
    Disjunct,
    Hard,
}

#[derive(Clone, Copy, ValueEnum)]
enum StampArg {
    #[value(name = "3x3")]
    Dot3,
    #[value(name = "1px")]
    Dot1,
    Glyphs,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Uniform,
    Pow102x,
}

#[derive(Args)]
struct GenArgs {
    /// Start from a catalog entry (e.g. s2-hard-102x); other flags override it
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_enum, required_unless_present = "preset", conflicts_with = "preset")]
    series: Option<SeriesArg>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    stamp: Option<StampArg>,
    /// Largest object count
    #[arg(long)]
    m: Option<u8>,
    #[arg(long, value_enum)]
    dist: Option<DistArg>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Positions reserved for the test split (hard variant)
    #[arg(long)]
    test_pixels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Gzip the IDX files
    #[arg(long)]
    gzip: bool,
    #[arg(long)]
    csv: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Softmax,
    Mlp,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "softmax")]
    model: ModelArg,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, conflicts_with = "epochs")]
    steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_scale: bool,
    /// Write the trained parameters here
    #[arg(long)]
    save: Option<PathBuf>,
    /// Write one PGM weight image per class here (softmax only)
    #[arg(long)]
    weights_dir: Option<PathBuf>,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "SMNIST_HOST", default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, env = "SMNIST_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "SMNIST_DATA_DIR", default_value = "smnist-data")]
    data_dir: PathBuf,
    #[arg(long, env = "SMNIST_ANSWER_WINDOW_MS", default_value_t = smnist_core::session::DEFAULT_ANSWER_WINDOW_MS)]
    answer_window_ms: u64,
    /// Built web client to serve outside /api
    #[arg(long, env = "SMNIST_STATIC_DIR")]
    static_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    players: usize,
    /// Largest count read exactly; `inf` for an ideal player
    #[arg(long, default_value = "inf")]
    capacity: String,
    #[arg(long, default_value_t = 500)]
    reaction_ms: u64,
    #[arg(long, default_value_t = smnist_core::session::DEFAULT_ANSWER_WINDOW_MS)]
    answer_window_ms: u64,
    #[arg(long, default_value_t = smnist_core::session::simulate::DEFAULT_MAX_TRIALS)]
    max_trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Logs go to <data-dir>/sessions
    #[arg(long, env = "SMNIST_DATA_DIR", default_value = "smnist-data")]
    data_dir: PathBuf,
    #[arg(long)]
    csv: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Gen(args) => gen(args),
        Command::Validate { dir, csv } => validate(&dir, csv),
        Command::Train(args) => train(args),
        Command::Eval {
            data,
            model,
            no_scale,
            csv,
        } => eval(&data, &model, !no_scale, csv),
        Command::Serve(args) => serve(args),
        Command::Simulate(args) => simulate(args),
        Command::Aggregate { data_dir, csv } => {
            let rows = aggregate_logs(&data_dir.join(SESSIONS_DIR))?;
            print_aggregate(&rows, csv);
            Ok(())
        }
    }
}

fn build_spec(args: &GenArgs) -> Result<DatasetSpec, Box<dyn Error>> {
    let mut spec = match (&args.preset, args.series) {
        (Some(name), _) => catalog(args.seed)
            .into_iter()
            .find(|e| e.name == name)
            .map(|e| e.spec)
            .ok_or_else(|| {
                let names: Vec<_> = catalog(0).iter().map(|e| e.name).collect();
                format!("unknown preset {name:?}; known: {}", names.join(", "))
            })?,
        (None, Some(series)) => {
            let series = match series {
                SeriesArg::M1 => Series::M1,
                SeriesArg::M2 => Series::M2,
                SeriesArg::A1 => Series::A1,
                SeriesArg::A2 => Series::A2,
            };
            DatasetSpec::new(series, Variant::Naive)
        }
        (None, None) => unreachable!("clap requires a series without a preset"),
    };
    if let Some(v) = args.variant {
        let variant = match v {
            VariantArg::Naive => Variant::Naive,
            VariantArg::NoCentering => Variant::NoCentering,
            VariantArg::Disjunct => Variant::Disjunct,
            VariantArg::Hard => Variant::Hard,
        };
        let fresh = DatasetSpec::new(spec.series, variant);
        spec.variant = variant;
        spec.test_side = fresh.test_side;
    }
    if let Some(s) = args.stamp {
        spec.stamp = match s {
            StampArg::Dot3 => Stamping::Dot3,
            StampArg::Dot1 => Stamping::Dot1,
            StampArg::Glyphs => Stamping::Glyphs,
        };
    }
    if let Some(m) = args.m {
        spec.m = m;
    }
    if let Some(d) = args.dist {
        spec.distribution = match d {
            DistArg::Uniform => DistributionKind::Uniform,
            DistArg::Pow102x => DistributionKind::Pow102x,
        };
    }
    if let Some(n) = args.train {
        spec.train_count = n;
    }
    if let Some(n) = args.test {
        spec.test_count = n;
    }
    if let Some(t) = args.test_pixels {
        spec.test_side = Some(t);
    }
    spec.seed = args.seed;
    spec.validate()?;
    Ok(spec)
}

fn histogram_csv(out: &mut String, split: &str, h: &Histogram) {
    for (label, count) in h.0.iter().enumerate() {
        writeln!(out, "{split},{label},{count}").unwrap();
    }
}

fn gen(args: GenArgs) -> CliResult {
    let spec = build_spec(&args)?;
    let pair = generate_pair(&spec)?;
    let manifest = write_dataset(&args.out, &pair, args.gzip)?;
    if args.csv {
        let mut out = String::from("split,label,count\n");
        histogram_csv(&mut out, "train", &manifest.train_histogram);
        histogram_csv(&mut out, "test", &manifest.test_histogram);
        print!("{out}");
        return Ok(());
    }
    println!(
        "wrote {} train / {} test images ({}x{}) to {}",
        pair.train.len(),
        pair.test.len(),
        manifest.width,
        manifest.height,
        args.out.display()
    );
    println!("train: {}", manifest.train_histogram);
    println!("test:  {}", manifest.test_histogram);
    for e in &manifest.exhaustion {
        println!(
            "label {} of the {:?} pool exhausted ({})",
            e.label,
            e.pool,
            if e.complete { "every combination used" } else { "gave up sampling" }
        );
    }
    print!("{}", verify_dataset(&pair).table);
    Ok(())
}

fn validate(dir: &Path, csv: bool) -> CliResult {
    let pair = load_dataset(dir)?;
    let report = verify_dataset(&pair);
    if csv {
        println!("label,theoretical_train,theoretical_test,observed_train,observed_test");
        for r in &report.table.rows {
            let show = |v: &Option<_>| v.as_ref().map(ToString::to_string).unwrap_or_default();
            println!(
                "{},{},{},{},{}",
                r.label,
                show(&r.theoretical_train),
                show(&r.theoretical_test),
                r.observed_train,
                r.observed_test
            );
        }
    } else {
        print!("{report}");
    }
    if report.passed() {
        Ok(())
    } else {
        Err(format!("{} violation(s)", report.violations.len()).into())
    }
}

fn print_metrics(m: &Metrics, csv: bool) {
    if csv {
        println!("truth,{}", (0..10).map(|c| c.to_string()).collect::<Vec<_>>().join(","));
        for (t, row) in m.confusion.iter().enumerate() {
            println!("{t},{}", row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        }
        println!("accuracy,{}", m.accuracy);
    } else {
        print!("{m}");
    }
}

fn train(args: TrainArgs) -> CliResult {
    let kind = match args.model {
        ModelArg::Softmax => ModelKind::Softmax,
        ModelArg::Mlp => ModelKind::Mlp,
    };
    let mut config = TrainConfig::for_kind(kind).with_seed(args.seed);
    if let Some(lr) = args.lr {
        config.learning_rate = lr;
    }
    if let Some(b) = args.batch {
        config.batch_size = b;
    }
    if let Some(s) = args.steps {
        config.budget = Budget::Steps(s);
    }
    if let Some(e) = args.epochs {
        config.budget = Budget::Epochs(e);
    }
    if let Some(h) = args.hidden {
        config.hidden = h;
    }
    config.scale = !args.no_scale;
    if args.weights_dir.is_some() && kind != ModelKind::Softmax {
        return Err("weight images need --model softmax".into());
    }
    let (train_set, test_set) = load_samples(&args.data)?;
    let out = trainer::train(&train_set, &test_set, &config)?;
    if !args.csv {
        let losses: Vec<String> = out.epoch_losses.iter().map(|l| format!("{l:.6}")).collect();
        println!(
            "{} trained on {} images; epoch losses {}",
            kind,
            train_set.len(),
            losses.join(" ")
        );
    }
    print_metrics(&out.metrics, args.csv);
    if let Some(path) = &args.save {
        save_checkpoint(&out.params, path)?;
    }
    if let Some(dir) = &args.weights_dir {
        fs::create_dir_all(dir)?;
        for (class, img) in export_weight_images(&out.params)?.iter().enumerate() {
            fs::write(dir.join(format!("weights-{class}.pgm")), img.to_pgm())?;
        }
    }
    Ok(())
}

fn eval(data: &Path, model: &Path, scale: bool, csv: bool) -> CliResult {
    let params = load_checkpoint(model)?;
    let (_, test_set) = load_samples(data)?;
    print_metrics(&evaluate(&params, &test_set, scale)?, csv);
    Ok(())
}

fn serve(args: ServeArgs) -> CliResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let config = ServiceConfig {
        data_dir: args.data_dir,
        answer_window_ms: args.answer_window_ms,
        static_dir: args.static_dir,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(smnist_service::serve(config, SocketAddr::new(args.host, args.port)))?;
    Ok(())
}

fn parse_capacity(s: &str) -> Result<Option<u8>, Box<dyn Error>> {
    match s {
        "inf" | "infinite" | "none" => Ok(None),
        n => Ok(Some(n.parse().map_err(|_| format!("capacity {n:?} is neither a count nor `inf`"))?)),
    }
}

fn simulate(args: SimulateArgs) -> CliResult {
    let player = SimulatedPlayer {
        capacity: parse_capacity(&args.capacity)?,
        reaction_ms: args.reaction_ms,
    };
    let config = SessionConfig {
        answer_window_ms: args.answer_window_ms,
    };
    let sims = simulate_many(args.players, &player, config, args.seed, args.max_trials)?;
    let dir = args.data_dir.join(SESSIONS_DIR);
    fs::create_dir_all(&dir)?;
    for s in &sims {
        let path = dir.join(format!("{}.jsonl", s.session_id));
        if path.exists() {
            fs::remove_file(&path)?;
        }
        LogWriter::create(&path)?.append_all(&s.events)?;
    }
    let rows = aggregate(sims.iter().map(|s| s.state.records.as_slice()));
    if !args.csv {
        let completed = sims
            .iter()
            .filter(|s| s.state.status == smnist_core::session::Status::Completed)
            .count();
        println!(
            "{} sessions ({} completed) logged to {}",
            sims.len(),
            completed,
            dir.display()
        );
    }
    print_aggregate(&rows, args.csv);
    Ok(())
}

fn print_aggregate(rows: &[AggregateRow], csv: bool) {
    if csv {
        print!("{}", aggregate_csv(rows));
        return;
    }
    if rows.is_empty() {
        println!("no level changes recorded");
        return;
    }
    println!("{:>5} {:>9} {:>12} {:>11} {:>6}", "label", "measured", "streak mean", "theoretical", "n");
    for r in rows {
        println!(
            "{:>5} {:>9.4} {:>12.4} {:>11.4} {:>6}",
            r.level_label, r.measured, r.measured_exact, r.theoretical, r.n
        );
    }
}
