use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pdeid::error::{Error, ErrorKind};
use pdeid::experiment::ExperimentConfig;
use pdeid::identification::{dataset_from_measured, identify, prepare_dataset, DataOptions, Dataset};
use pdeid::io::{self, FieldMetadata, SummaryRecord};
use pdeid::library::LibraryName;
use pdeid::preprocess::{add_noise, fluctuation};
use pdeid::scenario::ScenarioName;
use pdeid::transport::measure;

/// Identify the governing equation of 1-D solute transport from
/// concentration data.
#[derive(Parser)]
#[command(name = "pdeid", version)]
struct Cli {
    /// Worker threads for the restart ensemble [default: all cores]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its measurement fields
    Simulate(ExperimentArgs),
    /// Run multi-restart identification and write runs, traces and a summary
    Identify(IdentifyArgs),
    /// Tabulate one or more summary.json files
    Report(ReportArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<ScenarioName>,
    #[arg(long)]
    library: Option<LibraryArg>,
    /// Relative noise level δ
    #[arg(long, allow_negative_numbers = true)]
    noise: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Master seed (also the noise seed unless the config sets one)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IdentifyArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Directory written by `simulate`; its fields and noise settings are used
    /// instead of simulating
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    summaries: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the table here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LibraryArg {
    Basic,
    Extended,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

fn parse_scenario(s: &str) -> Result<ScenarioName, String> {
    ScenarioName::parse(s).ok_or_else(|| {
        let names: Vec<_> = ScenarioName::PRESETS.iter().map(|n| n.as_str()).chain(["custom"]).collect();
        format!("unknown scenario `{s}` (expected one of {})", names.join(", "))
    })
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Io => 4,
    }
}

fn resolve(args: &ExperimentArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(l) = args.library {
        cfg.library = match l {
            LibraryArg::Basic => LibraryName::Basic,
            LibraryArg::Extended => LibraryName::Extended,
        };
    }
    if let Some(d) = args.noise {
        cfg.noise_delta = d;
    }
    if let Some(n) = args.restarts {
        cfg.n_restarts = n;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cfg: &ExperimentConfig) -> Result<(), Error> {
    let scenario = cfg.scenario_config()?;
    let clean = measure(&scenario)?;
    let dir = &cfg.output_dir;
    io::create_dir(dir)?;
    io::write_field_csv(&dir.join(io::CLEAN_FIELD_FILE), &clean)?;
    let noise = cfg.noise();
    let noisy_file = if noise.delta > 0.0 {
        let noisy = add_noise(&clean, noise);
        io::write_field_csv(&dir.join(io::NOISY_FIELD_FILE), &noisy)?;
        Some(io::NOISY_FIELD_FILE.to_string())
    } else {
        None
    };
    let meta = FieldMetadata {
        scenario: cfg.scenario.as_str().into(),
        scenario_config: scenario,
        noise,
        nx: clean.nx,
        nt: clean.nt,
        x0: clean.x0,
        dx: clean.dx,
        t0: clean.t0,
        dt: clean.dt,
        valid_count: clean.valid_count(),
        clean_fluctuation: fluctuation(&clean),
        clean_file: io::CLEAN_FIELD_FILE.into(),
        noisy_file,
    };
    io::write_json(&dir.join(io::METADATA_FILE), &meta)?;
    println!(
        "{}: {} x {} grid, {} entries above the floor, written to {}",
        meta.scenario,
        meta.nx,
        meta.nt,
        meta.valid_count,
        dir.display()
    );
    Ok(())
}

fn load_dataset(dir: &Path, cfg: &ExperimentConfig) -> Result<(String, DataOptions, Dataset), Error> {
    let meta: FieldMetadata = io::read_json(&dir.join(io::METADATA_FILE))?;
    let floor = meta.scenario_config.conc_floor;
    let file = meta.noisy_file.as_deref().unwrap_or(&meta.clean_file);
    let mut field = io::read_field_csv(&dir.join(file), floor)?;
    meta.restore_grid(&mut field)?;
    let opts = DataOptions { noise: meta.noise, ..cfg.data_options() };
    let reference = (meta.noise.delta > 0.0).then_some(meta.clean_fluctuation);
    let ds = dataset_from_measured(&field, &opts, reference)?;
    Ok((meta.scenario, opts, ds))
}

fn run_identify(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<(), Error> {
    let (scenario, opts, ds) = match data {
        Some(dir) => load_dataset(dir, cfg)?,
        None => {
            let opts = cfg.data_options();
            (cfg.scenario.as_str().to_string(), opts, prepare_dataset(&cfg.scenario_config()?, &opts)?)
        }
    };
    let library = cfg.library_spec()?;
    let outcome = identify(&ds.split, &library, &cfg.identification())?;
    let record = SummaryRecord::new(
        &scenario,
        cfg.library,
        opts.noise,
        cfg.master_seed,
        cfg.n_restarts,
        ds.smoothing_passes,
        &outcome,
    );
    let dir = &cfg.output_dir;
    io::write_identification(dir, &record, &outcome)?;
    io::write_json(&dir.join("config.json"), cfg)?;
    let summary = outcome.final_summary();
    println!("selected terms: {}", record.selected_terms.join(", "));
    println!("{}", record.learned_equation);
    for p in &summary.params {
        println!("{} = {:.4} ± {:.4}", p.name, p.mean, p.std);
    }
    println!(
        "retained {} of {} runs ({} screened out, {} failed); results in {}",
        summary.retained_count,
        cfg.n_restarts,
        summary.screened_out_ids.len(),
        summary.failed_ids.len(),
        dir.display()
    );
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), Error> {
    let records: Vec<SummaryRecord> = args.summaries.iter().map(|p| io::read_summary(p)).collect::<Result<_, _>>()?;
    let table = io::build_report(&records);
    let text = match args.format {
        Format::Text => table.to_text(),
        Format::Csv => table.to_csv(),
    };
    match &args.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate(args) => simulate(&resolve(&args)?),
        Command::Identify(args) => {
            if args.data.is_some() && args.experiment.noise.is_some() {
                return Err(Error::Config(
                    "--noise cannot be combined with --data; the data directory fixes the noise".into(),
                ));
            }
            run_identify(&resolve(&args.experiment)?, args.data.as_deref())
        }
        Command::Report(args) => report(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
