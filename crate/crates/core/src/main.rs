use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use varsel::error::ErrorKind;
use varsel::io::Normalization;
use varsel::pipeline::{run_pipeline, RunConfig, SearchMode, Stage, OUTPUT_DIR_ENV};
use varsel::ranking::RankingMethod;
use varsel::selection::Criterion;
use varsel::validation::R2Reference;
use varsel::Error;

/// Variable selection for multiple linear regression.
#[derive(Parser)]
#[command(name = "varsel", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank all features with the selected methods and emit error curves.
    Rank {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_value = "RM1,RM2,RM3,RM4,RM5,PV")]
        methods: Vec<RankingMethod>,
        #[arg(long, default_value_t = 0.05)]
        pvalue_alpha: f64,
    },
    /// Best feature sequence of each requested size.
    Search {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(long, short = 'm', value_delimiter = ',', required = true)]
        m: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 100)]
        max_sweeps: usize,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
        #[arg(long, default_value_t = 2_000_000)]
        exhaustive_budget: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Gibbs inclusion probabilities for each requested size.
    Gibbs {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(long, short = 'm', value_delimiter = ',', required = true)]
        m: Vec<usize>,
        #[arg(long, default_value_t = 100.0)]
        eta: f64,
        #[arg(long, default_value_t = 2000)]
        sweeps: usize,
        /// Defaults to 20% of the sweeps.
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        seed: u64,
    },
    /// Number of features chosen by information criteria and p-value stopping.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_value = "RM1,RM2,PV")]
        methods: Vec<RankingMethod>,
        #[arg(long, value_delimiter = ',', default_value = "AIC,BIC,HQIC,PVALUE")]
        criteria: Vec<Criterion>,
        #[arg(long, default_value_t = 0.05)]
        pvalue_alpha: f64,
        /// Added to the feature count in the penalty term.
        #[arg(long, default_value_t = 0)]
        penalty_offset: usize,
    },
    /// Monte Carlo cross-validation of a feature subset.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        /// 1-based feature indices.
        #[arg(long, value_delimiter = ',', required = true)]
        subset: Vec<usize>,
        #[arg(long, default_value_t = 20_000)]
        runs: usize,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, value_enum, default_value = "test-mean")]
        r2_reference: R2Arg,
        #[arg(long)]
        seed: u64,
    },
    /// Feature pairs with |Pearson correlation| above a threshold.
    Corr {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.95)]
        threshold: f64,
    },
    /// Full pipeline: every stage, one report.
    Report {
        /// TOML run configuration; command-line data flags are then ignored.
        #[arg(long, conflicts_with_all = ["dataset", "target"])]
        config: Option<PathBuf>,
        #[arg(long, short = 'd', required_unless_present = "config")]
        dataset: Option<PathBuf>,
        #[arg(long, short = 't', required_unless_present = "config")]
        target: Option<String>,
        #[arg(long, default_value = ",")]
        delimiter: char,
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
        #[arg(long, value_parser = parse_normalization, default_value = "none")]
        normalize: Normalization,
        #[arg(long, short = 'o', env = OUTPUT_DIR_ENV)]
        output_dir: Option<PathBuf>,
        #[arg(long, short = 'm', value_delimiter = ',')]
        m: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        gibbs_m: Option<Vec<usize>>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        cv_runs: Option<usize>,
        /// 1-based subset for cross-validation and the named model.
        #[arg(long, value_delimiter = ',')]
        model_subset: Option<Vec<usize>>,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Headered delimited table.
    #[arg(long, short = 'd')]
    dataset: PathBuf,
    /// Name of the target column.
    #[arg(long, short = 't')]
    target: String,
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Columns to ignore.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
    #[arg(long, value_parser = parse_normalization, default_value = "none")]
    normalize: Normalization,
    #[arg(long, short = 'o', env = OUTPUT_DIR_ENV, default_value = "varsel-out")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct CostArgs {
    /// Norm exponent p of the cost ‖e‖_p^α.
    #[arg(long, default_value_t = 1.0)]
    p_norm: f64,
    /// Power α of the cost ‖e‖_p^α.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Auto,
    Exhaustive,
    Restarts,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum R2Arg {
    TestMean,
    TrainMean,
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn base_config(data: DataArgs, seed: u64, stages: Vec<Stage>) -> RunConfig {
    let mut c = RunConfig::new(data.dataset, data.target, seed);
    c.output_dir = data.output_dir;
    c.delimiter = data.delimiter;
    c.exclude_columns = data.exclude;
    c.normalize = data.normalize;
    c.stages = stages;
    c
}

fn build_config(command: Command) -> Result<RunConfig, Error> {
    let config = match command {
        Command::Rank {
            data,
            methods,
            pvalue_alpha,
        } => {
            let mut c = base_config(data, 0, vec![Stage::Rank]);
            c.methods = methods;
            c.pvalue_alpha = pvalue_alpha;
            c
        }
        Command::Search {
            data,
            cost,
            m,
            runs,
            max_sweeps,
            mode,
            exhaustive_budget,
            seed,
        } => {
            let mut c = base_config(data, seed, vec![Stage::Search]);
            c.m_values = m;
            c.runs = runs;
            c.max_sweeps = max_sweeps;
            c.search_mode = match mode {
                ModeArg::Auto => SearchMode::Auto,
                ModeArg::Exhaustive => SearchMode::Exhaustive,
                ModeArg::Restarts => SearchMode::Restarts,
            };
            c.exhaustive_budget = exhaustive_budget;
            c.p_norm = cost.p_norm;
            c.alpha = cost.alpha;
            c
        }
        Command::Gibbs {
            data,
            cost,
            m,
            eta,
            sweeps,
            burn_in,
            seed,
        } => {
            let mut c = base_config(data, seed, vec![Stage::Gibbs]);
            c.gibbs_m_values = m;
            c.eta = eta;
            c.gibbs_sweeps = sweeps;
            c.burn_in = burn_in;
            c.p_norm = cost.p_norm;
            c.alpha = cost.alpha;
            c
        }
        Command::Select {
            data,
            methods,
            criteria,
            pvalue_alpha,
            penalty_offset,
        } => {
            let mut c = base_config(data, 0, vec![Stage::Select]);
            c.methods = methods;
            c.criteria = criteria;
            c.pvalue_alpha = pvalue_alpha;
            c.penalty_offset = penalty_offset;
            c
        }
        Command::Cv {
            data,
            subset,
            runs,
            train_fraction,
            r2_reference,
            seed,
        } => {
            let mut c = base_config(data, seed, vec![Stage::Cv, Stage::Model]);
            c.model_subset = Some(subset);
            c.cv_runs = runs;
            c.train_fraction = train_fraction;
            c.r2_reference = match r2_reference {
                R2Arg::TestMean => R2Reference::TestMean,
                R2Arg::TrainMean => R2Reference::TrainMean,
            };
            c
        }
        Command::Corr { data, threshold } => {
            let mut c = base_config(data, 0, vec![Stage::Corr]);
            c.corr_threshold = threshold;
            c
        }
        Command::Report {
            config,
            dataset,
            target,
            delimiter,
            exclude,
            normalize,
            output_dir,
            m,
            gibbs_m,
            runs,
            sweeps,
            eta,
            cv_runs,
            model_subset,
            seed,
        } => {
            let mut c = match config {
                Some(path) => RunConfig::from_toml(&std::fs::read_to_string(path)?)?,
                None => {
                    let mut c = RunConfig::new(dataset.unwrap_or_default(), target.unwrap_or_default(), seed);
                    c.delimiter = delimiter;
                    c.exclude_columns = exclude;
                    c.normalize = normalize;
                    c
                }
            };
            c.seed = seed;
            if let Some(dir) = output_dir {
                c.output_dir = dir;
            }
            if let Some(v) = m {
                c.m_values = v;
            }
            if let Some(v) = gibbs_m {
                c.gibbs_m_values = v;
            }
            if let Some(v) = runs {
                c.runs = v;
            }
            if let Some(v) = sweeps {
                c.gibbs_sweeps = v;
            }
            if let Some(v) = eta {
                c.eta = v;
            }
            if let Some(v) = cv_runs {
                c.cv_runs = v;
            }
            if model_subset.is_some() {
                c.model_subset = model_subset;
            }
            c
        }
    };
    Ok(config)
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Parse => 3,
        ErrorKind::Validation => 4,
        ErrorKind::Computation => 5,
        ErrorKind::Io => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    let result = build_config(cli.command).and_then(|c| {
        let report = run_pipeline(&c)?;
        Ok((c, report))
    });
    match result {
        Ok((config, report)) => {
            for n in &report.notices {
                eprintln!("notice: {n}");
            }
            println!("{}", config.output_dir.join("report.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
