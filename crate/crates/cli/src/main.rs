//! `cbm` — few-shot classification over embedding vectors.
//!
//! Subcommands: `gen-synthetic` (seeded dataset pairs), `base-matrix`
//! (per-class mean cache), `eval` (one configuration, JSON/CSV report),
//! `sweep` (configuration grid on shared episodes, ranked CSV + best JSON),
//! and `report` (accuracy-vs-alpha curves from a sweep CSV).
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! failure.

mod grid;
mod manifest;
mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use cbm_core::{
    build_base_matrix, evaluate, generate_synthetic, load_dataset, save_dataset, sweep, sweep_csv,
    BaseMatrix, CbmConfig, CbmError, ClassGroup, DistributionSimilarity, EmbeddingDataset,
    EmbeddingVector, LleConfig, Method, ProtocolConfig, Report, Role, Similarity, SweepGrid,
    SweepMethodKind, SyntheticSpec, DEFAULT_LLE_REG,
};
use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "cbm",
    version,
    about = "Few-shot classification over embedding vectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic base/novel dataset pair
    GenSynthetic(GenSyntheticArgs),
    /// Compute the per-class mean matrix of a base dataset and cache it
    BaseMatrix(BaseMatrixArgs),
    /// Evaluate one method over seeded episodes
    Eval(EvalArgs),
    /// Evaluate a configuration grid on shared episodes
    Sweep(SweepArgs),
    /// Render a sweep CSV as accuracy-vs-alpha curve data
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodKind {
    Inductive,
    Cbm,
    CbmLle,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaPrimeArg {
    Cos,
    Euclid,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaArg {
    Cos,
    Euclid,
    Kl,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Csv,
    Json,
}

#[derive(Args)]
struct MethodArgs {
    /// Classification method
    #[arg(long, value_enum, default_value_t = MethodKind::Cbm)]
    method: MethodKind,
    /// Kernel producing per-base-class similarities
    #[arg(long = "sigma-prime", value_enum, default_value_t = SigmaPrimeArg::Cos)]
    sigma_prime: SigmaPrimeArg,
    /// Softmax-normalize similarity distributions (`--softmax false` to disable)
    #[arg(
        long,
        default_value_t = true,
        num_args = 0..=1,
        default_missing_value = "true",
        action = clap::ArgAction::Set
    )]
    softmax: bool,
    /// Kernel comparing two similarity distributions
    #[arg(long, value_enum, default_value_t = SigmaArg::Cos)]
    sigma: SigmaArg,
    /// Weight of the inductive score in the combination
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Neighbor count for the embedding
    #[arg(long = "lle-k", default_value_t = 10)]
    lle_k: usize,
    /// Reduced dimensionality (must be below the base class count)
    #[arg(long = "lle-dim", default_value_t = 63)]
    lle_dim: usize,
    /// L2-normalize vectors before the embedding
    #[arg(
        long = "l2-normalize",
        default_value_t = false,
        num_args = 0..=1,
        default_missing_value = "true",
        action = clap::ArgAction::Set
    )]
    l2_normalize: bool,
    /// Regularization for the local reconstruction solve
    #[arg(long = "lle-reg", default_value_t = DEFAULT_LLE_REG)]
    lle_reg: f64,
}

#[derive(Args)]
struct ProtocolArgs {
    #[arg(long = "n-way", default_value_t = 5)]
    n_way: usize,
    #[arg(long = "k-shot", default_value_t = 1)]
    k_shot: usize,
    /// Queries per class
    #[arg(long = "n-query", default_value_t = 15)]
    n_query: usize,
    #[arg(long = "n-tasks", default_value_t = 2000)]
    n_tasks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenSyntheticArgs {
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long = "base-classes", default_value_t = 16)]
    base_classes: usize,
    #[arg(long = "novel-classes", default_value_t = 20)]
    novel_classes: usize,
    #[arg(long = "base-samples", default_value_t = 30)]
    base_samples: usize,
    #[arg(long = "novel-samples", default_value_t = 30)]
    novel_samples: usize,
    /// Cluster centers are uniform in [-scale, scale]^dim
    #[arg(long = "center-scale", default_value_t = 1.0)]
    center_scale: f64,
    /// Per-component sample noise for both roles
    #[arg(long = "noise-scale", default_value_t = 0.1)]
    noise_scale: f64,
    /// Override the base-class noise only
    #[arg(long = "base-noise-scale")]
    base_noise_scale: Option<f64>,
    /// Override the novel-class noise only
    #[arg(long = "novel-noise-scale")]
    novel_noise_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "out-base")]
    out_base: PathBuf,
    #[arg(long = "out-novel")]
    out_novel: PathBuf,
}

#[derive(Args)]
struct BaseMatrixArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    novel: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Write the report here (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Worker thread cap (falls back to CBM_DEFAULT_THREADS)
    #[arg(long)]
    threads: Option<usize>,
    /// Include the per-task accuracy list in the report
    #[arg(long = "per-task")]
    per_task: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    novel: PathBuf,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Alpha values: `start:end:step` or a comma list
    #[arg(long = "alpha-grid", default_value = "0:1:0.05")]
    alpha_grid: String,
    /// Sweep all valid (sigma-prime, softmax, sigma) combinations
    #[arg(long = "all-variants")]
    all_variants: bool,
    /// Neighbor counts to sweep (defaults to --lle-k)
    #[arg(long = "lle-k-grid")]
    lle_k_grid: Option<String>,
    /// Reduced dimensions to sweep (defaults to 2..min(64, classes-1))
    #[arg(long = "lle-dim-grid")]
    lle_dim_grid: Option<String>,
    /// Sweep both normalization settings
    #[arg(long = "sweep-l2")]
    sweep_l2: bool,
    /// Ranked CSV destination; the best report lands beside it
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// A sweep CSV
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    format: ReportFormat,
    /// Write here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Data(String),
    Core(CbmError),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) => write!(f, "{msg}"),
            CliError::Core(err) => write!(f, "{err}"),
            CliError::Io(err) => write!(f, "{err}"),
        }
    }
}

impl From<CbmError> for CliError {
    fn from(err: CbmError) -> Self {
        CliError::Core(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io(_) => 2,
            CliError::Core(err) => match err {
                CbmError::InvalidSpec(_)
                | CbmError::InvalidConfig(_)
                | CbmError::AlphaOutOfRange(_)
                | CbmError::KTooLarge { .. } => 1,
                CbmError::ZeroVector
                | CbmError::SingularSystem
                | CbmError::EigenFailure
                | CbmError::NotNormalized(_) => 3,
                _ => 2,
            },
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            err.print().ok();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenSynthetic(args) => cmd_gen_synthetic(args),
        Command::BaseMatrix(args) => cmd_base_matrix(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let env_threads = std::env::var("CBM_DEFAULT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(env_threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("could not configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn sigma_prime_of(arg: SigmaPrimeArg) -> Similarity {
    match arg {
        SigmaPrimeArg::Cos => Similarity::Cosine,
        SigmaPrimeArg::Euclid => Similarity::NegEuclidean,
    }
}

fn sigma_of(arg: SigmaArg) -> DistributionSimilarity {
    match arg {
        SigmaArg::Cos => DistributionSimilarity::Cosine,
        SigmaArg::Euclid => DistributionSimilarity::NegEuclidean,
        SigmaArg::Kl => DistributionSimilarity::NegKl,
    }
}

fn cbm_config(args: &MethodArgs) -> Result<CbmConfig, CliError> {
    Ok(CbmConfig::new(
        sigma_prime_of(args.sigma_prime),
        args.softmax,
        sigma_of(args.sigma),
        args.alpha,
    )?)
}

fn lle_config(args: &MethodArgs) -> LleConfig {
    LleConfig {
        k: args.lle_k,
        c_prime: args.lle_dim,
        l2_normalize: args.l2_normalize,
        reg: args.lle_reg,
    }
}

/// Flag combinations are validated here, before any file is touched.
fn build_method(args: &MethodArgs) -> Result<Method, CliError> {
    match args.method {
        MethodKind::Inductive => Ok(Method::Inductive),
        MethodKind::Cbm => Ok(Method::Cbm(cbm_config(args)?)),
        MethodKind::CbmLle => Ok(Method::CbmLle(lle_config(args), cbm_config(args)?)),
    }
}

fn protocol_of(args: &ProtocolArgs) -> ProtocolConfig {
    ProtocolConfig {
        n_way: args.n_way,
        k_shot: args.k_shot,
        n_query: args.n_query,
        n_tasks: args.n_tasks,
        seed: args.seed,
    }
}

fn load_base_matrix(path: &Path) -> Result<BaseMatrix, CliError> {
    let dataset = load_dataset(path)?;
    Ok(build_base_matrix(&dataset)?)
}

fn cmd_gen_synthetic(args: GenSyntheticArgs) -> Result<(), CliError> {
    let spec = SyntheticSpec {
        dim: args.dim,
        base_classes: args.base_classes,
        novel_classes: args.novel_classes,
        samples_per_base_class: args.base_samples,
        samples_per_novel_class: args.novel_samples,
        center_scale: args.center_scale,
        base_noise_scale: args.base_noise_scale.unwrap_or(args.noise_scale),
        novel_noise_scale: args.novel_noise_scale.unwrap_or(args.noise_scale),
    };
    let (base, novel) = generate_synthetic(&spec, args.seed)?;
    save_dataset(&base, &args.out_base)?;
    save_dataset(&novel, &args.out_novel)?;

    let mut manifest = RunManifest::new("gen-synthetic", Some(args.seed));
    manifest.add_output(&args.out_base);
    manifest.add_output(&args.out_novel);
    manifest.write_beside(&args.out_base)?;
    eprintln!(
        "wrote {} ({} classes) and {} ({} classes)",
        args.out_base.display(),
        base.n_classes(),
        args.out_novel.display(),
        novel.n_classes()
    );
    Ok(())
}

fn cmd_base_matrix(args: BaseMatrixArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.base)?;
    let matrix = build_base_matrix(&dataset)?;
    // cache as a CBME file with one mean vector per class
    let classes: Vec<ClassGroup> = matrix
        .class_ids()
        .iter()
        .enumerate()
        .map(|(col, &class_id)| {
            let label = dataset
                .classes()
                .iter()
                .find(|c| c.class_id == class_id)
                .and_then(|c| c.label.clone());
            Ok(ClassGroup::new(
                class_id,
                label,
                vec![EmbeddingVector::new(matrix.column(col).to_vec())?],
            ))
        })
        .collect::<Result<_, CbmError>>()?;
    let means = EmbeddingDataset::new(matrix.dim(), Role::Base, classes)?;
    save_dataset(&means, &args.out)?;

    let mut manifest = RunManifest::new("base-matrix", None);
    manifest.add_input(&args.base)?;
    manifest.add_output(&args.out);
    manifest.write_beside(&args.out)?;
    eprintln!(
        "wrote {} ({} classes, dim {})",
        args.out.display(),
        matrix.n_classes(),
        matrix.dim()
    );
    Ok(())
}

fn render_report(report: &Report, method: &Method, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
        OutputFormat::Csv => sweep_csv(&[(method.clone(), report.clone())]),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let method = build_method(&args.method)?;
    configure_threads(args.threads)?;
    let base = load_base_matrix(&args.base)?;
    let novel = load_dataset(&args.novel)?;
    let cfg = protocol_of(&args.protocol);

    let mut report = evaluate(&novel, &base, &method, &cfg)?;
    if !args.per_task {
        report.per_task = None;
    }
    let rendered = render_report(&report, &method, args.format);
    match &args.out {
        Some(out) => {
            std::fs::write(out, rendered)?;
            let mut manifest = RunManifest::new("eval", Some(cfg.seed));
            manifest.add_input(&args.base)?;
            manifest.add_input(&args.novel)?;
            manifest.add_output(out);
            manifest.write_beside(out)?;
            eprintln!(
                "accuracy {:.4} +- {:.4} -> {}",
                report.accuracy,
                report.ci95,
                out.display()
            );
        }
        None => print!("{rendered}"),
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    if args.method.method == MethodKind::Inductive {
        return Err(CliError::Usage(
            "sweep requires --method cbm or cbm-lle (inductive has no grid)".into(),
        ));
    }
    let alphas = grid::parse_f64_grid(&args.alpha_grid).map_err(CliError::Usage)?;
    let variants = if args.all_variants {
        SweepGrid::all_variants()
    } else {
        vec![(
            sigma_prime_of(args.method.sigma_prime),
            args.method.softmax,
            sigma_of(args.method.sigma),
        )]
    };
    configure_threads(args.threads)?;
    let base = load_base_matrix(&args.base)?;
    let novel = load_dataset(&args.novel)?;
    let cfg = protocol_of(&args.protocol);

    let grid = match args.method.method {
        MethodKind::Cbm => SweepGrid::cbm(variants, alphas),
        MethodKind::CbmLle => {
            let ks = match &args.lle_k_grid {
                Some(spec) => grid::parse_usize_grid(spec).map_err(CliError::Usage)?,
                None => vec![args.method.lle_k],
            };
            let dims = match &args.lle_dim_grid {
                Some(spec) => grid::parse_usize_grid(spec).map_err(CliError::Usage)?,
                None => (2..=64.min(base.n_classes().saturating_sub(1))).collect(),
            };
            let l2 = if args.sweep_l2 {
                vec![false, true]
            } else {
                vec![args.method.l2_normalize]
            };
            SweepGrid {
                kind: SweepMethodKind::CbmLle,
                variants,
                alphas,
                lle_ks: ks,
                lle_dims: dims,
                lle_l2: l2,
                lle_reg: args.method.lle_reg,
            }
        }
        MethodKind::Inductive => unreachable!(),
    };

    let results = sweep(&novel, &base, &grid, &cfg)?;
    let csv = sweep_csv(&results);
    std::fs::write(&args.out, csv)?;

    let (best_method, best_report) = &results[0];
    let mut best = best_report.clone();
    best.per_task = None;
    let best_path = {
        let mut os = args.out.as_os_str().to_owned();
        os.push(".best.json");
        PathBuf::from(os)
    };
    std::fs::write(
        &best_path,
        serde_json::to_string_pretty(&best).expect("report serializes") + "\n",
    )?;

    let mut manifest = RunManifest::new("sweep", Some(cfg.seed));
    manifest.add_input(&args.base)?;
    manifest.add_input(&args.novel)?;
    manifest.add_output(&args.out);
    manifest.add_output(&best_path);
    manifest.write_beside(&args.out)?;

    eprintln!(
        "{} grid points -> {}; best {} accuracy {:.4} +- {:.4}",
        results.len(),
        args.out.display(),
        best_method.name(),
        best.accuracy,
        best.ci95
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let csv = std::fs::read_to_string(&args.input)?;
    let curves = report::curves_from_csv(&csv).map_err(CliError::Data)?;
    let rendered = match args.format {
        ReportFormat::Table => report::render_table(&curves),
        ReportFormat::Csv => report::render_csv(&curves),
        ReportFormat::Json => {
            serde_json::to_string_pretty(&curves).expect("curves serialize") + "\n"
        }
    };
    match &args.out {
        Some(out) => {
            std::fs::write(out, rendered)?;
            let mut manifest = RunManifest::new("report", None);
            manifest.add_input(&args.input)?;
            manifest.add_output(out);
            manifest.write_beside(out)?;
        }
        None => print!("{rendered}"),
    }
    Ok(())
}
