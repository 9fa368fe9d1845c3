//! The `votelab` command line.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on I/O
//! errors. Output files are written to a temporary file in the destination
//! directory and renamed into place.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bounds::{self, BoundOptions};
use crate::dataset::{self, EnsembleWeights, PredictionDataset, DEFAULT_PERTURBATION};
use crate::error::{Error, Result};
use crate::extrapolate::{self, GrowthOptions};
use crate::simgen::{self, ClassifierSampler, DirichletConfusion, FinitePool, SplitCase};
use crate::stats::{self, EnsembleStats, TieRule};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "VOTELAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "votelab",
    version,
    about = "Majority-vote error analysis for classifier ensembles"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ensemble statistics of a prediction file.
    Analyze(AnalyzeArgs),
    /// Every majority-vote error bound with its applicability.
    Bounds(BoundsArgs),
    /// Grow triple statistics to larger ensembles.
    Extrapolate(ExtrapolateArgs),
    /// Generate synthetic ensembles.
    #[command(subcommand)]
    Simulate(SimulateCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Prediction CSV with header `y,h1,...,hN`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// JSON array of N nonnegative classifier weights; uniform when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Number of classes; inferred from the labels when absent.
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long, default_value_t = TieRule::LowestLabel)]
    pub tie_rule: TieRule,
    /// Jitter the weights so that no exact half/half ties remain.
    #[arg(long)]
    pub perturb: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_PERTURBATION)]
    pub perturb_magnitude: f64,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Destination file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Confidence parameter of the polarization upper bound.
    #[arg(long, default_value_t = bounds::DEFAULT_DELTA_CONF)]
    pub delta: f64,
    /// Polarization to use instead of the measured one.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Wrong-label concentration to use instead of the measured one.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Label-set size of the entropy-restricted bound.
    #[arg(long)]
    pub entropy_m: Option<usize>,
    /// Mass allowed outside the label set; the smallest valid value when
    /// absent.
    #[arg(long)]
    pub entropy_delta: Option<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ExtrapolateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub num_classes: Option<usize>,
    /// Sub-ensemble size the statistics are measured on.
    #[arg(long = "m", default_value_t = 3)]
    pub subset_size: usize,
    /// Comma-separated target ensemble sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub targets: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub num_subsets: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Allow sub-ensemble sizes other than 3.
    #[arg(long)]
    pub experimental: bool,
    /// CSV destination; the JSON curve goes next to it.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON destination; defaults to the CSV path with extension `.json`.
    #[arg(long)]
    pub json_output: Option<PathBuf>,
    /// Format for standard output when no `--output` is given.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Constant classifiers split `p` / `1 - p` between two labels.
    SplitVote(SplitVoteArgs),
    /// A majority that is never wrong next to a wrong minority of mass ε.
    Pathological(PathologicalArgs),
    /// Predictions drawn from per-example Dirichlet label masses.
    Dirichlet(DirichletArgs),
    /// I.i.d. draws from a finite classifier pool.
    FinitePool(FinitePoolArgs),
    /// Monte-Carlo check of the disagreement U-statistic's spread.
    CltCheck(CltCheckArgs),
}

#[derive(Debug, Args)]
pub struct WeightedOutputArgs {
    /// Prediction CSV destination; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Weights JSON destination; defaults to `<output>.weights.json`.
    #[arg(long)]
    pub weights_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitVoteArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = SplitCase::HalfHalf)]
    pub case: SplitCase,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[command(flatten)]
    pub out: WeightedOutputArgs,
}

#[derive(Debug, Args)]
pub struct PathologicalArgs {
    #[arg(long, default_value_t = 10)]
    pub num_classes: usize,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[command(flatten)]
    pub out: WeightedOutputArgs,
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    #[arg(long, default_value_t = 3)]
    pub num_classes: usize,
    /// Number of examples.
    #[arg(long, default_value_t = 200)]
    pub m: usize,
}

#[derive(Debug, Args)]
pub struct DirichletParams {
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    #[arg(long, default_value_t = 1.0)]
    pub correct_bias: f64,
}

#[derive(Debug, Args)]
pub struct PoolParams {
    /// Prediction CSV whose columns are the pool members; a random pool
    /// when absent.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Comma-separated draw probabilities for `--pool`; uniform when absent.
    #[arg(long, value_delimiter = ',')]
    pub probs: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    pub pool_size: usize,
    /// Per-prediction accuracy of random pool members.
    #[arg(long, default_value_t = 0.6)]
    pub accuracy: f64,
}

#[derive(Debug, Args)]
pub struct DirichletArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub params: DirichletParams,
    /// Number of classifiers.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinitePoolArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub pool: PoolParams,
    /// Seed of the random pool.
    #[arg(long, default_value_t = 0)]
    pub sampler_seed: u64,
    #[arg(long)]
    pub n: usize,
    /// Seed of the draws from the pool.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON destination for the pool's limiting moments; defaults to
    /// `<output>.moments.json`.
    #[arg(long)]
    pub moments_output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerKind {
    SplitVote,
    Pathological,
    Dirichlet,
    FinitePool,
}

#[derive(Debug, Args)]
pub struct CltCheckArgs {
    #[arg(long, value_enum, default_value_t = SamplerKind::FinitePool)]
    pub sampler: SamplerKind,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub pool: PoolParams,
    #[command(flatten)]
    pub dirichlet: DirichletParams,
    #[arg(long, default_value_t = 0.75)]
    pub p: f64,
    #[arg(long, default_value_t = SplitCase::HalfHalf)]
    pub case: SplitCase,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Seed of the random pool or Dirichlet masses.
    #[arg(long, default_value_t = 0)]
    pub sampler_seed: u64,
    /// Ensemble size per trial.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

/// Runs an already parsed configuration.
pub fn execute(config: &RunConfig) -> Result<()> {
    configure_threads()?;
    match &config.command {
        Command::Analyze(a) => analyze(a),
        Command::Bounds(b) => bounds_cmd(b),
        Command::Extrapolate(e) => extrapolate_cmd(e),
        Command::Simulate(s) => simulate(s),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidParameter(format!("{THREADS_ENV}={raw:?} is not a positive integer"))
    })?;
    // a second call in the same process finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn load_input(input: &InputArgs) -> Result<(PredictionDataset, EnsembleWeights)> {
    let data = dataset::load_predictions(&input.predictions, input.num_classes)?;
    let weights = match &input.weights {
        Some(path) => dataset::load_weights(path)?,
        None => EnsembleWeights::uniform(data.num_classifiers()),
    };
    let weights = if input.perturb {
        weights.tie_free_perturb_with(input.seed, input.perturb_magnitude)?
    } else {
        weights
    };
    Ok((data, weights))
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn emit(output: Option<&Path>, contents: &str) -> Result<()> {
    match output {
        Some(path) => write_atomic(path, contents.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(contents.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stats_fields(s: &EnsembleStats) -> [(&'static str, String); 10] {
    [
        ("avg_error", s.avg_error.to_string()),
        ("disagreement_v", s.disagreement_v.to_string()),
        ("disagreement_u", opt(s.disagreement_u)),
        ("tandem", s.tandem.to_string()),
        ("mv_error", s.mv_error.to_string()),
        ("polarization", s.polarization.to_string()),
        ("epsilon_rho", s.epsilon_rho.to_string()),
        ("prob_w_gt_half", s.prob_w_gt_half.to_string()),
        ("second_moment_w", s.second_moment_w.to_string()),
        ("sigma1_sq", opt(s.sigma1_sq)),
    ]
}

fn render_stats(s: &EnsembleStats, format: Format) -> String {
    let fields = stats_fields(s);
    match format {
        Format::Json => json_pretty(s),
        Format::Csv => {
            let names: Vec<_> = fields.iter().map(|f| f.0).collect();
            let values: Vec<_> = fields.iter().map(|f| f.1.as_str()).collect();
            format!("{}\n{}\n", names.join(","), values.join(","))
        }
        Format::Table => fields
            .iter()
            .map(|(k, v)| format!("{k:<16}{}\n", if v.is_empty() { "-" } else { v }))
            .collect(),
    }
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let (data, weights) = load_input(&args.input)?;
    let s = stats::ensemble_stats(&data, &weights, args.input.tie_rule)?;
    let format = args.out.format.unwrap_or(Format::Json);
    emit(args.out.output.as_deref(), &render_stats(&s, format))
}

fn bounds_cmd(args: &BoundsArgs) -> Result<()> {
    let (data, weights) = load_input(&args.input)?;
    let options = BoundOptions {
        tie_rule: args.input.tie_rule,
        eta: args.eta,
        epsilon: args.epsilon,
        entropy_set_size: args.entropy_m,
        entropy_delta: args.entropy_delta,
        delta_conf: args.delta,
    };
    let report = bounds::all_bounds(&data, &weights, &options)?;
    let text = match args.out.format.unwrap_or(Format::Table) {
        Format::Json => json_pretty(&report),
        Format::Csv => report.to_csv(),
        Format::Table => report.to_table(),
    };
    emit(args.out.output.as_deref(), &text)
}

fn extrapolate_cmd(args: &ExtrapolateArgs) -> Result<()> {
    let data = dataset::load_predictions(&args.predictions, args.num_classes)?;
    let options = GrowthOptions {
        subset_size: args.subset_size,
        num_subsets: args.num_subsets,
        seed: args.seed,
        experimental: args.experimental,
    };
    let curve = extrapolate::growth_curve(&data, &args.targets, &options)?;
    let csv = curve.to_csv_string();
    let mut json = curve.to_json_string();
    json.push('\n');
    match &args.output {
        Some(path) => {
            let json_path = args
                .json_output
                .clone()
                .unwrap_or_else(|| path.with_extension("json"));
            if json_path == *path {
                return Err(Error::InvalidParameter(
                    "--json-output must differ from --output".into(),
                ));
            }
            write_atomic(path, csv.as_bytes())?;
            write_atomic(&json_path, json.as_bytes())
        }
        None => {
            if let Some(path) = &args.json_output {
                write_atomic(path, json.as_bytes())?;
            }
            match args.format.unwrap_or(Format::Csv) {
                Format::Json => emit(None, &json),
                Format::Csv | Format::Table => emit(None, &csv),
            }
        }
    }
}

fn sidecar(output: Option<&Path>, explicit: Option<&Path>, suffix: &str) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        output.map(|p| {
            let mut s = p.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        })
    })
}

fn emit_weighted(e: &simgen::WeightedEnsemble, out: &WeightedOutputArgs) -> Result<()> {
    let weights = format!("{}\n", e.weights.to_json_string());
    if let Some(path) = sidecar(
        out.output.as_deref(),
        out.weights_output.as_deref(),
        ".weights.json",
    ) {
        write_atomic(&path, weights.as_bytes())?;
    }
    emit(out.output.as_deref(), &e.data.to_csv_string())
}

fn load_pool(shape: &ShapeArgs, pool: &PoolParams, seed: u64) -> Result<FinitePool> {
    match &pool.pool {
        Some(path) => {
            let data = dataset::load_predictions(path, None)?;
            let n = data.num_classifiers();
            let probs = if pool.probs.is_empty() {
                vec![1.0 / n as f64; n]
            } else {
                pool.probs.clone()
            };
            let members = (0..n).map(|i| data.column(i).collect()).collect();
            FinitePool::new(
                data.true_labels().to_vec(),
                members,
                probs,
                Some(data.num_classes()),
            )
        }
        None => FinitePool::random(
            pool.pool_size,
            shape.m,
            shape.num_classes,
            pool.accuracy,
            seed,
        ),
    }
}

fn simulate(cmd: &SimulateCommand) -> Result<()> {
    match cmd {
        SimulateCommand::SplitVote(a) => {
            emit_weighted(&simgen::make_split_vote(a.p, a.case, a.m, a.n)?, &a.out)
        }
        SimulateCommand::Pathological(a) => emit_weighted(
            &simgen::make_pathological(a.num_classes, a.epsilon, a.m, a.n)?,
            &a.out,
        ),
        SimulateCommand::Dirichlet(a) => {
            let data = simgen::make_dirichlet_confusion(
                a.shape.num_classes,
                a.shape.m,
                a.n,
                a.params.concentration,
                a.params.correct_bias,
                a.seed,
            )?;
            emit(a.output.as_deref(), &data.to_csv_string())
        }
        SimulateCommand::FinitePool(a) => {
            let pool = load_pool(&a.shape, &a.pool, a.sampler_seed)?;
            let (data, moments) = simgen::make_finite_pool(&pool, a.n, a.seed)?;
            if let Some(path) = sidecar(
                a.output.as_deref(),
                a.moments_output.as_deref(),
                ".moments.json",
            ) {
                write_atomic(&path, json_pretty(&moments).as_bytes())?;
            }
            emit(a.output.as_deref(), &data.to_csv_string())
        }
        SimulateCommand::CltCheck(a) => {
            let sampler = match a.sampler {
                SamplerKind::SplitVote => ClassifierSampler::split_vote(a.p, a.case, a.shape.m)?,
                SamplerKind::Pathological => {
                    ClassifierSampler::pathological(a.shape.num_classes, a.epsilon, a.shape.m)?
                }
                SamplerKind::Dirichlet => {
                    ClassifierSampler::DirichletConfusion(DirichletConfusion::generate(
                        a.shape.num_classes,
                        a.shape.m,
                        a.dirichlet.concentration,
                        a.dirichlet.correct_bias,
                        a.sampler_seed,
                    )?)
                }
                SamplerKind::FinitePool => {
                    ClassifierSampler::FinitePool(load_pool(&a.shape, &a.pool, a.sampler_seed)?)
                }
            };
            let check = extrapolate::ustat_clt_check(&sampler, a.n, a.trials, a.seed)?;
            emit(a.output.as_deref(), &json_pretty(&check))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        for args in [
            vec!["votelab", "analyze", "--predictions", "p.csv"],
            vec![
                "votelab",
                "bounds",
                "--predictions",
                "p.csv",
                "--delta",
                "0.1",
                "--format",
                "json",
            ],
            vec![
                "votelab",
                "extrapolate",
                "--predictions",
                "p.csv",
                "--m",
                "3",
                "--targets",
                "5,10,20",
            ],
            vec![
                "votelab",
                "simulate",
                "split-vote",
                "--p",
                "0.75",
                "--case",
                "all-y2",
            ],
            vec![
                "votelab",
                "simulate",
                "clt-check",
                "--sampler",
                "dirichlet",
                "--n",
                "20",
            ],
        ] {
            RunConfig::try_parse_from(args.clone()).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
    }

    #[test]
    fn targets_split_on_commas() {
        let c = RunConfig::try_parse_from([
            "votelab",
            "extrapolate",
            "--predictions",
            "p.csv",
            "--targets",
            "5,10,20",
        ])
        .unwrap();
        let Command::Extrapolate(e) = c.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(e.targets, vec![5, 10, 20]);
        assert_eq!(e.subset_size, 3);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["votelab", "analyze", "--bogus"]), 1);
        assert_eq!(run(["votelab", "--help"]), 0);
        assert_eq!(
            run(["votelab", "analyze", "--predictions", "/nonexistent/p.csv"]),
            2
        );
        assert_eq!(run(["votelab", "simulate", "split-vote", "--p", "1.5"]), 1);
    }

    #[test]
    fn sidecar_paths() {
        assert_eq!(
            sidecar(Some(Path::new("out/d.csv")), None, ".weights.json"),
            Some(PathBuf::from("out/d.csv.weights.json"))
        );
        assert_eq!(sidecar(None, None, ".x"), None);
        assert_eq!(
            sidecar(None, Some(Path::new("w.json")), ".x"),
            Some(PathBuf::from("w.json"))
        );
    }
}
