use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "triadcal", version, about = "Triad mining, IRT calibration, test assembly and session serving")]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or audit triads from identity-labelled embeddings.
    #[command(subcommand)]
    Triads(TriadsCommand),
    /// Calibrate item parameters from a response matrix.
    Fit(FitArgs),
    /// Score subjects against a fitted model.
    Score(ScoreArgs),
    /// Draw disjoint test forms from a calibrated bank.
    Subset(SubsetArgs),
    /// Simulate response data, optionally refitting it for a recovery report.
    Simulate(SimulateArgs),
    /// Descriptive and inferential statistics.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Cosine,
    NegEuclidean,
}

#[derive(Debug, Subcommand)]
pub enum TriadsCommand {
    /// Mine maximally confusable triads.
    Build(TriadsBuildArgs),
    /// Score triads with the similarity-driven simulated observer.
    Audit(TriadsAuditArgs),
}

#[derive(Debug, Args)]
pub struct TriadsBuildArgs {
    /// Embeddings as CSV (image_id,identity_id,gender,race,v0,...) or JSON lines.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "cosine")]
    pub metric: Metric,
    /// Allow triads that mix genders.
    #[arg(long)]
    pub no_yoke_gender: bool,
    /// Allow triads that mix races.
    #[arg(long)]
    pub no_yoke_race: bool,
    /// Seeds the on-screen order of each triad.
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TriadsAuditArgs {
    #[arg(long)]
    pub triads: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "cosine")]
    pub metric: Metric,
}

#[derive(Debug, Args)]
pub struct QuadratureArgs {
    /// Number of quadrature nodes.
    #[arg(long, default_value_t = 61)]
    pub nodes: usize,
    #[arg(long, default_value_t = -6.0, allow_hyphen_values = true)]
    pub lower: f64,
    #[arg(long, default_value_t = 6.0, allow_hyphen_values = true)]
    pub upper: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Response CSV: subject_id then one column per item; cells 1, 0 or NA.
    #[arg(long)]
    pub data: PathBuf,
    /// Model family: 1pl, 2pl or 3pl.
    #[arg(long, default_value = "1pl")]
    pub model: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub quadrature: QuadratureArgs,
    /// Convergence tolerance on the largest parameter change.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_cycles: usize,
    /// Skip the limited-information fit statistics.
    #[arg(long)]
    pub no_fit_stats: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Fitted model file.
    #[arg(long)]
    pub model_file: PathBuf,
    /// EAP, MAP or ML.
    #[arg(long, default_value = "eap")]
    pub method: String,
    /// CSV of subject_id,theta,standard_error,method,flag.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SubsetArgs {
    /// Fitted model or item bank file.
    #[arg(long)]
    pub bank: PathBuf,
    /// Comma-separated `<count>x<STRATUM>:<size>` entries, e.g. 3xEASY:36,3xDIFFICULT:36.
    #[arg(long)]
    pub plan: String,
    #[arg(long)]
    pub seed: u64,
    /// Directory receiving one manifest per form.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub subjects: usize,
    #[arg(long)]
    pub items: usize,
    /// Model family: 1pl, 2pl or 3pl.
    #[arg(long, default_value = "1pl")]
    pub family: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub theta_sd: f64,
    #[arg(long, default_value_t = -3.81, allow_hyphen_values = true)]
    pub beta_low: f64,
    #[arg(long, default_value_t = 1.67, allow_hyphen_values = true)]
    pub beta_high: f64,
    #[arg(long)]
    pub seed: u64,
    /// Directory receiving responses.csv, truth.json and, with --fit, model.json and recovery.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Refit the simulated data with the same family and report parameter recovery.
    #[arg(long)]
    pub fit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Subject,
    Item,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Proportion correct per subject or per item.
    Accuracy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "subject")]
        axis: Axis,
        /// CSV of id,accuracy.
        #[arg(long)]
        out: PathBuf,
    },
    /// Log-likelihood, AIC, BIC and RMSEA of a model on data.
    FitStats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Eigenvalues of the inter-item phi correlation matrix.
    Scree {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test information and standard error over a theta grid.
    Info {
        #[arg(long)]
        model_file: PathBuf,
        /// Restrict to the items of a subset manifest.
        #[arg(long)]
        form: Option<PathBuf>,
        #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
        lower: f64,
        #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
        upper: f64,
        #[arg(long, default_value_t = 161)]
        points: usize,
        /// CSV of theta,information,standard_error.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pearson correlation of two score files matched by subject id.
    Correlate {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-group comparison of score files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// wilcoxon, welch or paired.
        #[arg(long, default_value = "wilcoxon")]
        test: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split score-difference spread into session and test components.
    Variance {
        /// Score file of differences across sessions and tests.
        #[arg(long, requires = "same")]
        cross: Option<PathBuf>,
        /// Score file of differences across tests within a session.
        #[arg(long)]
        same: Option<PathBuf>,
        /// Known SD of cross-session differences (instead of files).
        #[arg(long, conflicts_with = "cross", requires = "sd_test_only")]
        sd_session_and_test: Option<f64>,
        #[arg(long)]
        sd_test_only: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured port (also TRIADCAL_PORT).
    #[arg(long, env = "TRIADCAL_PORT")]
    pub port: Option<u16>,
    /// Overrides the configured data directory (also TRIADCAL_DATA_DIR).
    #[arg(long, env = "TRIADCAL_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}
