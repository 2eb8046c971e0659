use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use forumstrat::centrality::Metric;
use forumstrat::classifier::Loss;
use forumstrat::graph::PostType;
use forumstrat::strata::Strategy;

#[derive(Parser)]
#[command(name = "forumstrat", version, about = "Centrality-stratified sampling of forum posts")]
pub struct Cli {
    /// Log more; repeat for debug output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Parse a JSON-lines corpus and write a graph snapshot.
    Ingest {
        corpus: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print node and edge counts of a graph and, with a rule, its population.
    Stats {
        #[command(flatten)]
        input: GraphInput,
        #[command(flatten)]
        rule: RuleArgs,
    },
    /// Project a population and write it as a graph snapshot.
    Project {
        #[command(flatten)]
        input: GraphInput,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compute member centrality over a population.
    Centrality {
        #[command(flatten)]
        input: GraphInput,
        #[command(flatten)]
        rule: RuleArgs,
        #[command(flatten)]
        metric: MetricArgs,
        /// `member_id,value` CSV; a `.meta.json` sidecar is written beside it.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Bin the post distribution induced by a metric.
    Distribution {
        #[command(flatten)]
        input: GraphInput,
        #[command(flatten)]
        rule: RuleArgs,
        #[command(flatten)]
        metric: MetricArgs,
        /// Merge bins so that this sample size can take 25 posts from each.
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Draw a stratified sample.
    Sample {
        #[command(flatten)]
        input: GraphInput,
        #[command(flatten)]
        rule: RuleArgs,
        #[command(flatten)]
        metric: MetricArgs,
        #[arg(long, value_enum, default_value = "proportional")]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 1500)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Labeled `post_id,class` CSV whose posts are taken first.
        #[arg(long)]
        reuse: Option<PathBuf>,
        /// Fail if more than this many posts would need fresh annotation.
        #[arg(long)]
        max_new: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a classifier on a labeled sample.
    Train {
        #[command(flatten)]
        data: SampleData,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_space: PathBuf,
    },
    /// Repeated stratified holdout evaluation of a labeled sample.
    Holdout {
        #[command(flatten)]
        data: SampleData,
        #[command(flatten)]
        model: ModelArgs,
        /// Number of runs; seeds are 0..runs.
        #[arg(long, default_value_t = 30)]
        runs: u64,
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        /// Stratify splits by class or by centrality bin.
        #[arg(long, value_enum, default_value = "class")]
        strata: StrataArg,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Classify every post of a population.
    Predict {
        #[command(flatten)]
        input: GraphInput,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        space: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Per-class agreement between two prediction files.
    Agree {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        scheme: Option<PathBuf>,
        #[arg(long, default_value_t = forumstrat::eval::DEFAULT_Z)]
        z: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Sample posts on which two prediction files disagree, per class.
    DisagreeSample {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        scheme: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Serve samples to annotators over HTTP.
    AnnotateServe {
        /// Service config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured listen address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Generate a synthetic corpus with ground-truth labels.
    Synth {
        /// Generator config JSON; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        members: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
        /// `post_id,class` ground truth.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Render holdout summaries side by side.
    Report {
        #[arg(required = true)]
        holdouts: Vec<PathBuf>,
        #[arg(long)]
        scheme: Option<PathBuf>,
    },
    /// Run the whole experiment from a pipeline config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
pub struct GraphInput {
    /// JSON-lines corpus (`.jsonl`) or graph snapshot.
    pub graph: PathBuf,
}

#[derive(Args, Default)]
pub struct RuleArgs {
    /// Selection rule JSON; the flags below add to it.
    #[arg(long)]
    pub rule: Option<PathBuf>,
    /// Keep only Offer, Request, Exchange and Tutorial posts.
    #[arg(long)]
    pub trading: bool,
    #[arg(long = "post-type", value_parser = parse_post_type)]
    pub post_types: Vec<PostType>,
    #[arg(long = "board")]
    pub boards: Vec<String>,
    /// Drop posts after this RFC 3339 instant.
    #[arg(long)]
    pub cutoff: Option<DateTime<Utc>>,
    #[arg(long = "exclude-member")]
    pub exclude_members: Vec<String>,
}

fn parse_post_type(s: &str) -> Result<PostType, String> {
    match PostType::from_label(s) {
        PostType::Other => Err(format!("unknown post type `{s}`")),
        t => Ok(t),
    }
}

#[derive(Args)]
pub struct MetricArgs {
    #[arg(long, default_value = "post", value_parser = parse_metric)]
    pub metric: Metric,
    /// Power-iteration tolerance.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Use post counts as eigenvector edge weights.
    #[arg(long)]
    pub weighted: bool,
    /// Largest graph (members + threads) exact betweenness will accept.
    #[arg(long, default_value_t = forumstrat::centrality::DEFAULT_NODE_LIMIT)]
    pub node_limit: usize,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: forumstrat::Error| e.to_string())
}

#[derive(Args)]
pub struct SampleData {
    /// Corpus or snapshot the sample was drawn from.
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub rule: RuleArgs,
    /// Sample CSV as written by `sample`.
    #[arg(long)]
    pub sample: PathBuf,
    /// `post_id,class` labels covering the sample.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub scheme: Option<PathBuf>,
}

#[derive(Args)]
pub struct ModelArgs {
    #[arg(long, default_value = "hinge", value_parser = parse_loss)]
    pub loss: Loss,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2)]
    pub min_df: usize,
    #[arg(long)]
    pub max_features: Option<usize>,
    /// Oversampling neighbours; 0 disables oversampling.
    #[arg(long, default_value_t = 5)]
    pub smote_k: usize,
}

fn parse_loss(s: &str) -> Result<Loss, String> {
    s.parse().map_err(|e: forumstrat::Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Proportional,
    Uniform,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Proportional => Strategy::Proportional,
            StrategyArg::Uniform => Strategy::Uniform,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum StrataArg {
    Class,
    Bins,
}
