use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use stagedtree::bn::DagSpec;
use stagedtree::classify::{evaluate, predict_csv};
use stagedtree::data::{load_csv, read_csv, tree_counts, CategoricalDataset, LevelOrder};
use stagedtree::estimate::bic_score;
use stagedtree::experiment::{
    run_experiment, AlgorithmSpec, DataSource, ExperimentReport, ExperimentSpec,
};
use stagedtree::independence::{
    read_class_conditional_independencies, read_marginal_independencies,
};
use stagedtree::io::{load_model, save_model, Provenance};
use stagedtree::learn::{learn, Algorithm, LearnConfig, Linkage, Metric};
use stagedtree::ordering::{cmi_order, parse_order_list, OrderMode};
use stagedtree::synth::titanic;

#[derive(Parser)]
#[command(
    name = "stagedtree",
    version,
    about = "Staged tree classifiers for categorical data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a staged tree from a CSV file and write it as JSON.
    Train(TrainArgs),
    /// Write a CSV of predictions and class posteriors.
    Predict(PredictArgs),
    /// Score a model on labelled data.
    Evaluate(EvaluateArgs),
    /// Print the independence statements a model encodes.
    ShowCi(ShowCiArgs),
    /// Naive staged trees against naive Bayes on simulated parity data.
    XorExperiment(XorArgs),
    /// Print the feature order chosen by conditional mutual information.
    Order(OrderArgs),
    /// Replicated train/test comparison of several learners.
    Benchmark(BenchmarkArgs),
    /// Convert a Bayesian network classifier into a staged tree.
    ConvertDag(ConvertDagArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row; all columns are categorical.
    #[arg(long, required_unless_present = "titanic", conflicts_with = "titanic")]
    data: Option<PathBuf>,
    /// Use the embedded Titanic data (class `Survived`).
    #[arg(long)]
    titanic: bool,
    /// Name of the class column.
    #[arg(long, default_value = "class")]
    class: String,
    /// File fixing level orders, one `variable,level1,level2,...` per line.
    #[arg(long)]
    levels: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<CategoricalDataset> {
        if self.titanic {
            return Ok(titanic());
        }
        let path = self
            .data
            .as_ref()
            .expect("clap enforces --data or --titanic");
        let levels = self.levels.as_ref().map(LevelOrder::load).transpose()?;
        load_csv(path, &self.class, levels.as_ref())
            .with_context(|| format!("reading {}", path.display()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderKind {
    /// Greedy conditional mutual information with the class.
    Cmi,
    /// Read the order from --order-file.
    File,
    /// Column order of the data file.
    Asis,
}

#[derive(Args)]
struct OrderingArgs {
    #[arg(long, value_enum, default_value = "cmi")]
    order: OrderKind,
    /// Feature names separated by commas or newlines (with --order file).
    #[arg(long)]
    order_file: Option<PathBuf>,
}

impl OrderingArgs {
    fn mode(&self) -> anyhow::Result<OrderMode> {
        Ok(match self.order {
            OrderKind::Cmi => OrderMode::Cmi,
            OrderKind::Asis => OrderMode::AsIs,
            OrderKind::File => {
                let path = self
                    .order_file
                    .as_ref()
                    .context("--order file needs --order-file")?;
                OrderMode::Explicit(parse_order_list(&fs::read_to_string(path)?))
            }
        })
    }
}

#[derive(Args)]
struct LearnArgs {
    /// full, indep, hc_indep, hc_full, bhc, fbhc, bj, naive_hc, naive_km or nb.
    #[arg(long, default_value = "bj")]
    algorithm: String,
    /// Backward-joining threshold on the symmetrized KL divergence.
    #[arg(long, default_value_t = 0.01)]
    kl_threshold: f64,
    /// Floor applied to probabilities before divergences are taken.
    #[arg(long, default_value_t = 1e-12)]
    kl_eps: f64,
    /// Only stage depths 1..=N during search.
    #[arg(long)]
    max_search_depth: Option<usize>,
    /// Pseudo-count added to every level when fitting florets.
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
    #[arg(long, env = "STAGEDTREE_SEED", default_value_t = 0)]
    seed: u64,
    /// k-means restarts for naive_km.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Linkage for naive_hc: average, single or complete.
    #[arg(long, default_value = "average")]
    linkage: String,
    /// Distance for naive_hc: tv, euclidean or symkl.
    #[arg(long, default_value = "tv")]
    metric: String,
}

impl LearnArgs {
    fn config(&self) -> anyhow::Result<LearnConfig> {
        let mut c = LearnConfig::new(self.algorithm.parse::<Algorithm>()?);
        c.kl_threshold = self.kl_threshold;
        c.kl_eps = self.kl_eps;
        c.max_search_depth = self.max_search_depth;
        c.smoothing = self.smoothing;
        c.seed = self.seed;
        c.kmeans_restarts = self.restarts;
        c.linkage = self.linkage.parse::<Linkage>()?;
        c.metric = self.metric.parse::<Metric>()?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    ordering: OrderingArgs,
    #[command(flatten)]
    learn: LearnArgs,
    /// Where to write the model.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the search trace as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with (at least) the model's feature columns.
    #[arg(long)]
    data: PathBuf,
    /// Output file; standard output if absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labelled CSV whose class column is the model's class variable.
    #[arg(long)]
    data: PathBuf,
    /// Class level scored for AUC (default: the second level).
    #[arg(long)]
    positive: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ShowCiArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct XorArgs {
    #[arg(long, env = "STAGEDTREE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    replications: usize,
    #[arg(long, default_value_t = 10)]
    features: usize,
    #[arg(long, default_value_t = 200)]
    n_train: usize,
    #[arg(long, default_value_t = 10_000)]
    n_test: usize,
    /// Comma-separated learners; `bj:<threshold>` sets a threshold.
    #[arg(long, default_value = "naive_hc,naive_km,nb")]
    algorithms: String,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct OrderArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    ordering: OrderingArgs,
    /// Comma-separated learners; `bj:<threshold>` sets a threshold.
    #[arg(long, default_value = "bj:0.01,hc_full,naive_km,nb")]
    algorithms: String,
    #[arg(long, default_value_t = 10)]
    replications: usize,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, env = "STAGEDTREE_SEED", default_value_t = 0)]
    seed: u64,
    /// Class level scored for AUC (default: the second level).
    #[arg(long)]
    positive: Option<String>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Write the per-fit CSV report here.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write per-fit wall times here.
    #[arg(long)]
    timings: Option<PathBuf>,
    /// Worker threads (0: all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct ConvertDagArgs {
    /// DAG file: one `name | levels: a,b | parents: p,q | cpt: ...` line per variable, class first.
    #[arg(long)]
    dag: PathBuf,
    /// Write the staged tree as a model file (needs CPTs for every variable).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Exit status for a run whose report is complete except for failed fits.
const PARTIAL_FAILURE: u8 = 3;
const VALIDATION_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let io_failure = e.chain().any(|c| c.is::<io::Error>())
                || e.downcast_ref::<stagedtree::Error>()
                    .is_some_and(|e| matches!(e, stagedtree::Error::Io(_)));
            ExitCode::from(if io_failure { 1 } else { VALIDATION_ERROR })
        }
    }
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::ShowCi(a) => show_ci(a),
        Command::XorExperiment(a) => xor(a),
        Command::Order(a) => order(a),
        Command::Benchmark(a) => benchmark(a),
        Command::ConvertDag(a) => convert_dag(a),
    }
}

fn train(a: TrainArgs) -> anyhow::Result<u8> {
    let ds = a.data.load()?;
    let config = a.learn.config()?;
    let order = a.ordering.mode()?.resolve(&ds, 0.0)?;
    let tree = ds.tree(&order)?;
    let counts = tree_counts(&ds, &tree)?;
    let (model, trace) = learn(&counts, &config)?;
    let score = bic_score(&model, &counts)?;

    let mut flags = BTreeMap::new();
    flags.insert("order".to_string(), order.join(","));
    flags.insert("kl_threshold".into(), config.kl_threshold.to_string());
    flags.insert("kl_eps".into(), config.kl_eps.to_string());
    flags.insert("smoothing".into(), config.smoothing.to_string());
    flags.insert("restarts".into(), config.kmeans_restarts.to_string());
    if let Some(d) = config.max_search_depth {
        flags.insert("max_search_depth".into(), d.to_string());
    }
    flags.insert(
        "data".into(),
        a.data
            .data
            .as_ref()
            .map_or("titanic (embedded)".into(), |p| p.display().to_string()),
    );
    let provenance = Provenance {
        algorithm: config.algorithm.name().to_string(),
        seed: config.seed,
        flags,
        data_digest: format!("{:016x}", ds.digest()),
    };
    save_model(&a.out, &model, &provenance)?;
    if let Some(path) = &a.trace {
        fs::write(path, serde_json::to_string_pretty(&trace)?)?;
    }

    let stages: Vec<String> = (0..tree.depth_count())
        .map(|d| model.staging().depth(d).observed_stage_count().to_string())
        .collect();
    println!("algorithm      {}", config.algorithm);
    println!("order          {}", order.join(", "));
    println!("stages         {}", stages.join(" "));
    println!("free params    {}", model.free_parameter_count());
    println!("log-lik        {:.6}", score.log_likelihood);
    println!("bic score      {:.6}", score.score);
    println!("search steps   {}", trace.steps.len());
    for note in &trace.notes {
        println!("note           {note}");
    }
    eprintln!("fit time       {:.3} s", trace.wall_time.as_secs_f64());
    Ok(0)
}

fn predict(a: PredictArgs) -> anyhow::Result<u8> {
    let (model, _) = load_model(&a.model)?;
    let input = fs::File::open(&a.data).with_context(|| format!("opening {}", a.data.display()))?;
    let rows = match &a.out {
        Some(path) => predict_csv(&model, input, fs::File::create(path)?)?,
        None => predict_csv(&model, input, io::stdout().lock())?,
    };
    eprintln!("{rows} predictions");
    Ok(0)
}

/// Level order pinned to the model so that indices line up.
fn model_levels(model: &stagedtree::model::StagedTreeModel) -> LevelOrder {
    let mut lo = LevelOrder::new();
    for v in model.tree().variables() {
        lo.insert(v.name(), v.levels().to_vec());
    }
    lo
}

fn evaluate_cmd(a: EvaluateArgs) -> anyhow::Result<u8> {
    let (model, _) = load_model(&a.model)?;
    let class = model.tree().class_var();
    let file = fs::File::open(&a.data).with_context(|| format!("opening {}", a.data.display()))?;
    let ds = read_csv(file, class.name(), Some(&model_levels(&model)))?;
    let positive = match &a.positive {
        Some(l) => Some(
            class
                .level_index(l)
                .with_context(|| format!("`{l}` is not a level of {}", class.name()))?,
        ),
        None => None,
    };
    let r = evaluate(&model, &ds, positive)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(0);
    }
    println!("records            {}", r.n_test);
    println!("accuracy           {:.4}", r.accuracy);
    println!("balanced accuracy  {:.4}", r.balanced_accuracy);
    if let Some(auc) = r.auc {
        println!("auc                {auc:.4}");
    }
    if r.n_fallback > 0 {
        println!("class-prior fallbacks {}", r.n_fallback);
    }
    println!("confusion proportions (rows: true, columns: predicted)");
    print!("{:>10}", "");
    for l in &r.class_levels {
        print!("{l:>10}");
    }
    println!();
    for (l, row) in r.class_levels.iter().zip(&r.confusion) {
        print!("{l:>10}");
        for x in row {
            print!("{x:>10.4}");
        }
        println!();
    }
    Ok(0)
}

fn show_ci(a: ShowCiArgs) -> anyhow::Result<u8> {
    let (model, _) = load_model(&a.model)?;
    let mut statements = read_marginal_independencies(&model);
    statements.extend(read_class_conditional_independencies(&model));
    if a.json {
        println!("{}", serde_json::to_string_pretty(&statements)?);
    } else if statements.is_empty() {
        println!("no independence statements");
    } else {
        for s in statements {
            println!("{s}");
        }
    }
    Ok(0)
}

fn parse_algorithms(list: &str) -> anyhow::Result<Vec<AlgorithmSpec>> {
    let specs = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(AlgorithmSpec::parse)
        .collect::<Result<Vec<_>, _>>()?;
    if specs.is_empty() {
        bail!("no algorithms given");
    }
    Ok(specs)
}

fn write_report(report: &ExperimentReport, args: &ReportArgs) -> anyhow::Result<u8> {
    print!("{}", report.summary_table());
    if let Some(path) = &args.out {
        write_file(path, report.to_csv().as_bytes())?;
    }
    if let Some(path) = &args.timings {
        write_file(path, report.timings_csv().as_bytes())?;
    }
    let failures = report.failures();
    if failures > 0 {
        eprintln!("{failures} fit(s) failed; the report is partial");
        return Ok(PARTIAL_FAILURE);
    }
    Ok(0)
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}

fn xor(a: XorArgs) -> anyhow::Result<u8> {
    let mut spec = ExperimentSpec::new(
        "xor",
        DataSource::Parity {
            n_features: a.features,
            n_train: a.n_train,
            n_test: a.n_test,
        },
        parse_algorithms(&a.algorithms)?,
    );
    spec.master_seed = a.seed;
    spec.replications = a.replications;
    spec.threads = a.report.threads;
    let report = run_experiment(&spec)?;
    write_report(&report, &a.report)
}

fn order(a: OrderArgs) -> anyhow::Result<u8> {
    let ds = a.data.load()?;
    let r = cmi_order(&ds, a.smoothing)?;
    println!("{:<4} {:<20} {:>12}", "rank", "feature", "cmi (nats)");
    for (i, (name, score)) in r.order.iter().zip(&r.scores).enumerate() {
        println!("{:<4} {:<20} {:>12.6}", i + 1, name, score);
    }
    Ok(0)
}

fn benchmark(a: BenchmarkArgs) -> anyhow::Result<u8> {
    let ds = a.data.load()?;
    let name = if a.data.titanic {
        "titanic"
    } else {
        "benchmark"
    };
    let mut spec = ExperimentSpec::new(
        name,
        DataSource::Split(ds),
        parse_algorithms(&a.algorithms)?,
    );
    spec.master_seed = a.seed;
    spec.replications = a.replications;
    spec.train_fraction = a.train_fraction;
    spec.order = a.ordering.mode()?;
    spec.positive_class = a
        .positive
        .clone()
        .or_else(|| a.data.titanic.then(|| "Yes".to_string()));
    spec.threads = a.report.threads;
    let report = run_experiment(&spec)?;
    write_report(&report, &a.report)
}

fn convert_dag(a: ConvertDagArgs) -> anyhow::Result<u8> {
    let dag = DagSpec::parse(
        &fs::read_to_string(&a.dag).with_context(|| format!("reading {}", a.dag.display()))?,
    )?;
    let tree = stagedtree::model::EventTree::from_variables(dag.variables().to_vec())?;
    let staging = dag.staging(&tree)?;
    for d in 0..tree.depth_count() {
        let groups: Vec<String> = staging
            .depth(d)
            .members()
            .iter()
            .map(|vs| {
                let labels: Vec<String> = vs
                    .iter()
                    .map(|&v| {
                        let prefix = tree.prefix_of(d, v);
                        let parts: Vec<&str> = prefix
                            .iter()
                            .enumerate()
                            .map(|(i, &x)| tree.variable(i).levels()[x].as_str())
                            .collect();
                        format!("({})", parts.join(","))
                    })
                    .collect();
                format!("{{{}}}", labels.join(" "))
            })
            .collect();
        println!("{:<12} {}", tree.variable(d).name(), groups.join(" "));
    }
    if let Some(out) = &a.out {
        let model = dag.to_model(&tree)?;
        let provenance = Provenance {
            algorithm: "dag".into(),
            seed: 0,
            flags: BTreeMap::from([("dag".to_string(), a.dag.display().to_string())]),
            data_digest: String::new(),
        };
        save_model(out, &model, &provenance)?;
    }
    Ok(0)
}
