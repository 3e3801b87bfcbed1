use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rvlift::bench::{self, SweepConfig};
use rvlift::model::{generate_layered_bn, load_model, parse_evidence, parse_order, parse_queries, write_model};
use rvlift::{
    brute_force_marginals, compare, run, EngineParams, ErrorReport, Evidence, GeneratorConfig, InferenceResult,
    MiniBuckets, Model, PathLength, QuerySet, Scalar, Stage, VariableId,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "rvlift", version, about = "Lifted variable elimination over compressed rv-elim graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute all query marginals in one elimination pass.
    Infer(InferArgs),
    /// Write a layered synthetic Bayesian network and its query file.
    Generate(GenerateArgs),
    /// Sweep path length and binning threshold, emitting CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F64,
    F32,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    /// Enumerate the joint distribution.
    Brute,
    /// Ground variable elimination on the same order.
    Ground,
}

#[derive(Args)]
struct EngineFlags {
    /// Compress the rv-elim graph by bisimulation (default).
    #[arg(long, overrides_with = "no_lift")]
    lift: bool,
    /// Evaluate the rv-elim graph without compression.
    #[arg(long)]
    no_lift: bool,
    /// Bisimulation path length: a non-negative integer or `inf`.
    #[arg(long, default_value = "inf")]
    path_length: PathLength,
    /// Factor-binning threshold on the RMS distance between tables.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Mini-bucket mode: `off`, `args:<i>` or `merge:<m>`.
    #[arg(long, default_value = "off")]
    minibuckets: MiniBuckets,
}

impl EngineFlags {
    fn params(&self) -> EngineParams {
        EngineParams {
            use_bisimulation: !self.no_lift,
            path_length: self.path_length,
            epsilon: self.epsilon,
            minibuckets: self.minibuckets,
        }
    }
}

#[derive(Args)]
struct InferArgs {
    /// Model in UAI MARKOV or BAYES format.
    #[arg(long)]
    model: PathBuf,
    /// Query variable indices; all unobserved variables when omitted.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Evidence file: a count followed by `var value` pairs.
    #[arg(long)]
    evidence: Option<PathBuf>,
    /// Elimination order, rightmost variable eliminated first.
    #[arg(long)]
    order: Option<PathBuf>,
    /// Read the order file first-to-last instead.
    #[arg(long, requires = "order")]
    order_first_to_last: bool,
    #[command(flatten)]
    engine: EngineFlags,
    /// Score the marginals against a baseline.
    #[arg(long)]
    compare: Option<Baseline>,
    #[arg(long, value_enum, default_value = "f64")]
    precision: Precision,
    /// Marginals destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Stats JSON destination; stderr when omitted.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct GeneratorFlags {
    /// Comma-separated layer sizes, first layer first.
    #[arg(long, value_delimiter = ',', default_value = "1000,500,250")]
    layers: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    domain: usize,
    /// Parents per child in the next layer.
    #[arg(long, default_value_t = 2)]
    parents: usize,
    /// First-layer variables sharing one prior table.
    #[arg(long, default_value_t = 25)]
    period: usize,
    /// Children a single variable may parent; unlimited when omitted.
    #[arg(long)]
    fanout: Option<usize>,
    /// Standard deviation of Gaussian noise added to shared tables.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GeneratorFlags {
    fn config(&self) -> GeneratorConfig {
        GeneratorConfig {
            layer_sizes: self.layers.clone(),
            domain_size: self.domain,
            parents_per_child: self.parents,
            prior_share_period: self.period,
            max_parent_fanout: self.fanout.unwrap_or(usize::MAX),
            noise_std: self.noise,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    generator: GeneratorFlags,
    /// Model destination.
    #[arg(long)]
    out: PathBuf,
    /// Query file destination (last-layer variables).
    #[arg(long)]
    queries_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark this model instead of a generated one.
    #[arg(long, requires = "queries")]
    model: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorFlags,
    /// Comma-separated path lengths; empty for none.
    #[arg(long, default_value = "0,1,2,3,inf")]
    path_lengths: String,
    /// Comma-separated binning thresholds; empty for none.
    #[arg(long, default_value = "0,0.01,0.1")]
    epsilons: String,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value = "off")]
    minibuckets: MiniBuckets,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// A failure tagged with the pipeline stage it came from.
struct Failure {
    stage: String,
    message: String,
}

impl Failure {
    fn new(stage: impl Display, message: impl Display) -> Self {
        Failure {
            stage: stage.to_string(),
            message: message.to_string(),
        }
    }
}

impl From<rvlift::Error> for Failure {
    fn from(e: rvlift::Error) -> Self {
        Failure::new(e.stage(), e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::new(Stage::Parse, format!("{}: {e}", path.display())))
}

fn write_to(path: Option<&Path>, text: &str, fallback: &mut dyn Write) -> CliResult<()> {
    let res = match path {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => fallback.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    res.map_err(|m| Failure::new("output", m))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>>
where
    T::Err: Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| Failure::new(Stage::Parse, format!("{what} `{s}`: {e}"))))
        .collect()
}

fn report_json(r: &ErrorReport) -> serde_json::Value {
    json!({
        "incorrect": r.incorrect,
        "total": r.total,
        "fraction": r.fraction,
        "max_abs_error": r.max_abs_error,
    })
}

fn infer(args: &InferArgs) -> CliResult<()> {
    match args.precision {
        Precision::F64 => infer_with::<f64>(args),
        Precision::F32 => infer_with::<f32>(args),
    }
}

fn infer_with<T: Scalar>(args: &InferArgs) -> CliResult<()> {
    let params = args.engine.params();
    params.validate()?;
    let model: Model<T> = load_model(open(&args.model)?)?;
    let evidence = match &args.evidence {
        Some(p) => parse_evidence(open(p)?)?,
        None => Evidence::new(),
    };
    let queries = match &args.queries {
        Some(p) => parse_queries(open(p)?)?,
        None => QuerySet::new(
            (0..model.num_variables())
                .map(VariableId)
                .filter(|v| !evidence.contains_key(v))
                .collect(),
        )?,
    };
    let order = match &args.order {
        Some(p) => Some(parse_order(open(p)?, !args.order_first_to_last).map_err(|e| Failure::new(Stage::Order, e))?),
        None => None,
    };

    let result: InferenceResult<T> = run(&model, &queries, &evidence, &params, order.as_deref())?;
    let error = match args.compare {
        None => None,
        Some(baseline) => {
            let reference = match baseline {
                Baseline::Brute => {
                    let reduced = model.apply_evidence(&evidence, &queries)?;
                    brute_force_marginals(&reduced, &queries)?
                }
                Baseline::Ground => {
                    run(&model, &queries, &evidence, &EngineParams::ground(), order.as_deref())?.marginals
                }
            };
            Some(compare(&result.marginals, &reference)?)
        }
    };

    write_to(args.output.as_deref(), &result.format_marginals(), &mut io::stdout())?;
    let s = &result.stats;
    let stats = json!({
        "wall_ms": s.wall_ms,
        "mults": s.mults,
        "adds": s.adds,
        "intermediate_factors": s.intermediate_factors,
        "blocks": s.blocks,
        "vertices": s.vertices,
        "z": result.z.and_then(|z| z.to_f64()),
        "params": {
            "use_bisimulation": params.use_bisimulation,
            "path_length": params.path_length.to_string(),
            "epsilon": params.epsilon,
            "minibuckets": params.minibuckets.to_string(),
            "precision": match args.precision { Precision::F64 => "f64", Precision::F32 => "f32" },
            "order": order.as_ref().map(|o| o.iter().map(|v| v.0).collect::<Vec<_>>()),
            "evidence": evidence.iter().map(|(v, x)| (v.0.to_string(), json!(x))).collect::<serde_json::Map<_, _>>(),
            "compare": args.compare.map(|b| match b { Baseline::Brute => "brute", Baseline::Ground => "ground" }),
        },
        "error": error.as_ref().map(report_json),
    });
    let mut text = serde_json::to_string_pretty(&stats).map_err(|e| Failure::new("output", e))?;
    text.push('\n');
    write_to(args.stats.as_deref(), &text, &mut io::stderr())
}

fn generate(args: &GenerateArgs) -> CliResult<()> {
    let cfg = args.generator.config();
    let g = generate_layered_bn::<f64>(&cfg)?;
    let file = File::create(&args.out).map_err(|e| Failure::new("output", format!("{}: {e}", args.out.display())))?;
    write_model(&g.model, io::BufWriter::new(file)).map_err(|e| Failure::new("output", e))?;
    if let Some(q) = &args.queries_out {
        let line: Vec<String> = g.queries.vars().iter().map(|v| v.0.to_string()).collect();
        write_to(Some(q), &format!("{}\n", line.join(" ")), &mut io::sink())?;
    }
    let per_layer: Vec<String> = g.distinct_cpts_per_layer().iter().map(|c| c.to_string()).collect();
    println!("variables {}", g.model.num_variables());
    println!("factors {}", g.model.factors().len());
    println!("queries {}", g.queries.len());
    println!("distinct_priors {}", g.distinct_priors());
    println!("distinct_cpts_per_layer {}", per_layer.join(","));
    Ok(())
}

fn bench_cmd(args: &BenchArgs) -> CliResult<()> {
    let cfg = SweepConfig {
        path_lengths: parse_list(&args.path_lengths, "path length")?,
        epsilons: parse_list(&args.epsilons, "epsilon")?,
        repetitions: args.repetitions,
        minibuckets: args.minibuckets,
    };
    let (model, queries) = match (&args.model, &args.queries) {
        (Some(m), Some(q)) => (load_model::<f64>(open(m)?)?, parse_queries(open(q)?)?),
        _ => {
            let g = generate_layered_bn::<f64>(&args.generator.config())?;
            (g.model, g.queries)
        }
    };
    let rows = bench::sweep(&model, &queries, &Evidence::new(), &cfg, None)?;
    write_to(args.output.as_deref(), &bench::to_csv(&rows), &mut io::stdout())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Infer(a) => infer(a),
        Command::Generate(a) => generate(a),
        Command::Bench(a) => bench_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {}", f.stage, f.message);
            ExitCode::FAILURE
        }
    }
}
