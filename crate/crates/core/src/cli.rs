use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use fewshot::eval::report::{self, OutputDir};
use fewshot::eval::{kfold_run, run_split, sweep, Method, RunConfig, SweepAxis};
use fewshot::featselect::KRatio;
use fewshot::lda::DEFAULT_LAMBDA;
use fewshot::prototypes::{build_prototypes, load_prototypes, save_prototypes, Provenance};
use fewshot::sampler::{self, SupportSpec};
use fewshot::synth::{write_synth, GainJitter, SynthSpec};
use fewshot::{
    load_dataset, Dataset, Metric, PrototypeSet, Split, Strategy, TaskType, WeightScheme,
};

/// `println!` that returns write errors instead of panicking, so a closed pipe ends the command.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout().lock(), $($arg)*)?
    };
}

#[derive(Debug, Parser)]
#[command(
    name = "fewshot",
    version,
    about = "Few-shot classification experiments over precomputed embeddings"
)]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log progress and warnings at info level.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an embedding file and manifest and print a summary.
    Inspect(InspectArgs),
    /// Run one evaluation and write its report.
    Run(RunArgs),
    /// Repeated runs over a list of support sizes or K ratios.
    Sweep(SweepArgs),
    /// Cross-validation over the manifest's folds.
    Kfold(RunArgs),
    /// Generate a synthetic Gaussian dataset.
    Synth(SynthArgs),
    /// Build or check prototype files.
    #[command(subcommand)]
    Protos(ProtosCommand),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// single-label or multi-label.
    #[arg(long)]
    pub task: Option<TaskType>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// AVG, LDA, MI+AVG, MI+LDA or ZS-external.
    #[arg(long)]
    pub method: Option<Method>,
    /// uniform or norm-weighted prototype averaging.
    #[arg(long)]
    pub scheme: Option<WeightScheme>,
    /// cosine or mse.
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Support samples per class.
    #[arg(long)]
    pub k: Option<usize>,
    /// MI feature ratio; keeps round(|C|·K) features. Accepts fractions like 1/2.
    #[arg(long = "ratio", value_parser = parse_ratio)]
    pub ratio: Option<f64>,
    /// Histogram bins for MI (default depends on support size).
    #[arg(long)]
    pub bins: Option<usize>,
    /// LDA ridge coefficient.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// uniform-random or least-overlap (default by task type).
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// External prototypes for ZS-external (EMB1 with a `.classes` sidecar).
    #[arg(long)]
    pub prototypes: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisKind {
    #[value(name = "support-size", alias = "k")]
    SupportSize,
    #[value(name = "ratio", alias = "K")]
    Ratio,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub axis: Option<AxisKind>,
    /// Comma-separated axis values; ranges like 2..15 are accepted for support sizes.
    #[arg(long)]
    pub values: Option<String>,
    /// Runs per axis value.
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with a synthetic dataset description.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub dev_per_class: Option<usize>,
    #[arg(long)]
    pub eval_per_class: Option<usize>,
    #[arg(long)]
    pub mean_scale: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Per-row gain range as LO,HI.
    #[arg(long, value_parser = parse_pair)]
    pub gain_jitter: Option<(f64, f64)>,
    /// Draw continuous gains instead of powers of two.
    #[arg(long)]
    pub continuous_gain: bool,
    #[arg(long)]
    pub noise_dims: Option<usize>,
    #[arg(long)]
    pub folds: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ProtosCommand {
    /// Average support embeddings into prototypes and save them.
    Build(ProtosBuildArgs),
    /// Load a prototype file against a dataset's classes and print a summary.
    Load(ProtosLoadArgs),
}

#[derive(Debug, Args)]
pub struct ProtosBuildArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = WeightScheme::Uniform)]
    pub scheme: WeightScheme,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Prototype file to write; the class order goes to `<out>.classes`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProtosLoadArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub prototypes: PathBuf,
}

fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    s.parse::<KRatio>().map(KRatio::value)
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got '{s}'"))?;
    let a = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
    let b = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
    Ok((a, b))
}

/// Keys accepted in a `--config` file for run, sweep and kfold.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    embeddings: Option<PathBuf>,
    manifest: Option<PathBuf>,
    task: Option<String>,
    method: Option<String>,
    scheme: Option<String>,
    metric: Option<String>,
    k: Option<usize>,
    ratio: Option<toml::Value>,
    bins: Option<usize>,
    lambda: Option<f64>,
    strategy: Option<String>,
    seed: Option<u64>,
    prototypes: Option<PathBuf>,
    out: Option<PathBuf>,
    axis: Option<String>,
    values: Option<toml::Value>,
    runs: Option<usize>,
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_opt<T: std::str::FromStr<Err = String>>(
    v: Option<String>,
    what: &str,
) -> Result<Option<T>> {
    v.map(|s| {
        s.parse::<T>()
            .map_err(|e| anyhow::anyhow!("{what} in config file: {e}"))
    })
    .transpose()
}

fn toml_ratio(v: Option<toml::Value>) -> Result<Option<f64>> {
    match v {
        None => Ok(None),
        Some(toml::Value::Float(f)) => Ok(Some(f)),
        Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
        Some(toml::Value::String(s)) => Ok(Some(parse_ratio(&s).map_err(anyhow::Error::msg)?)),
        Some(other) => bail!("ratio in config file must be a number or string, got {other}"),
    }
}

fn toml_values(v: Option<toml::Value>) -> Result<Option<String>> {
    match v {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(toml::Value::Array(items)) => {
            let parts: Vec<String> = items
                .into_iter()
                .map(|i| match i {
                    toml::Value::String(s) => s,
                    other => other.to_string(),
                })
                .collect();
            Ok(Some(parts.join(",")))
        }
        Some(other) => bail!("values in config file must be a list or string, got {other}"),
    }
}

/// Flags merged over the config file, over built-in defaults.
struct Effective {
    embeddings: PathBuf,
    manifest: PathBuf,
    task: TaskType,
    prototypes: Option<PathBuf>,
    out: Option<PathBuf>,
    config: RunConfig,
    axis: Option<String>,
    values: Option<String>,
    runs: Option<usize>,
}

impl Effective {
    fn inputs(&self) -> serde_json::Value {
        let mut v = json!({
            "embeddings": self.embeddings.display().to_string(),
            "manifest": self.manifest.display().to_string(),
            "task": self.task,
        });
        if let Some(p) = &self.prototypes {
            v["prototypes"] = json!(p.display().to_string());
        }
        v
    }

    fn out_dir(&self) -> Result<OutputDir> {
        let out = self.out.as_ref().context("--out is required")?;
        Ok(OutputDir::create(out)?)
    }

    fn load(&self) -> Result<(Dataset, Option<PrototypeSet>)> {
        let ds = load_dataset(&self.embeddings, &self.manifest, self.task)?;
        let protos = match &self.prototypes {
            Some(p) => Some(load_prototypes(p, ds.vocab())?),
            None => None,
        };
        Ok((ds, protos))
    }
}

fn effective(args: &RunArgs, sweep: Option<&SweepArgs>) -> Result<Effective> {
    let file: FileConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => FileConfig::default(),
    };
    let embeddings = args
        .data
        .embeddings
        .clone()
        .or(file.embeddings)
        .context("--embeddings is required")?;
    let manifest = args
        .data
        .manifest
        .clone()
        .or(file.manifest)
        .context("--manifest is required")?;
    let task = match args.data.task {
        Some(t) => t,
        None => parse_opt(file.task, "task")?.unwrap_or_default(),
    };
    let d = RunConfig::default();
    let method = match args.method {
        Some(m) => m,
        None => parse_opt(file.method, "method")?.unwrap_or(d.method),
    };
    let config = RunConfig {
        method,
        scheme: match args.scheme {
            Some(s) => s,
            None => parse_opt(file.scheme, "scheme")?.unwrap_or(d.scheme),
        },
        metric: match args.metric {
            Some(m) => m,
            None => parse_opt(file.metric, "metric")?.unwrap_or(d.metric),
        },
        k: args.k.or(file.k).unwrap_or(d.k),
        ratio: match args.ratio {
            Some(r) => Some(r),
            None => toml_ratio(file.ratio)?,
        },
        bins: args.bins.or(file.bins),
        lambda: args.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        strategy: match args.strategy {
            Some(s) => Some(s),
            None => parse_opt(file.strategy, "strategy")?,
        },
    };
    let (axis, values, runs) = match sweep {
        Some(s) => (
            s.axis
                .map(|a| match a {
                    AxisKind::SupportSize => "support-size".to_string(),
                    AxisKind::Ratio => "ratio".to_string(),
                })
                .or(file.axis),
            s.values.clone().or(toml_values(file.values)?),
            s.runs.or(file.runs),
        ),
        None => (None, None, None),
    };
    Ok(Effective {
        embeddings,
        manifest,
        task,
        prototypes: args.prototypes.clone().or(file.prototypes),
        out: args.out.clone().or(file.out),
        config,
        axis,
        values,
        runs,
    })
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Inspect(a) => inspect(&a),
        Command::Run(a) => run(&a),
        Command::Sweep(a) => run_sweep(&a),
        Command::Kfold(a) => kfold(&a),
        Command::Synth(a) => synth(&a),
        Command::Protos(ProtosCommand::Build(a)) => protos_build(&a),
        Command::Protos(ProtosCommand::Load(a)) => protos_load(&a),
    }
}

fn data_paths(d: &DataArgs) -> Result<(&Path, &Path, TaskType)> {
    let e = d
        .embeddings
        .as_deref()
        .context("--embeddings is required")?;
    let m = d.manifest.as_deref().context("--manifest is required")?;
    Ok((e, m, d.task.unwrap_or_default()))
}

fn inspect(args: &InspectArgs) -> Result<()> {
    let (e, m, task) = data_paths(&args.data)?;
    let ds = load_dataset(e, m, task)?;
    let vocab = ds.vocab();
    out!("rows: {}", ds.len());
    out!("dim: {}", ds.dim());
    out!("classes: {}", vocab.len());
    out!("task: {}", ds.task());

    let mut per_class = vec![[0usize; 2]; vocab.len()];
    let mut splits = BTreeMap::new();
    let mut folds: BTreeMap<Option<u32>, usize> = BTreeMap::new();
    for p in 0..ds.len() {
        let r = ds.record(p);
        let col = usize::from(r.split == Split::Eval);
        for &c in ds.labels(p) {
            per_class[c][col] += 1;
        }
        *splits.entry(r.split).or_insert(0usize) += 1;
        *folds.entry(r.fold).or_insert(0) += 1;
    }
    for (split, n) in &splits {
        out!("split {split}: {n}");
    }
    for (fold, n) in &folds {
        match fold {
            Some(f) => out!("fold {f}: {n}"),
            None => out!("fold none: {n}"),
        }
    }
    out!("class,dev,eval");
    for (c, [dev, eval]) in per_class.iter().enumerate() {
        out!("{},{dev},{eval}", vocab.name(c));
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let eff = effective(args, None)?;
    let out = eff.out_dir()?;
    let (ds, protos) = eff.load()?;
    let pool = ds.positions_in_split(Split::Dev);
    let eval = ds.positions_in_split(Split::Eval);
    let art = run_split(&ds, &pool, &eval, &eff.config, protos.as_ref())?;
    let inputs = eff.inputs();

    out.write(
        "report.jsonl",
        report::report_jsonl(&art.report, Some(&inputs)),
    )?;
    out.write(
        "report.csv",
        report::runs_csv(std::slice::from_ref(&art.report)),
    )?;
    if let Some(c) = &art.report.outcome.confusion {
        out.write("confusion.csv", c.to_csv(ds.vocab()))?;
    }
    if let Some(csv) = report::per_class_ap_csv(&art.report, ds.vocab()) {
        out.write("per_class_ap.csv", csv)?;
    }
    if let Some(s) = &art.support {
        out.write("support.jsonl", s.to_jsonl(&ds))?;
    }
    if let Some(m) = &art.mask {
        out.write("mask.txt", m.to_text())?;
    }
    let o = &art.report.outcome;
    out!("{} {} {}", eff.config.method, o.metric_name(), o.metric());
    Ok(())
}

fn parse_values(axis: &str, values: &str) -> Result<SweepAxis> {
    let parts = values.split(',').map(str::trim).filter(|s| !s.is_empty());
    match axis {
        "support-size" | "k" | "support_size" => {
            let mut ks = Vec::new();
            for p in parts {
                if let Some((a, b)) = p.split_once("..") {
                    let a: usize = a
                        .parse()
                        .with_context(|| format!("bad range start '{a}'"))?;
                    let b: usize = b.parse().with_context(|| format!("bad range end '{b}'"))?;
                    ks.extend(a..=b);
                } else {
                    ks.push(
                        p.parse()
                            .with_context(|| format!("bad support size '{p}'"))?,
                    );
                }
            }
            Ok(SweepAxis::SupportSize(ks))
        }
        "ratio" | "K" => {
            let rs = parts
                .map(|p| parse_ratio(p).map_err(anyhow::Error::msg))
                .collect::<Result<_>>()?;
            Ok(SweepAxis::Ratio(rs))
        }
        other => bail!("unknown sweep axis '{other}' (expected support-size or ratio)"),
    }
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let eff = effective(&args.run, Some(args))?;
    let axis = parse_values(
        eff.axis.as_deref().context("--axis is required")?,
        eff.values.as_deref().context("--values is required")?,
    )?;
    let runs = eff.runs.unwrap_or(1);
    let out = eff.out_dir()?;
    let (ds, protos) = eff.load()?;
    let result = sweep(
        &ds,
        &eff.config,
        &axis,
        runs,
        eff.config.seed,
        protos.as_ref(),
    )?;
    let inputs = eff.inputs();
    out.write("sweep.jsonl", report::sweep_jsonl(&result, Some(&inputs)))?;
    out.write("sweep.csv", report::sweep_csv(&result))?;
    out.write("sweep_runs.csv", report::sweep_runs_csv(&result))?;
    write!(std::io::stdout().lock(), "{}", report::sweep_csv(&result))?;
    Ok(())
}

fn kfold(args: &RunArgs) -> Result<()> {
    let eff = effective(args, None)?;
    let out = eff.out_dir()?;
    let (ds, protos) = eff.load()?;
    let result = kfold_run(&ds, &eff.config, protos.as_ref())?;
    let inputs = eff.inputs();
    out.write("kfold.jsonl", report::kfold_jsonl(&result, Some(&inputs)))?;
    out.write("kfold.csv", report::kfold_csv(&result))?;
    for f in &result.folds {
        if let Some(s) = &f.artifacts.support {
            out.write(&format!("support_fold{}.jsonl", f.fold), s.to_jsonl(&ds))?;
        }
    }
    out!("folds {} mean {}", result.folds.len(), result.mean);
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &args.config {
        Some(p) => read_toml(p)?,
        None => SynthSpec::default(),
    };
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { spec.$f = v; } )* };
    }
    take!(
        classes,
        dim,
        dev_per_class,
        eval_per_class,
        mean_scale,
        sigma,
        noise_dims,
        seed
    );
    if args.folds.is_some() {
        spec.folds = args.folds;
    }
    if let Some((lo, hi)) = args.gain_jitter {
        spec.gain_jitter = Some(GainJitter {
            lo,
            hi,
            dyadic: !args.continuous_gain,
        });
    }
    let files = write_synth(&spec, &args.out)?;
    out!("{}", files.embeddings.display());
    out!("{}", files.manifest.display());
    Ok(())
}

fn protos_build(args: &ProtosBuildArgs) -> Result<()> {
    let (e, m, task) = data_paths(&args.data)?;
    let ds = load_dataset(e, m, task)?;
    let strategy = args.strategy.unwrap_or(match task {
        TaskType::SingleLabel => Strategy::UniformRandom,
        TaskType::MultiLabel => Strategy::LeastOverlap,
    });
    let spec = SupportSpec::new(args.k, strategy, args.seed)?;
    let support = sampler::sample(&ds, &ds.positions_in_split(Split::Dev), &spec)?;
    let protos = build_prototypes(&ds, &support, args.scheme)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_prototypes(&protos, &args.out)?;
    let mut support_path = args.out.clone().into_os_string();
    support_path.push(".support.jsonl");
    report::write_atomic(&support_path, support.to_jsonl(&ds).as_bytes())?;
    out!(
        "{} classes, dim {}, support digest {}",
        protos.n_classes(),
        protos.dim(),
        support.digest(&ds)
    );
    Ok(())
}

fn protos_load(args: &ProtosLoadArgs) -> Result<()> {
    let (e, m, task) = data_paths(&args.data)?;
    let ds = load_dataset(e, m, task)?;
    let protos = load_prototypes(&args.prototypes, ds.vocab())?;
    if protos.dim() != ds.dim() {
        bail!(fewshot::Error::DimensionMismatch {
            expected: ds.dim(),
            got: protos.dim()
        });
    }
    let provenance = match protos.provenance() {
        Provenance::External => "external".to_string(),
        Provenance::Averaged { scheme, .. } => scheme.to_string(),
    };
    out!(
        "{} classes, dim {}, provenance {provenance}",
        protos.n_classes(),
        protos.dim()
    );
    Ok(())
}
