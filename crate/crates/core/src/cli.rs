//! Command-line front end. [`run`] parses arguments and returns the process
//! exit code: 0 on success, 1 on operational errors, 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bridge::CommandSpec;
use crate::corpus::{self, TargetPolicy};
use crate::dataset::{self, BuildConfig, DatasetManifest, GeneratorChoice, MaskStyle, Rounding, Split, MANIFEST_FILE};
use crate::eval::{self, Aggregation, EvalOptions};
use crate::patterns::{CaseKey, EditPattern, MethodFamily};
use crate::raster::{DocumentImage, Mask};
use crate::synth;

#[derive(Debug, Parser)]
#[command(name = "fdvied", version, about = "Forged document image dataset builder and mIoU evaluator")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate forged images, masks and a manifest.
    Generate(GenerateArgs),
    /// Print per-case entry counts of a manifest.
    Stats(StatsArgs),
    /// Re-check every dataset invariant against the original pages.
    Verify(ManifestArg),
    /// Write a case-filtered, capped subset of a manifest.
    Filter(FilterArgs),
    /// Score predicted masks against the ground truth.
    Eval(EvalArgs),
    /// Render forged regions as a translucent blue overlay.
    Visualize(VisualizeArgs),
    /// Write a synthetic receipt corpus (images plus annotations).
    SynthCorpus(SynthArgs),
    /// Print a build config in the config file format.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
struct ManifestArg {
    /// Manifest file, or a dataset directory containing manifest.jsonl.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RoundingArg {
    PerCell,
    LargestRemainder,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MaskStyleArg {
    ChangedPixels,
    BoundingRect,
}

#[derive(Debug, Args)]
struct QuotaArgs {
    /// Scale of the reference per-case counts (1.0 = full size).
    #[arg(long)]
    scale: Option<f64>,
    /// How scaled counts are rounded.
    #[arg(long, value_enum, requires = "scale")]
    rounding: Option<RoundingArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// JSON build config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    quota: QuotaArgs,
    /// Corpus directory of `<id>.json` annotations and page images.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    corpus: Option<PathBuf>,
    /// Use N synthetic receipts instead of a corpus directory.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Seed for the synthetic corpus.
    #[arg(long, default_value_t = 0)]
    corpus_seed: u64,
    /// Output directory; must be empty or absent.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mask_style: Option<MaskStyleArg>,
    /// `tagged:<tag>`, `any` or `margin:<tag>`.
    #[arg(long)]
    target: Option<String>,
    /// External generator command; enables the bridge.
    #[arg(long)]
    bridge_cmd: Option<String>,
    #[arg(long)]
    bridge_timeout: Option<u64>,
    #[arg(long)]
    blend_radius: Option<u32>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    manifest: ManifestArg,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[command(flatten)]
    manifest: ManifestArg,
    /// Output manifest file.
    #[arg(long)]
    out: PathBuf,
    /// Keep only these patterns (slug, repeatable).
    #[arg(long = "pattern")]
    patterns: Vec<String>,
    /// Keep only these method families (slug, repeatable).
    #[arg(long = "method")]
    methods: Vec<String>,
    /// Keep only these cases (slug, repeatable).
    #[arg(long = "case")]
    cases: Vec<String>,
    #[arg(long, default_value_t = usize::MAX)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    manifest: ManifestArg,
    /// Prediction directory; repeat to average several runs.
    #[arg(long = "pred", required = true)]
    preds: Vec<PathBuf>,
    /// Score missing predictions as all-authentic.
    #[arg(long)]
    allow_missing: bool,
    /// Pool confusion counts within each case instead of averaging images.
    #[arg(long)]
    pooled: bool,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct VisualizeArgs {
    #[command(flatten)]
    manifest: ManifestArg,
    #[arg(long)]
    out: PathBuf,
    /// Overlay predictions from this directory instead of ground truth.
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    #[command(flatten)]
    quota: QuotaArgs,
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 2;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Stats(a) => stats(a),
        Command::Verify(a) => verify(a),
        Command::Filter(a) => filter(a),
        Command::Eval(a) => evaluate(a),
        Command::Visualize(a) => visualize(a),
        Command::SynthCorpus(a) => synth_corpus(a),
        Command::Config(a) => {
            print!("{}", serde_json::to_string_pretty(&quota_config(None, &a.quota)?)? + "\n");
            Ok(0)
        }
    }
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn load_manifest(arg: &ManifestArg) -> Result<(DatasetManifest, PathBuf)> {
    let path = manifest_path(&arg.manifest);
    let m = DatasetManifest::load(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok((m, path))
}

fn parse_target(s: &str) -> Result<TargetPolicy> {
    Ok(match s.split_once(':') {
        None if s == "any" => TargetPolicy::AnyWord,
        Some(("tagged", t)) if !t.is_empty() => TargetPolicy::TaggedWord(t.into()),
        Some(("margin", t)) if !t.is_empty() => TargetPolicy::AdjacentMargin(t.into()),
        _ => bail!("bad --target {s:?}; expected tagged:<tag>, any or margin:<tag>"),
    })
}

/// Defaults, then the config file, then flags.
fn quota_config(file: Option<&Path>, q: &QuotaArgs) -> Result<BuildConfig> {
    let rounding = match q.rounding {
        Some(RoundingArg::LargestRemainder) => Rounding::LargestRemainder,
        _ => Rounding::PerCell,
    };
    let mut cfg = match file {
        Some(p) => {
            let src = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&src).with_context(|| format!("parsing {}", p.display()))?
        }
        None => BuildConfig::reference(0.01, rounding, 0),
    };
    if let Some(s) = q.scale {
        if !(s > 0.0 && s.is_finite()) {
            bail!("--scale must be positive");
        }
        cfg.case_counts = BuildConfig::reference(s, rounding, 0).case_counts;
    }
    if let Some(seed) = q.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn generate(a: GenerateArgs) -> Result<i32> {
    let mut cfg = quota_config(a.config.as_deref(), &a.quota)?;
    if let Some(m) = a.mask_style {
        cfg.mask_style = match m {
            MaskStyleArg::ChangedPixels => MaskStyle::ChangedPixels,
            MaskStyleArg::BoundingRect => MaskStyle::BoundingRect,
        };
    }
    if let Some(t) = &a.target {
        cfg.target_policy = parse_target(t)?;
    }
    if let Some(r) = a.blend_radius {
        cfg.blend_radius = r;
    }
    if let Some(cmd) = &a.bridge_cmd {
        let command = CommandSpec::parse(cmd).context("empty --bridge-cmd")?;
        cfg.generator = GeneratorChoice::ExternalBridge { command, timeout_secs: a.bridge_timeout.unwrap_or(60) };
    } else if let (Some(t), GeneratorChoice::ExternalBridge { timeout_secs, .. }) = (a.bridge_timeout, &mut cfg.generator) {
        *timeout_secs = t;
    }
    cfg.validate()?;
    if a.synthetic == Some(0) {
        bail!("--synthetic needs at least one document");
    }
    if a.out.exists() {
        if !a.out.is_dir() {
            bail!("{} is not a directory", a.out.display());
        }
        if fs::read_dir(&a.out)?.next().is_some() {
            bail!("output directory {} is not empty", a.out.display());
        }
    }
    let corpus = match (&a.corpus, a.synthetic) {
        (Some(dir), _) => corpus::load_corpus(dir).with_context(|| format!("loading corpus {}", dir.display()))?,
        (None, Some(n)) => synth::synth_corpus(n, a.corpus_seed),
        (None, None) => unreachable!("clap requires one corpus source"),
    };
    let out = dataset::build_dataset(&cfg, &corpus, &a.out)?;
    let stats = dataset::compute_stats(&out.manifest);
    println!("{stats}");
    println!("wrote {} entries to {}", out.manifest.entries.len(), a.out.display());
    Ok(0)
}

fn stats(a: StatsArgs) -> Result<i32> {
    let (m, _) = load_manifest(&a.manifest)?;
    let t = dataset::compute_stats(&m);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&t)?);
    } else {
        println!("{t}");
    }
    Ok(0)
}

fn verify(a: ManifestArg) -> Result<i32> {
    let (m, path) = load_manifest(&a)?;
    let s = dataset::verify_dataset(&m, &path)?;
    println!("ok: {} entries verified, {} forged pixels", s.checked, s.forged_pixels);
    Ok(0)
}

fn parse_slugs<T: Copy>(vals: &[String], all: &[T], slug: impl Fn(T) -> String, what: &str) -> Result<Vec<T>> {
    vals.iter()
        .map(|v| {
            all.iter()
                .copied()
                .find(|x| slug(*x) == *v)
                .with_context(|| format!("unknown {what} {v:?}"))
        })
        .collect()
}

fn filter(a: FilterArgs) -> Result<i32> {
    let patterns = parse_slugs(&a.patterns, &EditPattern::ALL, |p| p.slug().to_string(), "pattern")?;
    let methods = parse_slugs(&a.methods, &MethodFamily::ALL, |m| m.slug().to_string(), "method")?;
    let cases = parse_slugs(&a.cases, &CaseKey::ALL, |c| c.slug(), "case")?;
    if a.cap == 0 {
        bail!("--cap must be at least 1");
    }
    let (m, path) = load_manifest(&a.manifest)?;
    let mut sub = dataset::filter_subset(
        &m,
        |c| {
            (patterns.is_empty() || patterns.contains(&c.pattern()))
                && (methods.is_empty() || methods.contains(&c.method()))
                && (cases.is_empty() || cases.contains(&c))
        },
        a.cap,
        a.seed,
    )?;
    let root = m.root_dir(&path);
    sub.root = root
        .canonicalize()
        .with_context(|| format!("resolving {}", root.display()))?
        .display()
        .to_string();
    sub.save(&a.out)?;
    println!("{}", dataset::compute_stats(&sub));
    Ok(0)
}

fn evaluate(a: EvalArgs) -> Result<i32> {
    let (m, path) = load_manifest(&a.manifest)?;
    let options = EvalOptions {
        allow_missing: a.allow_missing,
        aggregation: if a.pooled { Aggregation::Pooled } else { Aggregation::PerImage },
        split: match a.split {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        },
    };
    let reports = a
        .preds
        .iter()
        .map(|p| eval::evaluate_run(&m, &path, p, &options))
        .collect::<Result<Vec<_>, _>>()?;
    let report = eval::average_reports(&reports)?;
    if a.json {
        print!("{}", report.to_json());
    } else {
        println!("{report}");
    }
    for e in &report.errors {
        eprintln!("{}: {}", e.path, e.message);
    }
    Ok(if report.errors.is_empty() { 0 } else { 1 })
}

/// Blends blue into the masked pixels at half opacity.
pub fn overlay(image: &DocumentImage, mask: &Mask) -> DocumentImage {
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if mask.get(x, y) {
                let p = image.pixel(x, y);
                out.set_pixel(x, y, [p[0] / 2, p[1] / 2, ((p[2] as u16 + 255) / 2) as u8]);
            }
        }
    }
    out
}

fn visualize(a: VisualizeArgs) -> Result<i32> {
    let (m, path) = load_manifest(&a.manifest)?;
    let root = m.root_dir(&path);
    for e in m.entries.iter().take(a.limit.unwrap_or(usize::MAX)) {
        let img = DocumentImage::load(e.original_id.clone(), &root.join(&e.forged_path))?;
        let mask = match &a.pred {
            Some(dir) => {
                let p = eval::prediction_path(dir, e).with_context(|| format!("no prediction for {}", e.forged_path))?;
                Mask::load_png(&p)?
            }
            None => Mask::load_png(&root.join(&e.mask_path))?,
        };
        let target = a.out.join(e.forged_path.replace(".png", ".overlay.png"));
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        overlay(&img, &mask).save_png(&target)?;
    }
    Ok(0)
}

fn synth_corpus(a: SynthArgs) -> Result<i32> {
    if a.count == 0 {
        bail!("--count must be at least 1");
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (img, annot) in synth::synth_corpus(a.count, a.seed) {
        corpus::save_document(&a.out, &img, &annot)?;
    }
    println!("wrote {} documents to {}", a.count, a.out.display());
    Ok(0)
}
