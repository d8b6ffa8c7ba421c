use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use llmsite::classifier::{
    evaluate_ood, load_model, save_model, train, Dataset, Label, LabeledSite, SiteFeatures,
    SiteVerdict, TrainConfig,
};
use llmsite::http::UreqClient;
use llmsite::study::{
    cdf_export, prevalence_report, rank_significance_test, run_batch, BatchOptions, CdfGrouping,
    Pipeline, RunConfig, RunFiles, RunManifest, SiteResult,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "detect",
    version,
    about = "Detect websites dominated by LLM-generated text"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample, fetch, filter, score and classify every site of a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML run configuration; replaces the manifest's configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Score pages with the offline stub instead of the scoring service.
        #[arg(long)]
        stub_scorer: bool,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        /// Model file; defaults to the configured model path.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train a site classifier from feature files and a label file.
    Train {
        /// JSONL of site features or verdicts; one dataset per file.
        #[arg(long, num_args = 1.., required = true)]
        features: Vec<PathBuf>,
        /// CSV with columns site_id,label (label is llm or human).
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train on one dataset and report accuracy on another.
    Eval {
        /// Dataset JSON file or a finished run directory.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Write report.json with prevalence figures for a run.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Break down by cohort tags, optionally only tags with this prefix.
        #[arg(long, num_args = 0..=1, default_missing_value = "")]
        cohorts: Option<String>,
    },
    /// Compare search ranks of sites classified llm against human ones.
    Ranktest {
        #[arg(long)]
        run: PathBuf,
    },
    /// Export per-group empirical CDFs of page scores as CSV.
    Cdf {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        group_by: GroupBy,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupBy {
    Label,
    Site,
    Truth,
}

impl From<GroupBy> for CdfGrouping {
    fn from(g: GroupBy) -> Self {
        match g {
            GroupBy::Label => CdfGrouping::Label,
            GroupBy::Site => CdfGrouping::Site,
            GroupBy::Truth => CdfGrouping::Truth,
        }
    }
}

/// Bad input from the user: flags, config, manifest or model files.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

trait ConfigContext<T> {
    fn config_err(self) -> anyhow::Result<T>;
}

impl<T, E: Into<anyhow::Error>> ConfigContext<T> for Result<T, E> {
    fn config_err(self) -> anyhow::Result<T> {
        self.map_err(|e| ConfigError(e.into()).into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<ConfigError>() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Run {
            manifest,
            out,
            config,
            stub_scorer,
            parallelism,
            model,
        } => cmd_run(
            &manifest,
            &out,
            config.as_deref(),
            stub_scorer,
            parallelism,
            model,
        ),
        Command::Train {
            features,
            labels,
            model,
        } => cmd_train(&features, &labels, &model),
        Command::Eval { train, test } => cmd_eval(&train, &test),
        Command::Report { run, cohorts } => cmd_report(&run, cohorts.as_deref()),
        Command::Ranktest { run } => cmd_ranktest(&run),
        Command::Cdf { run, group_by } => cmd_cdf(&run, group_by),
    }
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_run(
    manifest_path: &Path,
    out: &Path,
    config_path: Option<&Path>,
    stub: bool,
    parallelism: usize,
    model_path: Option<PathBuf>,
) -> anyhow::Result<u8> {
    let text = fs::read_to_string(manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))
        .config_err()?;
    let mut manifest: RunManifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", manifest_path.display()))
        .config_err()?;
    if let Some(p) = config_path {
        let text = fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .config_err()?;
        manifest.config = RunConfig::from_toml(&text).config_err()?;
    }
    if stub {
        manifest.config.scorer.stub = true;
    }
    if let Some(p) = model_path {
        manifest.config.classifier.model_path = Some(p);
    }
    manifest.validate().config_err()?;
    if parallelism == 0 {
        return Err(ConfigError(anyhow!("--parallelism must be at least 1")).into());
    }
    let model_path = manifest
        .config
        .classifier
        .model_path
        .clone()
        .ok_or_else(|| {
            ConfigError(anyhow!(
                "no model given; pass --model or set classifier.model_path"
            ))
        })?;
    let model = load_model::<f64>(&model_path)
        .with_context(|| format!("loading model {}", model_path.display()))
        .config_err()?;

    let pipeline =
        Pipeline::from_config(manifest.config.clone(), Arc::new(UreqClient::new()), model)
            .config_err()?;
    if !manifest.config.scorer.stub {
        pipeline
            .scorer()
            .health_check()
            .context("scoring service health check")?;
    }

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        if let Err(e) = ctrlc::set_handler(move || {
            log::warn!("interrupt received; finishing sites in flight");
            stop.store(true, Ordering::SeqCst);
        }) {
            log::warn!("cannot install interrupt handler: {e}");
        }
    }
    let outcome = run_batch(
        &pipeline,
        &manifest,
        out,
        &BatchOptions {
            parallelism,
            stop: Some(stop),
        },
    )
    .map_err(|e| match e {
        llmsite::study::StudyError::Config(_) | llmsite::study::StudyError::DuplicateSiteId(_) => {
            ConfigError(e.into()).into()
        }
        other => anyhow::Error::from(other),
    })?;

    let classified = outcome.results.iter().filter(|r| r.is_classified()).count();
    log::info!(
        "{} of {} sites done ({} reused, {} classified, {} failed)",
        outcome.results.len(),
        manifest.sites.len(),
        outcome.reused,
        classified,
        outcome.failed.len()
    );
    for (site, err) in &outcome.failed {
        log::error!("{site}: {err}");
    }
    if outcome.stopped {
        log::warn!("run stopped early; rerun the same command to resume");
    }
    Ok(if outcome.has_failures() || outcome.stopped {
        EXIT_PARTIAL
    } else {
        0
    })
}

#[derive(Deserialize)]
struct LabelRow {
    site_id: String,
    label: Label,
}

fn read_labels(path: &Path) -> anyhow::Result<HashMap<String, Label>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut labels = HashMap::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row?;
        if labels.insert(row.site_id.clone(), row.label).is_some() {
            bail!("site {} labeled twice", row.site_id);
        }
    }
    Ok(labels)
}

/// Reads a JSONL file of `SiteFeatures` or `SiteVerdict` records.
fn read_features(path: &Path) -> anyhow::Result<Vec<SiteFeatures>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let value: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?;
        let features = if value.get("deciles").is_some() {
            serde_json::from_value::<SiteFeatures>(value)
        } else {
            serde_json::from_value::<SiteVerdict>(value).map(|v| v.features)
        };
        out.push(features.with_context(|| format!("line {}", i + 1))?);
    }
    Ok(out)
}

fn dataset_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_train(
    feature_paths: &[PathBuf],
    labels_path: &Path,
    model_path: &Path,
) -> anyhow::Result<u8> {
    let labels = read_labels(labels_path)
        .with_context(|| format!("reading {}", labels_path.display()))
        .config_err()?;
    let mut features = Vec::new();
    let mut ids = Vec::new();
    for p in feature_paths {
        features.extend(
            read_features(p)
                .with_context(|| format!("reading {}", p.display()))
                .config_err()?,
        );
        ids.push(dataset_id(p));
    }
    let site_labels = features
        .iter()
        .map(|f| {
            labels
                .get(&f.site_id)
                .copied()
                .ok_or_else(|| ConfigError(anyhow!("no label for site {}", f.site_id)).into())
        })
        .collect::<anyhow::Result<Vec<Label>>>()?;
    let model = train(&features, &site_labels, &TrainConfig::default(), &ids).config_err()?;
    save_model(&model, model_path)?;
    log::info!(
        "trained on {} sites from {}; model written to {}",
        features.len(),
        ids.join(", "),
        model_path.display()
    );
    Ok(0)
}

/// A dataset JSON file, or a run directory whose manifest carries labels.
fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    if !path.is_dir() {
        let text = fs::read_to_string(path)?;
        return Ok(serde_json::from_str(&text)?);
    }
    let files = RunFiles::new(path);
    let manifest = files.load_manifest()?;
    let truth: HashMap<&str, Label> = manifest
        .sites
        .iter()
        .filter_map(|s| s.label.known().map(|l| (s.site_id.as_str(), l)))
        .collect();
    let sites = files
        .load_results()?
        .into_iter()
        .filter_map(|r| {
            let label = *truth.get(r.site_id.as_str())?;
            r.verdict.map(|v| LabeledSite {
                features: v.features,
                label,
            })
        })
        .collect();
    Ok(Dataset::new(manifest.run_id, sites))
}

fn cmd_eval(train_path: &Path, test_path: &Path) -> anyhow::Result<u8> {
    let a = load_dataset(train_path)
        .with_context(|| format!("loading {}", train_path.display()))
        .config_err()?;
    let b = load_dataset(test_path)
        .with_context(|| format!("loading {}", test_path.display()))
        .config_err()?;
    let metrics = evaluate_ood(&a, &b, &TrainConfig::default()).config_err()?;
    print_json(&metrics)?;
    Ok(0)
}

fn load_run(dir: &Path) -> anyhow::Result<(RunManifest, Vec<SiteResult>)> {
    let files = RunFiles::new(dir);
    let manifest = files.load_manifest().config_err()?;
    let results = files.load_results().config_err()?;
    Ok((manifest, results))
}

fn cmd_report(dir: &Path, cohorts: Option<&str>) -> anyhow::Result<u8> {
    let (manifest, results) = load_run(dir)?;
    let report = prevalence_report(&results, cohorts, manifest.config.report.borderline_band);
    let path = RunFiles::new(dir).report();
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    print_json(&report)?;
    Ok(0)
}

fn cmd_ranktest(dir: &Path) -> anyhow::Result<u8> {
    let (_, results) = load_run(dir)?;
    let (mut llm, mut human) = (Vec::new(), Vec::new());
    for r in &results {
        if let (Some(v), Some(rank)) = (&r.verdict, r.search_rank) {
            match v.label {
                Label::Llm => llm.push(f64::from(rank)),
                Label::Human => human.push(f64::from(rank)),
            }
        }
    }
    let test = rank_significance_test(&llm, &human)?;
    print_json(&test)?;
    Ok(0)
}

fn cmd_cdf(dir: &Path, group_by: GroupBy) -> anyhow::Result<u8> {
    let (_, results) = load_run(dir)?;
    for p in cdf_export(&results, group_by.into(), dir)? {
        println!("{}", p.display());
    }
    Ok(0)
}
