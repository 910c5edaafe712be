//! Command-line front end. [`run`] returns the process exit code:
//! 0 success, 1 failed check or runtime error, 2 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use serde::Serialize;

use crate::datasets::{augment::centre_view, folder::read_rgb, generate_shapes_dataset, save_image_folder, ImageBatch};
use crate::error::{AdiosError, Result};
use crate::eval::{compare_mask_schemes, evaluate, extract_features, Protocols};
use crate::gradsuite::{run_suite, SuiteConfig, DEFAULT_EPS, DEFAULT_TOL};
use crate::masks::{occlusion_forward, render_composite};
use crate::numerics::Tensor;
use crate::ssl::Objective;
use crate::trainer::{final_checkpoint_path, load_checkpoint, load_datasets, train_on, Checkpoint, Scheme, TrainConfig};

pub const THREADS_ENV: &str = "ADIOS_THREADS";
pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const RUN_COMPLETE: &str = "run_complete.json";

#[derive(Debug, Parser)]
#[command(name = "adios", version, about = "Adversarial occlusion self-supervised learning")]
pub struct Cli {
    /// Force single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic shapes dataset as an image folder.
    GenData(GenDataArgs),
    /// Train an encoder (and occluder) from a JSON config.
    Train(TrainArgs),
    /// Evaluate a checkpoint's frozen features.
    Eval(EvalArgs),
    /// Train and evaluate a grid of masking schemes.
    CompareMasks(CompareArgs),
    /// Check tape gradients of every loss against finite differences.
    Gradcheck(GradcheckArgs),
    /// Render learned masks as colour composites.
    ExportMasks(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1024)]
    pub count: usize,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 4)]
    pub max_objects: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `section.key=value`, applied in order.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Held-out image folder; defaults to the checkpoint config's test split.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training image folder for probes; defaults to the checkpoint config's data.
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    /// Comma-separated: knn, linear, clustering, multilabel, all.
    #[arg(long, default_value = "all")]
    pub protocol: String,
    /// Output CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "adios,none,mae,beit,gt_object,fg_bg,box,shuffled_gt")]
    pub schemes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "simclr")]
    pub objectives: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A directory of PNGs, or an image folder with an `images/` subdirectory.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Accepted and ignored; no CRF post-processing is implemented.
    #[arg(long)]
    pub crf: bool,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub threads: usize,
    pub requested_threads: Option<String>,
    pub strict: bool,
    pub started_unix: u64,
    pub outputs: Vec<PathBuf>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Effective thread count. All tensor kernels run on the calling thread, so
/// this is 1 in every mode; the request is recorded for the manifest.
pub fn thread_count(strict: bool) -> (usize, Option<String>) {
    let requested = std::env::var(THREADS_ENV).ok();
    if let Some(r) = &requested {
        if r.parse::<usize>().map_or(true, |n| n == 0) {
            warn!("{THREADS_ENV}={r:?} is not a positive integer; ignored");
        }
    }
    let _ = strict;
    (1, requested)
}

fn load_config(args: &ConfigArgs) -> Result<TrainConfig> {
    match &args.config {
        Some(p) => {
            if !p.exists() {
                return Err(AdiosError::Config(format!("config file {} does not exist", p.display())));
            }
            TrainConfig::load(p, &args.overrides)
        }
        None => TrainConfig::from_value(serde_json::json!({}), &args.overrides),
    }
}

fn ensure_empty_or_forced(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| AdiosError::io(dir, e))?.next().is_some();
        if non_empty && !force {
            return Err(AdiosError::Config(format!("{} exists and is not empty; pass --force to overwrite", dir.display())));
        }
    }
    fs::create_dir_all(dir).map_err(|e| AdiosError::io(dir, e))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    fs::write(path, text).map_err(|e| AdiosError::io(path, e))
}

fn open_checkpoint(path: &Path) -> Result<Checkpoint> {
    let dir = if path.join(crate::trainer::checkpoint::MANIFEST).exists() { path.to_path_buf() } else { final_checkpoint_path(path) };
    if !dir.join(crate::trainer::checkpoint::MANIFEST).exists() {
        return Err(AdiosError::Config(format!("no checkpoint at {}", path.display())));
    }
    load_checkpoint(&dir)
}

fn cmd_gen_data(a: &GenDataArgs) -> Result<i32> {
    ensure_empty_or_forced(&a.out, a.force)?;
    let data = generate_shapes_dataset(a.count, a.size, a.max_objects, a.seed)?;
    save_image_folder(&data, &a.out)?;
    info!("wrote {} samples to {}", data.len(), a.out.display());
    Ok(0)
}

fn cmd_train(a: &TrainArgs, strict: bool) -> Result<i32> {
    let cfg = load_config(&a.config)?;
    ensure_empty_or_forced(&a.out, a.force)?;
    let (threads, requested) = thread_count(strict);
    let ckpt = final_checkpoint_path(&a.out);
    let manifest = RunManifest {
        command: "train".into(),
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.to_value(),
        seed: cfg.seed,
        threads,
        requested_threads: requested,
        strict,
        started_unix: unix_now(),
        outputs: vec![ckpt.clone(), a.out.join(crate::trainer::METRICS_FILE)],
    };
    write_json(&a.out.join(RUN_MANIFEST), &manifest)?;
    let (data, _) = load_datasets(&cfg.data, cfg.data_seed())?;
    let outcome = train_on(&cfg, &data, Some(&a.out))?;
    write_json(
        &a.out.join(RUN_COMPLETE),
        &serde_json::json!({
            "finished_unix": unix_now(),
            "steps": outcome.state.step,
            "skipped_steps": outcome.skipped_steps,
            "collapse_warnings": outcome.collapse_warnings,
        }),
    )?;
    println!("checkpoint: {}", ckpt.display());
    Ok(0)
}

fn cmd_eval(a: &EvalArgs) -> Result<i32> {
    let protocols = Protocols::parse(&a.protocol)?;
    let ck = open_checkpoint(&a.checkpoint)?;
    let cfg = &ck.config;
    let (default_train, default_test) = match (&a.train_data, &a.data) {
        (Some(_), Some(_)) => (None, None),
        _ => {
            let (tr, te) = load_datasets(&cfg.data, cfg.data_seed())?;
            (Some(tr), te)
        }
    };
    let train = match &a.train_data {
        Some(p) => crate::datasets::load_image_folder(p)?,
        None => default_train.clone().expect("loaded above"),
    };
    let test = match &a.data {
        Some(p) => crate::datasets::load_image_folder(p)?,
        None => default_test.ok_or_else(|| AdiosError::Config("no held-out data: pass --data".into()))?,
    };
    let ftr = extract_features(cfg, &ck.state.encoder, &train)?;
    let fte = extract_features(cfg, &ck.state.encoder, &test)?;
    let metrics = evaluate(&ftr, &fte, &cfg.eval, cfg.seed, protocols)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| AdiosError::Data(e.to_string());
    w.write_record(["protocol", "metric", "value"]).map_err(err)?;
    for m in &metrics {
        w.write_record([m.protocol.as_str(), m.metric.as_str(), &m.value.to_string()]).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| AdiosError::Data(e.to_string()))?;
    match &a.out {
        Some(p) => fs::write(p, bytes).map_err(|e| AdiosError::io(p, e))?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(0)
}

fn cmd_compare(a: &CompareArgs) -> Result<i32> {
    let cfg = load_config(&a.config)?;
    let schemes = a.schemes.iter().map(|s| s.parse::<Scheme>()).collect::<Result<Vec<_>>>()?;
    let objectives = a.objectives.iter().map(|s| s.parse::<Objective>()).collect::<Result<Vec<_>>>()?;
    let report = compare_mask_schemes(&cfg, &schemes, &objectives, &a.seeds, Some(&a.out))?;
    let failed = report.cells.iter().filter(|c| c.outcome.is_err()).count();
    if failed > 0 {
        warn!("{failed} of {} cells failed; see the report", report.cells.len());
    }
    for r in &report.aggregate {
        println!("{:<12} {:<8} {:<16} {:.4} ± {:.4}", r.scheme.to_string(), r.objective.to_string(), r.metric, r.mean, r.std);
    }
    Ok(0)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    if !(a.tol > 0.0) {
        return Err(AdiosError::Config(format!("--tol {} must be positive", a.tol)));
    }
    let cfg = SuiteConfig { seed: a.seed, ..Default::default() };
    let reports = run_suite(&cfg, a.eps, a.tol)?;
    let mut ok = true;
    for r in &reports {
        let status = if r.pass { "PASS" } else { "FAIL" };
        match &r.failure {
            Some(f) => println!("{status} {:<24} error: {f}", r.name),
            None => println!("{status} {:<24} max_rel_err {:.3e} (tol {:.1e})", r.name, r.max_rel_err, r.tol),
        }
        ok &= r.pass;
    }
    Ok(if ok { 0 } else { 1 })
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let root = if dir.join("images").is_dir() { dir.join("images") } else { dir.to_path_buf() };
    if !root.is_dir() {
        return Err(AdiosError::Config(format!("{} is not a directory", dir.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&root)
        .map_err(|e| AdiosError::io(&root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(AdiosError::Data(format!("no PNG images in {}", root.display())));
    }
    Ok(files)
}

fn cmd_export_masks(a: &ExportArgs) -> Result<i32> {
    if a.crf {
        warn!("--crf is ignored: CRF post-processing is not implemented");
    }
    let ck = open_checkpoint(&a.checkpoint)?;
    let occ = ck
        .state
        .occluder
        .as_ref()
        .ok_or_else(|| AdiosError::Config(format!("checkpoint was trained with scheme {} and has no occluder", ck.config.trainer.scheme)))?;
    let files = list_pngs(&a.images)?;
    fs::create_dir_all(&a.out).map_err(|e| AdiosError::io(&a.out, e))?;
    let size = ck.config.model_size();
    for f in &files {
        let img = read_rgb(f)?;
        let shape = img.shape().to_vec();
        let batch = ImageBatch::from_images(Tensor::new(&[1, 3, shape[1], shape[2]], img.into_data())?)?;
        let view = centre_view(&batch, size);
        let masks = occlusion_forward(&ck.config.occluder, occ, &view.images)?;
        let composite = render_composite(&masks.masks[0]);
        let name = f.file_name().expect("listed file");
        let path = a.out.join(name);
        composite.save(&path).map_err(|e| AdiosError::Image { path: path.clone(), message: e.to_string() })?;
    }
    println!("wrote {} composites to {}", files.len(), a.out.display());
    Ok(0)
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<i32> {
    let (threads, _) = thread_count(cli.strict);
    if cli.strict {
        info!("strict mode: {threads} thread(s)");
    }
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a, cli.strict),
        Command::Eval(a) => cmd_eval(a),
        Command::CompareMasks(a) => cmd_compare(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::ExportMasks(a) => cmd_export_masks(a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            if e.is_usage() { 2 } else { 1 }
        }
    }
}
