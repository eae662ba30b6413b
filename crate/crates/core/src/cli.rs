//! `maskval` command line: `generate`, `quantify`, `evaluate`, `threshold`.
//!
//! Settings come from flags, then the TOML file given by `--config`, then
//! built-in defaults. The model directory falls back to `$MASKVAL_MODEL_DIR`
//! and then to `<input>/models`.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 data error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    self, demo_models, generate_benchmark, load_models, load_scene, scene::scene_to_json,
    BenchmarkConfig, SceneRecord, PRIMARY_STREAM, SECONDARY_STREAM,
};
use crate::ensemble::{quantify_streams, AddNormalization};
use crate::error::{Error, Result};
use crate::geometry::{ModelPoints, TriangleMesh};
use crate::maskval::{quantify_scene_with, AssociationMode, MaskValConfig};
use crate::metrics::{
    scores_at, sweep_curves, threshold_for_target, uniform_grid, EvalCurves, EvalImage,
    ImageCounts, ScoredEstimate, Scores, Threshold, DEFAULT_AP_TARGET, DEFAULT_ET_MAX,
    DEFAULT_ET_STEPS, DEFAULT_THETA_V,
};
use crate::renderer::Renderer;

pub const MODEL_DIR_ENV: &str = "MASKVAL_MODEL_DIR";
pub const MANIFEST: &str = "manifest.json";
pub const SCENES_DIR: &str = "scenes";
pub const MODELS_DIR: &str = "models";
pub const CURVES_CSV: &str = "curves.csv";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "maskval", version, about = "Pose uncertainty from rendered masks")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// TOML file with `[benchmark]`, `[maskval]`, `[ensemble]` and `[evaluate]` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic benchmark.
    Generate(GenerateArgs),
    /// Attach per-estimate uncertainties to every scene.
    Quantify(QuantifyArgs),
    /// Sweep error thresholds and write curves.csv and summary.json.
    Evaluate(EvaluateArgs),
    /// Print the largest uncertainty threshold meeting the AP target.
    Threshold(ThresholdArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Maskval,
    EnsembleAdd,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Maskval => "maskval",
            Method::EnsembleAdd => "ensemble-add",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_images: Option<usize>,
    #[arg(long)]
    pub min_objects: Option<usize>,
    #[arg(long)]
    pub max_objects: Option<usize>,
    /// Pose-noise factor of the secondary stream; 0 disables it.
    #[arg(long)]
    pub secondary_scale: Option<f64>,
    /// Directory of `<class>.ply` models; every PLY found is used.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Use the built-in box and can models instead of a model directory.
    #[arg(long)]
    pub demo_models: bool,
}

#[derive(Debug, Args)]
pub struct QuantifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Visibility below which certainty is scaled by it (default 0.8).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Render canvas size as a multiple of the image size (default 3).
    #[arg(long)]
    pub pad_factor: Option<usize>,
    /// Smallest IOU accepted as a greedy match (default 0.01).
    #[arg(long)]
    pub min_match_iou: Option<f64>,
    #[arg(long, value_enum)]
    pub association_mode: Option<AssociationArg>,
    /// ADD mapped to u = 0, meters (default 0).
    #[arg(long)]
    pub d_min: Option<f64>,
    /// ADD mapped to u = 1, meters (default 0.05).
    #[arg(long)]
    pub d_max: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AssociationArg {
    Greedy,
    TwoStage,
}

#[derive(Debug, Args)]
pub struct EvalOpts {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Ground truth less visible than this is not counted (default 0.85).
    #[arg(long)]
    pub theta_v: Option<f64>,
    /// Precision the uncertainty threshold must reach (default 0.99).
    #[arg(long)]
    pub ap_target: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub opts: EvalOpts,
    #[arg(long)]
    pub out: PathBuf,
    /// Largest MDD threshold of the sweep, meters (default 0.03).
    #[arg(long)]
    pub e_t_max: Option<f64>,
    /// Number of sweep points including 0 (default 61).
    #[arg(long)]
    pub e_t_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub opts: EvalOpts,
    /// MDD threshold, meters.
    #[arg(long)]
    pub e_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub theta_v: f64,
    pub ap_target: f64,
    pub e_t_max: f64,
    pub e_t_steps: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            theta_v: DEFAULT_THETA_V,
            ap_target: DEFAULT_AP_TARGET,
            e_t_max: DEFAULT_ET_MAX,
            e_t_steps: DEFAULT_ET_STEPS,
        }
    }
}

impl EvaluateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ap_target > 0.0 && self.ap_target <= 1.0) {
            return Err(Error::InvalidConfig(format!("ap_target {} outside (0, 1]", self.ap_target)));
        }
        if !(0.0..=1.0).contains(&self.theta_v) {
            return Err(Error::InvalidConfig(format!("theta_v {} outside [0, 1]", self.theta_v)));
        }
        uniform_grid(0.0, self.e_t_max, self.e_t_steps).map(|_| ())
    }
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model_dir: Option<PathBuf>,
    pub benchmark: BenchmarkConfig,
    pub maskval: MaskValConfig,
    pub ensemble: AddNormalization,
    pub evaluate: EvaluateConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_)
        | Error::MissingModel(_)
        | Error::Placement { .. }
        | Error::Empty(_)
        | Error::Io { .. } => 2,
        _ => 3,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

/// Writes `(relative path, contents)` pairs below `root` and returns their
/// digests in the given order.
fn write_files(root: &Path, files: &[(String, String)]) -> Result<Vec<FileDigest>> {
    let mut out = Vec::with_capacity(files.len());
    for (rel, body) in files {
        let path = root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        out.push(FileDigest {
            path: rel.clone(),
            sha256: sha256_hex(body.as_bytes()),
        });
    }
    Ok(out)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    std::fs::write(path, &s).map_err(|e| Error::io(path, e))?;
    Ok(s)
}

fn prepare_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn scene_file_name(scene: &SceneRecord) -> String {
    format!("{SCENES_DIR}/{}.json", scene.image_id)
}

fn model_files(models: &BTreeMap<String, TriangleMesh>) -> Vec<(String, String)> {
    models
        .iter()
        .map(|(c, m)| (format!("{MODELS_DIR}/{c}.ply"), dataset::ply::write_ply(m)))
        .collect()
}

/// Classes of every `*.ply` file in `dir`, sorted.
fn classes_in(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut classes = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "ply") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                classes.push(stem.to_string());
            }
        }
    }
    classes.sort();
    Ok(classes)
}

fn resolve_model_dir(flag: Option<&Path>, cfg: &RunConfig, input: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = flag.or(cfg.model_dir.as_deref()) {
        return Ok(p.to_path_buf());
    }
    if let Some(p) = std::env::var_os(MODEL_DIR_ENV) {
        return Ok(PathBuf::from(p));
    }
    if let Some(p) = input.map(|i| i.join(MODELS_DIR)).filter(|p| p.is_dir()) {
        return Ok(p);
    }
    Err(Error::InvalidConfig(format!(
        "no model directory: pass --model-dir or set {MODEL_DIR_ENV}"
    )))
}

/// Loads every scene under `<dir>/scenes`, ordered by file name.
pub fn load_scenes(dir: &Path) -> Result<Vec<SceneRecord>> {
    let scenes_dir = dir.join(SCENES_DIR);
    let entries = std::fs::read_dir(&scenes_dir).map_err(|e| Error::io(&scenes_dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&scenes_dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty(format!("no scene files in {}", scenes_dir.display())));
    }
    paths.par_iter().map(load_scene).collect()
}

fn scene_classes(scenes: &[SceneRecord]) -> BTreeSet<String> {
    scenes
        .iter()
        .flat_map(|s| s.classes().map(str::to_string))
        .collect()
}

fn model_points(models: &BTreeMap<String, TriangleMesh>) -> Result<BTreeMap<String, ModelPoints>> {
    models
        .iter()
        .map(|(c, m)| Ok((c.clone(), ModelPoints::from_mesh(m)?)))
        .collect()
}

#[derive(Serialize)]
struct GenerateManifest<'a> {
    command: &'static str,
    seed: u64,
    config: &'a BenchmarkConfig,
    files: Vec<FileDigest>,
}

/// Writes `scenes/*.json`, `models/*.ply` and `manifest.json` into `out`.
pub fn cmd_generate(args: &GenerateArgs, cfg: &RunConfig) -> Result<Vec<SceneRecord>> {
    let mut bench = cfg.benchmark.clone();
    if let Some(s) = args.seed {
        bench.seed = s;
    }
    if let Some(n) = args.n_images {
        bench.n_images = n;
    }
    if let Some(n) = args.min_objects {
        bench.objects_per_image.0 = n;
    }
    if let Some(n) = args.max_objects {
        bench.objects_per_image.1 = n;
    }
    if let Some(s) = args.secondary_scale {
        bench.secondary_scale = s;
    }
    bench.validate()?;

    let models = if args.demo_models {
        demo_models()
    } else {
        let dir = resolve_model_dir(args.model_dir.as_deref(), cfg, None)?;
        let classes = classes_in(&dir)?;
        if classes.is_empty() {
            return Err(Error::Empty(format!("no .ply models in {}", dir.display())));
        }
        load_models(&dir, classes.iter().map(String::as_str))?
    };

    let scenes = generate_benchmark(&models, &bench)?;
    prepare_out_dir(&args.out)?;
    let mut files = model_files(&models);
    files.extend(scenes.iter().map(|s| (scene_file_name(s), scene_to_json(s))));
    let digests = write_files(&args.out, &files)?;
    write_json(
        &args.out.join(MANIFEST),
        &GenerateManifest {
            command: "generate",
            seed: bench.seed,
            config: &bench,
            files: digests,
        },
    )?;
    Ok(scenes)
}

#[derive(Serialize)]
struct QuantifyManifest<'a> {
    command: &'static str,
    method: Method,
    maskval: &'a MaskValConfig,
    ensemble: &'a AddNormalization,
    files: Vec<FileDigest>,
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Reads `<input>/scenes`, attaches uncertainties to the primary stream and
/// writes the augmented scenes, the models used and a manifest to `out`.
pub fn cmd_quantify(args: &QuantifyArgs, cfg: &RunConfig) -> Result<Vec<SceneRecord>> {
    let mut mv = cfg.maskval.clone();
    if let Some(a) = args.alpha {
        mv.alpha = a;
    }
    if let Some(p) = args.pad_factor {
        mv.pad_factor = p;
    }
    if let Some(m) = args.min_match_iou {
        mv.min_match_iou = m;
    }
    if let Some(m) = args.association_mode {
        mv.association_mode = match m {
            AssociationArg::Greedy => AssociationMode::Greedy,
            AssociationArg::TwoStage => AssociationMode::TwoStage,
        };
    }
    mv.validate()?;
    let mut norm = cfg.ensemble;
    if let Some(d) = args.d_min {
        norm.d_min = d;
    }
    if let Some(d) = args.d_max {
        norm.d_max = d;
    }
    norm.validate()?;
    if same_dir(&args.input, &args.out) {
        return Err(Error::InvalidConfig("--out must differ from --input".into()));
    }

    let mut scenes = load_scenes(&args.input)?;
    let model_dir = resolve_model_dir(args.model_dir.as_deref(), cfg, Some(&args.input))?;
    let classes = scene_classes(&scenes);
    let models = load_models(&model_dir, classes.iter().map(String::as_str))?;

    match args.method {
        Method::Maskval => {
            scenes.par_iter_mut().try_for_each_init(
                || Renderer::new(mv.pad_factor),
                |renderer, scene| -> Result<()> {
                    let renderer = renderer.as_mut().map_err(|e| Error::InvalidConfig(e.to_string()))?;
                    let estimates = scene.stream_estimates(PRIMARY_STREAM);
                    let report = quantify_scene_with(
                        renderer,
                        &estimates,
                        &scene.segmentations,
                        &models,
                        &scene.camera,
                        &mv,
                    )?;
                    if let Some(list) = scene.streams.get_mut(PRIMARY_STREAM) {
                        for (e, r) in list.iter_mut().zip(report.estimates) {
                            e.maskval = Some(r);
                        }
                    }
                    Ok(())
                },
            )?;
        }
        Method::EnsembleAdd => {
            if let Some(s) = scenes.iter().find(|s| !s.streams.contains_key(SECONDARY_STREAM)) {
                return Err(Error::InvalidConfig(format!(
                    "ensemble-add needs a `{SECONDARY_STREAM}` estimate stream; scene {} has none",
                    s.image_id
                )));
            }
            let points = model_points(&models)?;
            scenes.par_iter_mut().try_for_each(|scene| -> Result<()> {
                let primary = scene.stream_estimates(PRIMARY_STREAM);
                let secondary = scene.stream_estimates(SECONDARY_STREAM);
                let out = quantify_streams(&primary, &secondary, &points, &norm)?;
                if let Some(list) = scene.streams.get_mut(PRIMARY_STREAM) {
                    for (e, r) in list.iter_mut().zip(out) {
                        e.ensemble_add = Some(r);
                    }
                }
                Ok(())
            })?;
        }
    }

    prepare_out_dir(&args.out)?;
    let mut files = model_files(&models);
    files.extend(scenes.iter().map(|s| (scene_file_name(s), scene_to_json(s))));
    let digests = write_files(&args.out, &files)?;
    write_json(
        &args.out.join(MANIFEST),
        &QuantifyManifest {
            command: "quantify",
            method: args.method,
            maskval: &mv,
            ensemble: &norm,
            files: digests,
        },
    )?;
    Ok(scenes)
}

fn eval_config(opts: &EvalOpts, cfg: &RunConfig) -> EvaluateConfig {
    let mut ec = cfg.evaluate.clone();
    if let Some(t) = opts.theta_v {
        ec.theta_v = t;
    }
    if let Some(a) = opts.ap_target {
        ec.ap_target = a;
    }
    ec
}

/// Scored primary-stream estimates of one scene for `method`.
pub fn scored_estimates(scene: &SceneRecord, method: Method) -> Result<Vec<ScoredEstimate>> {
    scene
        .stream(PRIMARY_STREAM)
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let u = match method {
                Method::Maskval => e.maskval.as_ref().map(|m| m.uncertainty),
                Method::EnsembleAdd => e.ensemble_add.as_ref().map(|m| m.uncertainty),
            };
            let uncertainty = u.ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "scene {} estimate {i} has no {} uncertainty; run `quantify --method {}` first",
                    scene.image_id,
                    method.name(),
                    method.name()
                ))
            })?;
            Ok(ScoredEstimate {
                pose: e.estimate.pose,
                class: e.estimate.class.clone(),
                uncertainty,
                instance_id: e.estimate.instance_id,
            })
        })
        .collect()
}

fn eval_images(opts: &EvalOpts, cfg: &RunConfig, ec: &EvaluateConfig) -> Result<Vec<EvalImage>> {
    ec.validate()?;
    let scenes = load_scenes(&opts.input)?;
    if scenes.iter().all(|s| s.stream(PRIMARY_STREAM).is_empty()) {
        return Err(Error::Empty("the scenes contain no pose estimates".into()));
    }
    let model_dir = resolve_model_dir(opts.model_dir.as_deref(), cfg, Some(&opts.input))?;
    let classes = scene_classes(&scenes);
    let points = model_points(&load_models(&model_dir, classes.iter().map(String::as_str))?)?;
    scenes
        .par_iter()
        .map(|s| {
            let est = scored_estimates(s, opts.method)?;
            EvalImage::new(&est, &s.ground_truth, &points, ec.theta_v)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub e_t: f64,
    pub u_t: Threshold,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp_unfiltered: usize,
    pub n_gt: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub n_images: usize,
    pub n_estimates: usize,
    pub theta_v: f64,
    pub ap_target: f64,
    pub auc_ar: f64,
    pub auc_ar_star: f64,
    /// `null` when the correlation is undefined.
    pub spearman_rho: Option<f64>,
    pub spearman_pairs: usize,
    pub unassociated_estimates: usize,
    /// Counts summed over images at the largest error threshold.
    pub totals: Totals,
    pub infeasible_e_t: Vec<f64>,
}

/// Writes `curves.csv` and `summary.json` into `args.out`.
pub fn cmd_evaluate(args: &EvaluateArgs, cfg: &RunConfig) -> Result<(EvalCurves, Summary)> {
    let mut ec = eval_config(&args.opts, cfg);
    if let Some(m) = args.e_t_max {
        ec.e_t_max = m;
    }
    if let Some(n) = args.e_t_steps {
        ec.e_t_steps = n;
    }
    let images = eval_images(&args.opts, cfg, &ec)?;
    let grid = uniform_grid(0.0, ec.e_t_max, ec.e_t_steps)?;
    let curves = sweep_curves(&images, &grid, ec.ap_target)?;

    let last = curves.points.last().expect("grid has >= 2 points");
    let counts: Vec<ImageCounts> = images
        .iter()
        .map(|im| im.counts(last.e_t, last.u_t.filter()))
        .collect();
    let totals = Totals {
        e_t: last.e_t,
        u_t: last.u_t,
        tp: counts.iter().map(|c| c.tp_u).sum(),
        fp: counts.iter().map(|c| c.fp_u).sum(),
        fn_: counts.iter().map(|c| c.fn_u).sum(),
        tp_unfiltered: counts.iter().map(|c| c.tp_all).sum(),
        n_gt: counts.iter().map(|c| c.n_gt).sum(),
    };
    let summary = Summary {
        method: args.opts.method,
        n_images: images.len(),
        n_estimates: images.iter().map(EvalImage::n_estimates).sum(),
        theta_v: ec.theta_v,
        ap_target: ec.ap_target,
        auc_ar: curves.auc_ar,
        auc_ar_star: curves.auc_ar_star,
        spearman_rho: curves.spearman_rho,
        spearman_pairs: curves.spearman_pairs,
        unassociated_estimates: curves.unassociated_estimates,
        totals,
        infeasible_e_t: curves.infeasible_points(),
    };

    prepare_out_dir(&args.out)?;
    let csv = args.out.join(CURVES_CSV);
    std::fs::write(&csv, curves.to_csv()).map_err(|e| Error::io(&csv, e))?;
    write_json(&args.out.join(SUMMARY_JSON), &summary)?;
    Ok((curves, summary))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdReport {
    pub e_t: f64,
    pub u_t: Threshold,
    pub scores: Scores,
}

impl std::fmt::Display for ThresholdReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| v.to_string());
        match self.u_t {
            Threshold::Feasible(u) => writeln!(f, "u_T {u}")?,
            Threshold::Infeasible => writeln!(f, "u_T INFEASIBLE")?,
        }
        writeln!(f, "e_t {}", self.e_t)?;
        writeln!(f, "AP {}", opt(self.scores.ap))?;
        writeln!(f, "AR {}", opt(self.scores.ar))?;
        write!(f, "ARU {}", opt(self.scores.aru))
    }
}

pub fn cmd_threshold(args: &ThresholdArgs, cfg: &RunConfig) -> Result<ThresholdReport> {
    let ec = eval_config(&args.opts, cfg);
    if !(args.e_t.is_finite() && args.e_t >= 0.0) {
        return Err(Error::InvalidConfig(format!("e_t must be >= 0, got {}", args.e_t)));
    }
    let images = eval_images(&args.opts, cfg, &ec)?;
    let u_t = threshold_for_target(&images, args.e_t, ec.ap_target)?;
    Ok(ThresholdReport {
        e_t: args.e_t,
        u_t,
        scores: scores_at(&images, args.e_t, u_t.filter()),
    })
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Generate(a) => {
            let scenes = cmd_generate(a, &cfg)?;
            println!("wrote {} scenes to {}", scenes.len(), a.out.display());
        }
        Command::Quantify(a) => {
            let scenes = cmd_quantify(a, &cfg)?;
            println!("quantified {} scenes into {}", scenes.len(), a.out.display());
        }
        Command::Evaluate(a) => {
            let (_, s) = cmd_evaluate(a, &cfg)?;
            let rho = s.spearman_rho.map_or("undefined".to_string(), |r| format!("{r:.4}"));
            println!("AUC AR {:.3}  Spearman {rho}", s.auc_ar);
        }
        Command::Threshold(a) => println!("{}", cmd_threshold(a, &cfg)?),
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(Error::InvalidConfig("--jobs must be >= 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Error::InvalidConfig(format!("thread pool: {e}"))),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
