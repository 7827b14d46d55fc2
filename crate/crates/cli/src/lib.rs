//! Command implementations behind the `posekit` binary.

pub mod error;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use posekit::anchors::{add_upper_body_variants, kmeans_anchors, KMeansConfig};
use posekit::eval::{EvalConfig, EvalReport, Protocol};
use posekit::ppi::{nms, ppi, Detection, PoseProposal, PpiParams};
use posekit::pseudo_gt::{build_library, nn_annotate, write_binary, MoCapCorpus};
use posekit::schema::{
    parse, AnnotatedData, DatasetData, DetectionsData, Envelope, Payload, Poses2dData, ProposalsData, SceneDetections,
    SceneProposals, ScenesData,
};
use posekit::synth::{generate_scenes, simulate_proposals, CameraModel, ProposalNoiseModel, Scene, SceneConfig};
use posekit::toy::{synthesize_dataset, train, DatasetConfig, ToyConfig};
use posekit::{AnchorSet, PoseSpec, SkeletonModel};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use error::{CliError, CliResult};
use report::{emit_report, losses_csv, report_rows, write_file, Format};

#[derive(Debug, Parser)]
#[command(name = "posekit", version, about = "Multi-person 2D-3D pose toolkit on synthetic scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic multi-person scenes.
    Gen(GenArgs),
    /// Cluster fully visible scene persons into anchor poses.
    Cluster(ClusterArgs),
    /// Complete 2D poses and lift them to 3D from a projected mocap library.
    Annotate(AnnotateArgs),
    /// Simulate detector proposals for scenes.
    Simulate(SimulateArgs),
    /// Train the linear classification and regression model.
    TrainToy(TrainToyArgs),
    /// Integrate (or suppress) proposals into final detections.
    Ppi(PpiArgs),
    /// Evaluate detections against scene ground truth.
    Eval(EvalArgs),
    /// Render a JSON report as CSV tables and SVG curves.
    Report(ReportArgs),
    /// gen, cluster, simulate, ppi/nms and eval in one run.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CameraArg {
    Orthographic,
    WeakPerspective,
}

impl From<CameraArg> for CameraModel {
    fn from(c: CameraArg) -> Self {
        match c {
            CameraArg::Orthographic => CameraModel::Orthographic,
            CameraArg::WeakPerspective => CameraModel::WeakPerspective,
        }
    }
}

/// Inclusive range written `A..B` (or a single number).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PersonRange(pub usize, pub usize);

impl std::str::FromStr for PersonRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
        match s.split_once("..") {
            Some((a, b)) => Ok(PersonRange(num(a)?, num(b.trim_start_matches('='))?)),
            None => {
                let n = num(s)?;
                Ok(PersonRange(n, n))
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 100)]
    pub scenes: usize,
    #[arg(long, default_value = "1..5")]
    pub persons: PersonRange,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "h13")]
    pub spec: String,
    #[arg(long, value_enum, default_value = "orthographic")]
    pub camera: CameraArg,
    /// Probability that a person is cut off by the bottom image edge.
    #[arg(long, default_value_t = 0.15)]
    pub truncation: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the visible 2D poses of every person.
    #[arg(long)]
    pub poses2d_out: Option<PathBuf>,
    /// Also write a motion-capture style corpus of sampled 3D poses.
    #[arg(long)]
    pub mocap_out: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub mocap_poses: usize,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Scenes file; only persons with every joint visible are clustered.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Skip the upper-body copy of each anchor.
    #[arg(long)]
    pub no_upper_body: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub views: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the projected library in the PPL1 binary format.
    #[arg(long)]
    pub library_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub anchors: PathBuf,
    /// Noise preset: `default` or `zero`.
    #[arg(long, default_value = "default")]
    pub noise: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a labeled feature dataset for `train-toy`.
    #[arg(long)]
    pub dataset_out: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub feature_dim: usize,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub anchors: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr_early: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr_late: f64,
    #[arg(long, default_value_t = 200)]
    pub stage_switch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train a second regression pass on top of the first.
    #[arg(long)]
    pub two_pass: bool,
    /// CSV of per-iteration losses (`iter,loss_cls,loss_reg,total`).
    #[arg(long)]
    pub losses_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectMethod {
    Ppi,
    Nms,
}

impl SelectMethod {
    pub fn name(self) -> &'static str {
        match self {
            SelectMethod::Ppi => "ppi",
            SelectMethod::Nms => "nms",
        }
    }

    pub fn run(self, proposals: &[PoseProposal], params: &PpiParams, spec: &PoseSpec) -> CliResult<Vec<Detection>> {
        Ok(match self {
            SelectMethod::Ppi => ppi(proposals, params, Some(spec))?,
            SelectMethod::Nms => nms(proposals, params, Some(spec))?,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct PpiOptions {
    /// 3D mode threshold in meters (125 mm).
    #[arg(long, default_value_t = 0.125)]
    pub t3d: f64,
    /// Box IoU for grouping proposals.
    #[arg(long, default_value_t = 0.12)]
    pub iou: f64,
    /// Out-of-box penalty scale in pixels (25 px).
    #[arg(long, default_value_t = 25.0)]
    pub sigma_b: f64,
    /// Build grouping boxes from head and torso joints only.
    #[arg(long)]
    pub head_torso: bool,
    /// Drop proposals whose rescored value is below this.
    #[arg(long)]
    pub min_score: Option<f64>,
}

impl PpiOptions {
    pub fn params(&self) -> PpiParams {
        PpiParams {
            iou_threshold: self.iou,
            t3d: self.t3d,
            sigma_b: self.sigma_b,
            min_score: self.min_score,
            head_torso_boxes: self.head_torso,
        }
    }
}

#[derive(Debug, Args)]
pub struct PpiArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "ppi")]
    pub method: SelectMethod,
    #[command(flatten)]
    pub options: PpiOptions,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Single,
    Multi,
    #[value(name = "3d")]
    ThreeD,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Single => Protocol::Single,
            ProtocolArg::Multi => Protocol::Multi,
            ProtocolArg::ThreeD => Protocol::ThreeD,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detections file; repeat for several methods.
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth scenes file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Raw proposals, enabling the upper-bound selection.
    #[arg(long)]
    pub proposals: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "3d")]
    pub protocol: ProtocolArg,
    /// `metric,value` table for the chosen protocol.
    #[arg(long)]
    pub out: PathBuf,
    /// `series,threshold,rate` detection-rate curves.
    #[arg(long)]
    pub curves_out: Option<PathBuf>,
    #[arg(long)]
    pub svg_out: Option<PathBuf>,
    /// Full report for `report`.
    #[arg(long)]
    pub report_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv,svg")]
    pub format: Vec<Format>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "default")]
    pub noise: String,
    #[arg(long, default_value_t = 20)]
    pub scenes: usize,
    #[arg(long, default_value = "1..5")]
    pub persons: PersonRange,
    /// Scenes generated only for clustering anchors.
    #[arg(long, default_value_t = 100)]
    pub train_scenes: usize,
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[command(flatten)]
    pub options: PpiOptions,
    #[arg(long, default_value = "pipeline-out")]
    pub out_dir: PathBuf,
}

/// Seed of the anchor-training scenes, kept apart from the evaluation scenes.
pub fn train_seed(seed: u64) -> u64 {
    seed ^ 0x5EED_A9C4_0000_0001
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_artifact<T: Payload>(path: &Path) -> CliResult<Envelope<T>> {
    parse(&read_text(path)?).map_err(|e| CliError::schema(path, e))
}

fn write_artifact<T: Payload>(path: &Path, seed: Option<u64>, config: impl Serialize, data: T) -> CliResult<()> {
    write_file(path, &Envelope::new(seed, config, data).to_json())
}

fn spec_of(name: &str) -> CliResult<PoseSpec> {
    Ok(PoseSpec::by_name(name)?)
}

pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Gen(a) => gen(&a),
        Command::Cluster(a) => cluster(&a),
        Command::Annotate(a) => annotate(&a),
        Command::Simulate(a) => simulate(&a),
        Command::TrainToy(a) => train_toy(&a),
        Command::Ppi(a) => ppi_cmd(&a),
        Command::Eval(a) => eval(&a),
        Command::Report(a) => report_cmd(&a),
        Command::Pipeline(a) => pipeline(&a),
    }
}

fn scene_config(a: &GenArgs) -> SceneConfig {
    SceneConfig {
        spec: a.spec.clone(),
        persons_min: a.persons.0,
        persons_max: a.persons.1,
        camera_model: a.camera.into(),
        truncation_prob: a.truncation,
        ..SceneConfig::default()
    }
}

pub fn gen(a: &GenArgs) -> CliResult<String> {
    let config = scene_config(a);
    let scenes = generate_scenes(&config, a.scenes, a.seed)?;
    let persons: usize = scenes.iter().map(|s| s.persons.len()).sum();
    let record = json!({ "scene": &config, "count": a.scenes });
    if let Some(p) = &a.poses2d_out {
        let poses = scenes.iter().flat_map(|s| s.persons.iter().map(|q| q.pose2d.clone())).collect();
        write_artifact(p, Some(a.seed), &record, Poses2dData { spec: a.spec.clone(), poses })?;
    }
    if let Some(p) = &a.mocap_out {
        let model = SkeletonModel::for_spec(&a.spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        rng.set_stream(u64::MAX);
        let poses = (0..a.mocap_poses).map(|_| model.sample_with(&mut rng)).collect();
        let corpus = MoCapCorpus { spec: a.spec.clone(), poses, tags: Vec::new() };
        write_artifact(p, Some(a.seed), json!({ "poses": a.mocap_poses, "spec": &a.spec }), corpus)?;
    }
    write_artifact(&a.out, Some(a.seed), &record, ScenesData { spec: a.spec.clone(), scenes })?;
    Ok(format!("gen: {} scenes, {persons} persons", a.scenes))
}

pub fn cluster(a: &ClusterArgs) -> CliResult<String> {
    let env = read_artifact::<ScenesData>(&a.input)?;
    let spec = spec_of(&env.data.spec)?;
    let poses: Vec<_> = env
        .data
        .scenes
        .iter()
        .flat_map(|s| &s.persons)
        .filter(|p| !p.truncated())
        .map(|p| (p.pose2d.clone(), p.pose3d.clone()))
        .collect();
    let config = KMeansConfig { max_iters: a.max_iters, ..KMeansConfig::new(a.k, a.seed) };
    let clustering = kmeans_anchors(&poses, &spec, &config)?;
    let set = if a.no_upper_body { clustering.set } else { add_upper_body_variants(&clustering.set)? };
    let n = set.len();
    let record = json!({ "kmeans": config, "upper_body": !a.no_upper_body });
    write_artifact(&a.out, Some(a.seed), record, set)?;
    Ok(format!(
        "cluster: {} poses, {n} anchors, {} iterations, distortion {}",
        poses.len(),
        clustering.iterations,
        clustering.distortion.last().copied().unwrap_or(0.0)
    ))
}

pub fn annotate(a: &AnnotateArgs) -> CliResult<String> {
    let corpus = read_artifact::<MoCapCorpus>(&a.corpus)?.data;
    let queries = read_artifact::<Poses2dData>(&a.input)?.data;
    if queries.spec != corpus.spec {
        return Err(CliError::Schema(format!(
            "{}: spec `{}` does not match corpus spec `{}`",
            a.input.display(),
            queries.spec,
            corpus.spec
        )));
    }
    let library = build_library(&corpus, a.views, a.seed)?;
    if let Some(p) = &a.library_out {
        let mut buf = Vec::new();
        write_binary(&library, &mut buf).map_err(|e| CliError::io(p, e))?;
        std::fs::write(p, buf).map_err(|e| CliError::io(p, e))?;
    }
    let annotations = queries.poses.iter().map(|q| nn_annotate(q, &library)).collect::<Result<Vec<_>, _>>()?;
    let n = annotations.len();
    let record = json!({ "views_per_pose": a.views, "corpus_poses": corpus.poses.len() });
    write_artifact(&a.out, Some(a.seed), record, AnnotatedData { spec: queries.spec, annotations })?;
    Ok(format!("annotate: {n} poses against {} library entries", library.len()))
}

fn simulate_all(scenes: &[Scene], anchors: &AnchorSet, noise: &ProposalNoiseModel, seed: u64) -> CliResult<Vec<SceneProposals>> {
    scenes
        .iter()
        .map(|s| Ok(SceneProposals { scene: s.index, proposals: simulate_proposals(s, anchors, noise, seed)? }))
        .collect()
}

pub fn simulate(a: &SimulateArgs) -> CliResult<String> {
    let scenes = read_artifact::<ScenesData>(&a.scenes)?.data;
    let anchors = read_artifact::<AnchorSet>(&a.anchors)?.data;
    let noise = ProposalNoiseModel::preset(&a.noise)?;
    let per_scene = simulate_all(&scenes.scenes, &anchors, &noise, a.seed)?;
    let count: usize = per_scene.iter().map(|s| s.proposals.len()).sum();
    if let Some(p) = &a.dataset_out {
        let config = DatasetConfig { feature_dim: a.feature_dim, seed: a.seed, ..DatasetConfig::default() };
        let examples = synthesize_dataset(&scenes.scenes, &anchors, &config)?;
        let data = DatasetData { spec: scenes.spec.clone(), feature_dim: a.feature_dim, examples };
        write_artifact(p, Some(a.seed), &config, data)?;
    }
    let record = json!({ "noise": &noise, "preset": &a.noise });
    write_artifact(&a.out, Some(a.seed), record, ProposalsData { spec: scenes.spec, scenes: per_scene })?;
    Ok(format!("simulate: {count} proposals"))
}

pub fn train_toy(a: &TrainToyArgs) -> CliResult<String> {
    let data = read_artifact::<DatasetData>(&a.input)?.data;
    let anchors = read_artifact::<AnchorSet>(&a.anchors)?.data;
    let config = ToyConfig {
        iterations: a.iterations,
        lr_early: a.lr_early,
        lr_late: a.lr_late,
        stage_switch: a.stage_switch,
        seed: a.seed,
        two_pass: a.two_pass,
        ..ToyConfig::default()
    };
    let (model, history) = train(&data.examples, &anchors, &config)?;
    let last = history.last().copied();
    if let Some(p) = &a.losses_out {
        write_file(p, &losses_csv(&history))?;
    }
    let accuracy = model.accuracy(&data.examples);
    write_artifact(&a.out, Some(a.seed), &config, model)?;
    let last = last.map_or(0.0, |r| r.total);
    Ok(format!("train-toy: final loss {last}, training accuracy {accuracy}"))
}

fn select_all(
    proposals: &ProposalsData,
    method: SelectMethod,
    params: &PpiParams,
) -> CliResult<DetectionsData> {
    params.validate()?;
    let spec = spec_of(&proposals.spec)?;
    let scenes = proposals
        .scenes
        .iter()
        .map(|s| Ok(SceneDetections { scene: s.scene, detections: method.run(&s.proposals, params, &spec)? }))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(DetectionsData { spec: proposals.spec.clone(), method: method.name().to_string(), scenes })
}

pub fn ppi_cmd(a: &PpiArgs) -> CliResult<String> {
    let env = read_artifact::<ProposalsData>(&a.input)?;
    let params = a.options.params();
    let dets = select_all(&env.data, a.method, &params)?;
    let n: usize = dets.scenes.iter().map(|s| s.detections.len()).sum();
    write_artifact(&a.out, env.seed, &params, dets)?;
    Ok(format!("{}: {n} detections", a.method.name()))
}

/// Reorders per-scene lists to follow the ground-truth scene order.
fn align_to_scenes<T: Clone>(path: &Path, scenes: &[Scene], items: &[(usize, Vec<T>)]) -> CliResult<Vec<Vec<T>>> {
    scenes
        .iter()
        .map(|s| {
            items
                .iter()
                .find(|(i, _)| *i == s.index)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| CliError::Schema(format!("{}: field `scenes`: no entry for scene {}", path.display(), s.index)))
        })
        .collect()
}

fn build_report(
    gt: &ScenesData,
    preds: &[(String, Vec<Vec<Detection>>)],
    proposals: Option<&[Vec<PoseProposal>]>,
) -> CliResult<EvalReport> {
    let spec = spec_of(&gt.spec)?;
    let methods: Vec<(&str, &[Vec<Detection>])> = preds.iter().map(|(n, d)| (n.as_str(), d.as_slice())).collect();
    Ok(EvalReport::build(&gt.scenes, &methods, proposals, &spec, &EvalConfig::default())?)
}

pub fn eval(a: &EvalArgs) -> CliResult<String> {
    let gt_env = read_artifact::<ScenesData>(&a.gt)?;
    let gt = gt_env.data;
    let mut preds: Vec<(String, Vec<Vec<Detection>>)> = Vec::new();
    for p in &a.pred {
        let d = read_artifact::<DetectionsData>(p)?.data;
        let items: Vec<_> = d.scenes.into_iter().map(|s| (s.scene, s.detections)).collect();
        let mut name = d.method;
        if preds.iter().any(|(n, _)| *n == name) {
            name = format!("{name}{}", preds.len() + 1);
        }
        preds.push((name, align_to_scenes(p, &gt.scenes, &items)?));
    }
    let proposals = match &a.proposals {
        Some(p) => {
            let d = read_artifact::<ProposalsData>(p)?.data;
            let items: Vec<_> = d.scenes.into_iter().map(|s| (s.scene, s.proposals)).collect();
            Some(align_to_scenes(p, &gt.scenes, &items)?)
        }
        None => None,
    };
    let report = build_report(&gt, &preds, proposals.as_deref())?;
    let spec = spec_of(&gt.spec)?;
    let rows = report_rows(&report, &spec.joint_names, Some(a.protocol.into()));
    write_file(&a.out, &report::metrics_csv(&rows))?;
    if let Some(p) = &a.curves_out {
        write_file(p, &report::curves_csv(&report.curves))?;
    }
    if let Some(p) = &a.svg_out {
        write_file(p, &report::curves_svg(&report.curves, "3D joint error threshold (m)"))?;
    }
    let summary = summary_line(&report);
    if let Some(p) = &a.report_json {
        let config = report.config.clone();
        write_artifact(p, gt_env.seed, config, report)?;
    }
    Ok(summary)
}

fn summary_line(report: &EvalReport) -> String {
    report
        .methods
        .iter()
        .map(|m| {
            let ap = m.ap.as_ref().map_or(String::new(), |ap| format!(" ap={}", ap.mean));
            format!(
                "{}: mpjpe={} aligned={} pckh={} pck3d={}{ap} matched={} missed={}",
                m.name, m.mpjpe_abs, m.mpjpe_aligned, m.pckh, m.pck3d, m.matched, m.missed
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn report_cmd(a: &ReportArgs) -> CliResult<String> {
    let report = read_artifact::<EvalReport>(&a.input)?.data;
    let spec = spec_of(&report.spec)?;
    let written = emit_report(&report, &spec.joint_names, &a.out_dir, &a.format)?;
    Ok(format!("report: wrote {} files", written.len()))
}

/// Chains every stage; artifacts land in `out_dir`.
pub fn pipeline(a: &PipelineArgs) -> CliResult<String> {
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut log = Vec::new();
    let gen_args = |scenes: usize, seed: u64, out: PathBuf| GenArgs {
        scenes,
        persons: a.persons,
        seed,
        spec: "h13".into(),
        camera: CameraArg::Orthographic,
        truncation: SceneConfig::default().truncation_prob,
        out,
        poses2d_out: None,
        mocap_out: None,
        mocap_poses: 0,
    };
    log.push(gen(&gen_args(a.train_scenes, train_seed(a.seed), dir.join("train_scenes.json")))?);
    log.push(cluster(&ClusterArgs {
        input: dir.join("train_scenes.json"),
        k: a.k,
        seed: a.seed,
        max_iters: 100,
        no_upper_body: false,
        out: dir.join("anchors.json"),
    })?);
    log.push(gen(&gen_args(a.scenes, a.seed, dir.join("scenes.json")))?);
    log.push(simulate(&SimulateArgs {
        scenes: dir.join("scenes.json"),
        anchors: dir.join("anchors.json"),
        noise: a.noise.clone(),
        seed: a.seed,
        out: dir.join("proposals.json"),
        dataset_out: None,
        feature_dim: 0,
    })?);
    let mut preds = Vec::new();
    for method in [SelectMethod::Nms, SelectMethod::Ppi] {
        let out = dir.join(format!("detections_{}.json", method.name()));
        log.push(ppi_cmd(&PpiArgs { input: dir.join("proposals.json"), method, options: a.options.clone(), out: out.clone() })?);
        preds.push(out);
    }
    log.push(eval(&EvalArgs {
        pred: preds,
        gt: dir.join("scenes.json"),
        proposals: Some(dir.join("proposals.json")),
        protocol: ProtocolArg::ThreeD,
        out: dir.join("metrics_3d.csv"),
        curves_out: None,
        svg_out: None,
        report_json: Some(dir.join("report.json")),
    })?);
    log.push(report_cmd(&ReportArgs {
        input: dir.join("report.json"),
        out_dir: dir.clone(),
        format: vec![Format::Csv, Format::Svg],
    })?);
    Ok(log.join("\n"))
}
