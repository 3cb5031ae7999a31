//! Command-line surface tying the library together: evaluation, the three
//! suppression variants, loss evaluation, anchor sampling, mask dumps, and
//! synthetic corpus generation, all over JSON files.
//!
//! Exit codes: 0 success, 2 schema violation (malformed file, bad config,
//! out-of-range parameter), 3 image-id mismatch between files, 4 missing
//! embeddings where an algorithm needs them, 5 infeasible generation
//! config. Worker-pool size comes from `--workers`, falling back to the
//! `KARYODET_WORKERS` environment variable.

pub mod config;
pub mod corpus;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchors::{
    batch_quotas, generate_anchors, label_anchors, sample_batch, stratum_pools, AnchorConfig,
    AnchorLabel, HardnessScheme,
};
use crate::geometry::{repulsion_partners, BBox};
use crate::losses::{
    assign_proposals, combine_losses, pull_loss, push_loss, repulsion_loss, shift_curve,
    truncated_repulsion_loss, GroupedEmbeddings, LossError, LossWeights, PositiveProposal,
    SMOOTH_LN_SIGMA,
};
use crate::metrics::{
    evaluate_corpus, match_image, ApInterpolation, EvalOptions, MatchRule, MetricsError,
};
use crate::nms::{embedding_guided_nms, hard_nms, soft_nms, NmsConfig, NmsError};
use crate::synth::{self, ScenarioConfig, SynthError};
use crate::template::{all_masks, TemplateKind, MASK_SIZE, TEMPLATE_KINDS};

use config::Config;
use corpus::{align, load_corpus, write_corpus, CorpusFile, DetectionEntry, ImageEntry};
use report::{round6, to_sorted_json, MetricReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("{path}: {detail}")]
    Schema { path: String, detail: String },
    #[error("{0}")]
    IdMismatch(String),
    #[error("{0}")]
    MissingEmbeddings(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Failed(_) => 1,
            CliError::Schema { .. } => 2,
            CliError::IdMismatch(_) => 3,
            CliError::MissingEmbeddings(_) => 4,
            CliError::Infeasible(_) => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "karyodet",
    version,
    about = "Crowded-scene detection toolkit: metrics, suppression, losses, anchors, synthetic data"
)]
pub struct Cli {
    /// Worker threads for per-image evaluation; overrides KARYODET_WORKERS.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a detection corpus against a ground-truth corpus.
    Evaluate {
        /// Ground-truth corpus (JSON).
        gt: PathBuf,
        /// Detection corpus (JSON); may be the same file.
        det: PathBuf,
        /// TOML config; omitted keys use the reference constants.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the assignment IoU threshold.
        #[arg(long)]
        iou_thresh: Option<f64>,
        /// Override the overlap-subset coverage threshold.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
        report: ReportFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MatchRuleArg::BestScore)]
        match_rule: MatchRuleArg,
        #[arg(long, value_enum, default_value_t = ApInterpArg::AllPoint)]
        ap_interp: ApInterpArg,
    },
    /// Filter a detection corpus with a suppression algorithm.
    NmsRun {
        /// Detection corpus (JSON).
        det: PathBuf,
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Soft decay width.
        #[arg(long)]
        sigma: Option<f64>,
        /// Guided-decay embedding-distance midpoint.
        #[arg(long)]
        delta: Option<f64>,
        /// Hard-suppression IoU threshold.
        #[arg(long)]
        iou_thresh: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        score_floor: Option<f64>,
        /// Output detection corpus.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus: a ground-truth file and a detection file.
    SynthGen {
        /// Scene config (TOML).
        config: PathBuf,
        out_gt: PathBuf,
        out_det: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Label anchors against ground truth and draw one stratified batch per image.
    SampleAnchors {
        /// TOML config; `batch` sets the draw size.
        config: PathBuf,
        /// Ground-truth corpus (JSON).
        gt: PathBuf,
        #[arg(long, value_enum, default_value_t = CriterionArg::V2)]
        criterion: CriterionArg,
        #[arg(long)]
        seed: u64,
        /// Write the summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the grouping and repulsion losses for a detection run.
    LossEval {
        /// Ground-truth corpus, or a {"triples": [...]} file when DET is omitted.
        gt: PathBuf,
        /// Detection corpus (JSON).
        det: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the five 7x7 template masks as JSON.
    MasksDump { out: PathBuf },
    /// Tabulate both repulsion variants as a prediction drifts onto its
    /// neighbor, as CSV with columns shift, rl, tnrl.
    ShiftCurve {
        /// IoU between the two ground-truth boxes, in (0, 1).
        #[arg(long)]
        overlap: f64,
        /// Output CSV path.
        out: PathBuf,
        /// Number of evenly spaced shift samples over [0, 1].
        #[arg(long, default_value_t = 101)]
        steps: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Algo {
    Hard,
    Soft,
    Eg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CriterionArg {
    V1,
    V2,
}

impl From<CriterionArg> for HardnessScheme {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::V1 => HardnessScheme::V1,
            CriterionArg::V2 => HardnessScheme::V2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatchRuleArg {
    /// Highest-scoring claimant per ground truth.
    BestScore,
    /// Detections claim in score order, each taking its best free ground truth.
    Greedy,
}

impl From<MatchRuleArg> for MatchRule {
    fn from(m: MatchRuleArg) -> Self {
        match m {
            MatchRuleArg::BestScore => MatchRule::BestScorePerGt,
            MatchRuleArg::Greedy => MatchRule::GreedyScoreOrder,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ApInterpArg {
    AllPoint,
    ElevenPoint,
}

impl From<ApInterpArg> for ApInterpolation {
    fn from(a: ApInterpArg) -> Self {
        match a {
            ApInterpArg::AllPoint => ApInterpolation::AllPoint,
            ApInterpArg::ElevenPoint => ApInterpolation::ElevenPoint,
        }
    }
}

/// Parse arguments, execute, report errors on stderr, and return the
/// process exit code.
pub fn run() -> u8 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn env_workers() -> Result<Option<usize>, CliError> {
    match std::env::var("KARYODET_WORKERS") {
        Ok(v) => v.trim().parse::<usize>().map(Some).map_err(|_| {
            CliError::Failed(format!("KARYODET_WORKERS must be an integer, got \"{v}\""))
        }),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.workers.map(Ok).or_else(|| env_workers().transpose()) {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers?)
                .build()
                .map_err(|e| CliError::Failed(format!("worker pool: {e}")))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Evaluate {
            gt,
            det,
            config,
            iou_thresh,
            tau,
            report,
            out,
            match_rule,
            ap_interp,
        } => cmd_evaluate(
            &gt, &det, config, iou_thresh, tau, report, out, match_rule, ap_interp,
        ),
        Command::NmsRun {
            det,
            algo,
            config,
            sigma,
            delta,
            iou_thresh,
            top_k,
            score_floor,
            out,
        } => cmd_nms_run(
            &det, algo, config, sigma, delta, iou_thresh, top_k, score_floor, &out,
        ),
        Command::SynthGen {
            config,
            out_gt,
            out_det,
            seed,
        } => cmd_synth_gen(&config, &out_gt, &out_det, seed),
        Command::SampleAnchors {
            config,
            gt,
            criterion,
            seed,
            out,
        } => cmd_sample_anchors(&config, &gt, criterion, seed, out),
        Command::LossEval {
            gt,
            det,
            config,
            out,
        } => cmd_loss_eval(&gt, det, config, out),
        Command::MasksDump { out } => cmd_masks_dump(&out),
        Command::ShiftCurve {
            overlap,
            out,
            steps,
        } => cmd_shift_curve(overlap, &out, steps),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io {
            path: p.display().to_string(),
            detail: e.to_string(),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn metrics_err(gt_path: &Path, e: MetricsError) -> CliError {
    CliError::Schema {
        path: gt_path.display().to_string(),
        detail: e.to_string(),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    gt: &Path,
    det: &Path,
    config: Option<PathBuf>,
    iou_thresh: Option<f64>,
    tau: Option<f64>,
    format: ReportFormat,
    out: Option<PathBuf>,
    match_rule: MatchRuleArg,
    ap_interp: ApInterpArg,
) -> Result<(), CliError> {
    let cfg = Config::load_or_default(config.as_deref())?;
    let gt_corpus = load_corpus(gt)?;
    let det_corpus = load_corpus(det)?;
    let (images, ids) = align(&gt_corpus, &det_corpus)?;
    let opts = EvalOptions {
        iou_thresh: iou_thresh.unwrap_or(cfg.iou_thresh),
        tau: tau.unwrap_or(cfg.tau),
        match_rule: match_rule.into(),
        ap_interp: ap_interp.into(),
    };
    let summary = evaluate_corpus(&images, &ids, &opts).map_err(|e| metrics_err(gt, e))?;
    let rep = MetricReport::from_summary(&summary);
    let text = match format {
        ReportFormat::Json => to_sorted_json(&rep),
        ReportFormat::Text => rep.to_text(),
    };
    emit(out.as_deref(), &text)
}

fn nms_err(image_id: &str, e: NmsError) -> CliError {
    match e {
        NmsError::MissingEmbedding { index } => CliError::MissingEmbeddings(format!(
            "image \"{image_id}\": detection {index} has no embedding; --algo eg needs one per detection"
        )),
        other => CliError::Schema {
            path: "(suppression parameters)".into(),
            detail: other.to_string(),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_nms_run(
    det: &Path,
    algo: Algo,
    config: Option<PathBuf>,
    sigma: Option<f64>,
    delta: Option<f64>,
    iou_thresh: Option<f64>,
    top_k: Option<usize>,
    score_floor: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = Config::load_or_default(config.as_deref())?;
    let parsed = load_corpus(det)?;
    let nms_cfg = NmsConfig {
        sigma: sigma.unwrap_or(cfg.sigma),
        delta: delta.unwrap_or(cfg.delta),
        score_floor: score_floor.unwrap_or(cfg.score_floor),
        top_k: top_k.unwrap_or(cfg.top_k),
    };
    let thresh = iou_thresh.unwrap_or(cfg.iou_thresh);
    let mut images = Vec::with_capacity(parsed.images.len());
    for im in &parsed.images {
        let filtered = match algo {
            Algo::Hard => hard_nms(&im.dets, thresh),
            Algo::Soft => soft_nms(&im.dets, &nms_cfg),
            Algo::Eg => embedding_guided_nms(&im.dets, &nms_cfg),
        }
        .map_err(|e| nms_err(&im.image_id, e))?;
        images.push(ImageEntry {
            image_id: im.image_id.clone(),
            width: im.width,
            height: im.height,
            gt_boxes: im.gts.iter().map(BBox::corners).collect(),
            detections: Some(filtered.iter().map(DetectionEntry::from).collect()),
        });
    }
    write_corpus(out, &CorpusFile { images })
}

/// Scene-generator file config: the scenario knobs minus the seed, which
/// must come from `--seed`.
#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthFileConfig {
    num_images: usize,
    width: u32,
    height: u32,
    gt_count: usize,
    overlap_intensity: f64,
    jitter_std: f64,
    fn_rate: f64,
    fp_rate: f64,
    duplicate_rate: f64,
    embedding_noise_std: f64,
}

impl Default for SynthFileConfig {
    fn default() -> Self {
        let d = ScenarioConfig::default();
        Self {
            num_images: d.num_images,
            width: d.width as u32,
            height: d.height as u32,
            gt_count: d.gt_count,
            overlap_intensity: d.overlap_intensity,
            jitter_std: d.jitter_std,
            fn_rate: d.fn_rate,
            fp_rate: d.fp_rate,
            duplicate_rate: d.duplicate_rate,
            embedding_noise_std: d.embedding_noise_std,
        }
    }
}

#[derive(Debug, Serialize)]
struct SynthSummary {
    images: usize,
    gts: usize,
    detections: usize,
    achieved_overlap_fraction: f64,
    seed: u64,
}

fn cmd_synth_gen(config: &Path, out_gt: &Path, out_det: &Path, seed: u64) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::Io {
        path: config.display().to_string(),
        detail: e.to_string(),
    })?;
    let file: SynthFileConfig = toml::from_str(&text).map_err(|e| CliError::Schema {
        path: config.display().to_string(),
        detail: e.to_string(),
    })?;
    let sc = ScenarioConfig {
        seed,
        num_images: file.num_images,
        width: file.width as f64,
        height: file.height as f64,
        gt_count: file.gt_count,
        overlap_intensity: file.overlap_intensity,
        jitter_std: file.jitter_std,
        fn_rate: file.fn_rate,
        fp_rate: file.fp_rate,
        duplicate_rate: file.duplicate_rate,
        embedding_noise_std: file.embedding_noise_std,
    };
    let scenario = synth::generate(&sc).map_err(|e| match e {
        SynthError::BadParameter { .. } => CliError::Schema {
            path: config.display().to_string(),
            detail: e.to_string(),
        },
        SynthError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
    })?;

    let mut gt_images = Vec::with_capacity(scenario.images.len());
    let mut det_images = Vec::with_capacity(scenario.images.len());
    let (mut gts, mut dets) = (0usize, 0usize);
    for (i, im) in scenario.images.iter().enumerate() {
        let image_id = format!("img-{i:04}");
        gts += im.gts.len();
        dets += im.dets.len();
        gt_images.push(ImageEntry {
            image_id: image_id.clone(),
            width: file.width,
            height: file.height,
            gt_boxes: im.gts.iter().map(BBox::corners).collect(),
            detections: None,
        });
        det_images.push(ImageEntry {
            image_id,
            width: file.width,
            height: file.height,
            gt_boxes: Vec::new(),
            detections: Some(im.dets.iter().map(DetectionEntry::from).collect()),
        });
    }
    write_corpus(out_gt, &CorpusFile { images: gt_images })?;
    write_corpus(out_det, &CorpusFile { images: det_images })?;
    let summary = SynthSummary {
        images: scenario.images.len(),
        gts,
        detections: dets,
        achieved_overlap_fraction: round6(scenario.achieved_overlap_fraction),
        seed,
    };
    emit(None, &to_sorted_json(&summary))
}

#[derive(Debug, Serialize)]
struct StratumSection {
    positive: usize,
    hard: usize,
    easy: usize,
}

#[derive(Debug, Serialize)]
struct AnchorImageSection {
    image_id: String,
    anchors: usize,
    pools: PoolSection,
    sampled: StratumSection,
    shortfall: usize,
}

#[derive(Debug, Serialize)]
struct PoolSection {
    positive: usize,
    hard: usize,
    easy: usize,
    ignored: usize,
}

#[derive(Debug, Serialize)]
struct AnchorReport {
    batch: usize,
    criterion: String,
    quota: StratumSection,
    seed: u64,
    per_image: Vec<AnchorImageSection>,
}

fn cmd_sample_anchors(
    config: &Path,
    gt: &Path,
    criterion: CriterionArg,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = Config::load(config)?;
    let parsed = load_corpus(gt)?;
    let scheme: HardnessScheme = criterion.into();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (q_pos, q_hard, q_easy) = batch_quotas(cfg.batch);
    let mut per_image = Vec::with_capacity(parsed.images.len());
    for im in &parsed.images {
        let anchor_cfg = AnchorConfig::for_image(im.width as usize, im.height as usize);
        let anchors = generate_anchors(&anchor_cfg).map_err(|e| CliError::Schema {
            path: gt.display().to_string(),
            detail: format!("image \"{}\": {e}", im.image_id),
        })?;
        let labels = label_anchors(&anchors, &im.gts, scheme);
        let pools = stratum_pools(&labels);
        let ignored = labels
            .iter()
            .filter(|l| matches!(l, AnchorLabel::Ignore))
            .count();
        let batch = sample_batch(&pools, cfg.batch, &mut rng);
        per_image.push(AnchorImageSection {
            image_id: im.image_id.clone(),
            anchors: anchors.len(),
            pools: PoolSection {
                positive: pools.positive.len(),
                hard: pools.hard.len(),
                easy: pools.easy.len(),
                ignored,
            },
            sampled: StratumSection {
                positive: batch.positive.len(),
                hard: batch.hard.len(),
                easy: batch.easy.len(),
            },
            shortfall: batch.shortfall,
        });
    }
    let report = AnchorReport {
        batch: cfg.batch,
        criterion: match criterion {
            CriterionArg::V1 => "v1".into(),
            CriterionArg::V2 => "v2".into(),
        },
        quota: StratumSection {
            positive: q_pos,
            hard: q_hard,
            easy: q_easy,
        },
        seed,
        per_image,
    };
    emit(out.as_deref(), &to_sorted_json(&report))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TriplesFile {
    triples: Vec<TripleEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripleEntry {
    pred: [f64; 4],
    attract: [f64; 4],
    #[serde(default)]
    repulse: Option<[f64; 4]>,
}

#[derive(Debug, Serialize)]
struct TripleReport {
    triples: usize,
    repulsion: f64,
    truncated_repulsion: f64,
}

#[derive(Debug, Serialize)]
struct PushSection {
    value: f64,
    considered: usize,
}

#[derive(Debug, Serialize)]
struct CombinedSection {
    det: f64,
    pull: f64,
    push: f64,
    repulsion: f64,
    total: f64,
}

#[derive(Debug, Serialize)]
struct LossReport {
    images: usize,
    positives: usize,
    groups: usize,
    pull: f64,
    push: PushSection,
    repulsion: f64,
    truncated_repulsion: f64,
    combined: CombinedSection,
}

fn loss_err(e: LossError) -> CliError {
    match e {
        LossError::BadParameter { .. } => CliError::Schema {
            path: "(loss parameters)".into(),
            detail: e.to_string(),
        },
        other => CliError::Failed(other.to_string()),
    }
}

fn cmd_loss_eval(
    gt: &Path,
    det: Option<PathBuf>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = Config::load_or_default(config.as_deref())?;
    let text = match det {
        None => loss_eval_triples(gt, &cfg)?,
        Some(det) => loss_eval_corpus(gt, &det, &cfg)?,
    };
    emit(out.as_deref(), &text)
}

fn loss_eval_triples(path: &Path, cfg: &Config) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let file: TriplesFile = serde_json::from_str(&text).map_err(|e| CliError::Schema {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let schema = |i: usize, field: &str, e: crate::geometry::GeometryError| CliError::Schema {
        path: path.display().to_string(),
        detail: format!("triples[{i}] {field}: {e}"),
    };
    let mut proposals = Vec::with_capacity(file.triples.len());
    for (i, t) in file.triples.iter().enumerate() {
        proposals.push(PositiveProposal {
            pred: BBox::try_from(t.pred).map_err(|e| schema(i, "pred", e))?,
            attract: BBox::try_from(t.attract).map_err(|e| schema(i, "attract", e))?,
            repulse: t
                .repulse
                .map(|r| BBox::try_from(r).map_err(|e| schema(i, "repulse", e)))
                .transpose()?,
        });
    }
    let rl = repulsion_loss(&proposals, cfg.sigma).map_err(loss_err)?;
    let tnrl = truncated_repulsion_loss(&proposals, cfg.sigma).map_err(loss_err)?;
    Ok(to_sorted_json(&TripleReport {
        triples: proposals.len(),
        repulsion: round6(rl),
        truncated_repulsion: round6(tnrl),
    }))
}

fn loss_eval_corpus(gt: &Path, det: &Path, cfg: &Config) -> Result<String, CliError> {
    let gt_corpus = load_corpus(gt)?;
    let det_corpus = load_corpus(det)?;
    let (images, ids) = align(&gt_corpus, &det_corpus)?;

    let mut groups: Vec<Vec<f64>> = Vec::new();
    let mut proposals: Vec<PositiveProposal> = Vec::new();
    let mut push_sum = 0.0;
    let mut push_considered = 0usize;
    for (im, id) in images.iter().zip(&ids) {
        let outcome = match_image(&im.dets, &im.gts, cfg.iou_thresh, MatchRule::BestScorePerGt);
        let mut per_gt: Vec<Vec<f64>> = vec![Vec::new(); im.gts.len()];
        for (d, detection) in im.dets.iter().enumerate() {
            if let Some(g) = outcome.candidate_gt[d] {
                let e = detection.embedding.ok_or_else(|| {
                    CliError::MissingEmbeddings(format!(
                        "image \"{id}\": detection {d} is assigned to a ground truth but has no embedding"
                    ))
                })?;
                per_gt[g].push(e);
            }
        }

        // Push compares group means of adjacent ground truths; only ground
        // truths that actually have positives contribute a mean.
        let partners = repulsion_partners(&im.gts);
        let present: Vec<usize> = (0..im.gts.len())
            .filter(|&g| !per_gt[g].is_empty())
            .collect();
        let mut slot = vec![None; im.gts.len()];
        for (k, &g) in present.iter().enumerate() {
            slot[g] = Some(k);
        }
        let means: Vec<f64> = present
            .iter()
            .map(|&g| per_gt[g].iter().sum::<f64>() / per_gt[g].len() as f64)
            .collect();
        let mapped: Vec<Option<usize>> = present
            .iter()
            .map(|&g| partners[g].and_then(|p| slot[p]))
            .collect();
        let pl = push_loss(&means, &mapped, cfg.push_delta).map_err(loss_err)?;
        push_sum += pl.value * pl.considered as f64;
        push_considered += pl.considered;

        groups.extend(per_gt.into_iter().filter(|g| !g.is_empty()));
        let preds: Vec<BBox> = im.dets.iter().map(|d| d.bbox).collect();
        proposals.extend(assign_proposals(&preds, &im.gts, cfg.iou_thresh));
    }

    if proposals.is_empty() {
        return Err(CliError::Failed(format!(
            "no detection reaches IoU {} with any ground truth; losses are undefined",
            cfg.iou_thresh
        )));
    }
    let grouped = GroupedEmbeddings::new(groups).map_err(loss_err)?;
    let pull = pull_loss(&grouped, cfg.theta, cfg.lambda).map_err(loss_err)?;
    let push_value = if push_considered == 0 {
        0.0
    } else {
        push_sum / push_considered as f64
    };
    let rl = repulsion_loss(&proposals, cfg.sigma).map_err(loss_err)?;
    let tnrl = truncated_repulsion_loss(&proposals, cfg.sigma).map_err(loss_err)?;
    let weights = LossWeights {
        alpha: cfg.alpha,
        beta: cfg.beta,
        gamma: cfg.gamma,
    };
    let combined = combine_losses(0.0, pull, push_value, tnrl, &weights);
    Ok(to_sorted_json(&LossReport {
        images: images.len(),
        positives: proposals.len(),
        groups: grouped.groups().len(),
        pull: round6(pull),
        push: PushSection {
            value: round6(push_value),
            considered: push_considered,
        },
        repulsion: round6(rl),
        truncated_repulsion: round6(tnrl),
        combined: CombinedSection {
            det: combined.det,
            pull: round6(combined.pull),
            push: round6(combined.push),
            repulsion: round6(combined.repulsion),
            total: round6(combined.total),
        },
    }))
}

#[derive(Debug, Serialize)]
struct MaskEntry {
    kind: &'static str,
    values: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct MasksReport {
    size: usize,
    masks: Vec<MaskEntry>,
}

fn kind_name(kind: TemplateKind) -> &'static str {
    match kind {
        TemplateKind::Diagonal => "diagonal",
        TemplateKind::AntiDiagonal => "anti_diagonal",
        TemplateKind::Horizontal => "horizontal",
        TemplateKind::Vertical => "vertical",
        TemplateKind::Circular => "circular",
    }
}

fn cmd_masks_dump(out: &Path) -> Result<(), CliError> {
    let masks = all_masks();
    let entries = TEMPLATE_KINDS
        .iter()
        .zip(masks.iter())
        .map(|(kind, mask)| MaskEntry {
            kind: kind_name(*kind),
            values: mask.iter().flatten().copied().collect(),
        })
        .collect();
    let report = MasksReport {
        size: MASK_SIZE,
        masks: entries,
    };
    emit(Some(out), &to_sorted_json(&report))
}

fn cmd_shift_curve(overlap: f64, out: &Path, steps: usize) -> Result<(), CliError> {
    let points = shift_curve(overlap, steps, SMOOTH_LN_SIGMA).map_err(|e| CliError::Schema {
        path: "(flags)".into(),
        detail: e.to_string(),
    })?;
    let mut text = String::from("shift,rl,tnrl\n");
    for p in points {
        text.push_str(&format!("{},{},{}\n", p.shift, p.rl, p.tnrl));
    }
    emit(Some(out), &text)
}
