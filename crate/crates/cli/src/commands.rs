//! Subcommand implementations.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::path::{Path, PathBuf};

use grbm_core::checkpoint::{CheckpointSource, CheckpointStore};
use grbm_core::classify::{accuracy, cross_validate, read_svm, train_l2svm, write_svm, CvHooks, CvReport};
use grbm_core::data::{
    extract_patches, fit_preprocess, load_cifar10, read_dataset, synthetic_edge_images, write_dataset, DimKind,
    CIFAR_RECORDS,
};
use grbm_core::encode::{Encoder, EncoderConfig, EncodingScheme};
use grbm_core::infomax::{early_stop_index, unit_mutual_information};
use grbm_core::pipeline::{evaluate_params, PipelineConfig};
use grbm_core::toy::run_toy;
use grbm_core::train::{evaluation_rows, train, NoopObserver, SessionState, TrainObserver};
use grbm_core::verify::run_verify;
use grbm_core::{
    AmiTrace, CheckpointId, EpochRecord, GrbmError, GrbmParams, ImageSet, PreprocessModel, SparsityConfig,
    StopCriterion, StopDecision, TrainSession,
};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::rundir::{resolve_out, RunDir};
use crate::svg::{self, Series};

pub const METRICS: &str = "metrics.jsonl";
pub const SESSION: &str = "session.json";
pub const TRACE: &str = "trace.json";
pub const PREPROCESS: &str = "preprocess.json";
pub const UNITS: &str = "units.json";
pub const CHECKPOINTS: &str = "checkpoints";
pub const SELECTION: &str = "selection.json";
pub const FEATURES_META: &str = "features/meta.json";
pub const TRAIN_FEATURES: &str = "features/train.dset";
pub const TEST_FEATURES: &str = "features/test.dset";
pub const SVM: &str = "svm.svmm";
pub const CLASSIFY: &str = "classify.json";
pub const PIPELINE: &str = "pipeline.json";
pub const CV: &str = "cv.json";
pub const TOY_LOG: &str = "toy.jsonl";
pub const TOY_SUMMARY: &str = "toy.json";
pub const VERIFY: &str = "verify.json";

/// Units with MI above this many nats count as informative in `units.json`.
pub const MI_THRESHOLD: f64 = 0.02;

const SYNTHETIC_TRAIN_SEED: u64 = 1;
const SYNTHETIC_TEST_SEED: u64 = 2;

/// Global flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub theta: Option<f64>,
}

impl Context {
    pub fn out_dir(&self) -> PathBuf {
        resolve_out(&self.out)
    }

    /// Config file (or defaults) with the `--seed` and `--theta` overrides applied.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(theta) = self.theta {
            cfg.set_theta(theta)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Opens a run produced earlier. `--config`/`--seed`, when given, must
    /// describe the same run (`stop.theta` aside).
    fn open_existing(&self) -> Result<RunDir, CliError> {
        let run = RunDir::existing(&self.out_dir())?;
        if self.config.is_some() || self.seed.is_some() {
            let mut wanted = Context { theta: None, ..self.clone() }.resolve()?;
            wanted.set_theta(run.config().theta())?;
            if wanted.hash() != run.hash() {
                return Err(CliError::Config(format!(
                    "{} holds a run with config {}, not the one given; re-run `grbm train` there",
                    run.root().display(),
                    &run.hash()[..16]
                )));
            }
        }
        Ok(run)
    }
}

fn head(images: ImageSet, n: usize) -> ImageSet {
    if n == 0 || n >= images.len() {
        images
    } else {
        images.select(&(0..n).collect::<Vec<_>>())
    }
}

/// Training and test images for the configured source.
pub fn load_images(cfg: &RunConfig) -> Result<(ImageSet, ImageSet), CliError> {
    if cfg.synthetic() {
        let or = |n: usize, all: usize| if n == 0 { all } else { n };
        return Ok((
            synthetic_edge_images(or(cfg.train_images(), 5 * CIFAR_RECORDS), SYNTHETIC_TRAIN_SEED),
            synthetic_edge_images(or(cfg.test_images(), CIFAR_RECORDS), SYNTHETIC_TEST_SEED),
        ));
    }
    let dir = cfg.data_dir();
    let (train, test) = load_cifar10(&dir).map_err(|e| match e {
        GrbmError::Io(io) if io.kind() == ErrorKind::NotFound => CliError::MissingArtifact(format!(
            "CIFAR-10 binary batches not found in {} ({io}); extract cifar-10-binary.tar.gz there \
             (set data.dir) or use data.source=synthetic",
            dir.display()
        )),
        other => other.into(),
    })?;
    Ok((head(train, cfg.train_images()), head(test, cfg.test_images())))
}

/// Stamped wrapper around the resumable training state.
#[derive(Serialize, Deserialize)]
struct SavedSession {
    state: SessionState,
}

#[derive(Serialize, Deserialize)]
struct TraceDoc {
    trace: AmiTrace,
    peak_epoch: usize,
    final_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct PreprocessDoc {
    preprocess: PreprocessModel,
}

#[derive(Serialize)]
struct MetricsLine<'a> {
    epoch: usize,
    ami: f64,
    fed: Option<f64>,
    mean_abs_weight: f64,
    sparsity_mean: f64,
    checkpoint: Option<&'a str>,
    config_hash: &'a str,
    seed: u64,
}

/// Observer that checkpoints to disk, appends metrics lines and keeps the
/// resume state current.
struct Recorder<'a> {
    run: &'a RunDir,
    store: CheckpointStore,
    metrics: File,
}

impl TrainObserver for Recorder<'_> {
    fn checkpoint(&mut self, epoch: usize, ami: f64, params: &GrbmParams) -> grbm_core::Result<Option<CheckpointId>> {
        self.store.save(epoch, ami, params).map(Some)
    }

    fn on_epoch(&mut self, r: &EpochRecord) -> grbm_core::Result<()> {
        let line = MetricsLine {
            epoch: r.epoch,
            ami: r.ami,
            fed: r.fed,
            mean_abs_weight: r.mean_abs_weight,
            sparsity_mean: r.sparsity_mean,
            checkpoint: r.checkpoint.as_ref().map(|c| c.0.as_str()),
            config_hash: self.run.hash(),
            seed: self.run.seed(),
        };
        let mut text = serde_json::to_string(&line).expect("metrics serialize");
        text.push('\n');
        self.metrics.write_all(text.as_bytes())?;
        self.metrics.flush()?;
        Ok(())
    }

    fn on_state(&mut self, state: &SessionState) -> grbm_core::Result<()> {
        self.run
            .write_json(SESSION, &SavedSession { state: state.clone() })
            .map_err(|e| GrbmError::Io(std::io::Error::other(e.to_string())))
    }
}

/// Keeps the first `lines` lines of the metrics log.
fn truncate_lines(path: &Path, lines: usize) -> Result<(), CliError> {
    let kept: Vec<String> = match File::open(path) {
        Ok(f) => BufReader::new(f).lines().take(lines).collect::<Result<_, _>>()?,
        Err(e) if e.kind() == ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut text = kept.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub struct Trained {
    pub preprocess: PreprocessModel,
    pub trace: AmiTrace,
    pub params: GrbmParams,
    pub log: Vec<EpochRecord>,
    pub store: CheckpointStore,
}

#[derive(Serialize)]
struct UnitsDoc {
    threshold: f64,
    ami: f64,
    per_unit_mi: Vec<f64>,
    filter_norms: Vec<f64>,
    /// Unit indices by ascending MI.
    unit_order: Vec<usize>,
    units_above: usize,
    units_below: usize,
}

/// Patches, preprocessing, GRBM training with per-epoch metrics and
/// checkpoints, then the trace, unit report and plots.
fn train_stage(
    run: &RunDir,
    pc: &PipelineConfig,
    train_images: &ImageSet,
    test_images: &ImageSet,
    resume: bool,
    until: Option<usize>,
) -> Result<Trained, CliError> {
    let tc = &pc.train;
    let patches = extract_patches(train_images, pc.rf_size, pc.patches, tc.seed)?;
    let (preprocess, white) = fit_preprocess(&patches, pc.contrast_epsilon, pc.zca_epsilon)?;
    let holdout = if test_images.is_empty() {
        None
    } else {
        let raw = extract_patches(test_images, pc.rf_size, tc.eval_subset.clamp(1, pc.patches), tc.seed)?;
        Some(preprocess.transform(&raw)?)
    };
    run.write_json(PREPROCESS, &PreprocessDoc { preprocess: preprocess.clone() })?;

    let ckpt_dir = run.path(CHECKPOINTS);
    let metrics_path = run.path(METRICS);
    let mut session = if resume {
        let saved: SavedSession = run.read_json(SESSION, "train")?;
        if saved.state.config != *tc {
            return Err(CliError::Config("saved session was trained with different settings".into()));
        }
        let session = TrainSession::from_state(saved.state)?;
        let done = session.completed_epoch().unwrap_or(0);
        CheckpointStore::open(&ckpt_dir, &run.run_id())?.truncate_after(done)?;
        truncate_lines(&metrics_path, done + 1)?;
        session
    } else {
        if ckpt_dir.exists() {
            fs::remove_dir_all(&ckpt_dir)?;
        }
        fs::write(&metrics_path, "")?;
        let init = GrbmParams::initialize(pc.hidden, white.dim(), tc.seed)?;
        TrainSession::new(init, white.view(), tc.clone())?
    };
    let mut recorder = Recorder {
        run,
        store: CheckpointStore::open(&ckpt_dir, &run.run_id())?,
        metrics: OpenOptions::new().append(true).open(&metrics_path)?,
    };
    let last = until.map_or(tc.epochs, |u| u.min(tc.epochs));
    session.run_until(white.view(), holdout.as_ref().map(|h| h.view()), last, &mut recorder)?;
    let store = recorder.store;
    let outcome = session.into_outcome();

    let trace = outcome.trace;
    run.write_json(
        TRACE,
        &TraceDoc {
            trace: trace.clone(),
            peak_epoch: trace.peak_epoch(),
            final_epoch: trace.entries().last().map_or(0, |e| e.epoch),
        },
    )?;
    let eval = evaluation_rows(white.len(), tc.eval_subset, tc.seed);
    let report = unit_mutual_information(&outcome.params, white.rows.select(Axis(0), &eval).view())?;
    let units_above = report.units_above(MI_THRESHOLD).len();
    run.write_json(
        UNITS,
        &UnitsDoc {
            threshold: MI_THRESHOLD,
            ami: report.ami,
            units_below: report.per_unit_mi.len() - units_above,
            per_unit_mi: report.per_unit_mi,
            filter_norms: outcome.params.filter_norms(),
            unit_order: report.unit_order,
            units_above,
        },
    )?;
    write_training_plots(run, &outcome.log)?;
    Ok(Trained {
        preprocess,
        trace,
        params: outcome.params,
        log: outcome.log,
        store,
    })
}

fn write_training_plots(run: &RunDir, log: &[EpochRecord]) -> Result<(), CliError> {
    let ami = Series {
        name: "AMI".into(),
        points: log.iter().map(|r| (r.epoch as f64, r.ami)).collect(),
    };
    run.write_text("ami.svg", &svg::line_chart("Approximated mutual information", "epoch", "nats", &[ami]))?;
    let quantile = |r: &EpochRecord, q: f64| {
        let mut n = r.filter_norms.clone();
        n.sort_by(f64::total_cmp);
        n.get(((n.len().saturating_sub(1)) as f64 * q).round() as usize).copied().unwrap_or(0.0)
    };
    let series: Vec<Series> = [("max", 1.0), ("median", 0.5), ("min", 0.0)]
        .iter()
        .map(|&(name, q)| Series {
            name: format!("{name} norm"),
            points: log.iter().map(|r| (r.epoch as f64, quantile(r, q))).collect(),
        })
        .collect();
    run.write_text("filter_norms.svg", &svg::line_chart("Filter norms", "epoch", "||w_i||", &series))
}

/// `until` stops early at that epoch, leaving the run resumable.
pub fn cmd_train(ctx: &Context, resume: bool, until: Option<usize>) -> Result<String, CliError> {
    let cfg = ctx.resolve()?;
    let (train_images, test_images) = load_images(&cfg)?;
    let out = ctx.out_dir();
    let run = if resume {
        let run = RunDir::existing(&out)?;
        if run.hash() != cfg.hash() {
            return Err(CliError::Config(format!(
                "--resume needs the config the run started with ({}), got {}",
                &run.hash()[..16],
                &cfg.hash()[..16]
            )));
        }
        run
    } else {
        RunDir::fresh(&out, &cfg)?
    };
    let trained = train_stage(&run, &cfg.pipeline_config(), &train_images, &test_images, resume, until)?;
    Ok(format!(
        "trained {} epochs; AMI peak {:.4} nats at epoch {}; final {:.4}",
        trained.log.last().map_or(0, |r| r.epoch),
        trained.trace.peak_value(),
        trained.trace.peak_epoch(),
        trained.log.last().map_or(0.0, |r| r.ami),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct Selection {
    theta: f64,
    t_star: usize,
    checkpoint_id: String,
    smoothing: usize,
    ami: f64,
    peak_epoch: usize,
}

fn decide(trace: &AmiTrace, theta: f64, smoothing: usize) -> Result<(StopDecision, CheckpointId), CliError> {
    let decision = early_stop_index(&trace.smoothed(smoothing), StopCriterion::new(theta)?)?;
    let id = decision.checkpoint.clone().ok_or(GrbmError::Resolution { epoch: decision.epoch })?;
    Ok((decision, id))
}

pub fn cmd_select_stop(ctx: &Context) -> Result<String, CliError> {
    let run = ctx.open_existing()?;
    let doc: TraceDoc = run.read_json(TRACE, "train")?;
    let theta = ctx.theta.unwrap_or(run.config().theta());
    let (decision, id) = decide(&doc.trace, theta, run.config().smoothing())?;
    let store = open_store(&run)?;
    store.load(&id)?;
    run.write_json(
        SELECTION,
        &Selection {
            theta,
            t_star: decision.epoch,
            checkpoint_id: id.0.clone(),
            smoothing: run.config().smoothing(),
            ami: doc.trace.entries()[decision.index].ami,
            peak_epoch: doc.peak_epoch,
        },
    )?;
    Ok(format!("theta {theta}: stop at epoch {} ({id})", decision.epoch))
}

fn open_store(run: &RunDir) -> Result<CheckpointStore, CliError> {
    CheckpointStore::open_existing(run.path(CHECKPOINTS)).map_err(|e| {
        CliError::MissingArtifact(format!("checkpoint store in {}: {e}; run `grbm train` first", run.root().display()))
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct FeaturesMeta {
    theta: f64,
    t_star: usize,
    checkpoint_id: String,
    train_rows: usize,
    test_rows: usize,
    feature_len: usize,
}

pub fn cmd_features(ctx: &Context) -> Result<String, CliError> {
    let run = ctx.open_existing()?;
    let selection: Selection = run.read_json(SELECTION, "select-stop")?;
    let pre: PreprocessDoc = run.read_json(PREPROCESS, "train")?;
    let params = open_store(&run)?.load(&CheckpointId(selection.checkpoint_id.clone()))?;
    let cfg = run.config();
    let (train_images, test_images) = load_images(cfg)?;
    let train_images = head(train_images, cfg.pipeline_config().classifier_images);
    let encoder = Encoder::new(&params, &pre.preprocess, &cfg.encoder_config())?;
    let xt = encoder.features(&train_images)?;
    let xv = encoder.features(&test_images)?;
    fs::create_dir_all(run.path("features"))?;
    for (name, ds) in [(TRAIN_FEATURES, &xt), (TEST_FEATURES, &xv)] {
        write_dataset(&run.path(name), ds)?;
        run.write_sidecar(name, &serde_json::json!({ "rows": ds.len(), "dim": ds.dim(), "checkpoint_id": selection.checkpoint_id }))?;
    }
    run.write_json(
        FEATURES_META,
        &FeaturesMeta {
            theta: selection.theta,
            t_star: selection.t_star,
            checkpoint_id: selection.checkpoint_id,
            train_rows: xt.len(),
            test_rows: xv.len(),
            feature_len: xt.dim(),
        },
    )?;
    Ok(format!("{} train and {} test feature rows of length {}", xt.len(), xv.len(), xt.dim()))
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassifyReport {
    theta: f64,
    t_star: usize,
    checkpoint_id: String,
    c: f64,
    train_accuracy: f64,
    test_accuracy: f64,
    train_rows: usize,
    test_rows: usize,
}

pub fn cmd_classify(ctx: &Context) -> Result<String, CliError> {
    let run = ctx.open_existing()?;
    let meta: FeaturesMeta = run.read_json(FEATURES_META, "features")?;
    let load = |name: &str| {
        read_dataset(&run.path(name), DimKind::Features).map_err(|e| match e {
            GrbmError::Io(ref io) if io.kind() == ErrorKind::NotFound => {
                CliError::MissingArtifact(format!("{name} not found; run `grbm features` first"))
            }
            other => other.into(),
        })
    };
    let xt = load(TRAIN_FEATURES)?;
    let xv = load(TEST_FEATURES)?;
    if xt.is_empty() || xv.is_empty() {
        return Err(CliError::Config("feature sets are empty; nothing to classify".into()));
    }
    let labels = |ds: &grbm_core::Dataset| ds.labels.clone().ok_or_else(|| CliError::Other("feature file has no labels".into()));
    let (yt, yv) = (labels(&xt)?, labels(&xv)?);
    let c = run.config().pipeline_config().svm_c;
    let svm = train_l2svm(xt.view(), &yt, c)?;
    write_svm(&run.path(SVM), &svm)?;
    read_svm(&run.path(SVM))?;
    run.write_sidecar(SVM, &serde_json::json!({ "c": c, "checkpoint_id": meta.checkpoint_id }))?;
    let report = ClassifyReport {
        theta: meta.theta,
        t_star: meta.t_star,
        c,
        train_accuracy: accuracy(&svm, xt.view(), &yt)?,
        test_accuracy: accuracy(&svm, xv.view(), &yv)?,
        train_rows: xt.len(),
        test_rows: xv.len(),
        checkpoint_id: meta.checkpoint_id,
    };
    run.write_json(CLASSIFY, &report)?;
    Ok(format!(
        "test accuracy {:.2}% (train {:.2}%) at epoch {}",
        report.test_accuracy, report.train_accuracy, report.t_star
    ))
}

/// Cross-validation callbacks: patches, preprocessing and GRBM training on
/// the fold's images, then pooled features.
struct PipelineCv<'a> {
    images: &'a ImageSet,
    cfg: PipelineConfig,
    penalize_weights: bool,
}

impl CvHooks for PipelineCv<'_> {
    type Model = (PreprocessModel, GrbmParams);

    fn fit_unsupervised(&mut self, rows: &[usize], rho: f64, lambda: f64) -> grbm_core::Result<Self::Model> {
        let subset = self.images.select(rows);
        let mut tc = self.cfg.train.clone();
        tc.sparsity = Some(SparsityConfig { target: rho, strength: lambda, penalize_weights: self.penalize_weights });
        let patches = extract_patches(&subset, self.cfg.rf_size, self.cfg.patches, tc.seed)?;
        let (pre, white) = fit_preprocess(&patches, self.cfg.contrast_epsilon, self.cfg.zca_epsilon)?;
        let init = GrbmParams::initialize(self.cfg.hidden, white.dim(), tc.seed)?;
        let outcome = train(init, white.view(), &tc, &mut NoopObserver)?;
        Ok((pre, outcome.params))
    }

    fn features(&mut self, model: &Self::Model, rows: &[usize], t: f64) -> grbm_core::Result<Array2<f64>> {
        let enc = EncoderConfig { scheme: EncodingScheme::SoftThreshold(t), stride: self.cfg.encoder.stride };
        Ok(Encoder::new(&model.1, &model.0, &enc)?.features(&self.images.select(rows))?.rows)
    }
}

#[derive(Debug, Serialize)]
struct SelectionRow {
    theta: f64,
    t_star: usize,
    checkpoint_id: String,
    test_accuracy: f64,
}

#[derive(Debug, Serialize)]
struct PipelineDoc {
    selections: Vec<SelectionRow>,
    final_epoch: usize,
    final_accuracy: f64,
    peak_epoch: usize,
    ami: Vec<f64>,
    units_above_threshold: usize,
    cv: Option<CvSummary>,
}

#[derive(Debug, Serialize)]
struct CvSummary {
    rho: f64,
    lambda: f64,
    c: f64,
    threshold: f64,
    mean_accuracy: f64,
}

pub fn cmd_pipeline(ctx: &Context) -> Result<String, CliError> {
    let cfg = ctx.resolve()?;
    let (train_images, test_images) = load_images(&cfg)?;
    if train_images.is_empty() || test_images.is_empty() {
        return Err(CliError::Config("pipeline needs non-empty training and test images".into()));
    }
    let mut pc = cfg.pipeline_config();
    if pc.train.epochs == 0 {
        return Err(CliError::Config("train.epochs: pipeline needs at least one epoch".into()));
    }
    let run = RunDir::fresh(&ctx.out_dir(), &cfg)?;
    let mut cv = None;
    if cfg.cross_validate() {
        let cv_images = head(train_images.clone(), pc.classifier_images);
        let labels: Vec<u32> = cv_images.labels().iter().map(|&l| l as u32).collect();
        let mut hooks = PipelineCv {
            images: &cv_images,
            cfg: pc.clone(),
            penalize_weights: cfg.sparsity().is_some_and(|s| s.penalize_weights),
        };
        let report: CvReport = cross_validate(&labels, &cfg.cv_grid(), cfg.seed(), &mut hooks)?;
        run.write_json(CV, &report)?;
        let best = report.best;
        pc.train.sparsity = Some(SparsityConfig {
            target: best.rho,
            strength: best.lambda,
            penalize_weights: hooks.penalize_weights,
        });
        pc.svm_c = best.c;
        pc.encoder.scheme = EncodingScheme::SoftThreshold(best.threshold);
        cv = Some(CvSummary {
            rho: best.rho,
            lambda: best.lambda,
            c: best.c,
            threshold: best.threshold,
            mean_accuracy: report.mean_scores[report.best_index],
        });
    }
    let trained = train_stage(&run, &pc, &train_images, &test_images, false, None)?;
    let final_accuracy = evaluate_params(&trained.params, &trained.preprocess, &train_images, &test_images, &pc)?;
    let mut selections = Vec::with_capacity(pc.thetas.len());
    for &theta in &pc.thetas {
        let (decision, id) = decide(&trained.trace, theta, cfg.smoothing())?;
        let params = trained.store.load(&id)?;
        let test_accuracy = if params == trained.params {
            final_accuracy
        } else {
            evaluate_params(&params, &trained.preprocess, &train_images, &test_images, &pc)?
        };
        selections.push(SelectionRow { theta, t_star: decision.epoch, checkpoint_id: id.0, test_accuracy });
    }
    let units = unit_count_above(&run)?;
    let doc = PipelineDoc {
        final_epoch: trained.trace.entries().last().map_or(0, |e| e.epoch),
        final_accuracy,
        peak_epoch: trained.trace.peak_epoch(),
        ami: trained.trace.values(),
        units_above_threshold: units,
        cv,
        selections,
    };
    run.write_json(PIPELINE, &doc)?;
    let mut summary = format!(
        "AMI peak at epoch {}; final epoch {} accuracy {:.2}%",
        doc.peak_epoch, doc.final_epoch, doc.final_accuracy
    );
    for s in &doc.selections {
        summary.push_str(&format!("\ntheta {:>5}: epoch {:>4} accuracy {:.2}%", s.theta, s.t_star, s.test_accuracy));
    }
    Ok(summary)
}

fn unit_count_above(run: &RunDir) -> Result<usize, CliError> {
    #[derive(Deserialize)]
    struct Units {
        units_above: usize,
    }
    Ok(run.read_json::<Units>(UNITS, "train")?.units_above)
}

#[derive(Serialize)]
struct ToyLine<'a> {
    epoch: usize,
    ami: f64,
    log_likelihood: f64,
    filter_norms: &'a [f64],
    attenuated: usize,
    config_hash: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct ToySummary {
    epochs: usize,
    peak_epoch: usize,
    peak_ami: f64,
    final_ami: f64,
    final_attenuated: usize,
    /// Largest number of filters with norm ≥ half the largest, over all epochs.
    max_filters_at_half: usize,
    snapshots: Vec<usize>,
}

pub fn cmd_toy(ctx: &Context) -> Result<String, CliError> {
    let cfg = ctx.resolve()?;
    let run = RunDir::fresh(&ctx.out_dir(), &cfg)?;
    let tc = cfg.toy_config();
    let toy = run_toy(&tc)?;
    let mut text = String::new();
    for e in &toy.log {
        let line = ToyLine {
            epoch: e.epoch,
            ami: e.ami,
            log_likelihood: e.log_likelihood,
            filter_norms: &e.filter_norms,
            attenuated: e.attenuated,
            config_hash: run.hash(),
            seed: run.seed(),
        };
        text.push_str(&serde_json::to_string(&line).expect("toy log serializes"));
        text.push('\n');
    }
    run.write_text(TOY_LOG, &text)?;
    for (epoch, params) in &toy.snapshots {
        let title = format!("after {epoch} epochs");
        run.write_text(&format!("toy_epoch_{epoch:05}.svg"), &svg::toy_snapshot(&title, &toy.data, params))?;
    }
    let norms: Vec<Series> = (0..tc.hidden)
        .map(|i| Series {
            name: format!("filter {i}"),
            points: toy.log.iter().map(|e| (e.epoch as f64, e.filter_norms[i])).collect(),
        })
        .collect();
    run.write_text("toy_norms.svg", &svg::line_chart("Filter norms", "epoch", "||w_i||", &norms))?;
    let ami = Series { name: "AMI".into(), points: toy.log.iter().map(|e| (e.epoch as f64, e.ami)).collect() };
    run.write_text("toy_ami.svg", &svg::line_chart("Approximated mutual information", "epoch", "nats", &[ami]))?;

    let peak = toy.log.iter().fold(&toy.log[0], |best, e| if e.ami > best.ami { e } else { best });
    let last = toy.log.last().expect("epoch 0 is always logged");
    let summary = ToySummary {
        epochs: tc.epochs,
        peak_epoch: peak.epoch,
        peak_ami: peak.ami,
        final_ami: last.ami,
        final_attenuated: last.attenuated,
        max_filters_at_half: toy
            .log
            .iter()
            .map(|e| tc.hidden - grbm_core::toy::count_below(&e.filter_norms, 0.5))
            .max()
            .unwrap_or(0),
        snapshots: toy.snapshots.iter().map(|s| s.0).collect(),
    };
    run.write_json(TOY_SUMMARY, &summary)?;
    Ok(format!(
        "{} epochs; AMI peak {:.4} at epoch {}, final {:.4}; {} of {} filters attenuated at the end",
        summary.epochs, summary.peak_ami, summary.peak_epoch, summary.final_ami, summary.final_attenuated, tc.hidden
    ))
}

pub fn cmd_verify(ctx: &Context) -> Result<String, CliError> {
    let cfg = ctx.resolve()?;
    let run = RunDir::fresh(&ctx.out_dir(), &cfg)?;
    let (first, count) = cfg.verify_range();
    let report = run_verify(first, count)?;
    run.write_json(VERIFY, &report)?;
    let failed = report.cases.iter().filter(|c| !(c.bound_holds && c.gradient_ok)).count();
    if failed > 0 {
        return Err(CliError::Numeric(format!("{failed} of {count} oracle cases failed; see {VERIFY}")));
    }
    let worst = report.cases.iter().map(|c| c.max_gradient_rel_error).fold(0.0, f64::max);
    Ok(format!("{count} cases passed; worst gradient relative error {worst:.2e}"))
}
