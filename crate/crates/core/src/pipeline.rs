//! End-to-end image pipeline: patches → preprocessing → GRBM training with
//! per-epoch AMI → checkpoint selection per θ → pooled features → L2-SVM.

use serde::{Deserialize, Serialize};

use crate::checkpoint::CheckpointSource;
use crate::classify::{accuracy, train_l2svm};
use crate::data::{extract_patches, fit_preprocess, ImageSet, PreprocessModel, CONTRAST_EPSILON, ZCA_EPSILON};
use crate::encode::{Encoder, EncoderConfig};
use crate::error::{GrbmError, Result};
use crate::infomax::{select_parameters, unit_mutual_information, AmiTrace, MutualInfoReport, StopCriterion, StopDecision};
use crate::params::GrbmParams;
use crate::train::{train, TrainConfig, TrainObserver};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rf_size: usize,
    pub patches: usize,
    pub hidden: usize,
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
    pub svm_c: f64,
    /// The SVM is trained on the first this-many training images; 0 means all.
    pub classifier_images: usize,
    pub thetas: Vec<f64>,
    pub contrast_epsilon: f64,
    pub zca_epsilon: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rf_size: 6,
            patches: 100_000,
            hidden: 1600,
            train: TrainConfig::default(),
            encoder: EncoderConfig::default(),
            svm_c: 35.0,
            classifier_images: 0,
            thetas: StopCriterion::REFERENCE_THETAS.to_vec(),
            contrast_epsilon: CONTRAST_EPSILON,
            zca_epsilon: ZCA_EPSILON,
        }
    }
}

/// Output of the unsupervised half.
#[derive(Debug, Clone)]
pub struct UnsupervisedRun {
    pub preprocess: PreprocessModel,
    pub trace: AmiTrace,
    pub final_params: GrbmParams,
    /// Per-unit MI of the final model on the evaluation patches.
    pub final_report: MutualInfoReport,
}

/// Samples patches, fits preprocessing and trains the GRBM, checkpointing
/// through `store`.
pub fn run_unsupervised<S: TrainObserver + CheckpointSource>(
    images: &ImageSet,
    cfg: &PipelineConfig,
    store: &mut S,
) -> Result<UnsupervisedRun> {
    if images.is_empty() {
        return Err(GrbmError::contract("pipeline needs training images"));
    }
    let patches = extract_patches(images, cfg.rf_size, cfg.patches, cfg.train.seed)?;
    let (preprocess, white) = fit_preprocess(&patches, cfg.contrast_epsilon, cfg.zca_epsilon)?;
    let init = GrbmParams::initialize(cfg.hidden, white.dim(), cfg.train.seed)?;
    let outcome = train(init, white.view(), &cfg.train, store)?;
    let eval = crate::train::evaluation_rows(white.len(), cfg.train.eval_subset, cfg.train.seed);
    let final_report = unit_mutual_information(&outcome.params, white.rows.select(ndarray::Axis(0), &eval).view())?;
    Ok(UnsupervisedRun {
        preprocess,
        trace: outcome.trace,
        final_params: outcome.params,
        final_report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub decision: StopDecision,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub selections: Vec<SelectionResult>,
    pub final_epoch: usize,
    pub final_accuracy: f64,
    pub peak_epoch: usize,
    pub ami: Vec<f64>,
}

/// Test accuracy of an SVM trained on features from `params`.
pub fn evaluate_params(
    params: &GrbmParams,
    preprocess: &PreprocessModel,
    train_images: &ImageSet,
    test_images: &ImageSet,
    cfg: &PipelineConfig,
) -> Result<f64> {
    if train_images.is_empty() || test_images.is_empty() {
        return Err(GrbmError::contract("feature sets must be non-empty"));
    }
    let encoder = Encoder::new(params, preprocess, &cfg.encoder)?;
    let xt = if cfg.classifier_images > 0 && cfg.classifier_images < train_images.len() {
        let head: Vec<usize> = (0..cfg.classifier_images).collect();
        encoder.features(&train_images.select(&head))?
    } else {
        encoder.features(train_images)?
    };
    let xv = encoder.features(test_images)?;
    let svm = train_l2svm(xt.view(), xt.labels.as_deref().expect("image labels"), cfg.svm_c)?;
    accuracy(&svm, xv.view(), xv.labels.as_deref().expect("image labels"))
}

/// Full pipeline; accuracies at every θ-selected checkpoint and at the final epoch.
pub fn run_pipeline<S: TrainObserver + CheckpointSource>(
    train_images: &ImageSet,
    test_images: &ImageSet,
    cfg: &PipelineConfig,
    store: &mut S,
) -> Result<(UnsupervisedRun, PipelineReport)> {
    let run = run_unsupervised(train_images, cfg, store)?;
    if run.trace.is_empty() {
        return Err(GrbmError::Config("pipeline needs at least one training epoch".into()));
    }
    let final_accuracy = evaluate_params(&run.final_params, &run.preprocess, train_images, test_images, cfg)?;
    let mut selections = Vec::with_capacity(cfg.thetas.len());
    for &theta in &cfg.thetas {
        let (decision, params) = select_parameters(&run.trace, StopCriterion::new(theta)?, &*store)?;
        let test_accuracy = if params == run.final_params {
            final_accuracy
        } else {
            evaluate_params(&params, &run.preprocess, train_images, test_images, cfg)?
        };
        selections.push(SelectionResult { decision, test_accuracy });
    }
    let report = PipelineReport {
        selections,
        final_epoch: run.trace.entries().last().expect("non-empty").epoch,
        final_accuracy,
        peak_epoch: run.trace.peak_epoch(),
        ami: run.trace.values(),
    };
    Ok((run, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint::MemoryCheckpoints;
    use crate::data::synthetic_edge_images;
    use crate::encode::EncodingScheme;
    use crate::train::Algorithm;

    fn small() -> PipelineConfig {
        PipelineConfig {
            rf_size: 6,
            patches: 2000,
            hidden: 8,
            train: TrainConfig {
                epochs: 3,
                learning_rate: 0.003,
                batch_size: 100,
                algorithm: Algorithm::Pcd { k: 1, n_chains: 100 },
                eval_subset: 1000,
                ..TrainConfig::default()
            },
            encoder: EncoderConfig { scheme: EncodingScheme::SoftThreshold(0.25), stride: 2 },
            svm_c: 35.0,
            thetas: vec![0.0, 1.5],
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn pipeline_is_reproducible() {
        let train_images = synthetic_edge_images(60, 1);
        let test_images = synthetic_edge_images(30, 2);
        let cfg = small();
        let (_, a) = run_pipeline(&train_images, &test_images, &cfg, &mut MemoryCheckpoints::default()).unwrap();
        let (_, b) = run_pipeline(&train_images, &test_images, &cfg, &mut MemoryCheckpoints::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ami.len(), 4);
        assert_eq!(a.selections.len(), 2);
        assert!(a.final_accuracy >= 0.0 && a.final_accuracy <= 100.0);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let empty = ImageSet::new(vec![], vec![]).unwrap();
        let some = synthetic_edge_images(5, 1);
        let cfg = small();
        assert!(run_pipeline(&empty, &some, &cfg, &mut MemoryCheckpoints::default()).is_err());
        assert!(run_pipeline(&some, &empty, &cfg, &mut MemoryCheckpoints::default()).is_err());
    }
}
