//! The 2-D mixture experiment: a four-filter GRBM trained with the exact
//! likelihood gradient, tracking filter norms and AMI.

use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{toy_gmm_generate, Dataset, ToyGmmSpec};
use crate::error::{GrbmError, Result};
use crate::infomax::ami;
use crate::oracle::ExactModel;
use crate::params::{GradientEstimate, GrbmParams};
use crate::rng::{self, purpose};

/// Fraction of the largest filter norm below which a filter counts as attenuated.
pub const ATTENUATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub spec: ToyGmmSpec,
    pub samples: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs at which full parameter snapshots are kept.
    pub snapshots: Vec<usize>,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            spec: ToyGmmSpec::default(),
            samples: 1000,
            hidden: 4,
            epochs: 2000,
            learning_rate: 0.1,
            batch_size: 100,
            seed: 0,
            snapshots: vec![10, 140, 2000],
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate().map_err(|e| GrbmError::Config(e.to_string()))?;
        if self.samples == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(GrbmError::Config("samples, batch_size and hidden must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GrbmError::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEpoch {
    pub epoch: usize,
    pub filter_norms: Vec<f64>,
    pub ami: f64,
    pub log_likelihood: f64,
    /// Filters with norm below 10% of the largest.
    pub attenuated: usize,
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub data: Dataset,
    pub log: Vec<ToyEpoch>,
    pub snapshots: Vec<(usize, GrbmParams)>,
    pub params: GrbmParams,
}

/// Number of filters whose norm is below `fraction` of the largest norm.
pub fn count_below(norms: &[f64], fraction: f64) -> usize {
    let max = norms.iter().cloned().fold(0.0, f64::max);
    norms.iter().filter(|&&n| n < fraction * max).count()
}

fn record(params: &GrbmParams, data: &Dataset, epoch: usize) -> Result<ToyEpoch> {
    let norms = params.filter_norms();
    let exact = ExactModel::new(params.clone())?;
    Ok(ToyEpoch {
        epoch,
        attenuated: count_below(&norms, ATTENUATION_FRACTION),
        filter_norms: norms,
        ami: ami(params, data.view())?,
        log_likelihood: exact.exact_log_likelihood(data.view())?,
    })
}

/// Runs the experiment. Epoch 0 (the initial state) is always logged and
/// snapshotted; with zero epochs nothing else happens.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyRun> {
    cfg.validate()?;
    let data = toy_gmm_generate(&cfg.spec, cfg.samples)?;
    let mut params = GrbmParams::initialize(cfg.hidden, 2, cfg.seed)?;
    let mut log = vec![record(&params, &data, 0)?];
    let mut snapshots = vec![(0, params.clone())];
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = rng::stream(cfg.seed, purpose::TOY, 1 + epoch as u64);
        order.shuffle(&mut rng);
        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.rows.select(Axis(0), rows);
            let grad = ExactModel::new(params.clone())?.exact_gradient(batch.view())?;
            step(&mut params, &grad, cfg.learning_rate).map_err(|e| e.at(epoch, b))?;
        }
        log.push(record(&params, &data, epoch)?);
        if cfg.snapshots.contains(&epoch) {
            snapshots.push((epoch, params.clone()));
        }
    }
    Ok(ToyRun {
        data,
        log,
        snapshots,
        params,
    })
}

fn step(params: &mut GrbmParams, grad: &GradientEstimate, lr: f64) -> Result<()> {
    params.weights_mut().scaled_add(lr, &grad.dw);
    params.hidden_bias_mut().scaled_add(lr, &grad.da);
    params.visible_bias_mut().scaled_add(lr, &grad.db);
    if !params.is_finite() {
        return Err(GrbmError::numeric("exact-gradient update produced non-finite values"));
    }
    Ok(())
}
