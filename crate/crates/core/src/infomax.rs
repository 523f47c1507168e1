//! Approximated mutual information (AMI) and a-infomax early stopping.
//!
//! AMI is `Σ_i I(H_i; D)` where each term is the entropy of the unit's
//! data-averaged activation minus the data average of its per-point binary
//! entropy. Because hidden units are conditionally independent given a data
//! vector this costs one pass over the data, and it upper-bounds the joint
//! `I(H; D)`.

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{CheckpointId, CheckpointSource};
use crate::error::{GrbmError, Result};
use crate::math::binary_entropy;
use crate::model::hidden_probabilities;
use crate::params::GrbmParams;

/// Rows processed per matrix product when streaming over a dataset.
const CHUNK_ROWS: usize = 4096;

/// Per-unit decomposition of the mutual information between hidden units and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInfoReport {
    /// `I(H_i; D)` in nats, clamped at zero.
    pub per_unit_mi: Vec<f64>,
    /// `S_D(H_i)`
    pub per_unit_marginal_entropy: Vec<f64>,
    /// `S(H_i | D)`
    pub per_unit_conditional_entropy: Vec<f64>,
    pub ami: f64,
    /// Unit indices sorted by ascending MI (stable).
    pub unit_order: Vec<usize>,
}

impl MutualInfoReport {
    /// Units whose MI exceeds `threshold` nats, in ascending MI order.
    pub fn units_above(&self, threshold: f64) -> Vec<usize> {
        self.unit_order
            .iter()
            .copied()
            .filter(|&i| self.per_unit_mi[i] > threshold)
            .collect()
    }

    /// Position in `unit_order` of the first unit whose MI exceeds `threshold`.
    pub fn threshold_rank(&self, threshold: f64) -> usize {
        self.unit_order
            .iter()
            .position(|&i| self.per_unit_mi[i] > threshold)
            .unwrap_or(self.unit_order.len())
    }
}

fn check_data(params: &GrbmParams, data: ArrayView2<f64>) -> Result<()> {
    if data.nrows() == 0 {
        return Err(GrbmError::contract("mutual information needs a non-empty dataset"));
    }
    if data.ncols() != params.n_visible() {
        return Err(GrbmError::contract(format!(
            "dataset has {} columns, model expects {}",
            data.ncols(),
            params.n_visible()
        )));
    }
    Ok(())
}

/// `p(H_i = 1)` under the empirical data distribution.
pub fn unit_activation_marginal(params: &GrbmParams, data: ArrayView2<f64>) -> Result<Array1<f64>> {
    check_data(params, data)?;
    let mut sum = Array1::<f64>::zeros(params.n_hidden());
    for chunk in data.axis_chunks_iter(Axis(0), CHUNK_ROWS) {
        sum += &hidden_probabilities(params, chunk)?.sum_axis(Axis(0));
    }
    Ok(sum / data.nrows() as f64)
}

pub fn unit_mutual_information(params: &GrbmParams, data: ArrayView2<f64>) -> Result<MutualInfoReport> {
    check_data(params, data)?;
    let m = params.n_hidden();
    let mut activation = Array1::<f64>::zeros(m);
    let mut conditional = Array1::<f64>::zeros(m);
    for chunk in data.axis_chunks_iter(Axis(0), CHUNK_ROWS) {
        let probs = hidden_probabilities(params, chunk)?;
        activation += &probs.sum_axis(Axis(0));
        conditional += &probs.mapv(binary_entropy).sum_axis(Axis(0));
    }
    let n = data.nrows() as f64;
    let marginal: Vec<f64> = activation.iter().map(|&s| binary_entropy(s / n)).collect();
    let conditional: Vec<f64> = conditional.iter().map(|&s| s / n).collect();
    let per_unit_mi: Vec<f64> = marginal
        .iter()
        .zip(&conditional)
        .map(|(s, c)| (s - c).max(0.0))
        .collect();
    let mut unit_order: Vec<usize> = (0..m).collect();
    unit_order.sort_by(|&i, &j| per_unit_mi[i].total_cmp(&per_unit_mi[j]));
    Ok(MutualInfoReport {
        ami: per_unit_mi.iter().sum(),
        per_unit_mi,
        per_unit_marginal_entropy: marginal,
        per_unit_conditional_entropy: conditional,
        unit_order,
    })
}

/// `AMI = Σ_i I(H_i; D)` in nats.
pub fn ami(params: &GrbmParams, data: ArrayView2<f64>) -> Result<f64> {
    Ok(unit_mutual_information(params, data)?.ami)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub epoch: usize,
    pub ami: f64,
    pub checkpoint: Option<CheckpointId>,
}

/// AMI recorded at increasing epochs, with the running peak.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AmiTrace {
    entries: Vec<TraceEntry>,
    peak_value: f64,
    peak_epoch: usize,
}

impl AmiTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = TraceEntry>) -> Result<Self> {
        let mut trace = Self::new();
        for e in entries {
            trace.push(e.epoch, e.ami, e.checkpoint)?;
        }
        Ok(trace)
    }

    /// Trace with epochs `0..values.len()` and no checkpoints.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::from_entries(values.iter().enumerate().map(|(epoch, &ami)| TraceEntry {
            epoch,
            ami,
            checkpoint: None,
        }))
    }

    pub fn push(&mut self, epoch: usize, ami: f64, checkpoint: Option<CheckpointId>) -> Result<()> {
        if !ami.is_finite() {
            return Err(GrbmError::numeric(format!("AMI at epoch {epoch} is not finite")));
        }
        if let Some(last) = self.entries.last() {
            if epoch <= last.epoch {
                return Err(GrbmError::contract(format!(
                    "trace epochs must increase: {epoch} after {}",
                    last.epoch
                )));
            }
        }
        if self.entries.is_empty() || ami > self.peak_value {
            self.peak_value = ami;
            self.peak_epoch = epoch;
        }
        self.entries.push(TraceEntry {
            epoch,
            ami,
            checkpoint,
        });
        Ok(())
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.ami).collect()
    }

    /// Largest AMI so far (earliest epoch on ties).
    pub fn peak_value(&self) -> f64 {
        self.peak_value
    }

    pub fn peak_epoch(&self) -> usize {
        self.peak_epoch
    }

    /// Trailing moving average over `window` entries; `window <= 1` is the identity.
    pub fn smoothed(&self, window: usize) -> AmiTrace {
        if window <= 1 {
            return self.clone();
        }
        let values = self.values();
        let mut out = AmiTrace::new();
        for (k, e) in self.entries.iter().enumerate() {
            let start = (k + 1).saturating_sub(window);
            let slice = &values[start..=k];
            let mean = slice.iter().sum::<f64>() / slice.len() as f64;
            out.push(e.epoch, mean, e.checkpoint.clone())
                .expect("smoothing preserves epoch order and finiteness");
        }
        out
    }
}

/// `-AMI + constant` for every trace entry.
pub fn ami_bar(trace: &AmiTrace, constant: f64) -> Vec<f64> {
    trace.entries.iter().map(|e| constant - e.ami).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriterion {
    pub theta: f64,
}

impl StopCriterion {
    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(GrbmError::Config(format!("theta must be finite, got {theta}")));
        }
        Ok(StopCriterion { theta })
    }

    /// Threshold values evaluated in the reference experiments.
    pub const REFERENCE_THETAS: [f64; 5] = [-1.5, -0.7, 0.0, 0.7, 1.5];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopDecision {
    pub theta: f64,
    /// Position of the selected entry in the trace.
    pub index: usize,
    pub epoch: usize,
    pub checkpoint: Option<CheckpointId>,
}

fn sign(x: i64) -> f64 {
    match x.cmp(&0) {
        std::cmp::Ordering::Less => -1.0,
        std::cmp::Ordering::Equal => 0.0,
        std::cmp::Ordering::Greater => 1.0,
    }
}

/// Signed loss of AMI relative to its peak:
/// `R''(T) = (max AMI - AMI(T)) · Sign(T - T_min)` where `T_min` is the earliest
/// epoch minimising the loss.
pub fn signed_peak_loss(trace: &AmiTrace) -> Vec<f64> {
    let values = trace.values();
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let loss: Vec<f64> = values.iter().map(|v| peak - v).collect();
    let Some(t_min) = argmin_earliest(&loss) else {
        return Vec::new();
    };
    let t_min_epoch = trace.entries[t_min].epoch as i64;
    trace
        .entries
        .iter()
        .zip(&loss)
        .map(|(e, &l)| l * sign(e.epoch as i64 - t_min_epoch))
        .collect()
}

fn argmin_earliest(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v < values[b]) {
            best = Some(k);
        }
    }
    best
}

/// Epoch whose signed peak loss is closest to `θ` (earliest on ties).
///
/// Does not require a checkpoint at the chosen epoch; see [`select_parameters`].
pub fn early_stop_index(trace: &AmiTrace, criterion: StopCriterion) -> Result<StopDecision> {
    if trace.is_empty() {
        return Err(GrbmError::contract("early stopping needs a non-empty AMI trace"));
    }
    let distance: Vec<f64> = signed_peak_loss(trace)
        .iter()
        .map(|r| (r - criterion.theta).abs())
        .collect();
    let index = argmin_earliest(&distance).expect("non-empty");
    let entry = &trace.entries[index];
    Ok(StopDecision {
        theta: criterion.theta,
        index,
        epoch: entry.epoch,
        checkpoint: entry.checkpoint.clone(),
    })
}

/// Loads the parameters checkpointed at the early-stopping epoch.
pub fn select_parameters(
    trace: &AmiTrace,
    criterion: StopCriterion,
    store: &dyn CheckpointSource,
) -> Result<(StopDecision, GrbmParams)> {
    let decision = early_stop_index(trace, criterion)?;
    let id = decision
        .checkpoint
        .clone()
        .ok_or(GrbmError::Resolution {
            epoch: decision.epoch,
        })?;
    let params = store.load(&id)?;
    Ok((decision, params))
}
