//! Stochastic maximum-likelihood training: CD-k and PCD gradient estimates,
//! the sparsity penalty, momentum SGD and the epoch loop.
//!
//! Only W, a and b are learned; σ stays at its initial value.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{CheckpointId, CheckpointSource, MemoryCheckpoints};
use crate::error::{GrbmError, Result};
use crate::infomax::{unit_mutual_information, AmiTrace};
use crate::model::{
    bernoulli_in_place, fed, gaussian_in_place, hidden_probabilities, visible_means,
};
use crate::params::{GradientEstimate, GrbmParams};
use crate::rng::{self, purpose, Rng, StreamState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Contrastive divergence with `k` Gibbs steps started at the data.
    Cd { k: usize },
    /// Persistent contrastive divergence with `n_chains` fantasy particles.
    Pcd { k: usize, n_chains: usize },
}

impl Algorithm {
    pub fn k(&self) -> usize {
        match *self {
            Algorithm::Cd { k } | Algorithm::Pcd { k, .. } => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityConfig {
    /// ρ: desired mean activation probability.
    pub target: f64,
    /// λ: penalty strength.
    pub strength: f64,
    /// Also push the weights (off by default; the plain rule only moves hidden biases).
    pub penalize_weights: bool,
}

impl SparsityConfig {
    pub fn new(target: f64, strength: f64) -> Result<Self> {
        let cfg = SparsityConfig {
            target,
            strength,
            penalize_weights: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target > 0.0 && self.target < 1.0) {
            return Err(GrbmError::Config(format!(
                "sparsity target must lie in (0, 1), got {}",
                self.target
            )));
        }
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(GrbmError::Config(format!(
                "sparsity strength must be >= 0, got {}",
                self.strength
            )));
        }
        Ok(())
    }
}

/// How the visible state that feeds the negative statistics is formed on the
/// last Gibbs sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reconstruction {
    /// A Gaussian draw around `b + Wᵀh`.
    #[default]
    Sampled,
    /// The conditional mean `b + Wᵀh`. Persistent chains still store the
    /// sampled state; only the statistics use the mean.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// δ
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub reconstruction: Reconstruction,
    pub sparsity: Option<SparsityConfig>,
    pub momentum: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// Rows of the training set (fixed by seed) on which AMI is evaluated each epoch.
    pub eval_subset: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.003,
            epochs: 80,
            batch_size: 100,
            algorithm: Algorithm::Pcd { k: 1, n_chains: 100 },
            reconstruction: Reconstruction::Sampled,
            sparsity: None,
            momentum: 0.0,
            seed: 0,
            checkpoint_every: 1,
            eval_subset: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GrbmError::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.eval_subset == 0 {
            return bad("eval_subset must be >= 1".into());
        }
        match self.algorithm {
            Algorithm::Cd { k } | Algorithm::Pcd { k, .. } if k == 0 => {
                return bad("Gibbs steps k must be >= 1".into())
            }
            Algorithm::Pcd { n_chains: 0, .. } => return bad("PCD needs n_chains >= 1".into()),
            _ => {}
        }
        if let Some(s) = &self.sparsity {
            s.validate()?;
        }
        Ok(())
    }

    /// Minibatch updates per epoch for a dataset of `rows` cases.
    pub fn batches_per_epoch(&self, rows: usize) -> usize {
        rows.div_ceil(self.batch_size)
    }
}

/// Fantasy particles for PCD, each advanced by its own random stream.
#[derive(Debug, Clone)]
pub struct PersistentChains {
    states: Array2<f64>,
    streams: Vec<Rng>,
}

impl PersistentChains {
    /// Chains started at rows of `data` drawn (with replacement) from the seeded stream.
    pub fn from_data(data: ArrayView2<f64>, n_chains: usize, seed: u64) -> Result<Self> {
        if n_chains == 0 || data.nrows() == 0 {
            return Err(GrbmError::contract("PCD needs at least one chain and one data row"));
        }
        let mut pick = rng::stream(seed, purpose::CHAIN, u64::MAX);
        let rows: Vec<usize> = (0..n_chains)
            .map(|_| pick.random_range(0..data.nrows()))
            .collect();
        Self::new(data.select(Axis(0), &rows), seed)
    }

    /// Chains at the given states; chain `i` uses stream `i` under `seed`.
    pub fn new(states: Array2<f64>, seed: u64) -> Result<Self> {
        if states.nrows() == 0 {
            return Err(GrbmError::contract("PCD needs at least one chain"));
        }
        if states.iter().any(|x| !x.is_finite()) {
            return Err(GrbmError::contract("chain states must be finite"));
        }
        let streams = (0..states.nrows())
            .map(|i| rng::stream(seed, purpose::CHAIN, i as u64))
            .collect();
        Ok(PersistentChains { states, streams })
    }

    pub fn states(&self) -> ArrayView2<'_, f64> {
        self.states.view()
    }

    pub fn n_chains(&self) -> usize {
        self.states.nrows()
    }

    /// Runs `k` sweeps and returns the conditional visible means of the last
    /// one (the start state when `k == 0`).
    pub fn advance(&mut self, params: &GrbmParams, k: usize) -> Result<Array2<f64>> {
        let mut means = self.states.clone();
        for _ in 0..k {
            let mut hidden = hidden_probabilities(params, self.states.view())?;
            for (mut row, stream) in hidden.rows_mut().into_iter().zip(&mut self.streams) {
                bernoulli_in_place(row.as_slice_mut().expect("contiguous"), stream);
            }
            means = visible_means(params, hidden.view())?;
            let mut visible = means.clone();
            for (mut row, stream) in visible.rows_mut().into_iter().zip(&mut self.streams) {
                gaussian_in_place(row.as_slice_mut().expect("contiguous"), params.sigma(), stream);
            }
            self.states = visible;
        }
        if self.states.iter().any(|x| !x.is_finite()) {
            return Err(GrbmError::numeric("persistent chain state diverged"));
        }
        Ok(means)
    }

    pub fn snapshot(&self) -> ChainSnapshot {
        ChainSnapshot {
            states: self.states.clone(),
            streams: self.streams.iter().map(StreamState::capture).map(Into::into).collect(),
        }
    }

    pub fn restore(snapshot: &ChainSnapshot) -> Self {
        PersistentChains {
            states: snapshot.states.clone(),
            streams: snapshot.streams.iter().map(|s| StreamState::from(*s).restore()).collect(),
        }
    }
}

/// Serializable chain state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSnapshot {
    pub states: Array2<f64>,
    pub streams: Vec<SerializedStream>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerializedStream {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos_hi: u64,
    pub word_pos_lo: u64,
}

impl From<StreamState> for SerializedStream {
    fn from(s: StreamState) -> Self {
        SerializedStream {
            seed: s.seed,
            stream: s.stream,
            word_pos_hi: (s.word_pos >> 64) as u64,
            word_pos_lo: s.word_pos as u64,
        }
    }
}

impl From<SerializedStream> for StreamState {
    fn from(s: SerializedStream) -> Self {
        StreamState {
            seed: s.seed,
            stream: s.stream,
            word_pos: (u128::from(s.word_pos_hi) << 64) | u128::from(s.word_pos_lo),
        }
    }
}

/// `k` Gibbs sweeps from `start`, all sampling drawn in row order from one stream.
pub fn gibbs_chain(
    params: &GrbmParams,
    start: ArrayView2<f64>,
    k: usize,
    rng: &mut Rng,
) -> Result<Array2<f64>> {
    gibbs_chain_with(params, start, k, Reconstruction::Sampled, rng)
}

/// As [`gibbs_chain`], with the last visible state formed per `recon`.
pub fn gibbs_chain_with(
    params: &GrbmParams,
    start: ArrayView2<f64>,
    k: usize,
    recon: Reconstruction,
    rng: &mut Rng,
) -> Result<Array2<f64>> {
    let mut v = start.to_owned();
    for sweep in 0..k {
        let mut h = hidden_probabilities(params, v.view())?;
        bernoulli_in_place(h.as_slice_mut().expect("standard layout"), rng);
        v = visible_means(params, h.view())?;
        if sweep + 1 == k && recon == Reconstruction::Mean {
            break;
        }
        for mut row in v.rows_mut() {
            gaussian_in_place(row.as_slice_mut().expect("contiguous"), params.sigma(), rng);
        }
    }
    Ok(v)
}

/// Sufficient statistics `(E[p(H|v) vᵀ/σ²], E[p(H|v)], E[(v-b)/σ²])` of a set of visible vectors.
fn phase_statistics(params: &GrbmParams, rows: ArrayView2<f64>) -> Result<GradientEstimate> {
    let n = rows.nrows() as f64;
    let prec = params.precision();
    let probs = hidden_probabilities(params, rows)?;
    let scaled = &rows * &prec;
    Ok(GradientEstimate {
        dw: probs.t().dot(&scaled) / n,
        da: probs.sum_axis(Axis(0)) / n,
        db: (rows.sum_axis(Axis(0)) / n - params.visible_bias()) * &prec,
    })
}

/// Positive statistics from `positive` minus negative statistics from `negative`,
/// each averaged over its own rows.
pub fn gradient_from_phases(
    params: &GrbmParams,
    positive: ArrayView2<f64>,
    negative: ArrayView2<f64>,
) -> Result<GradientEstimate> {
    if positive.nrows() == 0 || negative.nrows() == 0 {
        return Err(GrbmError::contract("gradient phases need at least one row each"));
    }
    let mut grad = phase_statistics(params, positive)?;
    grad.add_scaled(-1.0, &phase_statistics(params, negative)?);
    if !grad.is_finite() {
        return Err(GrbmError::numeric("gradient estimate is not finite"));
    }
    Ok(grad)
}

/// CD-k: the negative phase is a `k`-step Gibbs reconstruction of the batch.
pub fn cd_gradient(
    params: &GrbmParams,
    batch: ArrayView2<f64>,
    k: usize,
    rng: &mut Rng,
) -> Result<GradientEstimate> {
    cd_gradient_with(params, batch, k, Reconstruction::Sampled, rng)
}

pub fn cd_gradient_with(
    params: &GrbmParams,
    batch: ArrayView2<f64>,
    k: usize,
    recon: Reconstruction,
    rng: &mut Rng,
) -> Result<GradientEstimate> {
    if k == 0 {
        return Err(GrbmError::contract("CD needs k >= 1"));
    }
    if batch.nrows() == 0 {
        return Err(GrbmError::contract("CD needs a non-empty batch"));
    }
    let negative = gibbs_chain_with(params, batch, k, recon, rng)?;
    gradient_from_phases(params, batch, negative.view())
}

/// PCD: the negative phase comes from the persistent chains after `k` more sweeps.
pub fn pcd_gradient(
    params: &GrbmParams,
    batch: ArrayView2<f64>,
    chains: &mut PersistentChains,
    k: usize,
) -> Result<GradientEstimate> {
    pcd_gradient_with(params, batch, chains, k, Reconstruction::Sampled)
}

pub fn pcd_gradient_with(
    params: &GrbmParams,
    batch: ArrayView2<f64>,
    chains: &mut PersistentChains,
    k: usize,
    recon: Reconstruction,
) -> Result<GradientEstimate> {
    if k == 0 {
        return Err(GrbmError::contract("PCD needs k >= 1"));
    }
    if batch.nrows() == 0 {
        return Err(GrbmError::contract("PCD needs a non-empty batch"));
    }
    let means = chains.advance(params, k)?;
    match recon {
        Reconstruction::Sampled => gradient_from_phases(params, batch, chains.states()),
        Reconstruction::Mean => gradient_from_phases(params, batch, means.view()),
    }
}

/// Sparsity term: `da_i = λ(ρ - q_i)` where `q_i` is the batch-mean activation.
pub fn sparsity_adjustment(
    params: &GrbmParams,
    batch: ArrayView2<f64>,
    cfg: &SparsityConfig,
) -> Result<GradientEstimate> {
    let mut grad = GradientEstimate::zeros_like(params);
    if batch.nrows() == 0 {
        return Err(GrbmError::contract("sparsity needs a non-empty batch"));
    }
    let q = hidden_probabilities(params, batch)?
        .mean_axis(Axis(0))
        .expect("non-empty");
    let push = q.mapv(|q| cfg.strength * (cfg.target - q));
    if cfg.penalize_weights {
        let mean_scaled = batch.mean_axis(Axis(0)).expect("non-empty") * params.precision();
        let push_col = push.view().insert_axis(Axis(1));
        let mean_row = mean_scaled.view().insert_axis(Axis(0));
        grad.dw = push_col.dot(&mean_row);
    }
    grad.da = push;
    Ok(grad)
}

/// Momentum SGD on W, a and b: `velocity ← μ·velocity + δ·grad; params ← params + velocity`.
pub fn apply_update(
    params: &mut GrbmParams,
    grad: &GradientEstimate,
    cfg: &TrainConfig,
    velocity: &mut GradientEstimate,
) -> Result<()> {
    if !grad.matches(params) || !velocity.matches(params) {
        return Err(GrbmError::contract("gradient shape does not match parameters"));
    }
    velocity.dw *= cfg.momentum;
    velocity.da *= cfg.momentum;
    velocity.db *= cfg.momentum;
    velocity.add_scaled(cfg.learning_rate, grad);
    let mut w = params.weights_mut();
    w += &velocity.dw;
    let mut a = params.hidden_bias_mut();
    a += &velocity.da;
    let mut b = params.visible_bias_mut();
    b += &velocity.db;
    if !params.is_finite() {
        return Err(GrbmError::numeric("parameter update produced non-finite values"));
    }
    Ok(())
}

/// Metrics emitted at each epoch boundary (epoch 0 is the initial state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ami: f64,
    pub fed: Option<f64>,
    pub mean_abs_weight: f64,
    /// Mean hidden activation probability on the evaluation subset.
    pub sparsity_mean: f64,
    pub filter_norms: Vec<f64>,
    pub checkpoint: Option<CheckpointId>,
}

/// Receives per-epoch metrics and decides where checkpoints go.
pub trait TrainObserver {
    /// Persists `params` for `epoch`; returns the id to record in the trace.
    fn checkpoint(
        &mut self,
        _epoch: usize,
        _ami: f64,
        _params: &GrbmParams,
    ) -> Result<Option<CheckpointId>> {
        Ok(None)
    }

    fn on_epoch(&mut self, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }

    /// Called after every epoch with the full resumable state.
    fn on_state(&mut self, _state: &SessionState) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
#[derive(Debug, Default)]
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

impl TrainObserver for MemoryCheckpoints {
    fn checkpoint(&mut self, epoch: usize, _ami: f64, params: &GrbmParams) -> Result<Option<CheckpointId>> {
        Ok(Some(self.insert(epoch, params.clone())))
    }
}

/// Everything needed to continue a run bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub config: TrainConfig,
    pub params_weights: Array2<f64>,
    pub params_hidden_bias: Array1<f64>,
    pub params_visible_bias: Array1<f64>,
    pub params_sigma: Array1<f64>,
    pub velocity_dw: Array2<f64>,
    pub velocity_da: Array1<f64>,
    pub velocity_db: Array1<f64>,
    pub chains: Option<ChainSnapshot>,
    /// Last completed epoch (0 means only the initial state was evaluated).
    pub epoch: usize,
    pub trace: AmiTrace,
    pub log: Vec<EpochRecord>,
}

/// A training run that can be stopped after any epoch and resumed.
#[derive(Debug, Clone)]
pub struct TrainSession {
    config: TrainConfig,
    params: GrbmParams,
    velocity: GradientEstimate,
    chains: Option<PersistentChains>,
    epoch: Option<usize>,
    trace: AmiTrace,
    log: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: GrbmParams,
    pub trace: AmiTrace,
    pub log: Vec<EpochRecord>,
}

impl TrainSession {
    pub fn new(params: GrbmParams, data: ArrayView2<f64>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        check_data(&params, data)?;
        let chains = match config.algorithm {
            Algorithm::Pcd { n_chains, .. } => {
                Some(PersistentChains::from_data(data, n_chains, config.seed)?)
            }
            Algorithm::Cd { .. } => None,
        };
        Ok(TrainSession {
            velocity: GradientEstimate::zeros_like(&params),
            config,
            params,
            chains,
            epoch: None,
            trace: AmiTrace::new(),
            log: Vec::new(),
        })
    }

    pub fn from_state(state: SessionState) -> Result<Self> {
        state.config.validate()?;
        let params = GrbmParams::new(
            state.params_weights,
            state.params_hidden_bias,
            state.params_visible_bias,
            state.params_sigma,
        )?;
        let velocity = GradientEstimate {
            dw: state.velocity_dw,
            da: state.velocity_da,
            db: state.velocity_db,
        };
        if !velocity.matches(&params) {
            return Err(GrbmError::contract("resume state velocity does not match parameters"));
        }
        Ok(TrainSession {
            config: state.config,
            params,
            velocity,
            chains: state.chains.as_ref().map(PersistentChains::restore),
            epoch: Some(state.epoch),
            trace: state.trace,
            log: state.log,
        })
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            config: self.config.clone(),
            params_weights: self.params.weights().to_owned(),
            params_hidden_bias: self.params.hidden_bias().to_owned(),
            params_visible_bias: self.params.visible_bias().to_owned(),
            params_sigma: self.params.sigma().to_owned(),
            velocity_dw: self.velocity.dw.clone(),
            velocity_da: self.velocity.da.clone(),
            velocity_db: self.velocity.db.clone(),
            chains: self.chains.as_ref().map(PersistentChains::snapshot),
            epoch: self.epoch.unwrap_or(0),
            trace: self.trace.clone(),
            log: self.log.clone(),
        }
    }

    pub fn params(&self) -> &GrbmParams {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn trace(&self) -> &AmiTrace {
        &self.trace
    }

    pub fn log(&self) -> &[EpochRecord] {
        &self.log
    }

    /// Last completed epoch, if any has been evaluated.
    pub fn completed_epoch(&self) -> Option<usize> {
        self.epoch
    }

    /// Trains until `until_epoch` (inclusive), evaluating epoch 0 first if needed.
    /// `until_epoch = 0` evaluates and checkpoints the initial state only.
    pub fn run_until(
        &mut self,
        data: ArrayView2<f64>,
        holdout: Option<ArrayView2<f64>>,
        until_epoch: usize,
        observer: &mut dyn TrainObserver,
    ) -> Result<()> {
        check_data(&self.params, data)?;
        let eval_rows = evaluation_rows(data.nrows(), self.config.eval_subset, self.config.seed);
        let eval = data.select(Axis(0), &eval_rows);
        if self.epoch.is_none() {
            self.finish_epoch(0, eval.view(), holdout, observer, until_epoch)?;
        }
        while let Some(done) = self.epoch.filter(|&e| e < until_epoch) {
            let epoch = done + 1;
            self.run_epoch(epoch, data)?;
            self.finish_epoch(epoch, eval.view(), holdout, observer, until_epoch)?;
        }
        Ok(())
    }

    fn run_epoch(&mut self, epoch: usize, data: ArrayView2<f64>) -> Result<()> {
        let mut rng = rng::stream(self.config.seed, purpose::EPOCH, epoch as u64);
        let mut order: Vec<usize> = (0..data.nrows()).collect();
        order.shuffle(&mut rng);
        for (batch_idx, rows) in order.chunks(self.config.batch_size).enumerate() {
            let batch = data.select(Axis(0), rows);
            let mut step = || -> Result<()> {
                let mut grad = match (&self.config.algorithm, self.chains.as_mut()) {
                    (Algorithm::Cd { k }, _) => {
                        cd_gradient_with(&self.params, batch.view(), *k, self.config.reconstruction, &mut rng)?
                    }
                    (Algorithm::Pcd { k, .. }, Some(chains)) => {
                        pcd_gradient_with(&self.params, batch.view(), chains, *k, self.config.reconstruction)?
                    }
                    (Algorithm::Pcd { .. }, None) => {
                        return Err(GrbmError::contract("PCD session without chains"))
                    }
                };
                if let Some(sparsity) = &self.config.sparsity {
                    grad.add_scaled(1.0, &sparsity_adjustment(&self.params, batch.view(), sparsity)?);
                }
                apply_update(&mut self.params, &grad, &self.config, &mut self.velocity)
            };
            step().map_err(|e| e.at(epoch, batch_idx))?;
        }
        Ok(())
    }

    fn finish_epoch(
        &mut self,
        epoch: usize,
        eval: ArrayView2<f64>,
        holdout: Option<ArrayView2<f64>>,
        observer: &mut dyn TrainObserver,
        final_epoch: usize,
    ) -> Result<()> {
        let record = evaluate(&self.params, epoch, eval, holdout)?;
        let checkpoint = if epoch.is_multiple_of(self.config.checkpoint_every) || epoch == final_epoch {
            observer.checkpoint(epoch, record.ami, &self.params)?
        } else {
            None
        };
        let record = EpochRecord {
            checkpoint: checkpoint.clone(),
            ..record
        };
        self.trace.push(epoch, record.ami, checkpoint)?;
        observer.on_epoch(&record)?;
        self.log.push(record);
        self.epoch = Some(epoch);
        observer.on_state(&self.state())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            params: self.params,
            trace: self.trace,
            log: self.log,
        }
    }
}

/// Metrics of `params` on the evaluation rows (and the holdout, for FED).
pub fn evaluate(
    params: &GrbmParams,
    epoch: usize,
    eval: ArrayView2<f64>,
    holdout: Option<ArrayView2<f64>>,
) -> Result<EpochRecord> {
    let report = unit_mutual_information(params, eval)?;
    let sparsity_mean = crate::infomax::unit_activation_marginal(params, eval)?
        .mean()
        .unwrap_or(0.0);
    let fed = match holdout {
        Some(h) if h.nrows() > 0 => Some(fed(params, eval, h)?),
        _ => None,
    };
    if !report.ami.is_finite() || fed.is_some_and(|f| !f.is_finite()) {
        return Err(GrbmError::Numeric {
            epoch: Some(epoch),
            batch: None,
            what: "epoch metrics are not finite".into(),
        });
    }
    Ok(EpochRecord {
        epoch,
        ami: report.ami,
        fed,
        mean_abs_weight: params.mean_abs_weight(),
        sparsity_mean,
        filter_norms: params.filter_norms(),
        checkpoint: None,
    })
}

/// Indices of the fixed AMI evaluation subset, sorted.
pub fn evaluation_rows(n_rows: usize, subset: usize, seed: u64) -> Vec<usize> {
    if n_rows <= subset {
        return (0..n_rows).collect();
    }
    let mut rng = rng::stream(seed, purpose::EVAL_SUBSET, 0);
    let mut rows = index::sample(&mut rng, n_rows, subset).into_vec();
    rows.sort_unstable();
    rows
}

fn check_data(params: &GrbmParams, data: ArrayView2<f64>) -> Result<()> {
    if data.nrows() == 0 {
        return Err(GrbmError::contract("training data is empty"));
    }
    if data.ncols() != params.n_visible() {
        return Err(GrbmError::contract(format!(
            "training rows have {} columns, model expects {}",
            data.ncols(),
            params.n_visible()
        )));
    }
    Ok(())
}

/// Runs `cfg.epochs` epochs. With zero epochs the parameters come back
/// unchanged and nothing is evaluated.
pub fn train(
    params: GrbmParams,
    data: ArrayView2<f64>,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    train_with_holdout(params, data, None, cfg, observer)
}

pub fn train_with_holdout(
    params: GrbmParams,
    data: ArrayView2<f64>,
    holdout: Option<ArrayView2<f64>>,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    let mut session = TrainSession::new(params, data, cfg.clone())?;
    if cfg.epochs > 0 {
        session.run_until(data, holdout, cfg.epochs, observer)?;
    }
    Ok(session.into_outcome())
}

/// Parameters checkpointed at `epoch` by an in-memory run.
pub fn memory_checkpoint(store: &MemoryCheckpoints, epoch: usize) -> Result<GrbmParams> {
    store.load(&CheckpointId::for_epoch(epoch))
}

/// First `rows` rows of `data` (convenience for scaled-down runs).
pub fn head(data: ArrayView2<'_, f64>, rows: usize) -> ArrayView2<'_, f64> {
    data.slice_move(s![..rows.min(data.nrows()), ..])
}
