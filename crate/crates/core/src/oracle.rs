//! Brute-force exact computations for GRBMs small enough to enumerate every
//! hidden configuration.
//!
//! For a fixed `h` the visible units are an isotropic-per-coordinate Gaussian,
//! so `∫ exp(-E(v,h)) dv` has a closed form and the partition function is a
//! finite log-sum-exp over `2^M` terms. Configurations are visited in Gray-code
//! order so that `Wᵀh` is updated by one row per step.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GrbmError, Result};
use crate::math::{log_sum_exp, neg_p_log_p};
use crate::model::{free_energies, hidden_probabilities};
use crate::params::{GradientEstimate, GrbmParams};

/// Largest hidden layer the enumeration oracle accepts.
pub const MAX_EXACT_HIDDEN: usize = 20;
/// Largest hidden layer for the exact joint mutual information.
pub const MAX_JOINT_MI_HIDDEN: usize = 12;

/// A GRBM together with the log-weight of every hidden configuration.
#[derive(Debug, Clone)]
pub struct ExactModel {
    params: GrbmParams,
    /// `log ∫ exp(-E(v,h)) dv`, indexed by the bitmask of `h` (bit i = h_i).
    log_weights: Vec<f64>,
    log_z: f64,
}

/// First and second moments of the model distribution.
#[derive(Debug, Clone)]
pub struct ModelMoments {
    /// `E[H_i]`
    pub hidden: Array1<f64>,
    /// `E[V_j]`
    pub visible: Array1<f64>,
    /// `E[H_i V_j]`
    pub hidden_visible: Array2<f64>,
}

impl ExactModel {
    pub fn new(params: GrbmParams) -> Result<Self> {
        params.validate()?;
        let m = params.n_hidden();
        if m > MAX_EXACT_HIDDEN {
            return Err(GrbmError::Capability(format!(
                "exact enumeration needs M <= {MAX_EXACT_HIDDEN}, got {m}"
            )));
        }
        let prec = params.precision();
        let b = params.visible_bias();
        let gauss_norm: f64 = params
            .sigma()
            .iter()
            .map(|s| 0.5 * (2.0 * std::f64::consts::PI * s * s).ln())
            .sum();
        let base: f64 = b.iter().zip(prec.iter()).map(|(b, p)| 0.5 * b * b * p).sum();
        let mut log_weights = vec![0.0; 1 << m];
        for_each_config(&params, |mask, shift, a_dot_h| {
            // Σ_j (b_j + m_j)² / (2σ_j²) - Σ_j b_j² / (2σ_j²)
            let quad: f64 = shift
                .iter()
                .zip(b.iter())
                .zip(prec.iter())
                .map(|((s, b), p)| 0.5 * (b + s) * (b + s) * p)
                .sum();
            log_weights[mask] = a_dot_h + quad - base + gauss_norm;
        });
        let log_z = log_sum_exp(log_weights.iter().copied());
        Ok(ExactModel {
            params,
            log_weights,
            log_z,
        })
    }

    pub fn params(&self) -> &GrbmParams {
        &self.params
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    /// `log p(h)` for the configuration encoded by `mask`.
    pub fn log_prob_hidden(&self, mask: usize) -> f64 {
        self.log_weights[mask] - self.log_z
    }

    /// Marginal `log p(v)` of every row.
    pub fn log_marginal(&self, data: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(free_energies(&self.params, data)?.mapv(|f| -f - self.log_z))
    }

    /// Mean `log p(v)` over the rows of `data`.
    pub fn exact_log_likelihood(&self, data: ArrayView2<f64>) -> Result<f64> {
        non_empty(data)?;
        Ok(self.log_marginal(data)?.mean().expect("non-empty"))
    }

    pub fn moments(&self) -> ModelMoments {
        let (m, n) = (self.params.n_hidden(), self.params.n_visible());
        let b = self.params.visible_bias();
        let mut hidden = Array1::zeros(m);
        let mut visible = Array1::zeros(n);
        let mut hidden_visible = Array2::zeros((m, n));
        for_each_config(&self.params, |mask, shift, _| {
            let p = (self.log_weights[mask] - self.log_z).exp();
            let mean = &shift + &b;
            visible.scaled_add(p, &mean);
            for i in (0..m).filter(|i| mask >> i & 1 == 1) {
                hidden[i] += p;
                hidden_visible.row_mut(i).scaled_add(p, &mean);
            }
        });
        ModelMoments {
            hidden,
            visible,
            hidden_visible,
        }
    }

    /// Exact gradient of the mean log-likelihood of `data` with respect to W, a and b.
    pub fn exact_gradient(&self, data: ArrayView2<f64>) -> Result<GradientEstimate> {
        non_empty(data)?;
        let n_rows = data.nrows() as f64;
        let prec = self.params.precision();
        let probs = hidden_probabilities(&self.params, data)?;
        let scaled = &data * &prec;

        let moments = self.moments();
        let dw = probs.t().dot(&scaled) / n_rows - moments.hidden_visible * &prec;
        let da = probs.sum_axis(Axis(0)) / n_rows - &moments.hidden;
        let db = (data.sum_axis(Axis(0)) / n_rows - moments.visible) * &prec;
        Ok(GradientEstimate { dw, da, db })
    }

    /// `n` independent draws from the model: `h ~ p(h)`, then `v ~ p(v|h)`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let mut cumulative = Vec::with_capacity(self.log_weights.len());
        let mut acc = 0.0;
        for lw in &self.log_weights {
            acc += (lw - self.log_z).exp();
            cumulative.push(acc);
        }
        let w = self.params.weights();
        let b = self.params.visible_bias();
        let sigma = self.params.sigma();
        let mut out = Array2::zeros((n, self.params.n_visible()));
        for mut row in out.rows_mut() {
            let u: f64 = rng.random::<f64>() * acc;
            let mask = cumulative
                .partition_point(|&c| c <= u)
                .min(cumulative.len() - 1);
            row.assign(&b);
            for i in (0..self.params.n_hidden()).filter(|i| mask >> i & 1 == 1) {
                row += &w.row(i);
            }
            for (x, &s) in row.iter_mut().zip(sigma.iter()) {
                *x += s * rng.sample::<f64, _>(StandardNormal);
            }
        }
        out
    }

    /// Exact `I(H; D)` under the empirical distribution of `data` (uniform over rows).
    pub fn exact_joint_mutual_information(&self, data: ArrayView2<f64>) -> Result<f64> {
        exact_joint_mutual_information(&self.params, data)
    }
}

/// Exact `I(H; D) = S(H) - S(H|D)` where `p(h) = mean_d Π_i p(h_i|d)`.
pub fn exact_joint_mutual_information(params: &GrbmParams, data: ArrayView2<f64>) -> Result<f64> {
    non_empty(data)?;
    let m = params.n_hidden();
    if m > MAX_JOINT_MI_HIDDEN {
        return Err(GrbmError::Capability(format!(
            "exact joint mutual information needs M <= {MAX_JOINT_MI_HIDDEN}, got {m}"
        )));
    }
    let probs = hidden_probabilities(params, data)?;
    let n_rows = data.nrows() as f64;
    let mut joint = vec![0.0; 1 << m];
    let mut table = vec![0.0; 1 << m];
    let mut conditional = 0.0;
    for row in probs.rows() {
        // Product distribution over configurations, built one unit at a time.
        table[0] = 1.0;
        for (k, &p) in row.iter().enumerate() {
            let half = 1usize << k;
            for mask in 0..half {
                let base = table[mask];
                table[mask | half] = base * p;
                table[mask] = base * (1.0 - p);
            }
            conditional += neg_p_log_p(p) + neg_p_log_p(1.0 - p);
        }
        for (j, t) in joint.iter_mut().zip(&table) {
            *j += t;
        }
    }
    let marginal: f64 = joint.iter().map(|&j| neg_p_log_p(j / n_rows)).sum();
    Ok(marginal - conditional / n_rows)
}

/// Visits every `h ∈ {0,1}^M` in Gray-code order, passing its bitmask, `Wᵀh`
/// and `a·h`.
pub(crate) fn for_each_config<F>(params: &GrbmParams, mut f: F)
where
    F: FnMut(usize, ndarray::ArrayView1<f64>, f64),
{
    let m = params.n_hidden();
    let w = params.weights();
    let a = params.hidden_bias();
    let mut shift = Array1::<f64>::zeros(params.n_visible());
    let mut a_dot_h = 0.0;
    let mut mask = 0usize;
    f(mask, shift.view(), a_dot_h);
    for k in 1usize..(1 << m) {
        let bit = k.trailing_zeros() as usize;
        mask ^= 1 << bit;
        if mask >> bit & 1 == 1 {
            shift += &w.row(bit);
            a_dot_h += a[bit];
        } else {
            shift -= &w.row(bit);
            a_dot_h -= a[bit];
        }
        f(mask, shift.view(), a_dot_h);
    }
}

fn non_empty(data: ArrayView2<f64>) -> Result<()> {
    if data.nrows() == 0 {
        return Err(GrbmError::contract("dataset must be non-empty"));
    }
    Ok(())
}
