//! Conditionals, Gibbs sampling and free energy of a Gaussian RBM.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_len, GrbmError, Result};
use crate::math::{logistic, softplus};
use crate::params::GrbmParams;

/// `p(H_i = 1 | v) = logistic(a_i + Σ_j w_ij v_j / σ_j²)`.
pub fn hidden_conditional(params: &GrbmParams, v: ArrayView1<f64>) -> Result<Array1<f64>> {
    ensure_len("visible vector", v.len(), params.n_visible())?;
    let scaled = &v * &params.precision();
    let mut act = params.weights().dot(&scaled);
    act += &params.hidden_bias();
    Ok(act.mapv_into(logistic))
}

/// Hidden pre-activations for every row of `batch` (B×N → B×M).
pub fn hidden_activations(params: &GrbmParams, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    ensure_len("batch columns", batch.ncols(), params.n_visible())?;
    let scaled = &batch * &params.precision();
    let mut act = scaled.dot(&params.weights().t());
    act += &params.hidden_bias();
    Ok(act)
}

/// Row-wise [`hidden_conditional`] (B×N → B×M).
pub fn hidden_probabilities(params: &GrbmParams, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(hidden_activations(params, batch)?.mapv_into(logistic))
}

/// Gaussian `p(v | h)`: mean `b + Wᵀh`, variance `σ²`.
pub fn visible_conditional(
    params: &GrbmParams,
    h: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    ensure_len("hidden vector", h.len(), params.n_hidden())?;
    if h.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(GrbmError::contract("hidden state must be binary"));
    }
    let mean = params.weights().t().dot(&h) + params.visible_bias();
    let var = params.sigma().mapv(|s| s * s);
    Ok((mean, var))
}

/// Row-wise visible means `b + Wᵀh` (B×M → B×N).
pub fn visible_means(params: &GrbmParams, hidden: ArrayView2<f64>) -> Result<Array2<f64>> {
    ensure_len("hidden columns", hidden.ncols(), params.n_hidden())?;
    Ok(hidden.dot(&params.weights()) + params.visible_bias())
}

pub fn sample_hidden<R: Rng + ?Sized>(
    params: &GrbmParams,
    v: ArrayView1<f64>,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let mut probs = hidden_conditional(params, v)?;
    bernoulli_in_place(probs.view_mut().into_slice().expect("contiguous"), rng);
    Ok(probs)
}

pub fn sample_visible<R: Rng + ?Sized>(
    params: &GrbmParams,
    h: ArrayView1<f64>,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let (mut mean, _) = visible_conditional(params, h)?;
    Zip::from(&mut mean)
        .and(&params.sigma())
        .for_each(|m, &s| *m += s * rng.sample::<f64, _>(StandardNormal));
    Ok(mean)
}

/// Replaces each probability with a Bernoulli draw (1.0 or 0.0), in order.
pub(crate) fn bernoulli_in_place<R: Rng + ?Sized>(probs: &mut [f64], rng: &mut R) {
    for p in probs.iter_mut() {
        let u: f64 = rng.random();
        *p = if u < *p { 1.0 } else { 0.0 };
    }
}

/// Adds `σ_j · ε` Gaussian noise to each entry of a row of visible means.
pub(crate) fn gaussian_in_place<R: Rng + ?Sized>(means: &mut [f64], sigma: ArrayView1<f64>, rng: &mut R) {
    for (m, &s) in means.iter_mut().zip(sigma.iter()) {
        *m += s * rng.sample::<f64, _>(StandardNormal);
    }
}

/// `F(v) = Σ_j (v_j-b_j)²/(2σ_j²) - Σ_i log(1 + exp(a_i + Σ_j w_ij v_j/σ_j²))`.
pub fn free_energy(params: &GrbmParams, v: ArrayView1<f64>) -> Result<f64> {
    ensure_len("visible vector", v.len(), params.n_visible())?;
    let prec = params.precision();
    let quad: f64 = v
        .iter()
        .zip(params.visible_bias().iter())
        .zip(prec.iter())
        .map(|((&x, &b), &p)| 0.5 * (x - b) * (x - b) * p)
        .sum();
    let scaled = &v * &prec;
    let act = params.weights().dot(&scaled) + params.hidden_bias();
    Ok(quad - act.iter().map(|&x| softplus(x)).sum::<f64>())
}

/// Free energy of every row.
pub fn free_energies(params: &GrbmParams, batch: ArrayView2<f64>) -> Result<Array1<f64>> {
    let act = hidden_activations(params, batch)?;
    let prec = params.precision();
    let centered = &batch - &params.visible_bias();
    let quad = (&centered * &centered * &prec).sum_axis(Axis(1)) * 0.5;
    let soft = act.mapv(softplus).sum_axis(Axis(1));
    Ok(quad - soft)
}

/// Free energy difference: mean free energy of `test` minus that of `train`.
pub fn fed(params: &GrbmParams, train: ArrayView2<f64>, test: ArrayView2<f64>) -> Result<f64> {
    if train.nrows() == 0 || test.nrows() == 0 {
        return Err(GrbmError::contract("FED needs non-empty train and test sets"));
    }
    let f_train = free_energies(params, train)?.mean().expect("non-empty");
    let f_test = free_energies(params, test)?.mean().expect("non-empty");
    Ok(f_test - f_train)
}
