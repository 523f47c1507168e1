//! Self-check suite on small random models, where every quantity can be
//! computed exactly: AMI must upper-bound the exact mutual information and
//! the exact gradient must agree with central finite differences.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::infomax::ami;
use crate::oracle::{exact_joint_mutual_information, ExactModel};
use crate::params::GrbmParams;
use crate::rng::{self, purpose};

/// Slack allowed on `exact I(H;D) <= AMI`.
pub const UPPER_BOUND_SLACK: f64 = 1e-9;
pub const FD_STEP: f64 = 1e-4;
pub const GRADIENT_REL_TOLERANCE: f64 = 1e-5;
/// Denominator floor of the relative gradient error, so entries that are
/// zero up to rounding are compared absolutely.
pub const GRADIENT_REL_FLOOR: f64 = 1e-6;

/// A random model with at most 8 hidden and 4 visible units and at most 200 data rows.
pub fn random_tiny_model(seed: u64) -> Result<(GrbmParams, Array2<f64>)> {
    let mut rng = rng::stream(seed, purpose::ORACLE, 0);
    let m = rng.random_range(1..=8);
    let n = rng.random_range(1..=4);
    let rows = rng.random_range(1..=200);
    let weight_scale: f64 = rng.random_range(0.1..1.5);
    let w = Normal::new(0.0, weight_scale).expect("valid");
    let bias = Normal::new(0.0, 0.5).expect("valid");
    let weights = Array2::from_shape_fn((m, n), |_| w.sample(&mut rng));
    let a = (0..m).map(|_| bias.sample(&mut rng)).collect::<Vec<f64>>();
    let b = (0..n).map(|_| bias.sample(&mut rng)).collect::<Vec<f64>>();
    let sigma = (0..n).map(|_| rng.random_range(0.5..1.5)).collect::<Vec<f64>>();
    let params = GrbmParams::new(weights, a.into(), b.into(), sigma.into())?;
    let spread = Normal::new(0.0, 1.5).expect("valid");
    let data = Array2::from_shape_fn((rows, n), |_| spread.sample(&mut rng));
    Ok((params, data))
}

/// Largest relative disagreement between the exact gradient and central
/// differences of the exact mean log-likelihood, over all of W, a and b.
pub fn gradient_check(params: &GrbmParams, data: &Array2<f64>, step: f64) -> Result<f64> {
    let analytic = ExactModel::new(params.clone())?.exact_gradient(data.view())?;
    let ll = |p: GrbmParams| -> Result<f64> { ExactModel::new(p)?.exact_log_likelihood(data.view()) };
    let central = |perturb: &dyn Fn(&mut GrbmParams, f64)| -> Result<f64> {
        let mut plus = params.clone();
        perturb(&mut plus, step);
        let mut minus = params.clone();
        perturb(&mut minus, -step);
        Ok((ll(plus)? - ll(minus)?) / (2.0 * step))
    };
    let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(GRADIENT_REL_FLOOR);
    let mut worst: f64 = 0.0;
    let (m, n) = (params.n_hidden(), params.n_visible());
    for i in 0..m {
        for j in 0..n {
            let fd = central(&|p, h| p.weights_mut()[[i, j]] += h)?;
            worst = worst.max(rel(analytic.dw[[i, j]], fd));
        }
        let fd = central(&|p, h| p.hidden_bias_mut()[i] += h)?;
        worst = worst.max(rel(analytic.da[i], fd));
    }
    for j in 0..n {
        let fd = central(&|p, h| p.visible_bias_mut()[j] += h)?;
        worst = worst.max(rel(analytic.db[j], fd));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCase {
    pub seed: u64,
    pub n_hidden: usize,
    pub n_visible: usize,
    pub rows: usize,
    pub exact_mi: f64,
    pub ami: f64,
    pub bound_holds: bool,
    pub max_gradient_rel_error: f64,
    pub gradient_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub cases: Vec<VerifyCase>,
    pub all_passed: bool,
}

pub fn verify_case(seed: u64) -> Result<VerifyCase> {
    let (params, data) = random_tiny_model(seed)?;
    let exact_mi = exact_joint_mutual_information(&params, data.view())?;
    let approx = ami(&params, data.view())?;
    let err = gradient_check(&params, &data, FD_STEP)?;
    Ok(VerifyCase {
        seed,
        n_hidden: params.n_hidden(),
        n_visible: params.n_visible(),
        rows: data.nrows(),
        exact_mi,
        ami: approx,
        bound_holds: exact_mi <= approx + UPPER_BOUND_SLACK,
        max_gradient_rel_error: err,
        gradient_ok: err <= GRADIENT_REL_TOLERANCE,
    })
}

/// Runs `count` seeded cases starting at `first_seed`.
pub fn run_verify(first_seed: u64, count: usize) -> Result<VerifyReport> {
    let cases = (0..count as u64)
        .map(|k| verify_case(first_seed + k))
        .collect::<Result<Vec<_>>>()?;
    let all_passed = cases.iter().all(|c| c.bound_holds && c.gradient_ok);
    Ok(VerifyReport { cases, all_passed })
}
