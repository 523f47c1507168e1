//! One-vs-rest linear L2-SVM (squared hinge) and grid cross-validation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{write_atomic, Reader};
use crate::error::{GrbmError, Result};
use crate::rng::{self, purpose};

pub const SVM_MAGIC: &[u8; 4] = b"SVMM";
pub const SVM_VERSION: u32 = 1;

/// Stopping rule for the per-class solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rel_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    /// n_classes × dim, acting on standardized features.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub c: f64,
    pub feature_mean: Array1<f64>,
    pub feature_std: Array1<f64>,
    /// Objective value after every accepted iteration, per class.
    #[serde(skip)]
    pub objective_history: Vec<Vec<f64>>,
}

impl LinearSvmModel {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    fn standardize(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(GrbmError::contract(format!(
                "features have {} columns, model expects {}",
                features.ncols(),
                self.dim()
            )));
        }
        Ok((&features - &self.feature_mean) / &self.feature_std)
    }

    /// One-vs-rest scores, rows × classes.
    pub fn scores(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        let z = self.standardize(features)?;
        Ok(z.dot(&self.weights.t()) + &self.biases)
    }
}

/// Per-column mean and population standard deviation (constant columns get 1).
fn standardization(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let std = x
        .var_axis(Axis(0), 0.0)
        .mapv(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
    (mean, std)
}

fn margins(x: ArrayView2<f64>, w: ArrayView1<f64>, b: f64) -> Vec<f64> {
    let w = w.as_slice().expect("contiguous weights");
    x.rows()
        .into_iter()
        .map(|row| {
            let row = row.to_slice().expect("standard layout");
            row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b
        })
        .collect()
}

/// `½‖w‖² + C Σ max(0, 1 − y(w·x + b))²`
pub fn binary_objective(x: ArrayView2<f64>, y: &[f64], c: f64, w: ArrayView1<f64>, b: f64) -> f64 {
    let x = x.as_standard_layout();
    let w = w.to_owned();
    let loss: f64 = margins(x.view(), w.view(), b)
        .iter()
        .zip(y)
        .map(|(f, y)| (1.0 - y * f).max(0.0).powi(2))
        .sum();
    0.5 * w.dot(&w) + c * loss
}

/// Objective and gradient; `x` must be in standard layout.
fn objective_and_gradient(x: ArrayView2<f64>, y: &[f64], c: f64, w: &Array1<f64>, b: f64) -> (f64, Array1<f64>, f64) {
    let f = margins(x, w.view(), b);
    let mut loss = 0.0;
    let mut gw = w.clone();
    let mut gb = 0.0;
    {
        let g = gw.as_slice_mut().expect("contiguous");
        for (i, (fi, yi)) in f.iter().zip(y).enumerate() {
            let slack = 1.0 - yi * fi;
            if slack > 0.0 {
                loss += slack * slack;
                let coef = -2.0 * c * yi * slack;
                gb += coef;
                let row = x.row(i);
                for (g, xv) in g.iter_mut().zip(row.to_slice().expect("standard layout")) {
                    *g += coef * xv;
                }
            }
        }
    }
    (0.5 * w.dot(w) + c * loss, gw, gb)
}

/// Minimizes the binary squared-hinge objective by gradient descent with a
/// Barzilai-Borwein trial step and Armijo backtracking. Returns `(w, b, history)`.
pub fn train_binary(
    x: ArrayView2<f64>,
    y: &[f64],
    c: f64,
    solver: &SolverConfig,
) -> (Array1<f64>, f64, Vec<f64>) {
    let x = x.as_standard_layout();
    let x = x.view();
    let d = x.ncols();
    let mut w = Array1::zeros(d);
    let mut b = 0.0;
    let (mut f, mut gw, mut gb) = objective_and_gradient(x, y, c, &w, b);
    let mut history = vec![f];
    let mut step = 1.0 / (1.0 + 2.0 * c * x.nrows() as f64);
    for _ in 0..solver.max_iterations {
        let g2 = gw.dot(&gw) + gb * gb;
        if g2 == 0.0 {
            break;
        }
        let mut alpha = step;
        let (nw, nb, nf, ngw, ngb) = loop {
            let nw = &w - &(alpha * &gw);
            let nb = b - alpha * gb;
            let (nf, ngw, ngb) = objective_and_gradient(x, y, c, &nw, nb);
            if nf <= f - 1e-4 * alpha * g2 || alpha < 1e-300 {
                break (nw, nb, nf, ngw, ngb);
            }
            alpha *= 0.5;
        };
        if nf > f {
            break;
        }
        // Barzilai-Borwein: s·s / s·r with s the step and r the gradient change.
        let sw = &nw - &w;
        let sb = nb - b;
        let rw = &ngw - &gw;
        let rb = ngb - gb;
        let sr = sw.dot(&rw) + sb * rb;
        let ss = sw.dot(&sw) + sb * sb;
        step = if sr > 0.0 { ss / sr } else { alpha * 2.0 };
        let decrease = f - nf;
        w = nw;
        b = nb;
        gw = ngw;
        gb = ngb;
        f = nf;
        history.push(f);
        if decrease <= solver.rel_tolerance * f.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (w, b, history)
}

/// One-vs-rest squared-hinge SVM on standardized features.
pub fn train_l2svm(features: ArrayView2<f64>, labels: &[u32], c: f64) -> Result<LinearSvmModel> {
    train_l2svm_with(features, labels, c, &SolverConfig::default())
}

pub fn train_l2svm_with(
    features: ArrayView2<f64>,
    labels: &[u32],
    c: f64,
    solver: &SolverConfig,
) -> Result<LinearSvmModel> {
    if features.nrows() != labels.len() {
        return Err(GrbmError::contract(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(GrbmError::contract(format!("C must be positive, got {c}")));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(GrbmError::contract("features must be finite"));
    }
    let mut present: Vec<u32> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(GrbmError::contract("an SVM needs at least two classes"));
    }
    let n_classes = *present.last().expect("non-empty") as usize + 1;
    let (mean, std) = standardization(features);
    let z = (&features - &mean) / &std;
    let solved: Vec<(Array1<f64>, f64, Vec<f64>)> = (0..n_classes)
        .into_par_iter()
        .map(|k| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l as usize == k { 1.0 } else { -1.0 })
                .collect();
            train_binary(z.view(), &y, c, solver)
        })
        .collect();
    let mut weights = Array2::zeros((n_classes, features.ncols()));
    let mut biases = Array1::zeros(n_classes);
    let mut history = Vec::with_capacity(n_classes);
    for (k, (w, b, h)) in solved.into_iter().enumerate() {
        weights.row_mut(k).assign(&w);
        biases[k] = b;
        history.push(h);
    }
    Ok(LinearSvmModel {
        weights,
        biases,
        c,
        feature_mean: mean,
        feature_std: std,
        objective_history: history,
    })
}

/// Argmax of the one-vs-rest scores; ties go to the lowest class id.
pub fn predict(model: &LinearSvmModel, features: ArrayView2<f64>) -> Result<Vec<u32>> {
    let scores = model.scores(features)?;
    Ok(scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = k;
                }
            }
            best as u32
        })
        .collect())
}

/// Percentage of rows classified correctly.
pub fn accuracy(model: &LinearSvmModel, features: ArrayView2<f64>, labels: &[u32]) -> Result<f64> {
    if features.nrows() != labels.len() {
        return Err(GrbmError::contract("feature rows and labels differ in length"));
    }
    if labels.is_empty() {
        return Err(GrbmError::contract("accuracy of an empty set is undefined"));
    }
    let predicted = predict(model, features)?;
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

pub fn encode_svm(model: &LinearSvmModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SVM_MAGIC);
    out.extend_from_slice(&SVM_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.n_classes() as u32).to_le_bytes());
    out.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    out.extend_from_slice(&model.c.to_le_bytes());
    for x in model
        .weights
        .iter()
        .chain(&model.biases)
        .chain(&model.feature_mean)
        .chain(&model.feature_std)
    {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_svm(bytes: &[u8], path: &Path) -> Result<LinearSvmModel> {
    let mut r = Reader::new(bytes, path);
    r.magic(SVM_MAGIC)?;
    let version = r.u32()?;
    if version != SVM_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let c = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let weights = r.f64s(k * d)?;
    let biases = r.f64s(k)?;
    let mean = r.f64s(d)?;
    let std = r.f64s(d)?;
    r.finish()?;
    let model = LinearSvmModel {
        weights: Array2::from_shape_vec((k, d), weights).map_err(|e| r.err(e.to_string()))?,
        biases: Array1::from(biases),
        c,
        feature_mean: Array1::from(mean),
        feature_std: Array1::from(std),
        objective_history: Vec::new(),
    };
    let finite = model
        .weights
        .iter()
        .chain(&model.biases)
        .chain(&model.feature_mean)
        .chain(&model.feature_std)
        .all(|x| x.is_finite());
    if !finite || !(c > 0.0) {
        return Err(r.err("model contains invalid values"));
    }
    Ok(model)
}

pub fn write_svm(path: &Path, model: &LinearSvmModel) -> Result<()> {
    write_atomic(path, &encode_svm(model))
}

pub fn read_svm(path: &Path) -> Result<LinearSvmModel> {
    decode_svm(&fs::read(path)?, path)
}

/// Hyper-parameter grid for cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub rho_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub c_values: Vec<f64>,
    pub threshold_values: Vec<f64>,
    pub folds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub rho: f64,
    pub lambda: f64,
    pub c: f64,
    pub threshold: f64,
}

fn steps(from: f64, count: usize, by: f64) -> Vec<f64> {
    (0..count).map(|i| ((from + by * i as f64) * 1e6).round() / 1e6).collect()
}

impl CvGrid {
    /// ρ ∈ {0.01..0.06}, λ ∈ {0.1..0.5}, C ∈ {35, 75, 150, 300}, t ∈ {0.1..0.7}, 5 folds.
    pub fn reference_grid() -> Self {
        CvGrid {
            rho_values: steps(0.01, 6, 0.01),
            lambda_values: steps(0.1, 5, 0.1),
            c_values: vec![35.0, 75.0, 150.0, 300.0],
            threshold_values: steps(0.1, 7, 0.1),
            folds: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(GrbmError::Config("cross-validation needs at least 2 folds".into()));
        }
        for (name, list) in [
            ("rho", &self.rho_values),
            ("lambda", &self.lambda_values),
            ("C", &self.c_values),
            ("threshold", &self.threshold_values),
        ] {
            if list.is_empty() {
                return Err(GrbmError::Config(format!("grid list {name} is empty")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rho_values.len() * self.lambda_values.len() * self.c_values.len() * self.threshold_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points, ρ-major then λ, C, t.
    pub fn points(&self) -> Vec<CvPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &rho in &self.rho_values {
            for &lambda in &self.lambda_values {
                for &c in &self.c_values {
                    for &threshold in &self.threshold_values {
                        out.push(CvPoint { rho, lambda, c, threshold });
                    }
                }
            }
        }
        out
    }

    fn index(&self, r: usize, l: usize, c: usize, t: usize) -> usize {
        ((r * self.lambda_values.len() + l) * self.c_values.len() + c) * self.threshold_values.len() + t
    }
}

/// Stratified fold assignment: fold of each row. Every fold receives every class.
pub fn stratified_folds(labels: &[u32], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(GrbmError::contract("need at least 2 folds"));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut assignment = vec![0; labels.len()];
    let mut rng = rng::stream(seed, purpose::FOLDS, 0);
    let mut next = 0;
    for (class, mut rows) in by_class {
        if rows.len() < folds {
            return Err(GrbmError::Stratification(format!(
                "class {class} has {} rows, fewer than {folds} folds",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        for i in rows {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

/// The unsupervised half of the pipeline, driven by the cross-validator.
pub trait CvHooks {
    type Model;

    /// Trains GRBM and preprocessing on the given training rows only.
    fn fit_unsupervised(&mut self, train_rows: &[usize], rho: f64, lambda: f64) -> Result<Self::Model>;

    /// Pooled features for `rows`, encoded with threshold `t`.
    fn features(&mut self, model: &Self::Model, rows: &[usize], threshold: f64) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub points: Vec<CvPoint>,
    /// folds × points validation accuracies (percent).
    pub fold_scores: Vec<Vec<f64>>,
    pub mean_scores: Vec<f64>,
    pub best_index: usize,
    pub best: CvPoint,
}

/// Grid search with stratified folds. Unsupervised models are fitted once per
/// (fold, ρ, λ) and features once per threshold.
pub fn cross_validate<H: CvHooks>(labels: &[u32], grid: &CvGrid, seed: u64, hooks: &mut H) -> Result<CvReport> {
    grid.validate()?;
    let assignment = stratified_folds(labels, grid.folds, seed)?;
    let points = grid.points();
    let mut fold_scores = vec![vec![0.0; points.len()]; grid.folds];
    for (fold, scores) in fold_scores.iter_mut().enumerate() {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != fold).collect();
        let valid: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == fold).collect();
        let train_labels: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
        let valid_labels: Vec<u32> = valid.iter().map(|&i| labels[i]).collect();
        for (ri, &rho) in grid.rho_values.iter().enumerate() {
            for (li, &lambda) in grid.lambda_values.iter().enumerate() {
                let model = hooks.fit_unsupervised(&train, rho, lambda)?;
                for (ti, &t) in grid.threshold_values.iter().enumerate() {
                    let xt = hooks.features(&model, &train, t)?;
                    let xv = hooks.features(&model, &valid, t)?;
                    for (ci, &c) in grid.c_values.iter().enumerate() {
                        let svm = train_l2svm(xt.view(), &train_labels, c)?;
                        scores[grid.index(ri, li, ci, ti)] = accuracy(&svm, xv.view(), &valid_labels)?;
                    }
                }
            }
        }
    }
    let mean_scores: Vec<f64> = (0..points.len())
        .map(|p| fold_scores.iter().map(|s| s[p]).sum::<f64>() / grid.folds as f64)
        .collect();
    let mut best_index = 0;
    for (i, &s) in mean_scores.iter().enumerate() {
        if s > mean_scores[best_index] {
            best_index = i;
        }
    }
    Ok(CvReport {
        best: points[best_index],
        points,
        fold_scores,
        mean_scores,
        best_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(n: usize, classes: u32, spread: f64, seed: u64) -> (Array2<f64>, Vec<u32>) {
        let mut rng = rng::seeded(seed);
        let labels: Vec<u32> = (0..n).map(|i| i as u32 % classes).collect();
        let x = Array2::from_shape_fn((n, 3), |(i, j)| {
            let centre = if j as u32 == labels[i] % 3 { 3.0 } else { 0.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            centre + spread * z + 0.1 * f64::from(labels[i] / 3) * j as f64
        });
        (x, labels)
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let x = array![[0.0, 1.0], [0.2, 1.5], [0.1, 2.0], [3.0, -1.0], [3.5, -1.2], [2.8, -0.5]];
        let y = [0, 0, 0, 1, 1, 1];
        let m = train_l2svm(x.view(), &y, 100.0).unwrap();
        assert_eq!(accuracy(&m, x.view(), &y).unwrap(), 100.0);
        assert_eq!(predict(&m, x.view()).unwrap(), y);
    }

    #[test]
    fn tiny_c_shrinks_weights() {
        let (x, y) = blobs(60, 3, 0.5, 1);
        let m = train_l2svm(x.view(), &y, 1e-9).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-6));
    }

    #[test]
    fn single_class_is_rejected() {
        let x = array![[1.0], [2.0]];
        assert!(train_l2svm(x.view(), &[1, 1], 1.0).is_err());
        assert!(train_l2svm(x.view(), &[0, 1], 0.0).is_err());
        assert!(train_l2svm(x.view(), &[0], 1.0).is_err());
    }

    #[test]
    fn objective_never_increases() {
        let (x, y) = blobs(200, 4, 1.5, 2);
        let m = train_l2svm(x.view(), &y, 35.0).unwrap();
        for h in &m.objective_history {
            assert!(h.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn solver_matches_fixed_step_reference() {
        let (x, labels) = blobs(100, 2, 1.2, 3);
        let (mean, std) = standardization(x.view());
        let z = (&x - &mean) / &std;
        let y: Vec<f64> = labels.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
        let c = 2.0;
        let (w, b, _) = train_binary(z.view(), &y, c, &SolverConfig::default());
        let ours = binary_objective(z.view(), &y, c, w.view(), b);

        // Plain gradient descent with step 1/L, L = 1 + 2C‖[Z 1]‖²_F.
        let lip = 1.0 + 2.0 * c * (z.iter().map(|v| v * v).sum::<f64>() + z.nrows() as f64);
        let mut rw = Array1::<f64>::zeros(3);
        let mut rb = 0.0;
        for _ in 0..200_000 {
            let margins = z.dot(&rw) + rb;
            let mut gw = rw.clone();
            let mut gb = 0.0;
            for i in 0..z.nrows() {
                let s = 1.0 - y[i] * margins[i];
                if s > 0.0 {
                    gw.scaled_add(-2.0 * c * y[i] * s, &z.row(i));
                    gb += -2.0 * c * y[i] * s;
                }
            }
            rw.scaled_add(-1.0 / lip, &gw);
            rb -= gb / lip;
        }
        let reference = binary_objective(z.view(), &y, c, rw.view(), rb);
        assert!((ours - reference).abs() <= 1e-4 * reference, "{ours} vs {reference}");
    }

    #[test]
    fn identical_rows_tie_to_class_zero() {
        let m = LinearSvmModel {
            weights: array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]],
            biases: array![0.5, 0.5, 0.5],
            c: 1.0,
            feature_mean: array![0.0, 0.0],
            feature_std: array![1.0, 1.0],
            objective_history: vec![],
        };
        let x = array![[3.0, -1.0], [0.0, 0.0]];
        assert_eq!(predict(&m, x.view()).unwrap(), vec![0, 0]);
        assert!(predict(&m, array![[1.0]].view()).is_err());
    }

    #[test]
    fn column_permutation_is_harmless() {
        let (x, y) = blobs(150, 3, 1.0, 4);
        let m = train_l2svm(x.view(), &y, 75.0).unwrap();
        let perm = [2, 0, 1];
        let px = x.select(Axis(1), &perm);
        let pm = LinearSvmModel {
            weights: m.weights.select(Axis(1), &perm),
            feature_mean: m.feature_mean.select(Axis(0), &perm),
            feature_std: m.feature_std.select(Axis(0), &perm),
            ..m.clone()
        };
        assert_eq!(predict(&m, x.view()).unwrap(), predict(&pm, px.view()).unwrap());
    }

    #[test]
    fn sample_order_barely_matters() {
        let (x, y) = blobs(300, 3, 1.6, 5);
        let m = train_l2svm(x.view(), &y, 35.0).unwrap();
        let mut order: Vec<usize> = (0..300).collect();
        order.shuffle(&mut rng::seeded(6));
        let px = x.select(Axis(0), &order);
        let py: Vec<u32> = order.iter().map(|&i| y[i]).collect();
        let pm = train_l2svm(px.view(), &py, 35.0).unwrap();
        let a = accuracy(&m, x.view(), &y).unwrap();
        let b = accuracy(&pm, x.view(), &y).unwrap();
        assert!((a - b).abs() < 0.1, "{a} vs {b}");
    }

    #[test]
    fn svm_round_trip() {
        let (x, y) = blobs(60, 3, 1.0, 7);
        let m = train_l2svm(x.view(), &y, 35.0).unwrap();
        let back = decode_svm(&encode_svm(&m), Path::new("m.svm")).unwrap();
        assert_eq!(back.weights, m.weights);
        assert_eq!(back.feature_std, m.feature_std);
        assert_eq!(predict(&back, x.view()).unwrap(), predict(&m, x.view()).unwrap());
        let bytes = encode_svm(&m);
        assert!(decode_svm(&bytes[..bytes.len() - 1], Path::new("m.svm")).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = CvGrid::reference_grid();
        assert_eq!(g.len(), 840);
        assert_eq!(g.rho_values, vec![0.01, 0.02, 0.03, 0.04, 0.05, 0.06]);
        assert_eq!(g.lambda_values, vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(g.threshold_values, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        let pts = g.points();
        assert_eq!(pts[0], CvPoint { rho: 0.01, lambda: 0.1, c: 35.0, threshold: 0.1 });
        assert_eq!(pts[1].threshold, 0.2);
        assert_eq!(pts[7].c, 75.0);
        assert_eq!(pts[g.index(1, 0, 0, 0)].rho, 0.02);
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<u32> = (0..53).map(|i| i % 4).collect();
        let f = stratified_folds(&labels, 5, 1).unwrap();
        for fold in 0..5 {
            for c in 0..4 {
                assert!((0..53).any(|i| f[i] == fold && labels[i] == c));
            }
        }
        let sparse = vec![0, 0, 0, 0, 0, 1, 1];
        assert!(matches!(stratified_folds(&sparse, 5, 1), Err(GrbmError::Stratification(_))));
    }

    /// Records every row handed to the hooks so fold isolation can be asserted.
    struct Spy {
        x: Array2<f64>,
        fits: Vec<Vec<usize>>,
        feature_calls: Vec<Vec<usize>>,
    }

    impl CvHooks for Spy {
        type Model = (Vec<usize>, f64);

        fn fit_unsupervised(&mut self, train_rows: &[usize], rho: f64, _lambda: f64) -> Result<Self::Model> {
            self.fits.push(train_rows.to_vec());
            Ok((train_rows.to_vec(), rho))
        }

        fn features(&mut self, model: &Self::Model, rows: &[usize], t: f64) -> Result<Array2<f64>> {
            self.feature_calls.push(rows.to_vec());
            let _ = &model.0;
            Ok(self.x.select(Axis(0), rows).mapv(|v| v * (1.0 + t + model.1)))
        }
    }

    #[test]
    fn cross_validation_bookkeeping_and_isolation() {
        let (x, y) = blobs(90, 3, 0.8, 8);
        let grid = CvGrid {
            rho_values: vec![0.01, 0.02],
            lambda_values: vec![0.1],
            c_values: vec![1.0, 10.0],
            threshold_values: vec![0.1, 0.2, 0.3],
            folds: 3,
        };
        let mut spy = Spy { x, fits: vec![], feature_calls: vec![] };
        let report = cross_validate(&y, &grid, 3, &mut spy).unwrap();
        assert_eq!(report.fold_scores.len(), 3);
        assert_eq!(report.fold_scores.iter().map(Vec::len).sum::<usize>(), 3 * 12);
        assert_eq!(spy.fits.len(), 3 * 2);
        let folds = stratified_folds(&y, 3, 3).unwrap();
        for (k, fit) in spy.fits.iter().enumerate() {
            let fold = k / 2;
            assert!(fit.iter().all(|&i| folds[i] != fold));
        }
        let best = report.mean_scores[report.best_index];
        assert!(report.mean_scores.iter().all(|&s| s <= best));
        assert_eq!(report.mean_scores.iter().position(|&s| s == best), Some(report.best_index));

        let one = CvGrid {
            rho_values: vec![0.03],
            lambda_values: vec![0.2],
            c_values: vec![35.0],
            threshold_values: vec![0.5],
            folds: 2,
        };
        let r = cross_validate(&y, &one, 0, &mut spy).unwrap();
        assert_eq!(r.best, CvPoint { rho: 0.03, lambda: 0.2, c: 35.0, threshold: 0.5 });
    }

    #[test]
    fn random_labels_still_train() {
        let mut rng = rng::seeded(9);
        let x = Array2::from_shape_fn((40, 4), |_| rng.random::<f64>());
        let y: Vec<u32> = (0..40).map(|i| (i % 2) as u32).collect();
        let m = train_l2svm(x.view(), &y, 150.0).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
    }
}
