use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand_distr::{Distribution, Normal};

use crate::error::{GrbmError, Result};
use crate::rng::{self, purpose};

/// Standard deviation of the i.i.d. Gaussian weight initialization.
pub const INIT_WEIGHT_STD: f64 = 0.01;

/// Parameters of a Gaussian RBM with `M` binary hidden and `N` real visible units.
///
/// Energy: `E(v,h) = Σ_j (v_j-b_j)²/(2σ_j²) - Σ_i a_i h_i - Σ_ij (v_j/σ_j²) w_ij h_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrbmParams {
    weights: Array2<f64>,
    hidden_bias: Array1<f64>,
    visible_bias: Array1<f64>,
    sigma: Array1<f64>,
}

impl GrbmParams {
    pub fn new(
        weights: Array2<f64>,
        hidden_bias: Array1<f64>,
        visible_bias: Array1<f64>,
        sigma: Array1<f64>,
    ) -> Result<Self> {
        let params = GrbmParams {
            weights,
            hidden_bias,
            visible_bias,
            sigma,
        };
        params.validate()?;
        Ok(params)
    }

    /// All-zero weights and biases, unit σ.
    pub fn zeros(n_hidden: usize, n_visible: usize) -> Result<Self> {
        Self::new(
            Array2::zeros((n_hidden, n_visible)),
            Array1::zeros(n_hidden),
            Array1::zeros(n_visible),
            Array1::ones(n_visible),
        )
    }

    /// Weights drawn from N(0, 0.01²), zero biases and unit σ.
    pub fn initialize(n_hidden: usize, n_visible: usize, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(n_hidden, n_visible)?;
        let mut rng = rng::stream(seed, purpose::INIT, 0);
        let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid std");
        params
            .weights
            .iter_mut()
            .for_each(|w| *w = normal.sample(&mut rng));
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.weights.dim();
        if m == 0 || n == 0 {
            return Err(GrbmError::contract("GRBM needs M >= 1 and N >= 1"));
        }
        if self.hidden_bias.len() != m || self.visible_bias.len() != n || self.sigma.len() != n {
            return Err(GrbmError::contract(format!(
                "parameter shapes disagree: W {m}x{n}, a {}, b {}, sigma {}",
                self.hidden_bias.len(),
                self.visible_bias.len(),
                self.sigma.len()
            )));
        }
        if !self.is_finite() {
            return Err(GrbmError::contract("GRBM parameters must be finite"));
        }
        if self.sigma.iter().any(|&s| s <= 0.0) {
            return Err(GrbmError::contract("sigma must be strictly positive"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|x| x.is_finite())
            && self.hidden_bias.iter().all(|x| x.is_finite())
            && self.visible_bias.iter().all(|x| x.is_finite())
            && self.sigma.iter().all(|x| x.is_finite())
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_visible(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn hidden_bias(&self) -> ArrayView1<'_, f64> {
        self.hidden_bias.view()
    }

    pub fn visible_bias(&self) -> ArrayView1<'_, f64> {
        self.visible_bias.view()
    }

    pub fn sigma(&self) -> ArrayView1<'_, f64> {
        self.sigma.view()
    }

    pub fn weights_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.weights.view_mut()
    }

    pub fn hidden_bias_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        self.hidden_bias.view_mut()
    }

    pub fn visible_bias_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        self.visible_bias.view_mut()
    }

    /// `1/σ_j²` for every visible unit.
    pub fn precision(&self) -> Array1<f64> {
        self.sigma.mapv(|s| 1.0 / (s * s))
    }

    /// Euclidean norm of every filter (row of W).
    pub fn filter_norms(&self) -> Vec<f64> {
        self.weights
            .axis_iter(Axis(0))
            .map(|row| row.dot(&row).sqrt())
            .collect()
    }

    pub fn mean_abs_weight(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum::<f64>() / self.weights.len() as f64
    }

    /// Copy of the parameters with an extra hidden unit appended.
    pub fn with_hidden_unit(&self, filter: ArrayView1<f64>, bias: f64) -> Result<Self> {
        let mut weights = self.weights.clone();
        weights
            .push_row(filter)
            .map_err(|e| GrbmError::contract(format!("appending hidden unit: {e}")))?;
        let mut hidden_bias = self.hidden_bias.to_vec();
        hidden_bias.push(bias);
        Self::new(
            weights,
            Array1::from(hidden_bias),
            self.visible_bias.clone(),
            self.sigma.clone(),
        )
    }
}

/// Gradient of the log-likelihood (or an estimate of it) with respect to W, a and b.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub dw: Array2<f64>,
    pub da: Array1<f64>,
    pub db: Array1<f64>,
}

impl GradientEstimate {
    pub fn zeros(n_hidden: usize, n_visible: usize) -> Self {
        GradientEstimate {
            dw: Array2::zeros((n_hidden, n_visible)),
            da: Array1::zeros(n_hidden),
            db: Array1::zeros(n_visible),
        }
    }

    pub fn zeros_like(params: &GrbmParams) -> Self {
        Self::zeros(params.n_hidden(), params.n_visible())
    }

    pub fn is_finite(&self) -> bool {
        self.dw.iter().all(|x| x.is_finite())
            && self.da.iter().all(|x| x.is_finite())
            && self.db.iter().all(|x| x.is_finite())
    }

    pub fn matches(&self, params: &GrbmParams) -> bool {
        self.dw.dim() == (params.n_hidden(), params.n_visible())
            && self.da.len() == params.n_hidden()
            && self.db.len() == params.n_visible()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: f64, other: &GradientEstimate) {
        self.dw.scaled_add(scale, &other.dw);
        self.da.scaled_add(scale, &other.da);
        self.db.scaled_add(scale, &other.db);
    }

    pub fn max_abs(&self) -> f64 {
        self.dw
            .iter()
            .chain(self.da.iter())
            .chain(self.db.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}
