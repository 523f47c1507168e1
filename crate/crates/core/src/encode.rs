//! Feature extraction with a trained GRBM: per-patch encoders, convolution
//! over full images and sum pooling over the four image quadrants.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{copy_patch, contrast_normalize_row, rf_side, Dataset, DimKind, ImageSet, PreprocessModel, IMAGE_BYTES, IMAGE_SIDE};
use crate::error::{GrbmError, Result};
use crate::math::logistic;
use crate::model::hidden_conditional;
use crate::params::GrbmParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EncodingScheme {
    /// p(H = 1 | v̂)
    ConditionalExpectation,
    /// max(0, w_i · v̂ − t)
    SoftThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub scheme: EncodingScheme,
    pub stride: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            scheme: EncodingScheme::SoftThreshold(0.25),
            stride: 1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(GrbmError::contract("stride must be >= 1"));
        }
        if let EncodingScheme::SoftThreshold(t) = self.scheme {
            if !t.is_finite() {
                return Err(GrbmError::contract("soft threshold must be finite"));
            }
        }
        Ok(())
    }
}

fn check_patch_model(params: &GrbmParams, preprocess: &PreprocessModel) -> Result<()> {
    if preprocess.dim() != params.n_visible() {
        return Err(GrbmError::contract(format!(
            "preprocessing dimension {} does not match model visible dimension {}",
            preprocess.dim(),
            params.n_visible()
        )));
    }
    Ok(())
}

/// Encodes one raw patch (pixels in [0, 1]); the patch is normalized and
/// whitened with `preprocess` first.
pub fn encode_patch(
    params: &GrbmParams,
    preprocess: &PreprocessModel,
    patch: ArrayView1<f64>,
    cfg: &EncoderConfig,
) -> Result<Array1<f64>> {
    cfg.validate()?;
    check_patch_model(params, preprocess)?;
    let v = preprocess.transform_patch(patch)?;
    match cfg.scheme {
        EncodingScheme::ConditionalExpectation => hidden_conditional(params, v.view()),
        EncodingScheme::SoftThreshold(t) => Ok(params.weights().dot(&v).mapv(|r| (r - t).max(0.0))),
    }
}

/// Positions per image axis for receptive field `w` and `stride`.
pub fn positions_per_axis(w: usize, stride: usize) -> Result<usize> {
    if w == 0 || w > IMAGE_SIDE || stride == 0 {
        return Err(GrbmError::contract(format!("invalid receptive field {w} / stride {stride}")));
    }
    if !(IMAGE_SIDE - w).is_multiple_of(stride) {
        return Err(GrbmError::contract(format!(
            "stride {stride} does not tile a {IMAGE_SIDE}-pixel axis with receptive field {w}"
        )));
    }
    Ok((IMAGE_SIDE - w) / stride + 1)
}

/// Quadrant half (0 or 1) of a patch starting at `start`, by its centre;
/// centres on the midline go to the lower half.
pub fn quadrant_half(start: usize, w: usize) -> usize {
    usize::from(2 * start + w - 1 > IMAGE_SIDE - 1)
}

/// Precomputed linear map from a contrast-normalized raw patch to unit
/// pre-activations, folding in whitening and (for conditional expectation)
/// the visible precision.
#[derive(Debug, Clone)]
pub struct Encoder {
    kernel: Array2<f64>,
    offset: Array1<f64>,
    scheme: EncodingScheme,
    contrast_epsilon: f64,
    w: usize,
    stride: usize,
    per_axis: usize,
}

impl Encoder {
    pub fn new(params: &GrbmParams, preprocess: &PreprocessModel, cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        check_patch_model(params, preprocess)?;
        let w = rf_side(params.n_visible()).ok_or_else(|| {
            GrbmError::contract(format!("visible dimension {} is not 3w^2", params.n_visible()))
        })?;
        let per_axis = positions_per_axis(w, cfg.stride)?;
        let filters = match cfg.scheme {
            EncodingScheme::ConditionalExpectation => &params.weights() * &params.precision(),
            EncodingScheme::SoftThreshold(_) => params.weights().to_owned(),
        };
        let kernel = filters.dot(&preprocess.whitening_matrix);
        let base = match cfg.scheme {
            EncodingScheme::ConditionalExpectation => params.hidden_bias().to_owned(),
            EncodingScheme::SoftThreshold(t) => Array1::from_elem(params.n_hidden(), -t),
        };
        let offset = base - kernel.dot(&preprocess.patch_mean);
        Ok(Encoder {
            kernel,
            offset,
            scheme: cfg.scheme,
            contrast_epsilon: preprocess.contrast_epsilon,
            w,
            stride: cfg.stride,
            per_axis,
        })
    }

    pub fn n_units(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn feature_len(&self) -> usize {
        4 * self.n_units()
    }

    pub fn positions(&self) -> usize {
        self.per_axis * self.per_axis
    }

    /// Pooled features of one image (CHW bytes), unit-major: `[unit * 4 + quadrant]`
    /// with quadrant = 2·row-half + column-half.
    pub fn image_features(&self, image: &[u8]) -> Result<Array1<f64>> {
        if image.len() != IMAGE_BYTES {
            return Err(GrbmError::contract(format!("image has {} bytes, expected {IMAGE_BYTES}", image.len())));
        }
        let dim = self.kernel.ncols();
        let mut patches = Array2::zeros((self.positions(), dim));
        let mut quadrant = Vec::with_capacity(self.positions());
        for (p, mut row) in patches.rows_mut().into_iter().enumerate() {
            let y = (p / self.per_axis) * self.stride;
            let x = (p % self.per_axis) * self.stride;
            let out = row.as_slice_mut().expect("contiguous");
            copy_patch(image, self.w, x, y, out);
            contrast_normalize_row(out, self.contrast_epsilon);
            quadrant.push(2 * quadrant_half(y, self.w) + quadrant_half(x, self.w));
        }
        let mut act = patches.dot(&self.kernel.t());
        act += &self.offset;
        match self.scheme {
            EncodingScheme::ConditionalExpectation => act.mapv_inplace(logistic),
            EncodingScheme::SoftThreshold(_) => act.mapv_inplace(|r| r.max(0.0)),
        }
        let mut features = Array1::zeros(self.feature_len());
        for (row, &q) in act.axis_iter(Axis(0)).zip(&quadrant) {
            for (i, &r) in row.iter().enumerate() {
                features[4 * i + q] += r;
            }
        }
        Ok(features)
    }

    /// Features of every image, in input order, labelled with the image labels.
    pub fn features(&self, images: &ImageSet) -> Result<Dataset> {
        let mut rows = Array2::zeros((images.len(), self.feature_len()));
        let len = self.feature_len();
        rows.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(len)
            .enumerate()
            .try_for_each(|(i, row)| -> Result<()> {
                let f = self.image_features(images.image(i))?;
                row.copy_from_slice(f.as_slice().expect("contiguous"));
                Ok(())
            })?;
        Dataset::new(
            rows,
            Some(images.labels().iter().map(|&l| u32::from(l)).collect()),
            DimKind::Features,
        )
    }
}

/// Pooled 4M-dimensional features of one image.
pub fn extract_image_features(
    params: &GrbmParams,
    preprocess: &PreprocessModel,
    image: &[u8],
    cfg: &EncoderConfig,
) -> Result<Array1<f64>> {
    Encoder::new(params, preprocess, cfg)?.image_features(image)
}

pub fn extract_features(
    params: &GrbmParams,
    preprocess: &PreprocessModel,
    images: &ImageSet,
    cfg: &EncoderConfig,
) -> Result<Dataset> {
    Encoder::new(params, preprocess, cfg)?.features(images)
}
