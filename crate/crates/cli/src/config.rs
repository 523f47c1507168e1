//! Flat `key=value` run configuration.
//!
//! Every key has a default; a config file only lists the keys it changes.
//! Unknown keys and unparsable values are rejected with the key name. The
//! resolved document (all keys, sorted) is what gets archived and hashed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use grbm_core::classify::CvGrid;
use grbm_core::data::{ToyGmmSpec, CONTRAST_EPSILON, ZCA_EPSILON};
use grbm_core::encode::{EncoderConfig, EncodingScheme};
use grbm_core::infomax::StopCriterion;
use grbm_core::pipeline::PipelineConfig;
use grbm_core::toy::ToyConfig;
use grbm_core::train::{Algorithm, Reconstruction, SparsityConfig, TrainConfig};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy)]
enum Kind {
    Uint,
    Real,
    Flag,
    Reals,
    Uints,
    Text,
    Choice(&'static [&'static str]),
}

/// Key, default, kind.
const KEYS: &[(&str, &str, Kind)] = &[
    ("seed", "0", Kind::Uint),
    ("data.source", "cifar", Kind::Choice(&["cifar", "synthetic"])),
    ("data.dir", "cifar-10-batches-bin", Kind::Text),
    ("data.train_images", "0", Kind::Uint),
    ("data.test_images", "0", Kind::Uint),
    ("patches.rf_size", "6", Kind::Uint),
    ("patches.count", "100000", Kind::Uint),
    ("preprocess.contrast_epsilon", "", Kind::Real),
    ("preprocess.zca_epsilon", "", Kind::Real),
    ("model.hidden", "1600", Kind::Uint),
    ("train.learning_rate", "0.003", Kind::Real),
    ("train.epochs", "80", Kind::Uint),
    ("train.batch_size", "100", Kind::Uint),
    ("train.algorithm", "pcd", Kind::Choice(&["cd", "pcd"])),
    ("train.k", "1", Kind::Uint),
    ("train.chains", "100", Kind::Uint),
    ("train.reconstruction", "sampled", Kind::Choice(&["sampled", "mean"])),
    ("train.momentum", "0", Kind::Real),
    ("train.checkpoint_every", "1", Kind::Uint),
    ("train.eval_subset", "10000", Kind::Uint),
    ("sparsity.target", "0.05", Kind::Real),
    ("sparsity.strength", "0", Kind::Real),
    ("sparsity.penalize_weights", "false", Kind::Flag),
    ("encoder.scheme", "soft_threshold", Kind::Choice(&["soft_threshold", "conditional_expectation"])),
    ("encoder.threshold", "0.25", Kind::Real),
    ("encoder.stride", "1", Kind::Uint),
    ("svm.c", "35", Kind::Real),
    ("svm.classifier_images", "0", Kind::Uint),
    ("stop.theta", "0", Kind::Real),
    ("stop.thetas", "-1.5,-0.7,0,0.7,1.5", Kind::Reals),
    ("stop.smoothing", "1", Kind::Uint),
    ("cv.enabled", "false", Kind::Flag),
    ("cv.rho", "0.01,0.02,0.03,0.04,0.05,0.06", Kind::Reals),
    ("cv.lambda", "0.1,0.2,0.3,0.4,0.5", Kind::Reals),
    ("cv.c", "35,75,150,300", Kind::Reals),
    ("cv.threshold", "0.1,0.2,0.3,0.4,0.5,0.6,0.7", Kind::Reals),
    ("cv.folds", "5", Kind::Uint),
    ("toy.layout", "default", Kind::Choice(&["default", "symmetric"])),
    ("toy.samples", "1000", Kind::Uint),
    ("toy.hidden", "4", Kind::Uint),
    ("toy.epochs", "2000", Kind::Uint),
    ("toy.learning_rate", "0.1", Kind::Real),
    ("toy.batch_size", "100", Kind::Uint),
    ("toy.snapshots", "10,140,2000", Kind::Uints),
    ("verify.first_seed", "0", Kind::Uint),
    ("verify.count", "50", Kind::Uint),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .map(|&(k, d, kind)| {
                let d = match k {
                    "preprocess.contrast_epsilon" => format!("{CONTRAST_EPSILON:?}"),
                    "preprocess.zca_epsilon" => format!("{ZCA_EPSILON:?}"),
                    _ => d.to_string(),
                };
                (k, check(k, &d, kind).expect("defaults are valid"))
            })
            .collect();
        RunConfig { values }
    }
}

fn check(key: &str, value: &str, kind: Kind) -> Result<String, CliError> {
    let bad = |what: &str| CliError::Config(format!("{key}: {what}, got {value:?}"));
    let real = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    match kind {
        Kind::Uint => value
            .parse::<u64>()
            .map(|v| v.to_string())
            .map_err(|_| bad("expected a non-negative integer")),
        Kind::Real => real(value)
            .map(|v| format!("{v:?}"))
            .ok_or_else(|| bad("expected a finite number")),
        Kind::Flag => value
            .parse::<bool>()
            .map(|v| v.to_string())
            .map_err(|_| bad("expected true or false")),
        Kind::Reals => value
            .split(',')
            .map(|s| real(s).map(|v| format!("{v:?}")))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.join(","))
            .ok_or_else(|| bad("expected a comma-separated list of numbers")),
        Kind::Uints => {
            if value.trim().is_empty() {
                return Ok(String::new());
            }
            value
                .split(',')
                .map(|s| s.trim().parse::<u64>().map(|v| v.to_string()))
                .collect::<Result<Vec<_>, _>>()
                .map(|v| v.join(","))
                .map_err(|_| bad("expected a comma-separated list of integers"))
        }
        Kind::Text => {
            if value.is_empty() {
                Err(bad("expected a non-empty value"))
            } else {
                Ok(value.to_string())
            }
        }
        Kind::Choice(options) => {
            if options.contains(&value) {
                Ok(value.to_string())
            } else {
                Err(bad(&format!("expected one of {}", options.join(", "))))
            }
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Parses a document over the defaults. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key=value, got {line:?}", n + 1))
            })?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(CliError::Config(format!("key {key} given twice")));
            }
            seen.push(key);
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let &(k, _, kind) = KEYS
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| CliError::Config(format!("unknown key {key}")))?;
        let normalized = check(k, value, kind)?;
        self.values.insert(k, normalized);
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    fn uint(&self, key: &str) -> usize {
        self.get(key).parse().expect("validated integer")
    }

    fn real(&self, key: &str) -> f64 {
        self.get(key).parse().expect("validated number")
    }

    fn reals(&self, key: &str) -> Vec<f64> {
        self.get(key).split(',').map(|s| s.parse().expect("validated number")).collect()
    }

    /// The resolved document: one sorted `key=value` per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Hex SHA-256 of the resolved document.
    pub fn hash(&self) -> String {
        Sha256::digest(self.render().as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    /// Checks every derived module config.
    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |e: grbm_core::GrbmError| CliError::Config(e.to_string());
        self.train_config().validate().map_err(wrap)?;
        self.encoder_config().validate().map_err(wrap)?;
        self.toy_config().validate().map_err(wrap)?;
        StopCriterion::new(self.theta()).map_err(wrap)?;
        for &t in &self.reals("stop.thetas") {
            StopCriterion::new(t).map_err(wrap)?;
        }
        if self.cross_validate() {
            self.cv_grid().validate().map_err(wrap)?;
        }
        let p = self.pipeline_config();
        if p.rf_size == 0 || p.rf_size > grbm_core::data::IMAGE_SIDE {
            return Err(CliError::Config(format!("patches.rf_size: must lie in 1..=32, got {}", p.rf_size)));
        }
        grbm_core::encode::positions_per_axis(p.rf_size, p.encoder.stride)
            .map_err(|e| CliError::Config(format!("encoder.stride: {e}")))?;
        if p.hidden == 0 || p.patches == 0 {
            return Err(CliError::Config("model.hidden and patches.count must be >= 1".into()));
        }
        if p.svm_c.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(CliError::Config(format!("svm.c: must be > 0, got {}", p.svm_c)));
        }
        if !(p.contrast_epsilon > 0.0 && p.zca_epsilon > 0.0) {
            return Err(CliError::Config("preprocess epsilons must be > 0".into()));
        }
        if self.smoothing() == 0 {
            return Err(CliError::Config("stop.smoothing: must be >= 1".into()));
        }
        let sparsity = self.real("sparsity.strength");
        if sparsity < 0.0 {
            return Err(CliError::Config(format!("sparsity.strength: must be >= 0, got {sparsity}")));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.get("seed").parse().expect("validated integer")
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.values.insert("seed", seed.to_string());
    }

    pub fn theta(&self) -> f64 {
        self.real("stop.theta")
    }

    pub fn set_theta(&mut self, theta: f64) -> Result<(), CliError> {
        self.set("stop.theta", &format!("{theta:?}"))?;
        StopCriterion::new(theta).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn smoothing(&self) -> usize {
        self.uint("stop.smoothing")
    }

    pub fn synthetic(&self) -> bool {
        self.get("data.source") == "synthetic"
    }

    pub fn data_dir(&self) -> PathBuf {
        PathBuf::from(self.get("data.dir"))
    }

    pub fn train_images(&self) -> usize {
        self.uint("data.train_images")
    }

    pub fn test_images(&self) -> usize {
        self.uint("data.test_images")
    }

    pub fn cross_validate(&self) -> bool {
        self.get("cv.enabled") == "true"
    }

    pub fn verify_range(&self) -> (u64, usize) {
        (
            self.get("verify.first_seed").parse().expect("validated integer"),
            self.uint("verify.count"),
        )
    }

    pub fn sparsity(&self) -> Option<SparsityConfig> {
        let strength = self.real("sparsity.strength");
        (strength > 0.0).then(|| SparsityConfig {
            target: self.real("sparsity.target"),
            strength,
            penalize_weights: self.get("sparsity.penalize_weights") == "true",
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let k = self.uint("train.k");
        TrainConfig {
            learning_rate: self.real("train.learning_rate"),
            epochs: self.uint("train.epochs"),
            batch_size: self.uint("train.batch_size"),
            algorithm: match self.get("train.algorithm") {
                "cd" => Algorithm::Cd { k },
                _ => Algorithm::Pcd {
                    k,
                    n_chains: self.uint("train.chains"),
                },
            },
            reconstruction: match self.get("train.reconstruction") {
                "mean" => Reconstruction::Mean,
                _ => Reconstruction::Sampled,
            },
            sparsity: self.sparsity(),
            momentum: self.real("train.momentum"),
            seed: self.seed(),
            checkpoint_every: self.uint("train.checkpoint_every"),
            eval_subset: self.uint("train.eval_subset"),
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            scheme: match self.get("encoder.scheme") {
                "conditional_expectation" => EncodingScheme::ConditionalExpectation,
                _ => EncodingScheme::SoftThreshold(self.real("encoder.threshold")),
            },
            stride: self.uint("encoder.stride"),
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            rf_size: self.uint("patches.rf_size"),
            patches: self.uint("patches.count"),
            hidden: self.uint("model.hidden"),
            train: self.train_config(),
            encoder: self.encoder_config(),
            svm_c: self.real("svm.c"),
            classifier_images: self.uint("svm.classifier_images"),
            thetas: self.reals("stop.thetas"),
            contrast_epsilon: self.real("preprocess.contrast_epsilon"),
            zca_epsilon: self.real("preprocess.zca_epsilon"),
        }
    }

    pub fn cv_grid(&self) -> CvGrid {
        CvGrid {
            rho_values: self.reals("cv.rho"),
            lambda_values: self.reals("cv.lambda"),
            c_values: self.reals("cv.c"),
            threshold_values: self.reals("cv.threshold"),
            folds: self.uint("cv.folds"),
        }
    }

    pub fn toy_config(&self) -> ToyConfig {
        let spec = match self.get("toy.layout") {
            "symmetric" => ToyGmmSpec::symmetric(),
            _ => ToyGmmSpec::default(),
        };
        let snapshots = self.get("toy.snapshots");
        ToyConfig {
            spec: ToyGmmSpec { seed: self.seed(), ..spec },
            samples: self.uint("toy.samples"),
            hidden: self.uint("toy.hidden"),
            epochs: self.uint("toy.epochs"),
            learning_rate: self.real("toy.learning_rate"),
            batch_size: self.uint("toy.batch_size"),
            seed: self.seed(),
            snapshots: if snapshots.is_empty() {
                Vec::new()
            } else {
                snapshots.split(',').map(|s| s.parse().expect("validated integer")).collect()
            },
        }
    }
}
