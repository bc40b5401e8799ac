use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::{ArchVariant, BackboneConfig, Head};
use crate::bench::{default_thresholds, BenchConfig};
use crate::error::{Error, Result};
use crate::kernel::Sgd;
use crate::labels::{Background, LabelSpace};

fn default_lr() -> f64 {
    3e-5
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_iter_size() -> usize {
    10
}
fn default_max_steps() -> usize {
    300
}
fn default_gamma() -> f64 {
    0.1
}
fn default_crop() -> [usize; 2] {
    [48, 48]
}
fn default_true() -> bool {
    true
}
fn default_radius() -> usize {
    2
}
fn default_k() -> usize {
    3
}
fn default_tolerance() -> f64 {
    0.02
}

/// Everything that determines a training run and its evaluation.
///
/// `seed` has no default. All other fields fall back to desk-scale defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_variant")]
    pub variant: ArchVariant,
    #[serde(default)]
    pub head: Head,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub backbone: BackboneConfig,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_iter_size")]
    pub iter_size: usize,
    /// Parameter updates; each consumes `iter_size` forward/backward passes.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Learning-rate decay period in steps; `None` decays once after two
    /// thirds of `max_steps`.
    #[serde(default)]
    pub step_size: Option<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// `[height, width]` of training crops.
    #[serde(default = "default_crop")]
    pub crop: [usize; 2],
    #[serde(default = "default_true")]
    pub mirror: bool,
    /// Neighbourhood radius of training edge labels.
    #[serde(default = "default_radius")]
    pub label_radius: usize,
    #[serde(default)]
    pub train_manifest: Option<PathBuf>,
    #[serde(default)]
    pub test_manifest: Option<PathBuf>,
    /// Matching tolerance as a fraction of the image diagonal.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub halve: bool,
    /// Write an intermediate checkpoint every this many steps (0 = only at the end).
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn default_variant() -> ArchVariant {
    ArchVariant::CaseNet
}

impl RunConfig {
    pub fn new(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults deserialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > 254 {
            return Err(Error::config("k must be in 1..=254"));
        }
        if self.head == Head::Softmax && self.variant != ArchVariant::Basic {
            return Err(Error::config("the softmax head is only available with the basic variant"));
        }
        self.backbone.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be nonnegative"));
        }
        if self.iter_size == 0 {
            return Err(Error::config("iter_size must be at least 1"));
        }
        if self.step_size == Some(0) {
            return Err(Error::config("step_size must be positive"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::config("gamma must be positive"));
        }
        let stride = crate::arch::STAGE_STRIDES[4];
        if self.crop.iter().any(|&c| c == 0 || c % stride != 0) {
            return Err(Error::config(format!("crop sides must be positive multiples of {stride}")));
        }
        if self.label_radius == 0 {
            return Err(Error::config("label_radius must be at least 1"));
        }
        self.bench().validate()
    }

    pub fn label_space(&self) -> LabelSpace {
        LabelSpace::new(self.k, self.background)
    }

    pub fn sgd(&self) -> Sgd {
        Sgd {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            iter_size: self.iter_size,
        }
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            max_dist_frac: self.tolerance,
            thresholds: self.thresholds.clone(),
            halve: self.halve,
        }
    }

    /// Learning rate in effect for update `step` (0-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        let period = self
            .step_size
            .unwrap_or_else(|| ((2 * self.max_steps) / 3).max(1));
        self.lr * self.gamma.powi((step / period) as i32)
    }

    pub fn train_manifest(&self) -> Result<&Path> {
        self.train_manifest
            .as_deref()
            .ok_or_else(|| Error::config("train_manifest is not set"))
    }

    pub fn test_manifest(&self) -> Result<&Path> {
        self.test_manifest
            .as_deref()
            .ok_or_else(|| Error::config("test_manifest is not set"))
    }
}
