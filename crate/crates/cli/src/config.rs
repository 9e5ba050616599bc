//! JSON run configuration: every knob of the two training stages, the
//! network architecture and the metric settings. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use w1ot::lipschitz::OrthoMethod;
use w1ot::{DualTrainConfig, GanTrainConfig, NetworkConfig};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub dual: DualSection,
    pub gan: GanSection,
    pub network: NetworkSection,
    pub metrics: MetricsSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualSection {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for DualSection {
    fn default() -> Self {
        let d = DualTrainConfig::default();
        Self {
            iterations: d.iterations,
            batch_size: d.batch_size,
            lr_max: d.lr_max,
            lr_min: d.lr_min,
            adam_beta1: d.adam_beta1,
            adam_beta2: d.adam_beta2,
            adam_eps: d.adam_eps,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanSection {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub disc_steps_per_gen_step: usize,
}

impl Default for GanSection {
    fn default() -> Self {
        let g = GanTrainConfig::default();
        Self {
            iterations: g.iterations,
            batch_size: g.batch_size,
            lr: g.lr,
            adam_beta1: g.adam_beta1,
            adam_beta2: g.adam_beta2,
            adam_eps: g.adam_eps,
            disc_steps_per_gen_step: g.disc_steps_per_gen_step,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    pub group_size: usize,
    pub method: OrthoMethod,
    pub bjorck_iters: usize,
    pub bjorck_beta: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = NetworkConfig::default();
        Self {
            hidden: n.hidden,
            group_size: n.group_size,
            method: n.method,
            bjorck_iters: n.bjorck_iters,
            bjorck_beta: n.bjorck_beta,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub mmd_scales: Vec<f64>,
    pub monotonicity_pairs: usize,
    pub monotonicity_cos_tol: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            mmd_scales: w1ot::metrics::DEFAULT_MMD_SCALES.to_vec(),
            monotonicity_pairs: 10_000,
            monotonicity_cos_tol: w1ot::metrics::DEFAULT_COS_TOL,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Validates every nested section before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        self.network_config().validate().map_err(CliError::from)?;
        self.dual_config().validate().map_err(CliError::from)?;
        self.gan_config().validate().map_err(CliError::from)?;
        if self.metrics.mmd_scales.is_empty() || self.metrics.mmd_scales.iter().any(|&s| !(s > 0.0))
        {
            return Err(CliError::usage("metrics.mmd_scales must be positive and non-empty"));
        }
        if self.metrics.monotonicity_pairs == 0 {
            return Err(CliError::usage("metrics.monotonicity_pairs must be at least 1"));
        }
        if !(-1.0..=1.0).contains(&self.metrics.monotonicity_cos_tol) {
            return Err(CliError::usage("metrics.monotonicity_cos_tol must be in [-1, 1]"));
        }
        Ok(())
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            hidden: self.network.hidden.clone(),
            group_size: self.network.group_size,
            method: self.network.method,
            bjorck_iters: self.network.bjorck_iters,
            bjorck_beta: self.network.bjorck_beta,
        }
    }

    pub fn dual_config(&self) -> DualTrainConfig {
        DualTrainConfig {
            iterations: self.dual.iterations,
            batch_size: self.dual.batch_size,
            lr_max: self.dual.lr_max,
            lr_min: self.dual.lr_min,
            adam_beta1: self.dual.adam_beta1,
            adam_beta2: self.dual.adam_beta2,
            adam_eps: self.dual.adam_eps,
            seed: self.seed,
        }
    }

    pub fn gan_config(&self) -> GanTrainConfig {
        GanTrainConfig {
            iterations: self.gan.iterations,
            batch_size: self.gan.batch_size,
            lr: self.gan.lr,
            adam_beta1: self.gan.adam_beta1,
            adam_beta2: self.gan.adam_beta2,
            adam_eps: self.gan.adam_eps,
            disc_steps_per_gen_step: self.gan.disc_steps_per_gen_step,
            seed: self.seed,
        }
    }
}
