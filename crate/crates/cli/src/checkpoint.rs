//! Checkpoint format, version 1.
//!
//! Stores *raw* (pre-orthonormalization) weights plus the method per layer,
//! so loading reconstructs the exact forward pass; storing orthonormalized
//! weights would drift under re-orthonormalization. JSON keeps floats in
//! shortest round-trip form, so save/load/evaluate is bit-identical to the
//! in-memory model on the same platform.

use std::path::Path;

use serde::{Deserialize, Serialize};
use w1ot::autodiff::Tensor;
use w1ot::lipschitz::{OrthoMethod, OrthonormalLayer, PotentialNet};
use w1ot::{Discriminator, FitResult, StepSizeNet, TransportMap};

use crate::config::RunConfig;
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    #[serde(rename = "in")]
    pub in_dim: usize,
    #[serde(rename = "out")]
    pub out_dim: usize,
    /// "bjorck" or "cayley" for potential layers, "plain" for GAN layers.
    pub method: String,
    /// Row-major `out x in` raw weight.
    pub raw_weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSummary {
    pub final_dual_estimate: f64,
    pub final_gen_loss: f64,
    pub final_disc_loss: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub run_config: RunConfig,
    pub seed: u64,
    pub potential: Vec<LayerRecord>,
    pub stepsize_net: Vec<LayerRecord>,
    pub discriminator: Vec<LayerRecord>,
    pub summary: TrainingSummary,
}

fn method_name(m: OrthoMethod) -> &'static str {
    match m {
        OrthoMethod::Bjorck => "bjorck",
        OrthoMethod::Cayley => "cayley",
    }
}

fn parse_method(s: &str) -> Result<OrthoMethod, CliError> {
    match s {
        "bjorck" => Ok(OrthoMethod::Bjorck),
        "cayley" => Ok(OrthoMethod::Cayley),
        other => Err(CliError::usage(format!("unknown orthonormalization method {other:?}"))),
    }
}

fn record_plain(weight: &Tensor, bias: &Tensor) -> LayerRecord {
    LayerRecord {
        in_dim: weight.cols(),
        out_dim: weight.rows(),
        method: "plain".to_string(),
        raw_weight: weight.data().to_vec(),
        bias: bias.data().to_vec(),
    }
}

impl Checkpoint {
    pub fn from_fit(cfg: &RunConfig, fit: &FitResult) -> Self {
        let potential = fit
            .map
            .potential()
            .layers()
            .iter()
            .map(|layer| LayerRecord {
                in_dim: layer.d_in(),
                out_dim: layer.d_out(),
                method: method_name(layer.method()).to_string(),
                raw_weight: layer.raw_weight().data().to_vec(),
                bias: layer.bias().data().to_vec(),
            })
            .collect();
        let stepsize_net =
            fit.map.stepsize().layer_parts().iter().map(|(w, b)| record_plain(w, b)).collect();
        let discriminator =
            fit.discriminator.layer_parts().iter().map(|(w, b)| record_plain(w, b)).collect();
        Checkpoint {
            format_version: FORMAT_VERSION,
            run_config: cfg.clone(),
            seed: cfg.seed,
            potential,
            stepsize_net,
            discriminator,
            summary: TrainingSummary {
                final_dual_estimate: fit.dual_history.final_dual(),
                final_gen_loss: *fit.gan_history.gen_loss.last().unwrap_or(&f64::NAN),
                final_disc_loss: *fit.gan_history.disc_loss.last().unwrap_or(&f64::NAN),
            },
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::usage(format!("cannot serialize checkpoint: {e}")))?;
        w1ot::data::write_atomic(path, json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if ckpt.format_version != FORMAT_VERSION {
            return Err(CliError::usage(format!(
                "{}: unsupported checkpoint format_version {} (expected {FORMAT_VERSION})",
                path.display(),
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }

    fn tensor_pair(record: &LayerRecord) -> Result<(Tensor, Tensor), CliError> {
        let w = Tensor::from_vec(record.out_dim, record.in_dim, record.raw_weight.clone())?;
        let b = Tensor::from_vec(1, record.out_dim, record.bias.clone())?;
        Ok((w, b))
    }

    pub fn rebuild_potential(&self) -> Result<PotentialNet, CliError> {
        let net_cfg = self.run_config.network_config();
        let mut layers = Vec::with_capacity(self.potential.len());
        for record in &self.potential {
            let (w, b) = Self::tensor_pair(record)?;
            layers.push(OrthonormalLayer::from_parts(
                w,
                b,
                parse_method(&record.method)?,
                net_cfg.bjorck_iters,
                net_cfg.bjorck_beta,
            )?);
        }
        Ok(PotentialNet::from_parts(layers, net_cfg.group_size)?)
    }

    pub fn rebuild_map(&self) -> Result<TransportMap, CliError> {
        let potential = self.rebuild_potential()?;
        let parts = self
            .stepsize_net
            .iter()
            .map(Self::tensor_pair)
            .collect::<Result<Vec<_>, _>>()?;
        let stepsize = StepSizeNet::from_layer_parts(parts)?;
        Ok(TransportMap::new(potential, stepsize)?)
    }

    pub fn rebuild_discriminator(&self) -> Result<Discriminator, CliError> {
        let parts = self
            .discriminator
            .iter()
            .map(Self::tensor_pair)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Discriminator::from_layer_parts(parts)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use w1ot::data::gen_bookshelf;
    use w1ot::{fit_w1ot, Tensor};

    fn tiny_fit() -> (RunConfig, FitResult) {
        let mut cfg = RunConfig::default();
        cfg.seed = 3;
        cfg.network.hidden = vec![8, 8];
        cfg.dual.iterations = 30;
        cfg.dual.batch_size = 32;
        cfg.gan.iterations = 30;
        cfg.gan.batch_size = 32;
        let (src, tgt) = gen_bookshelf(64, 3).unwrap();
        let fit = fit_w1ot(
            &src,
            &tgt,
            &cfg.network_config(),
            &cfg.dual_config(),
            &cfg.gan_config(),
        )
        .unwrap();
        (cfg, fit)
    }

    #[test]
    fn save_load_transport_is_bit_identical() {
        let (cfg, fit) = tiny_fit();
        let ckpt = Checkpoint::from_fit(&cfg, &fit);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let map = loaded.rebuild_map().unwrap();

        let mut rng = w1ot::rng::seeded_rng(1, 0);
        let x = Tensor::uniform(32, 2, -0.5, 1.5, &mut rng);
        let a = fit.map.transport(&x).unwrap();
        let b = map.transport(&x).unwrap();
        assert_eq!(a, b);

        // A second save round trip produces identical bytes.
        let path2 = dir.path().join("model2.json");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn version_mismatch_rejected() {
        let (cfg, fit) = tiny_fit();
        let mut ckpt = Checkpoint::from_fit(&cfg, &fit);
        ckpt.format_version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let json = serde_json::to_string(&ckpt).unwrap();
        std::fs::write(&path, json).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }
}
