//! Dual-stage training: fits the 1-Lipschitz potential by maximizing the
//! empirical Kantorovich-Rubinstein dual `E_src[f] - E_tgt[f]`.
//!
//! Adam with cosine-annealed learning rate, minibatches sampled with
//! replacement independently per side. The minimized loss is the negated
//! dual, so the reported dual estimate is `-loss`. Because `f` is 1-Lipschitz
//! by construction, every dual estimate is a lower bound on the exact W1 of
//! the empirical measures up to the orthonormalization tolerance.

use std::fmt::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use crate::autodiff::{Tape, Tensor};
use crate::data::{write_atomic, Dataset};
use crate::error::{Error, Result};
use crate::lipschitz::{NetworkConfig, PotentialNet, StagedPotential};
use crate::optim::{cosine_lr, Adam};
use crate::rng::{seeded_rng, stream};

/// Hyperparameters for the dual stage.
#[derive(Clone, Debug)]
pub struct DualTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for DualTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            batch_size: 256,
            lr_max: 1e-2,
            lr_min: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.5,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl DualTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("dual iterations must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "dual batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max) {
            return Err(Error::Config(format!(
                "need 0 < lr_min <= lr_max, got lr_min {} lr_max {}",
                self.lr_min, self.lr_max
            )));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }
}

/// How often the dual estimate is re-evaluated on the full datasets.
pub const FULL_DUAL_EVERY: usize = 100;

/// Per-iteration training record.
#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    /// Minibatch dual estimate per iteration (`mean f(X_b) - mean f(Y_b)`).
    pub batch_dual: Vec<f64>,
    /// Learning rate per iteration.
    pub lr: Vec<f64>,
    /// Cumulative wall-clock milliseconds at each iteration. Timing is the
    /// one non-deterministic field; seed-determinism checks skip it.
    pub elapsed_ms: Vec<f64>,
    /// Full-dataset dual estimate every [`FULL_DUAL_EVERY`] iterations and at
    /// the final iteration, as `(iteration, value)`.
    pub full_dual: Vec<(usize, f64)>,
}

impl TrainHistory {
    /// Final full-dataset dual estimate.
    pub fn final_dual(&self) -> f64 {
        self.full_dual.last().map(|&(_, v)| v).unwrap_or(f64::NAN)
    }

    /// Mean minibatch dual estimate over the last `window` iterations.
    pub fn tail_mean_dual(&self, window: usize) -> f64 {
        let n = self.batch_dual.len();
        let w = window.min(n).max(1);
        self.batch_dual[n - w..].iter().sum::<f64>() / w as f64
    }

    /// Average milliseconds per 1000 iterations.
    pub fn ms_per_1000(&self) -> f64 {
        match self.elapsed_ms.last() {
            Some(&total) if !self.elapsed_ms.is_empty() => {
                total / self.elapsed_ms.len() as f64 * 1000.0
            }
            _ => 0.0,
        }
    }

    /// CSV with header `iteration,dual_estimate,lr,elapsed_ms`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("iteration,dual_estimate,lr,elapsed_ms\n");
        for i in 0..self.batch_dual.len() {
            let mut line = String::new();
            write!(
                line,
                "{},{},{},{}",
                i, self.batch_dual[i], self.lr[i], self.elapsed_ms[i]
            )
            .expect("string write");
            out.push_str(&line);
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }
}

/// Dual loss `-mean f(X_src) + mean f(Y_tgt)` on a staged potential.
/// Minimizing it maximizes the dual estimate.
pub fn dual_loss_staged<'t>(
    tape: &'t Tape,
    staged: &StagedPotential<'t>,
    x_src: &Tensor,
    y_tgt: &Tensor,
) -> Result<crate::autodiff::Var<'t>> {
    if x_src.rows() == 0 || y_tgt.rows() == 0 {
        return Err(Error::Usage("dual loss needs non-empty batches".into()));
    }
    if x_src.cols() != y_tgt.cols() {
        return Err(Error::Shape(format!(
            "dual loss batches disagree: {}x{} vs {}x{}",
            x_src.rows(),
            x_src.cols(),
            y_tgt.rows(),
            y_tgt.cols()
        )));
    }
    let fx = staged.forward(tape.constant(x_src.clone()))?.mean();
    let fy = staged.forward(tape.constant(y_tgt.clone()))?.mean();
    fy.sub(&fx)
}

/// Value-level dual loss of a potential on two batches.
pub fn dual_loss(f: &PotentialNet, x_src: &Tensor, y_tgt: &Tensor) -> Result<f64> {
    let tape = Tape::new();
    let staged = f.stage(&tape, false)?;
    dual_loss_staged(&tape, &staged, x_src, y_tgt)?.scalar_value()
}

/// Dual estimate `mean f(X) - mean f(Y)` on full datasets.
pub fn dual_estimate(f: &PotentialNet, x: &Tensor, y: &Tensor) -> Result<f64> {
    Ok(-dual_loss(f, x, y)?)
}

fn sample_batch<R: Rng>(data: &Tensor, batch: usize, rng: &mut R) -> Tensor {
    let n = data.rows();
    let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
    data.gather_rows(&idx)
}

/// Trains a fresh potential to maximize the dual between `source` and
/// `target`. Returns the trained network and the per-iteration history.
pub fn train_potential(
    source: &Dataset,
    target: &Dataset,
    net_cfg: &NetworkConfig,
    cfg: &DualTrainConfig,
) -> Result<(PotentialNet, TrainHistory)> {
    cfg.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "source has {} features, target has {}",
            source.dim(),
            target.dim()
        )));
    }
    let mut net = PotentialNet::new(source.dim(), net_cfg, cfg.seed)?;
    let mut adam = Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)?;
    let names = net.param_names();
    let mut src_rng = seeded_rng(cfg.seed, stream::DUAL_SOURCE_BATCH);
    let mut tgt_rng = seeded_rng(cfg.seed, stream::DUAL_TARGET_BATCH);

    let mut history = TrainHistory::default();
    let start = Instant::now();
    for t in 0..cfg.iterations {
        let xb = sample_batch(source.features(), cfg.batch_size, &mut src_rng);
        let yb = sample_batch(target.features(), cfg.batch_size, &mut tgt_rng);

        let tape = Tape::new();
        let staged = net.stage(&tape, true)?;
        let loss = dual_loss_staged(&tape, &staged, &xb, &yb)?;
        let loss_value = loss.scalar_value()?;
        if !loss_value.is_finite() {
            return Err(Error::Numerical(format!(
                "dual loss is not finite at iteration {t}"
            )));
        }
        tape.backward(loss)?;
        let grads = staged.take_grads()?;
        let lr = cosine_lr(t, cfg.iterations, cfg.lr_max, cfg.lr_min);
        {
            let mut params = net.params_mut();
            adam.step(&mut params, &grads, &names, lr)
                .map_err(|e| match e {
                    Error::Numerical(msg) => {
                        Error::Numerical(format!("{msg} at iteration {t}"))
                    }
                    other => other,
                })?;
        }

        history.batch_dual.push(-loss_value);
        history.lr.push(lr);
        history.elapsed_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if (t + 1) % FULL_DUAL_EVERY == 0 || t + 1 == cfg.iterations {
            let est = dual_estimate(&net, source.features(), target.features())?;
            history.full_dual.push((t + 1, est));
        }
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_bookshelf;
    use crate::lipschitz::OrthoMethod;
    use crate::oracle::w1_matching;
    use approx::assert_relative_eq;

    fn tiny_net_cfg() -> NetworkConfig {
        NetworkConfig { hidden: vec![16, 16], group_size: 4, ..NetworkConfig::default() }
    }

    fn quick_cfg(iterations: usize, seed: u64) -> DualTrainConfig {
        DualTrainConfig { iterations, batch_size: 64, seed, ..DualTrainConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(DualTrainConfig::default().validate().is_ok());
        assert!(DualTrainConfig { batch_size: 1, ..Default::default() }.validate().is_err());
        assert!(DualTrainConfig { lr_min: 0.0, ..Default::default() }.validate().is_err());
        assert!(DualTrainConfig { lr_min: 1.0, lr_max: 0.5, ..Default::default() }
            .validate()
            .is_err());
        assert!(DualTrainConfig { adam_beta1: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn dual_loss_hand_example_in_1d() {
        // A single 1x1 layer with raw weight +1 (or -1) stays put under the
        // Björck projection, giving f(x) = x and f(x) = -x exactly.
        use crate::lipschitz::OrthonormalLayer;
        let make = |w: f64| {
            let layer = OrthonormalLayer::from_parts(
                Tensor::scalar(w),
                Tensor::zeros(1, 1),
                OrthoMethod::Bjorck,
                20,
                0.5,
            )
            .unwrap();
            PotentialNet::from_parts(vec![layer], 1).unwrap()
        };
        let x = Tensor::scalar(0.0);
        let y = Tensor::scalar(2.0);
        let plus = make(1.0);
        assert_relative_eq!(dual_loss(&plus, &x, &y).unwrap(), 2.0, epsilon = 1e-9);
        let minus = make(-1.0);
        assert_relative_eq!(dual_loss(&minus, &x, &y).unwrap(), -2.0, epsilon = 1e-9);
    }

    #[test]
    fn dual_loss_zero_on_identical_batches() {
        let net = PotentialNet::new(2, &tiny_net_cfg(), 1).unwrap();
        let mut rng = crate::rng::seeded_rng(2, 0);
        let x = Tensor::uniform(16, 2, -1.0, 1.0, &mut rng);
        assert_eq!(dual_loss(&net, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn dual_loss_rejects_empty_batch() {
        let net = PotentialNet::new(2, &tiny_net_cfg(), 1).unwrap();
        let x = Tensor::zeros(0, 2);
        let y = Tensor::zeros(4, 2);
        assert!(matches!(dual_loss(&net, &x, &y), Err(Error::Usage(_))));
    }

    #[test]
    fn one_dimensional_shift_converges_to_w1() {
        // U[0,1] vs U[2,3] in one feature: exact W1 is 2.
        let mut rng = crate::rng::seeded_rng(5, 1);
        let src = Dataset::new("s", Tensor::uniform(256, 1, 0.0, 1.0, &mut rng), vec!["x".into()])
            .unwrap();
        let tgt = Dataset::new("t", Tensor::uniform(256, 1, 2.0, 3.0, &mut rng), vec!["x".into()])
            .unwrap();
        let (_, history) =
            train_potential(&src, &tgt, &tiny_net_cfg(), &quick_cfg(1500, 3)).unwrap();
        let final_dual = history.final_dual();
        assert!(
            (1.5..=2.05).contains(&final_dual),
            "final dual {final_dual}"
        );
    }

    #[test]
    fn dual_estimate_never_exceeds_oracle() {
        let (src, tgt) = gen_bookshelf(128, 7).unwrap();
        let (_, history) =
            train_potential(&src, &tgt, &tiny_net_cfg(), &quick_cfg(800, 7)).unwrap();
        let oracle = w1_matching(src.features(), tgt.features()).unwrap().cost;
        // Diameter of bookshelf data is about 3; slack 1e-3 * diameter.
        for &(it, est) in &history.full_dual {
            assert!(est <= oracle + 3.2e-3, "iteration {it}: {est} vs oracle {oracle}");
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (src, tgt) = gen_bookshelf(64, 3).unwrap();
        let run = || {
            let (net, h) =
                train_potential(&src, &tgt, &tiny_net_cfg(), &quick_cfg(120, 9)).unwrap();
            (net.params().into_iter().cloned().collect::<Vec<_>>(), h.batch_dual, h.lr)
        };
        let (pa, da, la) = run();
        let (pb, db, lb) = run();
        assert_eq!(pa, pb);
        assert_eq!(da, db);
        assert_eq!(la, lb);
    }

    #[test]
    fn history_lengths_match_iterations() {
        let (src, tgt) = gen_bookshelf(64, 4).unwrap();
        let (_, h) = train_potential(&src, &tgt, &tiny_net_cfg(), &quick_cfg(250, 1)).unwrap();
        assert_eq!(h.batch_dual.len(), 250);
        assert_eq!(h.lr.len(), 250);
        assert_eq!(h.elapsed_ms.len(), 250);
        // Full-dataset estimates at 100, 200 and the final iteration.
        assert_eq!(
            h.full_dual.iter().map(|&(i, _)| i).collect::<Vec<_>>(),
            vec![100, 200, 250]
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = crate::rng::seeded_rng(8, 0);
        let src =
            Dataset::new("s", Tensor::uniform(8, 2, 0.0, 1.0, &mut rng), vec!["a".into(), "b".into()])
                .unwrap();
        let tgt = Dataset::new("t", Tensor::uniform(8, 3, 0.0, 1.0, &mut rng), vec![
            "a".into(),
            "b".into(),
            "c".into(),
        ])
        .unwrap();
        assert!(matches!(
            train_potential(&src, &tgt, &tiny_net_cfg(), &quick_cfg(10, 0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn history_csv_layout() {
        let (src, tgt) = gen_bookshelf(64, 5).unwrap();
        let (_, h) = train_potential(&src, &tgt, &tiny_net_cfg(), &quick_cfg(30, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dual.csv");
        h.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iteration,dual_estimate,lr,elapsed_ms");
        assert_eq!(lines.count(), 30);
    }
}
