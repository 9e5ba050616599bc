//! Step-size recovery by adversarial training.
//!
//! The dual stage only pins down the transport *direction* `-grad f`; the map
//! itself needs a per-sample step length. With the potential frozen, a
//! non-negative step-size network is trained against a discriminator so that
//! transported source samples become indistinguishable from target samples:
//!
//! - generator loss: `-E_src[log D(T(x))]`
//! - discriminator loss: `-E_tgt[log D(y)] - E_src[log(1 - D(T(x)))]`
//!
//! The transported batch inside the discriminator loss is detached, so only
//! the discriminator moves there; inside the generator loss the direction is
//! a constant and gradients flow into the step-size network alone.

use std::fmt::Write;
use std::path::Path;

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::{write_atomic, Dataset};
use crate::dual::TrainHistory;
use crate::error::{Error, Result};
use crate::lipschitz::{NetworkConfig, PotentialNet};
use crate::optim::Adam;
use crate::rng::{seeded_rng, stream};

/// Hyperparameters for the adversarial step-size stage.
#[derive(Clone, Debug)]
pub struct GanTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    /// Learning rate for both networks; no schedule.
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub disc_steps_per_gen_step: usize,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            batch_size: 256,
            lr: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            adam_eps: 1e-8,
            disc_steps_per_gen_step: 1,
            seed: 0,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("gan iterations must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("gan batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("gan lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if self.disc_steps_per_gen_step == 0 {
            return Err(Error::Config("disc_steps_per_gen_step must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum OutAct {
    /// Smooth non-negative output (step sizes).
    Softplus,
    /// Output in (0, 1) (discriminator probabilities).
    Sigmoid,
}

#[derive(Clone, Debug)]
struct DenseLayer {
    weight: Tensor, // d_out x d_in
    bias: Tensor,   // 1 x d_out
}

/// Plain feed-forward network with rectifier hidden activations.
#[derive(Clone, Debug)]
struct Mlp {
    layers: Vec<DenseLayer>,
    out_act: OutAct,
}

struct StagedMlp<'t> {
    weights: Vec<Var<'t>>,
    biases: Vec<Var<'t>>,
    out_act: OutAct,
}

impl Mlp {
    fn init<R: Rng>(
        input_dim: usize,
        hidden: &[usize],
        out_act: OutAct,
        final_bias: f64,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut d_in = input_dim;
        for &w in hidden {
            layers.push(DenseLayer {
                weight: Tensor::uniform(w, d_in, -1.0 / (d_in as f64).sqrt(), 1.0 / (d_in as f64).sqrt(), rng),
                bias: Tensor::zeros(1, w),
            });
            d_in = w;
        }
        layers.push(DenseLayer {
            weight: Tensor::uniform(1, d_in, -1.0 / (d_in as f64).sqrt(), 1.0 / (d_in as f64).sqrt(), rng),
            bias: Tensor::filled(1, 1, final_bias),
        });
        Self { layers, out_act }
    }

    fn from_parts(layers: Vec<DenseLayer>, out_act: OutAct) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("mlp needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].weight.rows() != pair[1].weight.cols() {
                return Err(Error::Shape(format!(
                    "mlp layer widths do not chain: {} -> {}",
                    pair[0].weight.rows(),
                    pair[1].weight.cols()
                )));
            }
        }
        for layer in &layers {
            if layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.rows() {
                return Err(Error::Shape(format!(
                    "mlp bias {}x{} does not match weight {}x{}",
                    layer.bias.rows(),
                    layer.bias.cols(),
                    layer.weight.rows(),
                    layer.weight.cols()
                )));
            }
        }
        if layers.last().expect("non-empty").weight.rows() != 1 {
            return Err(Error::Shape("mlp final layer must output one value".into()));
        }
        Ok(Self { layers, out_act })
    }

    fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    fn stage<'t>(&self, tape: &'t Tape, trainable: bool) -> StagedMlp<'t> {
        let weights =
            self.layers.iter().map(|l| tape.leaf(l.weight.clone(), trainable)).collect();
        let biases = self.layers.iter().map(|l| tape.leaf(l.bias.clone(), trainable)).collect();
        StagedMlp { weights, biases, out_act: self.out_act }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let staged = self.stage(&tape, false);
        Ok(staged.forward(tape.constant(x.clone()))?.value())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input {}x{} does not match network input dimension {}",
                x.rows(),
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{prefix}.layer{i}.weight"), format!("{prefix}.layer{i}.bias")])
            .collect()
    }
}

impl<'t> StagedMlp<'t> {
    fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        let mut h = x;
        let last = self.weights.len() - 1;
        for idx in 0..=last {
            h = h.matmul(&self.weights[idx].t())?.add_bias(&self.biases[idx])?;
            if idx < last {
                h = h.relu();
            }
        }
        Ok(match self.out_act {
            OutAct::Softplus => h.softplus(),
            OutAct::Sigmoid => h.sigmoid(),
        })
    }

    fn take_grads(&self) -> Vec<Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| {
                let (wr, wc) = w.shape();
                let (br, bc) = b.shape();
                [
                    w.take_grad().unwrap_or_else(|| Tensor::zeros(wr, wc)),
                    b.take_grad().unwrap_or_else(|| Tensor::zeros(br, bc)),
                ]
            })
            .collect()
    }
}

/// Non-negative per-sample step size `eta(x)`; softplus output keeps it
/// strictly positive and smooth. The final bias starts at -2 so initial
/// steps are about 0.13 and training begins near the identity map.
#[derive(Clone, Debug)]
pub struct StepSizeNet {
    net: Mlp,
}

impl StepSizeNet {
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let mut rng = seeded_rng(seed, stream::GAN_STEPSIZE_INIT);
        Ok(Self { net: Mlp::init(input_dim, hidden, OutAct::Softplus, -2.0, &mut rng) })
    }

    /// Step sizes for each row (an `m x 1` tensor, all entries >= 0).
    pub fn step_sizes(&self, x: &Tensor) -> Result<Tensor> {
        self.net.check_input(x)?;
        self.net.forward(x)
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Layer views as `(weight, bias)` pairs, for serialization.
    pub fn layer_parts(&self) -> Vec<(&Tensor, &Tensor)> {
        self.net.layers.iter().map(|l| (&l.weight, &l.bias)).collect()
    }

    pub fn from_layer_parts(parts: Vec<(Tensor, Tensor)>) -> Result<Self> {
        let layers =
            parts.into_iter().map(|(weight, bias)| DenseLayer { weight, bias }).collect();
        Ok(Self { net: Mlp::from_parts(layers, OutAct::Softplus)? })
    }
}

/// Discriminator `D(x) in (0, 1)`.
#[derive(Clone, Debug)]
pub struct Discriminator {
    net: Mlp,
}

impl Discriminator {
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let mut rng = seeded_rng(seed, stream::GAN_DISC_INIT);
        Ok(Self { net: Mlp::init(input_dim, hidden, OutAct::Sigmoid, 0.0, &mut rng) })
    }

    /// Probabilities for each row (an `m x 1` tensor in (0, 1)).
    pub fn probs(&self, x: &Tensor) -> Result<Tensor> {
        self.net.check_input(x)?;
        self.net.forward(x)
    }

    pub fn layer_parts(&self) -> Vec<(&Tensor, &Tensor)> {
        self.net.layers.iter().map(|l| (&l.weight, &l.bias)).collect()
    }

    pub fn from_layer_parts(parts: Vec<(Tensor, Tensor)>) -> Result<Self> {
        let layers =
            parts.into_iter().map(|(weight, bias)| DenseLayer { weight, bias }).collect();
        Ok(Self { net: Mlp::from_parts(layers, OutAct::Sigmoid)? })
    }
}

/// Frozen potential plus trained step sizes: the learned transport map
/// `T(x) = x - eta(x) * grad f(x) / max(||grad f(x)||, floor)`.
#[derive(Clone, Debug)]
pub struct TransportMap {
    potential: PotentialNet,
    stepsize: StepSizeNet,
    direction_floor: f64,
}

/// Default floor on the gradient norm when normalizing directions.
pub const DIRECTION_FLOOR: f64 = 1e-8;

impl TransportMap {
    pub fn new(potential: PotentialNet, stepsize: StepSizeNet) -> Result<Self> {
        if potential.input_dim() != stepsize.input_dim() {
            return Err(Error::Shape(format!(
                "potential expects {} features, step-size net expects {}",
                potential.input_dim(),
                stepsize.input_dim()
            )));
        }
        Ok(Self { potential, stepsize, direction_floor: DIRECTION_FLOOR })
    }

    pub fn potential(&self) -> &PotentialNet {
        &self.potential
    }

    pub fn stepsize(&self) -> &StepSizeNet {
        &self.stepsize
    }

    pub fn input_dim(&self) -> usize {
        self.potential.input_dim()
    }

    /// Unit transport directions `grad f(x) / max(||grad f(x)||, floor)`.
    pub fn unit_directions(&self, x: &Tensor) -> Result<Tensor> {
        unit_directions(&self.potential, x, self.direction_floor)
    }

    /// Applies the map row by row. Pure: identical inputs give identical
    /// outputs.
    pub fn transport(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "transport input {}x{} does not match map dimension {}",
                x.rows(),
                x.cols(),
                self.input_dim()
            )));
        }
        let directions = self.unit_directions(x)?;
        let eta = self.stepsize.step_sizes(x)?;
        let mut out = x.clone();
        for i in 0..x.rows() {
            let step = eta.get(i, 0);
            let c = x.cols();
            for (o, d) in out.data_mut()[i * c..(i + 1) * c].iter_mut().zip(directions.row(i)) {
                *o -= step * d;
            }
        }
        Ok(out)
    }
}

fn unit_directions(potential: &PotentialNet, x: &Tensor, floor: f64) -> Result<Tensor> {
    let mut grad = potential.input_grad(x)?;
    let norms = grad.row_norms();
    for i in 0..grad.rows() {
        let inv = 1.0 / norms.get(i, 0).max(floor);
        let c = grad.cols();
        for v in &mut grad.data_mut()[i * c..(i + 1) * c] {
            *v *= inv;
        }
    }
    Ok(grad)
}

/// `-mean log D(T(x))` over a source batch (value only).
pub fn generator_loss(disc: &Discriminator, map: &TransportMap, x_src: &Tensor) -> Result<f64> {
    if x_src.rows() == 0 {
        return Err(Error::Usage("generator loss needs a non-empty batch".into()));
    }
    let transported = map.transport(x_src)?;
    let probs = disc.probs(&transported)?;
    Ok(-probs.map(|p| p.max(crate::autodiff::LOG_FLOOR).ln()).mean())
}

/// `-mean log D(y) - mean log(1 - D(T(x)))` (value only); the transported
/// samples are plain values, detached from the step-size parameters.
pub fn discriminator_loss(
    disc: &Discriminator,
    map: &TransportMap,
    x_src: &Tensor,
    y_tgt: &Tensor,
) -> Result<f64> {
    if x_src.rows() == 0 || y_tgt.rows() == 0 {
        return Err(Error::Usage("discriminator loss needs non-empty batches".into()));
    }
    let transported = map.transport(x_src)?;
    let p_fake = disc.probs(&transported)?;
    let p_real = disc.probs(y_tgt)?;
    let floor = crate::autodiff::LOG_FLOOR;
    let real_term = -p_real.map(|p| p.max(floor).ln()).mean();
    let fake_term = -p_fake.map(|p| (1.0 - p).max(floor).ln()).mean();
    Ok(real_term + fake_term)
}

/// Per-iteration GAN losses.
#[derive(Clone, Debug, Default)]
pub struct GanHistory {
    pub gen_loss: Vec<f64>,
    pub disc_loss: Vec<f64>,
}

impl GanHistory {
    /// CSV with header `iteration,gen_loss,disc_loss`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("iteration,gen_loss,disc_loss\n");
        for i in 0..self.gen_loss.len() {
            let mut line = String::new();
            write!(line, "{},{},{}", i, self.gen_loss[i], self.disc_loss[i]).expect("string write");
            out.push_str(&line);
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }
}

fn sample_indices<R: Rng>(n: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..n)).collect()
}

/// Trains the step-size network against a discriminator with the potential
/// frozen. Unit transport directions of the fixed source rows are
/// precomputed once, since the frozen potential never changes.
pub fn train_stepsize(
    potential: &PotentialNet,
    source: &Dataset,
    target: &Dataset,
    hidden: &[usize],
    cfg: &GanTrainConfig,
) -> Result<(StepSizeNet, Discriminator, GanHistory)> {
    cfg.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "source has {} features, target has {}",
            source.dim(),
            target.dim()
        )));
    }
    if source.dim() != potential.input_dim() {
        return Err(Error::Shape(format!(
            "potential expects {} features, data has {}",
            potential.input_dim(),
            source.dim()
        )));
    }
    let dim = source.dim();
    let mut stepsize = StepSizeNet::new(dim, hidden, cfg.seed)?;
    let mut disc = Discriminator::new(dim, hidden, cfg.seed)?;
    let mut adam_gen = Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)?;
    let mut adam_disc = Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)?;
    let gen_names = stepsize.net.param_names("stepsize");
    let disc_names = disc.net.param_names("discriminator");

    let src = source.features();
    let tgt = target.features();
    let directions = unit_directions(potential, src, DIRECTION_FLOOR)?;

    let mut src_rng = seeded_rng(cfg.seed, stream::GAN_SOURCE_BATCH);
    let mut tgt_rng = seeded_rng(cfg.seed, stream::GAN_TARGET_BATCH);
    let mut history = GanHistory::default();
    let floor = crate::autodiff::LOG_FLOOR;

    for t in 0..cfg.iterations {
        // Discriminator step(s): transported batch detached.
        let mut last_disc_loss = f64::NAN;
        for _ in 0..cfg.disc_steps_per_gen_step {
            let idx = sample_indices(src.rows(), cfg.batch_size, &mut src_rng);
            let xb = src.gather_rows(&idx);
            let ub = directions.gather_rows(&idx);
            let yb = tgt.gather_rows(&sample_indices(tgt.rows(), cfg.batch_size, &mut tgt_rng));

            let eta = stepsize.step_sizes(&xb)?;
            let mut transported = xb.clone();
            for i in 0..xb.rows() {
                let step = eta.get(i, 0);
                let c = xb.cols();
                for (o, d) in
                    transported.data_mut()[i * c..(i + 1) * c].iter_mut().zip(ub.row(i))
                {
                    *o -= step * d;
                }
            }

            let tape = Tape::new();
            let staged = disc.net.stage(&tape, true);
            let p_real = staged.forward(tape.constant(yb))?;
            let p_fake = staged.forward(tape.constant(transported))?;
            let real_term = p_real.log().mean().neg();
            let fake_term = p_fake.affine(-1.0, 1.0).log().mean().neg();
            let loss = real_term.add(&fake_term)?;
            last_disc_loss = loss.scalar_value()?;
            if !last_disc_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "discriminator loss is not finite at iteration {t}"
                )));
            }
            tape.backward(loss)?;
            let grads = staged.take_grads();
            let mut params = disc.net.params_mut();
            adam_disc.step(&mut params, &grads, &disc_names, cfg.lr).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("{msg} at iteration {t}")),
                other => other,
            })?;
        }

        // Generator step: gradients flow into the step sizes only.
        let idx = sample_indices(src.rows(), cfg.batch_size, &mut src_rng);
        let xb = src.gather_rows(&idx);
        let ub = directions.gather_rows(&idx);

        let tape = Tape::new();
        let staged_gen = stepsize.net.stage(&tape, true);
        let staged_disc = disc.net.stage(&tape, false);
        let xv = tape.constant(xb);
        let uv = tape.constant(ub);
        let eta = staged_gen.forward(xv)?;
        let transported = xv.sub(&uv.scale_rows(&eta)?)?;
        let probs = staged_disc.forward(transported)?;
        let loss = probs.log().mean().neg();
        let gen_loss = loss.scalar_value()?;
        if !gen_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "generator loss is not finite at iteration {t}"
            )));
        }
        tape.backward(loss)?;
        let grads = staged_gen.take_grads();
        let mut params = stepsize.net.params_mut();
        adam_gen.step(&mut params, &grads, &gen_names, cfg.lr).map_err(|e| match e {
            Error::Numerical(msg) => Error::Numerical(format!("{msg} at iteration {t}")),
            other => other,
        })?;

        debug_assert!(gen_loss >= -floor && last_disc_loss >= -floor);
        history.gen_loss.push(gen_loss);
        history.disc_loss.push(last_disc_loss);
    }
    Ok((stepsize, disc, history))
}

/// Outcome of the two-stage fit.
pub struct FitResult {
    pub map: TransportMap,
    pub discriminator: Discriminator,
    pub dual_history: TrainHistory,
    pub gan_history: GanHistory,
}

/// Full pipeline: dual training for the direction, adversarial training for
/// the step size.
pub fn fit_w1ot(
    source: &Dataset,
    target: &Dataset,
    net_cfg: &NetworkConfig,
    dual_cfg: &crate::dual::DualTrainConfig,
    gan_cfg: &GanTrainConfig,
) -> Result<FitResult> {
    let (potential, dual_history) =
        crate::dual::train_potential(source, target, net_cfg, dual_cfg)?;
    let (stepsize, discriminator, gan_history) =
        train_stepsize(&potential, source, target, &net_cfg.hidden, gan_cfg)?;
    Ok(FitResult {
        map: TransportMap::new(potential, stepsize)?,
        discriminator,
        dual_history,
        gan_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipschitz::{OrthoMethod, OrthonormalLayer};
    use approx::assert_relative_eq;

    /// Step-size net that outputs (very nearly) the constant `c`.
    fn constant_eta(dim: usize, c: f64) -> StepSizeNet {
        // softplus(z) = c  =>  z = ln(e^c - 1); with zero weights the output
        // ignores the input entirely.
        let z = if c <= 0.0 { -50.0 } else { (c.exp_m1()).ln() };
        StepSizeNet::from_layer_parts(vec![(Tensor::zeros(1, dim), Tensor::scalar(z))]).unwrap()
    }

    /// Discriminator that outputs the constant `p` everywhere.
    fn constant_disc(dim: usize, p: f64) -> Discriminator {
        let logit = (p / (1.0 - p)).ln();
        Discriminator::from_layer_parts(vec![(Tensor::zeros(1, dim), Tensor::scalar(logit))])
            .unwrap()
    }

    /// Potential f(x) = x_0 (unit gradient (1, 0, ...)).
    fn coordinate_potential(dim: usize) -> PotentialNet {
        let mut raw = Tensor::zeros(1, dim);
        raw.set(0, 0, 1.0);
        let layer = OrthonormalLayer::from_parts(
            raw,
            Tensor::zeros(1, 1),
            OrthoMethod::Cayley,
            20,
            0.5,
        )
        .unwrap();
        PotentialNet::from_parts(vec![layer], 1).unwrap()
    }

    #[test]
    fn zero_eta_gives_identity_map() {
        let map = TransportMap::new(coordinate_potential(2), constant_eta(2, 0.0)).unwrap();
        let x = Tensor::from_rows(&[vec![0.3, -1.0], vec![2.0, 5.0]]).unwrap();
        let out = map.transport(&x).unwrap();
        assert!(out.sub(&x).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn constant_step_along_unit_gradient() {
        // f(x) = x_0, so T(x) = x - c * e_0.
        let c = 0.75;
        let map = TransportMap::new(coordinate_potential(2), constant_eta(2, c)).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.0]]).unwrap();
        let out = map.transport(&x).unwrap();
        for i in 0..2 {
            assert_relative_eq!(out.get(i, 0), x.get(i, 0) - c, epsilon = 1e-9);
            assert_relative_eq!(out.get(i, 1), x.get(i, 1), epsilon = 1e-12);
        }
    }

    #[test]
    fn displacement_norm_equals_eta() {
        let cfg = NetworkConfig { hidden: vec![8, 8], group_size: 4, ..NetworkConfig::default() };
        let potential = PotentialNet::new(3, &cfg, 11).unwrap();
        let stepsize = StepSizeNet::new(3, &[8, 8], 4).unwrap();
        let map = TransportMap::new(potential, stepsize).unwrap();
        let mut rng = crate::rng::seeded_rng(9, 2);
        let x = Tensor::uniform(32, 3, -2.0, 2.0, &mut rng);
        let eta = map.stepsize().step_sizes(&x).unwrap();
        let grad_norms = map.potential().input_grad(&x).unwrap().row_norms();
        let out = map.transport(&x).unwrap();
        for i in 0..32 {
            assert!(eta.get(i, 0) >= 0.0);
            if grad_norms.get(i, 0) >= DIRECTION_FLOOR {
                let disp: f64 = (0..3).map(|j| (out.get(i, j) - x.get(i, j)).powi(2)).sum::<f64>().sqrt();
                assert_relative_eq!(disp, eta.get(i, 0), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn generator_loss_hand_values() {
        let map = TransportMap::new(coordinate_potential(1), constant_eta(1, 0.0)).unwrap();
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();

        let half = constant_disc(1, 0.5);
        assert_relative_eq!(
            generator_loss(&half, &map, &x).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-9
        );

        let tenth = constant_disc(1, 0.1);
        assert_relative_eq!(
            generator_loss(&tenth, &map, &x).unwrap(),
            -(0.1f64.ln()),
            epsilon = 1e-9
        );

        // Near-perfect fooling: loss tends to zero.
        let fooled = constant_disc(1, 1.0 - 1e-12);
        assert!(generator_loss(&fooled, &map, &x).unwrap() <= 1e-9);
    }

    #[test]
    fn discriminator_loss_hand_values() {
        let map = TransportMap::new(coordinate_potential(1), constant_eta(1, 0.0)).unwrap();
        let x = Tensor::from_rows(&[vec![0.0]]).unwrap();
        let y = Tensor::from_rows(&[vec![1.0]]).unwrap();

        let half = constant_disc(1, 0.5);
        assert_relative_eq!(
            discriminator_loss(&half, &map, &x, &y).unwrap(),
            2.0 * std::f64::consts::LN_2,
            epsilon = 1e-9
        );

        // D(y) = 0.8 and D(T(x)) = D(0) = 0.3 via a 1-D logistic:
        // sigmoid(b) = 0.3, sigmoid(w + b) = 0.8.
        let b = (0.3f64 / 0.7).ln();
        let w = (0.8f64 / 0.2).ln() - b;
        let disc =
            Discriminator::from_layer_parts(vec![(Tensor::scalar(w), Tensor::scalar(b))]).unwrap();
        let expect = -(0.8f64.ln()) - (0.7f64.ln());
        assert_relative_eq!(
            discriminator_loss(&disc, &map, &x, &y).unwrap(),
            expect,
            epsilon = 1e-9
        );
        assert_relative_eq!(expect, 0.579818, epsilon = 1e-6);

        // Near-perfect discrimination: loss tends to zero.
        let sharp = Discriminator::from_layer_parts(vec![(
            Tensor::scalar(100.0),
            Tensor::scalar(-50.0),
        )])
        .unwrap();
        assert!(discriminator_loss(&sharp, &map, &x, &y).unwrap() <= 1e-9);
    }

    #[test]
    fn losses_are_nonnegative() {
        let cfg = NetworkConfig { hidden: vec![8, 8], group_size: 4, ..NetworkConfig::default() };
        let potential = PotentialNet::new(2, &cfg, 3).unwrap();
        let map =
            TransportMap::new(potential, StepSizeNet::new(2, &[8, 8], 1).unwrap()).unwrap();
        let disc = Discriminator::new(2, &[8, 8], 2).unwrap();
        let mut rng = crate::rng::seeded_rng(31, 4);
        for _ in 0..10 {
            let x = Tensor::uniform(16, 2, -2.0, 2.0, &mut rng);
            let y = Tensor::uniform(16, 2, -2.0, 2.0, &mut rng);
            assert!(generator_loss(&disc, &map, &x).unwrap() >= 0.0);
            assert!(discriminator_loss(&disc, &map, &x, &y).unwrap() >= 0.0);
        }
    }

    #[test]
    fn stepsize_outputs_are_nonnegative() {
        let net = StepSizeNet::new(4, &[16, 16], 7).unwrap();
        let mut rng = crate::rng::seeded_rng(12, 1);
        let x = Tensor::uniform(256, 4, -5.0, 5.0, &mut rng);
        let eta = net.step_sizes(&x).unwrap();
        assert!(eta.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn initial_steps_are_small() {
        let net = StepSizeNet::new(2, &[64, 64, 64, 64], 5).unwrap();
        let mut rng = crate::rng::seeded_rng(13, 1);
        let x = Tensor::uniform(64, 2, -1.0, 1.0, &mut rng);
        let mean = net.step_sizes(&x).unwrap().mean();
        // softplus(-2) is about 0.127; random weights move it a little.
        assert!((0.02..0.4).contains(&mean), "mean initial step {mean}");
    }

    #[test]
    fn potential_is_frozen_during_gan_training() {
        let (src, tgt) = crate::data::gen_bookshelf(64, 3).unwrap();
        let net_cfg =
            NetworkConfig { hidden: vec![8, 8], group_size: 4, ..NetworkConfig::default() };
        let dual_cfg = crate::dual::DualTrainConfig {
            iterations: 40,
            batch_size: 32,
            seed: 1,
            ..Default::default()
        };
        let (potential, _) =
            crate::dual::train_potential(&src, &tgt, &net_cfg, &dual_cfg).unwrap();
        let before: Vec<Tensor> = potential.params().into_iter().cloned().collect();
        let gan_cfg = GanTrainConfig { iterations: 50, batch_size: 32, seed: 2, ..Default::default() };
        let (_, _, history) =
            train_stepsize(&potential, &src, &tgt, &[8, 8], &gan_cfg).unwrap();
        let after: Vec<Tensor> = potential.params().into_iter().cloned().collect();
        assert_eq!(before, after);
        assert_eq!(history.gen_loss.len(), 50);
        assert!(history.gen_loss.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(history.disc_loss.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn gan_training_is_deterministic() {
        let (src, tgt) = crate::data::gen_bookshelf(48, 5).unwrap();
        let net_cfg =
            NetworkConfig { hidden: vec![8, 8], group_size: 4, ..NetworkConfig::default() };
        let dual_cfg = crate::dual::DualTrainConfig {
            iterations: 20,
            batch_size: 32,
            seed: 4,
            ..Default::default()
        };
        let (potential, _) =
            crate::dual::train_potential(&src, &tgt, &net_cfg, &dual_cfg).unwrap();
        let gan_cfg = GanTrainConfig { iterations: 30, batch_size: 32, seed: 6, ..Default::default() };
        let run = || {
            let (eta, _, h) = train_stepsize(&potential, &src, &tgt, &[8, 8], &gan_cfg).unwrap();
            (
                eta.layer_parts().into_iter().map(|(w, b)| (w.clone(), b.clone())).collect::<Vec<_>>(),
                h.gen_loss,
                h.disc_loss,
            )
        };
        let a = run();
        let b = run();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn config_validation() {
        assert!(GanTrainConfig::default().validate().is_ok());
        assert!(GanTrainConfig { disc_steps_per_gen_step: 0, ..Default::default() }
            .validate()
            .is_err());
        assert!(GanTrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn gan_history_csv_layout() {
        let h = GanHistory { gen_loss: vec![0.5, 0.4], disc_loss: vec![1.2, 1.1] };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gan.csv");
        h.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "iteration,gen_loss,disc_loss\n0,0.5,1.2\n1,0.4,1.1\n");
    }
}
