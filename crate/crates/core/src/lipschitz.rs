//! 1-Lipschitz feed-forward networks: orthonormal linear layers composed
//! with GroupSort activations.
//!
//! Each layer's effective weight is an orthonormalization of its raw weight,
//! recomputed (inside the tape, so it is differentiable) on every forward
//! pass. Orthonormal weights have spectral norm 1 and GroupSort is a
//! permutation, so the whole network is 1-Lipschitz by construction and its
//! input gradients never exceed unit norm.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, stream};

/// How a layer's raw weight is projected onto the orthonormal matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrthoMethod {
    /// Iterative Newton-Schulz style projection; high precision, more work.
    Bjorck,
    /// Cayley transform of the skew-symmetric part; one solve, fast.
    Cayley,
}

/// Architecture knobs shared by the networks in this crate.
#[derive(Clone, Debug)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub group_size: usize,
    pub method: OrthoMethod,
    pub bjorck_iters: usize,
    pub bjorck_beta: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64, 64],
            group_size: 4,
            method: OrthoMethod::Cayley,
            bjorck_iters: 20,
            bjorck_beta: 0.5,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.group_size == 0 {
            return Err(Error::Config("group size must be positive".into()));
        }
        for &w in &self.hidden {
            if w % self.group_size != 0 {
                return Err(Error::Config(format!(
                    "hidden width {} is not divisible by group size {}",
                    w, self.group_size
                )));
            }
            if w > 1 && w == self.group_size {
                return Err(Error::Config(format!(
                    "group size {} equals the layer width; GroupSort would degenerate \
                     into an identity-like activation, pick a smaller group",
                    self.group_size
                )));
            }
        }
        if self.bjorck_iters == 0 {
            return Err(Error::Config("bjorck_iters must be at least 1".into()));
        }
        if !(self.bjorck_beta > 0.0 && self.bjorck_beta.is_finite()) {
            return Err(Error::Config("bjorck_beta must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Linear layer whose effective weight is orthonormalized on every forward.
#[derive(Clone, Debug)]
pub struct OrthonormalLayer {
    raw_weight: Tensor, // d_out x d_in
    bias: Tensor,       // 1 x d_out
    method: OrthoMethod,
    bjorck_iters: usize,
    bjorck_beta: f64,
}

impl OrthonormalLayer {
    pub fn init<R: Rng>(
        d_in: usize,
        d_out: usize,
        method: OrthoMethod,
        bjorck_iters: usize,
        bjorck_beta: f64,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Self {
            raw_weight: Tensor::uniform(d_out, d_in, -bound, bound, rng),
            bias: Tensor::zeros(1, d_out),
            method,
            bjorck_iters,
            bjorck_beta,
        }
    }

    pub fn from_parts(
        raw_weight: Tensor,
        bias: Tensor,
        method: OrthoMethod,
        bjorck_iters: usize,
        bjorck_beta: f64,
    ) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != raw_weight.rows() {
            return Err(Error::Shape(format!(
                "layer bias {}x{} does not match weight {}x{}",
                bias.rows(),
                bias.cols(),
                raw_weight.rows(),
                raw_weight.cols()
            )));
        }
        Ok(Self { raw_weight, bias, method, bjorck_iters, bjorck_beta })
    }

    pub fn d_in(&self) -> usize {
        self.raw_weight.cols()
    }

    pub fn d_out(&self) -> usize {
        self.raw_weight.rows()
    }

    pub fn raw_weight(&self) -> &Tensor {
        &self.raw_weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn method(&self) -> OrthoMethod {
        self.method
    }

    fn orthonormalize<'t>(&self, tape: &'t Tape, raw: Var<'t>) -> Result<Var<'t>> {
        match self.method {
            OrthoMethod::Bjorck => {
                bjorck_orthonormalize(tape, raw, self.bjorck_iters, self.bjorck_beta)
            }
            OrthoMethod::Cayley => cayley_orthonormalize(tape, raw),
        }
    }
}

/// 20-step power iteration estimate of the largest singular value.
/// Used only to pre-scale raw weights into the Newton-Schulz contraction
/// basin; the estimate is treated as a constant by the tape.
fn spectral_norm_estimate(m: &Tensor, iters: usize) -> f64 {
    let (_, c) = m.shape();
    let mt = m.transpose();
    let mut v = Tensor::filled(c, 1, 1.0 / (c as f64).sqrt());
    for _ in 0..iters {
        let u = m.matmul(&v).expect("shape by construction");
        let un = u.frobenius_norm();
        if un == 0.0 {
            return 0.0;
        }
        let w = mt.matmul(&u.scale(1.0 / un)).expect("shape by construction");
        let wn = w.frobenius_norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w.scale(1.0 / wn);
    }
    m.matmul(&v).expect("shape by construction").frobenius_norm()
}

/// Iterates `W <- W (I + beta (I - W^T W))` after pre-scaling the input below
/// unit spectral norm. Converges to the nearest orthonormal (or, for
/// rectangular inputs, semi-orthogonal) matrix; the whole computation is a
/// composition of matrix products, hence differentiable.
pub fn bjorck_orthonormalize<'t>(
    tape: &'t Tape,
    raw: Var<'t>,
    iters: usize,
    beta: f64,
) -> Result<Var<'t>> {
    let sigma = spectral_norm_estimate(&raw.value(), 20);
    if sigma <= 0.0 {
        return Err(Error::Numerical(format!(
            "bjorck pre-scaling failed: spectral estimate {sigma}"
        )));
    }
    let w = raw.scale(1.0 / (sigma + 1e-6));
    bjorck_iterate(tape, w, iters, beta)
}

/// The raw iteration, without pre-scaling. Diverges unless the input's
/// spectral norm is below sqrt(3).
pub fn bjorck_iterate<'t>(
    _tape: &'t Tape,
    mut w: Var<'t>,
    iters: usize,
    beta: f64,
) -> Result<Var<'t>> {
    let (r, c) = w.shape();
    for _ in 0..iters {
        // W (I + b(I - W^T W)) = (1+b) W - b (W W^T) W; take the Gram matrix
        // on the smaller side.
        let correction = if r <= c {
            w.matmul(&w.t())?.matmul(&w)?
        } else {
            w.matmul(&w.t().matmul(&w)?)?
        };
        w = w.scale(1.0 + beta).sub(&correction.scale(beta))?;
    }
    Ok(w)
}

/// Cayley transform of the skew-symmetric part of the (zero-padded square
/// embedding of the) raw weight: `Q = (I - A)^-1 (I + A)` with
/// `A = (M - M^T)/2`. Rectangular weights return the top-left block of `Q`,
/// which is a row (or column) slice of an orthogonal matrix and therefore has
/// spectral norm at most 1.
pub fn cayley_orthonormalize<'t>(tape: &'t Tape, raw: Var<'t>) -> Result<Var<'t>> {
    let (r, c) = raw.shape();
    if r == c {
        cayley_square(tape, raw)
    } else if r < c {
        cayley_wide(tape, raw)
    } else {
        // Tall case: Cayley commutes with transposition up to a sign of the
        // skew part, so the top-left block equals the wide case of M^T,
        // transposed.
        Ok(cayley_wide_or_square(tape, raw.t())?.t())
    }
}

fn cayley_wide_or_square<'t>(tape: &'t Tape, m: Var<'t>) -> Result<Var<'t>> {
    let (r, c) = m.shape();
    if r == c {
        cayley_square(tape, m)
    } else {
        cayley_wide(tape, m)
    }
}

fn cayley_square<'t>(tape: &'t Tape, m: Var<'t>) -> Result<Var<'t>> {
    let n = m.shape().0;
    let eye = tape.constant(Tensor::identity(n));
    let skew = m.sub(&m.t())?.scale(0.5);
    let inv = eye.sub(&skew)?.inverse()?;
    inv.matmul(&eye.add(&skew)?)
}

/// Wide case (`r < c`) evaluated without forming the `c x c` embedding.
///
/// With `M = [M1 | M2]` (`M1` square), the zero-padded skew matrix is
/// `A = [[A11, B], [-B^T, 0]]` where `A11 = (M1 - M1^T)/2` and `B = M2/2`.
/// Block elimination of `(I - A)^-1 (I + A)` gives the top rows directly:
/// `[S^-1 (I + A11 - B B^T) | 2 S^-1 B]` with the Schur complement
/// `S = I - A11 + B B^T`. Only `r x r` solves and `r x c` products remain,
/// which keeps wide input layers (for example 64 x 1000) cheap.
fn cayley_wide<'t>(tape: &'t Tape, m: Var<'t>) -> Result<Var<'t>> {
    let (r, c) = m.shape();
    debug_assert!(r < c);
    let m1 = m.slice_cols(0, r)?;
    let m2 = m.slice_cols(r, c)?;
    let a11 = m1.sub(&m1.t())?.scale(0.5);
    let bbt = m2.matmul(&m2.t())?.scale(0.25);
    let eye = tape.constant(Tensor::identity(r));
    let schur = eye.sub(&a11)?.add(&bbt)?;
    let schur_inv = schur.inverse()?;
    let left = schur_inv.matmul(&eye.add(&a11)?.sub(&bbt)?)?;
    let right = schur_inv.matmul(&m2)?;
    left.concat_cols(&right)
}

/// A [`PotentialNet`] staged onto a tape: raw parameters as leaves plus the
/// orthonormalized weights, ready to run forward passes.
pub struct StagedPotential<'t> {
    raw: Vec<Var<'t>>,
    bias: Vec<Var<'t>>,
    effective: Vec<Var<'t>>,
    group_size: usize,
}

impl<'t> StagedPotential<'t> {
    /// `h W^T + b` for layer `idx`.
    pub fn layer_forward(&self, idx: usize, h: Var<'t>) -> Result<Var<'t>> {
        h.matmul(&self.effective[idx].t())?.add_bias(&self.bias[idx])
    }

    /// Full forward pass: GroupSort between layers, linear final layer.
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        let mut h = x;
        let last = self.effective.len() - 1;
        for idx in 0..=last {
            h = self.layer_forward(idx, h)?;
            if idx < last {
                h = h.group_sort(self.group_size)?;
            }
        }
        Ok(h)
    }

    /// Orthonormalized weight values, one per layer.
    pub fn effective_weights(&self) -> Vec<Tensor> {
        self.effective.iter().map(Var::value).collect()
    }

    /// Parameter gradients in [`PotentialNet::params`] order. Call after
    /// `tape.backward`.
    pub fn take_grads(&self) -> Result<Vec<Tensor>> {
        let mut grads = Vec::with_capacity(self.raw.len() * 2);
        for (w, b) in self.raw.iter().zip(&self.bias) {
            let (wr, wc) = w.shape();
            grads.push(w.take_grad().unwrap_or_else(|| Tensor::zeros(wr, wc)));
            let (br, bc) = b.shape();
            grads.push(b.take_grad().unwrap_or_else(|| Tensor::zeros(br, bc)));
        }
        Ok(grads)
    }
}

/// 1-Lipschitz GroupSort network mapping `R^d -> R`.
#[derive(Clone, Debug)]
pub struct PotentialNet {
    layers: Vec<OrthonormalLayer>,
    group_size: usize,
}

impl PotentialNet {
    pub fn new(input_dim: usize, cfg: &NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let mut rng = seeded_rng(seed, stream::NET_INIT);
        let mut layers = Vec::with_capacity(cfg.hidden.len() + 1);
        let mut d_in = input_dim;
        for &width in &cfg.hidden {
            layers.push(OrthonormalLayer::init(
                d_in,
                width,
                cfg.method,
                cfg.bjorck_iters,
                cfg.bjorck_beta,
                &mut rng,
            ));
            d_in = width;
        }
        layers.push(OrthonormalLayer::init(
            d_in,
            1,
            cfg.method,
            cfg.bjorck_iters,
            cfg.bjorck_beta,
            &mut rng,
        ));
        Ok(Self { layers, group_size: cfg.group_size })
    }

    pub fn from_parts(layers: Vec<OrthonormalLayer>, group_size: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("potential needs at least one layer".into()));
        }
        if group_size == 0 {
            return Err(Error::Config("group size must be positive".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].d_out() != pair[1].d_in() {
                return Err(Error::Shape(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].d_out(),
                    pair[1].d_in()
                )));
            }
        }
        let last = layers.last().expect("non-empty");
        if last.d_out() != 1 {
            return Err(Error::Shape(format!(
                "final layer must output 1 value, got {}",
                last.d_out()
            )));
        }
        for layer in &layers[..layers.len() - 1] {
            let w = layer.d_out();
            if w % group_size != 0 {
                return Err(Error::Config(format!(
                    "hidden width {} is not divisible by group size {}",
                    w, group_size
                )));
            }
        }
        Ok(Self { layers, group_size })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn layers(&self) -> &[OrthonormalLayer] {
        &self.layers
    }

    /// Stages the network onto a tape. With `trainable` the raw weights and
    /// biases become gradient leaves; otherwise they are constants and
    /// backward passes skip the whole orthonormalization subgraph.
    pub fn stage<'t>(&self, tape: &'t Tape, trainable: bool) -> Result<StagedPotential<'t>> {
        let mut raw = Vec::with_capacity(self.layers.len());
        let mut bias = Vec::with_capacity(self.layers.len());
        let mut effective = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let w = tape.leaf(layer.raw_weight.clone(), trainable);
            let b = tape.leaf(layer.bias.clone(), trainable);
            effective.push(layer.orthonormalize(tape, w)?);
            raw.push(w);
            bias.push(b);
        }
        Ok(StagedPotential { raw, bias, effective, group_size: self.group_size })
    }

    /// Forward pass returning plain values (one scalar per input row).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let tape = Tape::new();
        let staged = self.stage(&tape, false)?;
        Ok(staged.forward(tape.constant(x.clone()))?.value())
    }

    /// Per-row gradient of the scalar output with respect to the input row.
    /// Parameters receive no adjoints.
    pub fn input_grad(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let tape = Tape::new();
        let staged = self.stage(&tape, false)?;
        let xv = tape.leaf(x.clone(), true);
        let out = staged.forward(xv)?;
        tape.backward(out.sum())?;
        Ok(xv
            .take_grad()
            .unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols())))
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

    /// Parameter tensors in a fixed order: weight then bias per layer.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.raw_weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.raw_weight, &mut l.bias])
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")])
            .collect()
    }

    /// Per-layer orthonormality defect of the effective weights:
    /// `||W W^T - I||_F` for wide layers, `||W^T W - I||_F` for tall ones.
    pub fn orthonormality_defects(&self) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let staged = self.stage(&tape, false)?;
        Ok(staged
            .effective_weights()
            .iter()
            .map(orthonormality_defect)
            .collect())
    }

    /// Max sampled ratio `|f(x) - f(y)| / ||x - y||`.
    pub fn lipschitz_audit(&self, domain: &DomainBox, n_pairs: usize, seed: u64) -> Result<f64> {
        lipschitz_ratio_max(|x| self.forward(x), domain, n_pairs, seed)
    }
}

/// Orthonormality defect of a single effective weight matrix.
pub fn orthonormality_defect(w: &Tensor) -> f64 {
    let (r, c) = w.shape();
    let gram = if r <= c {
        w.matmul(&w.transpose()).expect("shape by construction")
    } else {
        w.transpose().matmul(w).expect("shape by construction")
    };
    let n = gram.rows();
    gram.sub(&Tensor::identity(n))
        .expect("same shape")
        .frobenius_norm()
}

/// Axis-aligned sampling box.
#[derive(Clone, Debug)]
pub struct DomainBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Shape(format!(
                "domain bounds disagree: {} vs {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::Config("domain box has lo > hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    /// Per-column min/max of a data matrix.
    pub fn from_data(data: &Tensor) -> Self {
        let d = data.cols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in 0..data.rows() {
            for (j, &v) in data.row(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn sample_batch<R: Rng>(&self, n: usize, rng: &mut R) -> Tensor {
        let d = self.dim();
        let mut out = Tensor::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                let (l, h) = (self.lo[j], self.hi[j]);
                let v = if h > l { rng.random_range(l..h) } else { l };
                out.set(i, j, v);
            }
        }
        out
    }
}

/// Max over sampled pairs of `|f(x) - f(y)| / ||x - y||`; pairs closer than
/// 1e-9 are skipped. `f` maps an `m x d` batch to `m x 1` values.
pub fn lipschitz_ratio_max<F>(
    f: F,
    domain: &DomainBox,
    n_pairs: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if n_pairs == 0 {
        return Err(Error::Config("lipschitz audit needs at least one pair".into()));
    }
    let mut rng = seeded_rng(seed, stream::AUDIT_PAIRS);
    let xs = domain.sample_batch(n_pairs, &mut rng);
    let ys = domain.sample_batch(n_pairs, &mut rng);
    let fx = f(&xs)?;
    let fy = f(&ys)?;
    if fx.shape() != (n_pairs, 1) || fy.shape() != (n_pairs, 1) {
        return Err(Error::Shape(format!(
            "audited function must return {n_pairs}x1 values, got {}x{}",
            fx.shape().0,
            fx.shape().1
        )));
    }
    let mut max_ratio = 0.0f64;
    for i in 0..n_pairs {
        let dist = xs.row_sq_dist(i, &ys, i).sqrt();
        if dist < 1e-9 {
            continue;
        }
        let ratio = (fx.get(i, 0) - fy.get(i, 0)).abs() / dist;
        max_ratio = max_ratio.max(ratio);
    }
    Ok(max_ratio)
}
