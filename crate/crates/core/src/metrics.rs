//! Evaluation metrics: multi-scale RBF MMD, feature-mean agreement, the
//! pairwise monotonicity audit, and gradient-norm statistics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::gan::TransportMap;
use crate::lipschitz::PotentialNet;
use crate::rng::{seeded_rng, stream};

/// Default RBF length scales (kernel `exp(-gamma ||a-b||^2)` per `gamma`).
pub const DEFAULT_MMD_SCALES: [f64; 6] = [2.0, 1.0, 0.5, 0.1, 0.01, 0.005];

/// Cosine threshold for the monotonicity audit: a pair is a violation when
/// the unit displacement directions are this anti-aligned or worse.
pub const DEFAULT_COS_TOL: f64 = -0.99;

/// Flat per-run metric record. Model-dependent fields (monotonicity,
/// gradient norms) are absent when no model was audited.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mmd: f64,
    pub r2_means: f64,
    pub l2_means: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotonicity_violation_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_norm_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_norm_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_norm_max: Option<f64>,
    pub n_pred: usize,
    pub n_target: usize,
    pub mmd_scales: Vec<f64>,
    pub seed: u64,
}

impl MetricsReport {
    /// Data-only metrics between a prediction and a target sample.
    pub fn data_metrics(pred: &Tensor, target: &Tensor, scales: &[f64], seed: u64) -> Result<Self> {
        Ok(Self {
            mmd: mmd_rbf(pred, target, scales)?,
            r2_means: r2_feature_means(pred, target)?,
            l2_means: l2_feature_means(pred, target)?,
            monotonicity_violation_rate: None,
            grad_norm_mean: None,
            grad_norm_min: None,
            grad_norm_max: None,
            n_pred: pred.rows(),
            n_target: target.rows(),
            mmd_scales: scales.to_vec(),
            seed,
        })
    }
}

/// Biased (V-statistic) squared MMD under an RBF kernel, averaged over the
/// given scales and clamped at zero. The V-statistic includes diagonal terms,
/// so identical samples give exactly zero.
pub fn mmd_rbf(x: &Tensor, y: &Tensor, scales: &[f64]) -> Result<f64> {
    if x.cols() != y.cols() {
        return Err(Error::Shape(format!(
            "mmd: {}x{} vs {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    if x.rows() < 2 || y.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "mmd needs at least 2 rows per side, got {} and {}",
            x.rows(),
            y.rows()
        )));
    }
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Config("mmd scales must be positive and non-empty".into()));
    }

    // One pass over pairwise squared distances per block; per-scale kernel
    // sums accumulated in fixed order (parallel over rows, sequential merge).
    let block_sums = |a: &Tensor, b: &Tensor| -> Vec<f64> {
        let per_row: Vec<Vec<f64>> = (0..a.rows())
            .into_par_iter()
            .map(|i| {
                let mut sums = vec![0.0; scales.len()];
                for j in 0..b.rows() {
                    let d2 = a.row_sq_dist(i, b, j);
                    for (s, &gamma) in sums.iter_mut().zip(scales) {
                        *s += (-gamma * d2).exp();
                    }
                }
                sums
            })
            .collect();
        let mut total = vec![0.0; scales.len()];
        for row in per_row {
            for (t, v) in total.iter_mut().zip(row) {
                *t += v;
            }
        }
        total
    };

    let xx = block_sums(x, x);
    let yy = block_sums(y, y);
    let xy = block_sums(x, y);
    let (nx, ny) = (x.rows() as f64, y.rows() as f64);
    let mut acc = 0.0;
    for k in 0..scales.len() {
        acc += xx[k] / (nx * nx) + yy[k] / (ny * ny) - 2.0 * xy[k] / (nx * ny);
    }
    Ok((acc / scales.len() as f64).max(0.0))
}

/// Squared Pearson correlation between the column-mean vectors.
pub fn r2_feature_means(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.cols() != y.cols() {
        return Err(Error::Shape(format!(
            "r2_feature_means: {} vs {} features",
            x.cols(),
            y.cols()
        )));
    }
    if x.cols() < 2 {
        return Err(Error::InsufficientData(
            "r2_feature_means needs at least 2 features".into(),
        ));
    }
    let mx = x.col_means();
    let my = y.col_means();
    let d = mx.len() as f64;
    let mean_x: f64 = mx.iter().sum::<f64>() / d;
    let mean_y: f64 = my.iter().sum::<f64>() / d;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in mx.iter().zip(&my) {
        let da = a - mean_x;
        let db = b - mean_y;
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Numerical(
            "r2_feature_means undefined: a mean vector is constant".into(),
        ));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r * r)
}

/// Euclidean distance between the column-mean vectors.
pub fn l2_feature_means(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.cols() != y.cols() {
        return Err(Error::Shape(format!(
            "l2_feature_means: {} vs {} features",
            x.cols(),
            y.cols()
        )));
    }
    let mx = x.col_means();
    let my = y.col_means();
    Ok(mx
        .iter()
        .zip(&my)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Fraction of sampled pairs whose displacement directions are antipodal:
/// with unit vectors `u = (x1-x2)/||.||` and `v = (T(x1)-T(x2))/||.||`, a
/// violation is `cos(u, v) <= cos_tol`. Degenerate pairs (coincident inputs
/// or outputs) are skipped; rows are drawn without replacement from a batch
/// of `min(n, 2 * n_pairs)` rows to bound the transport cost.
pub fn monotonicity_violation_rate_fn<F>(
    transport: F,
    x: &Tensor,
    n_pairs: usize,
    seed: u64,
    cos_tol: f64,
) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if n_pairs == 0 {
        return Err(Error::Config("monotonicity audit needs at least one pair".into()));
    }
    if x.rows() < 2 {
        return Err(Error::InsufficientData(
            "monotonicity audit needs at least 2 rows".into(),
        ));
    }
    let mut rng = seeded_rng(seed, stream::MONOTONICITY_PAIRS);
    let batch = x.rows().min(2 * n_pairs);
    let rows = {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..x.rows()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(batch);
        idx
    };
    let xs = x.gather_rows(&rows);
    let ts = transport(&xs)?;
    if ts.shape() != xs.shape() {
        return Err(Error::Shape(format!(
            "transport changed the shape: {}x{} -> {}x{}",
            xs.rows(),
            xs.cols(),
            ts.rows(),
            ts.cols()
        )));
    }

    let mut violations = 0usize;
    let mut evaluated = 0usize;
    for _ in 0..n_pairs {
        let i = rng.random_range(0..batch);
        let mut j = rng.random_range(0..batch);
        if i == j {
            j = (j + 1) % batch;
        }
        let dx = xs.row_sq_dist(i, &xs, j).sqrt();
        let dt = ts.row_sq_dist(i, &ts, j).sqrt();
        if dx < 1e-9 || dt < 1e-9 {
            continue;
        }
        let dot: f64 = xs
            .row(i)
            .iter()
            .zip(xs.row(j))
            .zip(ts.row(i).iter().zip(ts.row(j)))
            .map(|((xa, xb), (ta, tb))| (xa - xb) * (ta - tb))
            .sum();
        let cos = dot / (dx * dt);
        evaluated += 1;
        if cos <= cos_tol {
            violations += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::InsufficientData(
            "all sampled pairs were degenerate".into(),
        ));
    }
    Ok(violations as f64 / evaluated as f64)
}

/// Monotonicity audit of a trained transport map.
pub fn monotonicity_violation_rate(
    map: &TransportMap,
    x: &Tensor,
    n_pairs: usize,
    seed: u64,
    cos_tol: f64,
) -> Result<f64> {
    monotonicity_violation_rate_fn(|b| map.transport(b), x, n_pairs, seed, cos_tol)
}

/// Mean/min/max of `||grad f||` over the rows of `x`.
pub fn gradient_norm_stats(f: &PotentialNet, x: &Tensor) -> Result<(f64, f64, f64)> {
    if x.rows() == 0 {
        return Err(Error::Usage("gradient_norm_stats needs a non-empty sample".into()));
    }
    let norms = f.input_grad(x)?.row_norms();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in norms.data() {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    Ok((sum / norms.rows() as f64, min, max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::rng::seeded_rng;
    use proptest::prelude::*;

    #[test]
    fn mmd_of_identical_samples_is_zero() {
        let mut rng = seeded_rng(1, 0);
        let x = Tensor::uniform(32, 3, -1.0, 1.0, &mut rng);
        assert_eq!(mmd_rbf(&x, &x, &DEFAULT_MMD_SCALES).unwrap(), 0.0);
    }

    #[test]
    fn mmd_closed_form_single_scale() {
        // Two copies of 0 vs two copies of 1 in 1-D with gamma = 1:
        // mean k_xx = 1, mean k_yy = 1, mean k_xy = e^-1.
        let x = Tensor::from_vec(2, 1, vec![0.0, 0.0]).unwrap();
        let y = Tensor::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let got = mmd_rbf(&x, &y, &[1.0]).unwrap();
        assert_relative_eq!(got, 2.0 - 2.0 * (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(got, 1.264241, epsilon = 1e-6);
    }

    #[test]
    fn mmd_of_far_clouds_saturates_at_two() {
        let mut rng = seeded_rng(2, 0);
        let x = Tensor::uniform(16, 2, 0.0, 1e-3, &mut rng);
        let y = Tensor::uniform(16, 2, 1000.0, 1000.001, &mut rng);
        let got = mmd_rbf(&x, &y, &DEFAULT_MMD_SCALES).unwrap();
        assert_relative_eq!(got, 2.0, max_relative = 1e-3);
    }

    #[test]
    fn mmd_rejects_bad_inputs() {
        let x = Tensor::zeros(2, 2);
        let y = Tensor::zeros(2, 3);
        assert!(matches!(mmd_rbf(&x, &y, &[1.0]), Err(Error::Shape(_))));
        let one = Tensor::zeros(1, 2);
        assert!(matches!(
            mmd_rbf(&one, &Tensor::zeros(4, 2), &[1.0]),
            Err(Error::InsufficientData(_))
        ));
        assert!(mmd_rbf(&Tensor::zeros(2, 2), &Tensor::zeros(2, 2), &[]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn mmd_is_symmetric_and_nonnegative(seed in 0u64..1000) {
            let mut rng = seeded_rng(seed, 1);
            let x = Tensor::uniform(8, 2, -1.0, 1.0, &mut rng);
            let y = Tensor::uniform(12, 2, -0.5, 1.5, &mut rng);
            let a = mmd_rbf(&x, &y, &DEFAULT_MMD_SCALES).unwrap();
            let b = mmd_rbf(&y, &x, &DEFAULT_MMD_SCALES).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!(a >= 0.0);
        }
    }

    #[test]
    fn r2_examples() {
        let mut rng = seeded_rng(3, 0);
        let x = Tensor::uniform(50, 3, 0.0, 1.0, &mut rng);
        assert_relative_eq!(r2_feature_means(&x, &x).unwrap(), 1.0, epsilon = 1e-12);

        // Affine map of the means: r^2 stays 1.
        let y = x.map(|v| 2.0 * v + 3.0);
        assert_relative_eq!(r2_feature_means(&x, &y).unwrap(), 1.0, epsilon = 1e-9);

        // Hand Pearson: means (1,2,3) vs (1,3,2) gives r^2 = 0.25.
        let a = Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0, 3.0, 2.0]]).unwrap();
        // Duplicate rows so the mean vectors are those exact triples.
        let a2 = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_relative_eq!(r2_feature_means(&a, &b).unwrap(), 0.25, epsilon = 1e-12);
        assert_relative_eq!(r2_feature_means(&a2, &b).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn r2_constant_means_is_an_error() {
        let x = Tensor::filled(4, 3, 2.0);
        let y = Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(r2_feature_means(&x, &y), Err(Error::Numerical(_))));
    }

    #[test]
    fn l2_examples() {
        let x = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let y = Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(l2_feature_means(&x, &x).unwrap(), 0.0);
        assert_eq!(l2_feature_means(&x, &y).unwrap(), 5.0);
        // Translation by v moves the mean distance by exactly ||v||.
        let mut rng = seeded_rng(4, 0);
        let a = Tensor::uniform(20, 2, -1.0, 1.0, &mut rng);
        let b = a.map(|v| v + 1.0); // translation by (1, 1)
        assert_relative_eq!(l2_feature_means(&a, &b).unwrap(), 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn monotonicity_identity_and_translation_are_clean() {
        let mut rng = seeded_rng(5, 0);
        let x = Tensor::uniform(64, 2, -1.0, 1.0, &mut rng);
        let rate =
            monotonicity_violation_rate_fn(|b| Ok(b.clone()), &x, 500, 3, DEFAULT_COS_TOL)
                .unwrap();
        assert_eq!(rate, 0.0);
        let rate = monotonicity_violation_rate_fn(
            |b| Ok(b.map(|v| v + 5.0)),
            &x,
            500,
            3,
            DEFAULT_COS_TOL,
        )
        .unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn monotonicity_swap_is_total_violation() {
        // T swaps 0 and 1 on the 1-D two-point set.
        let x = Tensor::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let rate = monotonicity_violation_rate_fn(
            |b| Ok(b.map(|v| 1.0 - v)),
            &x,
            200,
            1,
            DEFAULT_COS_TOL,
        )
        .unwrap();
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn monotonicity_degenerate_pairs_error() {
        let x = Tensor::zeros(8, 2);
        let err = monotonicity_violation_rate_fn(
            |b| Ok(b.clone()),
            &x,
            100,
            1,
            DEFAULT_COS_TOL,
        );
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn gradient_stats_of_linear_potential() {
        use crate::lipschitz::{OrthoMethod, OrthonormalLayer, PotentialNet};
        let mut raw = Tensor::zeros(1, 3);
        raw.set(0, 0, 1.0);
        let layer = OrthonormalLayer::from_parts(
            raw,
            Tensor::zeros(1, 1),
            OrthoMethod::Cayley,
            20,
            0.5,
        )
        .unwrap();
        let net = PotentialNet::from_parts(vec![layer], 1).unwrap();
        let mut rng = seeded_rng(6, 0);
        let x = Tensor::uniform(32, 3, -1.0, 1.0, &mut rng);
        let (mean, min, max) = gradient_norm_stats(&net, &x).unwrap();
        assert_relative_eq!(mean, 1.0, epsilon = 1e-9);
        assert_relative_eq!(min, 1.0, epsilon = 1e-9);
        assert_relative_eq!(max, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn gradient_stats_bounded_for_untrained_net() {
        use crate::lipschitz::{NetworkConfig, PotentialNet};
        let cfg = NetworkConfig { hidden: vec![16, 16], group_size: 4, ..NetworkConfig::default() };
        let net = PotentialNet::new(2, &cfg, 9).unwrap();
        let mut rng = seeded_rng(7, 0);
        let x = Tensor::uniform(128, 2, -2.0, 2.0, &mut rng);
        let (_, _, max) = gradient_norm_stats(&net, &x).unwrap();
        assert!(max <= 1.0 + 1e-3, "max {max}");
    }

    #[test]
    fn metrics_are_seed_deterministic() {
        let mut rng = seeded_rng(8, 0);
        let x = Tensor::uniform(64, 2, -1.0, 1.0, &mut rng);
        let noisy = |b: &Tensor| Ok(b.map(|v| v * 0.9 + 0.1));
        let a = monotonicity_violation_rate_fn(noisy, &x, 300, 11, DEFAULT_COS_TOL).unwrap();
        let b = monotonicity_violation_rate_fn(noisy, &x, 300, 11, DEFAULT_COS_TOL).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            mmd_rbf(&x, &x.map(|v| v + 0.3), &DEFAULT_MMD_SCALES).unwrap(),
            mmd_rbf(&x, &x.map(|v| v + 0.3), &DEFAULT_MMD_SCALES).unwrap()
        );
    }

    #[test]
    fn report_serializes_flat() {
        let mut rng = seeded_rng(9, 0);
        let x = Tensor::uniform(16, 2, -1.0, 1.0, &mut rng);
        let y = Tensor::uniform(16, 2, -0.5, 1.5, &mut rng);
        let report = MetricsReport::data_metrics(&x, &y, &DEFAULT_MMD_SCALES, 7).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        let obj = json.as_object().unwrap();
        for key in ["mmd", "r2_means", "l2_means", "n_pred", "n_target", "mmd_scales", "seed"] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        // Model-dependent fields absent without a model.
        assert!(!obj.contains_key("monotonicity_violation_rate"));
        assert!(obj.values().all(|v| !v.is_object()), "report must stay flat");
    }
}
