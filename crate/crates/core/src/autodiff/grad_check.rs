//! Central-difference gradient verification.

use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares the tape gradient of a scalar-valued function against central
/// finite differences, returning the worst relative error over coordinates:
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`.
///
/// `build` constructs the scalar output from an input var; it is invoked on a
/// fresh tape for the analytic pass and twice per coordinate for the
/// differences. `eps` is clamped into `[1e-7, 1e-3]`.
pub fn grad_check<F>(build: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let eps = eps.clamp(1e-7, 1e-3);

    let tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let out = build(&tape, xv)?;
    if out.shape() != (1, 1) {
        return Err(Error::Usage(format!(
            "grad_check requires a scalar function, got {}x{}",
            out.shape().0,
            out.shape().1
        )));
    }
    tape.backward(out)?;
    let analytic = xv
        .grad()
        .unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));

    let eval = |point: &Tensor| -> Result<f64> {
        let tape = Tape::new();
        let v = tape.leaf(point.clone(), false);
        build(&tape, v)?.scalar_value()
    };

    let mut max_rel = 0.0f64;
    for idx in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[idx] += eps;
        let mut minus = x.clone();
        minus.data_mut()[idx] -= eps;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
        let a = analytic.data()[idx];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    /// Pins the higher-ranked signature onto a closure so inference accepts it.
    fn builder<F>(f: F) -> F
    where
        F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
    {
        f
    }

    #[test]
    fn sum_gradient_is_exact() {
        let mut rng = seeded_rng(1, 0);
        let x = Tensor::uniform(3, 3, -2.0, 2.0, &mut rng);
        let err = grad_check(|_, v| Ok(v.sum()), &x, 1e-5).unwrap();
        assert!(err <= 1e-9, "err {err}");
    }

    #[test]
    fn quadratic_form_matches_analytic_gradient() {
        // f(x) = x Q x^T with symmetric Q; gradient 2 Q x.
        let mut rng = seeded_rng(2, 0);
        let half = Tensor::uniform(4, 4, -1.0, 1.0, &mut rng);
        let q = half.add(&half.transpose()).unwrap().scale(0.5);
        let x = Tensor::uniform(1, 4, -1.0, 1.0, &mut rng);

        let q_for_tape = q.clone();
        let build = builder(move |tape, v| {
            let qc = tape.constant(q_for_tape.clone());
            v.matmul(&qc)?.matmul(&v.t())
        });
        let err = grad_check(&build, &x, 1e-5).unwrap();
        assert!(err <= 1e-6, "err {err}");

        // Independent closed form: 2 Q x.
        let tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let loss = build(&tape, xv).unwrap();
        tape.backward(loss).unwrap();
        let grad = xv.grad().unwrap();
        let expect = q.matmul(&x.transpose()).unwrap().scale(2.0).transpose();
        let diff = grad.sub(&expect).unwrap().max_abs();
        assert!(diff <= 1e-12, "diff {diff}");
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(3, 0);
        for _ in 0..5 {
            let b = Tensor::uniform(3, 3, -1.0, 1.0, &mut rng);
            let a = Tensor::uniform(3, 3, -1.0, 1.0, &mut rng);
            let build = builder(|tape, v| {
                let bc = tape.constant(b.clone());
                Ok(v.matmul(&bc)?.sum())
            });
            let err = grad_check(&build, &a, 1e-5).unwrap();
            assert!(err <= 1e-6, "err {err}");
        }
    }

    #[test]
    fn inverse_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(4, 0);
        // Well conditioned: identity plus a small perturbation.
        let a = Tensor::identity(4)
            .add(&Tensor::uniform(4, 4, -0.1, 0.1, &mut rng))
            .unwrap();
        let err = grad_check(|_, v| Ok(v.inverse()?.sum()), &a, 1e-5).unwrap();
        assert!(err <= 1e-5, "err {err}");
    }

    #[test]
    fn elementwise_suite_matches_finite_differences() {
        let mut rng = seeded_rng(6, 0);
        for seed in 0..20u64 {
            let mut local = seeded_rng(seed, 7);
            let x = Tensor::uniform(2, 4, 0.5, 2.0, &mut local);
            let w = Tensor::uniform(2, 4, -1.0, 1.0, &mut rng);
            let builds: Vec<Box<dyn for<'t> Fn(&'t Tape, Var<'t>) -> crate::error::Result<Var<'t>>>> = vec![
                Box::new(|_, v| Ok(v.sigmoid().sum())),
                Box::new(|_, v| Ok(v.softplus().mean())),
                Box::new(|_, v| Ok(v.log().sum())),
                Box::new(|_, v| Ok(v.relu().sum())),
                Box::new(|_, v| Ok(v.neg().sum())),
                Box::new(|_, v| Ok(v.scale(3.5).mean())),
                Box::new(|_, v| Ok(v.row_norm().sum())),
                Box::new(|_, v| Ok(v.group_sort(2)?.row_norm().sum())),
                Box::new(move |t, v| {
                    let wc = t.constant(w.clone());
                    Ok(v.hadamard(&wc)?.sum())
                }),
                Box::new(|_, v| Ok(v.slice_cols(1, 3)?.sum())),
                Box::new(|t, v| {
                    let c = t.constant(Tensor::filled(2, 2, 0.3));
                    Ok(v.concat_cols(&c)?.sum())
                }),
                Box::new(|t, v| {
                    let s = t.constant(Tensor::from_rows(&[vec![0.5], vec![-1.5]]).unwrap());
                    Ok(v.scale_rows(&s)?.sum())
                }),
                Box::new(|t, v| {
                    let b = t.constant(Tensor::filled(1, 4, 0.25));
                    Ok(v.add_bias(&b)?.sum())
                }),
            ];
            for build in &builds {
                let err = grad_check(build, &x, 1e-5).unwrap();
                assert!(err <= 1e-5, "seed {seed} err {err}");
            }
        }
    }
}
