use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::tape::{NodeId, Tape};

/// Compares reverse-mode gradients against central finite differences.
///
/// `build` must construct the same scalar loss from any parameter values it
/// is handed; it is called once for the analytic sweep and twice per
/// parameter entry for the difference quotient. Returns the maximum over all
/// entries of |analytic - fd| / max(1, |fd|).
pub fn grad_check<F>(params: &[Matrix], eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::Config(format!(
            "grad_check eps must lie in (0, 1e-2], got {eps}"
        )));
    }
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &ids)?;
    let base = tape.scalar(loss);
    if !base.is_finite() {
        return Err(Error::NonFinite {
            what: "loss".into(),
            location: "unperturbed point".into(),
        });
    }
    tape.backward(loss)?;

    let eval = |perturbed: &[Matrix]| -> Result<f64> {
        let mut t = Tape::new();
        let ids: Vec<NodeId> = perturbed.iter().map(|m| t.param(m.clone())).collect();
        let l = build(&mut t, &ids)?;
        Ok(t.scalar(l))
    };

    let mut worst = 0.0f64;
    let mut work: Vec<Matrix> = params.to_vec();
    for pi in 0..params.len() {
        let analytic = tape.grad(ids[pi]).cloned();
        for e in 0..params[pi].data().len() {
            let orig = work[pi].data()[e];
            work[pi].data_mut()[e] = orig + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[e] = orig - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[e] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss".into(),
                    location: format!(
                        "parameter {pi}, entry ({}, {})",
                        e / params[pi].cols(),
                        e % params[pi].cols()
                    ),
                });
            }
            let fd = (plus - minus) / (2.0 * eps);
            let a = analytic.as_ref().map_or(0.0, |m| m.data()[e]);
            let rel = (a - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn linear_model_mse_is_exact_to_roundoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random(&mut rng, 8, 3);
        let y = random(&mut rng, 8, 2);
        let params = vec![random(&mut rng, 3, 2), random(&mut rng, 1, 2)];
        let err = grad_check(&params, 1e-5, |t, ids| {
            let xc = t.constant(x.clone());
            let yc = t.constant(y.clone());
            let o = t.matmul(xc, ids[0])?;
            let o = t.add_row_vec(o, ids[1])?;
            t.mean_row_sq_dist(o, yc)
        })
        .unwrap();
        assert!(err < 1e-8, "quadratic loss should be FD-exact, got {err}");
    }

    #[test]
    fn eps_out_of_range_is_rejected() {
        let params = vec![Matrix::filled(1, 1, 1.0)];
        for bad in [0.0, -1e-5, 0.5] {
            let r = grad_check(&params, bad, |t, ids| Ok(t.sum(ids[0])));
            assert!(matches!(r, Err(Error::Config(_))));
        }
    }

    #[test]
    fn non_finite_loss_is_reported_with_location() {
        let params = vec![Matrix::filled(1, 2, 1e200)];
        let r = grad_check(&params, 1e-5, |t, ids| {
            let z = t.constant(Matrix::zeros(1, 2));
            t.mean_row_sq_dist(ids[0], z)
        });
        match r {
            Err(Error::NonFinite { what, .. }) => assert_eq!(what, "loss"),
            other => panic!("expected non-finite report, got {other:?}"),
        }
    }

    #[test]
    fn unused_parameter_checks_clean_against_zero_fd() {
        let params = vec![Matrix::filled(2, 2, 3.0), Matrix::filled(1, 1, 5.0)];
        let err = grad_check(&params, 1e-4, |t, ids| {
            // Second parameter intentionally unused.
            Ok(t.sum(ids[0]))
        })
        .unwrap();
        assert!(err < 1e-10);
    }
}
