use super::{Tape, Tensor, TensorError, Var};

/// Compares reverse-mode gradients with central differences.
///
/// `build` records a scalar function of the parameters on a fresh tape. The
/// returned value is the maximum over all parameter components of
/// `|a - n| / max(1, |a|, |n|)`.
pub fn grad_check<F>(build: F, points: &[Tensor], eps: f64) -> Result<f64, TensorError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>,
{
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = points.iter().map(|p| tape.param(p.clone())).collect();
        let loss = build(&tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter()
            .zip(points)
            .map(|(v, p)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect()
    };

    let eval = |pts: &[Tensor]| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = pts.iter().map(|p| tape.constant(p.clone())).collect();
        let out = build(&tape, &vars)?;
        let v = out.value();
        if v.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: v.shape().to_vec(),
            });
        }
        Ok(v.item())
    };

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = points.to_vec();
    for (p, grad) in analytic.iter().enumerate() {
        for k in 0..points[p].len() {
            let orig = points[p].data()[k];
            work[p].data_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work[p].data_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work[p].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[k];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = Tensor::new(vec![3], vec![0.5, -2.0, 4.0]).unwrap();
        let err = grad_check(
            |tape, v| {
                let c = tape.constant(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
                Ok(v[0].mul(c)?.sum())
            },
            &[w],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-10, "err = {err}");
    }
}
