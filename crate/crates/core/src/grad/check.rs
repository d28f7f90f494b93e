use alloc::vec::Vec;

use super::{ParamSet, Tensor};
use crate::Result;

/// Central finite differences `(L(p + eps e_i) - L(p - eps e_i)) / 2 eps` for
/// every scalar parameter.
pub fn finite_diff<F>(mut loss: F, params: &ParamSet, eps: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    assert!(eps > 0.0, "finite_diff needs eps > 0");
    let mut probe = params.clone();
    let mut grads = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut g = Tensor::zeros(params.get(t).shape());
        for j in 0..g.len() {
            let orig = params.get(t).data()[j];
            probe.get_mut(t).data_mut()[j] = orig + eps;
            let up = loss(&probe)?;
            probe.get_mut(t).data_mut()[j] = orig - eps;
            let down = loss(&probe)?;
            probe.get_mut(t).data_mut()[j] = orig;
            g.data_mut()[j] = (up - down) / (2.0 * eps);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Denominator floor of [`relative_error`]; below it the comparison is
/// effectively absolute.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Largest [`relative_error`] over all coordinates of two gradient lists.
pub fn max_relative_error(a: &[Tensor], b: &[Tensor]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.shape(), y.shape());
            x.data().iter().zip(y.data()).map(|(&p, &q)| relative_error(p, q))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar_params(v: f64) -> ParamSet {
        ParamSet::new(vec![Tensor::vector(vec![v])])
    }

    #[test]
    fn quadratic_is_exact() {
        let p = scalar_params(3.0);
        let g = finite_diff(|p| Ok(p.get(0).data()[0].powi(2)), &p, 1e-5).unwrap();
        assert!((g[0].data()[0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let p = ParamSet::new(vec![Tensor::vector(vec![1.0, 2.0, 3.0])]);
        let g = finite_diff(|_| Ok(4.2), &p, 1e-5).unwrap();
        assert_eq!(g[0].data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn cubic_carries_the_eps_squared_term() {
        // (w+e)^3 - (w-e)^3 over 2e = 3w^2 + e^2
        let p = scalar_params(2.0);
        let g = finite_diff(|p| Ok(p.get(0).data()[0].powi(3)), &p, 1e-4).unwrap();
        assert!((g[0].data()[0] - 12.00000001).abs() < 1e-8);
    }

    #[test]
    fn relative_error_uses_the_floor_for_tiny_values() {
        assert_eq!(relative_error(0.0, 1e-9), 1e-6);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
