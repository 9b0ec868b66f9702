//! Central finite-difference verification of analytic gradients.

use crate::error::{GdnnError, Result};
use crate::nn::ParamStore;
use crate::scalar::Scalar;

/// Denominator floor for relative errors.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_values: (f64, f64),
    /// Worst relative error per parameter, in store order.
    pub per_param: Vec<(String, f64)>,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the gradients stored in `params` against
/// `(f(θ+ε) − f(θ−ε)) / 2ε`, one coordinate at a time.
pub fn grad_check<T, F>(params: &ParamStore<T>, mut f: F, eps: T) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&ParamStore<T>) -> Result<T>,
{
    let mut probe = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let two_eps = eps + eps;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        per_param: Vec::with_capacity(names.len()),
        coordinates: 0,
    };

    for name in &names {
        let analytic = params.grad(name)?.data().to_vec();
        let mut param_worst: f64 = 0.0;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = probe.value(name)?.data()[i];
            probe.value_mut(name)?.data_mut()[i] = orig + eps;
            let up = f(&probe)?;
            probe.value_mut(name)?.data_mut()[i] = orig - eps;
            let down = f(&probe)?;
            probe.value_mut(name)?.data_mut()[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(GdnnError::NonFinite(format!("objective while probing `{name}`[{i}]")));
            }
            let numeric = ((up - down) / two_eps).as_f64();
            let err = relative_error(a.as_f64(), numeric);
            param_worst = param_worst.max(err);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((name.clone(), i));
                report.worst_values = (a.as_f64(), numeric);
            }
            report.coordinates += 1;
        }
        report.per_param.push((name.clone(), param_worst));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn sq_norm(p: &ParamStore<f64>) -> Result<f64> {
        Ok(p.iter().flat_map(|(_, m)| m.data().iter()).map(|v| v * v).sum())
    }

    fn quadratic_store(grad_scale: f64) -> ParamStore<f64> {
        let mut p = ParamStore::new();
        let a = Matrix::from_rows(&[[0.5, -1.25], [2.0, 0.75]]);
        let b = Matrix::row_vector(&[-0.3, 1.1, 0.9]);
        p.insert("a", a.clone());
        p.insert("b", b.clone());
        p.accumulate("a", &a.map(|v| grad_scale * v)).unwrap();
        p.accumulate("b", &b.map(|v| grad_scale * v)).unwrap();
        p
    }

    #[test]
    fn quadratic_is_exact() {
        let report = grad_check(&quadratic_store(2.0), sq_norm, 1e-6).unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.coordinates, 7);
        assert_eq!(report.per_param.len(), 2);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        // A backward rule missing the factor 2.
        let report = grad_check(&quadratic_store(1.0), sq_norm, 1e-6).unwrap();
        assert!(report.max_rel_error > 1e-2);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let p = quadratic_store(2.0);
        let err = grad_check(&p, |_| Ok(f64::NAN), 1e-6).unwrap_err();
        assert!(matches!(err, GdnnError::NonFinite(_)));
    }
}
