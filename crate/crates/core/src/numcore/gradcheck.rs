//! Central finite-difference verification of analytic gradients.

use serde::Serialize;

use super::tensor::ParamStore;
use crate::error::{Error, Result};

/// Entries whose analytic and numeric gradients are both below this
/// magnitude are compared on an absolute scale instead of a relative one.
pub const DEFAULT_ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub h: f64,
    pub tol: f64,
    pub tensors: Vec<TensorCheck>,
    /// Names of tensors whose max relative error exceeds `tol`.
    pub violations: Vec<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradients stored on `params` against central differences
/// `(f(θ+h) − f(θ−h)) / 2h` of `loss_fn`, one coordinate at a time.
///
/// Every tensor must already carry its analytic gradient. Parameter values
/// are restored bit-exactly after each probe.
pub fn finite_diff_check<F>(params: &mut ParamStore, mut loss_fn: F, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    finite_diff_check_with_floor(params, &mut loss_fn, h, tol, DEFAULT_ABS_FLOOR)
}

pub fn finite_diff_check_with_floor<F>(
    params: &mut ParamStore,
    loss_fn: &mut F,
    h: f64,
    tol: f64,
    floor: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::Contract(format!("step h must be positive, got {h}")));
    }
    let mut eval = |p: &ParamStore| -> Result<f64> {
        let f = loss_fn(p)?;
        if !f.is_finite() {
            return Err(Error::Numeric(format!("loss evaluated to {f} during gradient check")));
        }
        Ok(f)
    };
    eval(params)?;

    let mut tensors = Vec::with_capacity(params.len());
    let mut violations = Vec::new();
    for ti in 0..params.len() {
        let analytic = params
            .tensor(ti)
            .grad()
            .ok_or_else(|| Error::Contract(format!("tensor {} has no analytic gradient", params.names()[ti])))?
            .to_vec();
        let mut check = TensorCheck {
            name: params.names()[ti].clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (i, &a) in analytic.iter().enumerate() {
            let orig = params.tensor(ti).values()[i];
            params.tensor_mut(ti).values_mut()[i] = orig + h;
            let plus = eval(params);
            params.tensor_mut(ti).values_mut()[i] = orig - h;
            let minus = eval(params);
            params.tensor_mut(ti).values_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * h);
            let rel = relative_error(a, numeric, floor);
            if rel > check.max_rel_error || i == 0 {
                check.max_rel_error = rel;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        if check.max_rel_error > tol {
            violations.push(check.name.clone());
        }
        tensors.push(check);
    }
    Ok(GradCheckReport {
        h,
        tol,
        tensors,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.push("a", Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap());
        s.push("b", Tensor::new(vec![2], vec![1.5, 0.25]).unwrap());
        s
    }

    #[test]
    fn linear_loss_agrees_exactly() {
        let coef = [1.0, -2.0, 3.0, 0.5, 4.0];
        let mut s = store();
        s.tensor_mut(0).set_grad(coef[..3].to_vec()).unwrap();
        s.tensor_mut(1).set_grad(coef[3..].to_vec()).unwrap();
        let loss = |p: &ParamStore| Ok(p.flat_values().iter().zip(coef).map(|(x, c)| x * c).sum());
        let report = finite_diff_check(&mut s, loss, 1e-5, 1e-10).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.max_rel_error() < 1e-10);
        assert_eq!(s, {
            let mut t = store();
            t.tensor_mut(0).set_grad(coef[..3].to_vec()).unwrap();
            t.tensor_mut(1).set_grad(coef[3..].to_vec()).unwrap();
            t
        });
    }

    #[test]
    fn corrupted_entry_is_reported_for_its_tensor_only() {
        let mut s = store();
        // loss = sum x^2, grad = 2x; double one entry of "b".
        let grads: Vec<Vec<f64>> = s.tensors().iter().map(|t| t.values().iter().map(|x| 2.0 * x).collect()).collect();
        s.tensor_mut(0).set_grad(grads[0].clone()).unwrap();
        let mut bad = grads[1].clone();
        bad[1] *= 2.0;
        s.tensor_mut(1).set_grad(bad).unwrap();
        let loss = |p: &ParamStore| Ok(p.flat_values().iter().map(|x| x * x).sum());
        let report = finite_diff_check(&mut s, loss, 1e-5, 1e-4).unwrap();
        assert_eq!(report.violations, vec!["b".to_string()]);
        assert_eq!(report.tensors[1].worst_index, 1);
    }

    #[test]
    fn non_finite_loss_is_diagnosed() {
        let mut s = store();
        s.zero_grads();
        let err = finite_diff_check(&mut s, |_| Ok(f64::NAN), 1e-5, 1e-4).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut s = store();
        let err = finite_diff_check(&mut s, |_| Ok(0.0), 1e-5, 1e-4).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
