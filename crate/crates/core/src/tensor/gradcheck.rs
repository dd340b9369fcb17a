//! Central-difference gradient checking.
//!
//! Relative error per coordinate is `|a − n| / max(1e-8, |a| + |n|)` for
//! analytic gradient `a` and numeric gradient `n`; checks report the maximum.

use super::array::{Float, Tensor};
use super::tape::{Tape, Var};
use crate::error::Result;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Worst coordinate of a check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(block, flat index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            max_relative_error: 0.0,
            worst: (0, 0),
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
        }
    }

    pub fn merge(self, other: Self) -> Self {
        let checked = self.checked + other.checked;
        let best = if other.max_relative_error > self.max_relative_error { other } else { self };
        Self { checked, ..best }
    }
}

/// `(f(θ + eps·e_i) − f(θ − eps·e_i)) / (2·eps)` for coordinate `index` of
/// block `block`, evaluated in `T` over the step actually representable in
/// `T`.
pub fn numeric_partial<T: Float>(
    loss: &mut dyn FnMut(&[Tensor<T>]) -> Result<T>,
    params: &mut [Tensor<T>],
    block: usize,
    index: usize,
    eps: f64,
) -> Result<f64> {
    let original = params[block].data()[index];
    let step = T::from_f64(eps);
    let (up, down) = (original + step, original - step);
    params[block].data_mut()[index] = up;
    let plus = loss(params);
    params[block].data_mut()[index] = down;
    let minus = loss(params);
    params[block].data_mut()[index] = original;
    Ok(((plus? - minus?) / (up - down)).as_f64())
}

/// Compares `analytic` gradients against central differences of `loss` at
/// the listed `(block, index)` coordinates. The loss may run at a different
/// precision `T` than the analytic gradients `A`.
pub fn compare<T: Float, A: Float>(
    loss: &mut dyn FnMut(&[Tensor<T>]) -> Result<T>,
    params: &[Tensor<T>],
    analytic: &[Tensor<A>],
    eps: f64,
    coords: &[(usize, usize)],
) -> Result<GradCheckReport> {
    let mut params = params.to_vec();
    let mut report = GradCheckReport::empty();
    for &(block, index) in coords {
        let numeric = numeric_partial(loss, &mut params, block, index, eps)?;
        let a = analytic[block].data()[index].as_f64();
        let err = relative_error(a, numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.checked == 1 {
            report.max_relative_error = err;
            report.worst = (block, index);
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// Every coordinate of every block.
pub fn all_coords<T: Float>(params: &[Tensor<T>]) -> Vec<(usize, usize)> {
    params
        .iter()
        .enumerate()
        .flat_map(|(b, t)| (0..t.len()).map(move |i| (b, i)))
        .collect()
}

/// Checks the tape gradient of `f` at `params` against central differences
/// over every coordinate; returns the maximum relative error.
pub fn grad_check<T: Float>(
    f: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    params: &[Tensor<T>],
    eps: f64,
) -> Result<f64> {
    Ok(grad_check_report(f, params, eps)?.max_relative_error)
}

/// [`grad_check`] with the location of the worst coordinate.
pub fn grad_check_report<T: Float>(
    f: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    params: &[Tensor<T>],
    eps: f64,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(&f, params)?;
    let mut loss = |ps: &[Tensor<T>]| evaluate(&f, ps);
    compare(&mut loss, params, &analytic, eps, &all_coords(params))
}

/// Tape gradients of `f` with respect to every block of `params`.
pub fn analytic_gradients<T: Float>(
    f: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    params: &[Tensor<T>],
) -> Result<Vec<Tensor<T>>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok(vars.iter().map(|&v| grads.get(v)).collect())
}

/// Scalar value of `f` at `params` with no gradient bookkeeping.
pub fn evaluate<T: Float>(f: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>, params: &[Tensor<T>]) -> Result<T> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).data()[0])
}

/// Analytic gradients of `f` at precision `A` against central differences of
/// `reference` evaluated in `T` on the same parameters cast to `T`.
///
/// With `T = Dd` the numeric side is accurate far beyond `f64`, so the report
/// measures the analytic gradient alone.
pub fn check_against<T: Float, A: Float>(
    reference: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    f: impl Fn(&mut Tape<A>, &[Var]) -> Result<Var>,
    params: &[Tensor<A>],
    eps: f64,
    coords: &[(usize, usize)],
) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(f, params)?;
    let wide: Vec<Tensor<T>> = params.iter().map(|p| p.cast()).collect();
    let mut loss = |ps: &[Tensor<T>]| evaluate(&reference, ps);
    compare(&mut loss, &wide, &analytic, eps, coords)
}
