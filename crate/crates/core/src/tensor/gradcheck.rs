//! Finite-difference verification of analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{Graph, Matrix, Var};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Numerical derivative used as the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`.
    #[default]
    Central,
    /// Richardson extrapolation of two central differences,
    /// `(4·D(h) - D(2h)) / 3`, with fourth-order truncation error.
    Richardson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdOptions {
    pub step: f64,
    pub stencil: Stencil,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            stencil: Stencil::Central,
        }
    }
}

/// Relative error with the denominator floored at `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Checks the gradient of a scalar function of one matrix with central
/// differences of step `h`.
///
/// `f` builds the function on a fresh graph from the input node. Returns the
/// largest relative error over all coordinates.
pub fn finite_diff_check<F>(f: F, x: &Matrix, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    finite_diff_check_many(|g, xs| f(g, xs[0]), std::slice::from_ref(x), h)
}

/// Central-difference check of a scalar function of several matrices.
pub fn finite_diff_check_many<F>(f: F, inputs: &[Matrix], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    finite_diff_check_with(
        f,
        inputs,
        FdOptions {
            step: h,
            stencil: Stencil::Central,
        },
    )
}

pub fn finite_diff_check_with<F>(f: F, inputs: &[Matrix], opts: FdOptions) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let h = opts.step;
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = analytic_grads(&f, inputs)?;

    let mut worst: f64 = 0.0;
    let mut probe: Vec<Matrix> = inputs.to_vec();
    for (t, grad) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let numeric = match opts.stencil {
                Stencil::Central => central(&f, &mut probe, t, k, h)?,
                Stencil::Richardson => {
                    let fine = central(&f, &mut probe, t, k, h)?;
                    let coarse = central(&f, &mut probe, t, k, 2.0 * h)?;
                    (4.0 * fine - coarse) / 3.0
                }
            };
            worst = worst.max(relative_error(grad.as_slice()[k], numeric));
        }
    }
    Ok(worst)
}

fn central<F>(f: &F, probe: &mut [Matrix], t: usize, k: usize, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let orig = probe[t].as_slice()[k];
    probe[t].as_mut_slice()[k] = orig + h;
    let plus = evaluate(f, probe)?;
    probe[t].as_mut_slice()[k] = orig - h;
    let minus = evaluate(f, probe)?;
    probe[t].as_mut_slice()[k] = orig;
    Ok((plus - minus) / (2.0 * h))
}

fn analytic_grads<F>(f: &F, inputs: &[Matrix]) -> Result<Vec<Matrix>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.param(m.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    Ok(vars.iter().map(|&v| g.grad_or_zeros(v)).collect())
}

fn evaluate<F>(f: &F, inputs: &[Matrix]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.constant(m.clone())).collect();
    let loss = f(&mut g, &vars)?;
    Ok(g.scalar(loss))
}
