//! Central finite-difference verification of analytic gradients.
//!
//! The operation under test is reduced to a scalar by a fixed random projection
//! of its output, so every output element contributes to the check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// An operation with an explicit backward pass.
pub trait Differentiable {
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor>;

    /// Gradients with respect to every input given the output gradient.
    fn backward(&self, inputs: &[Tensor], grad_out: &Tensor) -> Result<Vec<Tensor>>;
}

/// Adapts a function that records operations on a [`Tape`].
pub struct TapeOp<F>(pub F);

impl<F> Differentiable for TapeOp<F>
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var>,
{
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
        let out = (self.0)(&mut tape, &vars)?;
        Ok(tape.value(out).clone())
    }

    fn backward(&self, inputs: &[Tensor], grad_out: &Tensor) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
        let out = (self.0)(&mut tape, &vars)?;
        tape.backward_with(out, grad_out.clone())?;
        vars.iter()
            .zip(inputs)
            .map(|(&v, t)| match tape.grad(v) {
                Some(g) => Tensor::new(t.shape(), g.to_vec()),
                None => Ok(Tensor::zeros(t.shape())),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// One-sided slopes differing by more than this fraction mark a kink.
    pub kink_ratio: f64,
    pub projection_seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-3,
            tolerance: 1e-3,
            kink_ratio: 0.1,
            projection_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputReport {
    pub max_relative_error: f64,
    /// Flat index of the worst element, if any element was checked.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Elements within one step of a non-differentiable point.
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub inputs: Vec<InputReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.inputs
            .iter()
            .all(|r| r.max_relative_error <= self.tolerance)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.inputs
            .iter()
            .map(|r| r.max_relative_error)
            .fold(0.0, f64::max)
    }
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn grad_check(
    op: &dyn Differentiable,
    inputs: &[Tensor],
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if inputs.iter().any(|t| !t.all_finite()) {
        return Err(Error::Parameter("grad_check inputs must be finite".into()));
    }
    let out = op.forward(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.projection_seed);
    let projection: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let seed = Tensor::new(out.shape(), projection.clone())?;
    let objective = |xs: &[Tensor]| -> Result<f64> {
        let y = op.forward(xs)?;
        Ok(y.data().iter().zip(&projection).map(|(a, b)| a * b).sum())
    };

    let analytic = op.backward(inputs, &seed)?;
    if analytic.len() != inputs.len() {
        return Err(Error::Usage(format!(
            "backward returned {} gradients for {} inputs",
            analytic.len(),
            inputs.len()
        )));
    }

    let f0 = objective(inputs)?;
    let h = config.step;
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut reports = Vec::with_capacity(inputs.len());
    for (k, grad) in analytic.iter().enumerate() {
        let mut report = InputReport {
            max_relative_error: 0.0,
            worst_index: None,
            checked: 0,
            skipped: Vec::new(),
        };
        for j in 0..inputs[k].len() {
            let x = inputs[k].data()[j];
            work[k].data_mut()[j] = x + h;
            let fp = objective(&work)?;
            work[k].data_mut()[j] = x - h;
            let fm = objective(&work)?;
            work[k].data_mut()[j] = x;

            let right = (fp - f0) / h;
            let left = (f0 - fm) / h;
            let scale = right.abs().max(left.abs());
            if (right - left).abs() > config.kink_ratio * scale + 1e-9 {
                report.skipped.push(j);
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let err = relative_error(grad.data()[j], numeric);
            report.checked += 1;
            if report.worst_index.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_index = Some(j);
            }
        }
        reports.push(report);
    }
    Ok(GradCheckReport {
        inputs: reports,
        tolerance: config.tolerance,
    })
}
