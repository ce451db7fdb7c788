//! Finite-difference verification of backpropagated gradients.
//!
//! Each checked coordinate is perturbed by +/- step, the loss is recomputed,
//! and the central difference is compared with the analytic gradient under a
//! floored relative error. Large tensors are subsampled with a seeded RNG so
//! the picked coordinates are reproducible.

use rand::seq::index::sample;

use crate::error::Result;
use crate::seed::rng_from;
use crate::tensor::Tensor;

use super::layer::{LayerGrads, LayerStack};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Half-width of the central difference.
    pub step: f64,
    /// Maximum allowed floored relative error.
    pub tolerance: f64,
    /// Floor applied to the relative-error denominator.
    pub denom_floor: f64,
    /// Tensors with at most this many entries are checked exhaustively.
    pub exhaustive_limit: usize,
    /// Coordinates sampled from each larger tensor.
    pub samples_per_tensor: usize,
    /// Seed for coordinate sampling.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            denom_floor: 1e-5,
            exhaustive_limit: 64,
            samples_per_tensor: 24,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    /// Coordinates compared, across parameters and the input.
    pub checked: usize,
    pub max_rel_err: f64,
    /// Location of the worst coordinate.
    pub worst: String,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{}: {} [{} coords, max rel err {:.3e} at {}]",
            self.name,
            if self.pass { "ok" } else { "FAIL" },
            self.checked,
            self.max_rel_err,
            self.worst
        )
    }
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn pick_coords(len: usize, cfg: &GradCheckConfig, salt: u64) -> Vec<usize> {
    if len <= cfg.exhaustive_limit {
        (0..len).collect()
    } else {
        let mut rng = rng_from(crate::seed::mix(cfg.seed, salt));
        let mut v: Vec<usize> = sample(&mut rng, len, cfg.samples_per_tensor.min(len)).into_vec();
        v.sort_unstable();
        v
    }
}

/// Compute analytic gradients for `loss_fn` applied to the stack's output,
/// then compare them coordinate by coordinate against central differences.
pub fn check_gradients<L>(
    name: &str,
    stack: &mut LayerStack,
    input: &Tensor,
    loss_fn: &L,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    L: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let tape = stack.forward_recorded(input)?;
    let (_, grad_out) = loss_fn(tape.output())?;
    let (input_grad, grads) = stack.backward(&tape, &grad_out)?;
    check_gradients_against(name, stack, input, loss_fn, cfg, &grads, &input_grad)
}

/// Compare externally supplied analytic gradients against central
/// differences. Lets a caller verify (or deliberately corrupt) the analytic
/// side independently of this function.
pub fn check_gradients_against<L>(
    name: &str,
    stack: &mut LayerStack,
    input: &Tensor,
    loss_fn: &L,
    cfg: &GradCheckConfig,
    analytic: &[LayerGrads],
    analytic_input_grad: &Tensor,
) -> Result<GradCheckReport>
where
    L: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let mut checked = 0usize;
    let mut max_rel_err = 0.0f64;
    let mut worst = String::from("none");
    let h = cfg.step;
    let eval = |stack: &LayerStack, x: &Tensor| -> Result<f64> {
        Ok(loss_fn(&stack.forward(x)?)?.0)
    };
    let n_layers = stack.layers.len();
    for li in 0..n_layers {
        for pi in 0..stack.layers[li].params().len() {
            let len = stack.layers[li].params()[pi].len();
            let coords = pick_coords(len, cfg, (li * 2 + pi) as u64);
            for &e in &coords {
                let old = stack.layers[li].params()[pi].data()[e];
                stack.layers[li].params_mut()[pi].data_mut()[e] = old + h;
                let lp = eval(stack, input)?;
                stack.layers[li].params_mut()[pi].data_mut()[e] = old - h;
                let lm = eval(stack, input)?;
                stack.layers[li].params_mut()[pi].data_mut()[e] = old;
                let num = (lp - lm) / (2.0 * h);
                let ana = analytic[li].params()[pi].data()[e];
                let err = rel_err(num, ana, cfg.denom_floor);
                checked += 1;
                if err > max_rel_err {
                    max_rel_err = err;
                    worst = format!(
                        "layer {} ({}) param {} slot {}",
                        li,
                        stack.layers[li].name(),
                        pi,
                        e
                    );
                }
            }
        }
    }
    let mut x = input.clone();
    for &e in &pick_coords(input.len(), cfg, 0xf00d) {
        let old = x.data()[e];
        x.data_mut()[e] = old + h;
        let lp = eval(stack, &x)?;
        x.data_mut()[e] = old - h;
        let lm = eval(stack, &x)?;
        x.data_mut()[e] = old;
        let num = (lp - lm) / (2.0 * h);
        let err = rel_err(num, analytic_input_grad.data()[e], cfg.denom_floor);
        checked += 1;
        if err > max_rel_err {
            max_rel_err = err;
            worst = format!("input slot {}", e);
        }
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        checked,
        max_rel_err,
        worst,
        pass: max_rel_err <= cfg.tolerance,
    })
}
