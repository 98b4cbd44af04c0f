//! Central finite-difference gradient verification.
//!
//! The numeric side only ever calls the forward path on an inactive tape,
//! so it stays independent of the backward implementation it is checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BatchNormStats, Phase, Tape, Tensor};
use crate::error::Result;

/// Default perturbation for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error with an absolute floor so near-zero gradient pairs do not
/// produce spurious blowups.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Compare backward-pass gradients of `forward` against central finite
/// differences for every element of every tensor in `inputs`.
///
/// `forward` must be a pure function of the input tensors' current values
/// (stochastic layers must re-seed internally), and should be evaluated at
/// a generic point: at kinks (relu at zero, a Euclidean distance at zero
/// error) the two sides legitimately disagree. Returns the maximum relative
/// error over all checked elements.
pub fn check_gradients<F>(inputs: &[Tensor], forward: F, h: f64) -> Result<f64>
where
    F: Fn(&Tape) -> Result<Tensor>,
{
    for t in inputs {
        t.zero_grad();
    }
    let tape = Tape::new();
    let loss = forward(&tape)?;
    tape.backward(&loss)?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut worst = 0.0f64;
    for (t, grads) in inputs.iter().zip(&analytic) {
        let base = t.value();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += h;
            t.set_data(plus)?;
            let up = forward(&Tape::inactive())?.item();

            let mut minus = base.clone();
            minus[i] -= h;
            t.set_data(minus)?;
            let down = forward(&Tape::inactive())?.item();

            t.set_data(base.clone())?;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(grads[i], fd));
        }
    }
    Ok(worst)
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::param(shape, data).expect("consistent by construction")
}

/// Tensor with entries bounded away from zero, for kinked ops like relu.
fn rand_tensor_offset(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.2..2.0)
        })
        .collect();
    Tensor::param(shape, data).expect("consistent by construction")
}

fn rand_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Run a finite-difference check over every differentiable op, returning
/// `(op name, max relative error)` per op. Input data varies with `seed`.
pub fn op_gradient_checks(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(&'static str, f64)> = Vec::new();

    // add / sub / mul
    {
        let a = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
        let b = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
        let w = rand_weights(&mut rng, 12);
        let wc = w.clone();
        let (a2, b2) = (a.clone(), b.clone());
        let err = check_gradients(
            &[a, b],
            move |t| t.weighted_sum(&t.add(&a2, &b2)?, &wc),
            DEFAULT_STEP,
        )?;
        out.push(("add", err));
    }
    {
        let a = rand_tensor(&mut rng, &[2, 5], -2.0, 2.0);
        let b = rand_tensor(&mut rng, &[2, 5], -2.0, 2.0);
        let w = rand_weights(&mut rng, 10);
        let (a2, b2) = (a.clone(), b.clone());
        let err = check_gradients(
            &[a, b],
            move |t| t.weighted_sum(&t.sub(&a2, &b2)?, &w),
            DEFAULT_STEP,
        )?;
        out.push(("sub", err));
    }
    {
        let a = rand_tensor(&mut rng, &[4, 3], -2.0, 2.0);
        let b = rand_tensor(&mut rng, &[4, 3], -2.0, 2.0);
        let w = rand_weights(&mut rng, 12);
        let (a2, b2) = (a.clone(), b.clone());
        let err = check_gradients(
            &[a, b],
            move |t| t.weighted_sum(&t.mul(&a2, &b2)?, &w),
            DEFAULT_STEP,
        )?;
        out.push(("mul", err));
    }
    {
        let a = rand_tensor(&mut rng, &[6], -2.0, 2.0);
        let w = rand_weights(&mut rng, 6);
        let a2 = a.clone();
        let err = check_gradients(
            &[a],
            move |t| t.weighted_sum(&t.scale(&a2, -1.7)?, &w),
            DEFAULT_STEP,
        )?;
        out.push(("scale", err));
    }

    // activations
    for (name, which) in [("tanh", 0u8), ("sigmoid", 1u8), ("relu", 2u8)] {
        let a = rand_tensor_offset(&mut rng, &[3, 3]);
        let w = rand_weights(&mut rng, 9);
        let a2 = a.clone();
        let err = check_gradients(
            &[a],
            move |t| {
                let y = match which {
                    0 => t.tanh(&a2)?,
                    1 => t.sigmoid(&a2)?,
                    _ => t.relu(&a2)?,
                };
                t.weighted_sum(&y, &w)
            },
            DEFAULT_STEP,
        )?;
        out.push((name, err));
    }
    {
        let a = rand_tensor(&mut rng, &[5], 0.5, 3.0);
        let w = rand_weights(&mut rng, 5);
        let a2 = a.clone();
        let err = check_gradients(
            &[a],
            move |t| t.weighted_sum(&t.sqrt(&a2)?, &w),
            DEFAULT_STEP,
        )?;
        out.push(("sqrt", err));
    }

    // reductions
    {
        let a = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
        let a2 = a.clone();
        let err = check_gradients(&[a], move |t| t.sum_all(&a2), DEFAULT_STEP)?;
        out.push(("sum_all", err));
    }
    {
        let a = rand_tensor(&mut rng, &[7], -2.0, 2.0);
        let w = rand_weights(&mut rng, 7);
        let a2 = a.clone();
        let err = check_gradients(&[a], move |t| t.weighted_sum(&a2, &w), DEFAULT_STEP)?;
        out.push(("weighted_sum", err));
    }
    {
        let a = rand_tensor(&mut rng, &[2, 6], -2.0, 2.0);
        let w = rand_weights(&mut rng, 6);
        let a2 = a.clone();
        let err = check_gradients(
            &[a],
            move |t| t.weighted_sum(&t.sum_pairs(&a2)?, &w),
            DEFAULT_STEP,
        )?;
        out.push(("sum_pairs", err));
    }

    // matmul
    {
        let a = rand_tensor(&mut rng, &[3, 4], -1.5, 1.5);
        let b = rand_tensor(&mut rng, &[4, 2], -1.5, 1.5);
        let w = rand_weights(&mut rng, 6);
        let (a2, b2) = (a.clone(), b.clone());
        let err = check_gradients(
            &[a, b],
            move |t| t.weighted_sum(&t.matmul(&a2, &b2)?, &w),
            DEFAULT_STEP,
        )?;
        out.push(("matmul", err));
    }

    // shape ops
    {
        let a = rand_tensor(&mut rng, &[2, 3, 2], -2.0, 2.0);
        let w = rand_weights(&mut rng, 12);
        let a2 = a.clone();
        let err = check_gradients(
            &[a],
            move |t| t.weighted_sum(&t.reshape(&a2, &[4, 3])?, &w),
            DEFAULT_STEP,
        )?;
        out.push(("reshape", err));
    }
    {
        let a = rand_tensor(&mut rng, &[3, 4, 2], -2.0, 2.0);
        let w = rand_weights(&mut rng, 6);
        let a2 = a.clone();
        let err = check_gradients(
            &[a],
            move |t| t.weighted_sum(&t.slice_time(&a2, 2)?, &w),
            DEFAULT_STEP,
        )?;
        out.push(("slice_time", err));
    }
    {
        let a = rand_tensor(&mut rng, &[3, 2], -2.0, 2.0);
        let b = rand_tensor(&mut rng, &[3, 2], -2.0, 2.0);
        let w = rand_weights(&mut rng, 12);
        let (a2, b2) = (a.clone(), b.clone());
        let err = check_gradients(
            &[a, b],
            move |t| {
                let stacked = t.stack_time(&[a2.clone(), b2.clone()])?;
                t.weighted_sum(&stacked, &w)
            },
            DEFAULT_STEP,
        )?;
        out.push(("stack_time", err));
    }
    {
        let a = rand_tensor(&mut rng, &[2, 3], -2.0, 2.0);
        let w = rand_weights(&mut rng, 15);
        let a2 = a.clone();
        let err = check_gradients(
            &[a],
            move |t| t.weighted_sum(&t.pad_rows(&a2, 5)?, &w),
            DEFAULT_STEP,
        )?;
        out.push(("pad_rows", err));
    }
    {
        let a = rand_tensor(&mut rng, &[4, 4], -2.0, 2.0);
        let w = rand_weights(&mut rng, 9);
        let a2 = a.clone();
        let err = check_gradients(
            &[a],
            move |t| t.weighted_sum(&t.slice_block(&a2, 3)?, &w),
            DEFAULT_STEP,
        )?;
        out.push(("slice_block", err));
    }

    // convolutions
    {
        let x = rand_tensor(&mut rng, &[2, 3, 3], -1.5, 1.5);
        let w = rand_tensor(&mut rng, &[4, 3], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[4], -0.5, 0.5);
        let proj = rand_weights(&mut rng, 2 * 3 * 4);
        let (x2, w2, b2) = (x.clone(), w.clone(), b.clone());
        let err = check_gradients(
            &[x, w, b],
            move |t| t.weighted_sum(&t.conv_channel_mix(&x2, &w2, &b2)?, &proj),
            DEFAULT_STEP,
        )?;
        out.push(("conv_channel_mix", err));
    }
    {
        let x = rand_tensor(&mut rng, &[2, 5, 2], -1.5, 1.5);
        let w = rand_tensor(&mut rng, &[3, 2, 3], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[3], -0.5, 0.5);
        let proj = rand_weights(&mut rng, 2 * 5 * 3);
        let (x2, w2, b2) = (x.clone(), w.clone(), b.clone());
        let err = check_gradients(
            &[x, w, b],
            move |t| t.weighted_sum(&t.conv_temporal(&x2, &w2, &b2, 1, 1)?, &proj),
            DEFAULT_STEP,
        )?;
        out.push(("conv_temporal", err));
    }
    {
        // strided, unpadded variant
        let x = rand_tensor(&mut rng, &[1, 7, 2], -1.5, 1.5);
        let w = rand_tensor(&mut rng, &[2, 2, 3], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[2], -0.5, 0.5);
        let proj = rand_weights(&mut rng, 1 * 3 * 2);
        let (x2, w2, b2) = (x.clone(), w.clone(), b.clone());
        let err = check_gradients(
            &[x, w, b],
            move |t| t.weighted_sum(&t.conv_temporal(&x2, &w2, &b2, 2, 0)?, &proj),
            DEFAULT_STEP,
        )?;
        out.push(("conv_temporal_strided", err));
    }

    // batch norm, train and eval phases
    {
        let x = rand_tensor(&mut rng, &[2, 3, 2, 3], -2.0, 2.0);
        let scale = rand_tensor(&mut rng, &[3], 0.5, 1.5);
        let shift = rand_tensor(&mut rng, &[3], -0.5, 0.5);
        let proj = rand_weights(&mut rng, 2 * 3 * 2 * 3);
        let (x2, s2, h2) = (x.clone(), scale.clone(), shift.clone());
        let err = check_gradients(
            &[x, scale, shift],
            move |t| {
                let mut stats = BatchNormStats::new(3);
                let y = t.batch_norm(&x2, &s2, &h2, &mut stats, 0.1, 1e-5, Phase::Train)?;
                t.weighted_sum(&y, &proj)
            },
            DEFAULT_STEP,
        )?;
        out.push(("batch_norm_train", err));
    }
    {
        let x = rand_tensor(&mut rng, &[1, 2, 3, 2], -2.0, 2.0);
        let scale = rand_tensor(&mut rng, &[2], 0.5, 1.5);
        let shift = rand_tensor(&mut rng, &[2], -0.5, 0.5);
        let proj = rand_weights(&mut rng, 12);
        let run_mean: Vec<f64> = rand_weights(&mut rng, 2);
        let run_var: Vec<f64> = (0..2).map(|_| rng.gen_range(0.5..2.0)).collect();
        let (x2, s2, h2) = (x.clone(), scale.clone(), shift.clone());
        let err = check_gradients(
            &[x, scale, shift],
            move |t| {
                let mut stats = BatchNormStats {
                    mean: run_mean.clone(),
                    var: run_var.clone(),
                };
                let y = t.batch_norm(&x2, &s2, &h2, &mut stats, 0.1, 1e-5, Phase::Eval)?;
                t.weighted_sum(&y, &proj)
            },
            DEFAULT_STEP,
        )?;
        out.push(("batch_norm_eval", err));
    }

    // dropout with a fixed mask seed
    {
        let x = rand_tensor(&mut rng, &[4, 4], -2.0, 2.0);
        let proj = rand_weights(&mut rng, 16);
        let mask_seed = rng.gen::<u64>();
        let x2 = x.clone();
        let err = check_gradients(
            &[x],
            move |t| {
                let mut mask_rng = ChaCha8Rng::seed_from_u64(mask_seed);
                let y = t.dropout(&x2, 0.4, Phase::Train, &mut mask_rng)?;
                t.weighted_sum(&y, &proj)
            },
            DEFAULT_STEP,
        )?;
        out.push(("dropout_train", err));
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_matches_finite_differences() {
        for seed in 0..3u64 {
            for (name, err) in op_gradient_checks(seed).unwrap() {
                let tol = if name.starts_with("batch_norm") {
                    1e-5
                } else {
                    1e-6
                };
                assert!(err < tol, "op {name} seed {seed}: rel err {err}");
            }
        }
    }

    #[test]
    fn composite_expression_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = rand_tensor(&mut rng, &[3, 3], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[3, 3], -1.0, 1.0);
        let (a2, b2) = (a.clone(), b.clone());
        let err = check_gradients(
            &[a, b],
            move |t| {
                let prod = t.matmul(&a2, &b2)?;
                let act = t.tanh(&prod)?;
                let mixed = t.mul(&act, &a2)?;
                t.sum_all(&mixed)
            },
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }
}
