//! Operation tape for reverse-mode differentiation.

use std::cell::RefCell;

use super::Tensor;
use crate::error::{Error, Result};

struct Step {
    output: Tensor,
    pull: Box<dyn Fn(&[f64])>,
}

/// Record of executed ops in forward order.
///
/// Each recorded step owns a closure that maps the output gradient to
/// gradient contributions on the step's inputs. [`Tape::backward`] replays
/// the steps in exact reverse execution order.
///
/// A tape and the tensors recorded on it belong to one worker; nothing here
/// is synchronized.
pub struct Tape {
    steps: RefCell<Vec<Step>>,
    recording: bool,
}

impl Tape {
    /// A recording tape for forward passes that will be differentiated.
    pub fn new() -> Self {
        Tape {
            steps: RefCell::new(Vec::new()),
            recording: true,
        }
    }

    /// A pass-through tape: ops execute normally but record nothing.
    /// Use for inference and for finite-difference re-evaluations.
    pub fn inactive() -> Self {
        Tape {
            steps: RefCell::new(Vec::new()),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn num_steps(&self) -> usize {
        self.steps.borrow().len()
    }

    pub(crate) fn record(&self, output: &Tensor, pull: impl Fn(&[f64]) + 'static) {
        debug_assert!(self.recording);
        self.steps.borrow_mut().push(Step {
            output: output.clone(),
            pull: Box::new(pull),
        });
    }

    /// Accumulate `d loss / d t` into every `requires_grad` tensor reachable
    /// from `loss`.
    ///
    /// Intermediate (op output) gradients are reset at the start of every
    /// call, so leaf gradients accumulate across repeated calls; interleave
    /// with `zero_grad` on the leaves to get fresh gradients.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let steps = self.steps.borrow();
        if !steps.iter().any(|s| s.output.same_storage(loss)) {
            return Err(Error::Usage(
                "loss tensor is not an op output recorded on this tape".into(),
            ));
        }
        // Op outputs get fresh gradient buffers; leaves keep theirs.
        for step in steps.iter() {
            step.output.reset_grad_zeros();
        }
        loss.accumulate_grad(&[1.0]);
        for step in steps.iter().rev() {
            let g = step
                .output
                .grad()
                .expect("op output gradient was reset above");
            (step.pull)(&g);
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = tape.add(&x, &x).unwrap();
        assert!(matches!(tape.backward(&y), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_rejects_disconnected_loss() {
        let tape = Tape::new();
        let loose = Tensor::scalar(1.0);
        assert!(matches!(tape.backward(&loose), Err(Error::Usage(_))));
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let tape = Tape::new();
        let x = Tensor::param(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        let loss = tape.sum_all(&x).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn half_sum_of_squares_gradient_is_identity() {
        let tape = Tape::new();
        let x = Tensor::param(&[4], vec![1.0, -2.0, 0.25, 3.0]).unwrap();
        let sq = tape.mul(&x, &x).unwrap();
        let loss = tape.scale(&tape.sum_all(&sq).unwrap(), 0.5).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), x.value());
    }

    #[test]
    fn repeated_backward_accumulates_without_zero_grad() {
        let tape = Tape::new();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let loss = tape.sum_all(&x).unwrap();
        tape.backward(&loss).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn backward_after_zero_grad_is_reproducible() {
        let tape = Tape::new();
        let x = Tensor::param(&[3], vec![0.3, -1.2, 2.0]).unwrap();
        let y = tape.tanh(&x).unwrap();
        let loss = tape.sum_all(&y).unwrap();
        tape.backward(&loss).unwrap();
        let first = x.grad().unwrap();
        x.zero_grad();
        tape.backward(&loss).unwrap();
        assert_eq!(first, x.grad().unwrap());
    }

    #[test]
    fn inactive_tape_records_nothing() {
        let tape = Tape::inactive();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = tape.add(&x, &x).unwrap();
        assert_eq!(tape.num_steps(), 0);
        assert!(!y.requires_grad());
    }
}
