//! Dense f64 tensors with reverse-mode differentiation.
//!
//! The op set is exactly what the prediction model needs: matrix products,
//! channel/temporal convolutions, batch normalization, dropout, pointwise
//! activations and a few shape utilities. Ops execute eagerly and record
//! a backward closure on a [`Tape`]; replaying the tape in reverse
//! accumulates gradients into every `requires_grad` tensor.

mod adam;
pub mod gradcheck;
mod ops;
mod tape;

pub use adam::AdamState;
pub use ops::BatchNormStats;
pub use tape::Tape;

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Whether stochastic/statistics-tracking layers run in training or
/// inference behavior.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

pub(crate) struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

/// Shared handle to a dense row-major f64 array with an optional gradient.
///
/// Cloning is cheap (reference count); the underlying storage is shared, so
/// optimizer updates through one handle are visible through all clones.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Rc<RefCell<TensorData>>,
}

impl Tensor {
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Parameter(format!(
                "tensor shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor {
            inner: Rc::new(RefCell::new(TensorData {
                shape: shape.to_vec(),
                data,
                grad: None,
                requires_grad: false,
            })),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; numel]).expect("consistent by construction")
    }

    pub fn ones(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![1.0; numel]).expect("consistent by construction")
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(&[1], vec![v]).expect("consistent by construction")
    }

    /// A trainable tensor (gradient slot enabled).
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let t = Tensor::from_vec(shape, data)?;
        t.set_requires_grad(true);
        Ok(t)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    /// Copy of the value array.
    pub fn value(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> f64 {
        let d = self.inner.borrow();
        assert_eq!(d.data.len(), 1, "item() on non-scalar tensor {:?}", d.shape);
        d.data[0]
    }

    /// Copy of the gradient, if one has been populated.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn set_requires_grad(&self, flag: bool) {
        self.inner.borrow_mut().requires_grad = flag;
    }

    /// Clear the gradient slot (next backward starts from zero).
    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Replace the value array in place. Shape must be unchanged.
    pub fn set_data(&self, data: Vec<f64>) -> Result<()> {
        let mut d = self.inner.borrow_mut();
        if data.len() != d.data.len() {
            return Err(Error::Parameter(format!(
                "set_data length {} does not match tensor of {} elements",
                data.len(),
                d.data.len()
            )));
        }
        d.data = data;
        Ok(())
    }

    /// True when both handles point at the same storage.
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut d = self.inner.borrow_mut();
        debug_assert_eq!(delta.len(), d.data.len());
        match &mut d.grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => d.grad = Some(delta.to_vec()),
        }
    }

    pub(crate) fn reset_grad_zeros(&self) {
        let mut d = self.inner.borrow_mut();
        let n = d.data.len();
        d.grad = Some(vec![0.0; n]);
    }

    /// All values finite (no NaN/Inf).
    pub fn is_finite(&self) -> bool {
        self.inner.borrow().data.iter().all(|v| v.is_finite())
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &d.shape)
            .field("requires_grad", &d.requires_grad)
            .field("data", &d.data)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_length_must_agree() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn grad_accumulates_across_calls() {
        let t = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        t.accumulate_grad(&[0.5, 0.5]);
        t.accumulate_grad(&[1.0, 2.0]);
        assert_eq!(t.grad().unwrap(), vec![1.5, 2.5]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn clones_share_storage() {
        let t = Tensor::param(&[1], vec![3.0]).unwrap();
        let u = t.clone();
        u.set_data(vec![4.0]).unwrap();
        assert_eq!(t.item(), 4.0);
        assert!(t.same_storage(&u));
    }
}
