use std::cell::{Cell, Ref, RefCell};
use std::fmt;
use std::rc::Rc;

use super::AutodiffError;

/// Dense double-precision tensor with optional gradient storage.
///
/// Cloning is shallow: clones share the same storage, so a parameter update
/// through one handle is visible through every other handle. Shapes are
/// row-major; a scalar is shape `[1]`.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<TensorInner>,
}

struct TensorInner {
    shape: Vec<usize>,
    values: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: Cell<bool>,
    /// True for tensors produced by a tape operation. Gradients propagate
    /// through these during backward even when they are not leaves.
    from_op: bool,
}

impl Tensor {
    /// Creates a non-trainable leaf tensor.
    pub fn from_vec(shape: Vec<usize>, values: Vec<f64>) -> Result<Tensor, AutodiffError> {
        let numel: usize = shape.iter().product();
        if numel != values.len() || shape.is_empty() {
            return Err(AutodiffError::InvalidShape {
                op: "from_vec",
                shape,
                reason: "value length must equal the product of the dimensions",
            });
        }
        Ok(Self::build(shape, values, false, false))
    }

    /// Creates a trainable leaf tensor (`requires_grad = true`).
    pub fn param(shape: Vec<usize>, values: Vec<f64>) -> Result<Tensor, AutodiffError> {
        let t = Self::from_vec(shape, values)?;
        t.inner.requires_grad.set(true);
        Ok(t)
    }

    /// Shape-`[1]` constant.
    pub fn scalar(value: f64) -> Tensor {
        Self::build(vec![1], vec![value], false, false)
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let numel: usize = shape.iter().product();
        Self::build(shape, vec![0.0; numel.max(0)], false, false)
    }

    pub(super) fn from_op(shape: Vec<usize>, values: Vec<f64>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self::build(shape, values, false, true)
    }

    fn build(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool, from_op: bool) -> Tensor {
        Tensor {
            inner: Rc::new(TensorInner {
                shape,
                values: RefCell::new(values),
                grad: RefCell::new(None),
                requires_grad: Cell::new(requires_grad),
                from_op,
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    /// Borrows the values in place. Prefer this over [`Tensor::to_vec`] in
    /// hot paths.
    pub fn values(&self) -> Ref<'_, Vec<f64>> {
        self.inner.values.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.values.borrow().clone()
    }

    /// Value of a scalar tensor.
    ///
    /// Panics if the tensor does not hold exactly one element.
    pub fn item(&self) -> f64 {
        let v = self.inner.values.borrow();
        assert!(v.len() == 1, "item() on tensor of shape {:?}", self.inner.shape);
        v[0]
    }

    /// Replaces the stored values; the new slice must match the shape.
    pub fn set_values(&self, values: Vec<f64>) -> Result<(), AutodiffError> {
        if values.len() != self.numel() {
            return Err(AutodiffError::InvalidShape {
                op: "set_values",
                shape: self.inner.shape.clone(),
                reason: "value length must equal the product of the dimensions",
            });
        }
        *self.inner.values.borrow_mut() = values;
        Ok(())
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn set_requires_grad(&self, requires_grad: bool) {
        self.inner.requires_grad.set(requires_grad);
    }

    /// The accumulated gradient, if backward has reached this tensor.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// True when backward should deposit a gradient here: either the caller
    /// asked for one or the tensor is an interior node of the graph.
    pub(super) fn wants_grad(&self) -> bool {
        self.inner.requires_grad.get() || self.inner.from_op
    }

    pub(super) fn accumulate_grad(&self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.numel());
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    pub(super) fn seed_grad_ones(&self) {
        *self.inner.grad.borrow_mut() = Some(vec![1.0; self.numel()]);
    }

    /// Multiplies the stored gradient (if any) by `scale` in place.
    pub(super) fn scale_grad(&self, scale: f64) {
        if let Some(g) = self.inner.grad.borrow_mut().as_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }

    /// In-place `p -= learning_rate * grad`; clears the gradient afterwards.
    pub(super) fn apply_sgd(&self, learning_rate: f64) -> Result<(), AutodiffError> {
        let mut slot = self.inner.grad.borrow_mut();
        let grad = slot.as_ref().ok_or(AutodiffError::MissingGradient)?;
        {
            let mut values = self.inner.values.borrow_mut();
            for (v, g) in values.iter_mut().zip(grad) {
                *v -= learning_rate * g;
            }
        }
        *slot = None;
        Ok(())
    }

    /// Pointer identity; used to detect aliased parameters.
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad.get())
            .field("values", &self.inner.values.borrow())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_length_mismatch() {
        let err = Tensor::from_vec(vec![2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, AutodiffError::InvalidShape { .. }));
    }

    #[test]
    fn clones_share_storage() {
        let a = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
        let b = a.clone();
        a.set_values(vec![3.0, 4.0]).unwrap();
        assert_eq!(b.to_vec(), vec![3.0, 4.0]);
        assert!(a.same_storage(&b));
    }

    #[test]
    fn grad_accumulates_and_clears() {
        let a = Tensor::param(vec![2], vec![0.0, 0.0]).unwrap();
        a.accumulate_grad(&[1.0, 2.0]);
        a.accumulate_grad(&[0.5, 0.5]);
        assert_eq!(a.grad().unwrap(), vec![1.5, 2.5]);
        a.zero_grad();
        assert!(a.grad().is_none());
    }
}
