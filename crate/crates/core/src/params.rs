use crate::tensor::{Scalar, Tensor};

/// A model whose trainable weights can be visited as a flat list of tensors
/// in a fixed order. Gradients use the same type, so optimizer state and
/// checkpoints line up tensor by tensor.
pub trait Parameters<F: Scalar> {
    fn tensors(&self) -> Vec<&Tensor<F>>;

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Euclidean norm over all tensors.
    fn global_norm(&self) -> F {
        self.tensors()
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|&v| v * v)
            .sum::<F>()
            .sqrt()
    }

    fn scale_all(&mut self, factor: F) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Copies all values into one vector, in visiting order.
    fn flatten(&self) -> Vec<F> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Inverse of [`Parameters::flatten`]. Panics if the length differs.
    fn assign_flat(&mut self, values: &[F]) {
        assert_eq!(values.len(), self.num_parameters(), "flat parameter length");
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
    }

    /// Adds `other` into `self`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b).expect("parameter sets share a layout");
        }
    }
}
