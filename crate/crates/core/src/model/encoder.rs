use std::sync::Arc;

use crate::tensor::{TensorError, Var};

/// Residual graph convolution, one round per weight matrix:
/// `V <- V + relu(A V W)` with `A` given as directed weighted edges.
/// All rows are updated simultaneously from the previous round.
pub fn graph_convolution<'t>(
    nodes: Var<'t>,
    edges: &Arc<[(usize, usize, f64)]>,
    weights: &[Var<'t>],
) -> Result<Var<'t>, TensorError> {
    let mut v = nodes;
    for &w in weights {
        let message = v.propagate(Arc::clone(edges))?.matmul(w)?.relu();
        v = v.add(message)?;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn zero_weight_edges_are_identity() {
        let tape = Tape::new();
        let v = tape.constant(Tensor::matrix(3, 2, vec![1.0, -2.0, 0.5, 3.0, -1.5, 0.25]));
        let w = tape.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, -3.0, 4.0]));
        let edges: Arc<[(usize, usize, f64)]> = vec![(0, 1, 0.0), (1, 0, 0.0)].into();
        let out = graph_convolution(v, &edges, &[w]).unwrap();
        assert_eq!(out.value().data(), v.value().data());
    }
}
