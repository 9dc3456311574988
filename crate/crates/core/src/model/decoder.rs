use crate::tensor::Tensor;

/// Fixed sinusoidal position embeddings for positions
/// `start..start + n`: `sin(p / 10000^(2i/d))` in even columns and the
/// matching cosine in odd columns.
pub fn sinusoidal_positions(start: usize, n: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, d]);
    for r in 0..n {
        let p = (start + r) as f64;
        for i in (0..d).step_by(2) {
            let angle = p / 10000f64.powf(i as f64 / d as f64);
            t.data_mut()[r * d + i] = angle.sin();
            if i + 1 < d {
                t.data_mut()[r * d + i + 1] = angle.cos();
            }
        }
    }
    t
}

/// Per-layer `(h, c)` of the LSTM decoder; empty means all zeros.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LstmState {
    pub layers: Vec<(Tensor, Tensor)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_alternates_zero_one() {
        let t = sinusoidal_positions(0, 1, 4);
        assert_eq!(t.data(), &[0.0, 1.0, 0.0, 1.0]);
        let t = sinusoidal_positions(3, 2, 4);
        assert_eq!(t.row(0), sinusoidal_positions(0, 5, 4).row(3));
    }
}
