use crate::tensor::{Axis, Tensor, TensorError, Var};

/// Projection weights of one multi-head attention block, each `d x d`.
#[derive(Clone, Copy)]
pub struct Attention<'t> {
    pub wq: Var<'t>,
    pub wk: Var<'t>,
    pub wv: Var<'t>,
    pub wo: Var<'t>,
}

/// Additive mask hiding future positions: `-inf` strictly above the
/// diagonal.
pub fn causal_mask(n: usize) -> Tensor {
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            m.data_mut()[i * n + j] = f64::NEG_INFINITY;
        }
    }
    m
}

/// Scaled dot-product attention with `heads` heads over column blocks of
/// the projected queries, keys and values. Returns the projected output and
/// the attention weights averaged over heads (`queries x keys`).
pub fn multi_head_attention<'t>(
    queries: Var<'t>,
    memory: Var<'t>,
    p: &Attention<'t>,
    heads: usize,
    mask: Option<&Tensor>,
) -> Result<(Var<'t>, Tensor), TensorError> {
    let d = queries.cols();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(TensorError::InvalidArgument {
            op: "attention",
            msg: format!("width {d} not divisible into {heads} heads"),
        });
    }
    let dn = d / heads;
    let q = queries.matmul(p.wq)?;
    let k = memory.matmul(p.wk)?;
    let v = memory.matmul(p.wv)?;
    let scale = 1.0 / (dn as f64).sqrt();

    let mut outs = Vec::with_capacity(heads);
    let mut mean = Tensor::zeros(&[queries.rows(), memory.rows()]);
    for h in 0..heads {
        let qh = q.slice_cols(h * dn, dn)?;
        let kh = k.slice_cols(h * dn, dn)?;
        let vh = v.slice_cols(h * dn, dn)?;
        let mut scores = qh.matmul_t(kh)?.scale(scale);
        if let Some(m) = mask {
            scores = scores.add_const(m)?;
        }
        let weights = scores.softmax(Axis::Cols)?;
        for (acc, w) in mean.data_mut().iter_mut().zip(weights.value_ref().data()) {
            *acc += w / heads as f64;
        }
        outs.push(weights.matmul(vh)?);
    }
    let joined = if heads == 1 { outs[0] } else { Var::concat_cols(&outs)? };
    Ok((joined.matmul(p.wo)?, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn single_key_returns_its_value() {
        let tape = Tape::new();
        let eye = tape.constant(Tensor::identity(3));
        let p = Attention {
            wq: eye,
            wk: eye,
            wv: eye,
            wo: eye,
        };
        let row = tape.constant(Tensor::row_vector(vec![0.3, -1.0, 2.0]));
        let (out, w) = multi_head_attention(row, row, &p, 1, None).unwrap();
        assert_eq!(out.value().data(), &[0.3, -1.0, 2.0]);
        assert_eq!(w.data(), &[1.0]);
    }

    #[test]
    fn mask_blocks_future() {
        let m = causal_mask(3);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(0, 1), f64::NEG_INFINITY);
        assert_eq!(m.get(2, 1), 0.0);
    }
}
