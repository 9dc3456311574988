use crate::tensor::{TensorError, Var};

use super::ModelError;

/// LSTM weights: input `in x 4h`, recurrent `h x 4h`, bias `1 x 4h`, gate
/// blocks ordered input, forget, cell, output.
#[derive(Clone, Copy)]
pub(crate) struct LstmWeights<'t> {
    pub w_x: Var<'t>,
    pub w_h: Var<'t>,
    pub b: Var<'t>,
}

/// One cell update given the precomputed input projection `x W_x`.
pub(crate) fn lstm_cell<'t>(
    x_proj: Var<'t>,
    h: Var<'t>,
    c: Var<'t>,
    w: &LstmWeights<'t>,
) -> Result<(Var<'t>, Var<'t>), TensorError> {
    let hidden = h.cols();
    let gates = x_proj.add(h.matmul(w.w_h)?)?.add_row(w.b)?;
    let i = gates.slice_cols(0, hidden)?.sigmoid();
    let f = gates.slice_cols(hidden, hidden)?.sigmoid();
    let g = gates.slice_cols(2 * hidden, hidden)?.tanh();
    let o = gates.slice_cols(3 * hidden, hidden)?.sigmoid();
    let c_next = f.mul(c)?.add(i.mul(g)?)?;
    let h_next = o.mul(c_next.tanh())?;
    Ok((h_next, c_next))
}

/// Runs one direction over a batch of sequences of possibly different
/// lengths; finished rows keep their last state. Returns final hidden
/// states, one row per sequence.
fn run_direction<'t>(
    table: Var<'t>,
    seqs: &[Vec<usize>],
    w: &LstmWeights<'t>,
    hidden: usize,
) -> Result<Var<'t>, ModelError> {
    let tape = table.tape();
    let n = seqs.len();
    let longest = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let zeros = crate::tensor::Tensor::zeros(&[n, hidden]);
    let mut h = tape.constant(zeros.clone());
    let mut c = tape.constant(zeros);
    for t in 0..longest {
        let active: Vec<bool> = seqs.iter().map(|s| t < s.len()).collect();
        let ids: Vec<usize> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(0)).collect();
        let x_proj = table.gather(&ids)?.matmul(w.w_x)?;
        let (h_new, c_new) = lstm_cell(x_proj, h, c, w)?;
        if active.iter().all(|&a| a) {
            h = h_new;
            c = c_new;
        } else {
            h = h_new.blend_rows(h, &active)?;
            c = c_new.blend_rows(c, &active)?;
        }
    }
    Ok(h)
}

/// Bidirectional LSTM over token sequences: for each sequence the final
/// forward state concatenated with the final backward state.
pub(crate) fn bilstm<'t>(
    table: Var<'t>,
    seqs: &[Vec<usize>],
    fwd: &LstmWeights<'t>,
    bwd: &LstmWeights<'t>,
    hidden: usize,
) -> Result<Var<'t>, ModelError> {
    if seqs.is_empty() || seqs.iter().any(Vec::is_empty) {
        return Err(ModelError::EmptySequence);
    }
    let reversed: Vec<Vec<usize>> = seqs.iter().map(|s| s.iter().rev().copied().collect()).collect();
    let hf = run_direction(table, seqs, fwd, hidden)?;
    let hb = run_direction(table, &reversed, bwd, hidden)?;
    Ok(Var::concat_cols(&[hf, hb])?)
}
