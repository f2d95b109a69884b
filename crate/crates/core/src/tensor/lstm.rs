use super::{Real, Tape, Var};
use crate::error::{Error, Result};

/// Tape handles for one LSTM cell's parameters.
///
/// Gate blocks are stacked row-wise in the order input, forget, candidate,
/// output: `w_ih` is `4H × in`, `w_hh` is `4H × H`, `bias` is `1 × 4H`.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

/// One LSTM step over a batch: returns `(h', c')`.
pub fn lstm_cell<R: Real>(
    tape: &mut Tape<'_, R>,
    p: LstmVars,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var)> {
    let (four_h, _) = tape.dims(p.w_ih);
    let hidden = four_h / 4;
    let (hr, hc) = tape.dims(h);
    if hc != hidden || tape.dims(c) != (hr, hc) || tape.dims(p.w_hh) != (four_h, hidden) {
        return Err(Error::shape("lstm_cell", &[hr, hc], &[four_h, hidden]));
    }
    let from_x = tape.linear(x, p.w_ih, Some(p.bias))?;
    let from_h = tape.linear(h, p.w_hh, None)?;
    let gates = tape.add(from_x, from_h)?;

    let i = tape.slice_cols(gates, 0, hidden)?;
    let f = tape.slice_cols(gates, hidden, hidden)?;
    let g = tape.slice_cols(gates, 2 * hidden, hidden)?;
    let o = tape.slice_cols(gates, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);

    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}
