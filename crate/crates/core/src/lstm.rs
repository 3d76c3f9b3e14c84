//! LSTM cell, sequence folding and backpropagation through time.
//!
//! Packed weights use gate order `[input, forget, cell-candidate, output]`,
//! each block `hidden` rows tall.

use rand::Rng;

use crate::dense::{glorot_fill, sigmoid};
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<F = f32> {
    /// `4H × input`
    pub w: Tensor<F>,
    /// `4H × H`
    pub u: Tensor<F>,
    /// `4H`
    pub b: Tensor<F>,
}

impl<F: Scalar> LstmParams<F> {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        LstmParams {
            w: Tensor::zeros(&[4 * hidden_size, input_size]),
            u: Tensor::zeros(&[4 * hidden_size, hidden_size]),
            b: Tensor::zeros(&[4 * hidden_size]),
        }
    }

    /// Glorot-uniform weights, forget-gate bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        glorot_fill(&mut p.w, input_size, 4 * hidden_size, rng);
        glorot_fill(&mut p.u, hidden_size, 4 * hidden_size, rng);
        p.b.data_mut()[hidden_size..2 * hidden_size].fill(F::one());
        p
    }

    pub fn input_size(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.u.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size(), self.hidden_size())
    }

    pub fn cast<G: Scalar>(&self) -> LstmParams<G> {
        LstmParams {
            w: self.w.cast(),
            u: self.u.cast(),
            b: self.b.cast(),
        }
    }
}

/// One recurrence step. `gates` receives the activated `[i, f, g, o]` values.
#[inline]
fn step_into<F: Scalar>(
    p: &LstmParams<F>,
    x: &[F],
    h: &[F],
    c: &[F],
    gates: &mut [F],
    h_out: &mut [F],
    c_out: &mut [F],
) {
    let hs = h.len();
    let bias = p.b.data();
    let input_is_zero = x.iter().all(|v| *v == F::zero());
    for r in 0..4 * hs {
        let mut z = dot(p.u.row(r), h) + bias[r];
        if !input_is_zero {
            z += dot(p.w.row(r), x);
        }
        gates[r] = if (2 * hs..3 * hs).contains(&r) {
            z.tanh()
        } else {
            sigmoid(z)
        };
    }
    let (i, rest) = gates.split_at(hs);
    let (f, rest) = rest.split_at(hs);
    let (g, o) = rest.split_at(hs);
    for k in 0..hs {
        let cn = f[k] * c[k] + i[k] * g[k];
        c_out[k] = cn;
        h_out[k] = o[k] * cn.tanh();
    }
}

fn check_state<F: Scalar>(p: &LstmParams<F>, x: &[F], h: &[F], c: &[F]) -> Result<()> {
    let hs = p.hidden_size();
    if x.len() != p.input_size() {
        return Err(Error::dim("lstm_step input", &[p.input_size()], &[x.len()]));
    }
    if h.len() != hs || c.len() != hs {
        return Err(Error::dim("lstm_step state", &[hs, hs], &[h.len(), c.len()]));
    }
    Ok(())
}

/// Single LSTM step: returns `(h', c')`.
pub fn lstm_step<F: Scalar>(
    x: &[F],
    h: &[F],
    c: &[F],
    p: &LstmParams<F>,
) -> Result<(Vec<F>, Vec<F>)> {
    check_state(p, x, h, c)?;
    let hs = p.hidden_size();
    let mut gates = vec![F::zero(); 4 * hs];
    let mut h_out = vec![F::zero(); hs];
    let mut c_out = vec![F::zero(); hs];
    step_into(p, x, h, c, &mut gates, &mut h_out, &mut c_out);
    Ok((h_out, c_out))
}

fn sequence_len<F: Scalar>(seq: &[F], p: &LstmParams<F>) -> Result<usize> {
    let input = p.input_size();
    if seq.is_empty() {
        return Err(Error::InvalidInput("empty sequence".into()));
    }
    if seq.len() % input != 0 {
        return Err(Error::dim("lstm_forward", &[input], &[seq.len()]));
    }
    Ok(seq.len() / input)
}

/// Runs the cell over a flattened `T × input` sequence from a zero state and
/// returns the final hidden state.
pub fn lstm_forward<F: Scalar>(seq: &[F], p: &LstmParams<F>) -> Result<Vec<F>> {
    let steps = sequence_len(seq, p)?;
    let hs = p.hidden_size();
    let input = p.input_size();
    let mut gates = vec![F::zero(); 4 * hs];
    let mut h = vec![F::zero(); hs];
    let mut c = vec![F::zero(); hs];
    let mut h_next = vec![F::zero(); hs];
    let mut c_next = vec![F::zero(); hs];
    for t in 0..steps {
        let x = &seq[t * input..(t + 1) * input];
        step_into(p, x, &h, &c, &mut gates, &mut h_next, &mut c_next);
        std::mem::swap(&mut h, &mut h_next);
        std::mem::swap(&mut c, &mut c_next);
    }
    Ok(h)
}

/// Activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmTrace<F> {
    steps: usize,
    hidden: usize,
    /// `T × 4H` activated gates.
    gates: Vec<F>,
    /// `(T+1) × H`, row 0 is the initial zero state.
    cells: Vec<F>,
    /// `(T+1) × H`, row 0 is the initial zero state.
    hiddens: Vec<F>,
}

impl<F: Scalar> LstmTrace<F> {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Hidden state after step `t` (1-based; `0` is the initial state).
    pub fn hidden(&self, t: usize) -> &[F] {
        &self.hiddens[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn last_hidden(&self) -> &[F] {
        self.hidden(self.steps)
    }

    /// All hidden outputs `h_1..h_T` flattened, the input of a stacked layer.
    pub fn outputs(&self) -> &[F] {
        &self.hiddens[self.hidden..]
    }
}

pub fn lstm_forward_trace<F: Scalar>(seq: &[F], p: &LstmParams<F>) -> Result<LstmTrace<F>> {
    let steps = sequence_len(seq, p)?;
    let hs = p.hidden_size();
    let input = p.input_size();
    let mut gates = vec![F::zero(); steps * 4 * hs];
    let mut cells = vec![F::zero(); (steps + 1) * hs];
    let mut hiddens = vec![F::zero(); (steps + 1) * hs];
    for t in 0..steps {
        let x = &seq[t * input..(t + 1) * input];
        let (c_prev, c_rest) = cells.split_at_mut((t + 1) * hs);
        let (h_prev, h_rest) = hiddens.split_at_mut((t + 1) * hs);
        step_into(
            p,
            x,
            &h_prev[t * hs..],
            &c_prev[t * hs..],
            &mut gates[t * 4 * hs..(t + 1) * 4 * hs],
            &mut h_rest[..hs],
            &mut c_rest[..hs],
        );
    }
    Ok(LstmTrace {
        steps,
        hidden: hs,
        gates,
        cells,
        hiddens,
    })
}

/// Backpropagation through time.
///
/// `dh` holds the loss gradient w.r.t. every output `h_1..h_T` (`T × H`).
/// Parameter gradients are accumulated into `grads`; when `dx` is given it
/// receives the gradient w.r.t. the input sequence.
pub fn lstm_backward<F: Scalar>(
    seq: &[F],
    trace: &LstmTrace<F>,
    p: &LstmParams<F>,
    dh: &[F],
    grads: &mut LstmParams<F>,
    mut dx: Option<&mut [F]>,
) {
    let hs = trace.hidden;
    let input = p.input_size();
    debug_assert_eq!(dh.len(), trace.steps * hs);
    let mut dh_next = vec![F::zero(); hs];
    let mut dc_next = vec![F::zero(); hs];
    let mut dz = vec![F::zero(); 4 * hs];
    let one = F::one();
    for t in (0..trace.steps).rev() {
        let gates = &trace.gates[t * 4 * hs..(t + 1) * 4 * hs];
        let c_prev = &trace.cells[t * hs..(t + 1) * hs];
        let c_cur = &trace.cells[(t + 1) * hs..(t + 2) * hs];
        for k in 0..hs {
            let (i, f, g, o) = (gates[k], gates[hs + k], gates[2 * hs + k], gates[3 * hs + k]);
            let tc = c_cur[k].tanh();
            let dhk = dh[t * hs + k] + dh_next[k];
            let d_o = dhk * tc;
            let dc = dc_next[k] + dhk * o * (one - tc * tc);
            dz[k] = dc * g * i * (one - i);
            dz[hs + k] = dc * c_prev[k] * f * (one - f);
            dz[2 * hs + k] = dc * i * (one - g * g);
            dz[3 * hs + k] = d_o * o * (one - o);
            dc_next[k] = dc * f;
        }
        let x = &seq[t * input..(t + 1) * input];
        let input_is_zero = x.iter().all(|v| *v == F::zero());
        let h_prev = &trace.hiddens[t * hs..(t + 1) * hs];
        dh_next.iter_mut().for_each(|v| *v = F::zero());
        if let Some(dx) = dx.as_deref_mut() {
            dx[t * input..(t + 1) * input]
                .iter_mut()
                .for_each(|v| *v = F::zero());
        }
        for (r, &g) in dz.iter().enumerate() {
            if !input_is_zero {
                axpy(g, x, &mut grads.w.data_mut()[r * input..(r + 1) * input]);
            }
            axpy(g, h_prev, &mut grads.u.data_mut()[r * hs..(r + 1) * hs]);
            grads.b.data_mut()[r] += g;
            axpy(g, p.u.row(r), &mut dh_next);
            if let Some(dx) = dx.as_deref_mut() {
                axpy(g, p.w.row(r), &mut dx[t * input..(t + 1) * input]);
            }
        }
    }
}
