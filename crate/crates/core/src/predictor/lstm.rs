//! Single-layer LSTM with a fully connected head, on a flat parameter
//! vector. Gate order everywhere is input, forget, output, candidate.

use rand::Rng;

use crate::rng::SimRng;

pub const GATES: usize = 4;

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub hidden: usize,
    pub n_out: usize,
}

impl Layout {
    pub fn new(hidden: usize, n_out: usize) -> Self {
        Layout { hidden, n_out }
    }
    /// Input map, `4H`.
    pub fn w_x(&self) -> usize {
        0
    }
    /// Recurrent map, `4H × H` row-major.
    pub fn w_h(&self) -> usize {
        GATES * self.hidden
    }
    pub fn bias(&self) -> usize {
        self.w_h() + GATES * self.hidden * self.hidden
    }
    /// FC map, `N × H` row-major.
    pub fn fc_w(&self) -> usize {
        self.bias() + GATES * self.hidden
    }
    pub fn fc_b(&self) -> usize {
        self.fc_w() + self.n_out * self.hidden
    }
    pub fn len(&self) -> usize {
        self.fc_b() + self.n_out
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Uniform ±1/√H for every map, zero biases except the forget gate at +1.
pub fn init_params(layout: Layout, rng: &mut SimRng) -> Vec<f64> {
    let h = layout.hidden;
    let bound = 1.0 / (h as f64).sqrt();
    let mut p: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-bound..bound)).collect();
    for v in &mut p[layout.bias()..layout.fc_w()] {
        *v = 0.0;
    }
    for v in &mut p[layout.bias() + h..layout.bias() + 2 * h] {
        *v = 1.0;
    }
    for v in &mut p[layout.fc_b()..] {
        *v = 0.0;
    }
    p
}

/// Per-step activations kept for the backward pass.
#[derive(Default)]
pub struct Tape {
    gates: Vec<f64>,
    cells: Vec<f64>,
    hiddens: Vec<f64>,
}

/// Run the recurrence on normalized inputs and write the N normalized
/// outputs. The tape is filled when provided.
pub fn forward(p: &[f64], l: Layout, x: &[f64], out: &mut [f64], tape: Option<&mut Tape>) {
    let h = l.hidden;
    let steps = x.len();
    let mut local = Tape::default();
    let tape = tape.unwrap_or(&mut local);
    tape.gates.clear();
    tape.gates.resize(steps * GATES * h, 0.0);
    tape.cells.clear();
    tape.cells.resize((steps + 1) * h, 0.0);
    tape.hiddens.clear();
    tape.hiddens.resize((steps + 1) * h, 0.0);

    let (w_x, w_h, b) = (&p[l.w_x()..l.w_h()], &p[l.w_h()..l.bias()], &p[l.bias()..l.fc_w()]);
    for t in 0..steps {
        let (prev, rest) = tape.hiddens.split_at_mut((t + 1) * h);
        let h_prev = &prev[t * h..];
        let z = &mut tape.gates[t * GATES * h..(t + 1) * GATES * h];
        for r in 0..GATES * h {
            let row = &w_h[r * h..(r + 1) * h];
            let mut acc = b[r] + w_x[r] * x[t];
            for k in 0..h {
                acc += row[k] * h_prev[k];
            }
            z[r] = if r < 3 * h { sigmoid(acc) } else { acc.tanh() };
        }
        let (c_prev_all, c_next_all) = tape.cells.split_at_mut((t + 1) * h);
        let c_prev = &c_prev_all[t * h..];
        let c_next = &mut c_next_all[..h];
        let h_next = &mut rest[..h];
        for k in 0..h {
            let (i, f, o, g) = (z[k], z[h + k], z[2 * h + k], z[3 * h + k]);
            c_next[k] = f * c_prev[k] + i * g;
            h_next[k] = o * c_next[k].tanh();
        }
    }
    let h_last = &tape.hiddens[steps * h..];
    let fc_w = &p[l.fc_w()..l.fc_b()];
    let fc_b = &p[l.fc_b()..];
    for (j, o) in out.iter_mut().enumerate() {
        let row = &fc_w[j * h..(j + 1) * h];
        *o = fc_b[j] + row.iter().zip(h_last).map(|(w, v)| w * v).sum::<f64>();
    }
}

/// Accumulate into `grad` the gradient of `Σ dout·out` for one sequence,
/// using the tape from the matching forward call.
pub fn backward(p: &[f64], l: Layout, x: &[f64], tape: &Tape, dout: &[f64], grad: &mut [f64]) {
    let h = l.hidden;
    let steps = x.len();
    let h_last = &tape.hiddens[steps * h..];
    let mut dh = vec![0.0; h];
    {
        let fc_w = &p[l.fc_w()..l.fc_b()];
        let (g_rest, g_fc_b) = grad.split_at_mut(l.fc_b());
        let g_fc_w = &mut g_rest[l.fc_w()..];
        for (j, &d) in dout.iter().enumerate() {
            g_fc_b[j] += d;
            for k in 0..h {
                g_fc_w[j * h + k] += d * h_last[k];
                dh[k] += d * fc_w[j * h + k];
            }
        }
    }
    let w_h = &p[l.w_h()..l.bias()];
    let mut dc = vec![0.0; h];
    let mut dz = vec![0.0; GATES * h];
    for t in (0..steps).rev() {
        let z = &tape.gates[t * GATES * h..(t + 1) * GATES * h];
        let c_prev = &tape.cells[t * h..(t + 1) * h];
        let c_t = &tape.cells[(t + 1) * h..(t + 2) * h];
        let h_prev = &tape.hiddens[t * h..(t + 1) * h];
        for k in 0..h {
            let (i, f, o, g) = (z[k], z[h + k], z[2 * h + k], z[3 * h + k]);
            let tc = c_t[k].tanh();
            dc[k] += dh[k] * o * (1.0 - tc * tc);
            dz[k] = dc[k] * g * i * (1.0 - i);
            dz[h + k] = dc[k] * c_prev[k] * f * (1.0 - f);
            dz[2 * h + k] = dh[k] * tc * o * (1.0 - o);
            dz[3 * h + k] = dc[k] * i * (1.0 - g * g);
            dc[k] *= f;
        }
        for v in dh.iter_mut() {
            *v = 0.0;
        }
        for r in 0..GATES * h {
            let d = dz[r];
            grad[l.w_x() + r] += d * x[t];
            grad[l.bias() + r] += d;
            let row = l.w_h() + r * h;
            for k in 0..h {
                grad[row + k] += d * h_prev[k];
                dh[k] += d * w_h[r * h + k];
            }
        }
    }
}
