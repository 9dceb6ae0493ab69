//! Single-direction LSTM over `(B, T, D)` with gates packed `[i, f, g, o]`.

use super::gemm::gemm;
use super::graph::{Graph, Var};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Graph<'_> {
    /// Runs an LSTM over `x (B, T, D)` with input kernel `wx (D, 4H)`,
    /// recurrent kernel `wh (H, 4H)` and bias `b (4H)`. With `reverse`, steps
    /// are consumed from `T - 1` down to `0`; output step `t` is always the
    /// state after reading input `t`. Returns `(B, T, H)`.
    pub fn lstm(&mut self, x: Var, wx: Var, wh: Var, b: Var, reverse: bool) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let whs = self.shape(wh).to_vec();
        if xs.len() != 3 || whs.len() != 2 {
            return Err(Error::shape(format!("lstm input {xs:?}, recurrent {whs:?}")));
        }
        let (batch, steps, d) = (xs[0], xs[1], xs[2]);
        let hdim = whs[0];
        let g4 = 4 * hdim;
        if steps == 0 {
            return Err(Error::shape("lstm needs at least one step"));
        }
        if self.shape(wx) != [d, g4] || whs[1] != g4 || self.shape(b) != [g4] {
            return Err(Error::shape(format!(
                "lstm params {:?}/{:?}/{:?} do not match input width {d}",
                self.shape(wx),
                whs,
                self.shape(b)
            )));
        }
        // Pre-activations from the input: (B*T, 4H).
        let mut xw = vec![0.0; batch * steps * g4];
        {
            let bv = self.value(b);
            for row in xw.chunks_mut(g4) {
                row.copy_from_slice(bv);
            }
        }
        gemm(batch * steps, d, g4, self.value(x), false, self.value(wx), false, 1.0, &mut xw);

        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        // Post-activation gates, cell states and outputs, indexed (b, t).
        let mut gates = vec![0.0; batch * steps * g4];
        let mut cells = vec![0.0; batch * steps * hdim];
        let mut hs = vec![0.0; batch * steps * hdim];
        let mut h_prev = vec![0.0; batch * hdim];
        let mut c_prev = vec![0.0; batch * hdim];
        let mut z = vec![0.0; batch * g4];
        let whv = self.value(wh).to_vec();
        for &t in &order {
            for bi in 0..batch {
                z[bi * g4..(bi + 1) * g4].copy_from_slice(&xw[(bi * steps + t) * g4..(bi * steps + t + 1) * g4]);
            }
            gemm(batch, hdim, g4, &h_prev, false, &whv, false, 1.0, &mut z);
            for bi in 0..batch {
                let zr = &z[bi * g4..(bi + 1) * g4];
                let gate = &mut gates[(bi * steps + t) * g4..(bi * steps + t + 1) * g4];
                for j in 0..hdim {
                    let i_g = sigmoid(zr[j]);
                    let f_g = sigmoid(zr[hdim + j]);
                    let c_g = zr[2 * hdim + j].tanh();
                    let o_g = sigmoid(zr[3 * hdim + j]);
                    gate[j] = i_g;
                    gate[hdim + j] = f_g;
                    gate[2 * hdim + j] = c_g;
                    gate[3 * hdim + j] = o_g;
                    let c = f_g * c_prev[bi * hdim + j] + i_g * c_g;
                    let h = o_g * c.tanh();
                    cells[(bi * steps + t) * hdim + j] = c;
                    hs[(bi * steps + t) * hdim + j] = h;
                    c_prev[bi * hdim + j] = c;
                    h_prev[bi * hdim + j] = h;
                }
            }
        }
        let out = hs.clone();
        Ok(self.push(
            vec![batch, steps, hdim],
            out,
            &[x, wx, wh, b],
            Some(Box::new(move |vals, g, grads| {
                let whv = vals.get(wh);
                let mut dz_all = vec![0.0; batch * steps * g4];
                let mut dh_next = vec![0.0; batch * hdim];
                let mut dc_next = vec![0.0; batch * hdim];
                let mut dwh = vec![0.0; hdim * g4];
                let mut dz = vec![0.0; batch * g4];
                let mut h_before = vec![0.0; batch * hdim];
                for (pos, &t) in order.iter().enumerate().rev() {
                    let prev_t = if pos > 0 { Some(order[pos - 1]) } else { None };
                    for bi in 0..batch {
                        let gate = &gates[(bi * steps + t) * g4..(bi * steps + t + 1) * g4];
                        for j in 0..hdim {
                            let idx = (bi * steps + t) * hdim + j;
                            let c = cells[idx];
                            let tc = c.tanh();
                            let (i_g, f_g, c_g, o_g) =
                                (gate[j], gate[hdim + j], gate[2 * hdim + j], gate[3 * hdim + j]);
                            let c_before = prev_t.map_or(0.0, |p| cells[(bi * steps + p) * hdim + j]);
                            let dh = g[idx] + dh_next[bi * hdim + j];
                            let d_o = dh * tc;
                            let dc = dh * o_g * (1.0 - tc * tc) + dc_next[bi * hdim + j];
                            let d_i = dc * c_g;
                            let d_c = dc * i_g;
                            let d_f = dc * c_before;
                            dc_next[bi * hdim + j] = dc * f_g;
                            let dzr = &mut dz[bi * g4..(bi + 1) * g4];
                            dzr[j] = d_i * i_g * (1.0 - i_g);
                            dzr[hdim + j] = d_f * f_g * (1.0 - f_g);
                            dzr[2 * hdim + j] = d_c * (1.0 - c_g * c_g);
                            dzr[3 * hdim + j] = d_o * o_g * (1.0 - o_g);
                            h_before[bi * hdim + j] = prev_t.map_or(0.0, |p| hs[(bi * steps + p) * hdim + j]);
                        }
                        dz_all[(bi * steps + t) * g4..(bi * steps + t + 1) * g4]
                            .copy_from_slice(&dz[bi * g4..(bi + 1) * g4]);
                    }
                    // dWh += h_{prev}^T dz ; dh_prev = dz Wh^T
                    gemm(hdim, batch, g4, &h_before, true, &dz, false, 1.0, &mut dwh);
                    gemm(batch, g4, hdim, &dz, false, whv, true, 0.0, &mut dh_next);
                }
                if grads.wants(wh) {
                    for (a, v) in grads.acc(wh).iter_mut().zip(&dwh) {
                        *a += v;
                    }
                }
                if grads.wants(b) {
                    let acc = grads.acc(b);
                    for row in dz_all.chunks(g4) {
                        for (a, v) in acc.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                }
                if grads.wants(wx) {
                    let xv = vals.get(x);
                    gemm(d, batch * steps, g4, xv, true, &dz_all, false, 1.0, grads.acc(wx));
                }
                if grads.wants(x) {
                    let wxv = vals.get(wx);
                    gemm(batch * steps, g4, d, &dz_all, false, wxv, true, 1.0, grads.acc(x));
                }
            })),
        ))
    }
}
