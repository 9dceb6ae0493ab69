//! 2-D convolution (im2col + GEMM), max pooling and batch normalization on
//! channels-last tensors `(B, H, W, C)`.

use std::sync::atomic::{AtomicBool, Ordering};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use super::graph::{Graph, Mode, StatUpdate, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding that preserves `(H, W)` (top/left get the smaller half).
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    h: usize,
    w: usize,
    ci: usize,
    kh: usize,
    kw: usize,
    co: usize,
    ho: usize,
    wo: usize,
    pad_top: usize,
    pad_left: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.kh * self.kw * self.ci
    }

    fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let k = self.patch();
        for oy in 0..self.ho {
            for ox in 0..self.wo {
                let row = &mut col[(oy * self.wo + ox) * k..(oy * self.wo + ox + 1) * k];
                for dy in 0..self.kh {
                    let iy = (oy + dy) as isize - self.pad_top as isize;
                    for dx in 0..self.kw {
                        let ix = (ox + dx) as isize - self.pad_left as isize;
                        let dst = &mut row[(dy * self.kw + dx) * self.ci..(dy * self.kw + dx + 1) * self.ci];
                        if iy < 0 || ix < 0 || iy as usize >= self.h || ix as usize >= self.w {
                            dst.fill(0.0);
                        } else {
                            let off = (iy as usize * self.w + ix as usize) * self.ci;
                            dst.copy_from_slice(&x[off..off + self.ci]);
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], dx: &mut [f64]) {
        let k = self.patch();
        for oy in 0..self.ho {
            for ox in 0..self.wo {
                let row = &col[(oy * self.wo + ox) * k..(oy * self.wo + ox + 1) * k];
                for ky in 0..self.kh {
                    let iy = (oy + ky) as isize - self.pad_top as isize;
                    if iy < 0 || iy as usize >= self.h {
                        continue;
                    }
                    for kx in 0..self.kw {
                        let ix = (ox + kx) as isize - self.pad_left as isize;
                        if ix < 0 || ix as usize >= self.w {
                            continue;
                        }
                        let off = (iy as usize * self.w + ix as usize) * self.ci;
                        let src = &row[(ky * self.kw + kx) * self.ci..(ky * self.kw + kx + 1) * self.ci];
                        for (d, s) in dx[off..off + self.ci].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// Output spatial size of a convolution, or `None` if the kernel does not fit.
pub fn conv_output_hw(h: usize, w: usize, kh: usize, kw: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Same => Some((h, w)),
        Padding::Valid if kh <= h && kw <= w => Some((h - kh + 1, w - kw + 1)),
        Padding::Valid => None,
    }
}

static BN_UNTRAINED_WARNED: AtomicBool = AtomicBool::new(false);

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

impl Graph<'_> {
    /// Cross-correlation of `x (B, H, W, Ci)` with `w (kh, kw, Ci, Co)` plus
    /// per-channel bias `b (Co)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, padding: Padding) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::shape(format!("conv2d input {xs:?}, filters {ws:?}")));
        }
        if xs[3] != ws[2] {
            return Err(Error::shape(format!(
                "conv2d channel mismatch: input has {}, filters expect {}",
                xs[3], ws[2]
            )));
        }
        if self.shape(b) != [ws[3]] {
            return Err(Error::shape(format!("conv2d bias {:?}", self.shape(b))));
        }
        let (ho, wo) = conv_output_hw(xs[1], xs[2], ws[0], ws[1], padding).ok_or_else(|| {
            Error::shape(format!("kernel {}x{} does not fit {:?}", ws[0], ws[1], xs))
        })?;
        let (pad_top, pad_left) = match padding {
            Padding::Same => ((ws[0] - 1) / 2, (ws[1] - 1) / 2),
            Padding::Valid => (0, 0),
        };
        let geom = ConvGeom {
            h: xs[1],
            w: xs[2],
            ci: xs[3],
            kh: ws[0],
            kw: ws[1],
            co: ws[3],
            ho,
            wo,
            pad_top,
            pad_left,
        };
        let batch = xs[0];
        let in_len = geom.h * geom.w * geom.ci;
        let out_len = ho * wo * geom.co;
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let outs: Vec<Vec<f64>> = (0..batch)
            .into_par_iter()
            .map(|i| {
                let mut col = vec![0.0; ho * wo * geom.patch()];
                geom.im2col(&xv[i * in_len..(i + 1) * in_len], &mut col);
                let mut out = vec![0.0; out_len];
                for px in out.chunks_mut(geom.co) {
                    px.copy_from_slice(bv);
                }
                gemm(ho * wo, geom.patch(), geom.co, &col, false, wv, false, 1.0, &mut out);
                out
            })
            .collect();
        let out = outs.concat();

        Ok(self.push(
            vec![batch, ho, wo, geom.co],
            out,
            &[x, w, b],
            Some(Box::new(move |vals, g, grads| {
                let (want_x, want_w) = (grads.wants(x), grads.wants(w));
                let xv = vals.get(x);
                let wv = vals.get(w);
                let k = geom.patch();
                let per_sample: Vec<(Vec<f64>, Vec<f64>)> = (0..batch)
                    .into_par_iter()
                    .map(|i| {
                        let gi = &g[i * out_len..(i + 1) * out_len];
                        let mut col = vec![0.0; ho * wo * k];
                        let mut dw = Vec::new();
                        if want_w {
                            geom.im2col(&xv[i * in_len..(i + 1) * in_len], &mut col);
                            dw = vec![0.0; k * geom.co];
                            gemm(k, ho * wo, geom.co, &col, true, gi, false, 0.0, &mut dw);
                        }
                        let mut dx = Vec::new();
                        if want_x {
                            gemm(ho * wo, geom.co, k, gi, false, wv, true, 0.0, &mut col);
                            dx = vec![0.0; in_len];
                            geom.col2im(&col, &mut dx);
                        }
                        (dw, dx)
                    })
                    .collect();
                if want_w {
                    let acc = grads.acc(w);
                    for (dw, _) in &per_sample {
                        for (a, v) in acc.iter_mut().zip(dw) {
                            *a += v;
                        }
                    }
                }
                if want_x {
                    let acc = grads.acc(x);
                    for (i, (_, dx)) in per_sample.iter().enumerate() {
                        for (a, v) in acc[i * in_len..(i + 1) * in_len].iter_mut().zip(dx) {
                            *a += v;
                        }
                    }
                }
                if grads.wants(b) {
                    let acc = grads.acc(b);
                    for px in g.chunks(geom.co) {
                        for (a, v) in acc.iter_mut().zip(px) {
                            *a += v;
                        }
                    }
                }
            })),
        ))
    }

    /// Non-overlapping max pooling with floor division of `(H, W)`. Ties go
    /// to the first position in row-major order.
    pub fn maxpool2d(&mut self, x: Var, ph: usize, pw: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(Error::shape(format!("maxpool2d expects 4-d input, got {xs:?}")));
        }
        if ph == 0 || pw == 0 || ph > xs[1] || pw > xs[2] {
            return Err(Error::shape(format!("pool {ph}x{pw} does not fit {xs:?}")));
        }
        let (batch, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
        let (ho, wo) = (h / ph, w / pw);
        let xv = self.value(x);
        let mut out = vec![0.0; batch * ho * wo * c];
        let mut arg = vec![0usize; out.len()];
        for bi in 0..batch {
            for oy in 0..ho {
                for ox in 0..wo {
                    for ch in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = usize::MAX;
                        for dy in 0..ph {
                            for dx in 0..pw {
                                let idx = ((bi * h + oy * ph + dy) * w + ox * pw + dx) * c + ch;
                                if best_idx == usize::MAX || xv[idx] > best {
                                    best = xv[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        let o = ((bi * ho + oy) * wo + ox) * c + ch;
                        out[o] = best;
                        arg[o] = best_idx;
                    }
                }
            }
        }
        Ok(self.push(
            vec![batch, ho, wo, c],
            out,
            &[x],
            Some(Box::new(move |_, g, grads| {
                let acc = grads.acc(x);
                for (o, &src) in arg.iter().enumerate() {
                    acc[src] += g[o];
                }
            })),
        ))
    }

    /// Per-channel normalization over all but the last axis. Train mode uses
    /// batch statistics and queues running-statistic updates; infer mode uses
    /// the running statistics stored in parameters `running_mean` / `running_var`.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: usize,
        running_var: usize,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let c = *xs.last().ok_or_else(|| Error::shape("batchnorm of a scalar"))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(format!("batchnorm scale/shift for {c} channels")));
        }
        let n = xs.iter().product::<usize>() / c.max(1);
        let xv = self.value(x);
        let (mean, var) = match self.mode() {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::invalid(
                        "train-mode batchnorm needs more than one value per channel",
                    ));
                }
                let mut mean = vec![0.0; c];
                for row in xv.chunks(c) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; c];
                for row in xv.chunks(c) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                (mean, var)
            }
            Mode::Infer => {
                let store = self.store();
                let mean = store.get(running_mean).tensor.data().to_vec();
                let var = store.get(running_var).tensor.data().to_vec();
                if mean.iter().all(|&m| m == 0.0)
                    && var.iter().all(|&v| v == 1.0)
                    && !BN_UNTRAINED_WARNED.swap(true, Ordering::Relaxed)
                {
                    warn!("batchnorm inference with initial running statistics (mean 0, var 1)");
                }
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (gv, bv) = (self.value(gamma).to_vec(), self.value(beta).to_vec());
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for ((xr, hr), or) in xv.chunks(c).zip(xhat.chunks_mut(c)).zip(out.chunks_mut(c)) {
            for j in 0..c {
                hr[j] = (xr[j] - mean[j]) * inv_std[j];
                or[j] = gv[j] * hr[j] + bv[j];
            }
        }
        let train = self.mode() == Mode::Train;
        if train {
            let store = self.store();
            let unbiased = n as f64 / (n as f64 - 1.0);
            let rm: Vec<f64> = store
                .get(running_mean)
                .tensor
                .data()
                .iter()
                .zip(&mean)
                .map(|(r, m)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * m)
                .collect();
            let rv: Vec<f64> = store
                .get(running_var)
                .tensor
                .data()
                .iter()
                .zip(&var)
                .map(|(r, v)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * v * unbiased)
                .collect();
            self.push_stat_update(StatUpdate {
                param: running_mean,
                values: rm,
            });
            self.push_stat_update(StatUpdate {
                param: running_var,
                values: rv,
            });
        }
        Ok(self.push(
            xs,
            out,
            &[x, gamma, beta],
            Some(Box::new(move |vals, g, grads| {
                let gv = vals.get(gamma).to_vec();
                if grads.wants(gamma) {
                    let acc = grads.acc(gamma);
                    for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            acc[j] += gr[j] * hr[j];
                        }
                    }
                }
                if grads.wants(beta) {
                    let acc = grads.acc(beta);
                    for gr in g.chunks(c) {
                        for j in 0..c {
                            acc[j] += gr[j];
                        }
                    }
                }
                if grads.wants(x) {
                    let acc = grads.acc(x);
                    if train {
                        let mut sum_d = vec![0.0; c];
                        let mut sum_dh = vec![0.0; c];
                        for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                            for j in 0..c {
                                let d = gr[j] * gv[j];
                                sum_d[j] += d;
                                sum_dh[j] += d * hr[j];
                            }
                        }
                        let nf = n as f64;
                        for ((ar, gr), hr) in acc.chunks_mut(c).zip(g.chunks(c)).zip(xhat.chunks(c)) {
                            for j in 0..c {
                                let d = gr[j] * gv[j];
                                ar[j] += inv_std[j] / nf * (nf * d - sum_d[j] - hr[j] * sum_dh[j]);
                            }
                        }
                    } else {
                        for (ar, gr) in acc.chunks_mut(c).zip(g.chunks(c)) {
                            for j in 0..c {
                                ar[j] += gr[j] * gv[j] * inv_std[j];
                            }
                        }
                    }
                }
            })),
        ))
    }
}
