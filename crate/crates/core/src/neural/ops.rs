//! Elementwise, dense, reduction and loss ops.

use rand::Rng;

use super::gemm::gemm;
use super::graph::{Graph, Mode, Var};
use crate::error::{Error, Result};

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}

impl Graph<'_> {
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != numel(self.shape(x)) {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(x)
            )));
        }
        let data = self.value(x).to_vec();
        Ok(self.push(
            shape,
            data,
            &[x],
            Some(Box::new(move |_, g, grads| grads.add(x, g))),
        ))
    }

    /// `x (..., k) @ w (k, n) -> (..., n)`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || xs.last() != Some(&ws[0]) {
            return Err(Error::shape(format!("matmul {xs:?} @ {ws:?}")));
        }
        let (k, n) = (ws[0], ws[1]);
        let m = numel(&xs) / k;
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(x), false, self.value(w), false, 0.0, &mut out);
        let mut shape = xs;
        *shape.last_mut().unwrap() = n;
        Ok(self.push(
            shape,
            out,
            &[x, w],
            Some(Box::new(move |vals, g, grads| {
                if grads.wants(x) {
                    // dx = g @ w^T
                    let wv = vals.get(w);
                    gemm(m, n, k, g, false, wv, true, 1.0, grads.acc(x));
                }
                if grads.wants(w) {
                    // dw = x^T @ g
                    let xv = vals.get(x);
                    gemm(k, m, n, xv, true, g, false, 1.0, grads.acc(w));
                }
            })),
        ))
    }

    /// Adds `b (n)` along the last axis of `x (..., n)`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let n = *xs.last().unwrap_or(&0);
        if self.shape(b) != [n] {
            return Err(Error::shape(format!(
                "bias {:?} does not match {xs:?}",
                self.shape(b)
            )));
        }
        let bv = self.value(b).to_vec();
        let out: Vec<f64> = self
            .value(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(&bv).map(|(a, c)| a + c))
            .collect();
        Ok(self.push(
            xs,
            out,
            &[x, b],
            Some(Box::new(move |_, g, grads| {
                grads.add(x, g);
                if grads.wants(b) {
                    let acc = grads.acc(b);
                    for row in g.chunks(n) {
                        for (a, v) in acc.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                }
            })),
        ))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let h = self.matmul(x, w)?;
        self.add_bias(h, b)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, df_from_out: fn(f64) -> f64) -> Var {
        let shape = self.shape(x).to_vec();
        let out: Vec<f64> = self.value(x).iter().map(|&v| f(v)).collect();
        let saved = if self.requires_grad(x) {
            out.clone()
        } else {
            Vec::new()
        };
        self.push(
            shape,
            out,
            &[x],
            Some(Box::new(move |_, g, grads| {
                let acc = grads.acc(x);
                for ((a, gv), y) in acc.iter_mut().zip(g).zip(&saved) {
                    *a += gv * df_from_out(*y);
                }
            })),
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), |y| if y > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, |y| 1.0 - y * y)
    }

    /// Inverted dropout; identity in inference mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        if self.mode() == Mode::Infer || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let n = numel(self.shape(x));
        let mask: Vec<f64> = {
            let rng = self.rng();
            (0..n)
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        };
        let shape = self.shape(x).to_vec();
        let out: Vec<f64> = self.value(x).iter().zip(&mask).map(|(a, m)| a * m).collect();
        self.push(
            shape,
            out,
            &[x],
            Some(Box::new(move |_, g, grads| {
                let acc = grads.acc(x);
                for ((a, gv), m) in acc.iter_mut().zip(g).zip(&mask) {
                    *a += gv * m;
                }
            })),
        )
    }

    /// Concatenates along the last axis; leading dims must agree.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self
            .shape(*xs.first().ok_or_else(|| Error::shape("concat of nothing"))?)
            .to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != first.len() || &s[..s.len() - 1] != lead {
                return Err(Error::shape(format!("concat {first:?} with {s:?}")));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows = numel(lead);
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for (&x, &w) in xs.iter().zip(&widths) {
            let v = self.value(x);
            for r in 0..rows {
                out[r * total + offset..r * total + offset + w].copy_from_slice(&v[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let parts: Vec<Var> = xs.to_vec();
        Ok(self.push(
            shape,
            out,
            xs,
            Some(Box::new(move |_, g, grads| {
                let mut offset = 0;
                for (&x, &w) in parts.iter().zip(&widths) {
                    if grads.wants(x) {
                        let acc = grads.acc(x);
                        for r in 0..rows {
                            for (a, v) in acc[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(&g[r * total + offset..r * total + offset + w])
                            {
                                *a += v;
                            }
                        }
                    }
                    offset += w;
                }
            })),
        ))
    }

    /// Softmax along the last axis.
    pub fn softmax_last(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().unwrap();
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let saved = out.clone();
        self.push(
            shape,
            out,
            &[x],
            Some(Box::new(move |_, g, grads| {
                let acc = grads.acc(x);
                for ((a, gy), y) in acc.chunks_mut(n).zip(g.chunks(n)).zip(saved.chunks(n)) {
                    let dot: f64 = gy.iter().zip(y).map(|(p, q)| p * q).sum();
                    for i in 0..n {
                        a[i] += y[i] * (gy[i] - dot);
                    }
                }
            })),
        )
    }

    /// `x (B, T, F)` at step `t` -> `(B, F)`.
    pub fn select_step(&mut self, x: Var, t: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || t >= s[1] {
            return Err(Error::shape(format!("select step {t} of {s:?}")));
        }
        let (b, steps, f) = (s[0], s[1], s[2]);
        let v = self.value(x);
        let mut out = vec![0.0; b * f];
        for i in 0..b {
            out[i * f..(i + 1) * f].copy_from_slice(&v[(i * steps + t) * f..(i * steps + t + 1) * f]);
        }
        Ok(self.push(
            vec![b, f],
            out,
            &[x],
            Some(Box::new(move |_, g, grads| {
                let acc = grads.acc(x);
                for i in 0..b {
                    for (a, v) in acc[(i * steps + t) * f..(i * steps + t + 1) * f]
                        .iter_mut()
                        .zip(&g[i * f..(i + 1) * f])
                    {
                        *a += v;
                    }
                }
            })),
        ))
    }

    /// `sum_t alpha[b, t] * h[b, t, :]` for `alpha (B, T)`, `h (B, T, F)`.
    pub fn weighted_sum_steps(&mut self, alpha: Var, h: Var) -> Result<Var> {
        let hs = self.shape(h).to_vec();
        if hs.len() != 3 || self.shape(alpha) != [hs[0], hs[1]] {
            return Err(Error::shape(format!(
                "weights {:?} vs states {hs:?}",
                self.shape(alpha)
            )));
        }
        let (b, steps, f) = (hs[0], hs[1], hs[2]);
        let (av, hv) = (self.value(alpha), self.value(h));
        let mut out = vec![0.0; b * f];
        for i in 0..b {
            let o = &mut out[i * f..(i + 1) * f];
            for t in 0..steps {
                let w = av[i * steps + t];
                for (dst, src) in o.iter_mut().zip(&hv[(i * steps + t) * f..(i * steps + t + 1) * f]) {
                    *dst += w * src;
                }
            }
        }
        Ok(self.push(
            vec![b, f],
            out,
            &[alpha, h],
            Some(Box::new(move |vals, g, grads| {
                if grads.wants(alpha) {
                    let hv = vals.get(h).to_vec();
                    let acc = grads.acc(alpha);
                    for i in 0..b {
                        let gi = &g[i * f..(i + 1) * f];
                        for t in 0..steps {
                            let row = &hv[(i * steps + t) * f..(i * steps + t + 1) * f];
                            acc[i * steps + t] += row.iter().zip(gi).map(|(p, q)| p * q).sum::<f64>();
                        }
                    }
                }
                if grads.wants(h) {
                    let av = vals.get(alpha).to_vec();
                    let acc = grads.acc(h);
                    for i in 0..b {
                        let gi = &g[i * f..(i + 1) * f];
                        for t in 0..steps {
                            let w = av[i * steps + t];
                            for (a, q) in acc[(i * steps + t) * f..(i * steps + t + 1) * f]
                                .iter_mut()
                                .zip(gi)
                            {
                                *a += w * q;
                            }
                        }
                    }
                }
            })),
        ))
    }

    /// Mean over the batch of `-w[y] * log softmax(logits)[y]`.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        class_weights: &[f64],
    ) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::shape(format!(
                "logits {s:?} for {} labels",
                labels.len()
            )));
        }
        let (b, k) = (s[0], s[1]);
        if class_weights.len() != k {
            return Err(Error::shape(format!(
                "{} class weights for {k} classes",
                class_weights.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::invalid(format!("label {bad} out of range 0..{k}")));
        }
        if class_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("class weights must be positive"));
        }
        let mut probs = self.value(logits).to_vec();
        let mut loss = 0.0;
        for (i, row) in probs.chunks_mut(k).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += class_weights[labels[i]] * (lse - row[labels[i]]);
            softmax_in_place(row);
        }
        loss /= b as f64;
        let labels = labels.to_vec();
        let weights: Vec<f64> = labels.iter().map(|&y| class_weights[y]).collect();
        Ok(self.push(
            vec![1],
            vec![loss],
            &[logits],
            Some(Box::new(move |_, g, grads| {
                let scale = g[0] / b as f64;
                let acc = grads.acc(logits);
                for i in 0..b {
                    for j in 0..k {
                        let onehot = if j == labels[i] { 1.0 } else { 0.0 };
                        acc[i * k + j] += scale * weights[i] * (probs[i * k + j] - onehot);
                    }
                }
            })),
        ))
    }
}

/// Single-example weighted cross-entropy, `-w[label] * ln softmax(logits)[label]`.
pub fn weighted_cross_entropy(logits: &[f64], label: usize, class_weights: &[f64]) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range 0..{}",
            logits.len()
        )));
    }
    if class_weights.len() != logits.len() || class_weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::invalid("class weights must be positive, one per class"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(class_weights[label] * (lse - logits[label]))
}
