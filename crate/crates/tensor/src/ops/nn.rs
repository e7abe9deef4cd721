use rand::Rng;

use super::matmul::gemm;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Standard normal CDF via `erf`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu_scalar(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// Number of parameter groups when `param` is `[d]` (one group) or
/// `[groups, d]` matched against the leading axis of `x`.
pub(crate) fn param_groups(x: &Tensor, param: &Tensor, d: usize) -> Option<usize> {
    match *param.shape() {
        [n] if n == d => Some(1),
        [g, n] if n == d && x.rank() >= 2 && x.shape()[0] == g => Some(g),
        _ => None,
    }
}

impl Graph {
    pub fn gelu(&self, x: Var) -> Var {
        let xv = self.value(x);
        let out: Vec<f64> = xv.data().iter().map(|&v| gelu_scalar(v)).collect();
        let out = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push(out, &[x], move || {
            Box::new(move |g: &Tensor| {
                let d = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| gv * (normal_cdf(v) + v * normal_pdf(v)))
                    .collect();
                vec![Some(Tensor::from_parts(xv.shape().to_vec(), d))]
            })
        })
    }

    /// Softmax over the trailing axis, shifted by the row max.
    pub fn softmax_last(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.last_dim();
        if xv.rank() == 0 || n == 0 {
            return Err(TensorError::EmptyAxis { op: "softmax" });
        }
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n) {
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
        let y = std::sync::Arc::new(Tensor::from_parts(xv.shape().to_vec(), out));
        let y_out = (*y).clone();
        Ok(self.push(y_out, &[x], move || {
            Box::new(move |g: &Tensor| {
                let mut dx = Vec::with_capacity(g.numel());
                for (yr, gr) in y.data().chunks(n).zip(g.data().chunks(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    dx.extend(yr.iter().zip(gr).map(|(yv, gv)| yv * (gv - dot)));
                }
                vec![Some(Tensor::from_parts(y.shape().to_vec(), dx))]
            })
        }))
    }

    /// Normalizes the trailing axis to zero mean and unit variance, then
    /// applies `gamma`/`beta`.
    pub fn layer_norm(&self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let d = xv.last_dim();
        if xv.rank() == 0 || d == 0 {
            return Err(TensorError::EmptyAxis { op: "layer_norm" });
        }
        let groups = param_groups(&xv, &gv, d)
            .filter(|&g| bv.shape() == gv.shape() && g > 0)
            .ok_or_else(|| TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: xv.shape().to_vec(),
                rhs: gv.shape().to_vec(),
            })?;
        let rows = xv.numel() / d;
        let rows_per_group = rows / groups;
        let mut xhat = Vec::with_capacity(xv.numel());
        let mut inv_std = Vec::with_capacity(rows);
        for row in xv.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            xhat.extend(row.iter().map(|v| (v - mean) * is));
        }
        let mut out = xhat.clone();
        for (r, row) in out.chunks_mut(d).enumerate() {
            let p = (r / rows_per_group) * d;
            for ((o, g), b) in row
                .iter_mut()
                .zip(&gv.data()[p..p + d])
                .zip(&bv.data()[p..p + d])
            {
                *o = *o * g + b;
            }
        }
        let shape = xv.shape().to_vec();
        Ok(self.push(
            Tensor::from_parts(shape.clone(), out),
            &[x, gamma, beta],
            move || {
                Box::new(move |g: &Tensor| {
                    let mut dx = Vec::with_capacity(g.numel());
                    let mut dgamma = vec![0.0; groups * d];
                    let mut dbeta = vec![0.0; groups * d];
                    let mut dxhat = vec![0.0; d];
                    let rows = g.data().chunks(d).zip(xhat.chunks(d)).zip(&inv_std);
                    for (r, ((gr, xr), &is)) in rows.enumerate() {
                        let p = (r / rows_per_group) * d;
                        for j in 0..d {
                            dgamma[p + j] += gr[j] * xr[j];
                            dbeta[p + j] += gr[j];
                            dxhat[j] = gr[j] * gv.data()[p + j];
                        }
                        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
                        let mean_dxhat_xhat =
                            dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        dx.extend(
                            (0..d).map(|j| is * (dxhat[j] - mean_dxhat - xr[j] * mean_dxhat_xhat)),
                        );
                    }
                    vec![
                        Some(Tensor::from_parts(shape, dx)),
                        Some(Tensor::from_parts(gv.shape().to_vec(), dgamma)),
                        Some(Tensor::from_parts(gv.shape().to_vec(), dbeta)),
                    ]
                })
            },
        ))
    }

    /// Inverted dropout. Identity when `p == 0` or outside training.
    pub fn dropout<R: Rng + ?Sized>(
        &self,
        x: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Config(format!(
                "dropout rate {p} outside [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let xv = self.value(x);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..xv.numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let shape = xv.shape().to_vec();
        Ok(
            self.push(Tensor::from_parts(shape.clone(), out), &[x], move || {
                Box::new(move |g: &Tensor| {
                    let d = g.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
                    vec![Some(Tensor::from_parts(shape, d))]
                })
            }),
        )
    }

    /// Gathers rows of `table: [k, d]`; the result has shape `[lead.., d]`.
    /// `name` identifies the lookup in range errors.
    pub fn embedding(
        &self,
        table: Var,
        indices: &[usize],
        lead: &[usize],
        name: &str,
    ) -> Result<Var> {
        let tv = self.value(table);
        if tv.rank() != 2 {
            return Err(TensorError::InvalidShape {
                op: "embedding",
                shape: tv.shape().to_vec(),
                reason: "table must be [rows, dim]".into(),
            });
        }
        let (rows, d) = (tv.shape()[0], tv.shape()[1]);
        if lead.iter().product::<usize>() != indices.len() {
            return Err(TensorError::InvalidShape {
                op: "embedding",
                shape: lead.to_vec(),
                reason: format!("{} indices", indices.len()),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(TensorError::IndexOutOfRange {
                name: name.to_string(),
                index: bad,
                rows,
            });
        }
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(&tv.data()[i * d..(i + 1) * d]);
        }
        let mut shape = lead.to_vec();
        shape.push(d);
        let indices = indices.to_vec();
        let table_shape = tv.shape().to_vec();
        Ok(
            self.push(Tensor::from_parts(shape, out), &[table], move || {
                Box::new(move |g: &Tensor| {
                    let mut gt = vec![0.0; rows * d];
                    for (r, &i) in g.data().chunks(d).zip(&indices) {
                        for (acc, v) in gt[i * d..(i + 1) * d].iter_mut().zip(r) {
                            *acc += *v;
                        }
                    }
                    vec![Some(Tensor::from_parts(table_shape, gt))]
                })
            }),
        )
    }

    /// Causal kernel-3 convolution over `x: [batch, time, d_in]`.
    ///
    /// `weight: [3, d_in, d_out]`; tap 2 reads step `t`, tap 1 reads `t-1`,
    /// tap 0 reads `t-2`, with zeros before the first step.
    ///
    /// A grouped form takes `x: [groups, batch, time, d_in]`,
    /// `weight: [groups, 3, d_in, d_out]` and `bias: [groups, d_out]`, running
    /// each group with its own kernel.
    pub fn conv1d_k3(&self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        let mismatch = || TensorError::ShapeMismatch {
            op: "conv1d_k3",
            lhs: xv.shape().to_vec(),
            rhs: wv.shape().to_vec(),
        };
        let (groups, batch, time, din) = match *xv.shape() {
            [b, t, d] if wv.rank() == 3 && bv.rank() == 1 => (1, b, t, d),
            [g, b, t, d] if wv.rank() == 4 && bv.rank() == 2 => (g, b, t, d),
            _ => {
                return Err(TensorError::InvalidShape {
                    op: "conv1d_k3",
                    shape: xv.shape().to_vec(),
                    reason: "input must be [batch, time, channels] or grouped".into(),
                })
            }
        };
        if time == 0 {
            return Err(TensorError::EmptySequence { op: "conv1d_k3" });
        }
        let wshape = &wv.shape()[wv.rank() - 3..];
        if wshape[0] != 3 || wshape[1] != din || (wv.rank() == 4 && wv.shape()[0] != groups) {
            return Err(mismatch());
        }
        let dout = wshape[2];
        if bv.shape()[bv.rank() - 1] != dout || (bv.rank() == 2 && bv.shape()[0] != groups) {
            return Err(mismatch());
        }
        let geo = ConvGeometry {
            batch,
            time,
            din,
            dout,
        };
        let (xn, wn) = (geo.x_len(), geo.w_len());
        let mut out = Vec::with_capacity(groups * batch * time * dout);
        let mut cols = Vec::with_capacity(groups);
        for gi in 0..groups {
            let (c, o) = geo.forward(
                &xv.data()[gi * xn..(gi + 1) * xn],
                &wv.data()[gi * wn..(gi + 1) * wn],
                &bv.data()[gi * dout..(gi + 1) * dout],
            );
            cols.push(c);
            out.extend(o);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = dout;
        Ok(self.push(
            Tensor::from_parts(shape, out),
            &[x, weight, bias],
            move || {
                Box::new(move |g: &Tensor| {
                    let gn = batch * time * dout;
                    let mut gx = Vec::with_capacity(groups * xn);
                    let mut gw = Vec::with_capacity(groups * wn);
                    let mut gb = Vec::with_capacity(groups * dout);
                    for (gi, c) in cols.iter().enumerate() {
                        let (a, b, bias) = geo.backward(
                            c,
                            &wv.data()[gi * wn..(gi + 1) * wn],
                            &g.data()[gi * gn..(gi + 1) * gn],
                        );
                        gx.extend(a);
                        gw.extend(b);
                        gb.extend(bias);
                    }
                    vec![
                        Some(Tensor::from_parts(xv.shape().to_vec(), gx)),
                        Some(Tensor::from_parts(wv.shape().to_vec(), gw)),
                        Some(Tensor::from_parts(bv.shape().to_vec(), gb)),
                    ]
                })
            },
        ))
    }
}

#[derive(Clone, Copy)]
struct ConvGeometry {
    batch: usize,
    time: usize,
    din: usize,
    dout: usize,
}

impl ConvGeometry {
    fn x_len(&self) -> usize {
        self.batch * self.time * self.din
    }

    fn w_len(&self) -> usize {
        3 * self.din * self.dout
    }

    /// Lays out `[x[t-2], x[t-1], x[t]]` per row (im2col).
    fn columns(&self, x: &[f64]) -> Vec<f64> {
        let Self {
            batch, time, din, ..
        } = *self;
        let width = 3 * din;
        let mut cols = vec![0.0; batch * time * width];
        for b in 0..batch {
            for t in 0..time {
                let row = &mut cols[(b * time + t) * width..(b * time + t + 1) * width];
                for tap in 0..3 {
                    if let Some(src) = (t + tap).checked_sub(2) {
                        let s = (b * time + src) * din;
                        row[tap * din..(tap + 1) * din].copy_from_slice(&x[s..s + din]);
                    }
                }
            }
        }
        cols
    }

    fn forward(&self, x: &[f64], w: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let rows = self.batch * self.time;
        let width = 3 * self.din;
        let cols = self.columns(x);
        let mut out = Vec::with_capacity(rows * self.dout);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        gemm(
            rows,
            width,
            self.dout,
            (&cols, width as isize, 1),
            (w, self.dout as isize, 1),
            &mut out,
            1.0,
        );
        (cols, out)
    }

    fn backward(&self, cols: &[f64], w: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let Self {
            batch,
            time,
            din,
            dout,
        } = *self;
        let rows = batch * time;
        let width = 3 * din;
        let mut gw = vec![0.0; width * dout];
        gemm(
            width,
            rows,
            dout,
            (cols, 1, width as isize),
            (g, dout as isize, 1),
            &mut gw,
            0.0,
        );
        let mut gcols = vec![0.0; rows * width];
        gemm(
            rows,
            dout,
            width,
            (g, dout as isize, 1),
            (w, 1, dout as isize),
            &mut gcols,
            0.0,
        );
        let mut gx = vec![0.0; rows * din];
        for b in 0..batch {
            for t in 0..time {
                let row = &gcols[(b * time + t) * width..(b * time + t + 1) * width];
                for tap in 0..3 {
                    if let Some(src) = (t + tap).checked_sub(2) {
                        let s = (b * time + src) * din;
                        for (acc, v) in gx[s..s + din]
                            .iter_mut()
                            .zip(&row[tap * din..(tap + 1) * din])
                        {
                            *acc += *v;
                        }
                    }
                }
            }
        }
        let mut gb = vec![0.0; dout];
        for r in g.chunks(dout) {
            for (acc, v) in gb.iter_mut().zip(r) {
                *acc += *v;
            }
        }
        (gx, gw, gb)
    }
}
