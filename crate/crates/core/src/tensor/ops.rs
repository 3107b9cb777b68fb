//! Differentiable tensor operations.
//!
//! Each op computes its forward value eagerly and attaches a closure that
//! propagates the output gradient to its parents. Shape preconditions are
//! checked up front and reported with both offending shapes.

use super::{accum_into, Tensor};
use crate::error::{Error, Result};

// ── raw matmul kernels ──────────────────────────────────────────────

/// C(m×n) += A(m×k) · B(k×n)
fn mm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cj, bj) in c_row.iter_mut().zip(b_row) {
                *cj += a_ip * bj;
            }
        }
    }
}

/// C(m×k) += A(m×n) · B(k×n)ᵀ
fn mm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (aj, bj) in a_row.iter().zip(b_row) {
                s += aj * bj;
            }
            c[i * k + p] += s;
        }
    }
}

/// C(k×n) += A(m×k)ᵀ · B(m×n)
fn mm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let c_row = &mut c[p * n..(p + 1) * n];
            for (cj, bj) in c_row.iter_mut().zip(b_row) {
                *cj += a_ip * bj;
            }
        }
    }
}

fn require_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::InvalidShape {
            op,
            shape: t.shape().to_vec(),
            reason: format!("expected rank {}", rank),
        });
    }
    Ok(())
}

// ── binary elementwise ──────────────────────────────────────────────

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(|parents, _out, grad| {
            accum_into(&parents[0], grad);
            accum_into(&parents[1], grad);
        }),
    ))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("sub", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(|parents, _out, grad| {
            accum_into(&parents[0], grad);
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            accum_into(&parents[1], &neg);
        }),
    ))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(|parents, _out, grad| {
            let da: Vec<f64> = grad
                .iter()
                .zip(parents[1].data())
                .map(|(g, y)| g * y)
                .collect();
            let db: Vec<f64> = grad
                .iter()
                .zip(parents[0].data())
                .map(|(g, x)| g * x)
                .collect();
            accum_into(&parents[0], &da);
            accum_into(&parents[1], &db);
        }),
    ))
}

/// Adds a length-`n` bias row to every row of an `m×n` matrix.
pub fn add_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    require_rank("add_bias", x, 2)?;
    let (m, n) = (x.shape()[0], x.shape()[1]);
    if bias.shape() != [n] {
        return Err(Error::ShapeMismatch {
            op: "add_bias",
            lhs: x.shape().to_vec(),
            rhs: bias.shape().to_vec(),
        });
    }
    let mut data = x.data().to_vec();
    for i in 0..m {
        for (v, b) in data[i * n..(i + 1) * n].iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    Ok(Tensor::from_op(
        data,
        x.shape().to_vec(),
        vec![x.clone(), bias.clone()],
        Box::new(move |parents, _out, grad| {
            accum_into(&parents[0], grad);
            let mut db = vec![0.0; n];
            for row in grad.chunks(n) {
                for (d, g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            accum_into(&parents[1], &db);
        }),
    ))
}

pub fn scale(x: &Tensor, c: f64) -> Tensor {
    let data = x.data().iter().map(|v| v * c).collect();
    Tensor::from_op(
        data,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(move |parents, _out, grad| {
            let dx: Vec<f64> = grad.iter().map(|g| g * c).collect();
            accum_into(&parents[0], &dx);
        }),
    )
}

// ── unary ───────────────────────────────────────────────────────────

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|v| v.max(0.0)).collect();
    Tensor::from_op(
        data,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(|parents, _out, grad| {
            let dx: Vec<f64> = grad
                .iter()
                .zip(parents[0].data())
                .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                .collect();
            accum_into(&parents[0], &dx);
        }),
    )
}

pub fn log(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|v| v.ln()).collect();
    Tensor::from_op(
        data,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(|parents, _out, grad| {
            let dx: Vec<f64> = grad
                .iter()
                .zip(parents[0].data())
                .map(|(g, x)| g / x)
                .collect();
            accum_into(&parents[0], &dx);
        }),
    )
}

/// Sum of all elements, returned as a single-element tensor.
pub fn sum(x: &Tensor) -> Tensor {
    let total: f64 = x.data().iter().sum();
    Tensor::from_op(
        vec![total],
        vec![1],
        vec![x.clone()],
        Box::new(|parents, _out, grad| {
            let dx = vec![grad[0]; parents[0].numel()];
            accum_into(&parents[0], &dx);
        }),
    )
}

// ── matmul / transpose ──────────────────────────────────────────────

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_rank("matmul", a, 2)?;
    require_rank("matmul", b, 2)?;
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut data = vec![0.0; m * n];
    mm_nn(a.data(), b.data(), &mut data, m, k, n);
    Ok(Tensor::from_op(
        data,
        vec![m, n],
        vec![a.clone(), b.clone()],
        Box::new(move |parents, _out, grad| {
            let mut da = vec![0.0; m * k];
            mm_nt(grad, parents[1].data(), &mut da, m, n, k);
            accum_into(&parents[0], &da);
            let mut db = vec![0.0; k * n];
            mm_tn(parents[0].data(), grad, &mut db, m, k, n);
            accum_into(&parents[1], &db);
        }),
    ))
}

pub fn transpose(x: &Tensor) -> Result<Tensor> {
    require_rank("transpose", x, 2)?;
    let (m, n) = (x.shape()[0], x.shape()[1]);
    let src = x.data();
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            data[j * m + i] = src[i * n + j];
        }
    }
    Ok(Tensor::from_op(
        data,
        vec![n, m],
        vec![x.clone()],
        Box::new(move |parents, _out, grad| {
            let mut dx = vec![0.0; m * n];
            for j in 0..n {
                for i in 0..m {
                    dx[i * n + j] = grad[j * m + i];
                }
            }
            accum_into(&parents[0], &dx);
        }),
    ))
}

// ── softmax family ──────────────────────────────────────────────────

/// Stable softmax of one slice into `out`, with strided access.
/// `-inf` entries contribute zero mass; all `-inf` is rejected upstream.
fn softmax_slice(src: &[f64], out: &mut [f64], offset: usize, stride: usize, len: usize) {
    let mut max = f64::NEG_INFINITY;
    for i in 0..len {
        max = max.max(src[offset + i * stride]);
    }
    let mut denom = 0.0f64;
    for i in 0..len {
        let e = (src[offset + i * stride] - max).exp();
        out[offset + i * stride] = e;
        denom += e;
    }
    for i in 0..len {
        out[offset + i * stride] /= denom;
    }
}

fn softmax_backward_slice(
    y: &[f64],
    grad: &[f64],
    dx: &mut [f64],
    offset: usize,
    stride: usize,
    len: usize,
) {
    let mut dot = 0.0f64;
    for i in 0..len {
        let idx = offset + i * stride;
        dot += grad[idx] * y[idx];
    }
    for i in 0..len {
        let idx = offset + i * stride;
        dx[idx] = y[idx] * (grad[idx] - dot);
    }
}

/// Softmax along `axis`. Supports rank-1 (axis 0) and rank-2 (axis 0 or 1).
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::InvalidShape {
            op: "softmax",
            shape: x.shape().to_vec(),
            reason: format!("axis {} out of range", axis),
        });
    }
    if x.rank() > 2 {
        return Err(Error::InvalidShape {
            op: "softmax",
            shape: x.shape().to_vec(),
            reason: "supported for rank 1 and 2 only".into(),
        });
    }
    for slice in slices(x.shape(), axis) {
        let mut max = f64::NEG_INFINITY;
        for i in 0..slice.2 {
            max = max.max(x.data()[slice.0 + i * slice.1]);
        }
        if !max.is_finite() {
            return Err(Error::NonFinite("softmax input".into()));
        }
    }
    let mut data = vec![0.0; x.numel()];
    for (offset, stride, len) in slices(x.shape(), axis) {
        softmax_slice(x.data(), &mut data, offset, stride, len);
    }
    let shape = x.shape().to_vec();
    Ok(Tensor::from_op(
        data,
        shape.clone(),
        vec![x.clone()],
        Box::new(move |parents, out, grad| {
            let mut dx = vec![0.0; grad.len()];
            for (offset, stride, len) in slices(&shape, axis) {
                softmax_backward_slice(out, grad, &mut dx, offset, stride, len);
            }
            accum_into(&parents[0], &dx);
        }),
    ))
}

/// (offset, stride, len) triples covering every reduction slice along `axis`.
fn slices(shape: &[usize], axis: usize) -> Vec<(usize, usize, usize)> {
    match (shape.len(), axis) {
        (1, 0) => vec![(0, 1, shape[0])],
        (2, 1) => (0..shape[0]).map(|i| (i * shape[1], 1, shape[1])).collect(),
        (2, 0) => (0..shape[1]).map(|j| (j, shape[1], shape[0])).collect(),
        _ => unreachable!("validated by softmax"),
    }
}

/// Row-wise log-softmax of a 2D tensor, computed stably.
pub fn log_softmax_rows(x: &Tensor) -> Result<Tensor> {
    require_rank("log_softmax_rows", x, 2)?;
    let (m, n) = (x.shape()[0], x.shape()[1]);
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        let row = &x.data()[i * n..(i + 1) * n];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite("log_softmax input".into()));
        }
        let lse: f64 = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        for j in 0..n {
            data[i * n + j] = row[j] - lse;
        }
    }
    Ok(Tensor::from_op(
        data,
        vec![m, n],
        vec![x.clone()],
        Box::new(move |parents, out, grad| {
            let mut dx = vec![0.0; m * n];
            for i in 0..m {
                let row_sum: f64 = grad[i * n..(i + 1) * n].iter().sum();
                for j in 0..n {
                    let p = out[i * n + j].exp();
                    dx[i * n + j] = grad[i * n + j] - p * row_sum;
                }
            }
            accum_into(&parents[0], &dx);
        }),
    ))
}

// ── shape surgery ───────────────────────────────────────────────────

/// Concatenates 2D tensors along `axis` (0: stack rows, 1: widen columns).
pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::InvalidArgument("concat: no tensors".into()));
    }
    for p in parts {
        require_rank("concat", p, 2)?;
    }
    if axis > 1 {
        return Err(Error::InvalidArgument(format!("concat: bad axis {axis}")));
    }
    let fixed = parts[0].shape()[1 - axis];
    for p in &parts[1..] {
        if p.shape()[1 - axis] != fixed {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: parts[0].shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
    }
    let total: usize = parts.iter().map(|p| p.shape()[axis]).sum();
    let (rows, cols) = if axis == 0 {
        (total, fixed)
    } else {
        (fixed, total)
    };
    let mut data = vec![0.0; rows * cols];
    let widths: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    if axis == 0 {
        let mut at = 0;
        for p in parts {
            data[at..at + p.numel()].copy_from_slice(p.data());
            at += p.numel();
        }
    } else {
        let mut col_at = 0;
        for p in parts {
            let w = p.shape()[1];
            for r in 0..rows {
                data[r * cols + col_at..r * cols + col_at + w]
                    .copy_from_slice(&p.data()[r * w..(r + 1) * w]);
            }
            col_at += w;
        }
    }
    Ok(Tensor::from_op(
        data,
        vec![rows, cols],
        parts.to_vec(),
        Box::new(move |parents, _out, grad| {
            if axis == 0 {
                let mut at = 0;
                for (p, w) in parents.iter().zip(&widths) {
                    let numel = w * cols;
                    accum_into(p, &grad[at..at + numel]);
                    at += numel;
                }
            } else {
                let mut col_at = 0;
                for (p, w) in parents.iter().zip(&widths) {
                    let mut dp = vec![0.0; rows * w];
                    for r in 0..rows {
                        dp[r * w..(r + 1) * w]
                            .copy_from_slice(&grad[r * cols + col_at..r * cols + col_at + w]);
                    }
                    accum_into(p, &dp);
                    col_at += w;
                }
            }
        }),
    ))
}

/// Rows `start..end` of a 2D tensor.
pub fn slice_rows(x: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    require_rank("slice_rows", x, 2)?;
    let (m, n) = (x.shape()[0], x.shape()[1]);
    if start >= end || end > m {
        return Err(Error::InvalidArgument(format!(
            "slice_rows: range {start}..{end} invalid for {m} rows"
        )));
    }
    let data = x.data()[start * n..end * n].to_vec();
    Ok(Tensor::from_op(
        data,
        vec![end - start, n],
        vec![x.clone()],
        Box::new(move |parents, _out, grad| {
            let mut dx = vec![0.0; m * n];
            dx[start * n..end * n].copy_from_slice(grad);
            accum_into(&parents[0], &dx);
        }),
    ))
}

/// Columns `start..end` of a 2D tensor.
pub fn slice_cols(x: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    require_rank("slice_cols", x, 2)?;
    let (m, n) = (x.shape()[0], x.shape()[1]);
    if start >= end || end > n {
        return Err(Error::InvalidArgument(format!(
            "slice_cols: range {start}..{end} invalid for {n} columns"
        )));
    }
    let w = end - start;
    let mut data = vec![0.0; m * w];
    for r in 0..m {
        data[r * w..(r + 1) * w].copy_from_slice(&x.data()[r * n + start..r * n + end]);
    }
    Ok(Tensor::from_op(
        data,
        vec![m, w],
        vec![x.clone()],
        Box::new(move |parents, _out, grad| {
            let mut dx = vec![0.0; m * n];
            for r in 0..m {
                dx[r * n + start..r * n + end].copy_from_slice(&grad[r * w..(r + 1) * w]);
            }
            accum_into(&parents[0], &dx);
        }),
    ))
}

/// Gathers rows of an embedding table (`vocab×dim`) by token id.
pub fn embedding(table: &Tensor, ids: &[u32]) -> Result<Tensor> {
    require_rank("embedding", table, 2)?;
    if ids.is_empty() {
        return Err(Error::InvalidArgument("embedding: empty id list".into()));
    }
    let (vocab, dim) = (table.shape()[0], table.shape()[1]);
    for &id in ids {
        if id as usize >= vocab {
            return Err(Error::UnknownToken { id, vocab });
        }
    }
    let mut data = vec![0.0; ids.len() * dim];
    for (r, &id) in ids.iter().enumerate() {
        data[r * dim..(r + 1) * dim]
            .copy_from_slice(&table.data()[id as usize * dim..(id as usize + 1) * dim]);
    }
    let ids_owned: Vec<u32> = ids.to_vec();
    Ok(Tensor::from_op(
        data,
        vec![ids.len(), dim],
        vec![table.clone()],
        Box::new(move |parents, _out, grad| {
            let mut dt = vec![0.0; vocab * dim];
            for (r, &id) in ids_owned.iter().enumerate() {
                let dst = &mut dt[id as usize * dim..(id as usize + 1) * dim];
                for (d, g) in dst.iter_mut().zip(&grad[r * dim..(r + 1) * dim]) {
                    *d += g;
                }
            }
            accum_into(&parents[0], &dt);
        }),
    ))
}

/// Per-row layer normalization of a 2D tensor with learned scale and shift.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    require_rank("layer_norm", x, 2)?;
    let (m, n) = (x.shape()[0], x.shape()[1]);
    if gamma.shape() != [n] || beta.shape() != [n] {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            lhs: x.shape().to_vec(),
            rhs: gamma.shape().to_vec(),
        });
    }
    let mut data = vec![0.0; m * n];
    let mut inv_std = vec![0.0; m];
    let mut xhat = vec![0.0; m * n];
    for i in 0..m {
        let row = &x.data()[i * n..(i + 1) * n];
        let mean: f64 = row.iter().sum::<f64>() / n as f64;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std[i] = istd;
        for j in 0..n {
            let h = (row[j] - mean) * istd;
            xhat[i * n + j] = h;
            data[i * n + j] = gamma.data()[j] * h + beta.data()[j];
        }
    }
    Ok(Tensor::from_op(
        data,
        vec![m, n],
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |parents, _out, grad| {
            let gamma_d = parents[1].data();
            let mut dx = vec![0.0; m * n];
            let mut dgamma = vec![0.0; n];
            let mut dbeta = vec![0.0; n];
            for i in 0..m {
                let g_row = &grad[i * n..(i + 1) * n];
                let h_row = &xhat[i * n..(i + 1) * n];
                let mut mean_gy = 0.0f64;
                let mut mean_gyh = 0.0f64;
                for j in 0..n {
                    let gy = g_row[j] * gamma_d[j];
                    mean_gy += gy;
                    mean_gyh += gy * h_row[j];
                    dgamma[j] += g_row[j] * h_row[j];
                    dbeta[j] += g_row[j];
                }
                mean_gy /= n as f64;
                mean_gyh /= n as f64;
                for j in 0..n {
                    let gy = g_row[j] * gamma_d[j];
                    dx[i * n + j] = (gy - mean_gy - h_row[j] * mean_gyh) * inv_std[i];
                }
            }
            accum_into(&parents[0], &dx);
            accum_into(&parents[1], &dgamma);
            accum_into(&parents[2], &dbeta);
        }),
    ))
}

/// 1D convolution over time. Input is `T×C_in`, weights `C_out×C_in×K`,
/// bias `C_out`; output is `T'×C_out` with `T' = floor((T+2·pad−K)/stride)+1`.
pub fn conv1d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    require_rank("conv1d", x, 2)?;
    require_rank("conv1d", w, 3)?;
    let (t, c_in) = (x.shape()[0], x.shape()[1]);
    let (c_out, w_cin, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    if w_cin != c_in {
        return Err(Error::ShapeMismatch {
            op: "conv1d",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    if b.shape() != [c_out] {
        return Err(Error::ShapeMismatch {
            op: "conv1d",
            lhs: w.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    if t + 2 * pad < k {
        return Err(Error::InvalidShape {
            op: "conv1d",
            shape: x.shape().to_vec(),
            reason: format!("input length {t} too short for kernel {k}"),
        });
    }
    let t_out = (t + 2 * pad - k) / stride + 1;
    let mut data = vec![0.0; t_out * c_out];
    let xd = x.data();
    let wd = w.data();
    for to in 0..t_out {
        for co in 0..c_out {
            let mut s = b.data()[co];
            for ki in 0..k {
                let ti = (to * stride + ki) as isize - pad as isize;
                if ti < 0 || ti as usize >= t {
                    continue;
                }
                let x_row = &xd[ti as usize * c_in..(ti as usize + 1) * c_in];
                let w_row = &wd[(co * c_in * k)..((co + 1) * c_in * k)];
                for ci in 0..c_in {
                    s += x_row[ci] * w_row[ci * k + ki];
                }
            }
            data[to * c_out + co] = s;
        }
    }
    Ok(Tensor::from_op(
        data,
        vec![t_out, c_out],
        vec![x.clone(), w.clone(), b.clone()],
        Box::new(move |parents, _out, grad| {
            let xd = parents[0].data();
            let wd = parents[1].data();
            let mut dx = vec![0.0; t * c_in];
            let mut dw = vec![0.0; c_out * c_in * k];
            let mut db = vec![0.0; c_out];
            for to in 0..t_out {
                for co in 0..c_out {
                    let g = grad[to * c_out + co];
                    if g == 0.0 {
                        continue;
                    }
                    db[co] += g;
                    for ki in 0..k {
                        let ti = (to * stride + ki) as isize - pad as isize;
                        if ti < 0 || ti as usize >= t {
                            continue;
                        }
                        let ti = ti as usize;
                        for ci in 0..c_in {
                            dw[co * c_in * k + ci * k + ki] += g * xd[ti * c_in + ci];
                            dx[ti * c_in + ci] += g * wd[co * c_in * k + ci * k + ki];
                        }
                    }
                }
            }
            accum_into(&parents[0], &dx);
            accum_into(&parents[1], &dw);
            accum_into(&parents[2], &db);
        }),
    ))
}
