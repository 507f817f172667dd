//! Dense row-major kernels used by the network.

/// `C (m×n) = beta·C + A (m×k) · B (k×n)`.
pub fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, c: &mut [f64], beta: f64) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `C (m×n) = beta·C + Aᵀ · B` with `A` stored `k×m` and `B` stored `k×n`.
pub fn mm_tn(a: &[f64], k: usize, m: usize, b: &[f64], n: usize, c: &mut [f64], beta: f64) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `C (m×n) = beta·C + A · Bᵀ` with `A` stored `m×k` and `B` stored `n×k`.
pub fn mm_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, c: &mut [f64], beta: f64) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

pub fn add_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Column sums of a row-major matrix, accumulated into `out`.
pub fn col_sums(x: &[f64], out: &mut [f64]) {
    for row in x.chunks_exact(out.len()) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

pub const LEAKY_SLOPE: f64 = 0.01;

pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm of `x` (rows of width `d`). Returns the normalised
/// rows `xhat` and per-row inverse standard deviations; `out = g·xhat + b`.
pub fn layer_norm(x: &[f64], d: usize, g: &[f64], b: &[f64], out: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
    let rows = x.len() / d;
    let mut xhat = vec![0.0; x.len()];
    let mut inv = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mu = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        inv[r] = s;
        for c in 0..d {
            let h = (row[c] - mu) * s;
            xhat[r * d + c] = h;
            out[r * d + c] = g[c] * h + b[c];
        }
    }
    (xhat, inv)
}

/// Backward pass of [`layer_norm`]: writes `dx`, accumulates `dg`, `db`.
pub fn layer_norm_backward(
    dout: &[f64],
    xhat: &[f64],
    inv: &[f64],
    d: usize,
    g: &[f64],
    dx: &mut [f64],
    dg: &mut [f64],
    db: &mut [f64],
) {
    let mut dxhat = vec![0.0; d];
    for r in 0..inv.len() {
        let o = &dout[r * d..(r + 1) * d];
        let h = &xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_h = 0.0;
        for c in 0..d {
            dg[c] += o[c] * h[c];
            db[c] += o[c];
            dxhat[c] = o[c] * g[c];
            mean_dxhat += dxhat[c];
            mean_dxhat_h += dxhat[c] * h[c];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_h /= d as f64;
        for c in 0..d {
            dx[r * d + c] = inv[r] * (dxhat[c] - mean_dxhat - h[c] * mean_dxhat_h);
        }
    }
}
