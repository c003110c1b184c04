//! Forward kernels and their vector-Jacobian products.
//!
//! Kernels operate on raw slices with explicit dims; shape validation
//! happens in the graph layer. Loop order is fixed so accumulation order,
//! and therefore every f32 rounding, is reproducible run to run.

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Valid kernel-offset range so that `i*stride + k - pad` stays inside `len`.
#[inline]
fn valid_range(k: usize, pad: usize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if len + pad > k { ((len + pad - k - 1) / stride + 1).min(out_len) } else { 0 };
    (lo, hi.max(lo))
}

pub fn conv2d_out_dims(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Option<(usize, usize)> {
    let oh = (h + 2 * pad.0).checked_sub(kh)? / stride.0 + 1;
    let ow = (w + 2 * pad.1).checked_sub(kw)? / stride.1 + 1;
    Some((oh, ow))
}

/// Cross-correlation of `x` `[cin,h,w]` with `wt` `[cout,cin,kh,kw]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_fwd(
    x: &[f32],
    (cin, h, w): (usize, usize, usize),
    wt: &[f32],
    (cout, kh, kw): (usize, usize, usize),
    bias: Option<&[f32]>,
    (sh, sw): (usize, usize),
    (ph, pw): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<f32> {
    let mut out = vec![0.0f32; cout * oh * ow];
    if let Some(b) = bias {
        for (o, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
            plane.fill(b[o]);
        }
    }
    for o in 0..cout {
        for c in 0..cin {
            for u in 0..kh {
                let (i_lo, i_hi) = valid_range(u, ph, sh, h, oh);
                for v in 0..kw {
                    let wv = wt[((o * cin + c) * kh + u) * kw + v];
                    let (j_lo, j_hi) = valid_range(v, pw, sw, w, ow);
                    if j_lo >= j_hi {
                        continue;
                    }
                    for i in i_lo..i_hi {
                        let xi = i * sh + u - ph;
                        let xrow = &x[(c * h + xi) * w..][..w];
                        let orow = &mut out[(o * oh + i) * ow..][..ow];
                        if sw == 1 {
                            let base = j_lo + v - pw;
                            let xs = &xrow[base..base + (j_hi - j_lo)];
                            for (od, xv) in orow[j_lo..j_hi].iter_mut().zip(xs) {
                                *od += wv * xv;
                            }
                        } else {
                            for j in j_lo..j_hi {
                                orow[j] += wv * xrow[j * sw + v - pw];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d_fwd`]; each output is `None` when not requested.
#[allow(clippy::too_many_arguments, clippy::type_complexity, clippy::needless_range_loop)]
pub fn conv2d_bwd(
    g: &[f32],
    x: &[f32],
    (cin, h, w): (usize, usize, usize),
    wt: &[f32],
    (cout, kh, kw): (usize, usize, usize),
    (sh, sw): (usize, usize),
    (ph, pw): (usize, usize),
    (oh, ow): (usize, usize),
    want_dx: bool,
    want_dw: bool,
    want_db: bool,
) -> (Option<Vec<f32>>, Option<Vec<f32>>, Option<Vec<f32>>) {
    let mut dx = want_dx.then(|| vec![0.0f32; cin * h * w]);
    let mut dw = want_dw.then(|| vec![0.0f32; cout * cin * kh * kw]);
    let mut db = want_db.then(|| vec![0.0f32; cout]);

    if let Some(db) = db.as_mut() {
        for (o, plane) in g.chunks_exact(oh * ow).enumerate() {
            let mut acc = 0.0f64;
            for &gv in plane {
                acc += gv as f64;
            }
            db[o] = acc as f32;
        }
    }

    for o in 0..cout {
        for c in 0..cin {
            for u in 0..kh {
                let (i_lo, i_hi) = valid_range(u, ph, sh, h, oh);
                for v in 0..kw {
                    let widx = ((o * cin + c) * kh + u) * kw + v;
                    let wv = wt[widx];
                    let (j_lo, j_hi) = valid_range(v, pw, sw, w, ow);
                    if j_lo >= j_hi {
                        continue;
                    }
                    let mut wacc = 0.0f32;
                    for i in i_lo..i_hi {
                        let xi = i * sh + u - ph;
                        let grow = &g[(o * oh + i) * ow..][..ow];
                        if sw == 1 {
                            let base = j_lo + v - pw;
                            let n = j_hi - j_lo;
                            if let Some(dx) = dx.as_mut() {
                                let drow = &mut dx[(c * h + xi) * w + base..][..n];
                                for (dv, gv) in drow.iter_mut().zip(&grow[j_lo..j_hi]) {
                                    *dv += wv * gv;
                                }
                            }
                            if dw.is_some() {
                                let xs = &x[(c * h + xi) * w + base..][..n];
                                for (gv, xv) in grow[j_lo..j_hi].iter().zip(xs) {
                                    wacc += gv * xv;
                                }
                            }
                        } else {
                            for j in j_lo..j_hi {
                                let xj = (c * h + xi) * w + j * sw + v - pw;
                                if let Some(dx) = dx.as_mut() {
                                    dx[xj] += wv * grow[j];
                                }
                                if dw.is_some() {
                                    wacc += grow[j] * x[xj];
                                }
                            }
                        }
                    }
                    if let Some(dw) = dw.as_mut() {
                        dw[widx] += wacc;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Split sizes around `axis`: (outer, axis len, inner).
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Gated linear unit: halves `axis`, returns `a * sigmoid(b)`.
pub fn glu_fwd(x: &[f32], outer: usize, n: usize, inner: usize) -> Vec<f32> {
    let half = n / 2;
    let mut out = vec![0.0f32; outer * half * inner];
    for t in 0..outer {
        let xb = t * n * inner;
        let ob = t * half * inner;
        for j in 0..half {
            for k in 0..inner {
                let a = x[xb + j * inner + k];
                let b = x[xb + (j + half) * inner + k];
                out[ob + j * inner + k] = a * sigmoid(b);
            }
        }
    }
    out
}

pub fn glu_bwd(g: &[f32], x: &[f32], outer: usize, n: usize, inner: usize) -> Vec<f32> {
    let half = n / 2;
    let mut dx = vec![0.0f32; x.len()];
    for t in 0..outer {
        let xb = t * n * inner;
        let ob = t * half * inner;
        for j in 0..half {
            for k in 0..inner {
                let a = x[xb + j * inner + k];
                let s = sigmoid(x[xb + (j + half) * inner + k]);
                let gv = g[ob + j * inner + k];
                dx[xb + j * inner + k] += gv * s;
                dx[xb + (j + half) * inner + k] += gv * a * s * (1.0 - s);
            }
        }
    }
    dx
}

pub fn silu_fwd(x: &[f32]) -> Vec<f32> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

pub fn silu_bwd(g: &[f32], x: &[f32], dx: &mut [f32]) {
    for ((dv, &gv), &xv) in dx.iter_mut().zip(g).zip(x) {
        let s = sigmoid(xv);
        *dv += gv * (s + xv * s * (1.0 - s));
    }
}

/// Per-channel normalization over all trailing dims, then `gamma`/`beta`.
///
/// Returns `(out, xhat, inv_std)`; the latter two are kept for backward.
pub fn instance_norm_fwd(
    x: &[f32],
    channels: usize,
    m: usize,
    gamma: &[f32],
    beta: &[f32],
    eps: f32,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut out = vec![0.0f32; x.len()];
    let mut xhat = vec![0.0f32; x.len()];
    let mut inv_std = vec![0.0f32; channels];
    for c in 0..channels {
        let xs = &x[c * m..(c + 1) * m];
        let mut sum = 0.0f64;
        for &v in xs {
            sum += v as f64;
        }
        let mean = sum / m as f64;
        let mut var = 0.0f64;
        for &v in xs {
            let d = v as f64 - mean;
            var += d * d;
        }
        var /= m as f64;
        let istd = 1.0 / (var + eps as f64).sqrt();
        inv_std[c] = istd as f32;
        let (mean, istd) = (mean as f32, istd as f32);
        for i in 0..m {
            let xh = (xs[i] - mean) * istd;
            xhat[c * m + i] = xh;
            out[c * m + i] = gamma[c] * xh + beta[c];
        }
    }
    (out, xhat, inv_std)
}

#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub fn instance_norm_bwd(
    g: &[f32],
    xhat: &[f32],
    inv_std: &[f32],
    channels: usize,
    m: usize,
    gamma: &[f32],
    want_dx: bool,
    want_dgamma: bool,
    want_dbeta: bool,
) -> (Option<Vec<f32>>, Option<Vec<f32>>, Option<Vec<f32>>) {
    let mut dx = want_dx.then(|| vec![0.0f32; g.len()]);
    let mut dgamma = want_dgamma.then(|| vec![0.0f32; channels]);
    let mut dbeta = want_dbeta.then(|| vec![0.0f32; channels]);
    for c in 0..channels {
        let gs = &g[c * m..(c + 1) * m];
        let xh = &xhat[c * m..(c + 1) * m];
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64;
        for i in 0..m {
            sum_g += gs[i] as f64;
            sum_gx += gs[i] as f64 * xh[i] as f64;
        }
        if let Some(dgamma) = dgamma.as_mut() {
            dgamma[c] += sum_gx as f32;
        }
        if let Some(dbeta) = dbeta.as_mut() {
            dbeta[c] += sum_g as f32;
        }
        if let Some(dx) = dx.as_mut() {
            let k = gamma[c] * inv_std[c];
            let mean_g = (sum_g / m as f64) as f32;
            let mean_gx = (sum_gx / m as f64) as f32;
            let ds = &mut dx[c * m..(c + 1) * m];
            for i in 0..m {
                ds[i] += k * (gs[i] - mean_g - xh[i] * mean_gx);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Depth-to-space: `out(c, r*h+i, r*w+j) = in(c*r^2 + i*r + j, h, w)`.
pub fn pixel_shuffle_fwd(x: &[f32], c_out: usize, h: usize, w: usize, r: usize) -> Vec<f32> {
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0f32; c_out * oh * ow];
    for c in 0..c_out {
        for i in 0..r {
            for j in 0..r {
                let cin = c * r * r + i * r + j;
                for y in 0..h {
                    let xrow = &x[(cin * h + y) * w..][..w];
                    let orow = &mut out[(c * oh + y * r + i) * ow..][..ow];
                    for (xc, &xv) in xrow.iter().enumerate() {
                        orow[xc * r + j] = xv;
                    }
                }
            }
        }
    }
    out
}

pub fn pixel_shuffle_bwd(g: &[f32], c_out: usize, h: usize, w: usize, r: usize) -> Vec<f32> {
    let (oh, ow) = (h * r, w * r);
    let mut dx = vec![0.0f32; c_out * r * r * h * w];
    for c in 0..c_out {
        for i in 0..r {
            for j in 0..r {
                let cin = c * r * r + i * r + j;
                for y in 0..h {
                    let grow = &g[(c * oh + y * r + i) * ow..][..ow];
                    let drow = &mut dx[(cin * h + y) * w..][..w];
                    for (xc, dv) in drow.iter_mut().enumerate() {
                        *dv += grow[xc * r + j];
                    }
                }
            }
        }
    }
    dx
}

/// Zero padding of `[c,h,w]` by `[top, bottom, left, right]`.
pub fn zero_pad2d_fwd(x: &[f32], (c, h, w): (usize, usize, usize), pad: [usize; 4]) -> Vec<f32> {
    let [top, bottom, left, right] = pad;
    let (oh, ow) = (h + top + bottom, w + left + right);
    let mut out = vec![0.0f32; c * oh * ow];
    for ci in 0..c {
        for y in 0..h {
            let src = &x[(ci * h + y) * w..][..w];
            let dst = &mut out[(ci * oh + y + top) * ow + left..][..w];
            dst.copy_from_slice(src);
        }
    }
    out
}

/// Crop `[c,h,w]` to `out_h x out_w` starting at `(top, left)`.
pub fn crop2d_fwd(
    x: &[f32],
    (c, h, w): (usize, usize, usize),
    top: usize,
    left: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    let _ = h;
    let mut out = vec![0.0f32; c * out_h * out_w];
    for ci in 0..c {
        for y in 0..out_h {
            let src = &x[(ci * h + y + top) * w + left..][..out_w];
            let dst = &mut out[(ci * out_h + y) * out_w..][..out_w];
            dst.copy_from_slice(src);
        }
    }
    out
}

pub fn sum_f64(x: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for &v in x {
        acc += v as f64;
    }
    acc
}
