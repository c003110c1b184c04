//! Shared gradient-check machinery: independent f64 twins of every tape
//! op plus a central finite-difference harness. The twins are written
//! straight from the operator definitions so they share no code with the
//! library kernels they check.

#![allow(dead_code)]

pub mod op_suite;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step for central differences on f64 twins at O(1) input scale.
pub const FD_STEP: f64 = 1e-5;
/// Maximum relative disagreement between tape and difference gradients.
pub const REL_TOL: f64 = 1e-4;
/// Disagreements below this are treated as matching zeros.
pub const ABS_FLOOR: f64 = 1e-6;

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform f32 draws promoted exactly to f64, so the tape and the twin
/// evaluate at the same points.
pub fn sample(rng: &mut impl Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn promote(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

/// Move every value at least `margin` away from each kink so central
/// differences never straddle a non-differentiable point.
pub fn nudge_away(values: &mut [f32], kinks: &[f32], margin: f32) {
    for v in values.iter_mut() {
        for &k in kinks {
            if (*v - k).abs() < margin {
                *v = if *v >= k { k + margin } else { k - margin };
            }
        }
    }
}

/// Central finite differences of `f` at `x`, one element at a time.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut z = x.to_vec();
    let mut grad = vec![0.0f64; x.len()];
    for i in 0..x.len() {
        let orig = z[i];
        z[i] = orig + h;
        let up = f(&z);
        z[i] = orig - h;
        let down = f(&z);
        z[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Panic unless `analytic` matches `numeric` to [`REL_TOL`], ignoring
/// pairs that agree to [`ABS_FLOOR`] absolutely.
pub fn assert_grads_close(context: &str, analytic: &[f32], numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len(), "{context}: gradient length");
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let a = a as f64;
        let diff = (a - n).abs();
        if diff <= ABS_FLOOR {
            continue;
        }
        let rel = diff / a.abs().max(n.abs());
        assert!(
            rel < REL_TOL,
            "{context}: grad[{i}] tape {a:.9e} vs differences {n:.9e} (rel {rel:.3e})"
        );
    }
}

/// Same tolerance discipline for forward values.
pub fn assert_values_close(context: &str, got: &[f32], want: &[f64], rel_tol: f64) {
    assert_eq!(got.len(), want.len(), "{context}: value length");
    for (i, (&a, &n)) in got.iter().zip(want).enumerate() {
        let a = a as f64;
        let diff = (a - n).abs();
        if diff <= ABS_FLOOR {
            continue;
        }
        let rel = diff / a.abs().max(n.abs());
        assert!(rel < rel_tol, "{context}: out[{i}] tape {a:.9e} vs twin {n:.9e} (rel {rel:.3e})");
    }
}

/// Independent f64 forward implementations, one per tape operator.
pub mod naive {
    pub fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    pub fn map(x: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        x.iter().map(|&v| f(v)).collect()
    }

    pub fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    }

    pub fn mean(x: &[f64]) -> f64 {
        x.iter().sum::<f64>() / x.len() as f64
    }

    pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
        mean(&zip(a, b, |x, y| (x - y).abs()))
    }

    /// Cross-correlation with zero padding;
    /// `out[o,i,j] = bias[o] + sum x[c, i*sh+u-ph, j*sw+v-pw] w[o,c,u,v]`.
    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        x: &[f64],
        (cin, h, w): (usize, usize, usize),
        wt: &[f64],
        (cout, kh, kw): (usize, usize, usize),
        bias: Option<&[f64]>,
        (sh, sw): (usize, usize),
        (ph, pw): (usize, usize),
    ) -> Vec<f64> {
        let oh = (h + 2 * ph - kh) / sh + 1;
        let ow = (w + 2 * pw - kw) / sw + 1;
        let mut out = vec![0.0f64; cout * oh * ow];
        for o in 0..cout {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b[o]);
                    for c in 0..cin {
                        for u in 0..kh {
                            for v in 0..kw {
                                let yi = (i * sh + u) as isize - ph as isize;
                                let xj = (j * sw + v) as isize - pw as isize;
                                if yi < 0 || yi >= h as isize || xj < 0 || xj >= w as isize {
                                    continue;
                                }
                                acc += x[(c * h + yi as usize) * w + xj as usize]
                                    * wt[((o * cin + c) * kh + u) * kw + v];
                            }
                        }
                    }
                    out[(o * oh + i) * ow + j] = acc;
                }
            }
        }
        out
    }

    /// Split `shape[axis]` in half, return `first * sigmoid(second)`.
    pub fn glu(x: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
        let outer: usize = shape[..axis].iter().product();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let half = n / 2;
        let mut out = vec![0.0f64; outer * half * inner];
        for oi in 0..outer {
            for k in 0..half {
                for ii in 0..inner {
                    let a = x[(oi * n + k) * inner + ii];
                    let b = x[(oi * n + half + k) * inner + ii];
                    out[(oi * half + k) * inner + ii] = a * sigmoid(b);
                }
            }
        }
        out
    }

    pub fn silu(x: &[f64]) -> Vec<f64> {
        map(x, |v| v * sigmoid(v))
    }

    /// Per-channel standardization with population variance over the `m`
    /// trailing elements, then `gamma * xhat + beta`.
    pub fn instance_norm(
        x: &[f64],
        channels: usize,
        m: usize,
        gamma: &[f64],
        beta: &[f64],
        eps: f64,
    ) -> Vec<f64> {
        let mut out = vec![0.0f64; x.len()];
        for c in 0..channels {
            let xs = &x[c * m..(c + 1) * m];
            let mean = xs.iter().sum::<f64>() / m as f64;
            let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let istd = 1.0 / (var + eps).sqrt();
            for i in 0..m {
                out[c * m + i] = gamma[c] * (xs[i] - mean) * istd + beta[c];
            }
        }
        out
    }

    /// `out(c, r*i+di, r*j+dj) = in(c*r^2 + di*r + dj, i, j)`.
    pub fn pixel_shuffle(x: &[f64], c_out: usize, h: usize, w: usize, r: usize) -> Vec<f64> {
        let mut out = vec![0.0f64; c_out * h * r * w * r];
        for c in 0..c_out {
            for di in 0..r {
                for dj in 0..r {
                    for i in 0..h {
                        for j in 0..w {
                            let src = ((c * r * r + di * r + dj) * h + i) * w + j;
                            let dst = (c * h * r + i * r + di) * w * r + j * r + dj;
                            out[dst] = x[src];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn zero_pad2d(
        x: &[f64],
        (c, h, w): (usize, usize, usize),
        [top, bottom, left, right]: [usize; 4],
    ) -> Vec<f64> {
        let (oh, ow) = (h + top + bottom, w + left + right);
        let mut out = vec![0.0f64; c * oh * ow];
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    out[(ci * oh + i + top) * ow + j + left] = x[(ci * h + i) * w + j];
                }
            }
        }
        out
    }

    pub fn crop2d(
        x: &[f64],
        (c, h, w): (usize, usize, usize),
        top: usize,
        left: usize,
        out_h: usize,
        out_w: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0f64; c * out_h * out_w];
        for ci in 0..c {
            for i in 0..out_h {
                for j in 0..out_w {
                    out[(ci * out_h + i) * out_w + j] = x[(ci * h + i + top) * w + j + left];
                }
            }
        }
        out
    }

    /// Stack `[c,ha,w]` above `[c,hb,w]` on the row axis.
    pub fn concat_rows(
        a: &[f64],
        b: &[f64],
        (c, ha, w): (usize, usize, usize),
        hb: usize,
    ) -> Vec<f64> {
        let oh = ha + hb;
        let mut out = vec![0.0f64; c * oh * w];
        for ci in 0..c {
            for i in 0..ha {
                for j in 0..w {
                    out[(ci * oh + i) * w + j] = a[(ci * ha + i) * w + j];
                }
            }
            for i in 0..hb {
                for j in 0..w {
                    out[(ci * oh + ha + i) * w + j] = b[(ci * hb + i) * w + j];
                }
            }
        }
        out
    }
}
