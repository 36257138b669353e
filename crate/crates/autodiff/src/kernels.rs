//! Raw f64 compute loops shared by the forward and backward passes.
//!
//! Everything here operates on flat row-major slices; shape checking is the
//! caller's job. Convolution lowers to im2col plus one large matmul across
//! the whole batch, so the matmul family carries most of the arithmetic
//! load; loops are ordered for contiguous inner access.

/// c += a @ b, a: [m,k], b: [k,n], c: [m,n].
pub fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (kk, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += aik * bv;
            }
        }
    }
}

/// c = a @ b.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    matmul_acc(a, b, &mut c, m, k, n);
    c
}

/// c += a @ b^T, a: [m,k], b: [n,k], c: [m,n].
pub fn matmul_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        // Four dot products at a time keeps the loads of `a_row` shared.
        let mut j = 0;
        while j + 4 <= n {
            let b0 = &b[j * k..(j + 1) * k];
            let b1 = &b[(j + 1) * k..(j + 2) * k];
            let b2 = &b[(j + 2) * k..(j + 3) * k];
            let b3 = &b[(j + 3) * k..(j + 4) * k];
            let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for (idx, &av) in a_row.iter().enumerate() {
                s0 += av * b0[idx];
                s1 += av * b1[idx];
                s2 += av * b2[idx];
                s3 += av * b3[idx];
            }
            c_row[j] += s0;
            c_row[j + 1] += s1;
            c_row[j + 2] += s2;
            c_row[j + 3] += s3;
            j += 4;
        }
        while j < n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            c_row[j] += acc;
            j += 1;
        }
    }
}

/// c += a^T @ b, a: [k,m], b: [k,n], c: [m,n].
pub fn matmul_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for kk in 0..k {
        let a_row = &a[kk * m..(kk + 1) * m];
        let b_row = &b[kk * n..(kk + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
}

/// Geometry of a stride-2 convolution layer with "halving" zero padding
/// `p = (k-1)/2`, so the spatial extent goes `s -> ceil(s/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub side_in: usize,
    pub side_out: usize,
    pub kernel: usize,
    pub pad: usize,
}

pub const CONV_STRIDE: usize = 2;

impl ConvGeom {
    pub fn new(batch: usize, c_in: usize, c_out: usize, side_in: usize, kernel: usize) -> ConvGeom {
        assert!(kernel % 2 == 1, "conv2d: kernel size {} is not odd", kernel);
        let pad = (kernel - 1) / 2;
        let side_out = side_in.div_ceil(CONV_STRIDE);
        ConvGeom { batch, c_in, c_out, side_in, side_out, kernel, pad }
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }

    fn out_plane(&self) -> usize {
        self.side_out * self.side_out
    }
}

/// Unfold one image [c_in, s, s] into patch rows [side_out^2, c_in*k*k].
fn im2col(g: &ConvGeom, img: &[f64], cols: &mut [f64]) {
    let (s, so, k, p) = (g.side_in, g.side_out, g.kernel, g.pad);
    let plen = g.patch_len();
    for oy in 0..so {
        for ox in 0..so {
            let row = &mut cols[(oy * so + ox) * plen..(oy * so + ox + 1) * plen];
            let mut idx = 0;
            for ci in 0..g.c_in {
                let chan = &img[ci * s * s..(ci + 1) * s * s];
                for ky in 0..k {
                    let iy = (oy * CONV_STRIDE + ky) as isize - p as isize;
                    if iy < 0 || iy >= s as isize {
                        for v in &mut row[idx..idx + k] {
                            *v = 0.0;
                        }
                        idx += k;
                        continue;
                    }
                    let crow = &chan[iy as usize * s..(iy as usize + 1) * s];
                    for kx in 0..k {
                        let ix = (ox * CONV_STRIDE + kx) as isize - p as isize;
                        row[idx] = if ix >= 0 && ix < s as isize { crow[ix as usize] } else { 0.0 };
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// Scatter patch-row gradients back onto one image (transpose of im2col).
fn col2im_acc(g: &ConvGeom, cols: &[f64], img: &mut [f64]) {
    let (s, so, k, p) = (g.side_in, g.side_out, g.kernel, g.pad);
    let plen = g.patch_len();
    for oy in 0..so {
        for ox in 0..so {
            let row = &cols[(oy * so + ox) * plen..(oy * so + ox + 1) * plen];
            let mut idx = 0;
            for ci in 0..g.c_in {
                let base = ci * s * s;
                for ky in 0..k {
                    let iy = (oy * CONV_STRIDE + ky) as isize - p as isize;
                    for kx in 0..k {
                        let ix = (ox * CONV_STRIDE + kx) as isize - p as isize;
                        if iy >= 0 && iy < s as isize && ix >= 0 && ix < s as isize {
                            img[base + iy as usize * s + ix as usize] += row[idx];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// Unfold the whole batch: [batch * side_out^2, c_in*k*k].
fn im2col_batch(g: &ConvGeom, x: &[f64]) -> Vec<f64> {
    let plen = g.patch_len();
    let oplane = g.out_plane();
    let img_len = g.c_in * g.side_in * g.side_in;
    let mut cols = vec![0.0; g.batch * oplane * plen];
    for b in 0..g.batch {
        im2col(
            g,
            &x[b * img_len..(b + 1) * img_len],
            &mut cols[b * oplane * plen..(b + 1) * oplane * plen],
        );
    }
    cols
}

/// Forward convolution. x: [b, c_in, s, s], w: [c_out, c_in, k, k],
/// bias: [c_out]; returns [b, c_out, so, so]. One batch-wide matmul over
/// the unfolded patches.
pub fn conv2d(g: &ConvGeom, x: &[f64], w: &[f64], bias: &[f64]) -> Vec<f64> {
    let plen = g.patch_len();
    let oplane = g.out_plane();
    let cols = im2col_batch(g, x);
    // patches-major layout [b*oplane, c_out] ...
    let mut nhwc = vec![0.0; g.batch * oplane * g.c_out];
    matmul_nt_acc(&cols, w, &mut nhwc, g.batch * oplane, plen, g.c_out);
    // ... transposed per image into [b, c_out, oplane] with the bias added.
    let mut out = vec![0.0; g.batch * g.c_out * oplane];
    for b in 0..g.batch {
        let src = &nhwc[b * oplane * g.c_out..(b + 1) * oplane * g.c_out];
        let dst = &mut out[b * g.c_out * oplane..(b + 1) * g.c_out * oplane];
        for sp in 0..oplane {
            for co in 0..g.c_out {
                dst[co * oplane + sp] = src[sp * g.c_out + co] + bias[co];
            }
        }
    }
    out
}

/// Backward convolution. `grad` is dL/dout with shape [b, c_out, so, so].
/// Returns (dx, dw, dbias); `dx` is skipped (empty) when `need_dx` is false.
pub fn conv2d_backward(
    g: &ConvGeom,
    x: &[f64],
    w: &[f64],
    grad: &[f64],
    need_dx: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let plen = g.patch_len();
    let oplane = g.out_plane();
    let img_len = g.c_in * g.side_in * g.side_in;
    let rows = g.batch * oplane;

    // grad in patches-major layout [b*oplane, c_out]
    let mut g_nhwc = vec![0.0; rows * g.c_out];
    let mut dbias = vec![0.0; g.c_out];
    for b in 0..g.batch {
        let src = &grad[b * g.c_out * oplane..(b + 1) * g.c_out * oplane];
        let dst = &mut g_nhwc[b * oplane * g.c_out..(b + 1) * oplane * g.c_out];
        for co in 0..g.c_out {
            let plane = &src[co * oplane..(co + 1) * oplane];
            dbias[co] += plane.iter().sum::<f64>();
            for (sp, &v) in plane.iter().enumerate() {
                dst[sp * g.c_out + co] = v;
            }
        }
    }

    let cols = im2col_batch(g, x);
    // dw[c_out, plen] = g_nhwc^T [c_out, rows] @ cols [rows, plen]
    let mut dw = vec![0.0; g.c_out * plen];
    matmul_tn_acc(&g_nhwc, &cols, &mut dw, g.c_out, rows, plen);

    let mut dx = Vec::new();
    if need_dx {
        // dcols [rows, plen] = g_nhwc [rows, c_out] @ w [c_out, plen]
        let dcols = matmul(&g_nhwc, w, rows, g.c_out, plen);
        dx = vec![0.0; g.batch * img_len];
        for b in 0..g.batch {
            col2im_acc(
                g,
                &dcols[b * oplane * plen..(b + 1) * oplane * plen],
                &mut dx[b * img_len..(b + 1) * img_len],
            );
        }
    }
    (dx, dw, dbias)
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

pub fn elu_grad_from_out(out: f64) -> f64 {
    if out > 0.0 {
        1.0
    } else {
        out + 1.0
    }
}
